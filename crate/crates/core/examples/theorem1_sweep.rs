//! Prints I(R_n) for the measure n(r) = 1/(1−r) at several depths.

use std::time::Instant;

use diskapprox::diskgrid::build_scheme;
use diskapprox::pipeline::{annulus_edge_index, disk_sample_grid, run_disk, theorem1_measure, DiskParams};

fn main() {
    for depth in [100usize, 200, 300] {
        let t = Instant::now();
        let scheme = build_scheme(0.99, depth).unwrap();
        let mu = theorem1_measure(&scheme);
        let run = run_disk(&mu, &DiskParams { depth, ..Default::default() }).unwrap();
        let t1 = t.elapsed();
        let model = run.model.as_ref().unwrap();
        let grid = disk_sample_grid(&scheme, 24, 2, 64);
        let field = model.error_field(&grid, true);
        let cum = field.cumulative_by_ring(&field.error, &field.singular);
        let i: Vec<f64> = (0..=depth).map(|n| cum[annulus_edge_index(24, 2, n)].1).collect();
        let max = i.iter().cloned().fold(0.0, f64::max);
        println!("N={depth} build={t1:?} total={:?} max I={max:.6} I(R_N)={:.6}", t.elapsed(), i[depth]);
        for n in (0..=depth).step_by(25) {
            println!("  n={n} R={:.5} I={:.6}", scheme.radii[n], i[n]);
        }
    }
}
