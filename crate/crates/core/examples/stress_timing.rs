//! Times the atomization of the dense annular measure n(r) = Δ/(1−r).

use std::time::Instant;

use diskapprox::diskgrid::build_scheme;
use diskapprox::pipeline::{run_disk, stress_measure, DiskParams};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let depth: usize = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(60);
    let delta: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(1.6e5);
    let p: u32 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(2);
    let t = Instant::now();
    let scheme = build_scheme(0.99, depth).unwrap();
    let mu = stress_measure(delta, &scheme);
    let run = run_disk(&mu, &DiskParams { depth, p, build_model: false, ..Default::default() }).unwrap();
    let worst_res = run.cells.iter().map(|c| c.residual).fold(0.0, f64::max);
    let worst_ratio = run.cells.iter().map(|c| c.ratio).fold(0.0, f64::max);
    println!("cells={} leaves={} time={:?} residual={worst_res:e} ratio={worst_ratio}", run.cells.len(), run.leaves.len(), t.elapsed());
}
