//! Fixtures shared by the benchmarks.

use diskapprox::diskgrid::build_scheme;
use diskapprox::measure::{Piece, C64};
use diskapprox::partition::{FrameRect, MassRectangle};
use diskapprox::pipeline::{run_disk, stress_measure, DiskParams, DiskRun};
use diskapprox::verify::random_rect_measure;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const UNIT: FrameRect = FrameRect { a0: 0.0, a1: 1.0, b0: 0.0, b1: 1.0 };

/// Seeded mixed measure of integer mass on the unit square.
pub fn mixed_rectangle(mass: u32, seed: u64) -> MassRectangle {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    MassRectangle { rect: UNIT, pieces: random_rect_measure(&UNIT, mass, &mut rng) }
}

/// Pieces of one cell of mass `p`.
pub fn cell_pieces(p: u32, seed: u64) -> Vec<Piece> {
    mixed_rectangle(p, seed).pieces
}

/// Dense annular measure over a shallow scheme.
pub fn stress_run(depth: usize, build_model: bool) -> DiskRun {
    let scheme = build_scheme(0.99, depth).unwrap();
    let mu = stress_measure(1.6e5, &scheme);
    run_disk(&mu, &DiskParams { depth, p: 2, build_model, ..Default::default() }).unwrap()
}

/// Points on the circle of radius r.
pub fn circle(r: f64, n: usize) -> Vec<C64> {
    (0..n).map(|k| C64::from_polar(r, std::f64::consts::TAU * k as f64 / n as f64)).collect()
}
