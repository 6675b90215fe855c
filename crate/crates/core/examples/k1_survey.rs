//! Brute-force survey behind the stored K₁(p) table.
//!
//! Prints the largest displacement ratio max|ξ_j − ξ₀|/d seen over random
//! atomic cells, and that value with a 25% margin.

use diskapprox::atomize::survey_displacement;
use rand::SeedableRng;

fn main() {
    let trials: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10_000);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
    for p in 2..=8 {
        let seen = survey_displacement(p, trials, &mut rng);
        println!("p={p} max_ratio={seen:.6} with_margin={:.4}", 1.25 * seen);
    }
}
