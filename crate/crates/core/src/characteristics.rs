//! Circle means, the first main theorem identity and radial densities of exceptional sets.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::measure::{DiskMeasure, Region, C64};
use crate::potential::{eval_potential, ErrorField, KernelMode, SampleGrid};

const MIN_ANGLES: usize = 1 << 10;
const MAX_ANGLES: usize = 1 << 17;

/// Trapezoid mean of g(v(r e^{iθ})) with doubling until the relative change is below `rel`.
fn circle_mean_of<F, G>(v: &F, r: f64, g: G, rel: f64) -> f64
where
    F: Fn(C64) -> f64,
    G: Fn(f64) -> f64,
{
    let sample = |n: usize, offset: usize, step: usize| -> f64 {
        (offset..n)
            .step_by(step)
            .map(|k| {
                let x = v(C64::from_polar(r, TAU * k as f64 / n as f64));
                if x.is_nan() {
                    0.0
                } else {
                    g(x)
                }
            })
            .sum()
    };
    let mut n = MIN_ANGLES;
    let mut sum = sample(n, 0, 1);
    let mut mean = sum / n as f64;
    while n < MAX_ANGLES {
        // new nodes are the odd indices of the doubled rule
        sum += sample(2 * n, 1, 2);
        n *= 2;
        let next = sum / n as f64;
        let done = (next - mean).abs() <= rel * next.abs().max(1e-12);
        mean = next;
        if done {
            break;
        }
    }
    mean
}

/// T(r, v) = (1/2π)∫ v⁺(r e^{iθ}) dθ.
pub fn circle_mean_plus<F: Fn(C64) -> f64>(v: F, r: f64) -> f64 {
    circle_mean_of(&v, r, |x| x.max(0.0), 5e-3)
}

/// m(r, v) = (1/2π)∫ v⁻(r e^{iθ}) dθ.
pub fn circle_mean_minus<F: Fn(C64) -> f64>(v: F, r: f64) -> f64 {
    circle_mean_of(&v, r, |x| (-x).max(0.0), 5e-3)
}

/// ∫₀^{2π} |v(r e^{iθ})| dθ.
pub fn circle_l1<F: Fn(C64) -> f64>(v: F, r: f64) -> f64 {
    TAU * circle_mean_of(&v, r, f64::abs, 5e-3)
}

/// ∫₀^r n(t)/t dt for the Riesz measure `mu` (closed disks).
pub fn counting_integral(mu: &DiskMeasure, r: f64) -> Result<f64> {
    let inside = mu.restrict(&Region::ClosedDisk { center: C64::new(0.0, 0.0), radius: r });
    if inside.is_empty() {
        return Ok(0.0);
    }
    let log_mean = eval_potential(&inside, KernelMode::PlanarLog, C64::new(0.0, 0.0))
        .map_err(|_| Error::Precondition("Riesz measure has an atom at the origin".into()))?;
    Ok(inside.mass() * r.ln() - log_mean)
}

/// |m(r,v) − T(r,v) + ∫₀^r n(t)/t dt + v(0)|.
pub fn first_main_identity_residual<F: Fn(C64) -> f64>(v: F, riesz: &DiskMeasure, r: f64) -> Result<f64> {
    let v0 = v(C64::new(0.0, 0.0));
    if !v0.is_finite() {
        return Err(Error::Precondition("v(0) must be finite".into()));
    }
    let t = circle_mean_of(&v, r, |x| x.max(0.0), 1e-12);
    let m = circle_mean_of(&v, r, |x| (-x).max(0.0), 1e-12);
    let n = counting_integral(riesz, r)?;
    Ok((m - t + n + v0).abs())
}

/// Total length of the union of intervals intersected with [lo, hi].
fn covered_length(intervals: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    let mut iv: Vec<(f64, f64)> = intervals.iter().map(|&(a, b)| (a.max(lo), b.min(hi))).filter(|(a, b)| b > a).collect();
    iv.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (a, b) in iv {
        match cur {
            Some((s, e)) if a <= e => cur = Some((s, e.max(b))),
            Some((s, e)) => {
                total += e - s;
                cur = Some((a, b));
            }
            None => cur = Some((a, b)),
        }
    }
    if let Some((s, e)) = cur {
        total += e - s;
    }
    total
}

/// sup over R in `grid` of l(E ∩ [R, 1))/(1 − R), the grid version of 𝒟₁E.
pub fn radial_density(e: &[(f64, f64)], grid: &[f64]) -> f64 {
    grid.iter()
        .filter(|&&r| r < 1.0)
        .map(|&r| covered_length(e, r, 1.0) / (1.0 - r))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExceptionalSet {
    /// Radial intervals forming E.
    pub intervals: Vec<(f64, f64)>,
    pub in_set: Vec<bool>,
    pub density: f64,
}

/// E = {r : circle L¹ > C/(1−r)} over sample rings [edges[k], edges[k+1]].
///
/// `density_grid` are the radii R over which the density sup is taken.
pub fn radial_exceptional_set(edges: &[f64], circle_l1: &[f64], c: f64, density_grid: &[f64]) -> ExceptionalSet {
    let mut intervals = Vec::new();
    let mut in_set = Vec::with_capacity(circle_l1.len());
    for (k, &l1) in circle_l1.iter().enumerate() {
        let r = 0.5 * (edges[k] + edges[k + 1]);
        let hit = l1 > c / (1.0 - r);
        in_set.push(hit);
        if hit {
            intervals.push((edges[k], edges[k + 1]));
        }
    }
    let density = radial_density(&intervals, density_grid);
    ExceptionalSet { intervals, in_set, density }
}

/// max_r |T(r,u) − T(r,log|f|)|.
pub fn t_difference(t_u: &[f64], t_logf: &[f64]) -> f64 {
    t_u.iter().zip(t_logf).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

/// Per-radius characteristics of u, log|f| and the error.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct RadialProfile {
    pub radii: Vec<f64>,
    pub t_u: Vec<f64>,
    pub t_logf: Vec<f64>,
    pub circle_l1: Vec<f64>,
    pub n: Vec<f64>,
    pub bound: Vec<f64>,
    pub in_e: Vec<bool>,
}

impl RadialProfile {
    /// Profile from circle evaluations of u and log|f| at `radii`; n(r) from the Riesz measure.
    pub fn from_functions<U, L>(radii: &[f64], u: U, logf: L, riesz: &DiskMeasure) -> Self
    where
        U: Fn(C64) -> f64 + Sync,
        L: Fn(C64) -> f64 + Sync,
    {
        let rows: Vec<(f64, f64, f64, f64)> = radii
            .par_iter()
            .map(|&r| {
                let t_u = circle_mean_plus(&u, r);
                let t_l = circle_mean_plus(&logf, r);
                let l1 = circle_l1(|z| u(z) - logf(z), r);
                let n = riesz.total_mass(&Region::ClosedDisk { center: C64::new(0.0, 0.0), radius: r });
                (t_u, t_l, l1, n)
            })
            .collect();
        Self {
            radii: radii.to_vec(),
            t_u: rows.iter().map(|r| r.0).collect(),
            t_logf: rows.iter().map(|r| r.1).collect(),
            circle_l1: rows.iter().map(|r| r.2).collect(),
            n: rows.iter().map(|r| r.3).collect(),
            bound: vec![f64::NAN; radii.len()],
            in_e: vec![false; radii.len()],
        }
    }

    /// Profile read off a sampled polar field (rings of samples).
    pub fn from_field(field: &ErrorField, riesz_count: impl Fn(f64) -> f64) -> Self {
        let SampleGrid::Polar { edges, angles } = &field.grid else {
            return Self::default();
        };
        let a = *angles;
        let rings = edges.len() - 1;
        let mut p = Self::default();
        for k in 0..rings {
            let s = k * a..(k + 1) * a;
            let r = 0.5 * (edges[k] + edges[k + 1]);
            let mean_plus = |v: &[f64]| v.iter().filter(|x| x.is_finite()).map(|x| x.max(0.0)).sum::<f64>() / a as f64;
            p.radii.push(r);
            p.t_u.push(mean_plus(&field.u[s.clone()]));
            p.t_logf.push(mean_plus(&field.logf[s.clone()]));
            p.circle_l1.push(TAU * field.error[s].iter().filter(|x| x.is_finite()).map(|x| x.abs()).sum::<f64>() / a as f64);
            p.n.push(riesz_count(r));
        }
        p.bound = vec![f64::NAN; rings];
        p.in_e = vec![false; rings];
        p
    }

    /// Marks E for the constant C; returns the set.
    pub fn mark_exceptional(&mut self, edges: &[f64], c: f64, density_grid: &[f64]) -> ExceptionalSet {
        let set = radial_exceptional_set(edges, &self.circle_l1, c, density_grid);
        self.bound = self.radii.iter().map(|r| c / (1.0 - r)).collect();
        self.in_e = set.in_set.clone();
        set
    }

    /// Index pairs where T decreases by more than `tol` relative.
    pub fn t_monotonicity_violations(values: &[f64], tol: f64) -> Vec<usize> {
        values.windows(2).enumerate().filter(|(_, w)| w[1] < w[0] - tol * w[0].abs().max(1e-12)).map(|(i, _)| i).collect()
    }
}

/// Median of finite values.
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::Atom;
    use crate::quad;

    #[test]
    fn circle_mean_examples() {
        assert_eq!(circle_mean_plus(|z: C64| z.norm().ln(), 0.7), 0.0);
        assert!((circle_mean_plus(|_| 2.5, 0.3) - 2.5).abs() < 1e-15);
        let v = |z: C64| (z - 0.5).norm().ln();
        let oracle = quad::adaptive_with_breaks(|t: f64| v(C64::from_polar(0.9, t)).max(0.0), 0.0, TAU, &[], 1e-13) / TAU;
        let t = circle_mean_plus(v, 0.9);
        assert!((t - oracle).abs() < 5e-3 * oracle, "{t} {oracle}");
    }

    #[test]
    fn first_main_identity_examples() {
        let a = C64::new(0.3, -0.2);
        let blaschke = move |z: C64| ((z - a) / (1.0 - a.conj() * z)).norm().ln();
        let riesz = DiskMeasure::atoms(&[Atom { z: a, mass: 1.0 }]);
        for r in [0.5, 0.8, 0.95] {
            assert!(first_main_identity_residual(blaschke, &riesz, r).unwrap() < 1e-6);
        }
        let harmonic = |z: C64| (z * z).re + 0.4;
        assert!(first_main_identity_residual(harmonic, &DiskMeasure::zero(), 0.7).unwrap() < 1e-8);
        assert!(first_main_identity_residual(|z: C64| z.norm().ln(), &riesz, 0.5).is_err());
    }

    #[test]
    fn radial_density_examples() {
        let grid: Vec<f64> = (1..=20).map(|k| 1.0 - 4f64.powi(-k)).collect();
        assert!((radial_density(&[(0.0, 1.0)], &grid) - 1.0).abs() < 1e-12);
        assert_eq!(radial_density(&[], &grid), 0.0);
        let e: Vec<(f64, f64)> = (1..=40).map(|k| (1.0 - 4f64.powi(-k), 1.0 - 0.5 * 4f64.powi(-k))).collect();
        // l(E ∩ [1−4^{−k}, 1)) = Σ_{j≥k} 4^{−j}/2 = (2/3)·4^{−k}
        assert!((radial_density(&e, &grid) - 2.0 / 3.0).abs() < 1e-9);
        let sub = &e[..10];
        assert!(radial_density(sub, &grid) <= radial_density(&e, &grid));
    }

    #[test]
    fn exceptional_set_examples() {
        let edges: Vec<f64> = (0..=10).map(|k| k as f64 / 11.0).collect();
        let zero = vec![0.0; 10];
        let set = radial_exceptional_set(&edges, &zero, 1.0, &edges);
        assert!(set.intervals.is_empty() && set.density == 0.0);
        let mut l1 = zero.clone();
        l1[3] = 0.1;
        let set = radial_exceptional_set(&edges, &l1, 0.0, &edges);
        assert_eq!(set.in_set.iter().filter(|x| **x).count(), 1);
    }

    #[test]
    fn t_difference_examples() {
        let a = [0.1, 0.5, 0.7];
        assert_eq!(t_difference(&a, &a), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 0.25).collect();
        assert!(t_difference(&b, &a) <= 0.25 + 1e-15);
    }

    #[test]
    fn t_is_nondecreasing_for_subharmonic() {
        let v = |z: C64| (z - C64::new(0.4, 0.1)).norm().ln() + (z + 0.7).norm().ln() + 1.0;
        let t: Vec<f64> = (1..20).map(|k| circle_mean_plus(v, 0.05 * k as f64)).collect();
        assert!(RadialProfile::t_monotonicity_violations(&t, 5e-3).is_empty());
    }
}
