//! Proximate orders, the scale function b and slow-variation partitions of curve measures.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::{annular_sector_diameter, CurvePiece, CurveProfile, DiskMeasure, Piece, Region, C64};

/// ρ(R) with W(R) = R^{ρ(R)}; constant σ unless a sampled table is given.
#[derive(Clone, Debug, PartialEq)]
pub struct ProximateOrder {
    pub sigma: f64,
    /// (R, ρ(R)) samples, increasing in R, interpolated linearly in log R.
    table: Vec<(f64, f64)>,
}

impl ProximateOrder {
    pub fn constant(sigma: f64) -> Self {
        Self { sigma, table: Vec::new() }
    }

    pub fn from_table(sigma: f64, mut table: Vec<(f64, f64)>) -> Result<Self> {
        table.sort_by(|a, b| a.0.total_cmp(&b.0));
        if table.iter().any(|&(r, rho)| r < 1.0 || !rho.is_finite()) {
            return Err(Error::Config("proximate order table needs R ≥ 1 and finite ρ".into()));
        }
        Ok(Self { sigma, table })
    }

    pub fn rho(&self, big_r: f64) -> f64 {
        let t = &self.table;
        if t.is_empty() {
            return self.sigma;
        }
        if big_r <= t[0].0 {
            return t[0].1;
        }
        if big_r >= t[t.len() - 1].0 {
            return t[t.len() - 1].1;
        }
        let i = t.partition_point(|&(r, _)| r <= big_r) - 1;
        let (r0, p0) = t[i];
        let (r1, p1) = t[i + 1];
        let s = (big_r.ln() - r0.ln()) / (r1.ln() - r0.ln());
        p0 + s * (p1 - p0)
    }

    pub fn w(&self, big_r: f64) -> f64 {
        (self.rho(big_r) * big_r.ln()).exp()
    }

    pub fn w_prime(&self, big_r: f64) -> f64 {
        if self.table.is_empty() {
            return self.sigma * big_r.powf(self.sigma - 1.0);
        }
        let h = 1e-6 * big_r;
        (self.w(big_r + h) - self.w(big_r - h)) / (2.0 * h)
    }

    /// Smallest R ≥ 1 with W(R) = target, by bisection.
    pub fn w_inverse(&self, target: f64) -> Result<f64> {
        if !(target.is_finite()) || target < self.w(1.0) {
            return Err(Error::NotInvertible { target });
        }
        let mut hi = 2.0;
        while self.w(hi) < target {
            hi *= 2.0;
            if hi > 1e300 {
                return Err(Error::NotInvertible { target });
            }
        }
        let mut lo = 1.0;
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if self.w(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

/// b(t) = (1 − t)/W(1/(1 − t)).
#[derive(Clone, Debug, PartialEq)]
pub struct ScaleFunction {
    pub order: ProximateOrder,
}

impl ScaleFunction {
    pub fn eval(&self, t: f64) -> f64 {
        if t >= 1.0 {
            return 0.0;
        }
        let s = 1.0 - t;
        s / self.order.w(1.0 / s)
    }

    /// max over sampled pairs with (1−r₁)/(1−r₂) ∈ [1/2, 2] of b(r₁)/b(r₂).
    pub fn slow_variation_constant(&self, r_min: f64, samples: usize) -> f64 {
        let mut worst: f64 = 1.0;
        for k in 0..samples {
            let s = (1.0 - r_min) * (1e-8f64 / (1.0 - r_min)).powf(k as f64 / samples.max(1) as f64);
            for f in [0.5, 0.75, 1.5, 2.0] {
                let (r1, r2) = (1.0 - s, 1.0 - s * f);
                if r2 < 0.0 {
                    continue;
                }
                let q = self.eval(r1) / self.eval(r2);
                worst = worst.max(q).max(1.0 / q);
            }
        }
        worst
    }

    /// Numeric value of ∫_{t0}^{1} b^{p−1}(t)/(1−t)^p dt (integrated in s = −ln(1−t)), with its last-decade share.
    pub fn summability(&self, p: u32, t0: f64) -> (f64, f64) {
        let g = |s: f64| {
            // 1 − t = e^{−s} kept exact; dt = (1−t) ds
            let gap = (-s).exp();
            let b = gap / self.order.w(1.0 / gap);
            b.powi(p as i32 - 1) / gap.powi(p as i32 - 1)
        };
        let s0 = -(1.0 - t0).ln();
        let total = crate::quad::adaptive(g, s0, s0 + 60.0, 1e-12);
        let tail = crate::quad::adaptive(g, s0 + 50.0, s0 + 60.0, 1e-14);
        (total, tail / total.max(1e-300))
    }
}

pub fn b_from_order(po: &ProximateOrder) -> ScaleFunction {
    ScaleFunction { order: po.clone() }
}

/// Parameters of a slow-variation partition.
#[derive(Clone, Debug, PartialEq)]
pub struct SlowVarSpec {
    pub b: ScaleFunction,
    pub p: u32,
    /// Maximal overlap N.
    pub overlap: u32,
    /// Support margin K(p).
    pub k: f64,
}

/// r_n with Δ·W(1/(1−r_n)) = 2n, n = 1..=n_max.
pub fn radii_sequence(delta: f64, po: &ProximateOrder, n_max: usize) -> Result<Vec<f64>> {
    if !(delta > 0.0) {
        return Err(Error::Config("Δ must be positive".into()));
    }
    (1..=n_max)
        .map(|n| {
            let big_r = po.w_inverse(2.0 * n as f64 / delta)?;
            Ok(1.0 - 1.0 / big_r)
        })
        .collect()
}

/// One cell Q⁽ⁿ⁾ of the curve partition.
#[derive(Clone, Debug, PartialEq)]
pub struct CurveCell {
    pub n: usize,
    pub r0: f64,
    pub r1: f64,
    pub phi_lo: f64,
    pub phi_hi: f64,
    pub piece: CurvePiece,
}

impl CurveCell {
    pub fn mass(&self) -> f64 {
        self.piece.mass
    }

    pub fn diameter(&self) -> f64 {
        annular_sector_diameter(self.r0, self.r1, self.phi_hi - self.phi_lo)
    }

    pub fn region(&self) -> Region {
        Region::Sector { r_lo: self.r0, r_hi: self.r1, t_lo: self.phi_lo, t_hi: self.phi_hi }
    }
}

/// Cells {r_n ≤ |z| ≤ r_{n+1}, |arg z − θ(r_n)| ≤ K(r_{n+1} − r_n)} for n = 1..=n_max.
pub fn build_curve_cells(curve: Arc<CurveProfile>, po: &ProximateOrder, delta: f64, k: f64, n_max: usize) -> Result<Vec<CurveCell>> {
    if curve.lipschitz() > k {
        return Err(Error::CurveEscapesCell { n: 0 });
    }
    let radii = radii_sequence(delta, po, n_max + 1)?;
    let mut out = Vec::with_capacity(n_max);
    for n in 0..n_max {
        let (r0, r1) = (radii[n], radii[n + 1]);
        if r0 < curve.r_lo - 1e-15 || r1 > curve.r_hi + 1e-15 {
            return Err(Error::Precondition(format!("slowvar: cell {} [{r0}, {r1}] lies outside the curve's radial range", n + 1)));
        }
        let half = k * (r1 - r0);
        let th = curve.theta(r0);
        let piece = CurvePiece::new(curve.clone(), r0, r1);
        out.push(CurveCell { n: n + 1, r0, r1, phi_lo: th - half, phi_hi: th + half, piece });
    }
    Ok(out)
}

/// ∫₀^{b} μ(U(z,t))/t dt; infinite when z carries an atom.
pub fn local_regularity(mu: &DiskMeasure, b: f64, z: C64) -> f64 {
    let ball = |t: f64| mu.total_mass(&Region::ClosedDisk { center: z, radius: t });
    if ball(0.0) > 0.0 {
        return f64::INFINITY;
    }
    let t_min = b * 1e-6;
    let (s0, s1) = (t_min.ln(), b.ln());
    // below t_min the ball mass is taken as linear in t
    let head = ball(t_min);
    let mut n = 64usize;
    let trap = |n: usize| {
        let h = (s1 - s0) / n as f64;
        let mut s = 0.5 * (ball(t_min) + ball(b));
        for k in 1..n {
            s += ball((s0 + h * k as f64).exp());
        }
        s * h
    };
    let mut prev = trap(n);
    while n < 1 << 12 {
        n *= 2;
        let next = trap(n);
        let done = (next - prev).abs() <= 1e-2 * next.abs().max(1e-300);
        prev = next;
        if done {
            break;
        }
    }
    head + prev
}

/// min over zeros |z − a| ≤ ε·b(|z|).
pub fn exceptional_set_membership(z: C64, atoms: &[C64], eps: f64, b: &ScaleFunction) -> bool {
    let rad = eps * b.eval(z.norm());
    atoms.iter().any(|a| (z - a).norm() <= rad)
}

/// Per-annulus sup of |u − log|f|| off E_ε and the global max of log|f| − u.
#[derive(Clone, Debug, PartialEq)]
pub struct SupReport {
    /// Annulus edges used for the grouping.
    pub edges: Vec<f64>,
    pub per_annulus: Vec<Option<f64>>,
    pub one_sided_max: f64,
}

pub fn sup_error_outside(points: &[C64], error: &[f64], atoms: &[C64], eps: f64, b: &ScaleFunction, edges: &[f64]) -> SupReport {
    let mut per: Vec<Option<f64>> = vec![None; edges.len().saturating_sub(1)];
    let mut one_sided = f64::NEG_INFINITY;
    // zeros sorted by modulus so each sample only scans a band of radii
    let mut sorted: Vec<C64> = atoms.to_vec();
    sorted.sort_by(|a, b| a.norm().total_cmp(&b.norm()));
    let mods: Vec<f64> = sorted.iter().map(|a| a.norm()).collect();
    for (&z, &e) in points.iter().zip(error) {
        if e.is_finite() {
            // log|f| − u = −error; −∞ at zeros does not raise the max
            one_sided = one_sided.max(-e);
        }
        let r = z.norm();
        if edges.len() < 2 || r < edges[0] || r >= edges[edges.len() - 1] {
            continue;
        }
        let k = edges.partition_point(|&x| x <= r) - 1;
        let rad = eps * b.eval(r);
        let lo = mods.partition_point(|&m| m < r - rad);
        let hi = mods.partition_point(|&m| m <= r + rad);
        let excluded = !e.is_finite() || sorted[lo..hi].iter().any(|a| (z - a).norm() <= rad);
        if excluded {
            continue;
        }
        let v = e.abs();
        per[k] = Some(per[k].map_or(v, |w| w.max(v)));
    }
    SupReport { edges: edges.to_vec(), per_annulus: per, one_sided_max: one_sided }
}

/// Distance from z to the support of a piece.
pub fn distance_to_piece(piece: &Piece, z: C64) -> f64 {
    match piece {
        Piece::Atom(a) => (z - a.z).norm(),
        Piece::Rect(c) => (z - C64::new(z.re.clamp(c.x0, c.x1), z.im.clamp(c.y0, c.y1))).norm(),
        Piece::Polar(c) => {
            let r = z.norm();
            let inside_angle = Region::Sector { r_lo: 0.0, r_hi: f64::INFINITY, t_lo: c.t0, t_hi: c.t1 }.contains(z);
            if inside_angle {
                return (r - r.clamp(c.r0, c.r1)).abs();
            }
            let edge = |th: f64| {
                let e = C64::from_polar(1.0, th);
                let s = (z.re * e.re + z.im * e.im).clamp(c.r0, c.r1);
                (z - e * s).norm()
            };
            edge(c.t0).min(edge(c.t1))
        }
        Piece::Curve(c) => {
            let d = |r: f64| (z - c.curve.point(r)).norm();
            let n = 256;
            let h = (c.r1 - c.r0) / n as f64;
            let (mut best, mut br) = (f64::INFINITY, c.r0);
            for k in 0..=n {
                let r = c.r0 + h * k as f64;
                if d(r) < best {
                    best = d(r);
                    br = r;
                }
            }
            // golden-section refinement in the bracketing panels
            let (mut a, mut bb) = ((br - h).max(c.r0), (br + h).min(c.r1));
            let g = 0.5 * (5f64.sqrt() - 1.0);
            for _ in 0..80 {
                let x1 = bb - g * (bb - a);
                let x2 = a + g * (bb - a);
                if d(x1) < d(x2) {
                    bb = x2;
                } else {
                    a = x1;
                }
            }
            best.min(d(0.5 * (a + bb)))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LocalizationReport {
    /// Indices of zeros farther than k1·b(|a|) from the support, with their distance ratio.
    pub violations: Vec<(usize, f64)>,
    pub worst_ratio: f64,
}

impl LocalizationReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks dist(a, supp μ) ≤ k1·b(|a|) for every zero.
pub fn zero_localization_check(atoms: &[C64], support: &[Piece], k1: f64, b: &ScaleFunction) -> LocalizationReport {
    let mut violations = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, &a) in atoms.iter().enumerate() {
        let d = support.iter().map(|p| distance_to_piece(p, a)).fold(f64::INFINITY, f64::min);
        let ratio = d / b.eval(a.norm());
        worst = worst.max(ratio);
        if ratio > k1 {
            violations.push((i, ratio));
        }
    }
    LocalizationReport { violations, worst_ratio: worst }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, MassLaw};

    #[test]
    fn b_examples() {
        let b = b_from_order(&ProximateOrder::constant(1.0));
        assert!((b.eval(0.9) - 0.01).abs() < 1e-15);
        assert!((b.eval(0.3) - 0.49).abs() < 1e-15);
        let b = b_from_order(&ProximateOrder::constant(0.5));
        assert!((b.eval(0.75) - 0.25f64.powf(1.5)).abs() < 1e-15);
    }

    #[test]
    fn b_is_slowly_varying_and_summable() {
        for sigma in [0.5, 1.0, 2.0] {
            let b = b_from_order(&ProximateOrder::constant(sigma));
            let c = b.slow_variation_constant(0.5, 200);
            assert!(c <= 2f64.powf(1.0 + sigma) * 1.01, "{sigma} {c}");
            let (total, tail) = b.summability(2, 0.5);
            assert!(total.is_finite() && tail < 1e-6);
        }
    }

    #[test]
    fn radii_examples() {
        let po = ProximateOrder::constant(1.0);
        let r = radii_sequence(1.0, &po, 50).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-12);
        for (i, &x) in r.iter().enumerate() {
            let n = (i + 1) as f64;
            assert!(((x - (1.0 - 1.0 / (2.0 * n))) / x).abs() < 1e-10);
        }
        let r = radii_sequence(2.0, &po, 20).unwrap();
        for (i, &x) in r.iter().enumerate().skip(1) {
            let n = (i + 1) as f64;
            assert!((x - (1.0 - 1.0 / n)).abs() < 1e-10);
        }
        assert!(r.windows(2).all(|w| w[1] > w[0]));
    }

    fn segment(slope: f64) -> Arc<CurveProfile> {
        Arc::new(CurveProfile { theta0: 0.0, slope, r_lo: 0.0, r_hi: 1.0, law: MassLaw::Proximate { delta: 1.0, order: ProximateOrder::constant(1.0) } })
    }

    #[test]
    fn curve_cells_for_radial_segment() {
        let po = ProximateOrder::constant(1.0);
        let cells = build_curve_cells(segment(0.0), &po, 1.0, 0.5, 200).unwrap();
        assert_eq!(cells.len(), 200);
        let b = b_from_order(&po);
        for c in &cells {
            assert!((c.mass() - 2.0).abs() < 1e-9 * 2.0, "{}", c.mass());
            assert!((c.r0 - (1.0 - 0.5 / c.n as f64)).abs() < 1e-12);
            assert!(((c.phi_hi - c.phi_lo) - (c.r1 - c.r0)).abs() < 1e-15);
            let ratio = c.diameter() / b.eval(c.r0);
            assert!((1.0 / 3.0..=3.0).contains(&ratio));
            if c.n >= 10 {
                let step = (c.r1 - c.r0) / b.eval(c.r0);
                assert!((1.0 / 3.0..=3.0).contains(&step));
            }
        }
        assert!(matches!(build_curve_cells(segment(0.3), &po, 1.0, 0.0, 5), Err(Error::CurveEscapesCell { .. })));
    }

    #[test]
    fn local_regularity_examples() {
        let po = ProximateOrder::constant(1.0);
        let b = b_from_order(&po);
        let empty = DiskMeasure::zero();
        assert_eq!(local_regularity(&empty, 0.1, C64::new(0.5, 0.0)), 0.0);
        let atom = DiskMeasure::atoms(&[Atom { z: C64::new(0.5, 0.0), mass: 1.0 }]);
        assert!(local_regularity(&atom, 0.1, C64::new(0.5, 0.0)).is_infinite());
        let curve = DiskMeasure::curve((*segment(0.0)).clone());
        for r in [0.6, 0.9, 0.99] {
            let v = local_regularity(&curve, b.eval(r), C64::new(r, 0.0));
            assert!(v > 1.0 && v <= 3.0 * 1.05, "{r} {v}");
        }
    }

    #[test]
    fn membership_examples() {
        let b = b_from_order(&ProximateOrder::constant(1.0));
        let zeros = [C64::new(0.5, 0.0)];
        assert!(!exceptional_set_membership(C64::new(-0.5, 0.0), &zeros, 0.5, &b));
        assert!(exceptional_set_membership(zeros[0], &zeros, 1e-9, &b));
        assert!(exceptional_set_membership(zeros[0], &zeros, 0.0, &b));
        assert!(!exceptional_set_membership(C64::new(0.5, 1e-12), &zeros, 0.0, &b));
    }

    #[test]
    fn sup_report_examples() {
        let b = b_from_order(&ProximateOrder::constant(1.0));
        let pts = [C64::new(0.5, 0.0), C64::new(0.5, 0.2), C64::new(0.7, 0.0)];
        let err = [f64::NAN, -0.3, 0.1];
        let rep = sup_error_outside(&pts, &err, &[C64::new(0.5, 0.0)], 0.5, &b, &[0.4, 0.6, 0.8]);
        assert_eq!(rep.per_annulus, vec![Some(0.3), Some(0.1)]);
        assert!((rep.one_sided_max - 0.3).abs() < 1e-15);
        let rep = sup_error_outside(&[], &[], &[], 0.5, &b, &[0.4, 0.6]);
        assert!(rep.one_sided_max.is_infinite());
        assert_eq!(rep.per_annulus, vec![None]);
    }

    #[test]
    fn localization_examples() {
        let b = b_from_order(&ProximateOrder::constant(1.0));
        let support = vec![Piece::Curve(CurvePiece::new(segment(0.0), 0.5, 0.9))];
        let on = [C64::new(0.6, 0.0), C64::new(0.8, 0.0)];
        assert!(zero_localization_check(&on, &support, 2.0, &b).passed());
        let far = [C64::new(0.6, 0.3)];
        let rep = zero_localization_check(&far, &support, 2.0, &b);
        assert_eq!(rep.violations.len(), 1);
    }
}
