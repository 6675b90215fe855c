//! Annular-sector scheme R_n, M_n and the even/fractional split of cell masses.

use std::f64::consts::TAU;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::measure::{arg0, Atom, CurvePiece, DiskMeasure, Piece, PolarCell, Region, RectCell, C64};

/// Σ_{j=1}^{12} q^j > 11.
pub fn validate_q(q: f64) -> bool {
    q > 0.0 && q < 1.0 && gate_sum(q) > 11.0
}

pub fn gate_sum(q: f64) -> f64 {
    (1..=12).map(|j| q.powi(j)).sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellId {
    pub n: u32,
    pub m: u32,
}

/// log-image [σ_lo, σ_hi] × [t_lo, t_hi] of a cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRectangle {
    pub sigma_lo: f64,
    pub sigma_hi: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl LogRectangle {
    /// Longer side over shorter side.
    pub fn side_ratio(&self) -> f64 {
        let a = self.sigma_hi - self.sigma_lo;
        let b = self.t_hi - self.t_lo;
        a.max(b) / a.min(b)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnnularScheme {
    pub q: f64,
    /// R_0..R_N.
    pub radii: Vec<f64>,
    /// M_0..M_{N−1}.
    pub sectors: Vec<u32>,
}

pub fn build_scheme(q: f64, depth: usize) -> Result<AnnularScheme> {
    if !validate_q(q) {
        return Err(Error::InvalidQ { q, sum: gate_sum(q) });
    }
    let radii: Vec<f64> = (0..=depth).map(|n| 1.0 - 0.5 * q.powi(n as i32)).collect();
    let sectors = (0..depth)
        .map(|n| {
            let step = 0.5 * q.powi(n as i32) * (1.0 - q);
            let log_ratio = (step / radii[n]).ln_1p();
            ((TAU / log_ratio).floor() as u32).max(1)
        })
        .collect();
    Ok(AnnularScheme { q, radii, sectors })
}

impl AnnularScheme {
    pub fn depth(&self) -> usize {
        self.sectors.len()
    }

    pub fn log_ratio(&self, n: usize) -> f64 {
        (0.5 * self.q.powi(n as i32) * (1.0 - self.q) / self.radii[n]).ln_1p()
    }

    pub fn sector_width(&self, n: usize) -> f64 {
        TAU / self.sectors[n] as f64
    }

    pub fn cell_count(&self) -> u64 {
        self.sectors.iter().map(|&m| m as u64).sum()
    }

    /// Annulus index n with R_n ≤ r < R_{n+1}.
    pub fn annulus_of(&self, r: f64) -> Option<usize> {
        if r < self.radii[0] * (1.0 - 1e-15) || r >= self.radii[self.depth()] {
            return None;
        }
        let mut n = self.radii.partition_point(|&x| x <= r).saturating_sub(1);
        if n + 1 < self.radii.len() && r >= self.radii[n + 1] * (1.0 - 1e-15) {
            n += 1;
        }
        (n < self.depth()).then_some(n)
    }

    pub fn cell_of(&self, z: C64) -> Result<CellId> {
        let n = self.annulus_of(z.norm()).ok_or(Error::OutOfRange { z })?;
        let big_m = self.sectors[n];
        let x = arg0(z) / self.sector_width(n);
        let mut m = x.floor();
        if x - (m + 1.0) > -1e-9 {
            m += 1.0;
        }
        let m = (m as u32) % big_m;
        Ok(CellId { n: n as u32, m })
    }

    pub fn log_rect(&self, id: CellId) -> LogRectangle {
        let n = id.n as usize;
        let w = self.sector_width(n);
        LogRectangle {
            sigma_lo: self.radii[n].ln(),
            sigma_hi: self.radii[n + 1].ln(),
            t_lo: w * id.m as f64,
            t_hi: w * (id.m + 1) as f64,
        }
    }

    pub fn cell_region(&self, id: CellId) -> Region {
        let n = id.n as usize;
        let w = self.sector_width(n);
        Region::Sector { r_lo: self.radii[n], r_hi: self.radii[n + 1], t_lo: w * id.m as f64, t_hi: w * (id.m + 1) as f64 }
    }

    /// Upper bound 13/((1−q)(1−R_n)) + 2 on the fractional mass of annulus n.
    pub fn fractional_mass_bound(&self, n: usize) -> f64 {
        13.0 / ((1.0 - self.q) * (1.0 - self.radii[n])) + 2.0
    }

    /// Checks 2·M_n ≤ 13/((1−q)(1−R_n)) + 2 for every annulus.
    pub fn fractional_bound_holds(&self) -> bool {
        (0..self.depth()).all(|n| 2.0 * self.sectors[n] as f64 <= self.fractional_mass_bound(n))
    }
}

/// Largest even integer ≤ m, tolerant to rounding just below an even integer.
pub fn even_floor(m: f64) -> u32 {
    let e = 2.0 * ((m + 1e-9) / 2.0).floor();
    e.max(0.0) as u32
}

fn piece_angle(p: &Piece) -> f64 {
    match p {
        Piece::Polar(c) => c.t0,
        Piece::Curve(c) => arg0(c.curve.point(c.r0)),
        other => arg0(other.anchor()),
    }
}

/// Split a piece into (first part of mass `need`, rest).
pub(crate) fn split_piece_mass(p: &Piece, need: f64) -> (Piece, Option<Piece>) {
    let total = p.mass();
    if need >= total {
        return (p.clone(), None);
    }
    let f = need / total;
    match p {
        Piece::Atom(a) => (Piece::Atom(Atom { z: a.z, mass: need }), Some(Piece::Atom(Atom { z: a.z, mass: total - need }))),
        Piece::Polar(c) => {
            let t = c.t0 + f * (c.t1 - c.t0);
            if c.t1 > c.t0 {
                (Piece::Polar(PolarCell { t1: t, mass: need, ..*c }), Some(Piece::Polar(PolarCell { t0: t, mass: total - need, ..*c })))
            } else {
                (p.scaled(f), Some(p.scaled(1.0 - f)))
            }
        }
        Piece::Rect(c) => {
            if c.x1 > c.x0 {
                let x = c.x0 + f * (c.x1 - c.x0);
                (Piece::Rect(RectCell { x1: x, mass: need, ..*c }), Some(Piece::Rect(RectCell { x0: x, mass: total - need, ..*c })))
            } else if c.y1 > c.y0 {
                let y = c.y0 + f * (c.y1 - c.y0);
                (Piece::Rect(RectCell { y1: y, mass: need, ..*c }), Some(Piece::Rect(RectCell { y0: y, mass: total - need, ..*c })))
            } else {
                (p.scaled(f), Some(p.scaled(1.0 - f)))
            }
        }
        Piece::Curve(c) => {
            let r = c.curve.radius_for_mass(c.r0, need).clamp(c.r0, c.r1);
            let curve: Arc<_> = c.curve.clone();
            let first = CurvePiece { curve: curve.clone(), r0: c.r0, r1: r, mass: need };
            let second = CurvePiece { curve, r0: r, r1: c.r1, mass: total - need };
            (Piece::Curve(first), Some(Piece::Curve(second)))
        }
    }
}

/// (μ⁽¹⁾, μ⁽²⁾): peel the largest even mass, atoms first (largest first), then
/// density pieces in increasing angle.
pub fn split_cell_measure(pieces: &[Piece]) -> (Vec<Piece>, Vec<Piece>) {
    let total: f64 = pieces.iter().map(Piece::mass).sum();
    let target = even_floor(total) as f64;
    let mut atoms: Vec<&Piece> = pieces.iter().filter(|p| matches!(p, Piece::Atom(_))).collect();
    let mut dens: Vec<&Piece> = pieces.iter().filter(|p| !matches!(p, Piece::Atom(_))).collect();
    atoms.sort_by(|a, b| b.mass().total_cmp(&a.mass()).then(arg0(a.anchor()).total_cmp(&arg0(b.anchor()))));
    dens.sort_by(|a, b| piece_angle(a).total_cmp(&piece_angle(b)));
    let mut even = Vec::new();
    let mut rest = Vec::new();
    let mut need = target;
    for p in atoms.into_iter().chain(dens) {
        if need <= 0.0 {
            rest.push(p.clone());
            continue;
        }
        let (taken, left) = split_piece_mass(p, need);
        need -= taken.mass();
        even.push(taken);
        if let Some(l) = left {
            if l.mass() > 0.0 {
                rest.push(l);
            }
        }
        if need.abs() < 1e-12 * target.max(1.0) {
            need = 0.0;
        }
    }
    (even, rest)
}

/// Result of splitting the central part at ρ₀.
#[derive(Clone, Debug)]
pub struct CentralSplit {
    pub inner: DiskMeasure,
    pub outer: DiskMeasure,
    pub rho0: f64,
    pub n_even: u32,
}

/// μ¹ of mass N = 2⌊n(1/2)/2⌋ inside ρ₀ and the remainder μ².
pub fn central_split(mu: &DiskMeasure) -> CentralSplit {
    let total = mu.mass();
    let n_even = even_floor(total);
    if n_even == 0 {
        return CentralSplit { inner: DiskMeasure::zero(), outer: mu.clone(), rho0: 0.0, n_even };
    }
    let target = n_even as f64;
    let count = |r: f64| mu.total_mass(&Region::ClosedDisk { center: C64::new(0.0, 0.0), radius: r });
    let (mut lo, mut hi) = (0.0, mu.support_radius());
    if count(0.0) >= target - 1e-12 {
        hi = 0.0;
    }
    for _ in 0..200 {
        if hi - lo <= 1e-16 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if count(mid) >= target - 1e-12 * target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let mut rho0 = hi;
    for p in &mu.pieces {
        if let Piece::Atom(a) = p {
            if (a.z.norm() - rho0).abs() <= 1e-12 {
                rho0 = a.z.norm();
            }
        }
    }
    let mut inner = Vec::new();
    let mut outer = Vec::new();
    let mut circle: Vec<Atom> = Vec::new();
    for p in &mu.pieces {
        match p {
            Piece::Atom(a) => {
                let r = a.z.norm();
                if r == rho0 {
                    circle.push(*a);
                } else if r < rho0 {
                    inner.push(p.clone());
                } else {
                    outer.push(p.clone());
                }
            }
            _ => {
                inner.extend(p.restrict(&Region::ClosedDisk { center: C64::new(0.0, 0.0), radius: rho0 }));
                outer.extend(p.restrict(&Region::Annulus { r_lo: rho0, r_hi: f64::INFINITY }));
            }
        }
    }
    let inner_grids: Vec<_> = mu.grids.iter().map(|g| g.clip(0.0, rho0)).filter(|g| !g.rings.is_empty()).collect();
    let outer_grids: Vec<_> = mu.grids.iter().map(|g| g.clip(rho0, f64::INFINITY)).filter(|g| !g.rings.is_empty()).collect();
    let mut inner_m = DiskMeasure::new(inner.clone(), inner_grids.clone()).mass();
    circle.sort_by(|a, b| arg0(a.z).total_cmp(&arg0(b.z)));
    for a in circle {
        let need = (target - inner_m).max(0.0);
        let take = need.min(a.mass);
        if take > 0.0 {
            inner.push(Piece::Atom(Atom { z: a.z, mass: take }));
            inner_m += take;
        }
        if a.mass - take > 0.0 {
            outer.push(Piece::Atom(Atom { z: a.z, mass: a.mass - take }));
        }
    }
    CentralSplit { inner: DiskMeasure::new(inner, inner_grids), outer: DiskMeasure::new(outer, outer_grids), rho0, n_even }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{GridRing, PolarGrid};

    #[test]
    fn q_gate_examples() {
        // direct 12-term sums
        let direct = |q: f64| (1..=12).fold((0.0, 1.0), |(s, p), _| (s + p * q, p * q)).0;
        assert!((direct(0.99) - 11.2479).abs() < 1e-4);
        assert!((direct(0.95) - 8.7332).abs() < 1e-4);
        assert!((gate_sum(0.99) - direct(0.99)).abs() < 1e-13);
        assert!(validate_q(0.99));
        assert!(!validate_q(0.95));
        assert!(validate_q(1.0 - 1e-9));
        assert!(matches!(build_scheme(0.95, 3), Err(Error::InvalidQ { .. })));
    }

    #[test]
    fn scheme_examples() {
        let s = build_scheme(0.99, 120).unwrap();
        assert_eq!(s.radii[0], 0.5);
        assert!((s.radii[1] - 0.505).abs() < 1e-15);
        // 2π / ln(1.01) = 631.46...
        assert!((std::f64::consts::TAU / 1.01f64.ln() - 631.46).abs() < 0.01);
        assert_eq!(s.sectors[0], 631);
        assert!((1.0 - s.radii[100] - 0.1830).abs() < 1e-4);
    }

    #[test]
    fn scheme_invariants() {
        let s = build_scheme(0.99, 300).unwrap();
        for n in 0..s.depth() {
            assert!(s.radii[n + 1] > s.radii[n]);
            let l = s.log_ratio(n);
            let m = s.sectors[n] as f64;
            assert!(m >= 1.0 && m * l <= TAU && TAU < (m + 1.0) * l);
            let density = m * (1.0 - s.q) * (1.0 - s.radii[n]) / TAU;
            if n >= 50 {
                assert!((density / s.radii[n] - 1.0).abs() < 0.05);
            }
            if 1.0 - s.radii[n] < 0.025 {
                assert!((density - 1.0).abs() < 0.05);
            }
            let r = s.log_rect(CellId { n: n as u32, m: 0 }).side_ratio();
            assert!(r < 1.02, "n={n} ratio {r}");
        }
        assert!(s.fractional_bound_holds());
    }

    #[test]
    fn cell_lookup_is_half_open() {
        let s = build_scheme(0.99, 10).unwrap();
        assert_eq!(s.cell_of(C64::new(0.5, 0.0)).unwrap(), CellId { n: 0, m: 0 });
        let z = C64::from_polar(0.5, TAU / s.sectors[0] as f64);
        assert_eq!(s.cell_of(z).unwrap(), CellId { n: 0, m: 1 });
        assert_eq!(s.cell_of(C64::new(s.radii[1], 0.0)).unwrap().n, 1);
        assert!(s.cell_of(C64::new(0.3, 0.0)).is_err());
        assert!(s.cell_of(C64::new(s.radii[10], 0.0)).is_err());
    }

    #[test]
    fn split_examples() {
        let a = |m: f64, t: f64| Piece::Atom(Atom { z: C64::from_polar(0.6, t), mass: m });
        for (masses, even) in [(vec![0.9, 0.9, 0.9, 0.9, 0.9, 0.8], 4.0), (vec![0.9, 0.8], 0.0), (vec![1.0; 6], 6.0)] {
            let pieces: Vec<Piece> = masses.iter().enumerate().map(|(i, &m)| a(m, 0.1 * i as f64)).collect();
            let (e, r) = split_cell_measure(&pieces);
            let em: f64 = e.iter().map(Piece::mass).sum();
            let rm: f64 = r.iter().map(Piece::mass).sum();
            let total: f64 = masses.iter().sum();
            assert!((em - even).abs() < 1e-12, "{em}");
            assert!((em + rm - total).abs() < 1e-12);
        }
        let cell = Piece::Polar(PolarCell { r0: 0.6, r1: 0.61, t0: 0.0, t1: 0.01, mass: 5.3 });
        let (e, r) = split_cell_measure(&[cell]);
        assert!((e[0].mass() - 4.0).abs() < 1e-12 && (r[0].mass() - 1.3).abs() < 1e-12);
    }

    #[test]
    fn central_split_examples() {
        let atoms: Vec<Atom> = [0.1, 0.2, 0.3, 0.4].iter().enumerate().map(|(i, &r)| Atom { z: C64::from_polar(r, i as f64), mass: 1.0 }).collect();
        let cs = central_split(&DiskMeasure::atoms(&atoms));
        assert_eq!(cs.n_even, 4);
        assert!((cs.rho0 - 0.4).abs() < 1e-15);
        assert!(cs.outer.is_empty());

        let ring = |m: f64| DiskMeasure::grid(PolarGrid { rings: vec![GridRing { r0: 0.0, r1: 0.5, masses: vec![m / 4.0; 4] }] });
        let cs = central_split(&ring(7.5));
        assert_eq!(cs.n_even, 6);
        assert!((cs.outer.mass() - 1.5).abs() < 1e-9);
        assert!((cs.inner.mass() - 6.0).abs() < 1e-9);
        assert!((cs.rho0 - 0.4).abs() < 1e-9);
        let cs = central_split(&ring(1.2));
        assert_eq!(cs.n_even, 0);
        assert!((cs.outer.mass() - 1.2).abs() < 1e-15);
    }

    #[test]
    fn central_split_shares_circle_atoms() {
        let atoms = [Atom { z: C64::new(0.3, 0.0), mass: 0.8 }, Atom { z: C64::new(0.0, 0.3), mass: 0.8 }, Atom { z: C64::new(0.1, 0.0), mass: 0.9 }];
        let cs = central_split(&DiskMeasure::atoms(&atoms));
        assert_eq!(cs.n_even, 2);
        assert!((cs.inner.mass() - 2.0).abs() < 1e-12);
        assert!((cs.outer.mass() - 0.5).abs() < 1e-12);
    }
}
