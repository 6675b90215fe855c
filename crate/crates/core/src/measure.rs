//! Finite nonnegative measures on the closed unit disk (or a planar square).

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use num_complex::Complex64;

use crate::atomize::{AtomSet, Source, Zero};
use crate::quad;
use crate::slowvar::ProximateOrder;

pub type C64 = Complex64;

/// Argument of `z` in [0, 2π).
pub fn arg0(z: C64) -> f64 {
    let t = z.im.atan2(z.re);
    if t < 0.0 {
        let s = t + TAU;
        if s >= TAU {
            0.0
        } else {
            s
        }
    } else {
        t
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    pub z: C64,
    pub mass: f64,
}

/// Mass spread uniformly in (r, θ) over [r0, r1] × [t0, t1].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PolarCell {
    pub r0: f64,
    pub r1: f64,
    pub t0: f64,
    pub t1: f64,
    pub mass: f64,
}

/// Mass spread uniformly over [x0, x1] × [y0, y1]; a zero-width side gives a segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RectCell {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
    pub mass: f64,
}

/// Cumulative mass law M(r) of a curve-supported measure.
#[derive(Clone, Debug, PartialEq)]
pub enum MassLaw {
    /// M(r) = Δ·W(1/(1−r)).
    Proximate { delta: f64, order: ProximateOrder },
    /// M(r) = density·r.
    Linear { density: f64 },
}

/// Curve r ↦ r·e^{iθ(r)} with θ(r) = θ0 + slope·(r − r_lo), carrying dM(r).
#[derive(Clone, Debug, PartialEq)]
pub struct CurveProfile {
    pub theta0: f64,
    pub slope: f64,
    pub r_lo: f64,
    pub r_hi: f64,
    pub law: MassLaw,
}

impl CurveProfile {
    pub fn theta(&self, r: f64) -> f64 {
        self.theta0 + self.slope * (r - self.r_lo)
    }

    pub fn point(&self, r: f64) -> C64 {
        C64::from_polar(r, self.theta(r))
    }

    pub fn lipschitz(&self) -> f64 {
        self.slope.abs()
    }

    pub fn cumulative(&self, r: f64) -> f64 {
        match &self.law {
            MassLaw::Proximate { delta, order } => delta * order.w(1.0 / (1.0 - r)),
            MassLaw::Linear { density } => density * r,
        }
    }

    pub fn density(&self, r: f64) -> f64 {
        match &self.law {
            MassLaw::Proximate { delta, order } => {
                let big_r = 1.0 / (1.0 - r);
                delta * order.w_prime(big_r) * big_r * big_r
            }
            MassLaw::Linear { density } => *density,
        }
    }

    /// Mass carried by radii in [a, b].
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let a = a.max(self.r_lo);
        let b = b.min(self.r_hi);
        if b <= a {
            0.0
        } else {
            self.cumulative(b) - self.cumulative(a)
        }
    }

    /// Smallest r ≥ a with mass_between(a, r) ≥ m.
    pub fn radius_for_mass(&self, a: f64, m: f64) -> f64 {
        let (mut lo, mut hi) = (a, self.r_hi);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.mass_between(a, mid) < m {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        hi
    }

    pub fn total(&self) -> f64 {
        self.mass_between(self.r_lo, self.r_hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurvePiece {
    pub curve: Arc<CurveProfile>,
    pub r0: f64,
    pub r1: f64,
    pub mass: f64,
}

impl CurvePiece {
    pub fn new(curve: Arc<CurveProfile>, r0: f64, r1: f64) -> Self {
        let mass = curve.mass_between(r0, r1);
        Self { curve, r0, r1, mass }
    }
}

/// A measure element of one of the supported shapes.
#[derive(Clone, Debug, PartialEq)]
pub enum Piece {
    Atom(Atom),
    Polar(PolarCell),
    Rect(RectCell),
    Curve(CurvePiece),
}

/// Closed regions used for mass and moment queries.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Region {
    Empty,
    Whole,
    ClosedDisk { center: C64, radius: f64 },
    Annulus { r_lo: f64, r_hi: f64 },
    Sector { r_lo: f64, r_hi: f64, t_lo: f64, t_hi: f64 },
    Rectangle { x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64 },
}

/// Length of [a0, a1] ∩ ([b0, b1] + 2πk) summed over k; the sector interval is normalized first.
pub(crate) fn angular_overlaps(a0: f64, a1: f64, b0: f64, b1: f64) -> Vec<(f64, f64)> {
    if b1 - b0 >= TAU - 1e-15 {
        return vec![(a0, a1)];
    }
    let s = b0.rem_euclid(TAU);
    let e = s + (b1 - b0);
    let mut out = Vec::new();
    for shift in [-TAU, 0.0, TAU] {
        let lo = a0.max(s + shift);
        let hi = a1.min(e + shift);
        if hi > lo || (hi == lo && a0 == a1) {
            out.push((lo, hi));
        }
    }
    out
}

fn angle_in(t: f64, lo: f64, hi: f64) -> bool {
    if hi - lo >= TAU {
        return true;
    }
    let d = (t - lo).rem_euclid(TAU);
    d <= hi - lo + 1e-15 || d >= TAU - 1e-15
}

impl Region {
    pub fn contains(&self, z: C64) -> bool {
        match *self {
            Region::Empty => false,
            Region::Whole => true,
            Region::ClosedDisk { center, radius } => (z - center).norm() <= radius,
            Region::Annulus { r_lo, r_hi } => {
                let r = z.norm();
                r >= r_lo && r <= r_hi
            }
            Region::Sector { r_lo, r_hi, t_lo, t_hi } => {
                let r = z.norm();
                r >= r_lo && r <= r_hi && (r == 0.0 || angle_in(arg0(z), t_lo, t_hi))
            }
            Region::Rectangle { x_lo, x_hi, y_lo, y_hi } => {
                z.re >= x_lo && z.re <= x_hi && z.im >= y_lo && z.im <= y_hi
            }
        }
    }

    /// Radial interval [a, b] when the region is a function of |z| only.
    fn radial(&self) -> Option<(f64, f64)> {
        match *self {
            Region::Whole => Some((0.0, f64::INFINITY)),
            Region::Annulus { r_lo, r_hi } => Some((r_lo, r_hi)),
            Region::ClosedDisk { center, radius } if center == C64::new(0.0, 0.0) => Some((0.0, radius)),
            _ => None,
        }
    }

    /// Classify a disk (c, rho): Some(true) inside, Some(false) outside, None undecided.
    fn classify_disk(&self, c: C64, rho: f64) -> Option<bool> {
        match *self {
            Region::Empty => Some(false),
            Region::Whole => Some(true),
            Region::ClosedDisk { center, radius } => {
                let d = (c - center).norm();
                if d + rho <= radius {
                    Some(true)
                } else if d - rho > radius {
                    Some(false)
                } else {
                    None
                }
            }
            Region::Annulus { r_lo, r_hi } => {
                let d = c.norm();
                if d - rho >= r_lo && d + rho <= r_hi {
                    Some(true)
                } else if d + rho < r_lo || d - rho > r_hi {
                    Some(false)
                } else {
                    None
                }
            }
            Region::Sector { r_lo, r_hi, t_lo, t_hi } => {
                let d = c.norm();
                if d + rho < r_lo || d - rho > r_hi {
                    return Some(false);
                }
                if d <= rho {
                    return None;
                }
                let half = (rho / d).asin();
                let t = arg0(c);
                let inside_r = d - rho >= r_lo && d + rho <= r_hi;
                let ov = angular_overlaps(t - half, t + half, t_lo, t_hi);
                let covered: f64 = ov.iter().map(|(a, b)| b - a).sum();
                if ov.is_empty() {
                    Some(false)
                } else if inside_r && covered >= 2.0 * half - 1e-15 {
                    Some(true)
                } else {
                    None
                }
            }
            Region::Rectangle { x_lo, x_hi, y_lo, y_hi } => {
                if c.re - rho >= x_lo && c.re + rho <= x_hi && c.im - rho >= y_lo && c.im + rho <= y_hi {
                    Some(true)
                } else if c.re + rho < x_lo || c.re - rho > x_hi || c.im + rho < y_lo || c.im - rho > y_hi {
                    Some(false)
                } else {
                    None
                }
            }
        }
    }

    /// Bracket of radii the region can reach.
    fn radius_bracket(&self) -> (f64, f64) {
        match *self {
            Region::Empty => (1.0, 0.0),
            Region::Whole => (0.0, f64::INFINITY),
            Region::ClosedDisk { center, radius } => ((center.norm() - radius).max(0.0), center.norm() + radius),
            Region::Annulus { r_lo, r_hi } | Region::Sector { r_lo, r_hi, .. } => (r_lo, r_hi),
            Region::Rectangle { x_lo, x_hi, y_lo, y_hi } => {
                let nx = 0.0_f64.clamp(x_lo, x_hi);
                let ny = 0.0_f64.clamp(y_lo, y_hi);
                let fx = x_lo.abs().max(x_hi.abs());
                let fy = y_lo.abs().max(y_hi.abs());
                (C64::new(nx, ny).norm(), C64::new(fx, fy).norm())
            }
        }
    }
}

const FALLBACK_DEPTH: u32 = 9;

impl PolarCell {
    pub fn point(&self, r: f64, t: f64) -> C64 {
        C64::from_polar(r, t)
    }

    pub fn center(&self) -> C64 {
        C64::from_polar(0.5 * (self.r0 + self.r1), 0.5 * (self.t0 + self.t1))
    }

    /// A disk containing the cell.
    pub fn bounding_disk(&self) -> (C64, f64) {
        let c = self.center();
        if self.t1 - self.t0 > PI {
            return (C64::new(0.0, 0.0), self.r1);
        }
        let tm = 0.5 * (self.t0 + self.t1);
        let mut rho: f64 = 0.0;
        for r in [self.r0, self.r1] {
            for t in [self.t0, self.t1, tm] {
                rho = rho.max((C64::from_polar(r, t) - c).norm());
            }
        }
        (c, rho * (1.0 + 1e-12) + 1e-300)
    }

    pub fn diameter(&self) -> f64 {
        annular_sector_diameter(self.r0, self.r1, self.t1 - self.t0)
    }

    fn split4(&self) -> [PolarCell; 4] {
        let rm = 0.5 * (self.r0 + self.r1);
        let tm = 0.5 * (self.t0 + self.t1);
        let m = 0.25 * self.mass;
        [
            PolarCell { r0: self.r0, r1: rm, t0: self.t0, t1: tm, mass: m },
            PolarCell { r0: rm, r1: self.r1, t0: self.t0, t1: tm, mass: m },
            PolarCell { r0: self.r0, r1: rm, t0: tm, t1: self.t1, mass: m },
            PolarCell { r0: rm, r1: self.r1, t0: tm, t1: self.t1, mass: m },
        ]
    }

    fn sub(&self, r0: f64, r1: f64, t0: f64, t1: f64) -> PolarCell {
        let fr = if self.r1 > self.r0 { (r1 - r0) / (self.r1 - self.r0) } else { 1.0 };
        let ft = if self.t1 > self.t0 { (t1 - t0) / (self.t1 - self.t0) } else { 1.0 };
        PolarCell { r0, r1, t0, t1, mass: self.mass * fr * ft }
    }
}

/// Diameter of {r0 ≤ r ≤ r1, t0 ≤ t ≤ t0 + dt}.
pub fn annular_sector_diameter(r0: f64, r1: f64, dt: f64) -> f64 {
    if dt >= PI {
        return 2.0 * r1;
    }
    let mut d: f64 = r1 - r0;
    let pts = [
        C64::from_polar(r0, 0.0),
        C64::from_polar(r1, 0.0),
        C64::from_polar(r0, dt),
        C64::from_polar(r1, dt),
    ];
    for i in 0..4 {
        for j in i + 1..4 {
            d = d.max((pts[i] - pts[j]).norm());
        }
    }
    d
}

impl RectCell {
    pub fn center(&self) -> C64 {
        C64::new(0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }

    pub fn bounding_disk(&self) -> (C64, f64) {
        let c = self.center();
        let rho = 0.5 * C64::new(self.x1 - self.x0, self.y1 - self.y0).norm();
        (c, rho * (1.0 + 1e-12) + 1e-300)
    }

    pub fn diameter(&self) -> f64 {
        C64::new(self.x1 - self.x0, self.y1 - self.y0).norm()
    }

    fn split4(&self) -> [RectCell; 4] {
        let xm = 0.5 * (self.x0 + self.x1);
        let ym = 0.5 * (self.y0 + self.y1);
        let m = 0.25 * self.mass;
        [
            RectCell { x0: self.x0, x1: xm, y0: self.y0, y1: ym, mass: m },
            RectCell { x0: xm, x1: self.x1, y0: self.y0, y1: ym, mass: m },
            RectCell { x0: self.x0, x1: xm, y0: ym, y1: self.y1, mass: m },
            RectCell { x0: xm, x1: self.x1, y0: ym, y1: self.y1, mass: m },
        ]
    }

    fn sub(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> RectCell {
        let fx = if self.x1 > self.x0 { (x1 - x0) / (self.x1 - self.x0) } else { 1.0 };
        let fy = if self.y1 > self.y0 { (y1 - y0) / (self.y1 - self.y0) } else { 1.0 };
        RectCell { x0, x1, y0, y1, mass: self.mass * fx * fy }
    }
}

fn interval_overlap(a0: f64, a1: f64, b0: f64, b1: f64) -> Option<(f64, f64)> {
    let lo = a0.max(b0);
    let hi = a1.min(b1);
    if hi > lo || (hi == lo && a0 == a1) {
        Some((lo, hi))
    } else {
        None
    }
}

/// Sub-intervals of [a, b] on which `pred` holds, located by sampling and bisection.
pub(crate) fn predicate_intervals<P: Fn(f64) -> bool>(a: f64, b: f64, samples: usize, pred: P) -> Vec<(f64, f64)> {
    if b < a {
        return Vec::new();
    }
    if b == a {
        return if pred(a) { vec![(a, a)] } else { Vec::new() };
    }
    let edge = |mut lo: f64, mut hi: f64, lo_val: bool| {
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if pred(mid) == lo_val {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-15 * (1.0 + hi.abs()) {
                break;
            }
        }
        if lo_val {
            lo
        } else {
            hi
        }
    };
    let n = samples.max(2);
    let mut out = Vec::new();
    let mut prev_x = a;
    let mut prev = pred(a);
    let mut start = if prev { Some(a) } else { None };
    for i in 1..=n {
        let x = a + (b - a) * i as f64 / n as f64;
        let x = if i == n { b } else { x };
        let cur = pred(x);
        if cur != prev {
            let e = edge(prev_x, x, prev);
            if cur {
                start = Some(e);
            } else if let Some(s) = start.take() {
                out.push((s, e));
            }
        }
        prev = cur;
        prev_x = x;
    }
    if let Some(s) = start {
        out.push((s, b));
    }
    out
}

impl Piece {
    pub fn mass(&self) -> f64 {
        match self {
            Piece::Atom(a) => a.mass,
            Piece::Polar(c) => c.mass,
            Piece::Rect(c) => c.mass,
            Piece::Curve(c) => c.mass,
        }
    }

    pub fn scaled(&self, f: f64) -> Piece {
        let mut p = self.clone();
        match &mut p {
            Piece::Atom(a) => a.mass *= f,
            Piece::Polar(c) => c.mass *= f,
            Piece::Rect(c) => c.mass *= f,
            Piece::Curve(c) => c.mass *= f,
        }
        p
    }

    /// A disk (center, radius) containing the support.
    pub fn bounding_disk(&self) -> (C64, f64) {
        match self {
            Piece::Atom(a) => (a.z, 0.0),
            Piece::Polar(c) => c.bounding_disk(),
            Piece::Rect(c) => c.bounding_disk(),
            Piece::Curve(c) => {
                let n = 32;
                let pts: Vec<C64> = (0..=n).map(|i| c.curve.point(c.r0 + (c.r1 - c.r0) * i as f64 / n as f64)).collect();
                let center = 0.5 * (pts[0] + pts[n]);
                let h = (c.r1 - c.r0) / n as f64;
                let slack = h * (1.0 + c.r1 * c.curve.lipschitz());
                let rho = pts.iter().map(|p| (p - center).norm()).fold(0.0, f64::max) + slack;
                (center, rho)
            }
        }
    }

    /// Largest modulus attained on the support.
    pub fn max_modulus(&self) -> f64 {
        match self {
            Piece::Atom(a) => a.z.norm(),
            Piece::Polar(c) => c.r1,
            Piece::Rect(c) => C64::new(c.x0.abs().max(c.x1.abs()), c.y0.abs().max(c.y1.abs())).norm(),
            Piece::Curve(c) => c.r1,
        }
    }

    pub fn mass_in(&self, region: &Region) -> f64 {
        match self {
            Piece::Atom(a) => {
                if region.contains(a.z) {
                    a.mass
                } else {
                    0.0
                }
            }
            _ => self.restrict(region).iter().map(Piece::mass).sum(),
        }
    }

    pub fn restrict(&self, region: &Region) -> Vec<Piece> {
        match region {
            Region::Empty => return Vec::new(),
            Region::Whole => return vec![self.clone()],
            _ => {}
        }
        match self {
            Piece::Atom(a) => {
                if region.contains(a.z) {
                    vec![self.clone()]
                } else {
                    Vec::new()
                }
            }
            Piece::Polar(c) => restrict_polar(c, region),
            Piece::Rect(c) => restrict_rect(c, region),
            Piece::Curve(c) => {
                let (lo, hi) = region.radius_bracket();
                let a = c.r0.max(lo);
                let b = c.r1.min(hi);
                let curve = &c.curve;
                predicate_intervals(a, b, 256, |r| region.contains(curve.point(r)))
                    .into_iter()
                    .filter(|(s, e)| e > s)
                    .map(|(s, e)| Piece::Curve(CurvePiece::new(curve.clone(), s, e)))
                    .collect()
            }
        }
    }

    /// Centered moments ∫(ζ−c)^k dμ for k = 0..=kmax.
    pub fn moments(&self, kmax: usize, c: C64) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); kmax + 1];
        let acc = |w: f64, z: C64, out: &mut Vec<C64>| {
            let d = z - c;
            let mut p = C64::new(w, 0.0);
            for o in out.iter_mut() {
                *o += p;
                p *= d;
            }
        };
        match self {
            Piece::Atom(a) => acc(a.mass, a.z, &mut out),
            Piece::Rect(r) => {
                let n = kmax / 2 + 1;
                let (x, w) = quad::gauss_legendre(n);
                let xs: Vec<(f64, f64)> = if r.x1 > r.x0 {
                    x.iter().zip(w).map(|(xi, wi)| (0.5 * (r.x0 + r.x1) + 0.5 * (r.x1 - r.x0) * xi, 0.5 * wi)).collect()
                } else {
                    vec![(r.x0, 1.0)]
                };
                let ys: Vec<(f64, f64)> = if r.y1 > r.y0 {
                    x.iter().zip(w).map(|(yi, wi)| (0.5 * (r.y0 + r.y1) + 0.5 * (r.y1 - r.y0) * yi, 0.5 * wi)).collect()
                } else {
                    vec![(r.y0, 1.0)]
                };
                for &(px, wx) in &xs {
                    for &(py, wy) in &ys {
                        acc(r.mass * wx * wy, C64::new(px, py), &mut out);
                    }
                }
            }
            Piece::Polar(p) => {
                let nr = kmax / 2 + 1;
                let (xr, wr) = quad::gauss_legendre(nr);
                let panels = ((p.t1 - p.t0) / 0.25).ceil().max(1.0) as usize;
                let nt = (12 + kmax / 2).min(64);
                let (xt, wt) = quad::gauss_legendre(nt);
                let dt = (p.t1 - p.t0) / panels as f64;
                for k in 0..panels {
                    let ta = p.t0 + dt * k as f64;
                    for (ti, tw) in xt.iter().zip(wt) {
                        let t = ta + 0.5 * dt * (1.0 + ti);
                        let e = C64::from_polar(1.0, t);
                        for (ri, rw) in xr.iter().zip(wr) {
                            let r = 0.5 * (p.r0 + p.r1) + 0.5 * (p.r1 - p.r0) * ri;
                            let w = p.mass * 0.5 * rw * 0.5 * tw / panels as f64;
                            acc(w, e * r, &mut out);
                        }
                    }
                }
            }
            Piece::Curve(cp) => {
                let curve = &cp.curve;
                let run = |panels: usize| {
                    let mut o = vec![C64::new(0.0, 0.0); kmax + 1];
                    let h = (cp.r1 - cp.r0) / panels as f64;
                    let (x, w) = quad::gauss_legendre(16);
                    for k in 0..panels {
                        let a = cp.r0 + h * k as f64;
                        for (xi, wi) in x.iter().zip(w) {
                            let r = a + 0.5 * h * (1.0 + xi);
                            acc(0.5 * h * wi * curve.density(r), curve.point(r), &mut o);
                        }
                    }
                    o
                };
                let mut panels = 2;
                let mut prev = run(panels);
                loop {
                    panels *= 2;
                    let cur = run(panels);
                    let diff: f64 = cur.iter().zip(&prev).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
                    let scale: f64 = cur.iter().map(|a| a.norm()).fold(1e-300, f64::max);
                    prev = cur;
                    if diff <= 1e-12 * scale || panels >= 1024 {
                        break;
                    }
                }
                // Rescale so the zeroth moment carries the stored mass exactly.
                let m0 = prev[0].re;
                let f = if m0 > 0.0 { cp.mass / m0 } else { 0.0 };
                out = prev.into_iter().map(|v| v * f).collect();
            }
        }
        out
    }

    /// Representative point, used for ordering.
    pub fn anchor(&self) -> C64 {
        match self {
            Piece::Atom(a) => a.z,
            Piece::Polar(c) => c.center(),
            Piece::Rect(c) => c.center(),
            Piece::Curve(c) => c.curve.point(0.5 * (c.r0 + c.r1)),
        }
    }
}

fn restrict_polar(c: &PolarCell, region: &Region) -> Vec<Piece> {
    if let Some((a, b)) = region.radial() {
        return match interval_overlap(c.r0, c.r1, a, b) {
            Some((lo, hi)) if hi > lo => vec![Piece::Polar(c.sub(lo, hi, c.t0, c.t1))],
            _ => Vec::new(),
        };
    }
    if let Region::Sector { r_lo, r_hi, t_lo, t_hi } = *region {
        let Some((lo, hi)) = interval_overlap(c.r0, c.r1, r_lo, r_hi) else {
            return Vec::new();
        };
        if hi <= lo {
            return Vec::new();
        }
        return angular_overlaps(c.t0, c.t1, t_lo, t_hi)
            .into_iter()
            .filter(|(s, e)| e > s)
            .map(|(s, e)| Piece::Polar(c.sub(lo, hi, s, e)))
            .collect();
    }
    let mut out = Vec::new();
    fallback_polar(c, region, 0, &mut out);
    out
}

fn fallback_polar(c: &PolarCell, region: &Region, depth: u32, out: &mut Vec<Piece>) {
    let (center, rho) = c.bounding_disk();
    match region.classify_disk(center, rho) {
        Some(true) => out.push(Piece::Polar(*c)),
        Some(false) => {}
        None if depth >= FALLBACK_DEPTH => {
            if region.contains(center) {
                out.push(Piece::Polar(*c));
            }
        }
        None => {
            for s in c.split4() {
                fallback_polar(&s, region, depth + 1, out);
            }
        }
    }
}

fn restrict_rect(c: &RectCell, region: &Region) -> Vec<Piece> {
    if let Region::Rectangle { x_lo, x_hi, y_lo, y_hi } = *region {
        let (Some((a, b)), Some((s, e))) = (interval_overlap(c.x0, c.x1, x_lo, x_hi), interval_overlap(c.y0, c.y1, y_lo, y_hi)) else {
            return Vec::new();
        };
        if (b <= a && c.x1 > c.x0) || (e <= s && c.y1 > c.y0) {
            return Vec::new();
        }
        return vec![Piece::Rect(c.sub(a, b, s, e))];
    }
    let mut out = Vec::new();
    fallback_rect(c, region, 0, &mut out);
    out
}

fn fallback_rect(c: &RectCell, region: &Region, depth: u32, out: &mut Vec<Piece>) {
    let (center, rho) = c.bounding_disk();
    match region.classify_disk(center, rho) {
        Some(true) => out.push(Piece::Rect(*c)),
        Some(false) => {}
        None if depth >= FALLBACK_DEPTH => {
            if region.contains(center) {
                out.push(Piece::Rect(*c));
            }
        }
        None => {
            for s in c.split4() {
                fallback_rect(&s, region, depth + 1, out);
            }
        }
    }
}

/// One ring of a polar grid: equal angular cells over [0, 2π).
#[derive(Clone, Debug, PartialEq)]
pub struct GridRing {
    pub r0: f64,
    pub r1: f64,
    pub masses: Vec<f64>,
}

impl GridRing {
    pub fn cell_width(&self) -> f64 {
        TAU / self.masses.len() as f64
    }

    pub fn cell(&self, b: usize) -> PolarCell {
        let w = self.cell_width();
        PolarCell { r0: self.r0, r1: self.r1, t0: w * b as f64, t1: w * (b + 1) as f64, mass: self.masses[b] }
    }

    pub fn mass(&self) -> f64 {
        quad::pairwise_sum(&self.masses)
    }

    /// Mass within angles [0, t], t ∈ [0, 2π].
    pub fn angular_cumulative(&self, t: f64) -> f64 {
        let w = self.cell_width();
        let x = (t / w).clamp(0.0, self.masses.len() as f64);
        let full = x.floor() as usize;
        let mut s: f64 = self.masses[..full.min(self.masses.len())].iter().sum();
        if full < self.masses.len() {
            s += self.masses[full] * (x - full as f64);
        }
        s
    }

    fn radial_fraction(&self, a: f64, b: f64) -> f64 {
        match interval_overlap(self.r0, self.r1, a, b) {
            Some((lo, hi)) if hi > lo => (hi - lo) / (self.r1 - self.r0),
            _ => 0.0,
        }
    }
}

/// Polar-grid density: rings with uniform angular cells, mass uniform in (r, θ) per cell.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct PolarGrid {
    pub rings: Vec<GridRing>,
}

impl PolarGrid {
    pub fn mass(&self) -> f64 {
        self.rings.iter().map(GridRing::mass).sum()
    }

    pub fn cells(&self) -> impl Iterator<Item = PolarCell> + '_ {
        self.rings.iter().flat_map(|ring| (0..ring.masses.len()).map(move |b| ring.cell(b)))
    }

    /// Rings clipped to radii [a, b].
    pub fn clip(&self, a: f64, b: f64) -> PolarGrid {
        let mut rings = Vec::new();
        for ring in &self.rings {
            let f = ring.radial_fraction(a, b);
            if f > 0.0 {
                let r0 = ring.r0.max(a);
                let r1 = ring.r1.min(b);
                rings.push(GridRing { r0, r1, masses: ring.masses.iter().map(|m| m * f).collect() });
            }
        }
        PolarGrid { rings }
    }

    /// Mass with radius ≤ r.
    pub fn radial_cumulative(&self, r: f64) -> f64 {
        self.rings.iter().map(|ring| ring.mass() * ring.radial_fraction(0.0, r)).sum()
    }
}

/// A finite nonnegative measure: loose pieces plus polar-grid densities.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiskMeasure {
    pub pieces: Vec<Piece>,
    pub grids: Vec<PolarGrid>,
    total: f64,
}

impl DiskMeasure {
    pub fn new(pieces: Vec<Piece>, grids: Vec<PolarGrid>) -> Self {
        let pieces: Vec<Piece> = pieces.into_iter().filter(|p| p.mass() > 0.0).collect();
        let parts: Vec<f64> = pieces.iter().map(Piece::mass).chain(grids.iter().map(PolarGrid::mass)).collect();
        let total = quad::pairwise_sum(&parts);
        Self { pieces, grids, total }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn atoms(atoms: &[Atom]) -> Self {
        Self::new(atoms.iter().map(|a| Piece::Atom(*a)).collect(), Vec::new())
    }

    pub fn grid(grid: PolarGrid) -> Self {
        Self::new(Vec::new(), vec![grid])
    }

    pub fn curve(profile: CurveProfile) -> Self {
        let (a, b) = (profile.r_lo, profile.r_hi);
        Self::new(vec![Piece::Curve(CurvePiece::new(Arc::new(profile), a, b))], Vec::new())
    }

    pub fn mass(&self) -> f64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total <= 0.0
    }

    pub fn combine(mut self, other: DiskMeasure) -> DiskMeasure {
        self.pieces.extend(other.pieces);
        self.grids.extend(other.grids);
        DiskMeasure::new(self.pieces, self.grids)
    }

    /// Every element as a loose piece (grid cells expanded).
    pub fn all_pieces(&self) -> Vec<Piece> {
        let mut out = self.pieces.clone();
        for g in &self.grids {
            out.extend(g.cells().filter(|c| c.mass > 0.0).map(Piece::Polar));
        }
        out
    }

    pub fn total_mass(&self, region: &Region) -> f64 {
        let mut parts: Vec<f64> = self.pieces.iter().map(|p| p.mass_in(region)).collect();
        for g in &self.grids {
            parts.push(grid_mass_in(g, region));
        }
        quad::pairwise_sum(&parts)
    }

    pub fn restrict(&self, region: &Region) -> DiskMeasure {
        let mut pieces: Vec<Piece> = self.pieces.iter().flat_map(|p| p.restrict(region)).collect();
        let mut grids = Vec::new();
        for g in &self.grids {
            if let Some((a, b)) = region.radial() {
                let c = g.clip(a, b);
                if !c.rings.is_empty() {
                    grids.push(c);
                }
            } else {
                pieces.extend(g.cells().filter(|c| c.mass > 0.0).flat_map(|c| Piece::Polar(c).restrict(region)));
            }
        }
        DiskMeasure::new(pieces, grids)
    }

    pub fn moment(&self, region: &Region, k: usize, center: C64) -> C64 {
        let r = self.restrict(region);
        r.all_pieces().iter().map(|p| p.moments(k, center)[k]).sum()
    }

    /// Split every atom into ⌊mass⌋ zeros plus a remainder atom of mass < 1.
    pub fn extract_heavy_atoms(&self) -> (AtomSet, DiskMeasure) {
        let mut zeros = Vec::new();
        let mut rest = Vec::with_capacity(self.pieces.len());
        for p in &self.pieces {
            match p {
                Piece::Atom(a) if a.mass >= 1.0 => {
                    let k = a.mass.floor();
                    zeros.push(Zero { z: a.z, multiplicity: k as u32, source: Source::Heavy, ratio: 0.0 });
                    let r = a.mass - k;
                    if r > 0.0 {
                        rest.push(Piece::Atom(Atom { z: a.z, mass: r }));
                    }
                }
                _ => rest.push(p.clone()),
            }
        }
        (AtomSet { zeros }, DiskMeasure::new(rest, self.grids.clone()))
    }

    /// Largest |ζ| on the support.
    pub fn support_radius(&self) -> f64 {
        let mut r: f64 = self.pieces.iter().map(Piece::max_modulus).fold(0.0, f64::max);
        for g in &self.grids {
            for ring in &g.rings {
                if ring.mass() > 0.0 {
                    r = r.max(ring.r1);
                }
            }
        }
        r
    }
}

fn grid_mass_in(g: &PolarGrid, region: &Region) -> f64 {
    if let Some((a, b)) = region.radial() {
        return g.rings.iter().map(|ring| ring.mass() * ring.radial_fraction(a, b)).sum();
    }
    if let Region::Empty = region {
        return 0.0;
    }
    g.cells().filter(|c| c.mass > 0.0).map(|c| Piece::Polar(c).mass_in(region)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn inverse_curve() -> CurveProfile {
        CurveProfile {
            theta0: 0.3,
            slope: 0.0,
            r_lo: 0.5,
            r_hi: 0.99,
            law: MassLaw::Proximate { delta: 1.0, order: ProximateOrder::constant(1.0) },
        }
    }

    #[test]
    fn atom_in_closed_disk() {
        let mu = DiskMeasure::atoms(&[Atom { z: c(0.3, 0.0), mass: 1.0 }]);
        assert_eq!(mu.total_mass(&Region::ClosedDisk { center: c(0.0, 0.0), radius: 0.5 }), 1.0);
        assert_eq!(mu.total_mass(&Region::Empty), 0.0);
    }

    #[test]
    fn curve_mass_matches_cumulative_profile() {
        let mu = DiskMeasure::curve(inverse_curve());
        let m = mu.total_mass(&Region::ClosedDisk { center: c(0.0, 0.0), radius: 0.75 });
        // M(0.75) − M(0.5) with M(r) = 1/(1−r) − 2
        let oracle = (1.0 / 0.25 - 2.0) - (1.0 / 0.5 - 2.0);
        assert!((m - oracle).abs() < 1e-12, "{m}");
    }

    #[test]
    fn segment_second_moment() {
        let seg = RectCell { x0: -1.0, x1: 1.0, y0: 0.0, y1: 0.0, mass: 2.0 };
        let mu = DiskMeasure::new(vec![Piece::Rect(seg)], vec![]);
        let m2 = mu.moment(&Region::Whole, 2, c(0.0, 0.0));
        // Simpson oracle for ∫_{-1}^{1} x² dx
        let n = 1000;
        let h = 2.0 / n as f64;
        let mut s = 0.0;
        for i in 0..=n {
            let x = -1.0 + h * i as f64;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * x * x;
        }
        s *= h / 3.0;
        assert!((m2.re - s).abs() < 1e-12 && m2.im.abs() < 1e-15, "{m2}");
    }

    #[test]
    fn first_moment_about_center_of_mass_vanishes() {
        let mu = DiskMeasure::new(
            vec![
                Piece::Atom(Atom { z: c(0.1, 0.2), mass: 0.7 }),
                Piece::Polar(PolarCell { r0: 0.3, r1: 0.5, t0: 0.2, t1: 1.4, mass: 1.1 }),
            ],
            vec![],
        );
        let m1 = mu.moment(&Region::Whole, 1, c(0.0, 0.0));
        let cm = m1 / mu.mass();
        assert!(mu.moment(&Region::Whole, 1, cm).norm() < 1e-14);
    }

    #[test]
    fn heavy_atom_extraction() {
        let a = c(0.2, 0.1);
        let b = c(-0.3, 0.0);
        let mu = DiskMeasure::atoms(&[Atom { z: a, mass: 2.7 }]);
        let (heavy, rest) = mu.extract_heavy_atoms();
        assert_eq!(heavy.zeros.len(), 1);
        assert_eq!(heavy.zeros[0].multiplicity, 2);
        assert!((rest.mass() - 0.7).abs() < 1e-15);

        let mu = DiskMeasure::atoms(&[Atom { z: a, mass: 1.0 }, Atom { z: b, mass: 0.5 }]);
        let (heavy, rest) = mu.extract_heavy_atoms();
        assert_eq!(heavy.zeros.len(), 1);
        assert_eq!(heavy.zeros[0].z, a);
        assert_eq!(rest.pieces, vec![Piece::Atom(Atom { z: b, mass: 0.5 })]);

        let g = PolarGrid { rings: vec![GridRing { r0: 0.1, r1: 0.2, masses: vec![1.5; 4] }] };
        let (heavy, rest) = DiskMeasure::grid(g).extract_heavy_atoms();
        assert!(heavy.zeros.is_empty());
        assert_eq!(rest.mass(), 6.0);
    }

    #[test]
    fn restrict_keeps_boundary_atoms_and_drops_outside() {
        let mu = DiskMeasure::atoms(&[Atom { z: c(0.5, 0.0), mass: 0.4 }, Atom { z: c(0.0, 0.6), mass: 1.0 }]);
        let r = mu.restrict(&Region::ClosedDisk { center: c(0.0, 0.0), radius: 0.5 });
        assert!((r.mass() - 0.4).abs() < 1e-15);
        assert!(mu.restrict(&Region::Empty).is_empty());
        assert_eq!(mu.restrict(&Region::Whole).mass(), mu.mass());
    }

    #[test]
    fn sector_restriction_of_grid_is_exact() {
        let g = PolarGrid { rings: vec![GridRing { r0: 0.2, r1: 0.4, masses: vec![1.0, 2.0, 3.0, 4.0] }] };
        let mu = DiskMeasure::grid(g);
        let s = Region::Sector { r_lo: 0.3, r_hi: 0.9, t_lo: -PI / 4.0, t_hi: PI / 4.0 };
        // half the radial extent; half of cell 0 and half of cell 3
        let expect = 0.5 * (0.5 * 1.0 + 0.5 * 4.0);
        assert!((mu.total_mass(&s) - expect).abs() < 1e-14);
    }

    #[test]
    fn fallback_restriction_approximates_area() {
        let cell = RectCell { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0, mass: 1.0 };
        let disk = Region::ClosedDisk { center: c(0.0, 0.0), radius: 1.0 };
        let m = Piece::Rect(cell).mass_in(&disk);
        assert!((m - PI / 4.0).abs() < 2e-3, "{m}");
    }

    #[test]
    fn curve_sector_restriction() {
        let mut prof = inverse_curve();
        prof.slope = 2.0;
        let mu = DiskMeasure::curve(prof.clone());
        let s = Region::Sector { r_lo: 0.0, r_hi: 1.0, t_lo: 0.3, t_hi: 0.5 };
        // θ(r) = 0.3 + 2(r − 0.5) ≤ 0.5 ⇔ r ≤ 0.6
        let expect = prof.mass_between(0.5, 0.6);
        assert!((mu.total_mass(&s) - expect).abs() < 1e-10);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_measure() -> impl Strategy<Value = DiskMeasure> {
            let atom = (0.0..0.95f64, 0.0..TAU, 0.01..3.0f64).prop_map(|(r, t, m)| Piece::Atom(Atom { z: C64::from_polar(r, t), mass: m }));
            let cell = (0.0..0.8f64, 0.01..0.15f64, 0.0..6.0f64, 0.01..1.0f64, 0.01..2.0f64)
                .prop_map(|(r0, dr, t0, dt, m)| Piece::Polar(PolarCell { r0, r1: r0 + dr, t0, t1: (t0 + dt).min(TAU), mass: m }));
            proptest::collection::vec(prop_oneof![atom, cell], 1..8).prop_map(|p| DiskMeasure::new(p, vec![]))
        }

        proptest! {
            #[test]
            fn annulus_additivity(mu in arb_measure(), split in 0.05..0.95f64) {
                let a = mu.total_mass(&Region::Annulus { r_lo: 0.0, r_hi: split });
                let b = mu.total_mass(&Region::Annulus { r_lo: split + 1e-13, r_hi: 1.0 });
                prop_assert!((a + b - mu.mass()).abs() <= 1e-10 * mu.mass());
            }

            #[test]
            fn moment_shift_identity(mu in arb_measure(), cr in -0.5..0.5f64, ci in -0.5..0.5f64) {
                let c0 = C64::new(cr, ci);
                let m1c = mu.moment(&Region::Whole, 1, c0);
                let m10 = mu.moment(&Region::Whole, 1, C64::new(0.0, 0.0));
                prop_assert!((m1c - (m10 - c0 * mu.mass())).norm() <= 1e-10 * (1.0 + mu.mass()));
            }

            #[test]
            fn heavy_extraction_conserves_atom_mass(ms in proptest::collection::vec(0.0..5.0f64, 1..10)) {
                let atoms: Vec<Atom> = ms.iter().enumerate().map(|(i, &m)| Atom { z: C64::from_polar(0.5, i as f64), mass: m }).collect();
                let mu = DiskMeasure::atoms(&atoms);
                let (heavy, rest) = mu.extract_heavy_atoms();
                let h: f64 = heavy.zeros.iter().map(|z| z.multiplicity as f64).sum();
                prop_assert!((h + rest.mass() - mu.mass()).abs() <= 1e-12 * (1.0 + mu.mass()));
                for p in &rest.pieces {
                    prop_assert!(p.mass() < 1.0);
                }
            }
        }
    }
}
