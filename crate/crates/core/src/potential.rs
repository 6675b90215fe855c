//! Potentials, cell error terms and L¹ integration of u − log|f|.

use std::f64::consts::{PI, TAU};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atomize::{AtomSet, AtomizedCell, MULTIPOLE_ORDER};
use crate::error::{Error, Result};
use crate::measure::{arg0, CurvePiece, DiskMeasure, GridRing, Piece, PolarCell, PolarGrid, RectCell, C64};
use crate::quad;

/// Kernel k(z, ζ) used to turn a measure into a potential.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelMode {
    /// log|(z−ζ)/(1−z ζ̄)|.
    GreenDisk,
    /// log|z−ζ|.
    PlanarLog,
    /// log|E(w, 1)| with w = (1−|ζ|²)/(1−ζ̄ z).
    Weierstrass,
}

/// w(z, ζ) = (1−|ζ|²)/(1−ζ̄ z).
pub fn weierstrass_w(z: C64, zeta: C64) -> C64 {
    (1.0 - zeta.norm_sqr()) / (1.0 - zeta.conj() * z)
}

/// log|E(w, 1)| = log|1−w| + Re w.
pub fn log_e1(w: C64) -> f64 {
    (1.0 - w).norm().ln() + w.re
}

pub fn kernel(mode: KernelMode, z: C64, zeta: C64) -> f64 {
    let d = (z - zeta).norm().ln();
    match mode {
        KernelMode::PlanarLog => d,
        KernelMode::GreenDisk => d - (1.0 - z * zeta.conj()).norm().ln(),
        // 1 − w = ζ̄(ζ − z)/(1 − ζ̄z); expanded to stay accurate when w ≈ 1
        KernelMode::Weierstrass => zeta.norm().ln() + d - (1.0 - zeta.conj() * z).norm().ln() + weierstrass_w(z, zeta).re,
    }
}

/// Part of the kernel without the log|z−ζ| singularity, as a function of ρ for ζ = ρ (c = z e^{−it}).
fn smooth_part(mode: KernelMode, c: C64, rho: f64) -> f64 {
    match mode {
        KernelMode::PlanarLog => 0.0,
        KernelMode::GreenDisk => -(1.0 - c * rho).norm().ln(),
        KernelMode::Weierstrass => {
            let den = 1.0 - c * rho;
            -den.norm().ln() + ((1.0 - rho * rho) / den).re
        }
    }
}

fn xlogx_re(u: C64) -> f64 {
    if u.norm_sqr() == 0.0 {
        0.0
    } else {
        (u * u.ln()).re
    }
}

/// ∫ log|ρ − c| dρ without the −ρ term.
fn a_dist_core(rho: f64, c: C64) -> f64 {
    xlogx_re(C64::new(rho, 0.0) - c)
}

fn a_log_rho(rho: f64) -> f64 {
    if rho == 0.0 {
        0.0
    } else {
        rho * rho.ln() - rho
    }
}

/// ∫₀^ρ log|1 − c x| dx.
fn a_one_minus(rho: f64, c: C64) -> f64 {
    let x = c * rho;
    if x.norm_sqr() == 0.0 {
        return 0.0;
    }
    if c.norm() < 0.25 {
        let mut p = x;
        let mut s = C64::new(0.0, 0.0);
        for k in 1..80 {
            let term = p / (k * (k + 1)) as f64;
            s += term;
            if term.norm() < 1e-18 * s.norm() {
                break;
            }
            p *= x;
        }
        -s.re * rho
    } else {
        let u = 1.0 - x;
        (-(u * u.ln()) / c).re - rho
    }
}

/// ∫₀^ρ Re[(1 − x²)/(1 − c x)] dx.
fn a_re_w(rho: f64, c: C64) -> f64 {
    let x = c * rho;
    if c.norm() < 0.25 {
        let mut p = C64::new(1.0, 0.0);
        let mut s = C64::new(0.0, 0.0);
        let r3 = rho * rho * rho;
        for k in 0..80 {
            let term = p * (rho / (k + 1) as f64 - r3 / (k + 3) as f64);
            s += term;
            if k > 0 && term.norm() < 1e-18 * s.norm().max(1e-300) {
                break;
            }
            p *= x;
        }
        s.re
    } else {
        let lg = (1.0 - x).ln();
        (rho * rho / (2.0 * c) + rho / (c * c) - (1.0 - 1.0 / (c * c)) / c * lg).re
    }
}

/// ∫₀^ρ k(c, x) dx for real x, i.e. the radial antiderivative along ζ = x e^{it} with c = z e^{−it}.
pub fn radial_antiderivative(mode: KernelMode, c: C64, rho: f64) -> f64 {
    let base = a_dist_core(rho, c) - a_dist_core(0.0, c) - rho;
    match mode {
        KernelMode::PlanarLog => base,
        KernelMode::GreenDisk => base - a_one_minus(rho, c),
        KernelMode::Weierstrass => base + a_log_rho(rho) - a_one_minus(rho, c) + a_re_w(rho, c),
    }
}

/// Mean of k over ζ = ρ e^{it}, ρ ∈ [r0, r1] uniform, t ∈ [0, 2π) uniform, at |z| = r.
pub fn ring_average(mode: KernelMode, r0: f64, r1: f64, r: f64) -> f64 {
    let lmax = if r1 <= r0 {
        r.max(r0).ln()
    } else {
        let s = r.clamp(r0, r1);
        let inner = if s > r0 { (s - r0) * r.ln() } else { 0.0 };
        (inner + a_log_rho(r1) - a_log_rho(s)) / (r1 - r0)
    };
    match mode {
        KernelMode::PlanarLog | KernelMode::GreenDisk => lmax,
        KernelMode::Weierstrass => {
            let (llog, quad_mean) = if r1 <= r0 {
                (r0.ln(), 1.0 - r0 * r0)
            } else {
                ((a_log_rho(r1) - a_log_rho(r0)) / (r1 - r0), 1.0 - (r0 * r0 + r0 * r1 + r1 * r1) / 3.0)
            };
            lmax + llog + quad_mean
        }
    }
}

const FAR: f64 = 3.0;
const GL_FAR: usize = 10;

fn polar_gl(cell: &PolarCell, mode: KernelMode, z: C64) -> f64 {
    let (xr, wr) = quad::gauss_legendre(GL_FAR);
    let dt = cell.t1 - cell.t0;
    let panels = (dt / 0.25).ceil().max(1.0) as usize;
    let h = dt / panels as f64;
    let radial: Vec<(f64, f64)> = if cell.r1 > cell.r0 {
        xr.iter().zip(wr).map(|(x, w)| (0.5 * (cell.r0 + cell.r1) + 0.5 * (cell.r1 - cell.r0) * x, 0.5 * w)).collect()
    } else {
        vec![(cell.r0, 1.0)]
    };
    let mut s = 0.0;
    for k in 0..panels {
        let ta = cell.t0 + h * k as f64;
        for (xt, wt) in xr.iter().zip(wr) {
            let t = ta + 0.5 * h * (1.0 + xt);
            let e = C64::from_polar(1.0, t);
            for &(r, w) in &radial {
                s += w * 0.5 * wt / panels as f64 * kernel(mode, z, e * r);
            }
        }
    }
    cell.mass * s
}

/// Radially averaged kernel over [r0, r1] at angular offset encoded in c.
fn radial_mean(mode: KernelMode, c: C64, r0: f64, r1: f64) -> f64 {
    let dr = r1 - r0;
    if dr <= 0.0 {
        return kernel(mode, c, C64::new(r0, 0.0));
    }
    let sing = (a_dist_core(r1, c) - a_dist_core(r0, c)) / dr - 1.0;
    let mut s = sing;
    if mode != KernelMode::PlanarLog {
        let (x, w) = quad::gauss_legendre(GL_FAR);
        let sm: f64 = x.iter().zip(w).map(|(xi, wi)| 0.5 * wi * smooth_part(mode, c, 0.5 * (r0 + r1) + 0.5 * dr * xi)).sum();
        s += sm;
        if mode == KernelMode::Weierstrass {
            s += (a_log_rho(r1) - a_log_rho(r0)) / dr;
        }
    }
    s
}

fn angle_breaks(z: C64, t0: f64, t1: f64) -> Vec<f64> {
    let a = arg0(z);
    let mut out = Vec::new();
    for k in -2..=2 {
        let t = a + TAU * k as f64;
        if t > t0 && t < t1 {
            out.push(t);
        }
    }
    out
}

/// ∫ k(z, ζ) dμ for a polar cell (uniform in r and θ).
pub fn polar_cell_potential(cell: &PolarCell, mode: KernelMode, z: C64) -> f64 {
    if cell.mass == 0.0 {
        return 0.0;
    }
    let dt = cell.t1 - cell.t0;
    if dt <= 0.0 {
        let c = z * C64::from_polar(1.0, -cell.t0);
        return cell.mass * radial_mean(mode, c, cell.r0, cell.r1);
    }
    let (center, rho) = cell.bounding_disk();
    if (z - center).norm() > FAR * rho {
        return polar_gl(cell, mode, z);
    }
    let g = |t: f64| radial_mean(mode, z * C64::from_polar(1.0, -t), cell.r0, cell.r1);
    let breaks = angle_breaks(z, cell.t0, cell.t1);
    cell.mass * quad::adaptive_with_breaks(g, cell.t0, cell.t1, &breaks, 1e-13 * dt) / dt
}

/// ∫∫ log√(X²+Y²) dX dY antiderivative.
fn rect_log_primitive(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    if r2 == 0.0 {
        return 0.0;
    }
    let mut s = x * y * r2.ln() - 3.0 * x * y;
    if x != 0.0 {
        s += x * x * (y / x).atan();
    }
    if y != 0.0 {
        s += y * y * (x / y).atan();
    }
    0.5 * s
}

/// ∫ log|X + iY| dX antiderivative at fixed Y.
fn segment_log_primitive(x: f64, y: f64) -> f64 {
    let r2 = x * x + y * y;
    let mut s = if r2 > 0.0 { 0.5 * x * r2.ln() } else { 0.0 } - x;
    if y != 0.0 {
        s += y * (x / y).atan();
    }
    s
}

fn rect_planar_closed(cell: &RectCell, z: C64) -> f64 {
    let (a0, a1) = (cell.x0 - z.re, cell.x1 - z.re);
    let (b0, b1) = (cell.y0 - z.im, cell.y1 - z.im);
    let (dx, dy) = (a1 - a0, b1 - b0);
    if dx > 0.0 && dy > 0.0 {
        let v = rect_log_primitive(a1, b1) - rect_log_primitive(a0, b1) - rect_log_primitive(a1, b0) + rect_log_primitive(a0, b0);
        cell.mass * v / (dx * dy)
    } else if dx > 0.0 {
        cell.mass * (segment_log_primitive(a1, b0) - segment_log_primitive(a0, b0)) / dx
    } else if dy > 0.0 {
        cell.mass * (segment_log_primitive(b1, a0) - segment_log_primitive(b0, a0)) / dy
    } else {
        cell.mass * C64::new(a0, b0).norm().ln()
    }
}

fn rect_gl<F: Fn(C64) -> f64>(cell: &RectCell, f: F) -> f64 {
    let (x, w) = quad::gauss_legendre(GL_FAR);
    let nodes = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
        if hi > lo {
            x.iter().zip(w).map(|(xi, wi)| (0.5 * (lo + hi) + 0.5 * (hi - lo) * xi, 0.5 * wi)).collect()
        } else {
            vec![(lo, 1.0)]
        }
    };
    let xs = nodes(cell.x0, cell.x1);
    let ys = nodes(cell.y0, cell.y1);
    let mut s = 0.0;
    for &(px, wx) in &xs {
        for &(py, wy) in &ys {
            s += wx * wy * f(C64::new(px, py));
        }
    }
    cell.mass * s
}

pub fn rect_cell_potential(cell: &RectCell, mode: KernelMode, z: C64) -> f64 {
    if cell.mass == 0.0 {
        return 0.0;
    }
    let (center, rho) = cell.bounding_disk();
    if (z - center).norm() > FAR * rho {
        return rect_gl(cell, |zeta| kernel(mode, z, zeta));
    }
    let planar = rect_planar_closed(cell, z);
    match mode {
        KernelMode::PlanarLog => planar,
        _ => planar + rect_gl(cell, |zeta| kernel(mode, z, zeta) - (z - zeta).norm().ln()),
    }
}

pub fn curve_potential(piece: &CurvePiece, mode: KernelMode, z: C64) -> f64 {
    let total = piece.curve.mass_between(piece.r0, piece.r1);
    if piece.mass == 0.0 || total <= 0.0 {
        return 0.0;
    }
    let curve = &piece.curve;
    let s = z.norm().clamp(piece.r0, piece.r1);
    let anchor = curve.point(s);
    let dir = C64::from_polar(1.0, curve.theta(s));
    let base = anchor - z;
    // ζ(s+u) − z assembled from the exact offset u, so the difference keeps its digits
    let f = |u: f64| {
        let r = s + u;
        let x = curve.slope * u;
        let rot = C64::new(-2.0 * (0.5 * x).sin().powi(2), x.sin());
        let diff = base + dir * (u + (s + u) * rot);
        let planar = diff.norm().ln();
        let k = match mode {
            KernelMode::PlanarLog => planar,
            _ => planar + (kernel(mode, z, curve.point(r)) - (z - curve.point(r)).norm().ln()),
        };
        k * curve.density(r)
    };
    let tol = 1e-10 * total;
    let mut v = 0.0;
    // u = ∓l·t², graded towards the singular point
    for (sign, l) in [(-1.0, s - piece.r0), (1.0, piece.r1 - s)] {
        if l > 0.0 {
            v += quad::adaptive(|t| f(sign * l * t * t) * 2.0 * l * t, 0.0, 1.0, 0.5 * tol);
        }
    }
    v * piece.mass / total
}

/// ∫ k(z, ζ) dμ_piece; −∞ when z is an atom of the piece.
pub fn piece_potential(piece: &Piece, mode: KernelMode, z: C64) -> f64 {
    match piece {
        Piece::Atom(a) => {
            if a.mass == 0.0 {
                0.0
            } else {
                a.mass * kernel(mode, z, a.z)
            }
        }
        Piece::Polar(c) => polar_cell_potential(c, mode, z),
        Piece::Rect(c) => rect_cell_potential(c, mode, z),
        Piece::Curve(c) => curve_potential(c, mode, z),
    }
}

fn ring_is_uniform(ring: &GridRing) -> bool {
    let n = ring.masses.len() as f64;
    let mean = ring.mass() / n;
    ring.masses.iter().all(|m| (m - mean).abs() <= 1e-13 * mean.abs().max(1e-300))
}

/// Potential of one grid ring at a single point.
pub fn ring_potential_at(ring: &GridRing, mode: KernelMode, z: C64) -> f64 {
    if ring_is_uniform(ring) {
        return ring.mass() * ring_average(mode, ring.r0, ring.r1, z.norm());
    }
    (0..ring.masses.len()).map(|b| polar_cell_potential(&ring.cell(b), mode, z)).sum()
}

pub fn grid_potential_at(grid: &PolarGrid, mode: KernelMode, z: C64) -> f64 {
    grid.rings.iter().map(|ring| ring_potential_at(ring, mode, z)).sum()
}

/// Potential of a ring at angles φ + 2πa/A_s on the circle |z| = r.
///
/// Uses the rotation invariance of every kernel: the value at sample a from bin b depends
/// only on a − b·A_s/A_j, so one table of bin averages serves the whole circle.
pub fn ring_potential_on_circle(ring: &GridRing, mode: KernelMode, r: f64, a_s: usize, phase: f64) -> Vec<f64> {
    let a_j = ring.masses.len();
    if ring_is_uniform(ring) {
        return vec![ring.mass() * ring_average(mode, ring.r0, ring.r1, r); a_s];
    }
    if a_s % a_j != 0 {
        return (0..a_s)
            .map(|a| {
                let z = C64::from_polar(r, phase + TAU * a as f64 / a_s as f64);
                ring_potential_at(ring, mode, z)
            })
            .collect();
    }
    let c = a_s / a_j;
    let step = TAU / a_s as f64;
    let g = |s: f64| radial_mean(mode, C64::from_polar(r, s), ring.r0, ring.r1);
    // I[i] = ∫ g over [L_{i−1}, L_i], L_k = φ + k·step
    let integrals: Vec<f64> = (0..a_s)
        .map(|i| {
            let lo = phase + step * (i as f64 - 1.0);
            let hi = lo + step;
            let breaks = angle_breaks(C64::new(1.0, 0.0), lo, hi);
            quad::adaptive_with_breaks(g, lo, hi, &breaks, 1e-14 * step)
        })
        .collect();
    let width = ring.cell_width();
    let table: Vec<f64> = (0..a_s)
        .map(|j| (0..c).map(|i| integrals[(j + a_s - i) % a_s]).sum::<f64>() / width)
        .collect();
    (0..a_s)
        .map(|a| {
            let terms: Vec<f64> = (0..a_j).map(|b| ring.masses[b] * table[(a + a_s * a_j - b * c) % a_s]).collect();
            quad::pairwise_sum(&terms)
        })
        .collect()
}

/// ∫ k(z, ζ) dμ(ζ); AtomHit when z is an atom of μ.
pub fn eval_potential(mu: &DiskMeasure, mode: KernelMode, z: C64) -> Result<f64> {
    let mut terms = Vec::with_capacity(mu.pieces.len() + mu.grids.len());
    for p in &mu.pieces {
        if let Piece::Atom(a) = p {
            if a.z == z && a.mass > 0.0 {
                return Err(Error::AtomHit { z });
            }
        }
        terms.push(piece_potential(p, mode, z));
    }
    for g in &mu.grids {
        terms.push(grid_potential_at(g, mode, z));
    }
    Ok(quad::pairwise_sum(&terms))
}

/// Σ multiplicity · k(z, a) over the zero set, i.e. log|f(z)|.
pub fn eval_atom_sum(atoms: &AtomSet, mode: KernelMode, z: C64) -> Result<f64> {
    let mut terms = Vec::with_capacity(atoms.zeros.len());
    for zero in &atoms.zeros {
        if zero.z == z {
            return Err(Error::AtomHit { z });
        }
        terms.push(zero.multiplicity as f64 * kernel(mode, z, zero.z));
    }
    Ok(quad::pairwise_sum(&terms))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeierstrassValue {
    pub value: f64,
    /// Bound |w|²/(2(1−|w|)) summed over the part of the measure with |w| ≤ 1/2 at z.
    pub tail_bound: f64,
}

/// u₂(z) = ∫ log|E(w, 1)| dμ⁽²⁾ with the far part's size bounded separately.
pub fn eval_weierstrass_remainder(mu2: &DiskMeasure, z: C64) -> Result<WeierstrassValue> {
    let value = eval_potential(mu2, KernelMode::Weierstrass, z)?;
    let bound = |zeta: C64, mass: f64| {
        let w = weierstrass_w(z, zeta).norm();
        if w <= 0.5 {
            mass * w * w / (2.0 * (1.0 - w))
        } else {
            0.0
        }
    };
    let mut tail = 0.0;
    for p in &mu2.pieces {
        // |w| ≤ (1−|ζ|²)/(1−|ζ||z|), largest at the smallest modulus on the piece
        let (c, rho) = p.bounding_disk();
        let s = (c.norm() - rho).max(0.0);
        let dir = if z.norm() > 0.0 { z / z.norm() } else { C64::new(1.0, 0.0) };
        tail += bound(dir * s, p.mass());
    }
    for g in &mu2.grids {
        for ring in &g.rings {
            let w = (1.0 - ring.r0 * ring.r0) / (1.0 - ring.r0 * z.norm());
            if w <= 0.5 {
                tail += ring.mass() * w * w / (2.0 * (1.0 - w));
            }
        }
    }
    Ok(WeierstrassValue { value, tail_bound: tail })
}

/// Quadrature nodes (ζ, weight) carrying a piece's mass; exact enough for smooth integrands.
pub fn piece_nodes(piece: &Piece) -> Vec<(C64, f64)> {
    let (x, w) = quad::gauss_legendre(8);
    let gl = |lo: f64, hi: f64| -> Vec<(f64, f64)> {
        if hi > lo {
            x.iter().zip(w).map(|(xi, wi)| (0.5 * (lo + hi) + 0.5 * (hi - lo) * xi, 0.5 * wi)).collect()
        } else {
            vec![(lo, 1.0)]
        }
    };
    match piece {
        Piece::Atom(a) => vec![(a.z, a.mass)],
        Piece::Rect(c) => {
            let mut out = Vec::new();
            for (px, wx) in gl(c.x0, c.x1) {
                for &(py, wy) in &gl(c.y0, c.y1) {
                    out.push((C64::new(px, py), c.mass * wx * wy));
                }
            }
            out
        }
        Piece::Polar(c) => {
            let panels = ((c.t1 - c.t0) / 0.25).ceil().max(1.0) as usize;
            let h = (c.t1 - c.t0) / panels as f64;
            let mut out = Vec::new();
            for k in 0..panels {
                let ta = c.t0 + h * k as f64;
                for (t, wt) in gl(ta, ta + h) {
                    for &(r, wr) in &gl(c.r0, c.r1) {
                        out.push((C64::from_polar(r, t), c.mass * wr * wt / panels as f64));
                    }
                }
            }
            out
        }
        Piece::Curve(cp) => {
            let panels = 32;
            let h = (cp.r1 - cp.r0) / panels as f64;
            let mut out = Vec::new();
            let (x16, w16) = quad::gauss_legendre(16);
            for k in 0..panels {
                let a = cp.r0 + h * k as f64;
                for (xi, wi) in x16.iter().zip(w16) {
                    let r = a + 0.5 * h * (1.0 + xi);
                    out.push((cp.curve.point(r), 0.5 * h * wi * cp.curve.density(r)));
                }
            }
            let m: f64 = out.iter().map(|n| n.1).sum();
            let f = if m > 0.0 { cp.mass / m } else { 0.0 };
            out.into_iter().map(|(z, w)| (z, w * f)).collect()
        }
    }
}

/// Data for ∫ (log|ζ| + Re w(z, ζ)) dμ_l, the difference between the Green and Weierstrass kernels.
#[derive(Clone, Debug)]
struct WCorrection {
    log_mean: f64,
    /// ∫ η^k dμ, η = ζ − ξ₀.
    m: Vec<C64>,
    /// ∫ η η̄^k dμ.
    b: Vec<C64>,
}

/// Expansion order used for the Weierstrass correction.
const W_ORDER: usize = 16;

/// An atomized cell prepared for field evaluation.
#[derive(Clone, Debug)]
pub struct CellField {
    pub kernel: KernelMode,
    pub center: C64,
    pub reach: f64,
    pub p: u32,
    pub points: Vec<C64>,
    pub pieces: Vec<Piece>,
    multipole: Vec<C64>,
    wcorr: Option<WCorrection>,
}

impl CellField {
    /// `w_corrected` marks cells whose mass also sits in a Weierstrass-kernel base measure.
    pub fn new(cell: &AtomizedCell, kernel: KernelMode, w_corrected: bool) -> Self {
        let wcorr = w_corrected.then(|| {
            let mut m = vec![C64::new(0.0, 0.0); W_ORDER + 2];
            let mut b = vec![C64::new(0.0, 0.0); W_ORDER + 2];
            let mut log_mean = 0.0;
            for piece in &cell.pieces {
                for (zeta, w) in piece_nodes(piece) {
                    let eta = zeta - cell.center;
                    log_mean += w * zeta.norm().ln();
                    let mut pk = C64::new(w, 0.0);
                    let etab = eta.conj();
                    for k in 0..=W_ORDER + 1 {
                        b[k] += eta * pk;
                        pk *= etab;
                    }
                }
            }
            // m[k] holds ∫ η^k dμ; filled from the multipole data and the atoms
            for (k, slot) in m.iter_mut().enumerate() {
                let atoms: C64 = cell.points.iter().map(|z| (z - cell.center).powu(k as u32)).sum();
                *slot = if k <= MULTIPOLE_ORDER { cell.multipole[k] + atoms } else { moment_k(&cell.pieces, k, cell.center) };
            }
            WCorrection { log_mean, m, b }
        });
        Self {
            kernel,
            center: cell.center,
            reach: cell.reach,
            p: cell.p,
            points: cell.points.clone(),
            pieces: cell.pieces.clone(),
            multipole: cell.multipole.clone(),
            wcorr,
        }
    }

    pub fn is_w_corrected(&self) -> bool {
        self.wcorr.is_some()
    }

    /// Σ_j k(z, ξ_j).
    pub fn atom_sum(&self, z: C64) -> f64 {
        self.points.iter().map(|&x| kernel(self.kernel, z, x)).sum()
    }

    fn far_ok(&self, z: C64) -> bool {
        let dz = (z - self.center).norm();
        if dz <= 8.0 * self.reach {
            return false;
        }
        if self.kernel == KernelMode::GreenDisk {
            let a = (1.0 - z * self.center.conj()).norm();
            return z.norm() * self.reach * 8.0 < a;
        }
        true
    }

    /// Δ_l(z) = ∫ k dμ_l − Σ_j k(z, ξ_j).
    pub fn delta(&self, z: C64) -> f64 {
        if self.far_ok(z) {
            self.delta_far(z)
        } else {
            self.delta_near(z)
        }
    }

    pub fn delta_near(&self, z: C64) -> f64 {
        let u: f64 = self.pieces.iter().map(|p| piece_potential(p, self.kernel, z)).sum();
        u - self.atom_sum(z)
    }

    pub fn delta_far(&self, z: C64) -> f64 {
        let dz = z - self.center;
        let inv = 1.0 / dz;
        let mut pw = inv;
        let mut s = C64::new(0.0, 0.0);
        for k in 1..=MULTIPOLE_ORDER {
            s += self.multipole[k] * pw / k as f64;
            pw *= inv;
        }
        let mut v = self.multipole[0].re * dz.norm().ln() - s.re;
        if self.kernel == KernelMode::GreenDisk {
            let a = 1.0 - z * self.center.conj();
            let t = z / a;
            let mut tk = t;
            let mut g = C64::new(0.0, 0.0);
            for k in 1..=MULTIPOLE_ORDER {
                g += tk * self.multipole[k].conj() / k as f64;
                tk *= t;
            }
            v += g.re - self.multipole[0].re * a.norm().ln();
        }
        v
    }

    /// ∫ (log|ζ| + Re w(z, ζ)) dμ_l; zero for cells without a Weierstrass base.
    pub fn w_correction(&self, z: C64) -> f64 {
        let Some(wc) = &self.wcorr else {
            return 0.0;
        };
        let a = 1.0 - self.center.conj() * z;
        let t = z / a;
        if t.norm() * self.reach > 0.25 {
            return self
                .pieces
                .iter()
                .flat_map(piece_nodes)
                .map(|(zeta, w)| w * (zeta.norm().ln() + weierstrass_w(z, zeta).re))
                .sum();
        }
        let x0 = self.center;
        let base = 1.0 - x0.norm_sqr();
        let mut tk = C64::new(1.0, 0.0);
        let mut s = C64::new(0.0, 0.0);
        for k in 0..=W_ORDER {
            let coef = base * wc.m[k].conj() - x0 * wc.m[k + 1].conj() - x0.conj() * wc.b[k] - wc.b[k + 1];
            s += tk * coef;
            tk *= t;
        }
        wc.log_mean + (s / a).re
    }
}

fn moment_k(pieces: &[Piece], k: usize, c: C64) -> C64 {
    pieces.iter().map(|p| p.moments(k, c)[k]).sum()
}

/// Point where u − log|f| has a logarithmic singularity: ≈ strength·log|z − z₀|.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SingularPoint {
    pub z: C64,
    pub strength: f64,
}

/// Samples at which the error field is evaluated.
#[derive(Clone, Debug, PartialEq)]
pub enum SampleGrid {
    /// Ring edges (sample radii at midpoints) × `angles` equal sectors starting at angle 0.
    Polar { edges: Vec<f64>, angles: usize },
    /// Cell-centred Cartesian grid.
    Cartesian { x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize },
}

impl SampleGrid {
    pub fn len(&self) -> usize {
        match self {
            SampleGrid::Polar { edges, angles } => (edges.len() - 1) * angles,
            SampleGrid::Cartesian { nx, ny, .. } => nx * ny,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Vec<C64> {
        match self {
            SampleGrid::Polar { edges, angles } => {
                let mut out = Vec::with_capacity(self.len());
                for w in edges.windows(2) {
                    let r = 0.5 * (w[0] + w[1]);
                    for a in 0..*angles {
                        out.push(C64::from_polar(r, (a as f64 + 0.5) * TAU / *angles as f64));
                    }
                }
                out
            }
            SampleGrid::Cartesian { x0, x1, y0, y1, nx, ny } => {
                let dx = (x1 - x0) / *nx as f64;
                let dy = (y1 - y0) / *ny as f64;
                let mut out = Vec::with_capacity(nx * ny);
                for j in 0..*ny {
                    for i in 0..*nx {
                        out.push(C64::new(x0 + dx * (i as f64 + 0.5), y0 + dy * (j as f64 + 0.5)));
                    }
                }
                out
            }
        }
    }

    pub fn weights(&self) -> Vec<f64> {
        match self {
            SampleGrid::Polar { edges, angles } => {
                let mut out = Vec::with_capacity(self.len());
                for w in edges.windows(2) {
                    let area = PI * (w[1] * w[1] - w[0] * w[0]) / *angles as f64;
                    out.extend(std::iter::repeat(area).take(*angles));
                }
                out
            }
            SampleGrid::Cartesian { x0, x1, y0, y1, nx, ny } => vec![(x1 - x0) * (y1 - y0) / (*nx * *ny) as f64; nx * ny],
        }
    }

    /// Index of the sample cell containing z, if any.
    pub fn cell_index(&self, z: C64) -> Option<usize> {
        match self {
            SampleGrid::Polar { edges, angles } => {
                let r = z.norm();
                if r < edges[0] || r > *edges.last().unwrap() {
                    return None;
                }
                let ring = edges.partition_point(|&e| e <= r).saturating_sub(1).min(edges.len() - 2);
                let a = ((arg0(z) / TAU * *angles as f64) as usize).min(angles - 1);
                Some(ring * angles + a)
            }
            SampleGrid::Cartesian { x0, x1, y0, y1, nx, ny } => {
                if z.re < *x0 || z.re > *x1 || z.im < *y0 || z.im > *y1 {
                    return None;
                }
                let i = (((z.re - x0) / (x1 - x0) * *nx as f64) as usize).min(nx - 1);
                let j = (((z.im - y0) / (y1 - y0) * *ny as f64) as usize).min(ny - 1);
                Some(j * nx + i)
            }
        }
    }

    /// Twice the resolution in every direction.
    pub fn refined(&self) -> SampleGrid {
        match self {
            SampleGrid::Polar { edges, angles } => {
                let mut e = Vec::with_capacity(2 * edges.len());
                for w in edges.windows(2) {
                    e.push(w[0]);
                    e.push(0.5 * (w[0] + w[1]));
                }
                e.push(*edges.last().unwrap());
                SampleGrid::Polar { edges: e, angles: 2 * angles }
            }
            SampleGrid::Cartesian { x0, x1, y0, y1, nx, ny } => SampleGrid::Cartesian { x0: *x0, x1: *x1, y0: *y0, y1: *y1, nx: 2 * nx, ny: 2 * ny },
        }
    }
}

/// Decomposition of the error into cell terms and unmatched remainders.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FieldParts {
    /// Σ Δ_l over Green-kernel cells.
    pub v: Vec<f64>,
    /// Σ δ_l over planar cells.
    pub omega: Vec<f64>,
    /// Weierstrass remainder of the annular fractional mass.
    pub u2: Vec<f64>,
    /// Planar potential of the unmatched central or square mass.
    pub v2: Vec<f64>,
}

/// Sampled u − log|f|.
#[derive(Clone, Debug)]
pub struct ErrorField {
    pub grid: SampleGrid,
    pub points: Vec<C64>,
    pub weights: Vec<f64>,
    pub u: Vec<f64>,
    pub logf: Vec<f64>,
    /// u − log|f|; NaN at samples that hit an atom.
    pub error: Vec<f64>,
    pub parts: Option<FieldParts>,
    pub singular: Vec<SingularPoint>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct FieldSample {
    pub u: f64,
    pub logf: f64,
    pub error: f64,
    pub v: f64,
    pub omega: f64,
    pub u2: f64,
    pub v2: f64,
}

/// Everything needed to evaluate u and log|f|.
///
/// u is the potential of the base measure (each part with its kernel) plus, for every
/// Green-kernel cell, the switch from the Weierstrass to the Green kernel on μ_l.
/// log|f| is the sum over cell atoms and exact zeros.
#[derive(Clone, Debug, Default)]
pub struct FieldModel {
    pub grids: Vec<(PolarGrid, KernelMode)>,
    pub pieces: Vec<(Piece, KernelMode)>,
    /// Zeros that reproduce integer atoms of μ exactly; they cancel in u − log|f|.
    pub exact: Vec<(C64, u32, KernelMode)>,
    pub cells: Vec<CellField>,
    /// Evaluate each cell as Δ_l instead of subtracting its atoms from the base; the
    /// base then holds only mass outside the cells.
    pub cellwise: bool,
    /// Per grid, per ring: Some(mass) when the ring is rotation invariant.
    pub(crate) ring_summary: Vec<Vec<Option<f64>>>,
}

fn ring_summary(g: &PolarGrid) -> Vec<Option<f64>> {
    g.rings.iter().map(|r| ring_is_uniform(r).then(|| r.mass())).collect()
}

impl FieldModel {
    pub fn add_grid(&mut self, grid: PolarGrid, kernel: KernelMode) {
        self.ring_summary.push(ring_summary(&grid));
        self.grids.push((grid, kernel));
    }

    fn summary(&self, i: usize) -> std::borrow::Cow<'_, [Option<f64>]> {
        match self.ring_summary.get(i) {
            Some(s) if s.len() == self.grids[i].0.rings.len() => std::borrow::Cow::Borrowed(s.as_slice()),
            _ => std::borrow::Cow::Owned(ring_summary(&self.grids[i].0)),
        }
    }

    pub fn zero_count(&self) -> u64 {
        self.exact.iter().map(|e| e.1 as u64).sum::<u64>() + self.cells.iter().map(|c| c.points.len() as u64).sum::<u64>()
    }

    pub fn singular_points(&self) -> Vec<SingularPoint> {
        let mut pts: Vec<SingularPoint> = Vec::new();
        for (p, _) in &self.pieces {
            if let Piece::Atom(a) = p {
                pts.push(SingularPoint { z: a.z, strength: a.mass });
            }
        }
        for c in &self.cells {
            for &z in &c.points {
                pts.push(SingularPoint { z, strength: -1.0 });
            }
            if self.cellwise {
                for p in &c.pieces {
                    if let Piece::Atom(a) = p {
                        pts.push(SingularPoint { z: a.z, strength: a.mass });
                    }
                }
            }
        }
        pts.sort_by(|a, b| a.z.re.total_cmp(&b.z.re).then(a.z.im.total_cmp(&b.z.im)));
        let mut merged: Vec<SingularPoint> = Vec::new();
        for p in pts {
            match merged.last_mut() {
                Some(last) if (last.z - p.z).norm() <= 1e-12 => last.strength += p.strength,
                _ => merged.push(p),
            }
        }
        merged.retain(|p| p.strength.abs() > 1e-9);
        merged
    }

    fn base_split(&self, z: C64, grid_vals: Option<(f64, f64)>) -> (f64, f64) {
        let (mut w, mut p) = grid_vals.unwrap_or_else(|| {
            let mut w = 0.0;
            let mut p = 0.0;
            for (i, (g, k)) in self.grids.iter().enumerate() {
                let sum = self.summary(i);
                let v: f64 = g
                    .rings
                    .iter()
                    .zip(sum.iter())
                    .map(|(ring, m)| match m {
                        Some(m) => m * ring_average(*k, ring.r0, ring.r1, z.norm()),
                        None => ring_potential_at(ring, *k, z),
                    })
                    .sum();
                if *k == KernelMode::PlanarLog {
                    p += v;
                } else {
                    w += v;
                }
            }
            (w, p)
        });
        for (piece, k) in &self.pieces {
            let v = piece_potential(piece, *k, z);
            if *k == KernelMode::PlanarLog {
                p += v;
            } else {
                w += v;
            }
        }
        (w, p)
    }

    fn assemble(&self, z: C64, grid_vals: Option<(f64, f64)>, parts: bool) -> FieldSample {
        let (base_w, base_p) = self.base_split(z, grid_vals);
        let mut logf = 0.0;
        for &(a, m, k) in &self.exact {
            logf += m as f64 * kernel(k, z, a);
        }
        let mut err_w = base_w;
        let mut err_p = base_p;
        let (mut v, mut omega) = (0.0, 0.0);
        for c in &self.cells {
            let s = c.atom_sum(z);
            logf += s;
            if self.cellwise {
                let d = c.delta(z);
                if c.kernel == KernelMode::PlanarLog {
                    err_p += d;
                    omega += d;
                } else {
                    err_w += d;
                    v += d;
                }
                continue;
            }
            let q = c.w_correction(z);
            if c.kernel == KernelMode::PlanarLog {
                err_p -= s;
            } else {
                err_w -= s + q;
            }
            if parts {
                let d = c.delta(z);
                if c.kernel == KernelMode::PlanarLog {
                    omega += d;
                } else {
                    v += d;
                }
            }
        }
        let error = err_w + err_p;
        let (u2, v2) = if parts { (err_w - v, err_p - omega) } else { (f64::NAN, f64::NAN) };
        let nan_if = |x: f64| if parts { x } else { f64::NAN };
        let error = if error.is_finite() { error } else { f64::NAN };
        FieldSample { u: error + logf, logf, error, v: nan_if(v), omega: nan_if(omega), u2, v2 }
    }

    /// u, log|f| and the error at one point.
    pub fn eval(&self, z: C64, parts: bool) -> FieldSample {
        self.assemble(z, None, parts)
    }

    pub fn eval_many(&self, points: &[C64], parts: bool) -> Vec<FieldSample> {
        points.par_iter().map(|&z| self.assemble(z, None, parts)).collect()
    }

    fn grid_values_polar(&self, edges: &[f64], angles: usize) -> Vec<(f64, f64)> {
        let phase = 0.5 * TAU / angles as f64;
        let rings: Vec<Vec<(f64, f64)>> = edges
            .windows(2)
            .collect::<Vec<_>>()
            .par_iter()
            .map(|w| {
                let r = 0.5 * (w[0] + w[1]);
                let mut acc = vec![(0.0, 0.0); angles];
                for (i, (g, k)) in self.grids.iter().enumerate() {
                    let sum = self.summary(i);
                    let mut uniform = 0.0;
                    for (ring, m) in g.rings.iter().zip(sum.iter()) {
                        if let Some(m) = m {
                            uniform += m * ring_average(*k, ring.r0, ring.r1, r);
                            continue;
                        }
                        let vals = ring_potential_on_circle(ring, *k, r, angles, phase);
                        for (slot, v) in acc.iter_mut().zip(vals) {
                            if *k == KernelMode::PlanarLog {
                                slot.1 += v;
                            } else {
                                slot.0 += v;
                            }
                        }
                    }
                    for slot in acc.iter_mut() {
                        if *k == KernelMode::PlanarLog {
                            slot.1 += uniform;
                        } else {
                            slot.0 += uniform;
                        }
                    }
                }
                acc
            })
            .collect();
        rings.into_iter().flatten().collect()
    }

    /// Error field on a sample grid; `parts` also computes the cell-by-cell decomposition.
    pub fn error_field(&self, grid: &SampleGrid, parts: bool) -> ErrorField {
        let points = grid.points();
        let weights = grid.weights();
        let grid_vals: Option<Vec<(f64, f64)>> = match grid {
            SampleGrid::Polar { edges, angles } if !self.grids.is_empty() => Some(self.grid_values_polar(edges, *angles)),
            _ => None,
        };
        let samples: Vec<FieldSample> = points
            .par_iter()
            .enumerate()
            .map(|(i, &z)| self.assemble(z, grid_vals.as_ref().map(|g| g[i]), parts))
            .collect();
        let mut fp = FieldParts::default();
        if parts {
            fp.v = samples.iter().map(|s| s.v).collect();
            fp.omega = samples.iter().map(|s| s.omega).collect();
            fp.u2 = samples.iter().map(|s| s.u2).collect();
            fp.v2 = samples.iter().map(|s| s.v2).collect();
        }
        ErrorField {
            grid: grid.clone(),
            weights,
            u: samples.iter().map(|s| s.u).collect(),
            logf: samples.iter().map(|s| s.logf).collect(),
            error: samples.iter().map(|s| s.error).collect(),
            parts: parts.then_some(fp),
            singular: self.singular_points(),
            points,
        }
    }
}

/// ∫_{|z|<ρ} |log|z|| dm for ρ < 1.
fn log_disk_integral(rho: f64) -> f64 {
    PI * rho * rho * (0.5 - rho.ln())
}

impl ErrorField {
    /// Per-sample |value|·weight with singular cells replaced by their local integral.
    pub fn cell_integrals(&self, values: &[f64], singular: &[SingularPoint]) -> Vec<f64> {
        let mut out: Vec<f64> = values.iter().zip(&self.weights).map(|(v, w)| if v.is_finite() { v.abs() * w } else { 0.0 }).collect();
        let mut by_cell: std::collections::BTreeMap<usize, Vec<SingularPoint>> = Default::default();
        for s in singular {
            if let Some(i) = self.grid.cell_index(s.z) {
                by_cell.entry(i).or_default().push(*s);
            }
        }
        for (i, pts) in by_cell {
            let w = self.weights[i];
            let rho = (w / PI).sqrt().min(0.5);
            let zs = self.points[i];
            let mut reg = values[i];
            let mut strength = 0.0;
            for p in &pts {
                strength += p.strength.abs();
                reg -= p.strength * (zs - p.z).norm().ln();
            }
            let reg = if reg.is_finite() { reg.abs() } else { 0.0 };
            out[i] = strength * log_disk_integral(rho) * w / (PI * rho * rho) + w * reg;
        }
        out
    }

    /// ∫_{|z|<R} |u − log|f|| dm.
    pub fn l1_error_disk(&self, r: f64) -> f64 {
        self.l1_disk_of(&self.error, &self.singular, r)
    }

    /// ∫_{|z|<R} |values| dm with the given singular points.
    pub fn l1_disk_of(&self, values: &[f64], singular: &[SingularPoint], r: f64) -> f64 {
        let cells = self.cell_integrals(values, singular);
        let frac = self.disk_fractions(r);
        let terms: Vec<f64> = cells.iter().zip(&frac).map(|(c, f)| c * f).collect();
        quad::pairwise_sum(&terms)
    }

    /// ∫ over the whole grid.
    pub fn l1_total_of(&self, values: &[f64], singular: &[SingularPoint]) -> f64 {
        quad::pairwise_sum(&self.cell_integrals(values, singular))
    }

    fn disk_fractions(&self, r: f64) -> Vec<f64> {
        match &self.grid {
            SampleGrid::Polar { edges, angles } => {
                let mut out = Vec::with_capacity(self.points.len());
                for w in edges.windows(2) {
                    let f = if w[1] <= r {
                        1.0
                    } else if w[0] >= r {
                        0.0
                    } else {
                        (r * r - w[0] * w[0]) / (w[1] * w[1] - w[0] * w[0])
                    };
                    out.extend(std::iter::repeat(f).take(*angles));
                }
                out
            }
            SampleGrid::Cartesian { .. } => self.points.iter().map(|z| if z.norm() < r { 1.0 } else { 0.0 }).collect(),
        }
    }

    /// Cumulative ∫_{|z|<edge} |values| dm at every ring edge of a polar grid.
    pub fn cumulative_by_ring(&self, values: &[f64], singular: &[SingularPoint]) -> Vec<(f64, f64)> {
        let SampleGrid::Polar { edges, angles } = &self.grid else {
            return Vec::new();
        };
        let cells = self.cell_integrals(values, singular);
        let mut out = vec![(edges[0], 0.0)];
        let mut acc = 0.0;
        for (k, w) in edges.windows(2).enumerate() {
            acc += quad::pairwise_sum(&cells[k * angles..(k + 1) * angles]);
            out.push((w[1], acc));
        }
        out
    }
}

/// Annulus ranges relative to annulus m: inner Λ⁺ (n < m − buffer), near Λ⁰, outer Λ⁻ (n > m + buffer).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CellClasses {
    pub near: std::ops::Range<usize>,
    pub inner: std::ops::Range<usize>,
    pub outer: std::ops::Range<usize>,
}

pub fn classify_cells(depth: usize, m: usize, buffer: usize) -> CellClasses {
    let lo = m.saturating_sub(buffer);
    let hi = (m + buffer + 1).min(depth);
    CellClasses { inner: 0..lo, near: lo..hi.max(lo), outer: hi.max(lo)..depth }
}
