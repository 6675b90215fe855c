//! Balanced partition of a rectangle-supported measure by recursive bisection.

use crate::error::{Error, Result};
use crate::measure::{arg0, CurvePiece, Piece, PolarCell, RectCell};

/// Coordinates in which rectangles are axis-aligned.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    /// (x, y).
    Cartesian,
    /// (log r, θ); images of annular sectors.
    LogPolar,
    /// (r, θ); used for the central disk.
    Polar,
}

/// [a0, a1] × [b0, b1] in frame coordinates; axis 0 is `a`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FrameRect {
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
}

impl FrameRect {
    pub fn lo(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.a0
        } else {
            self.b0
        }
    }

    pub fn hi(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.a1
        } else {
            self.b1
        }
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.hi(axis) - self.lo(axis)
    }

    /// Longer side over shorter side (∞ for a degenerate rectangle).
    pub fn side_ratio(&self) -> f64 {
        let (x, y) = (self.side(0), self.side(1));
        x.max(y) / x.min(y)
    }

    fn with(&self, axis: usize, lo: f64, hi: f64) -> FrameRect {
        let mut r = *self;
        if axis == 0 {
            r.a0 = lo;
            r.a1 = hi;
        } else {
            r.b0 = lo;
            r.b1 = hi;
        }
        r
    }

    pub fn interiors_overlap(&self, o: &FrameRect) -> bool {
        self.a0.max(o.a0) < self.a1.min(o.a1) && self.b0.max(o.b0) < self.b1.min(o.b1)
    }

    pub fn contains_rect(&self, o: &FrameRect, tol: f64) -> bool {
        o.a0 >= self.a0 - tol && o.a1 <= self.a1 + tol && o.b0 >= self.b0 - tol && o.b1 <= self.b1 + tol
    }
}

#[derive(Clone, Debug)]
pub struct MassRectangle {
    pub rect: FrameRect,
    pub pieces: Vec<Piece>,
}

impl MassRectangle {
    pub fn mass(&self) -> f64 {
        self.pieces.iter().map(Piece::mass).sum()
    }
}

#[derive(Clone, Debug)]
pub struct PartitionLeaf {
    pub rect: FrameRect,
    pub pieces: Vec<Piece>,
    pub mass: f64,
    /// Set when some ancestor cut could not be placed in the middle third of the longer side.
    pub relaxed: bool,
    pub depth: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cut {
    pub axis: usize,
    pub coord: f64,
    pub left_mass: f64,
}

/// No integer-mass cut in the middle third; carries the cut nearest the middle.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoMiddleThirdCut {
    pub nearest: Cut,
}

enum Shape {
    Point(f64),
    Span(f64, f64),
}

fn unsupported(frame: Frame, p: &Piece) -> Error {
    Error::Unsupported(format!("partition: {frame:?} frame cannot cut piece {p:?}"))
}

fn radial_coord(frame: Frame, r: f64) -> f64 {
    if frame == Frame::LogPolar {
        r.ln()
    } else {
        r
    }
}

fn radius_of(frame: Frame, c: f64) -> f64 {
    if frame == Frame::LogPolar {
        c.exp()
    } else {
        c
    }
}

/// Angle of a curve piece, unwrapped from the argument of its inner end.
fn curve_angle(c: &CurvePiece, r: f64) -> f64 {
    arg0(c.curve.point(c.r0)) + c.curve.slope * (r - c.r0)
}

fn shape(p: &Piece, frame: Frame, axis: usize) -> Result<Shape> {
    Ok(match (frame, p) {
        (Frame::Cartesian, Piece::Atom(a)) => Shape::Point(if axis == 0 { a.z.re } else { a.z.im }),
        (Frame::Cartesian, Piece::Rect(c)) => {
            let (lo, hi) = if axis == 0 { (c.x0, c.x1) } else { (c.y0, c.y1) };
            if hi > lo {
                Shape::Span(lo, hi)
            } else {
                Shape::Point(lo)
            }
        }
        (Frame::LogPolar | Frame::Polar, Piece::Atom(a)) => {
            if axis == 0 {
                Shape::Point(radial_coord(frame, a.z.norm()))
            } else {
                Shape::Point(arg0(a.z))
            }
        }
        (Frame::LogPolar | Frame::Polar, Piece::Polar(c)) => {
            let (lo, hi) = if axis == 0 { (radial_coord(frame, c.r0), radial_coord(frame, c.r1)) } else { (c.t0, c.t1) };
            if hi > lo {
                Shape::Span(lo, hi)
            } else {
                Shape::Point(lo)
            }
        }
        (Frame::LogPolar | Frame::Polar, Piece::Curve(c)) => {
            if axis == 0 {
                Shape::Span(radial_coord(frame, c.r0), radial_coord(frame, c.r1))
            } else if c.curve.slope == 0.0 {
                Shape::Point(curve_angle(c, c.r0))
            } else {
                let (x, y) = (curve_angle(c, c.r0), curve_angle(c, c.r1));
                Shape::Span(x.min(y), x.max(y))
            }
        }
        _ => return Err(unsupported(frame, p)),
    })
}

/// Mass of a spanning piece with coordinate ≤ x.
fn span_cum(p: &Piece, frame: Frame, axis: usize, x: f64) -> f64 {
    match p {
        Piece::Rect(c) => {
            let (lo, hi) = if axis == 0 { (c.x0, c.x1) } else { (c.y0, c.y1) };
            c.mass * ((x.clamp(lo, hi) - lo) / (hi - lo))
        }
        Piece::Polar(c) => {
            if axis == 0 {
                let r = radius_of(frame, x).clamp(c.r0, c.r1);
                c.mass * (r - c.r0) / (c.r1 - c.r0)
            } else {
                c.mass * (x.clamp(c.t0, c.t1) - c.t0) / (c.t1 - c.t0)
            }
        }
        Piece::Curve(c) => {
            let frac = |a: f64, b: f64| if c.r1 > c.r0 { c.curve.mass_between(a, b) } else { 0.0 };
            let scale = if c.curve.mass_between(c.r0, c.r1) > 0.0 { c.mass / c.curve.mass_between(c.r0, c.r1) } else { 0.0 };
            if axis == 0 {
                scale * frac(c.r0, radius_of(frame, x).clamp(c.r0, c.r1))
            } else {
                let r = (c.r0 + (x - curve_angle(c, c.r0)) / c.curve.slope).clamp(c.r0, c.r1);
                if c.curve.slope > 0.0 {
                    scale * frac(c.r0, r)
                } else {
                    scale * frac(r, c.r1)
                }
            }
        }
        Piece::Atom(_) => unreachable!("atoms are points"),
    }
}

/// (part with coordinate ≤ x, part with coordinate ≥ x).
fn span_split(p: &Piece, frame: Frame, axis: usize, x: f64) -> (Option<Piece>, Option<Piece>) {
    let left_mass = span_cum(p, frame, axis, x);
    let right_mass = p.mass() - left_mass;
    let keep = |q: Piece, m: f64| (m > 0.0).then_some(q);
    match p {
        Piece::Rect(c) => {
            let (l, r) = if axis == 0 {
                (RectCell { x1: x, mass: left_mass, ..*c }, RectCell { x0: x, mass: right_mass, ..*c })
            } else {
                (RectCell { y1: x, mass: left_mass, ..*c }, RectCell { y0: x, mass: right_mass, ..*c })
            };
            (keep(Piece::Rect(l), left_mass), keep(Piece::Rect(r), right_mass))
        }
        Piece::Polar(c) => {
            let (l, r) = if axis == 0 {
                let rr = radius_of(frame, x).clamp(c.r0, c.r1);
                (PolarCell { r1: rr, mass: left_mass, ..*c }, PolarCell { r0: rr, mass: right_mass, ..*c })
            } else {
                (PolarCell { t1: x, mass: left_mass, ..*c }, PolarCell { t0: x, mass: right_mass, ..*c })
            };
            (keep(Piece::Polar(l), left_mass), keep(Piece::Polar(r), right_mass))
        }
        Piece::Curve(c) => {
            let rr = if axis == 0 {
                radius_of(frame, x).clamp(c.r0, c.r1)
            } else {
                (c.r0 + (x - curve_angle(c, c.r0)) / c.curve.slope).clamp(c.r0, c.r1)
            };
            let inner = CurvePiece { curve: c.curve.clone(), r0: c.r0, r1: rr, mass: 0.0 };
            let outer = CurvePiece { curve: c.curve.clone(), r0: rr, r1: c.r1, mass: 0.0 };
            let (l, r) = if axis == 1 && c.curve.slope < 0.0 { (outer, inner) } else { (inner, outer) };
            (
                keep(Piece::Curve(CurvePiece { mass: left_mass, ..l }), left_mass),
                keep(Piece::Curve(CurvePiece { mass: right_mass, ..r }), right_mass),
            )
        }
        Piece::Atom(_) => unreachable!("atoms are points"),
    }
}

struct Marginal<'a> {
    frame: Frame,
    axis: usize,
    points: Vec<(f64, f64, usize)>,
    spans: Vec<(f64, f64, &'a Piece)>,
    breaks: Vec<f64>,
}

impl<'a> Marginal<'a> {
    fn new(pieces: &'a [Piece], frame: Frame, axis: usize, lo: f64, hi: f64) -> Result<Self> {
        let mut points = Vec::new();
        let mut spans = Vec::new();
        for (i, p) in pieces.iter().enumerate() {
            match shape(p, frame, axis)? {
                Shape::Point(x) => points.push((x, p.mass(), i)),
                Shape::Span(a, b) => spans.push((a, b, p)),
            }
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.2.cmp(&b.2)));
        let mut breaks: Vec<f64> = vec![lo];
        breaks.extend(points.iter().map(|p| p.0.clamp(lo, hi)));
        breaks.push(hi);
        breaks.dedup();
        Ok(Self { frame, axis, points, spans, breaks })
    }

    fn cont(&self, x: f64) -> f64 {
        self.spans
            .iter()
            .map(|&(a, b, p)| if x <= a { 0.0 } else if x >= b { p.mass() } else { span_cum(p, self.frame, self.axis, x) })
            .sum()
    }

    fn atoms_upto(&self, x: f64, strict: bool) -> f64 {
        self.points.iter().filter(|p| if strict { p.0 < x } else { p.0 <= x }).map(|p| p.1).sum()
    }

    /// inf{x : F(x) ≥ v} (or > v when `strict`), F right-continuous.
    fn first_reach(&self, v: f64, strict: bool) -> f64 {
        let hit = |f: f64| if strict { f > v } else { f >= v };
        let mut prev: Option<f64> = None;
        for &beta in &self.breaks {
            let c = self.cont(beta);
            let at = c + self.atoms_upto(beta, false);
            if hit(at) {
                let before = c + self.atoms_upto(beta, true);
                if let (true, Some(p)) = (hit(before), prev) {
                    let base = self.atoms_upto(p, false);
                    let (mut lo, mut hi) = (p, beta);
                    for _ in 0..200 {
                        let mid = 0.5 * (lo + hi);
                        if mid <= lo || mid >= hi {
                            break;
                        }
                        if hit(self.cont(mid) + base) {
                            hi = mid;
                        } else {
                            lo = mid;
                        }
                    }
                    return hi;
                }
                return beta;
            }
            prev = Some(beta);
        }
        *self.breaks.last().unwrap()
    }
}

fn targets(mass: f64, quantum: u32) -> Vec<f64> {
    let q = quantum as f64;
    let tol = 1e-9 * mass.max(1.0);
    let k = ((mass + tol) / q).floor() as i64;
    let mut rem = mass - k as f64 * q;
    if rem.abs() < tol {
        rem = 0.0;
    }
    let mut out = Vec::new();
    for j in 1..=k {
        out.push(j as f64 * q);
    }
    if rem > 0.0 {
        for j in 0..k {
            out.push(j as f64 * q + rem);
        }
    }
    out.retain(|&t| t > tol && t < mass - tol);
    out.sort_by(f64::total_cmp);
    out
}

/// Cut with integer (multiple-of-quantum) marginal mass nearest the middle of `axis`.
pub fn find_cut_quantum(pi: &MassRectangle, frame: Frame, axis: usize, quantum: u32) -> Result<std::result::Result<Cut, NoMiddleThirdCut>> {
    let mass = pi.mass();
    let (lo, hi) = (pi.rect.lo(axis), pi.rect.hi(axis));
    let marg = Marginal::new(&pi.pieces, frame, axis, lo, hi)?;
    let mid = 0.5 * (lo + hi);
    let tol = 1e-11 * mass.max(1.0);
    let mut best: Option<Cut> = None;
    for t in targets(mass, quantum) {
        let x_lo = marg.first_reach(t - tol, false);
        let x_hi = marg.first_reach(t + tol, true).max(x_lo);
        // the tolerant window locates the cut; an edge snaps back to the exact crossing
        let x = if mid <= x_lo {
            marg.first_reach(t, false).clamp(x_lo, x_hi)
        } else if mid >= x_hi {
            marg.first_reach(t, true).clamp(x_lo, x_hi)
        } else {
            mid
        };
        let better = match best {
            None => true,
            Some(b) => (x - mid).abs() < (b.coord - mid).abs(),
        };
        if better {
            best = Some(Cut { axis, coord: x, left_mass: t });
        }
    }
    let Some(cut) = best else {
        return Err(Error::NonIntegerMass { mass, quantum });
    };
    let third = (hi - lo) / 3.0;
    let eps = 1e-12 * (hi - lo);
    if cut.coord >= lo + third - eps && cut.coord <= hi - third + eps {
        Ok(Ok(cut))
    } else {
        Ok(Err(NoMiddleThirdCut { nearest: cut }))
    }
}

/// Unit-mass cut on `axis`.
pub fn find_cut(pi: &MassRectangle, frame: Frame, axis: usize) -> Result<std::result::Result<Cut, NoMiddleThirdCut>> {
    find_cut_quantum(pi, frame, axis, 1)
}

fn apply_cut(pieces: &[Piece], frame: Frame, cut: &Cut) -> Result<(Vec<Piece>, Vec<Piece>)> {
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut on_line = Vec::new();
    let x = cut.coord;
    for p in pieces {
        match shape(p, frame, cut.axis)? {
            Shape::Point(c) if c < x => left.push(p.clone()),
            Shape::Point(c) if c > x => right.push(p.clone()),
            Shape::Point(_) => on_line.push(p),
            Shape::Span(a, b) => {
                if b <= x {
                    left.push(p.clone());
                } else if a >= x {
                    right.push(p.clone());
                } else {
                    let (l, r) = span_split(p, frame, cut.axis, x);
                    left.extend(l);
                    right.extend(r);
                }
            }
        }
    }
    let mut need = cut.left_mass - left.iter().map(Piece::mass).sum::<f64>();
    for p in on_line {
        let m = p.mass();
        let take = need.clamp(0.0, m);
        if take >= m {
            left.push(p.clone());
        } else if take <= 0.0 {
            right.push(p.clone());
        } else {
            left.push(p.scaled(take / m));
            right.push(p.scaled(1.0 - take / m));
        }
        need -= take;
    }
    Ok((left, right))
}

#[allow(clippy::too_many_arguments)]
fn recurse(rect: FrameRect, pieces: Vec<Piece>, mass: f64, frame: Frame, quantum: u32, depth: u32, relaxed: bool, out: &mut Vec<PartitionLeaf>) -> Result<()> {
    if pieces.is_empty() || mass <= 1e-12 {
        return Ok(());
    }
    if mass <= quantum as f64 + 1e-9 * mass.max(1.0) {
        let actual = pieces.iter().map(Piece::mass).sum();
        out.push(PartitionLeaf { rect, pieces, mass: actual, relaxed, depth });
        return Ok(());
    }
    let long = if rect.side(0) >= rect.side(1) { 0 } else { 1 };
    let pi = MassRectangle { rect, pieces };
    let (cut, flag) = match find_cut_quantum(&pi, frame, long, quantum)? {
        Ok(c) => (c, false),
        Err(long_fail) => match find_cut_quantum(&pi, frame, 1 - long, quantum)? {
            Ok(c) => (c, true),
            Err(_) => (long_fail.nearest, true),
        },
    };
    let (left, right) = apply_cut(&pi.pieces, frame, &cut)?;
    let (lo, hi) = (rect.lo(cut.axis), rect.hi(cut.axis));
    recurse(rect.with(cut.axis, lo, cut.coord), left, cut.left_mass, frame, quantum, depth + 1, relaxed || flag, out)?;
    recurse(rect.with(cut.axis, cut.coord, hi), right, mass - cut.left_mass, frame, quantum, depth + 1, relaxed || flag, out)
}

/// Leaves of mass `quantum` (plus at most one lighter leaf holding the remainder).
pub fn partition_quantum(pi: &MassRectangle, frame: Frame, quantum: u32) -> Result<Vec<PartitionLeaf>> {
    let mut out = Vec::new();
    let pieces: Vec<Piece> = pi.pieces.iter().filter(|p| p.mass() > 0.0).cloned().collect();
    let mass = pieces.iter().map(Piece::mass).sum();
    recurse(pi.rect, pieces, mass, frame, quantum, 0, false, &mut out)?;
    Ok(out)
}

/// Unit-mass leaves; the rectangle mass must be an integer.
pub fn balanced_partition(pi: &MassRectangle, frame: Frame) -> Result<Vec<PartitionLeaf>> {
    let mass = pi.mass();
    if (mass - mass.round()).abs() > 1e-9 * mass.max(1.0) {
        return Err(Error::NonIntegerMass { mass, quantum: 1 });
    }
    partition_quantum(pi, frame, 1)
}

/// Aspect-ratio guard max(l₀, 3).
pub fn aspect_guard(l0: f64) -> f64 {
    l0.max(3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{Atom, C64};

    fn unit() -> FrameRect {
        FrameRect { a0: 0.0, a1: 1.0, b0: 0.0, b1: 1.0 }
    }

    fn square(mass: f64) -> Piece {
        Piece::Rect(RectCell { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0, mass })
    }

    #[test]
    fn uniform_mass_four_first_cut_bisects() {
        let pi = MassRectangle { rect: unit(), pieces: vec![square(4.0)] };
        let cut = find_cut(&pi, Frame::Cartesian, 0).unwrap().unwrap();
        assert!((cut.coord - 0.5).abs() < 1e-12 && (cut.left_mass - 2.0).abs() < 1e-12);
        let leaves = balanced_partition(&pi, Frame::Cartesian).unwrap();
        assert_eq!(leaves.len(), 4);
        for l in &leaves {
            assert!((l.mass - 1.0).abs() < 1e-12);
            assert!(!l.relaxed);
            assert!((l.rect.side(0) - 0.5).abs() < 1e-12 && (l.rect.side(1) - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_mass_is_a_single_leaf() {
        let pi = MassRectangle { rect: unit(), pieces: vec![square(1.0)] };
        let leaves = balanced_partition(&pi, Frame::Cartesian).unwrap();
        assert_eq!(leaves.len(), 1);
        assert_eq!(leaves[0].rect, unit());
        assert_eq!(leaves[0].pieces, vec![square(1.0)]);
    }

    #[test]
    fn two_atoms_split_at_middle() {
        let a = Piece::Atom(Atom { z: C64::new(0.1, 0.5), mass: 1.0 });
        let b = Piece::Atom(Atom { z: C64::new(0.9, 0.5), mass: 1.0 });
        let pi = MassRectangle { rect: unit(), pieces: vec![a.clone(), b.clone()] };
        let cut = find_cut(&pi, Frame::Cartesian, 0).unwrap().unwrap();
        assert_eq!(cut.coord, 0.5);
        let leaves = balanced_partition(&pi, Frame::Cartesian).unwrap();
        assert_eq!(leaves.len(), 2);
        assert_eq!(leaves[0].pieces, vec![a]);
        assert_eq!(leaves[1].pieces, vec![b]);
    }

    #[test]
    fn linear_density_has_no_middle_third_cut() {
        // density 4x on [0,1]² (mass 2): cumulative 2x² reaches 1 at √½
        let n = 4096;
        let pieces: Vec<Piece> = (0..n)
            .map(|i| {
                let x0 = i as f64 / n as f64;
                let x1 = (i + 1) as f64 / n as f64;
                Piece::Rect(RectCell { x0, x1, y0: 0.0, y1: 1.0, mass: 2.0 * (x1 * x1 - x0 * x0) })
            })
            .collect();
        let pi = MassRectangle { rect: unit(), pieces };
        let err = find_cut(&pi, Frame::Cartesian, 0).unwrap().unwrap_err();
        assert!((err.nearest.coord - 0.5f64.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn heavy_atom_is_split_in_half() {
        let pi = MassRectangle { rect: unit(), pieces: vec![Piece::Atom(Atom { z: C64::new(0.5, 0.5), mass: 2.0 })] };
        let leaves = balanced_partition(&pi, Frame::Cartesian).unwrap();
        assert_eq!(leaves.len(), 2);
        for l in &leaves {
            assert!((l.mass - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn non_integer_mass_rejected() {
        let pi = MassRectangle { rect: unit(), pieces: vec![square(2.5)] };
        assert!(matches!(balanced_partition(&pi, Frame::Cartesian), Err(Error::NonIntegerMass { .. })));
    }

    #[test]
    fn quantum_partition_leaves_remainder() {
        let pi = MassRectangle { rect: unit(), pieces: vec![square(7.0)] };
        let leaves = partition_quantum(&pi, Frame::Cartesian, 3).unwrap();
        let mut masses: Vec<f64> = leaves.iter().map(|l| (l.mass * 1e9).round() / 1e9).collect();
        masses.sort_by(f64::total_cmp);
        assert_eq!(masses, vec![1.0, 3.0, 3.0]);
    }

    #[test]
    fn log_polar_cell_partition() {
        let cell = PolarCell { r0: 0.9, r1: 0.91, t0: 0.0, t1: 0.011, mass: 4.0 };
        let rect = FrameRect { a0: 0.9f64.ln(), a1: 0.91f64.ln(), b0: 0.0, b1: 0.011 };
        let leaves = partition_quantum(&MassRectangle { rect, pieces: vec![Piece::Polar(cell)] }, Frame::LogPolar, 2).unwrap();
        assert_eq!(leaves.len(), 2);
        for l in &leaves {
            assert!((l.mass - 2.0).abs() < 1e-12);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn unit_atoms() -> impl Strategy<Value = Vec<(f64, f64)>> {
            proptest::collection::vec((0.001..0.999f64, 0.001..0.999f64), 1..=8)
        }

        proptest! {
            #[test]
            fn each_leaf_holds_one_unit_atom(pts in unit_atoms()) {
                let pieces: Vec<Piece> = pts.iter().map(|&(x, y)| Piece::Atom(Atom { z: C64::new(x, y), mass: 1.0 })).collect();
                let leaves = balanced_partition(&MassRectangle { rect: unit(), pieces }, Frame::Cartesian).unwrap();
                prop_assert_eq!(leaves.len(), pts.len());
                for l in &leaves {
                    prop_assert_eq!(l.pieces.len(), 1);
                    prop_assert!((l.pieces[0].mass() - 1.0).abs() < 1e-12);
                }
            }
        }
    }
}
