//! End-to-end constructions: the annular disk scheme, the planar square and curve partitions.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;

use crate::atomize::{AtomSet, AtomizedCell, Source};
use crate::diskgrid::{build_scheme, central_split, split_cell_measure, AnnularScheme, CellId};
use crate::error::{Error, Result};
use crate::measure::{annular_sector_diameter, arg0, Atom, CurveProfile, DiskMeasure, GridRing, MassLaw, Piece, PolarGrid, RectCell, Region, C64};
use crate::partition::{partition_quantum, Frame, FrameRect, MassRectangle, PartitionLeaf};
use crate::potential::{CellField, FieldModel, FieldSample, KernelMode, SampleGrid};
use crate::slowvar::{b_from_order, build_curve_cells, radii_sequence, CurveCell, ProximateOrder, ScaleFunction};

/// One partition leaf, kept for reporting.
#[derive(Clone, Debug, PartialEq)]
pub struct LeafRecord {
    pub source: Source,
    pub frame: Frame,
    pub rect: FrameRect,
    pub mass: f64,
    pub relaxed: bool,
    pub depth: u32,
}

fn leaf_diameter(frame: Frame, r: &FrameRect) -> f64 {
    match frame {
        Frame::LogPolar => annular_sector_diameter(r.a0.exp(), r.a1.exp(), r.b1 - r.b0),
        Frame::Polar => annular_sector_diameter(r.a0, r.a1, r.b1 - r.b0),
        Frame::Cartesian => (r.a1 - r.a0).hypot(r.b1 - r.b0),
    }
}

fn atomize_leaves<F>(leaves: Vec<PartitionLeaf>, frame: Frame, source: F) -> Result<(Vec<AtomizedCell>, Vec<LeafRecord>)>
where
    F: Fn(u32) -> Source,
{
    let mut cells = Vec::with_capacity(leaves.len());
    let mut records = Vec::with_capacity(leaves.len());
    for (i, leaf) in leaves.into_iter().enumerate() {
        let src = source(i as u32);
        let p = leaf.mass.round() as u32;
        records.push(LeafRecord { source: src, frame, rect: leaf.rect, mass: leaf.mass, relaxed: leaf.relaxed, depth: leaf.depth });
        if p == 0 {
            continue;
        }
        let d = leaf_diameter(frame, &leaf.rect);
        cells.push(AtomizedCell::new(leaf.pieces, p, d, src)?);
    }
    Ok((cells, records))
}

// ---------------------------------------------------------------- disk mode

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiskParams {
    pub q: f64,
    pub depth: usize,
    /// Atoms per partition leaf.
    pub p: u32,
    /// Also assemble the field model (skipped by pure atomization runs).
    pub build_model: bool,
}

impl Default for DiskParams {
    fn default() -> Self {
        Self { q: 0.99, depth: 100, p: 2, build_model: true }
    }
}

#[derive(Clone, Debug)]
pub struct DiskRun {
    pub scheme: AnnularScheme,
    /// Every zero of f: heavy atoms, central and annular cells.
    pub atoms: AtomSet,
    pub cells: Vec<AtomizedCell>,
    pub leaves: Vec<LeafRecord>,
    /// Annular μ⁽²⁾, left as the Weierstrass remainder.
    pub fractional: DiskMeasure,
    pub fractional_by_annulus: Vec<f64>,
    /// Central mass outside ρ₀ (not atomized).
    pub central_rest: DiskMeasure,
    pub rho0: f64,
    pub central_n: u32,
    /// Measure actually approximated (restricted to |ζ| ≤ R_N).
    pub measure: DiskMeasure,
    pub model: Option<FieldModel>,
}

/// (|ζ| < r, r ≤ |ζ| ≤ r_max); mass beyond r_max is dropped.
fn split_radius(mu: &DiskMeasure, r: f64, r_max: f64) -> (DiskMeasure, DiskMeasure) {
    let mut inner = Vec::new();
    let mut outer = Vec::new();
    let disk = Region::ClosedDisk { center: C64::new(0.0, 0.0), radius: r };
    let ann = Region::Annulus { r_lo: r, r_hi: r_max };
    for p in &mu.pieces {
        match p {
            Piece::Atom(a) => {
                let m = a.z.norm();
                if m < r {
                    inner.push(p.clone());
                } else if m <= r_max {
                    outer.push(p.clone());
                }
            }
            _ => {
                inner.extend(p.restrict(&disk));
                outer.extend(p.restrict(&ann));
            }
        }
    }
    let gi: Vec<PolarGrid> = mu.grids.iter().map(|g| g.clip(0.0, r)).filter(|g| !g.rings.is_empty()).collect();
    let go: Vec<PolarGrid> = mu.grids.iter().map(|g| g.clip(r, r_max)).filter(|g| !g.rings.is_empty()).collect();
    (DiskMeasure::new(inner, gi), DiskMeasure::new(outer, go))
}

fn aligned_annulus(scheme: &AnnularScheme, ring: &GridRing) -> Option<usize> {
    let n = scheme.annulus_of(0.5 * (ring.r0 + ring.r1))?;
    let ok = (ring.r0 - scheme.radii[n]).abs() <= 1e-12 && (ring.r1 - scheme.radii[n + 1]).abs() <= 1e-12 && ring.masses.len() == scheme.sectors[n] as usize;
    ok.then_some(n)
}

fn annulus_clamped(scheme: &AnnularScheme, r: f64) -> Option<usize> {
    let last = scheme.depth() - 1;
    if r < scheme.radii[0] - 1e-15 || r > scheme.radii[scheme.depth()] + 1e-15 {
        return None;
    }
    Some(scheme.annulus_of(r).unwrap_or(if r < scheme.radii[1] { 0 } else { last }))
}

fn sector_of(scheme: &AnnularScheme, n: usize, t: f64) -> usize {
    ((t / scheme.sector_width(n)) as usize).min(scheme.sectors[n] as usize - 1)
}

/// Cells whose closure a non-atomic piece may meet, with the restricted pieces.
fn bucket_piece(scheme: &AnnularScheme, piece: &Piece, out: &mut BTreeMap<(u32, u32), Vec<Piece>>) {
    let (rlo, rhi, angles) = match piece {
        Piece::Polar(c) => (c.r0, c.r1, Some((c.t0, c.t1))),
        _ => {
            let (c, rho) = piece.bounding_disk();
            let m = c.norm();
            let ang = (rho < m).then(|| {
                let h = (rho / m).asin();
                (arg0(c) - h, arg0(c) + h)
            });
            ((m - rho).max(0.0), m + rho, ang)
        }
    };
    let n_lo = annulus_clamped(scheme, rlo.max(scheme.radii[0])).unwrap_or(0);
    let n_hi = annulus_clamped(scheme, rhi.min(scheme.radii[scheme.depth()])).unwrap_or(scheme.depth() - 1);
    for n in n_lo..=n_hi {
        let mn = scheme.sectors[n] as usize;
        let w = scheme.sector_width(n);
        let ms: Vec<usize> = match angles {
            Some((a, b)) if b - a < TAU => {
                let k0 = (a / w).floor() as i64;
                let k1 = (b / w).ceil() as i64;
                let mut v: Vec<usize> = (k0..k1).map(|k| k.rem_euclid(mn as i64) as usize).collect();
                v.sort_unstable();
                v.dedup();
                v
            }
            _ => (0..mn).collect(),
        };
        for m in ms {
            let region = scheme.cell_region(CellId { n: n as u32, m: m as u32 });
            for r in piece.restrict(&region) {
                if r.mass() > 0.0 {
                    out.entry((n as u32, m as u32)).or_default().push(r);
                }
            }
        }
    }
}

struct CellOutcome {
    cells: Vec<AtomizedCell>,
    leaves: Vec<LeafRecord>,
    fractional: Vec<Piece>,
}

fn process_annular_cell(scheme: &AnnularScheme, n: usize, m: usize, pieces: Vec<Piece>, p: u32) -> Result<CellOutcome> {
    let mass: f64 = pieces.iter().map(Piece::mass).sum();
    if mass < 2.0 {
        return Ok(CellOutcome { cells: Vec::new(), leaves: Vec::new(), fractional: pieces });
    }
    let (even, rest) = split_cell_measure(&pieces);
    let lr = scheme.log_rect(CellId { n: n as u32, m: m as u32 });
    let rect = FrameRect { a0: lr.sigma_lo, a1: lr.sigma_hi, b0: lr.t_lo, b1: lr.t_hi };
    let leaves = partition_quantum(&MassRectangle { rect, pieces: even }, Frame::LogPolar, p)?;
    let (cells, records) = atomize_leaves(leaves, Frame::LogPolar, |leaf| Source::Annular { n: n as u32, m: m as u32, leaf })?;
    Ok(CellOutcome { cells, leaves: records, fractional: rest })
}

/// Runs the annular construction on μ restricted to |ζ| ≤ R_N.
pub fn run_disk(mu: &DiskMeasure, params: &DiskParams) -> Result<DiskRun> {
    if !(1..=crate::atomize::MAX_P).contains(&params.p) {
        return Err(Error::Config(format!("p = {} outside 1..={}", params.p, crate::atomize::MAX_P)));
    }
    let scheme = build_scheme(params.q, params.depth)?;
    let r_max = scheme.radii[scheme.depth()];
    let (central, annular) = split_radius(mu, 0.5, r_max);
    let measure = central.clone().combine(annular.clone());
    let (heavy_c, central_light) = central.extract_heavy_atoms();
    let (heavy_a, annular_light) = annular.extract_heavy_atoms();

    // central part: μ¹ inside ρ₀ partitioned in (r, θ)
    let split = central_split(&central_light);
    let mut cells = Vec::new();
    let mut leaves = Vec::new();
    if split.n_even > 0 {
        let rect = FrameRect { a0: 0.0, a1: split.rho0.max(1e-300), b0: 0.0, b1: TAU };
        let pl = partition_quantum(&MassRectangle { rect, pieces: split.inner.all_pieces() }, Frame::Polar, params.p)?;
        let (c, l) = atomize_leaves(pl, Frame::Polar, |leaf| Source::Central { leaf })?;
        cells.extend(c);
        leaves.extend(l);
    }
    let n_central_cells = cells.len();

    // annular cells
    let mut buckets: BTreeMap<(u32, u32), Vec<Piece>> = BTreeMap::new();
    for p in &annular_light.pieces {
        match p {
            Piece::Atom(a) => {
                let Some(n) = annulus_clamped(&scheme, a.z.norm()) else { continue };
                let m = sector_of(&scheme, n, arg0(a.z));
                buckets.entry((n as u32, m as u32)).or_default().push(p.clone());
            }
            _ => bucket_piece(&scheme, p, &mut buckets),
        }
    }
    let loose_annuli: std::collections::BTreeSet<u32> = buckets.keys().map(|k| k.0).collect();
    let mut frac_rings: Vec<GridRing> = Vec::new();
    let mut fractional_pieces: Vec<Piece> = Vec::new();
    for g in &annular_light.grids {
        for ring in &g.rings {
            if let Some(n) = aligned_annulus(&scheme, ring) {
                let heavy = ring.masses.iter().any(|&m| m >= 2.0);
                if !heavy && !loose_annuli.contains(&(n as u32)) {
                    frac_rings.push(ring.clone());
                    continue;
                }
                for (m, &mass) in ring.masses.iter().enumerate() {
                    if mass > 0.0 {
                        buckets.entry((n as u32, m as u32)).or_default().push(Piece::Polar(ring.cell(m)));
                    }
                }
            } else {
                let single = PolarGrid { rings: vec![ring.clone()] };
                for cell in single.cells().filter(|c| c.mass > 0.0) {
                    bucket_piece(&scheme, &Piece::Polar(cell), &mut buckets);
                }
            }
        }
    }
    let work: Vec<((u32, u32), Vec<Piece>)> = buckets.into_iter().collect();
    let outcomes: Vec<Result<CellOutcome>> = work
        .into_par_iter()
        .map(|((n, m), pieces)| process_annular_cell(&scheme, n as usize, m as usize, pieces, params.p))
        .collect();
    for o in outcomes {
        let o = o?;
        cells.extend(o.cells);
        leaves.extend(o.leaves);
        fractional_pieces.extend(o.fractional);
    }

    let mut fractional_by_annulus = vec![0.0; scheme.depth()];
    for ring in &frac_rings {
        if let Some(n) = scheme.annulus_of(0.5 * (ring.r0 + ring.r1)) {
            fractional_by_annulus[n] += ring.mass();
        }
    }
    for p in &fractional_pieces {
        if let Some(n) = annulus_clamped(&scheme, p.anchor().norm()) {
            fractional_by_annulus[n] += p.mass();
        }
    }
    let frac_grids = if frac_rings.is_empty() { Vec::new() } else { vec![PolarGrid { rings: frac_rings }] };
    let fractional = DiskMeasure::new(fractional_pieces, frac_grids);

    let mut atoms = AtomSet::default();
    atoms.extend(heavy_c.clone());
    atoms.extend(heavy_a.clone());
    for c in &cells {
        atoms.push_cell(c);
    }

    let model = params.build_model.then(|| {
        let mut model = FieldModel::default();
        for z in &heavy_c.zeros {
            model.exact.push((z.z, z.multiplicity, KernelMode::PlanarLog));
        }
        for z in &heavy_a.zeros {
            model.exact.push((z.z, z.multiplicity, KernelMode::Weierstrass));
        }
        for g in &central_light.grids {
            model.add_grid(g.clone(), KernelMode::PlanarLog);
        }
        model.pieces.extend(central_light.pieces.iter().map(|p| (p.clone(), KernelMode::PlanarLog)));
        for g in &annular_light.grids {
            model.add_grid(g.clone(), KernelMode::Weierstrass);
        }
        model.pieces.extend(annular_light.pieces.iter().map(|p| (p.clone(), KernelMode::Weierstrass)));
        model.cells = cells
            .par_iter()
            .enumerate()
            .map(|(i, c)| if i < n_central_cells { CellField::new(c, KernelMode::PlanarLog, false) } else { CellField::new(c, KernelMode::GreenDisk, true) })
            .collect();
        model
    });

    Ok(DiskRun {
        scheme,
        atoms,
        cells,
        leaves,
        fractional,
        fractional_by_annulus,
        central_rest: split.outer,
        rho0: split.rho0,
        central_n: split.n_even,
        measure,
        model,
    })
}

/// Rotation-invariant measure with counting function `count` (mass in the closed disk of
/// radius r). With `central = Some((rings, angles))` the atom count(0) sits at the origin
/// and [0, 1/2] is covered by equal rings; annulus n always gets one ring of M_n cells.
pub fn radial_measure<F: Fn(f64) -> f64>(count: F, scheme: &AnnularScheme, central: Option<(usize, usize)>) -> DiskMeasure {
    let mut pieces = Vec::new();
    let mut rings = Vec::new();
    if let Some((k, a)) = central {
        let m0 = count(0.0);
        if m0 > 0.0 {
            pieces.push(Piece::Atom(Atom { z: C64::new(0.0, 0.0), mass: m0 }));
        }
        let mut prev = m0;
        for j in 0..k {
            let (r0, r1) = (0.5 * j as f64 / k as f64, 0.5 * (j + 1) as f64 / k as f64);
            let c = count(r1);
            rings.push(GridRing { r0, r1, masses: vec![(c - prev).max(0.0) / a as f64; a] });
            prev = c;
        }
    }
    for n in 0..scheme.depth() {
        let (r0, r1) = (scheme.radii[n], scheme.radii[n + 1]);
        let mn = scheme.sectors[n] as usize;
        let mass = (count(r1) - count(r0)).max(0.0);
        rings.push(GridRing { r0, r1, masses: vec![mass / mn as f64; mn] });
    }
    DiskMeasure::new(pieces, vec![PolarGrid { rings }])
}

/// n(r) = 1/(1 − r).
pub fn theorem1_measure(scheme: &AnnularScheme) -> DiskMeasure {
    radial_measure(|r| 1.0 / (1.0 - r), scheme, Some((32, 1)))
}

/// Annular-only density n(r) = Δ/(1 − r): every cell carries mass ≈ 2Δ(1−q)²/(4πq).
pub fn stress_measure(delta: f64, scheme: &AnnularScheme) -> DiskMeasure {
    radial_measure(|r| delta / (1.0 - r), scheme, None)
}

/// Polar samples: `central_bins` rings on [0, 1/2], `per_annulus` rings per annulus.
pub fn disk_sample_grid(scheme: &AnnularScheme, central_bins: usize, per_annulus: usize, angles: usize) -> SampleGrid {
    let mut edges: Vec<f64> = (0..central_bins).map(|k| 0.5 * k as f64 / central_bins as f64).collect();
    for n in 0..scheme.depth() {
        let (a, b) = (scheme.radii[n], scheme.radii[n + 1]);
        for j in 0..per_annulus {
            edges.push(a + (b - a) * j as f64 / per_annulus as f64);
        }
    }
    edges.push(scheme.radii[scheme.depth()]);
    SampleGrid::Polar { edges, angles }
}

/// Edge index of R_n in a grid built by [`disk_sample_grid`].
pub fn annulus_edge_index(central_bins: usize, per_annulus: usize, n: usize) -> usize {
    central_bins + n * per_annulus
}

// ---------------------------------------------------------------- square mode

/// Half side of the square 𝒬 = [−h, h]².
pub const SQUARE_HALF: f64 = 0.5;

#[derive(Clone, Debug)]
pub struct SquareRun {
    pub atoms: AtomSet,
    pub cells: Vec<AtomizedCell>,
    pub leaves: Vec<LeafRecord>,
    pub model: FieldModel,
}

fn inside_square(p: &Piece) -> bool {
    let h = SQUARE_HALF + 1e-12;
    match p {
        Piece::Atom(a) => a.z.re.abs() <= h && a.z.im.abs() <= h,
        Piece::Rect(c) => c.x0 >= -h && c.x1 <= h && c.y0 >= -h && c.y1 <= h,
        _ => false,
    }
}

/// Planar construction on 𝒬: heavy atoms become exact zeros, the rest is cut into mass-p leaves.
pub fn run_square(mu: &DiskMeasure, p: u32) -> Result<SquareRun> {
    if !mu.grids.is_empty() || !mu.pieces.iter().all(inside_square) {
        return Err(Error::Precondition("square mode needs atoms or rectangles inside [-1/2, 1/2]²".into()));
    }
    let (heavy, rest) = mu.extract_heavy_atoms();
    let mass = rest.mass();
    if (mass - mass.round()).abs() > 1e-9 * mass.max(1.0) {
        return Err(Error::NonIntegerMass { mass, quantum: 1 });
    }
    let rect = FrameRect { a0: -SQUARE_HALF, a1: SQUARE_HALF, b0: -SQUARE_HALF, b1: SQUARE_HALF };
    let pl = partition_quantum(&MassRectangle { rect, pieces: rest.pieces.clone() }, Frame::Cartesian, p)?;
    let (cells, leaves) = atomize_leaves(pl, Frame::Cartesian, |leaf| Source::Square { leaf })?;
    let mut atoms = heavy.clone();
    for c in &cells {
        atoms.push_cell(c);
    }
    let model = FieldModel {
        exact: heavy.zeros.iter().map(|z| (z.z, z.multiplicity, KernelMode::PlanarLog)).collect(),
        cells: cells.iter().map(|c| CellField::new(c, KernelMode::PlanarLog, false)).collect(),
        cellwise: true,
        ..Default::default()
    };
    Ok(SquareRun { atoms, cells, leaves, model })
}

/// Cartesian samples on Ξ = [−1, 1]².
pub fn square_sample_grid(n: usize) -> SampleGrid {
    SampleGrid::Cartesian { x0: -1.0, x1: 1.0, y0: -1.0, y1: 1.0, nx: n, ny: n }
}

/// Random mixture of atoms, rectangles and segments in 𝒬 with total mass `mass`.
pub fn random_square_measure<R: Rng>(mass: u32, rng: &mut R) -> DiskMeasure {
    let h = SQUARE_HALF;
    let parts = rng.gen_range(2..=8);
    let mut raw = Vec::with_capacity(parts);
    for _ in 0..parts {
        let w: f64 = rng.gen_range(0.2..1.0);
        let piece = match rng.gen_range(0..3) {
            0 => Piece::Atom(Atom { z: C64::new(rng.gen_range(-h..h), rng.gen_range(-h..h)), mass: w }),
            1 => {
                let (a, b) = (rng.gen_range(-h..h), rng.gen_range(-h..h));
                let (c, d) = (rng.gen_range(-h..h), rng.gen_range(-h..h));
                Piece::Rect(RectCell { x0: a.min(b), x1: a.max(b), y0: c.min(d), y1: c.max(d), mass: w })
            }
            _ => {
                let (a, b) = (rng.gen_range(-h..h), rng.gen_range(-h..h));
                let y = rng.gen_range(-h..h);
                if rng.gen_bool(0.5) {
                    Piece::Rect(RectCell { x0: a.min(b), x1: a.max(b), y0: y, y1: y, mass: w })
                } else {
                    Piece::Rect(RectCell { x0: y, x1: y, y0: a.min(b), y1: a.max(b), mass: w })
                }
            }
        };
        raw.push(piece);
    }
    let total: f64 = raw.iter().map(Piece::mass).sum();
    let mut pieces: Vec<Piece> = raw.iter().map(|p| p.scaled(mass as f64 / total)).collect();
    // absorb the rounding error so the mass is exactly integral
    let now: f64 = pieces.iter().map(Piece::mass).sum();
    let last = pieces.pop().unwrap();
    let fixed = last.scaled((last.mass() + mass as f64 - now) / last.mass());
    pieces.push(fixed);
    DiskMeasure::new(pieces, Vec::new())
}

// ---------------------------------------------------------------- curve mode

#[derive(Clone, Debug, PartialEq)]
pub struct CurveParams {
    pub sigma: f64,
    pub delta: f64,
    /// Angular band constant K.
    pub k: f64,
    pub n_max: usize,
    pub p: u32,
    pub eps: f64,
    pub theta0: f64,
    pub slope: f64,
}

impl Default for CurveParams {
    fn default() -> Self {
        Self { sigma: 1.0, delta: 1.0, k: 0.5, n_max: 200, p: 2, eps: 0.5, theta0: 0.0, slope: 0.0 }
    }
}

#[derive(Clone, Debug)]
pub struct CurveRun {
    pub params: CurveParams,
    pub order: ProximateOrder,
    pub b: ScaleFunction,
    /// r_1..r_{n_max+1}.
    pub radii: Vec<f64>,
    pub curve: Arc<CurveProfile>,
    pub measure: DiskMeasure,
    pub cells: Vec<CurveCell>,
    pub atomized: Vec<AtomizedCell>,
    pub atoms: AtomSet,
    pub model: FieldModel,
}

/// Curve measure dM = Δ·dW(1/(1−r)) on [r_1, r_{n_max+1}], cut at the radii r_n.
pub fn run_curve(params: &CurveParams) -> Result<CurveRun> {
    if params.p != 2 {
        return Err(Error::Config(format!("curve mode builds cells of mass 2, got p = {}", params.p)));
    }
    if params.n_max == 0 {
        return Err(Error::Config("n_max must be positive".into()));
    }
    let order = ProximateOrder::constant(params.sigma);
    let radii = radii_sequence(params.delta, &order, params.n_max + 1)?;
    let curve = Arc::new(CurveProfile {
        theta0: params.theta0,
        slope: params.slope,
        r_lo: radii[0],
        r_hi: radii[params.n_max],
        law: MassLaw::Proximate { delta: params.delta, order: order.clone() },
    });
    let cells = build_curve_cells(curve.clone(), &order, params.delta, params.k, params.n_max)?;
    let atomized: Vec<AtomizedCell> = cells
        .par_iter()
        .map(|c| AtomizedCell::new(vec![Piece::Curve(c.piece.clone())], params.p, c.diameter(), Source::Curve { n: c.n as u32 }))
        .collect::<Result<_>>()?;
    let mut atoms = AtomSet::default();
    for c in &atomized {
        atoms.push_cell(c);
    }
    let model = FieldModel {
        cells: atomized.iter().map(|c| CellField::new(c, KernelMode::PlanarLog, false)).collect(),
        cellwise: true,
        ..Default::default()
    };
    let measure = DiskMeasure::new(vec![Piece::Curve(crate::measure::CurvePiece::new(curve.clone(), radii[0], radii[params.n_max]))], Vec::new());
    Ok(CurveRun { params: params.clone(), b: b_from_order(&order), order, radii, curve, measure, cells, atomized, atoms, model })
}

/// Band offsets (in units of the cell step) used around the curve.
const BAND: [f64; 13] = [0.0, 0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0, 8.0];

/// Sample points: per annulus, radial samples × (global angles + offsets around θ(r)).
/// `refine` doubles every resolution that many times.
pub fn curve_sample_points(run: &CurveRun, refine: u32) -> Vec<C64> {
    let f = 1usize << refine;
    let radial = 4 * f;
    let global = 128 * f;
    let mut offsets: Vec<f64> = BAND.to_vec();
    for _ in 0..refine {
        let mut next = Vec::with_capacity(2 * offsets.len());
        for w in offsets.windows(2) {
            next.push(w[0]);
            next.push(0.5 * (w[0] + w[1]));
        }
        next.push(*offsets.last().unwrap());
        offsets = next;
    }
    let mut signed: Vec<f64> = offsets.iter().flat_map(|&s| if s == 0.0 { vec![0.0] } else { vec![s, -s] }).collect();
    signed.sort_by(f64::total_cmp);
    let mut out = Vec::new();
    for w in run.radii.windows(2) {
        let h = w[1] - w[0];
        for i in 0..radial {
            let r = w[0] + h * (i as f64 + 0.5) / radial as f64;
            for a in 0..global {
                out.push(C64::from_polar(r, (a as f64 + 0.5) * TAU / global as f64));
            }
            let th = run.curve.theta(r);
            for &s in &signed {
                out.push(C64::from_polar(r, th + s * h / r));
            }
        }
    }
    out
}

/// (T(r, u), T(r, log|f|)) by trapezoid means from 1024 angles, doubled until both move < `rel`.
pub fn paired_t(model: &FieldModel, r: f64, rel: f64) -> (f64, f64) {
    let means = |n: usize| {
        let pts: Vec<C64> = (0..n).map(|k| C64::from_polar(r, TAU * (k as f64 + 0.25) / n as f64)).collect();
        let s: Vec<FieldSample> = model.eval_many(&pts, false);
        let plus = |f: &dyn Fn(&FieldSample) -> f64| s.iter().map(f).filter(|v| v.is_finite()).map(|v| v.max(0.0)).sum::<f64>() / n as f64;
        (plus(&|x| x.u), plus(&|x| x.logf))
    };
    let mut n = 1024;
    let mut prev = means(n);
    while n < 1 << 15 {
        n *= 2;
        let next = means(n);
        let close = |a: f64, b: f64| (a - b).abs() <= rel * b.abs().max(1e-9);
        let done = close(prev.0, next.0) && close(prev.1, next.1);
        prev = next;
        if done {
            break;
        }
    }
    prev
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn disk_grid_edges_hit_scheme_radii() {
        let s = build_scheme(0.99, 10).unwrap();
        let SampleGrid::Polar { edges, .. } = disk_sample_grid(&s, 24, 2, 8) else { unreachable!() };
        for n in 0..=10 {
            assert_eq!(edges[annulus_edge_index(24, 2, n)], s.radii[n]);
        }
    }

    #[test]
    fn theorem1_measure_counts() {
        let s = build_scheme(0.99, 20).unwrap();
        let mu = theorem1_measure(&s);
        let n = |r: f64| mu.total_mass(&Region::ClosedDisk { center: C64::new(0.0, 0.0), radius: r });
        for r in [0.0, 0.5, s.radii[7], s.radii[20]] {
            assert!((n(r) - 1.0 / (1.0 - r)).abs() < 1e-9, "{r}");
        }
    }

    #[test]
    fn theorem1_run_has_only_the_origin_zero() {
        let run = run_disk(&theorem1_measure(&build_scheme(0.99, 30).unwrap()), &DiskParams { depth: 30, ..Default::default() }).unwrap();
        assert_eq!(run.atoms.count(), 1);
        assert_eq!(run.central_n, 0);
        assert!(run.cells.is_empty());
        let total: f64 = run.fractional_by_annulus.iter().sum();
        assert!((total - (1.0 / (1.0 - run.scheme.radii[30]) - 2.0)).abs() < 1e-9);
    }

    #[test]
    fn stress_cells_atomize_with_two_points() {
        let s = build_scheme(0.99, 4).unwrap();
        let mu = stress_measure(1.6e5, &s);
        let run = run_disk(&mu, &DiskParams { depth: 4, build_model: false, ..Default::default() }).unwrap();
        let expected: usize = (0..4).map(|n| s.sectors[n] as usize).sum();
        // cells near R_0 carry mass ≈ 5, the rest ≈ 2.6
        assert!(run.cells.len() >= expected);
        for c in &run.cells {
            assert_eq!(c.points.len(), 2);
            assert!(c.ratio <= 1.0 && c.residual < 1e-8);
        }
        let frac: f64 = run.fractional_by_annulus.iter().sum();
        assert!((frac + 2.0 * run.cells.len() as f64 - mu.mass()).abs() < 1e-6 * mu.mass());
        assert!(frac < 2.0 * expected as f64);
    }

    #[test]
    fn atoms_in_cells_are_reproduced() {
        // two unit atoms per cell in annulus 3 → the zeros are the atoms themselves
        let s = build_scheme(0.99, 6).unwrap();
        let w = s.sector_width(3);
        let r = 0.5 * (s.radii[3] + s.radii[4]);
        let mut atoms = Vec::new();
        for m in [0usize, 5, 17] {
            for f in [0.3, 0.7] {
                atoms.push(Atom { z: C64::from_polar(r, w * (m as f64 + f)), mass: 1.0 });
            }
        }
        let run = run_disk(&DiskMeasure::atoms(&atoms), &DiskParams { depth: 6, ..Default::default() }).unwrap();
        assert_eq!(run.atoms.count(), 6);
        for a in &atoms {
            assert!(run.atoms.flat().iter().any(|z| (z - a.z).norm() < 1e-9));
        }
        let model = run.model.unwrap();
        let e = model.eval(C64::new(0.1, 0.2), false).error;
        assert!(e.abs() < 1e-9, "{e}");
    }

    #[test]
    fn square_leaf_count_equals_mass() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [4u32, 16] {
            let mu = random_square_measure(n, &mut rng);
            assert!((mu.mass() - n as f64).abs() < 1e-12);
            let run = run_square(&mu, 2).unwrap();
            assert_eq!(run.atoms.count(), n as u64);
        }
    }

    #[test]
    fn curve_run_counts() {
        let run = run_curve(&CurveParams { n_max: 20, ..Default::default() }).unwrap();
        assert_eq!(run.atoms.count(), 40);
        for (n, r) in run.radii.iter().enumerate() {
            assert!((r - (1.0 - 1.0 / (2.0 * (n + 1) as f64))).abs() < 1e-12);
        }
        let pts = curve_sample_points(&run, 0);
        assert_eq!(pts.len(), 20 * 4 * (128 + 25));
    }
}
