//! Config-driven runs: build the construction, sample the error, write and reload artifacts.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::atomize::{k1, AtomSet, AtomizedCell, Source};
use crate::characteristics::{median, RadialProfile};
use crate::config::{Mode, RunConfig};
use crate::error::{Error, Result};
use crate::io::{self, LeafRow};
use crate::measure::{Region, C64};
use crate::pipeline::{
    annulus_edge_index, curve_sample_points, disk_sample_grid, paired_t, run_curve, run_disk, run_square, square_sample_grid, CurveRun, DiskParams, DiskRun,
    SquareRun,
};
use crate::potential::{CellField, FieldModel, SampleGrid};
use crate::slowvar::{sup_error_outside, zero_localization_check};
use crate::verify::{Check, Cmp, CriterionReport};

#[derive(Clone, Debug)]
pub enum Construction {
    Disk(Box<DiskRun>),
    Square(SquareRun),
    Curve(Box<CurveRun>),
}

/// Sampled error field and where it came from.
#[derive(Clone, Debug)]
pub struct Sampled {
    pub points: Vec<C64>,
    pub u: Vec<f64>,
    pub logf: Vec<f64>,
    pub error: Vec<f64>,
    /// ∫|u − log|f|| over the sampled region (disk and square grids).
    pub integral: Option<f64>,
    /// I(R_n), n = 0..=N, on disk grids.
    pub cumulative: Vec<f64>,
    pub profile: Option<RadialProfile>,
    pub edges: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub mode: Mode,
    pub seed: u64,
    pub q: f64,
    pub p: u32,
    pub depth: usize,
    pub measure_mass: f64,
    pub zeros: u64,
    pub cells: usize,
    pub leaves: usize,
    pub relaxed_leaves: usize,
    pub max_moment_residual: f64,
    pub max_displacement_ratio: f64,
    pub samples: usize,
    pub error_integral: Option<f64>,
    pub max_abs_error: f64,
    pub one_sided_max: f64,
    pub exceptional_c: Option<f64>,
    pub exceptional_density: Option<f64>,
    pub files: Vec<String>,
}

impl Construction {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        Ok(match cfg.mode {
            Mode::DiskTheorem1 => {
                let mu = cfg.build_measure()?;
                Construction::Disk(Box::new(run_disk(&mu, &DiskParams { q: cfg.q, depth: cfg.depth, p: cfg.p, build_model: true })?))
            }
            Mode::SquareProposition => Construction::Square(run_square(&cfg.build_measure()?, cfg.p)?),
            Mode::CurveTheorem2 => Construction::Curve(Box::new(run_curve(&cfg.curve_params().expect("validated curve measure"))?)),
        })
    }

    pub fn atoms(&self) -> &AtomSet {
        match self {
            Construction::Disk(r) => &r.atoms,
            Construction::Square(r) => &r.atoms,
            Construction::Curve(r) => &r.atoms,
        }
    }

    pub fn cells(&self) -> &[AtomizedCell] {
        match self {
            Construction::Disk(r) => &r.cells,
            Construction::Square(r) => &r.cells,
            Construction::Curve(r) => &r.atomized,
        }
    }

    pub fn model(&self) -> &FieldModel {
        match self {
            Construction::Disk(r) => r.model.as_ref().expect("disk runs are built with a model"),
            Construction::Square(r) => &r.model,
            Construction::Curve(r) => &r.model,
        }
    }

    fn parts_mut(&mut self) -> (&mut AtomSet, &mut Vec<AtomizedCell>, &mut FieldModel) {
        match self {
            Construction::Disk(r) => (&mut r.atoms, &mut r.cells, r.model.as_mut().expect("model")),
            Construction::Square(r) => (&mut r.atoms, &mut r.cells, &mut r.model),
            Construction::Curve(r) => (&mut r.atoms, &mut r.atomized, &mut r.model),
        }
    }

    pub fn leaf_rows(&self) -> Vec<LeafRow> {
        match self {
            Construction::Disk(r) => r.leaves.iter().map(LeafRow::from).collect(),
            Construction::Square(r) => r.leaves.iter().map(LeafRow::from).collect(),
            Construction::Curve(r) => r
                .cells
                .iter()
                .map(|c| LeafRow {
                    source: "curve".into(),
                    n: c.n as i64,
                    m: -1,
                    leaf: 0,
                    frame: "polar".into(),
                    a0: c.r0,
                    a1: c.r1,
                    b0: c.phi_lo,
                    b1: c.phi_hi,
                    mass: c.mass(),
                    relaxed: false,
                    depth: 0,
                })
                .collect(),
        }
    }

    /// Replaces the zeros with a reloaded set; cells are matched by source.
    pub fn replace_atoms(&mut self, atoms: &AtomSet) -> Result<()> {
        let (own_atoms, cells, model) = self.parts_mut();
        let mut by_source: BTreeMap<Source, Vec<C64>> = BTreeMap::new();
        let mut exact = Vec::new();
        for z in &atoms.zeros {
            match z.source {
                Source::Heavy | Source::Input => exact.push(*z),
                s => by_source.entry(s).or_default().extend(std::iter::repeat(z.z).take(z.multiplicity as usize)),
            }
        }
        if exact.len() != model.exact.len() {
            return Err(Error::Precondition(format!("reloaded atoms carry {} exact zeros, the construction has {}", exact.len(), model.exact.len())));
        }
        for (slot, z) in model.exact.iter_mut().zip(&exact) {
            slot.0 = z.z;
            slot.1 = z.multiplicity;
        }
        if by_source.len() != cells.len() {
            return Err(Error::Precondition(format!("reloaded atoms cover {} cells, the construction has {}", by_source.len(), cells.len())));
        }
        for (i, cell) in cells.iter_mut().enumerate() {
            let pts = by_source.remove(&cell.source).ok_or_else(|| Error::Precondition(format!("no reloaded atoms for cell {:?}", cell.source)))?;
            *cell = AtomizedCell::with_points(cell.pieces.clone(), cell.p, cell.diameter, cell.source, pts)?;
            let old = &model.cells[i];
            model.cells[i] = CellField::new(cell, old.kernel, old.is_w_corrected());
        }
        *own_atoms = atoms.clone();
        Ok(())
    }

    /// The configured sample set with the error evaluated on it.
    pub fn sample(&self, cfg: &RunConfig) -> Sampled {
        let res = &cfg.resolution;
        match self {
            Construction::Disk(run) => {
                let grid = disk_sample_grid(&run.scheme, res.central_bins, res.per_annulus, res.angles);
                let field = self.model().error_field(&grid, false);
                let cum = field.cumulative_by_ring(&field.error, &field.singular);
                let cumulative = (0..=run.scheme.depth()).map(|n| cum[annulus_edge_index(res.central_bins, res.per_annulus, n)].1).collect();
                let riesz = run.measure.clone();
                let profile = RadialProfile::from_field(&field, |r| riesz.total_mass(&Region::ClosedDisk { center: C64::new(0.0, 0.0), radius: r }));
                let SampleGrid::Polar { edges, .. } = &field.grid else { unreachable!("polar grid") };
                Sampled {
                    integral: Some(field.l1_total_of(&field.error, &field.singular)),
                    cumulative,
                    profile: Some(profile),
                    edges: edges.clone(),
                    points: field.points,
                    u: field.u,
                    logf: field.logf,
                    error: field.error,
                }
            }
            Construction::Square(run) => {
                let field = run.model.error_field(&square_sample_grid(res.square), false);
                Sampled {
                    integral: Some(field.l1_total_of(&field.error, &field.singular)),
                    cumulative: Vec::new(),
                    profile: None,
                    edges: Vec::new(),
                    points: field.points,
                    u: field.u,
                    logf: field.logf,
                    error: field.error,
                }
            }
            Construction::Curve(run) => {
                let points = curve_sample_points(run, res.curve_refine);
                let s = run.model.eval_many(&points, false);
                let mut profile = RadialProfile::default();
                for w in run.radii.windows(2) {
                    let r = 0.5 * (w[0] + w[1]);
                    let (tu, tl) = paired_t(&run.model, r, 5e-3);
                    profile.radii.push(r);
                    profile.t_u.push(tu);
                    profile.t_logf.push(tl);
                    profile.n.push(run.measure.total_mass(&Region::ClosedDisk { center: C64::new(0.0, 0.0), radius: r }));
                }
                let k = profile.radii.len();
                profile.circle_l1 = vec![f64::NAN; k];
                profile.bound = vec![f64::NAN; k];
                profile.in_e = vec![false; k];
                Sampled {
                    u: s.iter().map(|x| x.u).collect(),
                    logf: s.iter().map(|x| x.logf).collect(),
                    error: s.iter().map(|x| x.error).collect(),
                    points,
                    integral: None,
                    cumulative: Vec::new(),
                    profile: Some(profile),
                    edges: run.radii.clone(),
                }
            }
        }
    }

    /// Error on an n×n grid over [−1, 1]², NaN outside the construction's domain.
    pub fn heatmap(&self, n: usize) -> Vec<f64> {
        let pts = square_sample_grid(n).points();
        let inside: Box<dyn Fn(C64) -> bool + Sync> = match self {
            Construction::Disk(r) => {
                let rmax = r.scheme.radii[r.scheme.depth()];
                Box::new(move |z: C64| z.norm() < rmax)
            }
            Construction::Square(_) => Box::new(|_| true),
            Construction::Curve(_) => Box::new(|z: C64| z.norm() < 1.0),
        };
        let kept: Vec<C64> = pts.iter().copied().filter(|&z| inside(z)).collect();
        let vals = self.model().eval_many(&kept, false);
        let mut it = vals.iter();
        pts.iter().map(|&z| if inside(z) { it.next().expect("one value per kept point").error } else { f64::NAN }).collect()
    }
}

/// Builds, samples and writes every artifact to `out`.
pub fn approximate(cfg: &RunConfig, out: &Path) -> Result<Summary> {
    let c = Construction::build(cfg)?;
    write_artifacts(cfg, &c, out)
}

pub fn write_artifacts(cfg: &RunConfig, c: &Construction, out: &Path) -> Result<Summary> {
    std::fs::create_dir_all(out)?;
    let mut files = Vec::new();
    let mut file = |name: &str| {
        files.push(name.to_string());
        out.join(name)
    };
    let leaves = c.leaf_rows();
    let sampled = c.sample(cfg);

    if let Construction::Disk(run) = c {
        io::write_scheme(&file(io::SCHEME_CSV), &run.scheme)?;
    }
    io::write_leaves(&file(io::LEAVES_CSV), &leaves)?;
    io::write_atoms(&file(io::ATOMS_CSV), c.atoms())?;
    io::write_field(&file(io::FIELD_CSV), &sampled.points, &sampled.u, &sampled.logf, &sampled.error)?;
    let n = cfg.resolution.square;
    let heat = c.heatmap(n);
    io::write_heatmap(&file(io::HEATMAP_CSV), &file(io::HEATMAP_PGM), n, &heat)?;

    let mut exceptional = (None, None);
    if let Some(mut profile) = sampled.profile.clone() {
        if let Construction::Disk(run) = c {
            let scaled: Vec<f64> = profile.radii.iter().zip(&profile.circle_l1).map(|(r, l)| (1.0 - r) * l).collect();
            let cst = 2.0 * median(&scaled);
            let d = run.scheme.depth();
            let set = profile.mark_exceptional(&sampled.edges, cst, &run.scheme.radii[d / 2..=d]);
            exceptional = (Some(cst), Some(set.density));
        }
        io::write_csv(&file(io::PROFILE_CSV), &profile_rows(&profile))?;
    }
    match c {
        Construction::Disk(run) => io::write_csv(&file(io::ANNULI_CSV), &disk_annuli(run, &sampled))?,
        Construction::Curve(run) => io::write_csv(&file(io::ANNULI_CSV), &curve_annuli(run, &sampled))?,
        Construction::Square(_) => {}
    }

    let cells = c.cells();
    let one_sided = sampled.error.iter().filter(|e| e.is_finite()).map(|e| -e).fold(f64::NEG_INFINITY, f64::max);
    files.push(io::SUMMARY_JSON.into());
    let summary = Summary {
        mode: cfg.mode,
        seed: cfg.seed,
        q: cfg.q,
        p: cfg.p,
        depth: cfg.depth,
        measure_mass: match c {
            Construction::Disk(r) => r.measure.mass(),
            Construction::Square(r) => r.atoms.count() as f64,
            Construction::Curve(r) => r.measure.mass(),
        },
        zeros: c.atoms().count(),
        cells: cells.len(),
        leaves: leaves.len(),
        relaxed_leaves: leaves.iter().filter(|l| l.relaxed).count(),
        max_moment_residual: cells.iter().map(|c| c.residual).fold(0.0, f64::max),
        max_displacement_ratio: cells.iter().map(|c| c.ratio).fold(0.0, f64::max),
        samples: sampled.points.len(),
        error_integral: sampled.integral,
        max_abs_error: sampled.error.iter().filter(|e| e.is_finite()).map(|e| e.abs()).fold(0.0, f64::max),
        one_sided_max: one_sided,
        exceptional_c: exceptional.0,
        exceptional_density: exceptional.1,
        files,
    };
    io::write_json(&out.join(io::SUMMARY_JSON), &summary)?;
    Ok(summary)
}

#[derive(Serialize)]
struct ProfileRow {
    r: f64,
    t_u: f64,
    t_logf: f64,
    circle_l1: f64,
    n: f64,
    bound: f64,
    in_e: bool,
}

fn profile_rows(p: &RadialProfile) -> Vec<ProfileRow> {
    (0..p.radii.len())
        .map(|k| ProfileRow { r: p.radii[k], t_u: p.t_u[k], t_logf: p.t_logf[k], circle_l1: p.circle_l1[k], n: p.n[k], bound: p.bound[k], in_e: p.in_e[k] })
        .collect()
}

#[derive(Serialize)]
struct DiskAnnulusRow {
    n: usize,
    r_lo: f64,
    r_hi: f64,
    sectors: u32,
    cells: usize,
    fractional_mass: f64,
    /// ∫_{|z|≤R_{n+1}} |u − log|f|| dm.
    cumulative_error: f64,
}

fn disk_annuli(run: &DiskRun, s: &Sampled) -> Vec<DiskAnnulusRow> {
    let mut counts = vec![0usize; run.scheme.depth()];
    for c in &run.cells {
        if let Source::Annular { n, .. } = c.source {
            counts[n as usize] += 1;
        }
    }
    (0..run.scheme.depth())
        .map(|n| DiskAnnulusRow {
            n,
            r_lo: run.scheme.radii[n],
            r_hi: run.scheme.radii[n + 1],
            sectors: run.scheme.sectors[n],
            cells: counts[n],
            fractional_mass: run.fractional_by_annulus[n],
            cumulative_error: s.cumulative[n + 1],
        })
        .collect()
}

#[derive(Serialize)]
struct CurveAnnulusRow {
    n: usize,
    r_lo: f64,
    r_hi: f64,
    b: f64,
    /// sup |u − log|f|| over samples outside E_ε (NaN if none).
    sup_error: f64,
}

fn curve_annuli(run: &CurveRun, s: &Sampled) -> Vec<CurveAnnulusRow> {
    let rep = sup_error_outside(&s.points, &s.error, &run.atoms.flat(), run.params.eps, &run.b, &run.radii);
    rep.per_annulus
        .iter()
        .enumerate()
        .map(|(k, v)| CurveAnnulusRow { n: k + 1, r_lo: run.radii[k], r_hi: run.radii[k + 1], b: run.b.eval(run.radii[k]), sup_error: v.unwrap_or(f64::NAN) })
        .collect()
}

/// Rebuilds the construction from `cfg` with the zeros stored in `out`.
pub fn reload(cfg: &RunConfig, out: &Path) -> Result<Construction> {
    let atoms = io::read_atoms(&out.join(io::ATOMS_CSV))?;
    let mut c = Construction::build(cfg)?;
    c.replace_atoms(&atoms)?;
    Ok(c)
}

/// Checks a stored run: moment identity and displacement bound per cell, localization for curves.
pub fn check_artifacts(cfg: &RunConfig, out: &Path) -> Result<Vec<CriterionReport>> {
    let c = reload(cfg, out)?;
    let cells = c.cells();
    let residual = cells.iter().map(|c| c.residual).fold(0.0, f64::max);
    let ratio = cells.iter().map(|c| c.ratio).fold(0.0, f64::max);
    let bound = if cfg.p == 2 { 1.0 } else { k1(cfg.p) };
    let info = vec![format!("{} cells reloaded from {}", cells.len(), out.join(io::ATOMS_CSV).display())];
    let mut reports = vec![
        CriterionReport {
            id: 1,
            title: "moment-matching identity".into(),
            checks: vec![Check::new("max residual/(p d^k)", residual, Cmp::Le, 1e-8)],
            info: info.clone(),
            seconds: 0.0,
        },
        CriterionReport { id: 2, title: "displacement bound".into(), checks: vec![Check::new("max |xi-xi0|/d", ratio, Cmp::Le, bound)], info, seconds: 0.0 },
    ];
    if let Construction::Curve(run) = &c {
        let rep = zero_localization_check(&run.atoms.flat(), &run.measure.pieces, 2.0, &run.b);
        reports.push(CriterionReport {
            id: 7,
            title: "zero localization".into(),
            checks: vec![Check::new("(d) zeros farther than 2 b from the curve", rep.violations.len() as f64, Cmp::Le, 0.0)],
            info: vec![format!("worst distance / b = {:.4}", rep.worst_ratio)],
            seconds: 0.0,
        });
    }
    Ok(reports)
}

/// Largest |error| difference between the stored field and one recomputed from the stored zeros.
pub fn round_trip_difference(cfg: &RunConfig, out: &Path) -> Result<f64> {
    let c = reload(cfg, out)?;
    let stored = io::read_field(&out.join(io::FIELD_CSV))?;
    let fresh = c.sample(cfg);
    if stored.len() != fresh.error.len() {
        return Err(Error::Precondition(format!("{} has {} samples, the configured grid has {}", io::FIELD_CSV, stored.len(), fresh.error.len())));
    }
    Ok(stored
        .iter()
        .zip(&fresh.error)
        .map(|(a, &b)| match (a.error.is_finite(), b.is_finite()) {
            (true, true) => (a.error - b).abs(),
            (false, false) => 0.0,
            _ => f64::INFINITY,
        })
        .fold(0.0, f64::max))
}
