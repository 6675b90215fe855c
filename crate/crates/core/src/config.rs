//! Run configuration read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::diskgrid::{build_scheme, gate_sum, validate_q};
use crate::error::{Error, Result};
use crate::measure::{Atom, DiskMeasure, C64};
use crate::pipeline::{radial_measure, random_square_measure, CurveParams, SQUARE_HALF};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    #[serde(rename = "disk-theorem1")]
    DiskTheorem1,
    #[serde(rename = "square-proposition")]
    SquareProposition,
    #[serde(rename = "curve-theorem2")]
    CurveTheorem2,
}

/// Measure families a config can name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    /// (re, im, mass) triples.
    Atoms { atoms: Vec<[f64; 3]> },
    /// n(r) = scale/(1−r)^exponent, the mass n(0) as an atom at the origin.
    RadialPower {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default = "one")]
        exponent: f64,
    },
    /// n(r) = delta/(1−r) on the annulus only.
    Stress { delta: f64 },
    /// Seeded mixture of atoms, rectangles and segments of integer mass in the square.
    RandomSquare { mass: u32 },
    /// Curve-supported measure Δ·dW(1/(1−r)) along θ(r) = theta0 + slope·r.
    Curve {
        #[serde(default = "one")]
        sigma: f64,
        #[serde(default = "one")]
        delta: f64,
        #[serde(default = "half")]
        k: f64,
        #[serde(default = "n_max_default")]
        n_max: usize,
        #[serde(default)]
        theta0: f64,
        #[serde(default)]
        slope: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

fn n_max_default() -> usize {
    200
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Resolution {
    /// Rings on [0, 1/2] of the polar sample grid.
    pub central_bins: usize,
    /// Rings per annulus.
    pub per_annulus: usize,
    pub angles: usize,
    /// Side of the Cartesian grid on [−1, 1]² (square mode and heatmaps).
    pub square: usize,
    /// Grid doublings of the curve samples.
    pub curve_refine: u32,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { central_bins: 24, per_annulus: 2, angles: 64, square: 128, curve_refine: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub measure: MeasureSpec,
    #[serde(default = "q_default")]
    pub q: f64,
    #[serde(default = "p_default")]
    pub p: u32,
    /// Annulus depth N.
    #[serde(default = "depth_default")]
    pub depth: usize,
    #[serde(default = "half")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "out_default")]
    pub out: PathBuf,
    #[serde(default)]
    pub resolution: Resolution,
}

fn q_default() -> f64 {
    0.99
}

fn p_default() -> u32 {
    2
}

fn depth_default() -> usize {
    100
}

fn out_default() -> PathBuf {
    PathBuf::from("out")
}

/// 1-based (line, column) of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            match e.span() {
                Some(span) => {
                    let (line, col) = line_col(text, span.start);
                    Error::Config(format!("line {line}, column {col}: {msg}"))
                }
                None => Error::Config(msg),
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !validate_q(self.q) {
            return Err(Error::InvalidQ { q: self.q, sum: gate_sum(self.q) });
        }
        if !(2..=4).contains(&self.p) {
            return Err(Error::Config(format!("p = {} must be 2, 3 or 4", self.p)));
        }
        if self.depth == 0 {
            return Err(Error::Config("depth must be at least 1".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        let r = &self.resolution;
        let mins = [("central_bins", r.central_bins, 1), ("per_annulus", r.per_annulus, 1), ("angles", r.angles, 8), ("square", r.square, 16)];
        for (name, v, min) in mins {
            if v < min {
                return Err(Error::Config(format!("resolution.{name} = {v} is below the minimum {min}")));
            }
        }
        let ok = matches!(
            (self.mode, &self.measure),
            (Mode::DiskTheorem1, MeasureSpec::Atoms { .. } | MeasureSpec::RadialPower { .. } | MeasureSpec::Stress { .. })
                | (Mode::SquareProposition, MeasureSpec::Atoms { .. } | MeasureSpec::RandomSquare { .. })
                | (Mode::CurveTheorem2, MeasureSpec::Curve { .. })
        );
        if !ok {
            return Err(Error::Config(format!("measure {:?} does not fit mode {:?}", self.measure_kind(), self.mode)));
        }
        if self.mode == Mode::CurveTheorem2 && self.p != 2 {
            return Err(Error::Config("curve-theorem2 builds cells of mass 2; set p = 2".into()));
        }
        if let MeasureSpec::Atoms { atoms } = &self.measure {
            for (i, a) in atoms.iter().enumerate() {
                let z = C64::new(a[0], a[1]);
                let inside = match self.mode {
                    Mode::SquareProposition => z.re.abs() <= SQUARE_HALF && z.im.abs() <= SQUARE_HALF,
                    _ => z.norm() < 1.0,
                };
                if !inside || !(a[2] >= 0.0) {
                    return Err(Error::Config(format!("atom {i} ({}, {}, {}) is outside the domain or has negative mass", a[0], a[1], a[2])));
                }
            }
        }
        Ok(())
    }

    fn measure_kind(&self) -> &'static str {
        match self.measure {
            MeasureSpec::Atoms { .. } => "atoms",
            MeasureSpec::RadialPower { .. } => "radial_power",
            MeasureSpec::Stress { .. } => "stress",
            MeasureSpec::RandomSquare { .. } => "random_square",
            MeasureSpec::Curve { .. } => "curve",
        }
    }

    /// The measure for disk and square modes.
    pub fn build_measure(&self) -> Result<DiskMeasure> {
        use rand::SeedableRng;
        Ok(match &self.measure {
            MeasureSpec::Atoms { atoms } => DiskMeasure::atoms(&atoms.iter().map(|a| Atom { z: C64::new(a[0], a[1]), mass: a[2] }).collect::<Vec<_>>()),
            MeasureSpec::RadialPower { scale, exponent } => {
                let scheme = build_scheme(self.q, self.depth)?;
                let (s, e) = (*scale, *exponent);
                radial_measure(move |r| s / (1.0 - r).powf(e), &scheme, Some((32, 1)))
            }
            MeasureSpec::Stress { delta } => {
                let scheme = build_scheme(self.q, self.depth)?;
                crate::pipeline::stress_measure(*delta, &scheme)
            }
            MeasureSpec::RandomSquare { mass } => {
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
                random_square_measure(*mass, &mut rng)
            }
            MeasureSpec::Curve { .. } => return Err(Error::Config("curve measures are built by the curve pipeline".into())),
        })
    }

    pub fn curve_params(&self) -> Option<CurveParams> {
        match self.measure {
            MeasureSpec::Curve { sigma, delta, k, n_max, theta0, slope } => Some(CurveParams { sigma, delta, k, n_max, p: self.p, eps: self.eps, theta0, slope }),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_atoms_config() {
        let c = RunConfig::parse("mode = \"disk-theorem1\"\n[measure]\nkind = \"atoms\"\natoms = [[0.1, 0.2, 1.0]]\n").unwrap();
        assert_eq!(c.q, 0.99);
        assert_eq!(c.p, 2);
        assert_eq!(c.resolution, Resolution::default());
        assert_eq!(c.build_measure().unwrap().mass(), 1.0);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let text = "mode = \"disk-theorem1\"\nq = \"high\"\n[measure]\nkind = \"atoms\"\natoms = []\n";
        let e = RunConfig::parse(text).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
        let text = "mode = \"disk-theorem1\"\n[measure]\nkind = \"atoms\"\natoms = []\ncolour = 1\n";
        let e = RunConfig::parse(text).unwrap_err().to_string();
        // fields of the tagged measure table are reported at the table header
        assert!(e.contains("line 2") && e.contains("colour"), "{e}");
    }

    #[test]
    fn invariants_are_checked() {
        let base = "[measure]\nkind = \"atoms\"\natoms = []\n";
        assert!(matches!(RunConfig::parse(&format!("mode = \"disk-theorem1\"\nq = 0.5\n{base}")), Err(Error::InvalidQ { .. })));
        assert!(RunConfig::parse(&format!("mode = \"disk-theorem1\"\np = 5\n{base}")).is_err());
        assert!(RunConfig::parse(&format!("mode = \"disk-theorem1\"\n[resolution]\nangles = 2\n{base}")).is_err());
        assert!(RunConfig::parse(&format!("mode = \"curve-theorem2\"\n{base}")).is_err());
        assert!(RunConfig::parse("mode = \"square-proposition\"\n[measure]\nkind = \"atoms\"\natoms = [[0.7, 0.0, 1.0]]\n").is_err());
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::parse("mode = \"curve-theorem2\"\n[measure]\nkind = \"curve\"\nn_max = 20\n").unwrap();
        let again = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.curve_params().unwrap().n_max, 20);
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 0), (1, 1));
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
    }
}
