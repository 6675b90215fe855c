//! CSV, PGM and JSON artifacts.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::atomize::{AtomSet, Source, Zero};
use crate::diskgrid::AnnularScheme;
use crate::error::{Error, Result};
use crate::measure::C64;
use crate::partition::Frame;
use crate::pipeline::LeafRecord;

pub const SCHEME_CSV: &str = "scheme.csv";
pub const LEAVES_CSV: &str = "leaves.csv";
pub const ATOMS_CSV: &str = "atoms.csv";
pub const FIELD_CSV: &str = "field.csv";
pub const HEATMAP_CSV: &str = "heatmap.csv";
pub const HEATMAP_PGM: &str = "heatmap.pgm";
pub const PROFILE_CSV: &str = "radial_profile.csv";
pub const ANNULI_CSV: &str = "annuli.csv";
pub const SUMMARY_JSON: &str = "summary.json";

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|x| x.map_err(Error::from)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeRow {
    pub n: usize,
    pub r_lo: f64,
    pub r_hi: f64,
    pub sectors: u32,
    pub log_ratio: f64,
    pub sector_width: f64,
    pub fractional_bound: f64,
}

pub fn scheme_rows(s: &AnnularScheme) -> Vec<SchemeRow> {
    (0..s.depth())
        .map(|n| SchemeRow {
            n,
            r_lo: s.radii[n],
            r_hi: s.radii[n + 1],
            sectors: s.sectors[n],
            log_ratio: s.log_ratio(n),
            sector_width: s.sector_width(n),
            fractional_bound: s.fractional_mass_bound(n),
        })
        .collect()
}

pub fn write_scheme(path: &Path, s: &AnnularScheme) -> Result<()> {
    write_rows(path, scheme_rows(s))
}

/// The scheme CSV as text, identical to the file contents.
pub fn scheme_csv(s: &AnnularScheme) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in scheme_rows(s) {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeafRow {
    pub source: String,
    pub n: i64,
    pub m: i64,
    pub leaf: i64,
    pub frame: String,
    pub a0: f64,
    pub a1: f64,
    pub b0: f64,
    pub b1: f64,
    pub mass: f64,
    pub relaxed: bool,
    pub depth: u32,
}

fn frame_name(f: Frame) -> &'static str {
    match f {
        Frame::LogPolar => "log_polar",
        Frame::Polar => "polar",
        Frame::Cartesian => "cartesian",
    }
}

impl From<&LeafRecord> for LeafRow {
    fn from(l: &LeafRecord) -> Self {
        let (n, m, leaf) = l.source.indices();
        LeafRow {
            source: l.source.label().into(),
            n,
            m,
            leaf,
            frame: frame_name(l.frame).into(),
            a0: l.rect.a0,
            a1: l.rect.a1,
            b0: l.rect.b0,
            b1: l.rect.b1,
            mass: l.mass,
            relaxed: l.relaxed,
            depth: l.depth,
        }
    }
}

pub fn write_leaves(path: &Path, rows: &[LeafRow]) -> Result<()> {
    write_rows(path, rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomRow {
    pub re: f64,
    pub im: f64,
    pub multiplicity: u32,
    pub source: String,
    pub n: i64,
    pub m: i64,
    pub leaf: i64,
    pub ratio: f64,
}

pub fn write_atoms(path: &Path, atoms: &AtomSet) -> Result<()> {
    write_rows(
        path,
        atoms.zeros.iter().map(|z| {
            let (n, m, leaf) = z.source.indices();
            AtomRow { re: z.z.re, im: z.z.im, multiplicity: z.multiplicity, source: z.source.label().into(), n, m, leaf, ratio: z.ratio }
        }),
    )
}

pub fn read_atoms(path: &Path) -> Result<AtomSet> {
    let rows: Vec<AtomRow> = read_rows(path)?;
    let zeros = rows
        .into_iter()
        .enumerate()
        .map(|(i, r)| {
            let source = Source::from_parts(&r.source, r.n, r.m, r.leaf).ok_or_else(|| Error::Config(format!("{}: row {}: unknown source {:?}", path.display(), i + 2, r.source)))?;
            Ok(Zero { z: C64::new(r.re, r.im), multiplicity: r.multiplicity, source, ratio: r.ratio })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AtomSet { zeros })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldRow {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub logf: f64,
    pub error: f64,
}

pub fn write_field(path: &Path, points: &[C64], u: &[f64], logf: &[f64], error: &[f64]) -> Result<()> {
    write_rows(path, (0..points.len()).map(|i| FieldRow { x: points[i].re, y: points[i].im, u: u[i], logf: logf[i], error: error[i] }))
}

pub fn read_field(path: &Path) -> Result<Vec<FieldRow>> {
    read_rows(path)
}

/// Matrix CSV (one grid row per line, top row = largest y) and an 8-bit plain PGM of |values|.
pub fn write_heatmap(csv_path: &Path, pgm_path: &Path, n: usize, values: &[f64]) -> Result<()> {
    let mut w = BufWriter::new(File::create(csv_path)?);
    for row in (0..n).rev() {
        let line: Vec<String> = (0..n).map(|col| values[row * n + col].to_string()).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    let max = values.iter().filter(|v| v.is_finite()).map(|v| v.abs()).fold(0.0, f64::max);
    let mut p = BufWriter::new(File::create(pgm_path)?);
    writeln!(p, "P2\n{n} {n}\n255")?;
    for row in (0..n).rev() {
        let line: Vec<String> = (0..n)
            .map(|col| {
                let v = values[row * n + col];
                let g = if v.is_finite() && max > 0.0 { (255.0 * v.abs() / max).round() as u32 } else { 0 };
                g.to_string()
            })
            .collect();
        writeln!(p, "{}", line.join(" "))?;
    }
    p.flush()?;
    Ok(())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_rows(path, rows)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diskgrid::build_scheme;

    #[test]
    fn atoms_round_trip_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(ATOMS_CSV);
        let atoms = AtomSet {
            zeros: vec![
                Zero { z: C64::new(0.1, -1.0 / 3.0), multiplicity: 2, source: Source::Heavy, ratio: 0.0 },
                Zero { z: C64::new(0.7, 0.2), multiplicity: 1, source: Source::Annular { n: 3, m: 17, leaf: 1 }, ratio: 0.25 },
                Zero { z: C64::new(0.9, 0.0), multiplicity: 1, source: Source::Curve { n: 4 }, ratio: 0.5 },
            ],
        };
        write_atoms(&path, &atoms).unwrap();
        assert_eq!(read_atoms(&path).unwrap(), atoms);
    }

    #[test]
    fn scheme_rows_match_scheme() {
        let s = build_scheme(0.99, 5).unwrap();
        let rows = scheme_rows(&s);
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[4].r_hi, s.radii[5]);
        assert_eq!(rows[0].sectors, s.sectors[0]);
    }

    #[test]
    fn heatmap_files() {
        let dir = tempfile::tempdir().unwrap();
        let (c, p) = (dir.path().join("h.csv"), dir.path().join("h.pgm"));
        write_heatmap(&c, &p, 2, &[1.0, -2.0, f64::NAN, 0.5]).unwrap();
        assert_eq!(std::fs::read_to_string(&c).unwrap(), "NaN,0.5\n1,-2\n");
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "P2\n2 2\n255\n0 64\n128 255\n");
    }
}
