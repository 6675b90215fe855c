use diskapprox::config::RunConfig;
use diskapprox::io;
use diskapprox::run::{approximate, check_artifacts, round_trip_difference, Construction};

fn cfg(text: &str) -> RunConfig {
    RunConfig::parse(text).unwrap()
}

const DISK: &str = r#"
mode = "disk-theorem1"
depth = 12
[measure]
kind = "stress"
delta = 1.6e5
[resolution]
angles = 16
square = 24
"#;

#[test]
fn atoms_file_equals_input_atoms() {
    let c = cfg("mode = \"disk-theorem1\"\ndepth = 200\n[measure]\nkind = \"atoms\"\natoms = [[0.1, 0.2, 1.0], [-0.6, 0.3, 2.0], [0.9, -0.1, 1.0]]\n[resolution]\nsquare = 16\n");
    let dir = tempfile::tempdir().unwrap();
    approximate(&c, dir.path()).unwrap();
    let atoms = io::read_atoms(&dir.path().join(io::ATOMS_CSV)).unwrap();
    let mut got: Vec<(f64, f64, u32)> = atoms.zeros.iter().map(|z| (z.z.re, z.z.im, z.multiplicity)).collect();
    got.sort_by(|a, b| a.partial_cmp(b).unwrap());
    assert_eq!(got, vec![(-0.6, 0.3, 2), (0.1, 0.2, 1), (0.9, -0.1, 1)]);
}

#[test]
fn square_config_gives_n_zeros() {
    let c = cfg("mode = \"square-proposition\"\nseed = 5\n[measure]\nkind = \"random_square\"\nmass = 4\n");
    let run = Construction::build(&c).unwrap();
    assert_eq!(run.atoms().count(), 4);
}

#[test]
fn curve_config_gives_two_atoms_per_cell() {
    let c = cfg("mode = \"curve-theorem2\"\n[measure]\nkind = \"curve\"\nsigma = 1.0\ndelta = 1.0\nn_max = 200\n");
    let run = Construction::build(&c).unwrap();
    assert_eq!(run.atoms().count(), 400);
}

#[test]
fn outputs_are_deterministic() {
    let c = cfg(DISK);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let s = approximate(&c, a.path()).unwrap();
    approximate(&c, b.path()).unwrap();
    assert!(s.cells > 100, "{}", s.cells);
    for f in &s.files {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn reloaded_atoms_reproduce_the_field() {
    let c = cfg(DISK);
    let dir = tempfile::tempdir().unwrap();
    approximate(&c, dir.path()).unwrap();
    let d = round_trip_difference(&c, dir.path()).unwrap();
    assert!(d <= 1e-12, "{d}");
    let reports = check_artifacts(&c, dir.path()).unwrap();
    assert!(reports.iter().all(|r| r.passed()));
}

#[test]
fn corrupted_atom_fails_the_named_criteria() {
    let c = cfg(DISK);
    let dir = tempfile::tempdir().unwrap();
    approximate(&c, dir.path()).unwrap();
    let path = dir.path().join(io::ATOMS_CSV);
    let mut atoms = io::read_atoms(&path).unwrap();
    let z = atoms.zeros.iter_mut().find(|z| z.source.label() == "annular").unwrap();
    z.z *= 0.97;
    io::write_atoms(&path, &atoms).unwrap();
    let reports = check_artifacts(&c, dir.path()).unwrap();
    let failed: Vec<u32> = reports.iter().filter(|r| !r.passed()).map(|r| r.id).collect();
    assert!(failed.contains(&1) && failed.contains(&2), "{failed:?}");
}
