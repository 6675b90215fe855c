//! Curve-mode field statistics: per-annulus sups, one-sided max, T differences.

use std::time::Instant;

use diskapprox::pipeline::{curve_sample_points, paired_t, run_curve, CurveParams};
use diskapprox::slowvar::sup_error_outside;

fn main() {
    let t = Instant::now();
    let run = run_curve(&CurveParams::default()).unwrap();
    println!("built {:?}", t.elapsed());
    let flat = run.atoms.flat();
    for refine in [0u32, 1] {
        let pts = curve_sample_points(&run, refine);
        eprintln!("points {:?}", t.elapsed());
        let s = run.model.eval_many(&pts, false);
        eprintln!("evaluated {:?}", t.elapsed());
        let err: Vec<f64> = s.iter().map(|x| x.error).collect();
        let rep = sup_error_outside(&pts, &err, &flat, run.params.eps, &run.b, &run.radii);
        let per: Vec<f64> = rep.per_annulus.iter().map(|v| v.unwrap_or(f64::NAN)).collect();
        let overall = per.iter().cloned().fold(0.0, f64::max);
        let last = per[per.len() - 50..].iter().cloned().fold(0.0, f64::max);
        println!("refine={refine} pts={} time={:?} overall={overall:.4} last50={last:.4} one_sided={:.4}", pts.len(), t.elapsed(), rep.one_sided_max);
        for k in (0..per.len()).step_by(20) {
            println!("  n={} sup={:.4}", k + 1, per[k]);
        }
    }
    let mut diffs = Vec::new();
    for w in run.radii.windows(2).step_by(10) {
        let r = 0.5 * (w[0] + w[1]);
        let (tu, tl) = paired_t(&run.model, r, 5e-3);
        diffs.push((r, tu, tl));
    }
    for (r, a, b) in &diffs {
        println!("r={r:.5} T_u={a:.5} T_logf={b:.5} diff={:.5}", (a - b).abs());
    }
    println!("total {:?}", t.elapsed());
}
