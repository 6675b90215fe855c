//! Roots of small monic complex polynomials (Aberth-Ehrlich with Newton polish).

use num_complex::Complex64;

use crate::error::{Error, Result};

type C64 = Complex64;

fn eval(a: &[C64], z: C64) -> (C64, C64) {
    let n = a.len() - 1;
    let mut p = a[n];
    let mut dp = C64::new(0.0, 0.0);
    for i in (0..n).rev() {
        dp = dp * z + p;
        p = p * z + a[i];
    }
    (p, dp)
}

/// Roots of Σ a_i w^i with a[deg] = 1.
pub fn monic_roots(a: &[C64]) -> Result<Vec<C64>> {
    let n = a.len() - 1;
    if n == 0 {
        return Ok(Vec::new());
    }
    debug_assert!((a[n] - C64::new(1.0, 0.0)).norm() < 1e-14);
    let scale = (0..n).map(|i| a[i].norm().powf(1.0 / (n - i) as f64)).fold(0.0, f64::max);
    if scale == 0.0 {
        return Ok(vec![C64::new(0.0, 0.0); n]);
    }
    if n == 1 {
        return Ok(vec![-a[0]]);
    }
    let radius = 2.0 * scale;
    let mut z: Vec<C64> = (0..n)
        .map(|j| C64::from_polar(radius * (0.6 + 0.4 * (j as f64 + 1.0) / n as f64), std::f64::consts::TAU * j as f64 / n as f64 + 0.4))
        .collect();
    let mut converged = false;
    for _ in 0..600 {
        let mut max_step: f64 = 0.0;
        for k in 0..n {
            let (p, dp) = eval(a, z[k]);
            if p.norm() == 0.0 {
                continue;
            }
            let ratio = p / dp;
            let mut s = C64::new(0.0, 0.0);
            for j in 0..n {
                if j != k {
                    s += (z[k] - z[j]).inv();
                }
            }
            let w = ratio / (C64::new(1.0, 0.0) - ratio * s);
            if !w.re.is_finite() || !w.im.is_finite() {
                continue;
            }
            z[k] -= w;
            max_step = max_step.max(w.norm());
        }
        if max_step <= 1e-15 * scale {
            converged = true;
            break;
        }
    }
    for r in z.iter_mut() {
        for _ in 0..8 {
            let (p, dp) = eval(a, *r);
            if dp.norm() == 0.0 {
                break;
            }
            let next = *r - p / dp;
            if eval(a, next).0.norm() < p.norm() {
                *r = next;
            } else {
                break;
            }
        }
    }
    let coeff_scale = (0..=n).map(|i| a[i].norm() * scale.powi(i as i32)).fold(0.0, f64::max);
    let worst = z.iter().map(|r| eval(a, *r).0.norm()).fold(0.0, f64::max);
    if z.iter().any(|r| !r.re.is_finite() || !r.im.is_finite()) || (!converged && worst > 1e-8 * coeff_scale) {
        return Err(Error::RootFindingFailure { degree: n });
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poly_from_roots(r: &[C64]) -> Vec<C64> {
        let mut a = vec![C64::new(1.0, 0.0)];
        for &x in r {
            let mut b = vec![C64::new(0.0, 0.0); a.len() + 1];
            for (i, &c) in a.iter().enumerate() {
                b[i + 1] += c;
                b[i] -= c * x;
            }
            a = b;
        }
        a
    }

    fn sorted(mut v: Vec<C64>) -> Vec<C64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    #[test]
    fn recovers_known_roots() {
        let r = vec![C64::new(0.3, -0.1), C64::new(-0.5, 0.2), C64::new(0.1, 0.7), C64::new(-0.2, -0.4)];
        let got = sorted(monic_roots(&poly_from_roots(&r)).unwrap());
        for (g, e) in got.iter().zip(sorted(r)) {
            assert!((g - e).norm() < 1e-12, "{g} {e}");
        }
    }

    #[test]
    fn repeated_root_and_zero_polynomial() {
        let r = vec![C64::new(0.2, 0.1); 3];
        let got = monic_roots(&poly_from_roots(&r)).unwrap();
        for g in got {
            assert!((g - r[0]).norm() < 1e-4);
        }
        let z = monic_roots(&[C64::new(0.0, 0.0), C64::new(0.0, 0.0), C64::new(1.0, 0.0)]).unwrap();
        assert_eq!(z, vec![C64::new(0.0, 0.0); 2]);
    }
}
