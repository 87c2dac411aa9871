//! Local quadratic regression (LOESS) for per-frame score tracks.

use crate::error::{Error, Result};

pub const DEFAULT_LOESS_SPAN: usize = 11;

pub fn validate_span(span: usize) -> Result<()> {
    if span < 5 || span % 2 == 0 {
        return Err(Error::invalid(format!("LOESS span {span} must be odd and >= 5")));
    }
    Ok(())
}

/// Tricube-weighted degree-2 least squares over a window of `span` frames
/// centred on each sample, evaluated at the centre. Near the ends the window
/// is cut at the sequence boundary rather than padded. Tracks shorter than 3
/// samples are returned unchanged.
pub fn loess_smooth(values: &[f64], span: usize) -> Result<Vec<f64>> {
    validate_span(span)?;
    let n = values.len();
    if n < 3 {
        return Ok(values.to_vec());
    }
    let half = span / 2;
    // Bandwidth one past the farthest in-window offset keeps every weight > 0.
    let bandwidth = (half + 1) as f64;
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let lo = i.saturating_sub(half);
        let hi = (i + half).min(n - 1);
        // Normal equations in the centred coordinate x = j - i.
        let mut s = [0.0f64; 5]; // Σw x^k, k = 0..4
        let mut r = [0.0f64; 3]; // Σw x^k y, k = 0..2
        for (j, &y) in values.iter().enumerate().take(hi + 1).skip(lo) {
            let x = j as f64 - i as f64;
            let u = (x.abs() / bandwidth).powi(3);
            let w = (1.0 - u).powi(3);
            let mut xp = w;
            for (k, sk) in s.iter_mut().enumerate() {
                *sk += xp;
                if k < 3 {
                    r[k] += xp * y;
                }
                xp *= x;
            }
        }
        let a = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
        out.push(solve3(a, r)[0]);
    }
    Ok(out)
}

/// Gaussian elimination with partial pivoting on a 3×3 system.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> [f64; 3] {
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))
            .expect("non-empty");
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let mut acc = b[row];
        for k in row + 1..3 {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;
    use proptest::prelude::*;

    #[test]
    fn constant_and_short_inputs() {
        let c = loess_smooth(&[0.7; 20], 11).unwrap();
        assert!(c.iter().all(|x| (x - 0.7).abs() < 1e-12));
        assert_eq!(loess_smooth(&[1.0, 9.0], 11).unwrap(), vec![1.0, 9.0]);
        assert_eq!(loess_smooth(&[], 5).unwrap(), Vec::<f64>::new());
        assert!(loess_smooth(&[1.0; 10], 4).is_err());
        assert!(loess_smooth(&[1.0; 10], 3).is_err());
    }

    #[test]
    fn white_noise_variance_shrinks() {
        let mut rng = SplitMix64::new(17);
        let xs: Vec<f64> = (0..10_000).map(|_| rng.normal()).collect();
        let ys = loess_smooth(&xs, 11).unwrap();
        let var = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64
        };
        assert!(var(&ys) < 0.5 * var(&xs), "{} vs {}", var(&ys), var(&xs));
    }

    proptest! {
        #[test]
        fn quadratics_are_reproduced(a in -2.0f64..2.0, b in -2.0f64..2.0, c in -0.05f64..0.05, n in 3usize..80, half in 2usize..8) {
            let span = 2 * half + 1;
            let xs: Vec<f64> = (0..n).map(|t| { let t = t as f64; a + b * t + c * t * t }).collect();
            let ys = loess_smooth(&xs, span).unwrap();
            for (x, y) in xs.iter().zip(&ys) {
                prop_assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
            }
            // idempotent on its own output
            let zs = loess_smooth(&ys, span).unwrap();
            for (y, z) in ys.iter().zip(&zs) {
                prop_assert!((y - z).abs() < 1e-9 * y.abs().max(1.0));
            }
        }
    }
}
