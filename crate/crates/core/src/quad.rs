//! Composite Newton-Cotes weights on uniform grids.
//!
//! Integrals over a run of `m` equal intervals use composite Simpson when `m`
//! is even. For odd `m >= 3` the first three intervals take Simpson's 3/8 rule
//! and the rest composite Simpson, which keeps fourth-order accuracy. A single
//! interval falls back to the trapezoid rule.

/// Adds the weights for `intervals` equal intervals of width `h`, starting at
/// offset `start`, into `out`.
pub fn accumulate_weights(out: &mut [f64], start: usize, intervals: usize, h: f64) {
    match intervals {
        0 => {}
        1 => {
            out[start] += 0.5 * h;
            out[start + 1] += 0.5 * h;
        }
        m => {
            let mut first = start;
            let mut rest = m;
            if m % 2 == 1 {
                let w = 3.0 * h / 8.0;
                out[start] += w;
                out[start + 1] += 3.0 * w;
                out[start + 2] += 3.0 * w;
                out[start + 3] += w;
                first = start + 3;
                rest = m - 3;
            }
            let w = h / 3.0;
            for pair in 0..rest / 2 {
                let k = first + 2 * pair;
                out[k] += w;
                out[k + 1] += 4.0 * w;
                out[k + 2] += w;
            }
        }
    }
}

/// Weights for integrating over all `n` nodes of a uniform grid on `[0, 1]`,
/// with the range split at node `split` (kink location).
pub fn split_weights(n: usize, split: usize) -> Vec<f64> {
    let h = 1.0 / (n - 1) as f64;
    let mut w = vec![0.0; n];
    accumulate_weights(&mut w, 0, split, h);
    accumulate_weights(&mut w, split, n - 1 - split, h);
    w
}

/// Composite Simpson on `[a, b]` with `points` nodes (odd, at least 3).
pub fn simpson<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    a: f64,
    b: f64,
    points: usize,
) -> Result<f64, E> {
    debug_assert!(points >= 3 && points % 2 == 1);
    if b <= a {
        return Ok(0.0);
    }
    let m = points - 1;
    let h = (b - a) / m as f64;
    let mut sum = f(a)? + f(b)?;
    for k in 1..m {
        let x = a + k as f64 * h;
        let c = if k % 2 == 1 { 4.0 } else { 2.0 };
        sum += c * f(x)?;
    }
    Ok(sum * h / 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::convert::Infallible;

    fn integrate(w: &[f64], f: impl Fn(f64) -> f64) -> f64 {
        let n = w.len();
        w.iter()
            .enumerate()
            .map(|(k, wk)| wk * f(crate::grid::node(k, n)))
            .sum()
    }

    #[test]
    fn split_weights_integrate_cubics_exactly() {
        let f = |x: f64| 4.0 * x * x * x - x + 2.0;
        for n in [2, 3, 4, 5, 8, 17] {
            for split in 0..n {
                let w = split_weights(n, split);
                let got = integrate(&w, f);
                if split == 1 || n - 1 - split == 1 {
                    // trapezoid on a single interval is only exact for lines
                    continue;
                }
                assert!((got - 2.5).abs() < 1e-13, "n={n} split={split} got {got}");
            }
        }
    }

    #[test]
    fn weights_sum_to_interval_length() {
        for n in 2..40 {
            for split in 0..n {
                let s: f64 = split_weights(n, split).iter().sum();
                assert!((s - 1.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn simpson_matches_closed_form() {
        let v = simpson(|x| Ok::<_, Infallible>(x.sin()), 0.0, std::f64::consts::PI, 101).unwrap();
        assert!((v - 2.0).abs() < 1e-7);
    }
}
