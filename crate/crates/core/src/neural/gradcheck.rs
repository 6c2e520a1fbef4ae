use rand::Rng;

use super::params::{check_same_shapes, ParamSet};
use crate::error::{Error, Result};

/// Central-difference step.
pub const GRAD_CHECK_EPS: f64 = 1e-5;

/// Compares an analytic gradient to central differences on `n_probes`
/// randomly chosen coordinates. Returns the largest
/// `|g_a - g_n| / max(1e-8, |g_a| + |g_n|)`.
pub fn grad_check<P, F, R>(params: &P, analytic: &P, mut loss: F, n_probes: usize, rng: &mut R) -> Result<f64>
where
    P: ParamSet,
    F: FnMut(&P) -> Result<f64>,
    R: Rng + ?Sized,
{
    check_same_shapes(params, analytic)?;
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    if total == 0 {
        return Ok(0.0);
    }
    let base = loss(params)?;
    if !base.is_finite() {
        return Err(Error::NonFinite(format!("loss = {base}")));
    }
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    for _ in 0..n_probes {
        let mut flat = rng.random_range(0..total);
        let mut tensor = 0;
        while flat >= sizes[tensor] {
            flat -= sizes[tensor];
            tensor += 1;
        }
        let original = params.tensors()[tensor].as_slice()[flat];
        let mut eval_at = |value: f64| -> Result<f64> {
            probe.tensors_mut()[tensor].as_mut_slice()[flat] = value;
            let l = loss(&probe)?;
            if !l.is_finite() {
                return Err(Error::NonFinite(format!("loss = {l}")));
            }
            Ok(l)
        };
        let plus = eval_at(original + GRAD_CHECK_EPS)?;
        let minus = eval_at(original - GRAD_CHECK_EPS)?;
        probe.tensors_mut()[tensor].as_mut_slice()[flat] = original;
        let numeric = (plus - minus) / (2.0 * GRAD_CHECK_EPS);
        let exact = analytic.tensors()[tensor].as_slice()[flat];
        let rel = (exact - numeric).abs() / (exact.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Step pair for [`richardson_check`].
pub const RICHARDSON_STEPS: (f64, f64) = (2e-3, 1e-3);

/// Like [`grad_check`] but with Richardson-extrapolated central differences
/// `(4 D(h) - D(2h)) / 3` at larger steps. Truncation error is `O(h^4)` and
/// the rounding floor is ~100x lower than at `GRAD_CHECK_EPS`, so it also
/// resolves coordinates whose gradient is near `ulp(loss) / GRAD_CHECK_EPS`.
/// With `n_probes >= param_count` every coordinate is checked once, in order.
pub fn richardson_check<P, F, R>(params: &P, analytic: &P, mut loss: F, n_probes: usize, rng: &mut R) -> Result<f64>
where
    P: ParamSet,
    F: FnMut(&P) -> Result<f64>,
    R: Rng + ?Sized,
{
    check_same_shapes(params, analytic)?;
    let sizes: Vec<usize> = params.tensors().iter().map(|t| t.len()).collect();
    let total: usize = sizes.iter().sum();
    let coords: Vec<usize> = if n_probes >= total {
        (0..total).collect()
    } else {
        (0..n_probes).map(|_| rng.random_range(0..total)).collect()
    };
    let mut probe = params.clone();
    let mut worst = 0.0f64;
    let (big, small) = RICHARDSON_STEPS;
    for mut flat in coords {
        let mut tensor = 0;
        while flat >= sizes[tensor] {
            flat -= sizes[tensor];
            tensor += 1;
        }
        let original = params.tensors()[tensor].as_slice()[flat];
        let mut diff = |h: f64| -> Result<f64> {
            let mut at = |value: f64| -> Result<f64> {
                probe.tensors_mut()[tensor].as_mut_slice()[flat] = value;
                let l = loss(&probe)?;
                if !l.is_finite() {
                    return Err(Error::NonFinite(format!("loss = {l}")));
                }
                Ok(l)
            };
            Ok((at(original + h)? - at(original - h)?) / (2.0 * h))
        };
        let numeric = (4.0 * diff(small)? - diff(big)?) / 3.0;
        probe.tensors_mut()[tensor].as_mut_slice()[flat] = original;
        let exact = analytic.tensors()[tensor].as_slice()[flat];
        let rel = (exact - numeric).abs() / (exact.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
