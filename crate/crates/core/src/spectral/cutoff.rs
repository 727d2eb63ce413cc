//! The dyadic cutoff multipliers `s_n` and their profile `rho`.
//!
//! `rho` is the quintic smoothstep on `[1, 2]`: it equals 1 at `t = 1`,
//! vanishes at `t = 2`, and its first two derivatives vanish at both ends, so
//! the piecewise multiplier
//!
//! ```text
//! s_n(λ) = 1              for λ < 2^n
//!        = rho(2^-n λ)    for 2^n ≤ λ < 2^(n+1)
//!        = 0              for λ ≥ 2^(n+1)
//! ```
//!
//! is C² on `(0, ∞)`.

use crate::error::{Result, SnlsError};

/// Highest derivative order for which `rho` is continuous.
pub const MAX_SMOOTHNESS: usize = 2;

/// Number of samples per dyadic block used by [`mihlin_check`].
const MIHLIN_SAMPLES: usize = 20_001;

/// Quintic profile on `[1, 2]`; clamps to 1 below and 0 above.
pub fn rho(t: f64) -> f64 {
    if t <= 1.0 {
        return 1.0;
    }
    if t >= 2.0 {
        return 0.0;
    }
    let s = t - 1.0;
    // -6s^5 + 15s^4 - 10s^3 + 1, Horner form
    1.0 + s * s * s * (-10.0 + s * (15.0 - 6.0 * s))
}

/// `k`-th derivative of [`rho`] for `k <= 2`. Zero outside `(1, 2)`.
pub fn rho_derivative(t: f64, k: usize) -> f64 {
    if k == 0 {
        return rho(t);
    }
    if t <= 1.0 || t >= 2.0 {
        return 0.0;
    }
    let s = t - 1.0;
    match k {
        1 => -30.0 * s * s * (s - 1.0) * (s - 1.0),
        2 => -60.0 * s * (2.0 * s - 1.0) * (s - 1.0),
        _ => panic!("rho is only C^2; derivative of order {k} requested"),
    }
}

/// Sup norm of `rho^(k)` on `[1, 2]`, in closed form.
pub fn rho_derivative_sup(k: usize) -> f64 {
    match k {
        0 => 1.0,
        // attained at s = 1/2
        1 => 30.0 / 16.0,
        // attained at s = (3 ± √3)/6
        2 => 10.0 / 3f64.sqrt(),
        _ => panic!("rho is only C^2; derivative of order {k} requested"),
    }
}

/// The multiplier `s_n(λ)`.
pub fn cutoff_s(n: u32, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let scale = dyadic(n);
    Ok(if lambda < scale {
        1.0
    } else if lambda < 2.0 * scale {
        rho(lambda / scale)
    } else {
        0.0
    })
}

/// `k`-th derivative of `s_n` at `λ`, `k <= 2`.
pub fn cutoff_s_derivative(n: u32, lambda: f64, k: usize) -> Result<f64> {
    check_lambda(lambda)?;
    if k > MAX_SMOOTHNESS {
        return Err(SnlsError::Domain(format!("s_n is C^{MAX_SMOOTHNESS}; derivative order {k} requested")));
    }
    if k == 0 {
        return cutoff_s(n, lambda);
    }
    let scale = dyadic(n);
    Ok(rho_derivative(lambda / scale, k) / scale.powi(k as i32))
}

/// Sampled suprema of `|λ^k s_n^(k)(λ)|` for `k = 0..=k_max`.
///
/// Only the block `[2^n, 2^(n+1)]` contributes for `k >= 1`; for `k = 0`
/// the supremum is attained on the identity branch. The sample points are
/// `λ = 2^n t` on a fixed grid in `t`, so the returned values for `k >= 1`
/// are bit-identical across `n` whenever no overflow occurs.
pub fn mihlin_check(n: u32, k_max: usize) -> Result<Vec<f64>> {
    if k_max > MAX_SMOOTHNESS {
        return Err(SnlsError::Domain(format!("mihlin_check supports k_max <= {MAX_SMOOTHNESS}, got {k_max}")));
    }
    let scale = dyadic(n);
    let mut sups = vec![0.0f64; k_max + 1];
    // a point on the identity branch, then the transition block
    let below = 0.5 * scale;
    sups[0] = cutoff_s(n, below)?.abs();
    for i in 0..MIHLIN_SAMPLES {
        let t = 1.0 + i as f64 / (MIHLIN_SAMPLES - 1) as f64;
        let lambda = scale * t;
        for (k, sup) in sups.iter_mut().enumerate() {
            let v = (lambda.powi(k as i32) * cutoff_s_derivative(n, lambda, k)?).abs();
            if v > *sup {
                *sup = v;
            }
        }
    }
    Ok(sups)
}

fn dyadic(n: u32) -> f64 {
    2f64.powi(n as i32)
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(SnlsError::Domain(format!("cutoff requires a positive finite eigenvalue, got {lambda}")))
    }
}
