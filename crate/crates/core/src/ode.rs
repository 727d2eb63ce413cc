//! Adaptive Dormand–Prince 5(4) integrator for autonomous complex ODEs.

use num_complex::Complex64;

use crate::error::{Result, SnlsError};
use crate::CVector;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
/// Fifth-order weights (equal to the last row of `A`).
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
/// Difference between fifth- and fourth-order weights.
const E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

/// Integrate `y' = f(y)` from 0 to `t_end` (either sign) with mixed
/// absolute/relative tolerance `tol`.
pub(crate) fn integrate<F>(f: F, y0: &CVector, t_end: f64, tol: f64) -> Result<CVector>
where
    F: Fn(&CVector) -> CVector,
{
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(SnlsError::Config(format!("ode tolerance must be positive, got {tol}")));
    }
    if !t_end.is_finite() {
        return Err(SnlsError::Domain(format!("ode horizon must be finite, got {t_end}")));
    }
    let span = t_end.abs();
    if span == 0.0 {
        return Ok(y0.clone());
    }
    let dir = t_end.signum();
    let h_min = 1e-14 * span.max(1.0);
    let mut y = y0.clone();
    let mut t = 0.0;
    let mut h = (0.01 * span).min(0.1);
    let mut k: Vec<CVector> = Vec::with_capacity(7);
    let mut first = f(&y);
    while t < span {
        if span - t < h {
            h = span - t;
        }
        if h < h_min && span - t > h_min {
            return Err(SnlsError::Numeric(format!("ode step size underflow at t = {t}")));
        }
        k.clear();
        k.push(first.clone());
        for stage in 1..7 {
            let mut arg = y.clone();
            for (j, kj) in k.iter().enumerate() {
                let a = A[stage][j];
                if a != 0.0 {
                    arg.axpy(Complex64::new(dir * h * a, 0.0), kj, Complex64::new(1.0, 0.0));
                }
            }
            debug_assert!(C[stage] > 0.0);
            k.push(f(&arg));
        }
        let mut y_new = y.clone();
        let mut err = CVector::zeros(y.len());
        for (j, kj) in k.iter().enumerate() {
            if B5[j] != 0.0 {
                y_new.axpy(Complex64::new(dir * h * B5[j], 0.0), kj, Complex64::new(1.0, 0.0));
            }
            if E[j] != 0.0 {
                err.axpy(Complex64::new(h * E[j], 0.0), kj, Complex64::new(1.0, 0.0));
            }
        }
        let ratio = err
            .iter()
            .zip(y.iter().zip(y_new.iter()))
            .map(|(e, (a, b))| {
                let scale = tol * (1.0 + a.norm().max(b.norm()));
                (e.norm() / scale).powi(2)
            })
            .sum::<f64>()
            / y.len().max(1) as f64;
        let ratio = ratio.sqrt();
        if !ratio.is_finite() {
            return Err(SnlsError::Numeric("non-finite ode error estimate".into()));
        }
        if ratio <= 1.0 {
            t += h;
            y = y_new;
            // first-same-as-last
            first = k.pop().expect("seven stages");
        }
        let factor = if ratio == 0.0 { 5.0 } else { (0.9 * ratio.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    Ok(y)
}
