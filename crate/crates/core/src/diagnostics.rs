//! Energy and mass, the càdlàg modulus of recorded paths, ensemble moment
//! summaries and Aldous-type increment statistics.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, SnlsError};
use crate::nonlinear::{eval_f, eval_fhat, Nonlinearity};
use crate::solver::TrajectoryRecord;
use crate::spectral::SpectralModel;
use crate::CVector;

/// Number of bootstrap resamples behind every band.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    /// `½‖A^{1/2}u‖²`.
    pub kinetic: f64,
    /// `F̂(u)`.
    pub potential: f64,
    pub total: f64,
    /// `‖u‖²_H`.
    pub mass: f64,
}

pub fn energy(model: &SpectralModel, nonlinearity: Option<&Nonlinearity>, u: &CVector) -> Result<EnergyReport> {
    model.check_len(u.len(), "state")?;
    let mut kinetic = 0.0;
    let mut mass = 0.0;
    for (c, m) in u.iter().zip(model.modes()) {
        kinetic += m.lambda_a * c.norm_sqr();
        mass += c.norm_sqr();
    }
    kinetic *= 0.5;
    let potential = match nonlinearity {
        Some(nl) => eval_fhat(model, nl, u)?,
        None => 0.0,
    };
    Ok(EnergyReport { kinetic, potential, total: kinetic + potential, mass })
}

/// `E'[x](h) = Re <Ax + F(x), h>`.
pub fn energy_derivative(
    model: &SpectralModel,
    nonlinearity: Option<&Nonlinearity>,
    x: &CVector,
    h: &CVector,
) -> Result<f64> {
    if x.len() != h.len() {
        return Err(SnlsError::Shape { expected: x.len(), got: h.len(), context: "energy direction" });
    }
    model.check_len(x.len(), "state")?;
    let mut grad: CVector = CVector::from_fn(x.len(), |i, _| x[i] * model.modes()[i].lambda_a);
    if let Some(nl) = nonlinearity {
        grad += eval_f(model, nl, x)?;
    }
    Ok(grad.iter().zip(h.iter()).map(|(g, v)| (g * v.conj()).re).sum())
}

/// `‖a - b‖_{E_A*}` after zero-padding the shorter vector.
pub fn dual_distance(model: &SpectralModel, a: &CVector, b: &CVector) -> f64 {
    let len = a.len().max(b.len());
    let zero = Complex64::new(0.0, 0.0);
    (0..len)
        .map(|i| {
            let d = a.get(i).copied().unwrap_or(zero) - b.get(i).copied().unwrap_or(zero);
            d.norm_sqr() / (1.0 + model.modes()[i].lambda_a)
        })
        .sum::<f64>()
        .sqrt()
}

/// `‖u‖_{E_A}` of a coefficient vector.
pub fn energy_norm(model: &SpectralModel, u: &CVector) -> f64 {
    u.iter().zip(model.modes()).map(|(c, m)| (1.0 + m.lambda_a) * c.norm_sqr()).sum::<f64>().sqrt()
}

fn check_path(times: &[f64], values: usize, horizon: f64, delta: f64) -> Result<()> {
    if times.len() != values {
        return Err(SnlsError::Shape { expected: times.len(), got: values, context: "path values" });
    }
    if times.is_empty() || times[0] != 0.0 {
        return Err(SnlsError::Domain("path must start with a sample at t = 0".into()));
    }
    if times.windows(2).any(|w| w[0] >= w[1]) || *times.last().unwrap() > horizon {
        return Err(SnlsError::Domain("path times must increase strictly within [0, T]".into()));
    }
    if delta.is_nan() || delta <= 0.0 || delta > horizon {
        return Err(SnlsError::Domain(format!("modulus needs 0 < δ <= T = {horizon}, got {delta}")));
    }
    Ok(())
}

/// Càdlàg modulus `w(u, δ)` of a path that is constant between its sample
/// times, with partition points drawn from the sample times and `T`.
///
/// `dist` is the metric of the state space.
pub fn cadlag_modulus_with<T, D>(times: &[f64], values: &[T], horizon: f64, delta: f64, dist: D) -> Result<f64>
where
    D: Fn(&T, &T) -> f64,
{
    check_path(times, values.len(), horizon, delta)?;
    let mut points = times.to_vec();
    if *points.last().unwrap() < horizon {
        points.push(horizon);
    }
    let k = points.len() - 1;
    let mut best = vec![f64::INFINITY; k + 1];
    best[0] = 0.0;
    for j in 1..=k {
        // oscillation of values[i..j], grown as i decreases
        let mut osc = 0.0f64;
        for i in (0..j).rev() {
            for v in &values[i + 1..j] {
                osc = osc.max(dist(&values[i], v));
            }
            if points[j] - points[i] >= delta && best[i].is_finite() {
                best[j] = best[j].min(best[i].max(osc));
            }
        }
    }
    Ok(best[k])
}

/// [`cadlag_modulus_with`] for real-valued paths with `d(a, b) = |a - b|`.
pub fn cadlag_modulus(times: &[f64], values: &[f64], horizon: f64, delta: f64) -> Result<f64> {
    check_path(times, values.len(), horizon, delta)?;
    let mut points = times.to_vec();
    if *points.last().unwrap() < horizon {
        points.push(horizon);
    }
    let k = points.len() - 1;
    let mut best = vec![f64::INFINITY; k + 1];
    best[0] = 0.0;
    for j in 1..=k {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in (0..j).rev() {
            lo = lo.min(values[i]);
            hi = hi.max(values[i]);
            if points[j] - points[i] >= delta && best[i].is_finite() {
                best[j] = best[j].min(best[i].max(hi - lo));
            }
        }
    }
    Ok(best[k])
}

/// Point estimate and bootstrap band for `E[sup_t ‖u‖^r_{E_A}]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub order: f64,
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    /// `(E X^r)^{1/r}`.
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub trajectories: usize,
    pub moments: Vec<MomentEstimate>,
    /// Median over trajectories of `sup_t [½‖u‖² + E(u)]`.
    pub sup_energy_median: f64,
    pub sup_energy_mean: f64,
    /// Median over trajectories of `sup_t ‖u‖_{E_A}`.
    pub sup_energy_norm_median: f64,
    pub variance_budget: f64,
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean with a percentile bootstrap 95% band.
pub fn bootstrap_mean(samples: &[f64], seed: u64) -> (f64, f64, f64) {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .map(|_| (0..n).map(|_| samples[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let lower = percentile(&means, 0.025).min(mean);
    let upper = percentile(&means, 0.975).max(mean);
    (mean, lower, upper)
}

/// Moments of per-trajectory suprema for every order in `orders`.
pub fn ensemble_moments(records: &[TrajectoryRecord], orders: &[f64], seed: u64) -> Result<EnsembleSummary> {
    if records.len() < 2 {
        return Err(SnlsError::Usage(format!("ensemble moments need at least 2 trajectories, got {}", records.len())));
    }
    if orders.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
        return Err(SnlsError::Usage("moment orders must be positive".into()));
    }
    let sups: Vec<f64> = records.iter().map(|r| r.energy_norm.iter().cloned().fold(0.0, f64::max)).collect();
    let sup_energy: Vec<f64> = records
        .iter()
        .map(|r| r.mass.iter().zip(&r.energy).map(|(m, e)| 0.5 * m + e).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    let moments = orders
        .iter()
        .enumerate()
        .map(|(i, &order)| {
            let powered: Vec<f64> = sups.iter().map(|s| s.powf(order)).collect();
            let (mean, lower, upper) = bootstrap_mean(&powered, seed.wrapping_add(i as u64));
            MomentEstimate { order, mean, lower, upper, normalized: mean.powf(1.0 / order) }
        })
        .collect();
    Ok(EnsembleSummary {
        trajectories: records.len(),
        moments,
        sup_energy_median: median(&sup_energy),
        sup_energy_mean: sup_energy.iter().sum::<f64>() / sup_energy.len() as f64,
        sup_energy_norm_median: median(&sups),
        variance_budget: records[0].variance_budget,
    })
}

/// How the base time `τ` of an increment is chosen on each trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// `τ = t`.
    Deterministic(f64),
    /// First jump time at or after `t`, or `T` when there is none.
    FirstJumpAfter(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AldousRow {
    pub theta: f64,
    pub probability: f64,
}

/// Index of the recorded state in force at time `t` (right-continuous).
pub fn sample_index(times: &[f64], t: f64) -> usize {
    times.partition_point(|&s| s <= t).saturating_sub(1)
}

/// Empirical `P{‖u((τ+θ)∧T) - u(τ)‖_{E_A*} >= η}` for each `θ`.
pub fn aldous_statistic(
    model: &SpectralModel,
    records: &[TrajectoryRecord],
    thetas: &[f64],
    rule: StoppingRule,
    eta: f64,
) -> Result<Vec<AldousRow>> {
    if records.is_empty() {
        return Err(SnlsError::Usage("no trajectories supplied".into()));
    }
    if eta.is_nan() || eta <= 0.0 || thetas.iter().any(|t| t.is_nan() || *t < 0.0) {
        return Err(SnlsError::Domain("need η > 0 and θ >= 0".into()));
    }
    let rows = thetas
        .iter()
        .map(|&theta| {
            let hits = records
                .iter()
                .filter(|r| {
                    let horizon = *r.times.last().unwrap_or(&0.0);
                    let tau = match rule {
                        StoppingRule::Deterministic(t) => t.min(horizon),
                        StoppingRule::FirstJumpAfter(t) => {
                            r.events.iter().map(|e| e.time).find(|&s| s >= t).unwrap_or(horizon)
                        }
                    };
                    let a = &r.states[sample_index(&r.times, tau)];
                    let b = &r.states[sample_index(&r.times, (tau + theta).min(horizon))];
                    dual_distance(model, a, b) >= eta
                })
                .count();
            AldousRow { theta, probability: hits as f64 / records.len() as f64 }
        })
        .collect();
    Ok(rows)
}
