//! Jump-adapted integration of the Galerkin equation.
//!
//! Between jumps the state follows
//!
//! ```text
//! u' = -iAu - iP_n F(u) + iB_n(m_ε)u + D_ε u
//! ```
//!
//! where `D_ε` is the small-jump closure matrix; at every simulated event the
//! pre-jump state is mapped through `e^{-iB_n(l)}`.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{dual_distance, energy, energy_norm, EnergyReport};
use crate::error::{Result, SnlsError};
use crate::marcus::{assemble_noise_matrices, jump_map, HermitianExp, NoiseOperators, Symbol};
use crate::noise::{compute_moments, sample_prm, IntensityMeasure, JumpEvent, MeasureKind, NoiseMoments};
use crate::nonlinear::{eval_f, Nonlinearity};
use crate::spectral::{apply_sn, GalerkinLevel, SpectralModel};
use crate::{CMatrix, CVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegratorMode {
    /// Implicit midpoint rule solved by fixed-point iteration.
    FaithfulMidpoint,
    /// Strang splitting of the linear, nonlinear and noise-drift parts.
    SplitStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Closure {
    /// `D_ε = -½ Σ C_ε[m,m'] M_m M_m'`.
    Taylor2,
    /// `D_ε = Σ_{|a_j|<ε} w_j (e^{-iB_n(a_j)} - I + iB_n(a_j))`; atomic measures only.
    AtomicExact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub mode: IntegratorMode,
    /// Base step; inter-event intervals are subdivided so no step exceeds it.
    pub dt: f64,
    /// Fixed-point tolerance relative to `‖u‖`.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub closure: Closure,
    /// Smallest step reachable by halving before the solve is abandoned.
    pub min_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mode: IntegratorMode::FaithfulMidpoint,
            dt: 1e-3,
            tolerance: 1e-12,
            max_iterations: 50,
            closure: Closure::Taylor2,
            min_step: 1e-10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(SnlsError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return Err(SnlsError::Config(format!("tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(SnlsError::Config("max_iterations must be at least 1".into()));
        }
        if self.min_step.is_nan() || self.min_step <= 0.0 {
            return Err(SnlsError::Config(format!("min_step must be positive, got {}", self.min_step)));
        }
        Ok(())
    }
}

/// `S_n u_0` rescaled to the `H`-norm of `u_0`, or zero when `S_n u_0 = 0`.
pub fn renormalize_initial(model: &SpectralModel, level: &GalerkinLevel, u0: &CVector) -> Result<CVector> {
    if u0.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
        return Err(SnlsError::Config("initial data must be finite".into()));
    }
    let smoothed = apply_sn(model, level, u0)?;
    let norm = smoothed.norm();
    if norm == 0.0 {
        return Ok(smoothed);
    }
    Ok(smoothed * Complex64::new(u0.norm() / norm, 0.0))
}

/// The Galerkin equation at one level.
#[derive(Debug, Clone)]
pub struct GalerkinProblem {
    model: Arc<SpectralModel>,
    level: GalerkinLevel,
    nonlinearity: Option<Nonlinearity>,
    symbols: Vec<Symbol>,
    noise: NoiseOperators,
    measure: IntensityMeasure,
    moments: NoiseMoments,
    raw_initial: CVector,
    initial: CVector,
    horizon: f64,
}

impl GalerkinProblem {
    /// `u0` is given on (a prefix of) the model's full mode list.
    pub fn new(
        model: Arc<SpectralModel>,
        n: u32,
        nonlinearity: Option<Nonlinearity>,
        symbols: Vec<Symbol>,
        measure: IntensityMeasure,
        u0: CVector,
        horizon: f64,
    ) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(SnlsError::Config(format!("horizon must be nonnegative, got {horizon}")));
        }
        if let Some(nl) = &nonlinearity {
            nl.validate_for(model.domain().dimension(), model.beta())?;
        }
        measure.validate()?;
        if measure.dimension() != symbols.len() {
            return Err(SnlsError::Config(format!(
                "measure lives in R^{} but {} noise symbols were given",
                measure.dimension(),
                symbols.len()
            )));
        }
        let level = model.level(n)?;
        let noise = assemble_noise_matrices(&model, &level, &symbols)?;
        let moments = compute_moments(&measure);
        let initial = renormalize_initial(&model, &level, &u0)?;
        Ok(GalerkinProblem {
            model,
            level,
            nonlinearity,
            symbols,
            noise,
            measure,
            moments,
            raw_initial: u0,
            initial,
            horizon,
        })
    }

    /// The same equation on another dyadic level.
    pub fn at_level(&self, n: u32) -> Result<Self> {
        Self::new(
            Arc::clone(&self.model),
            n,
            self.nonlinearity,
            self.symbols.clone(),
            self.measure.clone(),
            self.raw_initial.clone(),
            self.horizon,
        )
    }

    pub fn model(&self) -> &SpectralModel {
        &self.model
    }

    pub fn shared_model(&self) -> Arc<SpectralModel> {
        Arc::clone(&self.model)
    }

    pub fn level(&self) -> &GalerkinLevel {
        &self.level
    }

    pub fn nonlinearity(&self) -> Option<&Nonlinearity> {
        self.nonlinearity.as_ref()
    }

    pub fn noise(&self) -> &NoiseOperators {
        &self.noise
    }

    pub fn measure(&self) -> &IntensityMeasure {
        &self.measure
    }

    pub fn moments(&self) -> &NoiseMoments {
        &self.moments
    }

    /// Renormalized initial data on `H_n`.
    pub fn initial(&self) -> &CVector {
        &self.initial
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }
}

/// Time series of one trajectory. The state recorded at a jump time is the
/// post-jump value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrajectoryRecord {
    pub level: u32,
    pub times: Vec<f64>,
    #[serde(skip)]
    pub states: Vec<CVector>,
    pub events: Vec<JumpEvent>,
    pub mass: Vec<f64>,
    pub kinetic: Vec<f64>,
    pub potential: Vec<f64>,
    pub energy: Vec<f64>,
    /// `‖u(t)‖_{E_A}`.
    pub energy_norm: Vec<f64>,
    /// `σ²_ε` of the omitted small-jump martingale.
    pub variance_budget: f64,
}

impl TrajectoryRecord {
    pub fn empty(level: u32, variance_budget: f64) -> Self {
        TrajectoryRecord {
            level,
            times: Vec::new(),
            states: Vec::new(),
            events: Vec::new(),
            mass: Vec::new(),
            kinetic: Vec::new(),
            potential: Vec::new(),
            energy: Vec::new(),
            energy_norm: Vec::new(),
            variance_budget,
        }
    }

    pub fn push(&mut self, time: f64, state: CVector, report: &EnergyReport, energy_norm: f64) {
        self.times.push(time);
        self.states.push(state);
        self.mass.push(report.mass);
        self.kinetic.push(report.kinetic);
        self.potential.push(report.potential);
        self.energy.push(report.total);
        self.energy_norm.push(energy_norm);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&CVector> {
        self.states.last()
    }

    /// `max_t |‖u(t)‖² - ‖u(0)‖²| / ‖u(0)‖²`.
    pub fn max_relative_mass_drift(&self) -> f64 {
        let Some(&m0) = self.mass.first() else { return 0.0 };
        if m0 == 0.0 {
            return self.mass.iter().cloned().fold(0.0, f64::max);
        }
        self.mass.iter().map(|m| (m - m0).abs() / m0).fold(0.0, f64::max)
    }
}

/// Everything the integrator needs that does not depend on the noise path;
/// built once and shared by every trajectory of an ensemble.
#[derive(Debug)]
pub struct Stepper<'a> {
    problem: &'a GalerkinProblem,
    config: SolverConfig,
    eigenvalues: DVector<f64>,
    /// `iB_n(m_ε) + D_ε`, or `None` when it vanishes.
    noise_drift: Option<CMatrix>,
    atom_cache: Vec<Option<HermitianExp>>,
}

struct NotConverged;

impl<'a> Stepper<'a> {
    pub fn new(problem: &'a GalerkinProblem, config: SolverConfig) -> Result<Self> {
        config.validate()?;
        let dim = problem.level.dim;
        let noise = &problem.noise;
        let i = Complex64::new(0.0, 1.0);
        let mut drift = noise.b_of_l(&problem.moments.mean_vector)? * i;
        match config.closure {
            Closure::Taylor2 => {
                let c = &problem.moments.second_moment_matrix;
                for (a, ma) in noise.matrices().iter().enumerate() {
                    for (b, mb) in noise.matrices().iter().enumerate() {
                        let w = c[(a, b)];
                        if w != 0.0 {
                            drift -= (ma * mb) * Complex64::new(0.5 * w, 0.0);
                        }
                    }
                }
            }
            Closure::AtomicExact => {
                let MeasureKind::Atomic { atoms } = &problem.measure.kind else {
                    return Err(SnlsError::Config(
                        "the atomic_exact closure requires an atomic intensity measure".into(),
                    ));
                };
                let eps = problem.measure.epsilon;
                for atom in atoms {
                    let r = atom.mark.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if r < eps && atom.weight > 0.0 {
                        let b = noise.b_of_l(&atom.mark)?;
                        let exp = HermitianExp::new(&b)?.matrix(1.0);
                        let term = exp - CMatrix::identity(dim, dim) + b * i;
                        drift += term * Complex64::new(atom.weight, 0.0);
                    }
                }
            }
        }
        let noise_drift = if drift.iter().all(|z| z.norm() == 0.0) { None } else { Some(drift) };
        let atom_cache = match &problem.measure.kind {
            MeasureKind::Atomic { atoms } if noise.count() > 1 => atoms
                .iter()
                .map(|a| {
                    let r = a.mark.iter().map(|x| x * x).sum::<f64>().sqrt();
                    if r >= problem.measure.epsilon && a.weight > 0.0 {
                        noise.propagator(&a.mark).map(|(exp, _)| Some(exp.into_owned()))
                    } else {
                        Ok(None)
                    }
                })
                .collect::<Result<Vec<_>>>()?,
            _ => Vec::new(),
        };
        let eigenvalues = DVector::from_fn(dim, |j, _| problem.model.modes()[j].lambda_a);
        Ok(Stepper { problem, config, eigenvalues, noise_drift, atom_cache })
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// The combined noise drift matrix `iB_n(m_ε) + D_ε`.
    pub fn noise_drift(&self) -> Option<&CMatrix> {
        self.noise_drift.as_ref()
    }

    fn check(&self, u: &CVector) -> Result<()> {
        if u.len() != self.problem.level.dim {
            return Err(SnlsError::Shape { expected: self.problem.level.dim, got: u.len(), context: "state" });
        }
        Ok(())
    }

    /// Right-hand side between jumps.
    pub fn drift(&self, u: &CVector) -> Result<CVector> {
        self.check(u)?;
        let mut out = self.non_diagonal_drift(u)?;
        for (o, (x, lam)) in out.iter_mut().zip(u.iter().zip(self.eigenvalues.iter())) {
            *o += x * Complex64::new(0.0, -lam);
        }
        Ok(out)
    }

    /// `-iP_n F(u) + G u`: everything except the diagonal linear term.
    fn non_diagonal_drift(&self, u: &CVector) -> Result<CVector> {
        let mut out = match &self.problem.nonlinearity {
            Some(nl) => eval_f(&self.problem.model, nl, u)? * Complex64::new(0.0, -1.0),
            None => CVector::zeros(u.len()),
        };
        if let Some(g) = &self.noise_drift {
            out.gemv(Complex64::new(1.0, 0.0), g, u, Complex64::new(1.0, 0.0));
        }
        Ok(out)
    }

    /// Solves `v = u + τ drift((u+v)/2)` by iterating on the non-diagonal
    /// part only: `v = (I + iτΛ/2)^{-1}[(I - iτΛ/2)u + τN((u+v)/2)]`.
    fn midpoint(&self, u: &CVector, tau: f64) -> Result<std::result::Result<CVector, NotConverged>> {
        let half = Complex64::new(0.5, 0.0);
        let resolvent: Vec<Complex64> =
            self.eigenvalues.iter().map(|lam| Complex64::new(1.0, 0.5 * tau * lam).inv()).collect();
        let explicit = CVector::from_fn(u.len(), |j, _| u[j] * Complex64::new(1.0, -0.5 * tau * self.eigenvalues[j]));
        let solve = |n: CVector| CVector::from_fn(u.len(), |j, _| resolvent[j] * (explicit[j] + n[j] * tau));
        let threshold = self.config.tolerance * u.norm();
        let mut v = solve(self.non_diagonal_drift(u)?);
        for _ in 0..self.config.max_iterations {
            let mid = (u + &v) * half;
            let next = solve(self.non_diagonal_drift(&mid)?);
            let delta = (&next - &v).norm();
            v = next;
            if !delta.is_finite() {
                return Ok(Err(NotConverged));
            }
            if delta <= threshold {
                return Ok(Ok(v));
            }
        }
        Ok(Err(NotConverged))
    }

    fn linear_phase(&self, u: &mut CVector, tau: f64) {
        for (c, lam) in u.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= Complex64::from_polar(1.0, -tau * lam);
        }
    }

    fn split(&self, u: &CVector, tau: f64) -> Result<CVector> {
        let mut v = u.clone();
        self.linear_phase(&mut v, 0.5 * tau);
        if let Some(nl) = &self.problem.nonlinearity {
            let model = &self.problem.model;
            let mut grid = model.to_grid(v.as_slice())?;
            for g in grid.iter_mut() {
                let r = g.norm();
                if r > 0.0 {
                    *g *= Complex64::from_polar(1.0, -tau * nl.sign_factor() * r.powf(nl.alpha - 1.0));
                }
            }
            v = DVector::from_vec(model.from_grid(&grid, v.len())?);
        }
        if let Some(g) = &self.noise_drift {
            let dv = g * &v;
            v.axpy(Complex64::new(tau, 0.0), &dv, Complex64::new(1.0, 0.0));
        }
        self.linear_phase(&mut v, 0.5 * tau);
        if v.iter().any(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(SnlsError::Numeric("split step produced non-finite values".into()));
        }
        Ok(v)
    }

    /// Advance by `tau` (either sign) without jumps.
    pub fn step(&self, u: &CVector, tau: f64) -> Result<CVector> {
        self.check(u)?;
        if tau == 0.0 {
            return Ok(u.clone());
        }
        match self.config.mode {
            IntegratorMode::SplitStep => self.split(u, tau),
            IntegratorMode::FaithfulMidpoint => match self.midpoint(u, tau)? {
                Ok(v) => Ok(v),
                Err(NotConverged) => {
                    let half = 0.5 * tau;
                    if half.abs() < self.config.min_step {
                        return Err(SnlsError::Numeric(format!(
                            "midpoint iteration failed to converge down to step {}",
                            tau.abs()
                        )));
                    }
                    let mid = self.step(u, half)?;
                    self.step(&mid, half)
                }
            },
        }
    }

    /// Apply `e^{-iB_n(l)}` for one event.
    pub fn apply_jump(&self, event: &JumpEvent, u: &CVector) -> Result<CVector> {
        self.check(u)?;
        if let Some(Some(exp)) = event.atom.and_then(|j| self.atom_cache.get(j)) {
            return Ok(exp.apply(1.0, u));
        }
        jump_map(&self.problem.noise, &event.mark, u)
    }

    fn record_point(&self, record: &mut TrajectoryRecord, t: f64, u: &CVector) -> Result<()> {
        let model = &self.problem.model;
        let report = energy(model, self.problem.nonlinearity.as_ref(), u)?;
        record.push(t, u.clone(), &report, energy_norm(model, u));
        Ok(())
    }

    /// Integrate along a given event sequence.
    pub fn run(&self, events: &[JumpEvent]) -> Result<TrajectoryRecord> {
        let horizon = self.problem.horizon;
        if events.windows(2).any(|w| w[0].time > w[1].time) || events.iter().any(|e| !(0.0..=horizon).contains(&e.time))
        {
            return Err(SnlsError::Domain("events must be sorted and lie in [0, T]".into()));
        }
        let mut record = TrajectoryRecord::empty(self.problem.level.n, self.problem.moments.variance_budget);
        let mut u = self.problem.initial.clone();
        let mut next_event = 0;
        while next_event < events.len() && events[next_event].time <= 0.0 {
            u = self.apply_jump(&events[next_event], &u)?;
            record.events.push(events[next_event].clone());
            next_event += 1;
        }
        self.record_point(&mut record, 0.0, &u)?;
        if horizon == 0.0 {
            return Ok(record);
        }
        let dt = self.config.dt;
        let steps = ((horizon / dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let uniform = |k: usize| if k >= steps { horizon } else { k as f64 * dt };
        let mut k = 1;
        let mut t = 0.0;
        while t < horizon {
            let grid_time = uniform(k);
            let target = match events.get(next_event) {
                Some(e) if e.time < grid_time => e.time,
                _ => grid_time,
            };
            if target > t {
                u = self.step(&u, target - t)?;
            }
            t = target;
            while next_event < events.len() && events[next_event].time <= t {
                u = self.apply_jump(&events[next_event], &u)?;
                record.events.push(events[next_event].clone());
                next_event += 1;
            }
            if grid_time == target {
                k += 1;
            }
            self.record_point(&mut record, t, &u)?;
        }
        Ok(record)
    }

    /// Sample a noise path and integrate along it.
    pub fn simulate<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<TrajectoryRecord> {
        let events = sample_prm(&self.problem.measure, self.problem.horizon, rng)?;
        self.run(&events)
    }
}

/// Right-hand side between jumps for a single state.
pub fn drift(problem: &GalerkinProblem, config: &SolverConfig, state: &CVector) -> Result<CVector> {
    Stepper::new(problem, *config)?.drift(state)
}

/// One integrator step of size `tau` without jumps.
pub fn step_between_jumps(
    problem: &GalerkinProblem,
    config: &SolverConfig,
    state: &CVector,
    tau: f64,
) -> Result<CVector> {
    Stepper::new(problem, *config)?.step(state, tau)
}

pub fn simulate<R: Rng + ?Sized>(
    problem: &GalerkinProblem,
    config: &SolverConfig,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    Stepper::new(problem, *config)?.simulate(rng)
}

/// Two levels driven by the same noise path.
#[derive(Debug, Clone)]
pub struct CoupledRun {
    pub coarse: TrajectoryRecord,
    pub fine: TrajectoryRecord,
    /// `sup_t ‖u_coarse(t) - u_fine(t)‖_{E_A*}` after zero-padding.
    pub sup_distance: f64,
}

/// Run both problems along one sampled event sequence.
pub fn simulate_coupled<R: Rng + ?Sized>(
    coarse: &GalerkinProblem,
    fine: &GalerkinProblem,
    config: &SolverConfig,
    rng: &mut R,
) -> Result<CoupledRun> {
    let events = sample_prm(&fine.measure, fine.horizon, rng)?;
    coupled_along(coarse, fine, config, &events)
}

/// [`simulate_coupled`] for a given event sequence.
pub fn coupled_along(
    coarse: &GalerkinProblem,
    fine: &GalerkinProblem,
    config: &SolverConfig,
    events: &[JumpEvent],
) -> Result<CoupledRun> {
    if coarse.model.dim() != fine.model.dim() || coarse.model.domain() != fine.model.domain() {
        return Err(SnlsError::Config("coupled levels must share one spectral model".into()));
    }
    if coarse.level.n > fine.level.n {
        return Err(SnlsError::Config("the coarse level must not exceed the fine level".into()));
    }
    if coarse.horizon != fine.horizon || coarse.measure != fine.measure {
        return Err(SnlsError::Config("coupled levels must share horizon and measure".into()));
    }
    let a = Stepper::new(coarse, *config)?.run(events)?;
    let b = Stepper::new(fine, *config)?.run(events)?;
    debug_assert_eq!(a.times, b.times);
    let sup_distance =
        a.states.iter().zip(&b.states).map(|(x, y)| dual_distance(&fine.model, x, y)).fold(0.0, f64::max);
    Ok(CoupledRun { coarse: a, fine: b, sup_distance })
}
