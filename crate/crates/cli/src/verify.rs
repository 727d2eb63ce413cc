//! Machine-checkable properties run by `snls verify`, each reported with its
//! measured value and limit.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use snls_core::diagnostics::{cadlag_modulus, energy, energy_derivative, energy_norm};
use snls_core::marcus::{
    jump_difference_1, jump_difference_2, jump_map, marcus_flow, NoiseOperators, HERMITIAN_TOLERANCE,
};
use snls_core::noise::MeasureKind;
use snls_core::nonlinear::{eval_f, eval_fhat, Nonlinearity};
use snls_core::solver::{Closure, GalerkinProblem, IntegratorMode, SolverConfig, Stepper};
use snls_core::spectral::{mihlin_check, rho_derivative_sup, sobolev_norm, Space, SpectralModel};
use snls_core::{CMatrix, CVector, Complex64, SnlsError};

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutputDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub measured: f64,
    pub limit: f64,
    pub detail: String,
}

impl Check {
    /// Passes when `measured <= limit`.
    fn at_most(name: &'static str, measured: f64, limit: f64) -> Self {
        let status = if measured <= limit { Status::Pass } else { Status::Fail };
        Check { name, status, measured, limit, detail: String::new() }
    }

    /// Passes when `measured >= limit`.
    fn at_least(name: &'static str, measured: f64, limit: f64) -> Self {
        let status = if measured >= limit { Status::Pass } else { Status::Fail };
        Check { name, status, measured, limit, detail: String::new() }
    }

    fn skip(name: &'static str, detail: &str) -> Self {
        Check { name, status: Status::Skip, measured: f64::NAN, limit: f64::NAN, detail: detail.into() }
    }

    fn error(name: &'static str, err: impl std::fmt::Display) -> Self {
        Check { name, status: Status::Fail, measured: f64::NAN, limit: f64::NAN, detail: err.to_string() }
    }

    fn with(mut self, detail: String) -> Self {
        self.detail = detail;
        self
    }

    pub fn line(&self) -> String {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skip => "SKIP",
        };
        let mut line = format!("{tag} {:<28} measured={:e} limit={:e}", self.name, self.measured, self.limit);
        if !self.detail.is_empty() {
            line.push_str("  ");
            line.push_str(&self.detail);
        }
        line
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
    pub failures: usize,
}

impl VerifyReport {
    fn new(checks: Vec<Check>) -> Self {
        let failures = checks.iter().filter(|c| c.status == Status::Fail).count();
        VerifyReport { checks, failures }
    }

    pub fn text(&self) -> String {
        let mut s: String = self.checks.iter().map(|c| c.line() + "\n").collect();
        s.push_str(&format!("{} checks, {} failed\n", self.checks.len(), self.failures));
        s
    }
}

fn normal_state(rng: &mut ChaCha8Rng, dim: usize) -> CVector {
    DVector::from_fn(dim, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

fn unit_state(rng: &mut ChaCha8Rng, dim: usize) -> CVector {
    let x = normal_state(rng, dim);
    let n = x.norm();
    x / Complex64::new(n, 0.0)
}

/// Uniform direction with radius uniform in `(0, 1]`.
fn mark_in_ball(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let dir: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let r: f64 = 1.0 - rng.random::<f64>();
    dir.iter().map(|v| v * r / norm).collect()
}

fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn inner_re(a: &CVector, b: &CVector) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x * y.conj()).re).sum()
}

/// Least-squares slope of `log10 err` against `log10 h`.
pub fn observed_order(hs: &[f64], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = hs.iter().map(|h| h.log10()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.max(f64::MIN_POSITIVE).log10()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Non-Hermitian perturbation of the first operator, used for fault injection.
pub fn corrupt(ops: &NoiseOperators) -> Result<NoiseOperators, SnlsError> {
    let mut matrices: Vec<CMatrix> = ops.matrices().to_vec();
    if ops.dim() >= 2 {
        matrices[0][(0, 1)] += Complex64::new(1e-3, 0.0);
    } else {
        matrices[0][(0, 0)] += Complex64::new(0.0, 1e-3);
    }
    let sups = vec![0.0; matrices.len()];
    NoiseOperators::from_matrices(matrices, ops.energy_weights().clone(), &sups)
}

struct Context<'a> {
    config: &'a RunConfig,
    model: &'a SpectralModel,
    problem: &'a GalerkinProblem,
    ops: &'a NoiseOperators,
    rng: ChaCha8Rng,
}

impl Context<'_> {
    fn cases(&self) -> usize {
        self.config.verify.cases
    }

    fn noise_dim(&self) -> usize {
        self.ops.count()
    }
}

fn check_renormalization(ctx: &mut Context) -> Check {
    let u0 = match ctx.config.initial_coefficients(ctx.model) {
        Ok(u) => u,
        Err(e) => return Check::error("renormalized_initial_norm", e),
    };
    let target = u0.norm();
    let got = ctx.problem.initial().norm();
    if got == 0.0 {
        return Check::skip("renormalized_initial_norm", "S_n u0 = 0");
    }
    Check::at_most("renormalized_initial_norm", (got - target).abs() / target, 1e-14)
}

fn check_hermitian(ctx: &mut Context) -> Check {
    Check::at_most("noise_hermitian", ctx.ops.asymmetry(), HERMITIAN_TOLERANCE)
}

fn check_unitarity(ctx: &mut Context) -> Vec<Check> {
    let (mut norm_dev, mut group_dev) = (0.0f64, 0.0f64);
    for _ in 0..ctx.cases() {
        let x = normal_state(&mut ctx.rng, ctx.ops.dim());
        let l = mark_in_ball(&mut ctx.rng, ctx.ops.count());
        let minus: Vec<f64> = l.iter().map(|v| -v).collect();
        let result = jump_map(ctx.ops, &l, &x).and_then(|y| Ok((y.clone(), jump_map(ctx.ops, &minus, &y)?)));
        match result {
            Ok((y, back)) => {
                norm_dev = norm_dev.max((y.norm() - x.norm()).abs() / x.norm());
                group_dev = group_dev.max((back - &x).norm() / x.norm());
            }
            Err(e) => {
                return vec![Check::error("jump_unitarity", &e), Check::error("jump_group_law", &e)];
            }
        }
    }
    vec![
        Check::at_most("jump_unitarity", norm_dev, ctx.config.verify.unitarity_tolerance),
        Check::at_most("jump_group_law", group_dev, ctx.config.verify.group_tolerance),
    ]
}

fn check_jump_differences(ctx: &mut Context) -> Check {
    let b_h = ctx.ops.b_h();
    let mut violations = 0usize;
    let mut worst = 0.0f64;
    for _ in 0..ctx.cases() {
        let x = normal_state(&mut ctx.rng, ctx.ops.dim());
        let l = mark_in_ball(&mut ctx.rng, ctx.ops.count());
        let r = euclid(&l);
        let (d1, d2) = match (jump_difference_1(ctx.ops, &l, &x), jump_difference_2(ctx.ops, &l, &x)) {
            (Ok(a), Ok(b)) => (a.norm(), b.norm()),
            (Err(e), _) | (_, Err(e)) => return Check::error("jump_difference_bounds", e),
        };
        let bound1 = b_h.sqrt() * r * x.norm();
        let bound2 = 0.5 * b_h * r * r * x.norm();
        // relative slack for rounding in the matrix exponential
        if d1 > bound1 * (1.0 + 1e-12) + 1e-15 || d2 > bound2 * (1.0 + 1e-12) + 1e-15 {
            violations += 1;
        }
        worst = worst.max(d1 / bound1).max(d2 / bound2);
    }
    Check::at_most("jump_difference_bounds", violations as f64, 0.0).with(format!("max ratio {worst:.6}"))
}

fn check_marcus_flow(ctx: &mut Context) -> Check {
    let mut worst = 0.0f64;
    for _ in 0..ctx.cases().min(50) {
        let x = unit_state(&mut ctx.rng, ctx.ops.dim());
        let l = mark_in_ball(&mut ctx.rng, ctx.ops.count());
        let diff = marcus_flow(ctx.ops, 1.0, &l, &x, ctx.config.verify.ode_tolerance)
            .and_then(|a| Ok((a - jump_map(ctx.ops, &l, &x)?).norm()));
        match diff {
            Ok(d) => worst = worst.max(d),
            Err(e) => return Check::error("marcus_flow_agreement", e),
        }
    }
    Check::at_most("marcus_flow_agreement", worst, ctx.config.verify.flow_tolerance)
}

fn check_antiderivative(ctx: &mut Context, nl: &Nonlinearity) -> Check {
    let hs = [1e-2, 1e-3, 1e-4, 1e-5];
    let dim = ctx.problem.level().dim;
    let mut worst = f64::INFINITY;
    for _ in 0..20 {
        let u = unit_state(&mut ctx.rng, dim);
        let v = unit_state(&mut ctx.rng, dim);
        let result = (|| -> Result<f64, SnlsError> {
            let exact = inner_re(&eval_f(ctx.model, nl, &u)?, &v);
            let f0 = eval_fhat(ctx.model, nl, &u)?;
            let errs = hs
                .iter()
                .map(|&h| Ok(((eval_fhat(ctx.model, nl, &(&u + &v * Complex64::new(h, 0.0)))? - f0) / h - exact).abs()))
                .collect::<Result<Vec<f64>, SnlsError>>()?;
            Ok(observed_order(&hs, &errs))
        })();
        match result {
            Ok(order) => worst = worst.min(order),
            Err(e) => return Check::error("antiderivative_order", e),
        }
    }
    Check::at_least("antiderivative_order", worst, 0.9)
}

fn check_energy_jumps(ctx: &mut Context, nl: &Nonlinearity) -> Check {
    let dim = ctx.problem.level().dim;
    let x = unit_state(&mut ctx.rng, dim);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let dir = mark_in_ball(&mut ctx.rng, ctx.ops.count());
        let norm = euclid(&dir);
        let result = (|| -> Result<f64, SnlsError> {
            let e0 = energy(ctx.model, Some(nl), &x)?.total;
            let (mut first, mut second) = (Vec::new(), Vec::new());
            for r in [1e-1, 1e-2, 1e-3, 1e-4] {
                let l: Vec<f64> = dir.iter().map(|v| v / norm * r).collect();
                let de = energy(ctx.model, Some(nl), &jump_map(ctx.ops, &l, &x)?)?.total - e0;
                let ibx = ctx.ops.apply_b(&l, &x)? * Complex64::new(0.0, 1.0);
                let lin = energy_derivative(ctx.model, Some(nl), &x, &ibx)?;
                first.push(de.abs() / r);
                second.push((de + lin).abs() / (r * r));
            }
            let spread =
                |v: &[f64]| v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min);
            Ok(spread(&first).max(spread(&second)))
        })();
        match result {
            Ok(s) => worst = worst.max(s),
            Err(e) => return Check::error("energy_jump_scaling", e),
        }
    }
    Check::at_most("energy_jump_scaling", worst, 2.0)
}

fn check_mass_conservation(ctx: &mut Context) -> Check {
    if !matches!(ctx.problem.measure().kind, MeasureKind::Atomic { .. }) {
        return Check::skip("mass_conservation", "only atomic measures admit the exact closure");
    }
    let config =
        SolverConfig { mode: IntegratorMode::FaithfulMidpoint, closure: Closure::AtomicExact, ..ctx.config.solver };
    let drift = Stepper::new(ctx.problem, config).and_then(|s| s.simulate(&mut ctx.rng));
    match drift {
        Ok(r) => Check::at_most("mass_conservation", r.max_relative_mass_drift(), ctx.config.verify.mass_tolerance)
            .with(format!("{} jumps", r.events.len())),
        Err(e) => Check::error("mass_conservation", e),
    }
}

fn check_reversibility(ctx: &mut Context) -> Check {
    let linear = match GalerkinProblem::new(
        ctx.problem.shared_model(),
        ctx.problem.level().n,
        None,
        ctx.config.noise.symbols.clone(),
        snls_core::noise::IntensityMeasure::zero(ctx.noise_dim()),
        ctx.problem.initial().clone(),
        ctx.problem.horizon(),
    ) {
        Ok(p) => p,
        Err(e) => return Check::error("midpoint_reversibility", e),
    };
    let x = ctx.problem.initial().clone();
    let result = Stepper::new(&linear, SolverConfig { mode: IntegratorMode::FaithfulMidpoint, ..ctx.config.solver })
        .and_then(|s| {
            let tau = ctx.config.solver.dt;
            s.step(&s.step(&x, tau)?, -tau)
        });
    match result {
        Ok(back) if x.norm() > 0.0 => Check::at_most("midpoint_reversibility", (back - &x).norm() / x.norm(), 1e-10),
        Ok(_) => Check::skip("midpoint_reversibility", "zero initial data"),
        Err(e) => Check::error("midpoint_reversibility", e),
    }
}

fn check_parseval_and_gauge(ctx: &mut Context) -> Vec<Check> {
    let dim = ctx.problem.level().dim;
    let u = unit_state(&mut ctx.rng, dim);
    let nl = ctx.problem.nonlinearity().copied();
    let result = (|| -> Result<(f64, f64), SnlsError> {
        let grid = sobolev_norm(ctx.model, &u, Space::Lp(2.0))?;
        let parseval = (grid * grid - u.norm_squared()).abs();
        let a = energy(ctx.model, nl.as_ref(), &u)?;
        let b = energy(ctx.model, nl.as_ref(), &(&u * Complex64::from_polar(1.0, 0.83)))?;
        Ok((parseval, (a.total - b.total).abs().max((a.mass - b.mass).abs())))
    })();
    match result {
        Ok((p, g)) => {
            vec![Check::at_most("parseval_mass", p, 1e-10), Check::at_most("energy_gauge_invariance", g, 1e-12)]
        }
        Err(e) => vec![Check::error("parseval_mass", &e), Check::error("energy_gauge_invariance", &e)],
    }
}

/// All 3-jump step paths over a 6-point grid against exhaustive enumeration.
fn check_modulus_oracle() -> Check {
    let times = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let horizon = 1.2;
    let deltas = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.72, 0.8, 1.0, 1.2];
    let steps = [-2.0, -0.5, 1.0, 3.0];
    let mut paths = 0usize;
    let mut mismatches = 0usize;
    for a in 1..times.len() {
        for b in a + 1..times.len() {
            for c in b + 1..times.len() {
                for &ja in &steps {
                    for &jb in &steps {
                        for &jc in &steps {
                            let values: Vec<f64> = (0..times.len())
                                .map(|i| {
                                    let mut v = 0.0;
                                    if i >= a {
                                        v += ja;
                                    }
                                    if i >= b {
                                        v += jb;
                                    }
                                    if i >= c {
                                        v += jc;
                                    }
                                    v
                                })
                                .collect();
                            for &delta in &deltas {
                                paths += 1;
                                let dp = cadlag_modulus(&times, &values, horizon, delta);
                                if dp.ok() != Some(enumerate_modulus(&times, &values, horizon, delta)) {
                                    mismatches += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Check::at_most("modulus_oracle", mismatches as f64, 0.0).with(format!("{paths} (path, δ) pairs"))
}

/// Minimum over every admissible subset of partition points.
pub fn enumerate_modulus(times: &[f64], values: &[f64], horizon: f64, delta: f64) -> f64 {
    let mut points = times.to_vec();
    if *points.last().unwrap() < horizon {
        points.push(horizon);
    }
    let inner = points.len() - 2;
    let mut best = f64::INFINITY;
    for mask in 0u32..(1 << inner) {
        let mut cut = vec![0];
        cut.extend((0..inner).filter(|b| mask >> b & 1 == 1).map(|b| b + 1));
        cut.push(points.len() - 1);
        if cut.windows(2).any(|w| points[w[1]] - points[w[0]] < delta) {
            continue;
        }
        let worst = cut
            .windows(2)
            .map(|w| {
                let cell = &values[w[0]..w[1]];
                cell.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    - cell.iter().cloned().fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max);
        best = best.min(worst);
    }
    best
}

fn check_modulus_monotone(ctx: &mut Context) -> Check {
    let mut violations = 0usize;
    for _ in 0..ctx.cases() {
        let len = ctx.rng.random_range(2..12);
        let mut times: Vec<f64> = (0..len).map(|i| i as f64 * 0.1).collect();
        times[1..].iter_mut().for_each(|t| *t += ctx.rng.random::<f64>() * 0.05);
        let values: Vec<f64> = (0..len).map(|_| ctx.rng.sample(StandardNormal)).collect();
        let horizon = *times.last().unwrap() + 0.1;
        let mut prev = 0.0;
        for k in 1..=20 {
            let delta = if k == 20 { horizon } else { horizon * k as f64 / 20.0 };
            match cadlag_modulus(&times, &values, horizon, delta) {
                Ok(w) => {
                    if w < prev {
                        violations += 1;
                    }
                    prev = w;
                }
                Err(e) => return Check::error("modulus_monotone", e),
            }
        }
    }
    Check::at_most("modulus_monotone", violations as f64, 0.0)
}

fn check_mihlin() -> Check {
    let mut excess = f64::NEG_INFINITY;
    let mut drift = 0.0f64;
    let reference = match mihlin_check(0, 2) {
        Ok(v) => v,
        Err(e) => return Check::error("mihlin_uniformity", e),
    };
    for n in 0..=10 {
        let values = match mihlin_check(n, 2) {
            Ok(v) => v,
            Err(e) => return Check::error("mihlin_uniformity", e),
        };
        for (k, v) in values.iter().enumerate() {
            excess = excess.max(v - (2f64.powi(k as i32) * rho_derivative_sup(k) + 1e-9));
            if k >= 1 {
                drift = drift.max((v - reference[k]).abs());
            }
        }
    }
    let status = if excess <= 0.0 && drift == 0.0 { Status::Pass } else { Status::Fail };
    Check {
        name: "mihlin_uniformity",
        status,
        measured: excess,
        limit: 0.0,
        detail: format!("variation across n {drift:e}"),
    }
}

fn check_determinism(ctx: &mut Context) -> Check {
    let seed: u64 = ctx.rng.random();
    let result = Stepper::new(ctx.problem, ctx.config.solver).and_then(|s| {
        let a = s.simulate(&mut ChaCha8Rng::seed_from_u64(seed))?;
        let b = s.simulate(&mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(a == b)
    });
    match result {
        Ok(same) => Check::at_most("determinism", if same { 0.0 } else { 1.0 }, 0.0),
        Err(e) => Check::error("determinism", e),
    }
}

fn check_energy_norm_positive(ctx: &mut Context) -> Check {
    let u = ctx.problem.initial();
    let e = energy_norm(ctx.model, u);
    Check::at_least("energy_norm_dominates_mass", e - u.norm(), -1e-12 * u.norm())
}

/// Run every check on the finest configured level.
pub fn run_checks(config: &RunConfig) -> Result<VerifyReport, CliError> {
    config.validate()?;
    let model = config.spectral_model()?;
    let problem = config.problem_on(model.clone(), config.finest_level())?;
    let ops = if config.verify.corrupt_hermitian { corrupt(problem.noise())? } else { problem.noise().clone() };
    let mut ctx = Context {
        config,
        model: &model,
        problem: &problem,
        ops: &ops,
        rng: ChaCha8Rng::seed_from_u64(config.run.seed),
    };
    let mut checks = vec![check_renormalization(&mut ctx), check_hermitian(&mut ctx)];
    checks.extend(check_unitarity(&mut ctx));
    checks.push(check_jump_differences(&mut ctx));
    checks.push(check_marcus_flow(&mut ctx));
    match problem.nonlinearity().copied() {
        Some(nl) => {
            checks.push(check_antiderivative(&mut ctx, &nl));
            checks.push(check_energy_jumps(&mut ctx, &nl));
        }
        None => {
            checks.push(Check::skip("antiderivative_order", "F = 0"));
            checks.push(Check::skip("energy_jump_scaling", "F = 0"));
        }
    }
    checks.push(check_mass_conservation(&mut ctx));
    checks.push(check_reversibility(&mut ctx));
    checks.extend(check_parseval_and_gauge(&mut ctx));
    checks.push(check_energy_norm_positive(&mut ctx));
    checks.push(check_modulus_oracle());
    checks.push(check_modulus_monotone(&mut ctx));
    checks.push(check_mihlin());
    checks.push(check_determinism(&mut ctx));
    Ok(VerifyReport::new(checks))
}

/// `snls verify`: writes `verify_report.json` and `verify_report.txt`. A
/// configuration error is itself reported as a failed `configuration` check.
pub fn cmd_verify(config: &RunConfig) -> Result<VerifyReport, CliError> {
    let out = OutputDir::create(&config.run.out, &config.hash()?)?;
    let (report, error) = match run_checks(config) {
        Ok(r) => (r, None),
        Err(e @ CliError::Core(SnlsError::Config(_))) | Err(e @ CliError::Parse(_)) => {
            (VerifyReport::new(vec![Check::error("configuration", &e)]), Some(e))
        }
        Err(e) => return Err(e),
    };
    out.write_json("verify_report.json", "verify", &report)?;
    out.write_text("verify_report.txt", &report.text())?;
    print!("{}", report.text());
    match error {
        Some(e) => Err(e),
        None if report.failures > 0 => Err(CliError::ChecksFailed(report.failures)),
        None => Ok(report),
    }
}
