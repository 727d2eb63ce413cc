//! TOML run configuration.
//!
//! ```toml
//! [model]
//! domain = { kind = "torus_1d", length = 6.283185307179586 }
//! beta = 1.0
//! levels = [6]
//!
//! [nonlinearity]
//! alpha = 3.0
//! sign = "defocusing"
//!
//! [noise]
//! symbols = [{ kind = "cos", frequency = [1.0, 0.0], amplitude = 1.0 }]
//!
//! [noise.measure]
//! kind = "atomic"
//! epsilon = 0.0
//! atoms = [{ weight = 1.0, mark = [0.3] }, { weight = 1.0, mark = [-0.3] }]
//!
//! [initial]
//! kind = "profile"
//! real = [{ kind = "constant", value = 1.0 }]
//!
//! [solver]
//! mode = "faithful_midpoint"
//! dt = 1e-3
//! closure = "atomic_exact"
//!
//! [run]
//! horizon = 1.0
//! trajectories = 16
//! seed = 1
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use snls_core::ensemble::Execution;
use snls_core::marcus::Symbol;
use snls_core::noise::IntensityMeasure;
use snls_core::nonlinear::Nonlinearity;
use snls_core::solver::{GalerkinProblem, SolverConfig};
use snls_core::spectral::{build_spectral_model, Domain, SpectralModel};
use snls_core::{CVector, Complex64, SnlsError};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// Absent means `F = 0`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nonlinearity: Option<Nonlinearity>,
    pub noise: NoiseConfig,
    pub initial: InitialData,
    #[serde(default)]
    pub solver: SolverConfig,
    pub run: RunSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub domain: Domain,
    pub beta: f64,
    /// Galerkin levels; `converge` uses the largest as reference.
    pub levels: Vec<u32>,
    #[serde(default = "default_dealias")]
    pub dealias: f64,
}

fn default_dealias() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub symbols: Vec<Symbol>,
    pub measure: IntensityMeasure,
}

/// Initial data before renormalization, expanded on the finest level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    /// `u0 = Σ real + i Σ imag`, projected onto the basis.
    Profile {
        #[serde(default)]
        real: Vec<Symbol>,
        #[serde(default)]
        imag: Vec<Symbol>,
    },
    /// `u0_k = amplitude (1 + |k|²)^(-decay/2) e^{i phase_step (k₁ + k₂)}`.
    PowerLaw {
        amplitude: f64,
        decay: f64,
        #[serde(default)]
        phase_step: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: f64,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub execution: Execution,
    /// Also write every coefficient vector.
    #[serde(default)]
    pub write_states: bool,
    #[serde(default = "default_orders")]
    pub moment_orders: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aldous: Option<AldousConfig>,
}

fn default_trajectories() -> usize {
    1
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

fn default_orders() -> Vec<f64> {
    vec![1.0, 2.0, 4.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AldousConfig {
    pub thetas: Vec<f64>,
    pub eta: f64,
    /// Base time `t` of the stopping rule.
    pub time: f64,
    #[serde(default)]
    pub first_jump_after: bool,
}

/// Thresholds of `verify`; every tolerance must be positive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySection {
    pub cases: usize,
    pub mass_tolerance: f64,
    pub unitarity_tolerance: f64,
    pub group_tolerance: f64,
    pub flow_tolerance: f64,
    pub ode_tolerance: f64,
    /// Replace the first noise matrix by a non-Hermitian perturbation.
    pub corrupt_hermitian: bool,
}

impl Default for VerifySection {
    fn default() -> Self {
        VerifySection {
            cases: 200,
            mass_tolerance: 1e-10,
            unitarity_tolerance: 1e-12,
            group_tolerance: 1e-10,
            flow_tolerance: 1e-8,
            ode_tolerance: 1e-10,
            corrupt_hermitian: false,
        }
    }
}

impl VerifySection {
    pub fn validate(&self) -> Result<(), SnlsError> {
        let tolerances = [
            ("mass_tolerance", self.mass_tolerance),
            ("unitarity_tolerance", self.unitarity_tolerance),
            ("group_tolerance", self.group_tolerance),
            ("flow_tolerance", self.flow_tolerance),
            ("ode_tolerance", self.ode_tolerance),
        ];
        for (name, value) in tolerances {
            if !(value > 0.0 && value.is_finite()) {
                return Err(SnlsError::Config(format!("verify.{name} must be positive, got {value}")));
            }
        }
        if self.cases == 0 {
            return Err(SnlsError::Config("verify.cases must be at least 1".into()));
        }
        Ok(())
    }
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub trajectories: Option<usize>,
    pub threads: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let config: RunConfig = toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.run.seed = seed;
        }
        if let Some(out) = &overrides.out {
            self.run.out = out.clone();
        }
        if let Some(k) = overrides.trajectories {
            self.run.trajectories = k;
        }
        if let Some(k) = overrides.threads {
            self.run.threads = Some(k);
        }
    }

    /// First 16 hex digits of SHA-256 over the canonical TOML form. Output
    /// directory, thread count and execution mode are cleared: results do not
    /// depend on them.
    pub fn hash(&self) -> Result<String, CliError> {
        let mut canonical = self.clone();
        canonical.run.out = PathBuf::new();
        canonical.run.threads = None;
        canonical.run.execution = Execution::default();
        let digest = Sha256::digest(canonical.to_toml()?.as_bytes());
        Ok(hex::encode(&digest[..8]))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.model.levels.is_empty() {
            return Err(SnlsError::Config("model.levels must not be empty".into()).into());
        }
        if self.run.trajectories == 0 {
            return Err(SnlsError::Config("run.trajectories must be at least 1".into()).into());
        }
        if self.run.threads == Some(0) {
            return Err(SnlsError::Config("run.threads must be at least 1".into()).into());
        }
        if self.run.moment_orders.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(SnlsError::Config("run.moment_orders must be positive".into()).into());
        }
        if let Some(a) = &self.run.aldous {
            if a.eta.is_nan()
                || a.eta <= 0.0
                || a.thetas.iter().any(|t| t.is_nan() || *t < 0.0)
                || a.time.is_nan()
                || a.time < 0.0
            {
                return Err(SnlsError::Config("run.aldous needs eta > 0, thetas >= 0 and time >= 0".into()).into());
            }
        }
        if let InitialData::PowerLaw { amplitude, decay, phase_step } = self.initial {
            if ![amplitude, decay, phase_step].iter().all(|v| v.is_finite()) {
                return Err(SnlsError::Config("initial power law parameters must be finite".into()).into());
            }
        }
        self.solver.validate()?;
        self.verify.validate()?;
        self.problem(self.model.levels[0])?;
        Ok(())
    }

    pub fn finest_level(&self) -> u32 {
        self.model.levels.iter().copied().max().unwrap_or(0)
    }

    pub fn spectral_model(&self) -> Result<Arc<SpectralModel>, CliError> {
        Ok(Arc::new(build_spectral_model(self.model.domain, self.model.beta, self.finest_level(), self.model.dealias)?))
    }

    /// Initial data on the full mode list of `model`.
    pub fn initial_coefficients(&self, model: &SpectralModel) -> Result<CVector, CliError> {
        let domain = model.domain();
        match &self.initial {
            InitialData::Profile { real, imag } => {
                let sum = |terms: &[Symbol], x: [f64; 2]| terms.iter().map(|s| s.evaluate(&domain, x)).sum::<f64>();
                Ok(model.project_function(|x| Complex64::new(sum(real, x), sum(imag, x)), model.dim())?)
            }
            InitialData::PowerLaw { amplitude, decay, phase_step } => Ok(CVector::from_fn(model.dim(), |j, _| {
                let k = model.modes()[j].wavenumber;
                let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
                Complex64::from_polar(amplitude * (1.0 + k2).powf(-decay / 2.0), phase_step * (k[0] + k[1]) as f64)
            })),
        }
    }

    pub fn problem_on(&self, model: Arc<SpectralModel>, level: u32) -> Result<GalerkinProblem, CliError> {
        let u0 = self.initial_coefficients(&model)?;
        Ok(GalerkinProblem::new(
            model,
            level,
            self.nonlinearity,
            self.noise.symbols.clone(),
            self.noise.measure.clone(),
            u0,
            self.run.horizon,
        )?)
    }

    pub fn problem(&self, level: u32) -> Result<GalerkinProblem, CliError> {
        self.problem_on(self.spectral_model()?, level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const EXAMPLE: &str = r#"
[model]
domain = { kind = "torus_1d", length = 6.283185307179586 }
beta = 1.0
levels = [4, 5]

[nonlinearity]
alpha = 3.0
sign = "defocusing"

[noise]
symbols = [{ kind = "cos", frequency = [1.0, 0.0], amplitude = 1.0 }]

[noise.measure]
kind = "atomic"
epsilon = 0.0
atoms = [{ weight = 1.0, mark = [0.3] }, { weight = 1.0, mark = [-0.3] }]

[initial]
kind = "profile"
real = [{ kind = "constant", value = 1.0 }, { kind = "cos", frequency = [1.0, 0.0], amplitude = 0.5 }]

[solver]
dt = 0.01
closure = "atomic_exact"

[run]
horizon = 0.5
trajectories = 3
seed = 5
"#;

    #[test]
    fn round_trip_is_identity() {
        let a = RunConfig::parse(EXAMPLE).unwrap();
        let b = RunConfig::parse(&a.to_toml().unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 16);
        a.validate().unwrap();
    }

    #[test]
    fn defaults_and_overrides() {
        let mut a = RunConfig::parse(EXAMPLE).unwrap();
        assert_eq!(a.solver.tolerance, SolverConfig::default().tolerance);
        assert_eq!(a.run.moment_orders, vec![1.0, 2.0, 4.0]);
        let h = a.hash().unwrap();
        a.apply(&Overrides { seed: Some(9), trajectories: Some(7), ..Overrides::default() });
        assert_eq!((a.run.seed, a.run.trajectories), (9, 7));
        assert_ne!(a.hash().unwrap(), h);
        let h = a.hash().unwrap();
        a.apply(&Overrides { out: Some("elsewhere".into()), threads: Some(3), ..Overrides::default() });
        assert_eq!(a.hash().unwrap(), h);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(RunConfig::parse("[model]\nbogus = 1"), Err(CliError::Parse(_))));
        let unknown = EXAMPLE.replace("seed = 5", "seed = 5\ncolour = 1");
        assert!(RunConfig::parse(&unknown).is_err());
        let focusing = EXAMPLE.replace("alpha = 3.0\nsign = \"defocusing\"", "alpha = 5.5\nsign = \"focusing\"");
        assert!(RunConfig::parse(&focusing).unwrap().validate().is_err());
        let strict = format!("{EXAMPLE}\n[verify]\nmass_tolerance = 0.0\n");
        assert!(matches!(RunConfig::parse(&strict).unwrap().validate(), Err(CliError::Core(SnlsError::Config(_)))));
        let stable = EXAMPLE.replace(
            "kind = \"atomic\"\nepsilon = 0.0\natoms = [{ weight = 1.0, mark = [0.3] }, { weight = 1.0, mark = [-0.3] }]",
            "kind = \"radial_stable\"\nepsilon = 0.0\nactivity = 1.0\nindex = 0.5\ndimension = 1",
        );
        assert!(RunConfig::parse(&stable).unwrap().validate().is_err());
    }

    #[test]
    fn power_law_initial_data() {
        let text = EXAMPLE.replace(
            "kind = \"profile\"\nreal = [{ kind = \"constant\", value = 1.0 }, { kind = \"cos\", frequency = [1.0, 0.0], amplitude = 0.5 }]",
            "kind = \"power_law\"\namplitude = 2.0\ndecay = 2.0",
        );
        let config = RunConfig::parse(&text).unwrap();
        let model = config.spectral_model().unwrap();
        let u0 = config.initial_coefficients(&model).unwrap();
        for (j, mode) in model.modes().iter().enumerate() {
            let k = mode.wavenumber[0] as f64;
            assert!((u0[j].norm() - 2.0 / (1.0 + k * k)).abs() < 1e-15);
        }
    }
}
