//! Multiplication-operator noise `B_m x = e_m x`, its Galerkin matrices
//! `M_m = S_n B_m S_n`, the unitary jump maps `e^{-iB_n(l)}` and the Marcus
//! flow that generates them.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnlsError};
use crate::ode;
use crate::spectral::{Domain, GalerkinLevel, SpectralModel};
use crate::{CMatrix, CVector};

/// Largest tolerated `max |M - M†|` entry.
pub const HERMITIAN_TOLERANCE: f64 = 1e-10;

/// Real-valued noise symbol `e_m(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Symbol {
    Constant {
        value: f64,
    },
    /// `amplitude * cos(k · x)`.
    Cos {
        frequency: [f64; 2],
        amplitude: f64,
    },
    /// `amplitude * sin(k · x)`.
    Sin {
        frequency: [f64; 2],
        amplitude: f64,
    },
    /// `amplitude * exp(-|x - center|² / (2 width²))`, periodic distance on tori.
    GaussianBump {
        center: [f64; 2],
        width: f64,
        amplitude: f64,
    },
}

impl Symbol {
    pub fn cos(frequency: f64) -> Self {
        Symbol::Cos { frequency: [frequency, 0.0], amplitude: 1.0 }
    }

    pub fn sin(frequency: f64) -> Self {
        Symbol::Sin { frequency: [frequency, 0.0], amplitude: 1.0 }
    }

    pub fn constant(value: f64) -> Self {
        Symbol::Constant { value }
    }

    pub fn evaluate(&self, domain: &Domain, x: [f64; 2]) -> f64 {
        match self {
            Symbol::Constant { value } => *value,
            Symbol::Cos { frequency, amplitude } => amplitude * (frequency[0] * x[0] + frequency[1] * x[1]).cos(),
            Symbol::Sin { frequency, amplitude } => amplitude * (frequency[0] * x[0] + frequency[1] * x[1]).sin(),
            Symbol::GaussianBump { center, width, amplitude } => {
                let periods = match domain {
                    Domain::Torus1D { length } => [Some(*length), None],
                    Domain::Torus2D { lengths } => [Some(lengths[0]), Some(lengths[1])],
                    _ => [None, None],
                };
                let r2: f64 = (0..2)
                    .map(|i| {
                        let mut d = x[i] - center[i];
                        if let Some(p) = periods[i] {
                            d -= p * (d / p).round();
                        }
                        d * d
                    })
                    .sum();
                amplitude * (-r2 / (2.0 * width * width)).exp()
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = match self {
            Symbol::Constant { value } => value.is_finite(),
            Symbol::Cos { frequency, amplitude } | Symbol::Sin { frequency, amplitude } => {
                amplitude.is_finite() && frequency.iter().all(|f| f.is_finite())
            }
            Symbol::GaussianBump { center, width, amplitude } => {
                *width > 0.0 && width.is_finite() && amplitude.is_finite() && center.iter().all(|c| c.is_finite())
            }
        };
        if finite {
            Ok(())
        } else {
            Err(SnlsError::Config(format!("invalid noise symbol {self:?}")))
        }
    }
}

/// Eigendecomposition `B = U diag(θ) U†` of a Hermitian matrix, applied as
/// `e^{-itB} x = U diag(e^{-itθ}) U† x`.
#[derive(Debug, Clone)]
pub struct HermitianExp {
    vectors: CMatrix,
    values: DVector<f64>,
}

impl HermitianExp {
    pub fn new(matrix: &CMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(SnlsError::Shape { expected: matrix.nrows(), got: matrix.ncols(), context: "square matrix" });
        }
        if matrix.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(SnlsError::Numeric("non-finite entries in Hermitian matrix".into()));
        }
        let eig = matrix
            .clone()
            .try_symmetric_eigen(1e-15, 10_000)
            .ok_or_else(|| SnlsError::Numeric("Hermitian eigendecomposition did not converge".into()))?;
        Ok(HermitianExp { vectors: eig.eigenvectors, values: eig.eigenvalues })
    }

    /// Eigenvalues of the decomposed matrix.
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    /// `e^{-itB} x`.
    pub fn apply(&self, t: f64, x: &CVector) -> CVector {
        let mut y = self.vectors.ad_mul(x);
        for (v, theta) in y.iter_mut().zip(self.values.iter()) {
            *v *= Complex64::from_polar(1.0, -t * theta);
        }
        &self.vectors * y
    }

    /// `e^{-itB}` as a dense matrix.
    pub fn matrix(&self, t: f64) -> CMatrix {
        let phases = DVector::from_fn(self.values.len(), |i, _| Complex64::from_polar(1.0, -t * self.values[i]));
        let scaled = &self.vectors * DMatrix::from_diagonal(&phases);
        scaled * self.vectors.adjoint()
    }
}

/// The Galerkin noise matrices at one level and their operator-norm sums.
#[derive(Debug, Clone)]
pub struct NoiseOperators {
    matrices: Vec<CMatrix>,
    energy_weights: DVector<f64>,
    b_h: f64,
    b_ea: f64,
    b_lp: f64,
    asymmetry: f64,
    single: Option<HermitianExp>,
}

impl NoiseOperators {
    /// Wrap precomputed matrices without symmetrizing them.
    ///
    /// `energy_weights` are `1 + λ^A` on the level's modes and `symbol_sups`
    /// the sup norms `‖e_m‖_∞`.
    pub fn from_matrices(matrices: Vec<CMatrix>, energy_weights: DVector<f64>, symbol_sups: &[f64]) -> Result<Self> {
        let dim = energy_weights.len();
        if matrices.is_empty() {
            return Err(SnlsError::Config("at least one noise operator is required".into()));
        }
        if symbol_sups.len() != matrices.len() {
            return Err(SnlsError::Shape {
                expected: matrices.len(),
                got: symbol_sups.len(),
                context: "symbol sup norms",
            });
        }
        for m in &matrices {
            if m.nrows() != dim || m.ncols() != dim {
                return Err(SnlsError::Shape { expected: dim, got: m.nrows().max(m.ncols()), context: "noise matrix" });
            }
        }
        let asymmetry = matrices.iter().map(max_asymmetry).fold(0.0, f64::max);
        let sqrt_w = energy_weights.map(f64::sqrt);
        let mut b_h = 0.0;
        let mut b_ea = 0.0;
        for m in &matrices {
            b_h += spectral_norm(m).powi(2);
            let similar = DMatrix::from_fn(dim, dim, |i, j| m[(i, j)] * (sqrt_w[i] / sqrt_w[j]));
            b_ea += spectral_norm(&similar).powi(2);
        }
        let b_lp = symbol_sups.iter().map(|s| s * s).sum();
        let single = if matrices.len() == 1 && asymmetry <= HERMITIAN_TOLERANCE {
            Some(HermitianExp::new(&matrices[0])?)
        } else {
            None
        };
        Ok(NoiseOperators { matrices, energy_weights, b_h, b_ea, b_lp, asymmetry, single })
    }

    /// Number of operators `N`.
    pub fn count(&self) -> usize {
        self.matrices.len()
    }

    pub fn dim(&self) -> usize {
        self.energy_weights.len()
    }

    pub fn matrices(&self) -> &[CMatrix] {
        &self.matrices
    }

    /// `Σ_m ‖M_m‖²` on `H`.
    pub fn b_h(&self) -> f64 {
        self.b_h
    }

    /// `Σ_m ‖M_m‖²` on `E_A`.
    pub fn b_ea(&self) -> f64 {
        self.b_ea
    }

    /// `Σ_m ‖B_m‖²` on `L^p`, which for multiplication operators is `Σ_m ‖e_m‖²_∞`.
    pub fn b_lp(&self) -> f64 {
        self.b_lp
    }

    /// Largest `|M - M†|` entry over all matrices.
    pub fn asymmetry(&self) -> f64 {
        self.asymmetry
    }

    pub fn energy_weights(&self) -> &DVector<f64> {
        &self.energy_weights
    }

    fn check_mark(&self, l: &[f64]) -> Result<()> {
        if l.len() != self.count() {
            return Err(SnlsError::Shape { expected: self.count(), got: l.len(), context: "jump mark" });
        }
        if l.iter().any(|x| !x.is_finite()) {
            return Err(SnlsError::Domain(format!("jump mark {l:?} is not finite")));
        }
        Ok(())
    }

    fn check_hermitian(&self) -> Result<()> {
        if self.asymmetry > HERMITIAN_TOLERANCE {
            Err(SnlsError::Numeric(format!("noise matrices deviate from Hermitian by {:.3e}", self.asymmetry)))
        } else {
            Ok(())
        }
    }

    /// `B_n(l) = Σ_m l_m M_m`.
    pub fn b_of_l(&self, l: &[f64]) -> Result<CMatrix> {
        self.check_mark(l)?;
        let dim = self.dim();
        let mut out = CMatrix::zeros(dim, dim);
        for (m, &lm) in self.matrices.iter().zip(l) {
            if lm != 0.0 {
                out += m * Complex64::new(lm, 0.0);
            }
        }
        Ok(out)
    }

    /// `B_n(l) x` without forming the matrix.
    pub fn apply_b(&self, l: &[f64], x: &CVector) -> Result<CVector> {
        self.check_mark(l)?;
        self.check_state(x)?;
        let mut out = CVector::zeros(self.dim());
        for (m, &lm) in self.matrices.iter().zip(l) {
            if lm != 0.0 {
                out.gemv(Complex64::new(lm, 0.0), m, x, Complex64::new(1.0, 0.0));
            }
        }
        Ok(out)
    }

    fn check_state(&self, x: &CVector) -> Result<()> {
        if x.len() != self.dim() {
            Err(SnlsError::Shape { expected: self.dim(), got: x.len(), context: "state on the noise level" })
        } else {
            Ok(())
        }
    }

    /// Decomposition generating `e^{-iB_n(l)}` together with the time it is
    /// applied for. With a single operator the decomposition of `M_1` is
    /// shared by every mark.
    pub fn propagator(&self, l: &[f64]) -> Result<(Cow<'_, HermitianExp>, f64)> {
        self.check_mark(l)?;
        self.check_hermitian()?;
        match &self.single {
            Some(exp) => Ok((Cow::Borrowed(exp), l[0])),
            None => Ok((Cow::Owned(HermitianExp::new(&self.b_of_l(l)?)?), 1.0)),
        }
    }
}

fn max_asymmetry(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..=i {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Largest singular value.
pub(crate) fn spectral_norm(m: &CMatrix) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Assemble `M_m[j,k] = s_n(λ_j) s_n(λ_k) <e_m h_k, h_j>` by grid quadrature
/// and symmetrize.
pub fn assemble_noise_matrices(
    model: &SpectralModel,
    level: &GalerkinLevel,
    symbols: &[Symbol],
) -> Result<NoiseOperators> {
    if level.dim > model.dim() || level.sn_values.len() != level.dim {
        return Err(SnlsError::Shape { expected: model.dim(), got: level.dim, context: "level dimension" });
    }
    let dim = level.dim;
    let domain = model.domain();
    let mut matrices = Vec::with_capacity(symbols.len());
    let mut sups = Vec::with_capacity(symbols.len());
    for symbol in symbols {
        symbol.validate()?;
        let values: Vec<f64> = model.grid().points().iter().map(|&x| symbol.evaluate(&domain, x)).collect();
        sups.push(values.iter().map(|v| v.abs()).fold(0.0, f64::max));
        let mut m = CMatrix::zeros(dim, dim);
        let mut unit = vec![Complex64::new(0.0, 0.0); dim];
        for k in 0..dim {
            unit[k] = Complex64::new(1.0, 0.0);
            let mut grid = model.to_grid(&unit)?;
            for (g, e) in grid.iter_mut().zip(&values) {
                *g *= *e;
            }
            let column = model.from_grid(&grid, dim)?;
            for (j, c) in column.into_iter().enumerate() {
                m[(j, k)] = c * (level.sn_values[j] * level.sn_values[k]);
            }
            unit[k] = Complex64::new(0.0, 0.0);
        }
        let deviation = max_asymmetry(&m);
        if deviation > HERMITIAN_TOLERANCE {
            return Err(SnlsError::Numeric(format!(
                "assembled noise matrix deviates from Hermitian by {deviation:.3e}"
            )));
        }
        let sym = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
        matrices.push(sym);
    }
    let weights = DVector::from_fn(dim, |i, _| 1.0 + model.modes()[i].lambda_a);
    NoiseOperators::from_matrices(matrices, weights, &sups)
}

/// `e^{-iB_n(l)} x`.
pub fn jump_map(ops: &NoiseOperators, l: &[f64], x: &CVector) -> Result<CVector> {
    ops.check_state(x)?;
    let (exp, t) = ops.propagator(l)?;
    Ok(exp.apply(t, x))
}

/// Solution at time `t` of `u' = -iB_n(l)u`, `u(0) = x`, by adaptive
/// Runge–Kutta integration.
pub fn marcus_flow(ops: &NoiseOperators, t: f64, l: &[f64], x: &CVector, ode_tol: f64) -> Result<CVector> {
    ops.check_state(x)?;
    let b = ops.b_of_l(l)?;
    let minus_i = Complex64::new(0.0, -1.0);
    ode::integrate(|u| (&b * u) * minus_i, x, t, ode_tol)
}

/// `e^{-iB_n(l)} x - x`.
pub fn jump_difference_1(ops: &NoiseOperators, l: &[f64], x: &CVector) -> Result<CVector> {
    Ok(jump_map(ops, l, x)? - x)
}

/// `e^{-iB_n(l)} x - x + iB_n(l) x`.
pub fn jump_difference_2(ops: &NoiseOperators, l: &[f64], x: &CVector) -> Result<CVector> {
    let bx = ops.apply_b(l, x)?;
    Ok(jump_map(ops, l, x)? - x + bx * Complex64::new(0.0, 1.0))
}
