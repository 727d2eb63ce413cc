//! Eigenbases of `A` and `S`, the dyadic spaces `H_n`, the projections `P_n`
//! and the smoothed Littlewood–Paley truncations `S_n`.
//!
//! Modes are stored in nondecreasing order of their `S`-eigenvalue (ties
//! broken lexicographically by wavenumber), so every `H_n` is a prefix of the
//! model's mode list and `P_n` is truncation to that prefix.

mod cutoff;
mod transform;

use std::f64::consts::PI;

use nalgebra::DVector;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnlsError};
use crate::CVector;

pub use cutoff::{
    cutoff_s, cutoff_s_derivative, mihlin_check, rho, rho_derivative, rho_derivative_sup, MAX_SMOOTHNESS,
};
pub use transform::Grid;

/// Spatial domain together with the boundary condition of the Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Domain {
    #[serde(rename = "torus_1d")]
    Torus1D {
        length: f64,
    },
    #[serde(rename = "torus_2d")]
    Torus2D {
        lengths: [f64; 2],
    },
    IntervalDirichlet {
        length: f64,
    },
    IntervalNeumann {
        length: f64,
    },
}

impl Domain {
    pub fn dimension(&self) -> usize {
        match self {
            Domain::Torus2D { .. } => 2,
            _ => 1,
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Domain::Torus1D { length } | Domain::IntervalDirichlet { length } | Domain::IntervalNeumann { length } => {
                *length > 0.0 && length.is_finite()
            }
            Domain::Torus2D { lengths } => lengths.iter().all(|l| *l > 0.0 && l.is_finite()),
        };
        if ok {
            Ok(())
        } else {
            Err(SnlsError::Config(format!("domain lengths must be positive: {self:?}")))
        }
    }

    /// `S = Id + (-Δ)` where the Laplacian has a kernel, `S = -Δ` otherwise.
    fn s_shift(&self) -> f64 {
        match self {
            Domain::IntervalDirichlet { .. } => 0.0,
            _ => 1.0,
        }
    }
}

/// One eigenfunction `h_m` of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    /// Integer wavenumber; the second entry is 0 on one-dimensional domains.
    pub wavenumber: [i64; 2],
    /// Eigenvalue of `-Δ`.
    pub laplacian: f64,
    /// Eigenvalue of `S` (strictly positive).
    pub lambda_s: f64,
    /// Eigenvalue of `A = (-Δ)^β`.
    pub lambda_a: f64,
}

/// Closed-form eigenpairs on a concrete domain, truncated at
/// `λ^S < 2^(max_level+1)`, with the dealiased physical grid.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    domain: Domain,
    beta: f64,
    max_level: u32,
    dealias_factor: f64,
    modes: Vec<Mode>,
    grid: Grid,
}

/// Which norm [`sobolev_norm`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Space {
    H,
    EnergySpace,
    EnergyDual,
    Lp(f64),
}

impl SpectralModel {
    pub fn new(domain: Domain, beta: f64, max_level: u32, dealias_factor: f64) -> Result<Self> {
        build_spectral_model(domain, beta, max_level, dealias_factor)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn max_level(&self) -> u32 {
        self.max_level
    }

    pub fn dealias_factor(&self) -> f64 {
        self.dealias_factor
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn dim(&self) -> usize {
        self.modes.len()
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn eigenvalues_s(&self) -> impl Iterator<Item = f64> + '_ {
        self.modes.iter().map(|m| m.lambda_s)
    }

    pub fn eigenvalues_a(&self) -> impl Iterator<Item = f64> + '_ {
        self.modes.iter().map(|m| m.lambda_a)
    }

    /// Largest retained `|k|` per dimension.
    pub fn max_wavenumber(&self) -> [i64; 2] {
        let mut out = [0, 0];
        for m in &self.modes {
            out[0] = out[0].max(m.wavenumber[0].abs());
            out[1] = out[1].max(m.wavenumber[1].abs());
        }
        out
    }

    /// Index of the mode with the given wavenumber, if retained.
    pub fn mode_index(&self, wavenumber: [i64; 2]) -> Option<usize> {
        self.modes.iter().position(|m| m.wavenumber == wavenumber)
    }

    /// The dyadic level `n`: modes with `λ^S < 2^(n+1)`.
    pub fn level(&self, n: u32) -> Result<GalerkinLevel> {
        if n > self.max_level {
            return Err(SnlsError::Config(format!("level {n} exceeds the model's max_level {}", self.max_level)));
        }
        let threshold = 2f64.powi(n as i32 + 1);
        let dim = self.modes.iter().take_while(|m| m.lambda_s < threshold).count();
        let sn_values = self.modes[..dim].iter().map(|m| cutoff_s(n, m.lambda_s)).collect::<Result<Vec<_>>>()?;
        Ok(GalerkinLevel { n, dim, sn_values })
    }

    /// Grid values of a coefficient vector (any prefix of the mode list).
    pub fn to_grid(&self, coeffs: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(coeffs.len(), "coefficients")?;
        Ok(self.grid.to_grid(coeffs))
    }

    /// Projection of grid values onto the first `len` modes.
    pub fn from_grid(&self, values: &[Complex64], len: usize) -> Result<Vec<Complex64>> {
        if values.len() != self.grid.len() {
            return Err(SnlsError::Shape { expected: self.grid.len(), got: values.len(), context: "grid values" });
        }
        self.check_len(len, "requested coefficient count")?;
        Ok(self.grid.from_grid(values, len))
    }

    /// Coefficients of a function given pointwise on the grid nodes.
    pub fn project_function<F>(&self, f: F, len: usize) -> Result<CVector>
    where
        F: Fn([f64; 2]) -> Complex64,
    {
        let values: Vec<_> = self.grid.points().iter().map(|&x| f(x)).collect();
        Ok(DVector::from_vec(self.from_grid(&values, len)?))
    }

    /// Quadrature `(Σ_j w_j |u_j|^p)^(1/p)` of grid values.
    pub fn grid_lp_norm(&self, values: &[Complex64], p: f64) -> f64 {
        values.iter().zip(self.grid.weights()).map(|(u, w)| w * u.norm().powf(p)).sum::<f64>().powf(1.0 / p)
    }

    pub(crate) fn check_len(&self, len: usize, context: &'static str) -> Result<()> {
        if len > self.dim() {
            Err(SnlsError::Shape { expected: self.dim(), got: len, context })
        } else {
            Ok(())
        }
    }
}

/// The finite-dimensional space `H_n` and the multiplier values of `S_n` on it.
#[derive(Debug, Clone, PartialEq)]
pub struct GalerkinLevel {
    pub n: u32,
    pub dim: usize,
    /// `s_n(λ_m)` for every retained mode.
    pub sn_values: Vec<f64>,
}

impl GalerkinLevel {
    /// Model indices spanning `H_n`.
    pub fn index_set(&self) -> std::ops::Range<usize> {
        0..self.dim
    }
}

/// Build the eigenbasis of the chosen domain.
///
/// `A = (-Δ)^β`; `S = Id + (-Δ)` on tori and the Neumann interval, `S = -Δ`
/// for Dirichlet. The grid has at least `dealias_factor * (k_max + 1)` nodes
/// per dimension.
pub fn build_spectral_model(domain: Domain, beta: f64, max_level: u32, dealias_factor: f64) -> Result<SpectralModel> {
    domain.validate()?;
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(SnlsError::Config(format!("beta must be positive, got {beta}")));
    }
    if !(dealias_factor >= 2.0 && dealias_factor.is_finite()) {
        return Err(SnlsError::Config(format!("dealias_factor must be at least 2, got {dealias_factor}")));
    }
    if max_level > 24 {
        return Err(SnlsError::Config(format!("max_level {max_level} is too large")));
    }
    let threshold = 2f64.powi(max_level as i32 + 1);
    let shift = domain.s_shift();
    // largest k with shift + (c k)^2 < threshold
    let k_bound = |c: f64| ((threshold - shift).max(0.0).sqrt() / c).floor() as i64 + 1;

    let mut modes = Vec::new();
    let mut push = |wavenumber: [i64; 2], laplacian: f64| {
        let lambda_s = shift + laplacian;
        if lambda_s < threshold {
            modes.push(Mode { wavenumber, laplacian, lambda_s, lambda_a: laplacian.powf(beta) });
        }
    };
    match domain {
        Domain::Torus1D { length } => {
            let c = 2.0 * PI / length;
            let kb = k_bound(c);
            for k in -kb..=kb {
                push([k, 0], (c * k as f64).powi(2));
            }
        }
        Domain::Torus2D { lengths } => {
            let c = [2.0 * PI / lengths[0], 2.0 * PI / lengths[1]];
            let (ka, kb) = (k_bound(c[0]), k_bound(c[1]));
            for a in -ka..=ka {
                for b in -kb..=kb {
                    push([a, b], (c[0] * a as f64).powi(2) + (c[1] * b as f64).powi(2));
                }
            }
        }
        Domain::IntervalDirichlet { length } => {
            let c = PI / length;
            for k in 1..=k_bound(c) {
                push([k, 0], (c * k as f64).powi(2));
            }
        }
        Domain::IntervalNeumann { length } => {
            let c = PI / length;
            for k in 0..=k_bound(c) {
                push([k, 0], (c * k as f64).powi(2));
            }
        }
    }
    if modes.is_empty() {
        return Err(SnlsError::Config(format!("no eigenvalue of S lies below 2^{} on {domain:?}", max_level + 1)));
    }
    modes.sort_by(|a, b| a.lambda_s.total_cmp(&b.lambda_s).then_with(|| a.wavenumber.cmp(&b.wavenumber)));

    let mut kmax = [0i64, 0];
    for m in &modes {
        kmax[0] = kmax[0].max(m.wavenumber[0].abs());
        kmax[1] = kmax[1].max(m.wavenumber[1].abs());
    }
    let nodes = |k: i64| {
        let min = (dealias_factor * (k + 1) as f64).ceil() as usize;
        min.next_power_of_two().max(4)
    };
    let grid = match domain {
        Domain::Torus1D { length } => {
            let ks: Vec<i64> = modes.iter().map(|m| m.wavenumber[0]).collect();
            Grid::periodic_1d(length, nodes(kmax[0]), &ks)
        }
        Domain::Torus2D { lengths } => {
            let ks: Vec<[i64; 2]> = modes.iter().map(|m| m.wavenumber).collect();
            Grid::periodic_2d(lengths, [nodes(kmax[0]), nodes(kmax[1])], &ks)
        }
        Domain::IntervalDirichlet { length } => {
            let ks: Vec<i64> = modes.iter().map(|m| m.wavenumber[0]).collect();
            Grid::dirichlet(length, nodes(kmax[0]), &ks)
        }
        Domain::IntervalNeumann { length } => {
            let ks: Vec<i64> = modes.iter().map(|m| m.wavenumber[0]).collect();
            Grid::neumann(length, nodes(kmax[0]), &ks)
        }
    };
    Ok(SpectralModel { domain, beta, max_level, dealias_factor, modes, grid })
}

fn check_input(model_dim: usize, u: &CVector) -> Result<()> {
    if u.len() > model_dim {
        Err(SnlsError::Shape { expected: model_dim, got: u.len(), context: "coefficient vector" })
    } else {
        Ok(())
    }
}

/// `P_n u`: restriction to the index set of `level`. Inputs shorter than the
/// model are read as zero-padded.
pub fn apply_pn(model: &SpectralModel, level: &GalerkinLevel, u: &CVector) -> Result<CVector> {
    check_input(model.dim(), u)?;
    Ok(DVector::from_fn(level.dim, |i, _| u.get(i).copied().unwrap_or_default()))
}

/// `S_n u`: multiplication by `s_n(λ_m)` followed by restriction.
pub fn apply_sn(model: &SpectralModel, level: &GalerkinLevel, u: &CVector) -> Result<CVector> {
    check_input(model.dim(), u)?;
    Ok(DVector::from_fn(level.dim, |i, _| u.get(i).copied().unwrap_or_default() * level.sn_values[i]))
}

/// Norms on coefficient vectors: `H`, `E_A` with weights `1 + λ^A`, its dual
/// with weights `(1 + λ^A)^-1`, and `L^p` by grid quadrature.
pub fn sobolev_norm(model: &SpectralModel, u: &CVector, space: Space) -> Result<f64> {
    check_input(model.dim(), u)?;
    let weighted = |f: &dyn Fn(f64) -> f64| {
        u.iter().zip(model.modes()).map(|(c, m)| f(m.lambda_a) * c.norm_sqr()).sum::<f64>().sqrt()
    };
    match space {
        Space::H => Ok(weighted(&|_| 1.0)),
        Space::EnergySpace => Ok(weighted(&|l| 1.0 + l)),
        Space::EnergyDual => Ok(weighted(&|l| 1.0 / (1.0 + l))),
        Space::Lp(p) => {
            if !(p >= 1.0 && p.is_finite()) {
                return Err(SnlsError::Domain(format!("L^p norm requires p in [1, inf), got {p}")));
            }
            let values = model.to_grid(u.as_slice())?;
            Ok(model.grid_lp_norm(&values, p))
        }
    }
}

/// Lower estimate of `‖S_n‖` on `L^p`: the largest ratio
/// `‖S_n u‖_p / ‖u‖_p` over random probes, single modes and Dirichlet-kernel
/// packets of growing width and random shifts.
pub fn estimate_sn_lp_norm<R: Rng + ?Sized>(
    model: &SpectralModel,
    level: &GalerkinLevel,
    p: f64,
    num_probes: usize,
    rng: &mut R,
) -> Result<f64> {
    if !(p >= 1.0 && p.is_finite()) {
        return Err(SnlsError::Domain(format!("p must be in [1, inf), got {p}")));
    }
    let dim = model.dim();
    let mut best = 0.0f64;
    let mut probe = |u: CVector| -> Result<()> {
        let denom = sobolev_norm(model, &u, Space::Lp(p))?;
        if denom > 0.0 {
            let num = sobolev_norm(model, &apply_sn(model, level, &u)?, Space::Lp(p))?;
            best = best.max(num / denom);
        }
        Ok(())
    };
    for m in 0..dim {
        let mut u = DVector::zeros(dim);
        u[m] = Complex64::new(1.0, 0.0);
        probe(u)?;
    }
    // packets: all modes up to a cutoff with unit coefficients, shifted in space
    let mut cut = 1;
    while cut <= dim {
        for _ in 0..4 {
            let shift: [f64; 2] = [rng.random::<f64>(), rng.random::<f64>()];
            let u = DVector::from_fn(dim, |i, _| {
                if i < cut {
                    let k = model.modes()[i].wavenumber;
                    Complex64::from_polar(1.0, -2.0 * PI * (k[0] as f64 * shift[0] + k[1] as f64 * shift[1]))
                } else {
                    Complex64::new(0.0, 0.0)
                }
            });
            probe(u)?;
        }
        cut *= 2;
    }
    for _ in 0..num_probes {
        let u = DVector::from_fn(dim, |_, _| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)));
        probe(u)?;
    }
    // random probes concentrated near the cutoff band
    for _ in 0..num_probes {
        let u = DVector::from_fn(dim, |i, _| {
            let w = if i < level.dim { 1.0 } else { 0.2 };
            let z: f64 = StandardNormal.sample(rng);
            let y: f64 = StandardNormal.sample(rng);
            Complex64::new(z, y) * w
        });
        probe(u)?;
    }
    Ok(best)
}
