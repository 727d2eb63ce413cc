//! Power nonlinearities `F(u) = ±|u|^(α-1) u` and their antiderivative
//! `F̂(u) = ±(α+1)^-1 ‖u‖_{L^(α+1)}^(α+1)`.
//!
//! Both are evaluated pointwise on the model grid; `F` is projected back onto
//! the Galerkin modes, which realizes `P_n F(u)`.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnlsError};
use crate::spectral::SpectralModel;
use crate::CVector;

/// Moduli below this are treated as zero in `|u|^(α-1)`.
const MODULUS_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Defocusing,
    Focusing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nonlinearity {
    pub alpha: f64,
    pub sign: Sign,
}

impl Nonlinearity {
    pub fn new(alpha: f64, sign: Sign) -> Result<Self> {
        if !(alpha > 1.0 && alpha.is_finite()) {
            return Err(SnlsError::Config(format!("alpha must exceed 1, got {alpha}")));
        }
        Ok(Nonlinearity { alpha, sign })
    }

    pub fn defocusing(alpha: f64) -> Result<Self> {
        Self::new(alpha, Sign::Defocusing)
    }

    pub fn focusing(alpha: f64) -> Result<Self> {
        Self::new(alpha, Sign::Focusing)
    }

    /// +1 for defocusing, -1 for focusing.
    pub fn sign_factor(&self) -> f64 {
        match self.sign {
            Sign::Defocusing => 1.0,
            Sign::Focusing => -1.0,
        }
    }

    /// Upper end of the admissible exponent window on a `dimension`-dimensional
    /// domain with `A = (-Δ)^β`; `None` means unbounded.
    pub fn alpha_cap(sign: Sign, dimension: usize, beta: f64) -> Option<f64> {
        let d = dimension as f64;
        match sign {
            Sign::Defocusing => {
                let gap = d - 2.0 * beta;
                (gap > 0.0).then(|| 1.0 + 4.0 * beta / gap)
            }
            Sign::Focusing => Some(1.0 + 4.0 * beta / d),
        }
    }

    /// Reject exponents outside the subcritical window for the domain.
    pub fn validate_for(&self, dimension: usize, beta: f64) -> Result<()> {
        match Self::alpha_cap(self.sign, dimension, beta) {
            Some(cap) if self.alpha >= cap => Err(SnlsError::Config(format!(
                "{:?} nonlinearity needs alpha < {cap} in dimension {dimension} (beta = {beta}), got {}",
                self.sign, self.alpha
            ))),
            _ => Ok(()),
        }
    }

    /// `±|u|^(α-1) u` at one point.
    #[inline]
    pub fn pointwise(&self, u: Complex64) -> Complex64 {
        let r = u.norm();
        if r < MODULUS_FLOOR {
            return Complex64::new(0.0, 0.0);
        }
        u * (self.sign_factor() * r.powf(self.alpha - 1.0))
    }

    /// `±|u|^(α+1) / (α+1)` at one point.
    #[inline]
    pub fn density(&self, u: Complex64) -> f64 {
        let r = u.norm();
        if r < MODULUS_FLOOR {
            return 0.0;
        }
        self.sign_factor() * r.powf(self.alpha + 1.0) / (self.alpha + 1.0)
    }
}

fn check_finite(coeffs: &[Complex64]) -> Result<()> {
    if coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(SnlsError::Numeric("non-finite coefficients passed to the nonlinearity".into()))
    }
}

/// `P_n F(u)` for coefficients `u` on the first `u.len()` modes.
pub fn eval_f(model: &SpectralModel, nonlinearity: &Nonlinearity, u: &CVector) -> Result<CVector> {
    check_finite(u.as_slice())?;
    let mut values = model.to_grid(u.as_slice())?;
    for v in values.iter_mut() {
        *v = nonlinearity.pointwise(*v);
    }
    Ok(DVector::from_vec(model.from_grid(&values, u.len())?))
}

/// `F̂(u)` by grid quadrature.
pub fn eval_fhat(model: &SpectralModel, nonlinearity: &Nonlinearity, u: &CVector) -> Result<f64> {
    check_finite(u.as_slice())?;
    let values = model.to_grid(u.as_slice())?;
    Ok(fhat_from_grid(model, nonlinearity, &values))
}

pub(crate) fn fhat_from_grid(model: &SpectralModel, nonlinearity: &Nonlinearity, values: &[Complex64]) -> f64 {
    values.iter().zip(model.grid().weights()).map(|(u, w)| w * nonlinearity.density(*u)).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{build_spectral_model, sobolev_norm, Domain, Space};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn torus(level: u32) -> SpectralModel {
        build_spectral_model(Domain::Torus1D { length: 2.0 * PI }, 1.0, level, 2.0).unwrap()
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> CVector {
        DVector::from_fn(n, |_, _| c(rng.sample(StandardNormal), rng.sample(StandardNormal)) * scale)
    }

    fn inner(a: &CVector, b: &CVector) -> Complex64 {
        a.iter().zip(b.iter()).map(|(x, y)| x * y.conj()).sum()
    }

    #[test]
    fn exponent_windows() {
        assert!(Nonlinearity::new(1.0, Sign::Defocusing).is_err());
        let foc = Nonlinearity::focusing(4.9).unwrap();
        assert!(foc.validate_for(1, 1.0).is_ok());
        assert!(Nonlinearity::focusing(5.0).unwrap().validate_for(1, 1.0).is_err());
        assert!(Nonlinearity::focusing(3.0).unwrap().validate_for(2, 1.0).is_err());
        assert!(Nonlinearity::focusing(2.9).unwrap().validate_for(2, 1.0).is_ok());
        // defocusing is unrestricted in d <= 2
        assert!(Nonlinearity::defocusing(11.0).unwrap().validate_for(2, 1.0).is_ok());
        // fractional: d = 1, β = 1/4  =>  cap 1 + 1/(1/2) = 3
        assert!(Nonlinearity::defocusing(3.0).unwrap().validate_for(1, 0.25).is_err());
        assert!(Nonlinearity::defocusing(2.9).unwrap().validate_for(1, 0.25).is_ok());
    }

    #[test]
    fn zero_maps_to_zero() {
        let model = torus(4);
        let nl = Nonlinearity::defocusing(3.0).unwrap();
        let z = DVector::zeros(model.dim());
        assert!(eval_f(&model, &nl, &z).unwrap().iter().all(|v| v.norm() == 0.0));
        assert_eq!(eval_fhat(&model, &nl, &z).unwrap(), 0.0);
    }

    #[test]
    fn constant_phase_is_scaled_modulus() {
        let model = torus(4);
        let nl = Nonlinearity::defocusing(2.5).unwrap();
        let a = Complex64::from_polar(0.7, 1.1);
        let u = model.project_function(|_| a, model.dim()).unwrap();
        let f = eval_f(&model, &nl, &u).unwrap();
        let expect = &u * Complex64::from(a.norm().powf(1.5));
        assert!((&f - &expect).norm() < 1e-13);
    }

    #[test]
    fn non_finite_input_is_a_numeric_error() {
        let model = torus(3);
        let nl = Nonlinearity::defocusing(3.0).unwrap();
        let mut u = DVector::zeros(model.dim());
        u[0] = c(f64::NAN, 0.0);
        assert!(matches!(eval_f(&model, &nl, &u), Err(SnlsError::Numeric(_))));
    }

    #[test]
    fn cubic_matches_convolution_oracle() {
        // α = 3 on the torus: (|u|^2 u)_k = (1/2π) Σ_{a-b+c=k} u_a conj(u_b) u_c
        // for h_k = e^{ikx}/√(2π); exact when the grid resolves the triple products.
        let model = build_spectral_model(Domain::Torus1D { length: 2.0 * PI }, 1.0, 6, 2.0).unwrap();
        let nl = Nonlinearity::defocusing(3.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        // at most 8 modes, |k| <= 3, so triple products stay below the grid's Nyquist range
        let support: Vec<usize> = (0..model.dim()).filter(|&i| model.modes()[i].wavenumber[0].abs() <= 3).collect();
        assert!(support.len() <= 8);
        let mut u = DVector::zeros(model.dim());
        for &i in &support {
            u[i] = c(rng.sample(StandardNormal), rng.sample(StandardNormal));
        }
        let f = eval_f(&model, &nl, &u).unwrap();
        for (m, mode) in model.modes().iter().enumerate() {
            let k = mode.wavenumber[0];
            let mut acc = c(0.0, 0.0);
            for &a in &support {
                for &b in &support {
                    for &cc in &support {
                        let (ka, kb, kc) = (
                            model.modes()[a].wavenumber[0],
                            model.modes()[b].wavenumber[0],
                            model.modes()[cc].wavenumber[0],
                        );
                        if ka - kb + kc == k {
                            acc += u[a] * u[b].conj() * u[cc];
                        }
                    }
                }
            }
            acc /= 2.0 * PI;
            assert!((f[m] - acc).norm() < 1e-12, "k={k}: {} vs {}", f[m], acc);
        }
    }

    #[test]
    fn constant_density_integral() {
        let model = torus(4);
        let nl = Nonlinearity::defocusing(3.0).unwrap();
        let one = model.project_function(|_| c(1.0, 0.0), model.dim()).unwrap();
        assert!((eval_fhat(&model, &nl, &one).unwrap() - 0.25 * 2.0 * PI).abs() < 1e-12);
        let foc = Nonlinearity::focusing(3.0).unwrap();
        assert!((eval_fhat(&model, &foc, &one).unwrap() + 0.25 * 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn gauge_invariance_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for domain in [
            Domain::Torus1D { length: 2.0 * PI },
            Domain::Torus2D { lengths: [2.0 * PI, 3.0] },
            Domain::IntervalDirichlet { length: 2.0 },
            Domain::IntervalNeumann { length: 2.0 },
        ] {
            let model = build_spectral_model(domain, 1.0, 5, 2.0).unwrap();
            for alpha in [1.5, 2.0, 3.0, 4.2] {
                for nl in [Nonlinearity::defocusing(alpha).unwrap(), Nonlinearity::focusing(alpha).unwrap()] {
                    let u = random_vec(&mut rng, model.dim(), 0.5);
                    let theta: f64 = rng.random_range(-PI..PI);
                    let phase = Complex64::from_polar(1.0, theta);
                    let f = eval_f(&model, &nl, &u).unwrap();
                    let fr = eval_f(&model, &nl, &(&u * phase)).unwrap();
                    assert!((&fr - &f * phase).norm() <= 1e-12 * f.norm().max(1.0));
                    let iu = &u * c(0.0, 1.0);
                    let re = inner(&iu, &f).re;
                    assert!(re.abs() <= 1e-10 * u.norm() * f.norm(), "{domain:?} α={alpha}: {re}");
                    let fh = eval_fhat(&model, &nl, &u).unwrap();
                    assert!(fh * nl.sign_factor() >= 0.0);
                }
            }
        }
    }

    #[test]
    fn local_lipschitz_ratio_is_bounded_by_alpha() {
        // pointwise |F(a) - F(b)| <= α max(|a|,|b|)^(α-1) |a-b|, then Hölder
        let model = torus(5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for alpha in [1.5, 3.0, 5.0] {
            let nl = Nonlinearity::defocusing(alpha).unwrap();
            let p = alpha + 1.0;
            let q = p / alpha;
            let mut worst = 0.0f64;
            for _ in 0..50 {
                let x = model.to_grid(random_vec(&mut rng, model.dim(), 0.4).as_slice()).unwrap();
                let y = model.to_grid(random_vec(&mut rng, model.dim(), 0.4).as_slice()).unwrap();
                let diff_f: Vec<_> = x.iter().zip(&y).map(|(a, b)| nl.pointwise(*a) - nl.pointwise(*b)).collect();
                let diff: Vec<_> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
                let lhs = model.grid_lp_norm(&diff_f, q);
                let rhs = (model.grid_lp_norm(&x, p) + model.grid_lp_norm(&y, p)).powf(alpha - 1.0)
                    * model.grid_lp_norm(&diff, p);
                worst = worst.max(lhs / rhs);
            }
            assert!(worst <= alpha, "α={alpha}: ratio {worst}");
        }
    }

    #[test]
    fn antiderivative_gradient_converges_first_order() {
        let model = torus(5);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for alpha in [2.5, 3.0] {
            let nl = Nonlinearity::defocusing(alpha).unwrap();
            let u = random_vec(&mut rng, model.dim(), 0.3);
            let v = random_vec(&mut rng, model.dim(), 0.3);
            let exact = inner(&eval_f(&model, &nl, &u).unwrap(), &v).re;
            let f0 = eval_fhat(&model, &nl, &u).unwrap();
            let errs: Vec<f64> = [1e-2, 1e-3, 1e-4]
                .iter()
                .map(|&h| {
                    let fd = (eval_fhat(&model, &nl, &(&u + &v * c(h, 0.0))).unwrap() - f0) / h;
                    (fd - exact).abs()
                })
                .collect();
            for w in errs.windows(2) {
                let order = (w[0] / w[1]).log10();
                assert!(order > 0.9, "α={alpha}: {errs:?}");
            }
        }
        let _ = sobolev_norm;
        let _ = Space::H;
    }
}
