//! Intensity measures on the closed unit ball of `R^N`, Poisson random
//! measure sampling of the large jumps `{|l| >= ε}`, and the moments of the
//! truncated small-jump part.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SnlsError};

/// One atom `w δ_a` of an atomic intensity measure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub weight: f64,
    pub mark: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureKind {
    Atomic {
        atoms: Vec<Atom>,
    },
    /// Density `activity * |l|^(-N-index)` on `{0 < |l| <= 1}`.
    RadialStable {
        activity: f64,
        index: f64,
        dimension: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityMeasure {
    #[serde(flatten)]
    pub kind: MeasureKind,
    /// Jumps with `|l| < epsilon` are not simulated.
    pub epsilon: f64,
}

/// One simulated jump. `atom` is the index of the generating atom for
/// atomic measures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEvent {
    pub time: f64,
    pub mark: Vec<f64>,
    pub atom: Option<usize>,
}

/// Moments of the measure split at `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMoments {
    /// `m_ε = ∫_{ε<=|l|<=1} l ν(dl)`.
    pub mean_vector: Vec<f64>,
    /// `C_ε = ∫_{|l|<ε} l lᵀ ν(dl)`.
    pub second_moment_matrix: DMatrix<f64>,
    /// `σ²_ε = trace(C_ε)`.
    pub variance_budget: f64,
    /// Total mass `Λ_ε` of the simulated region.
    pub jump_intensity: f64,
}

/// Surface measure of the unit sphere in `R^N`.
fn sphere_area(dimension: usize) -> f64 {
    match dimension {
        1 => 2.0,
        2 => 2.0 * std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI,
        _ => unreachable!("dimension validated to 1..=3"),
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

impl IntensityMeasure {
    pub fn atomic(atoms: Vec<Atom>, epsilon: f64) -> Result<Self> {
        let m = IntensityMeasure { kind: MeasureKind::Atomic { atoms }, epsilon };
        m.validate()?;
        Ok(m)
    }

    pub fn radial_stable(activity: f64, index: f64, dimension: usize, epsilon: f64) -> Result<Self> {
        let m = IntensityMeasure { kind: MeasureKind::RadialStable { activity, index, dimension }, epsilon };
        m.validate()?;
        Ok(m)
    }

    /// Symmetric two-atom measure `w (δ_a + δ_-a)` in one dimension.
    pub fn symmetric_pair(weight: f64, mark: f64, epsilon: f64) -> Result<Self> {
        Self::atomic(vec![Atom { weight, mark: vec![mark] }, Atom { weight, mark: vec![-mark] }], epsilon)
    }

    /// The empty measure in `R^N`.
    pub fn zero(dimension: usize) -> Self {
        IntensityMeasure {
            kind: MeasureKind::Atomic { atoms: vec![Atom { weight: 0.0, mark: vec![0.0; dimension] }] },
            epsilon: 0.0,
        }
    }

    pub fn dimension(&self) -> usize {
        match &self.kind {
            MeasureKind::Atomic { atoms } => atoms.first().map_or(0, |a| a.mark.len()),
            MeasureKind::RadialStable { dimension, .. } => *dimension,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(SnlsError::Config(msg));
        if !(0.0..=1.0).contains(&self.epsilon) {
            return cfg(format!("epsilon must lie in [0, 1], got {}", self.epsilon));
        }
        match &self.kind {
            MeasureKind::Atomic { atoms } => {
                if atoms.is_empty() {
                    return cfg("atomic measure needs at least one atom".into());
                }
                let dim = atoms[0].mark.len();
                if dim == 0 {
                    return cfg("atom marks must be nonempty".into());
                }
                for a in atoms {
                    if a.mark.len() != dim {
                        return cfg("all atom marks must have the same dimension".into());
                    }
                    if !(a.weight >= 0.0 && a.weight.is_finite()) {
                        return cfg(format!("atom weight must be nonnegative, got {}", a.weight));
                    }
                    if a.mark.iter().any(|x| !x.is_finite()) || norm(&a.mark) > 1.0 {
                        return cfg(format!("atom mark {:?} lies outside the unit ball", a.mark));
                    }
                }
            }
            MeasureKind::RadialStable { activity, index, dimension } => {
                if !(*activity > 0.0 && activity.is_finite()) {
                    return cfg(format!("activity must be positive, got {activity}"));
                }
                if !(*index > 0.0 && *index < 2.0) {
                    return cfg(format!("stability index must lie in (0, 2), got {index}"));
                }
                if !(1..=3).contains(dimension) {
                    return cfg(format!("radial measures support N in 1..=3, got {dimension}"));
                }
                if self.epsilon == 0.0 {
                    return cfg("infinite-activity measure requires epsilon > 0".into());
                }
            }
        }
        Ok(())
    }

    /// Whether the atom with this mark is simulated as a jump.
    fn is_large(&self, mark: &[f64]) -> bool {
        norm(mark) >= self.epsilon
    }

    /// `Λ_ε = ν({ε <= |l| <= 1})`.
    pub fn jump_intensity(&self) -> f64 {
        match &self.kind {
            MeasureKind::Atomic { atoms } => atoms.iter().filter(|a| self.is_large(&a.mark)).map(|a| a.weight).sum(),
            MeasureKind::RadialStable { activity, index, dimension } => {
                activity * sphere_area(*dimension) * (self.epsilon.powf(-index) - 1.0) / index
            }
        }
    }

    /// `∫_{ε<=|l|<=1} |l|² ν(dl)`, the isometry constant of the simulated part.
    pub fn large_jump_second_moment(&self) -> f64 {
        match &self.kind {
            MeasureKind::Atomic { atoms } => {
                atoms.iter().filter(|a| self.is_large(&a.mark)).map(|a| a.weight * norm(&a.mark).powi(2)).sum()
            }
            MeasureKind::RadialStable { activity, index, dimension } => {
                activity * sphere_area(*dimension) * (1.0 - self.epsilon.powf(2.0 - index)) / (2.0 - index)
            }
        }
    }

    /// `∫_B |l|² ν(dl)`; finite for every admissible measure.
    pub fn total_second_moment(&self) -> f64 {
        self.large_jump_second_moment() + compute_moments(self).variance_budget
    }

    fn sample_mark<R: Rng + ?Sized>(&self, rng: &mut R, atom_cdf: &[f64]) -> (Vec<f64>, Option<usize>) {
        match &self.kind {
            MeasureKind::Atomic { atoms } => {
                let u = rng.random::<f64>() * atom_cdf.last().copied().unwrap_or(0.0);
                // first atom whose cdf exceeds u; excluded atoms have a zero step
                let j = atom_cdf.partition_point(|&c| c <= u).min(atom_cdf.len() - 1);
                (atoms[j].mark.clone(), Some(j))
            }
            MeasureKind::RadialStable { index, dimension, .. } => {
                let lo = self.epsilon.powf(-index);
                let u: f64 = rng.random();
                let radius = (lo - u * (lo - 1.0)).powf(-1.0 / index);
                let mut dir: Vec<f64> = if *dimension == 1 {
                    vec![if rng.random::<bool>() { 1.0 } else { -1.0 }]
                } else {
                    loop {
                        let g: Vec<f64> = (0..*dimension).map(|_| StandardNormal.sample(rng)).collect();
                        if norm(&g) > 1e-12 {
                            break g;
                        }
                    }
                };
                let scale = radius / norm(&dir);
                dir.iter_mut().for_each(|x| *x *= scale);
                (dir, None)
            }
        }
    }
}

/// Events of the Poisson random measure restricted to `{|l| >= ε}` on
/// `[0, horizon]`, sorted by time; ties keep generation order.
pub fn sample_prm<R: Rng + ?Sized>(measure: &IntensityMeasure, horizon: f64, rng: &mut R) -> Result<Vec<JumpEvent>> {
    measure.validate()?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(SnlsError::Config(format!("horizon must be nonnegative, got {horizon}")));
    }
    let rate = measure.jump_intensity() * horizon;
    if rate <= 0.0 {
        return Ok(Vec::new());
    }
    let count =
        Poisson::new(rate).map_err(|e| SnlsError::Numeric(format!("Poisson({rate}): {e}")))?.sample(rng) as usize;
    let atom_cdf: Vec<f64> = match &measure.kind {
        MeasureKind::Atomic { atoms } => atoms
            .iter()
            .scan(0.0, |acc, a| {
                if measure.is_large(&a.mark) {
                    *acc += a.weight;
                }
                Some(*acc)
            })
            .collect(),
        MeasureKind::RadialStable { .. } => Vec::new(),
    };
    let mut events: Vec<JumpEvent> = (0..count)
        .map(|_| {
            let time = rng.random::<f64>() * horizon;
            let (mark, atom) = measure.sample_mark(rng, &atom_cdf);
            JumpEvent { time, mark, atom }
        })
        .collect();
    events.sort_by(|a, b| a.time.total_cmp(&b.time));
    Ok(events)
}

/// Closed-form moments of the split measure.
pub fn compute_moments(measure: &IntensityMeasure) -> NoiseMoments {
    let dim = measure.dimension();
    let mut mean = vec![0.0; dim];
    let mut second = DMatrix::zeros(dim, dim);
    match &measure.kind {
        MeasureKind::Atomic { atoms } => {
            for a in atoms {
                if measure.is_large(&a.mark) {
                    for (m, x) in mean.iter_mut().zip(&a.mark) {
                        *m += a.weight * x;
                    }
                } else {
                    for i in 0..dim {
                        for j in 0..dim {
                            second[(i, j)] += a.weight * a.mark[i] * a.mark[j];
                        }
                    }
                }
            }
        }
        MeasureKind::RadialStable { activity, index, dimension } => {
            // rotation invariance: C_ε = (σ²_ε / N) I and m_ε = 0
            let budget = activity * sphere_area(*dimension) * measure.epsilon.powf(2.0 - index) / (2.0 - index);
            for i in 0..dim {
                second[(i, i)] = budget / dim as f64;
            }
        }
    }
    let variance_budget = second.trace();
    NoiseMoments {
        mean_vector: mean,
        second_moment_matrix: second,
        variance_budget,
        jump_intensity: measure.jump_intensity(),
    }
}

/// `L(t) = Σ_{t_j <= t} l_j - t m_ε` at each requested time.
pub fn reconstruct_levy_path(events: &[JumpEvent], moments: &NoiseMoments, times: &[f64]) -> Vec<Vec<f64>> {
    let dim = moments.mean_vector.len();
    let mut sum = vec![0.0; dim];
    let mut next = 0;
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]));
    let mut out = vec![Vec::new(); times.len()];
    for i in order {
        let t = times[i];
        while next < events.len() && events[next].time <= t {
            for (s, l) in sum.iter_mut().zip(&events[next].mark) {
                *s += l;
            }
            next += 1;
        }
        out[i] = sum.iter().zip(&moments.mean_vector).map(|(s, m)| s - t * m).collect();
    }
    out
}
