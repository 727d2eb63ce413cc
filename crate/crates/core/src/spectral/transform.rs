//! Coefficient <-> physical grid transforms.
//!
//! Tori use FFTs on a uniform grid; intervals use dense sine/cosine tables on
//! the DST-I / DCT-I nodes, whose quadrature is exact for products of two
//! retained modes.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Physical grid: nodes, quadrature weights and the transform backend.
#[derive(Clone)]
pub struct Grid {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    backend: Backend,
}

#[derive(Clone)]
enum Backend {
    Periodic1D {
        size: usize,
        // FFT bin of each retained mode
        bins: Vec<usize>,
        norm: f64,
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
    Periodic2D {
        size: [usize; 2],
        bins: Vec<usize>,
        norm: f64,
        forward: [Arc<dyn Fft<f64>>; 2],
        inverse: [Arc<dyn Fft<f64>>; 2],
    },
    /// Row-major `nodes x modes` table of real basis values.
    Dense { table: Vec<f64>, modes: usize },
}

impl std::fmt::Debug for Grid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Grid").field("nodes", &self.points.len()).field("shape", &self.shape()).finish()
    }
}

impl Grid {
    pub(crate) fn periodic_1d(length: f64, size: usize, wavenumbers: &[i64]) -> Self {
        let mut planner = FftPlanner::new();
        let points = (0..size).map(|j| [length * j as f64 / size as f64, 0.0]).collect();
        let bins = wavenumbers.iter().map(|&k| k.rem_euclid(size as i64) as usize).collect();
        Grid {
            points,
            weights: vec![length / size as f64; size],
            backend: Backend::Periodic1D {
                size,
                bins,
                norm: length.sqrt(),
                forward: planner.plan_fft_forward(size),
                inverse: planner.plan_fft_inverse(size),
            },
        }
    }

    pub(crate) fn periodic_2d(lengths: [f64; 2], size: [usize; 2], wavenumbers: &[[i64; 2]]) -> Self {
        let mut planner = FftPlanner::new();
        let mut points = Vec::with_capacity(size[0] * size[1]);
        for a in 0..size[0] {
            for b in 0..size[1] {
                points.push([lengths[0] * a as f64 / size[0] as f64, lengths[1] * b as f64 / size[1] as f64]);
            }
        }
        let bins = wavenumbers
            .iter()
            .map(|k| {
                let a = k[0].rem_euclid(size[0] as i64) as usize;
                let b = k[1].rem_euclid(size[1] as i64) as usize;
                a * size[1] + b
            })
            .collect();
        let area = lengths[0] * lengths[1];
        Grid {
            points,
            weights: vec![area / (size[0] * size[1]) as f64; size[0] * size[1]],
            backend: Backend::Periodic2D {
                size,
                bins,
                norm: area.sqrt(),
                forward: [planner.plan_fft_forward(size[0]), planner.plan_fft_forward(size[1])],
                inverse: [planner.plan_fft_inverse(size[0]), planner.plan_fft_inverse(size[1])],
            },
        }
    }

    /// Dirichlet sine basis `√(2/L) sin(kπx/L)` on the interior nodes `jL/G`.
    pub(crate) fn dirichlet(length: f64, size: usize, wavenumbers: &[i64]) -> Self {
        let nodes: Vec<f64> = (1..size).map(|j| length * j as f64 / size as f64).collect();
        let amp = (2.0 / length).sqrt();
        let table = nodes
            .iter()
            .flat_map(|&x| wavenumbers.iter().map(move |&k| amp * (k as f64 * PI * x / length).sin()))
            .collect();
        Grid {
            weights: vec![length / size as f64; nodes.len()],
            points: nodes.iter().map(|&x| [x, 0.0]).collect(),
            backend: Backend::Dense { table, modes: wavenumbers.len() },
        }
    }

    /// Neumann cosine basis on the nodes `jL/G`, `j = 0..=G`, trapezoidal weights.
    pub(crate) fn neumann(length: f64, size: usize, wavenumbers: &[i64]) -> Self {
        let nodes: Vec<f64> = (0..=size).map(|j| length * j as f64 / size as f64).collect();
        let table = nodes
            .iter()
            .flat_map(|&x| {
                wavenumbers.iter().map(move |&k| {
                    if k == 0 {
                        1.0 / length.sqrt()
                    } else {
                        (2.0 / length).sqrt() * (k as f64 * PI * x / length).cos()
                    }
                })
            })
            .collect();
        let h = length / size as f64;
        let weights = (0..=size).map(|j| if j == 0 || j == size { 0.5 * h } else { h }).collect();
        Grid {
            weights,
            points: nodes.iter().map(|&x| [x, 0.0]).collect(),
            backend: Backend::Dense { table, modes: wavenumbers.len() },
        }
    }

    /// Node coordinates; the second component is 0 on one-dimensional domains.
    pub fn points(&self) -> &[[f64; 2]] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nodes per dimension.
    pub fn shape(&self) -> Vec<usize> {
        match &self.backend {
            Backend::Periodic1D { size, .. } => vec![*size],
            Backend::Periodic2D { size, .. } => size.to_vec(),
            Backend::Dense { .. } => vec![self.points.len()],
        }
    }

    /// Evaluate `Σ_m c_m h_m` at the nodes. `coeffs` may be a prefix of the
    /// model's mode list; missing modes are zero.
    pub fn to_grid(&self, coeffs: &[Complex64]) -> Vec<Complex64> {
        match &self.backend {
            Backend::Periodic1D { size, bins, norm, inverse, .. } => {
                let mut buf = vec![Complex64::new(0.0, 0.0); *size];
                for (c, &b) in coeffs.iter().zip(bins) {
                    buf[b] = *c / *norm;
                }
                inverse.process(&mut buf);
                buf
            }
            Backend::Periodic2D { size, bins, norm, inverse, .. } => {
                let mut buf = vec![Complex64::new(0.0, 0.0); size[0] * size[1]];
                for (c, &b) in coeffs.iter().zip(bins) {
                    buf[b] = *c / *norm;
                }
                fft_2d(&mut buf, *size, inverse);
                buf
            }
            Backend::Dense { table, modes } => {
                table.chunks_exact(*modes).map(|row| row.iter().zip(coeffs).map(|(h, c)| c * *h).sum()).collect()
            }
        }
    }

    /// Quadrature projection `c_m = Σ_j w_j u_j conj(h_m(x_j))` for the first
    /// `len` modes.
    pub fn from_grid(&self, values: &[Complex64], len: usize) -> Vec<Complex64> {
        debug_assert_eq!(values.len(), self.len());
        match &self.backend {
            Backend::Periodic1D { size, bins, norm, forward, .. } => {
                let mut buf = values.to_vec();
                forward.process(&mut buf);
                let scale = *norm / *size as f64;
                bins[..len].iter().map(|&b| buf[b] * scale).collect()
            }
            Backend::Periodic2D { size, bins, norm, forward, .. } => {
                let mut buf = values.to_vec();
                fft_2d(&mut buf, *size, forward);
                let scale = *norm / (size[0] * size[1]) as f64;
                bins[..len].iter().map(|&b| buf[b] * scale).collect()
            }
            Backend::Dense { table, modes } => {
                let mut out = vec![Complex64::new(0.0, 0.0); len];
                for ((row, u), w) in table.chunks_exact(*modes).zip(values).zip(&self.weights) {
                    let wu = u * *w;
                    for (o, h) in out.iter_mut().zip(row) {
                        *o += wu * *h;
                    }
                }
                out
            }
        }
    }
}

/// In-place 2D FFT on a row-major buffer: rows first, then columns.
fn fft_2d(buf: &mut [Complex64], size: [usize; 2], plans: &[Arc<dyn Fft<f64>>; 2]) {
    let [rows, cols] = size;
    plans[1].process(buf);
    let mut t = vec![Complex64::new(0.0, 0.0); rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            t[c * rows + r] = buf[r * cols + c];
        }
    }
    plans[0].process(&mut t);
    for r in 0..rows {
        for c in 0..cols {
            buf[r * cols + c] = t[c * rows + r];
        }
    }
}
