//! Singular and regularized communication weights and periodic convolution.
//!
//! The singular weight is `phi(r) = r^-alpha` on the wrapped distance with
//! `phi(0) = 0`. The regularized weight is
//! `phi_eps(r) = (eps^beta + r_wrap^2)^(-alpha/2)`.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{periodic_distance, TorusGrid};

/// Communication-weight configuration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams {
    /// Singularity exponent.
    pub alpha: f64,
    /// Regularization exponent.
    pub beta: f64,
    /// Scaling parameter of the kinetic model.
    pub epsilon: f64,
    /// Torus circumference.
    pub length: f64,
    /// Selects `phi_eps` instead of `phi`.
    pub regularized: bool,
}

impl WeightParams {
    pub fn singular(alpha: f64, length: f64) -> Self {
        Self {
            alpha,
            beta: 1.0,
            epsilon: 1.0,
            length,
            regularized: false,
        }
    }

    pub fn regularized(alpha: f64, beta: f64, epsilon: f64, length: f64) -> Self {
        Self {
            alpha,
            beta,
            epsilon,
            length,
            regularized: true,
        }
    }

    /// Checks the ranges the solvers rely on (`alpha < 3/2` for the 1-D macro
    /// system, `eps` in `(0, 1]`).
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.5) {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 3/2), got {}",
                self.alpha
            )));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!(
                "epsilon must lie in (0, 1], got {}",
                self.epsilon
            )));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::Config(format!("length must be positive, got {}", self.length)));
        }
        Ok(())
    }

    /// `eps^beta`, the squared regularization radius.
    #[inline]
    pub fn reg_sq(&self) -> f64 {
        self.epsilon.powf(self.beta)
    }

    /// Weight in use: `phi_eps` when regularized, `phi` otherwise.
    #[inline]
    pub fn eval(&self, r: f64) -> f64 {
        if self.regularized {
            eval_phi_eps(r, self)
        } else {
            eval_phi(r, self)
        }
    }
}

/// Singular periodic weight. Zero at `r = 0` and `r = length`.
pub fn eval_phi(r: f64, p: &WeightParams) -> f64 {
    let l = p.length;
    if r <= 0.0 || r >= l {
        return 0.0;
    }
    if r <= 0.5 * l {
        r.powf(-p.alpha)
    } else {
        (l - r).powf(-p.alpha)
    }
}

/// Regularized weight evaluated on the wrapped distance.
pub fn eval_phi_eps(r: f64, p: &WeightParams) -> f64 {
    let rw = periodic_distance(r, 0.0, p.length);
    (p.reg_sq() + rw * rw).powf(-0.5 * p.alpha)
}

/// Outcome of comparing `phi - phi_eps` against `(alpha eps^beta / 2) phi_eps / r^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiGap {
    pub gap: f64,
    pub bound: f64,
    pub ok: bool,
}

/// Gap between the singular and regularized weights and its upper bound.
///
/// The gap is evaluated as `phi_eps * expm1((alpha/2) ln(1 + eps^beta / r^2))`,
/// which equals `phi - phi_eps` without the cancellation of the direct
/// difference when `eps^beta << r^2`.
pub fn verify_phi_gap(r: f64, p: &WeightParams) -> Result<PhiGap> {
    if !(r > 0.0) {
        return Err(Error::Config(format!("gap check needs r > 0, got {r}")));
    }
    if !(p.alpha > 0.0 && p.alpha < 2.0) {
        return Err(Error::Config(format!(
            "gap check needs alpha in (0, 2), got {}",
            p.alpha
        )));
    }
    let rw = periodic_distance(r, 0.0, p.length);
    if rw == 0.0 {
        return Err(Error::Config("gap check needs a nonzero wrapped distance".into()));
    }
    let s = p.reg_sq();
    let phi_eps = (s + rw * rw).powf(-0.5 * p.alpha);
    let t = s / (rw * rw);
    let gap = phi_eps * (0.5 * p.alpha * t.ln_1p()).exp_m1();
    let bound = 0.5 * p.alpha * s * phi_eps / (rw * rw);
    Ok(PhiGap {
        gap,
        bound,
        ok: gap <= bound + 1e-12,
    })
}

/// Weight sampled at distances `k dx`, `k = 0..n`. Even: `kernel[k] = kernel[n-k]`.
pub fn sample_kernel(p: &WeightParams, g: &TorusGrid) -> Vec<f64> {
    (0..g.n)
        .map(|k| {
            let r = k.min(g.n - k) as f64 * g.dx;
            if p.regularized {
                (p.reg_sq() + r * r).powf(-0.5 * p.alpha)
            } else if k == 0 {
                0.0
            } else {
                r.powf(-p.alpha)
            }
        })
        .collect()
}

/// Direct `O(N^2)` periodic convolution `out[i] = sum_k kernel[i-k] g[k] dx`.
pub fn conv_direct(kernel: &[f64], g: &[f64], dx: f64) -> Vec<f64> {
    let n = g.len();
    assert_eq!(kernel.len(), n, "kernel and data must share the grid");
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (k, gk) in g.iter().enumerate() {
                let d = if i >= k { i - k } else { i + n - k };
                acc += kernel[d] * gk;
            }
            acc * dx
        })
        .collect()
}

/// Circular convolution through a precomputed kernel spectrum.
pub struct Convolver {
    n: usize,
    dx: f64,
    spectrum: Vec<Complex64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Convolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Convolver")
            .field("n", &self.n)
            .field("dx", &self.dx)
            .finish()
    }
}

impl Convolver {
    pub fn new(kernel: &[f64], dx: f64) -> Self {
        let n = kernel.len();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let mut spectrum: Vec<Complex64> = kernel.iter().map(|&k| Complex64::new(k, 0.0)).collect();
        forward.process(&mut spectrum);
        Self {
            n,
            dx,
            spectrum,
            forward,
            inverse,
        }
    }

    pub fn for_weights(p: &WeightParams, g: &TorusGrid) -> Self {
        Self::new(&sample_kernel(p, g), g.dx)
    }

    /// Sum of the kernel times `dx`: the response to a unit constant.
    pub fn total_weight(&self) -> f64 {
        self.spectrum[0].re * self.dx
    }

    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        assert_eq!(g.len(), self.n, "data must share the kernel grid");
        let mut buf: Vec<Complex64> = g.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(&self.spectrum) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        let scale = self.dx / self.n as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

/// Fast-transform periodic convolution.
pub fn conv_fft(kernel: &[f64], g: &[f64], dx: f64) -> Vec<f64> {
    Convolver::new(kernel, dx).apply(g)
}

/// Periodic convolution on `grid`; uses the fast transform.
pub fn conv_periodic(kernel: &[f64], g: &[f64], grid: &TorusGrid) -> Vec<f64> {
    conv_fft(kernel, g, grid.dx)
}
