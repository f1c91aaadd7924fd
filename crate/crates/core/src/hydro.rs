//! Isentropic Euler-alignment system with `gamma = 3`:
//!
//! ```text
//! rho_t + m_x = 0
//! m_t + (m^2 / rho + kappa rho^3)_x = -rho int phi(x - y) (u(x) - u(y)) rho(y) dy
//! ```
//!
//! MUSCL reconstruction in conserved variables, Rusanov fluxes and SSP-RK2.

use std::fs;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::kinetic::bulk_velocity;
use crate::weight::{sample_kernel, WeightParams};

#[derive(Debug, Clone, PartialEq)]
pub struct MacroState {
    pub grid: TorusGrid,
    pub rho: Vec<f64>,
    pub m: Vec<f64>,
    pub kappa_p: f64,
}

impl MacroState {
    pub fn new(grid: TorusGrid, rho: Vec<f64>, m: Vec<f64>, kappa_p: f64) -> Result<Self> {
        if rho.len() != grid.n || m.len() != grid.n {
            return Err(Error::GridMismatch(format!(
                "state arrays of length {} / {} on a grid of {} cells",
                rho.len(),
                m.len(),
                grid.n
            )));
        }
        if let Some((i, r)) = rho.iter().enumerate().find(|(_, r)| !(**r >= 0.0)) {
            return Err(Error::NegativeDensity { cell: i, value: *r });
        }
        if !(kappa_p > 0.0) {
            return Err(Error::Config(format!("kappa_p must be positive, got {kappa_p}")));
        }
        Ok(Self { grid, rho, m, kappa_p })
    }

    pub fn from_primitive(grid: TorusGrid, rho: Vec<f64>, u: &[f64], kappa_p: f64) -> Result<Self> {
        let m = rho.iter().zip(u).map(|(r, v)| r * v).collect();
        Self::new(grid, rho, m, kappa_p)
    }

    pub fn velocity(&self) -> Vec<f64> {
        self.rho.iter().zip(&self.m).map(|(r, m)| bulk_velocity(*r, *m)).collect()
    }

    pub fn mass(&self) -> f64 {
        self.grid.integrate(&self.rho)
    }

    pub fn momentum(&self) -> f64 {
        self.grid.integrate(&self.m)
    }

    /// `sum (m^2 / (2 rho) + kappa rho^3 / 2) dx`.
    pub fn free_energy(&self) -> f64 {
        let e: Vec<f64> = self
            .rho
            .iter()
            .zip(&self.m)
            .map(|(r, m)| 0.5 * m * bulk_velocity(*r, *m) + 0.5 * self.kappa_p * r * r * r)
            .collect();
        self.grid.integrate(&e)
    }

    pub fn max_wave_speed(&self) -> f64 {
        let c = (3.0 * self.kappa_p).sqrt();
        self.rho
            .iter()
            .zip(&self.m)
            .map(|(r, m)| bulk_velocity(*r, *m).abs() + c * r)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Limiter {
    #[default]
    Minmod,
    /// Unlimited central slopes.
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroConfig {
    /// Alignment weights; `None` switches the source off.
    pub weights: Option<WeightParams>,
    pub cfl: f64,
    pub t_end: f64,
    pub limiter: Limiter,
    /// Spacing of stored states; `None` keeps only the endpoints.
    pub snapshot_dt: Option<f64>,
}

impl MacroConfig {
    pub fn new(weights: Option<WeightParams>, t_end: f64) -> Self {
        Self {
            weights,
            cfl: 0.4,
            t_end,
            limiter: Limiter::Minmod,
            snapshot_dt: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = &self.weights {
            w.validate()?;
            if w.alpha >= 1.5 {
                return Err(Error::Config(format!("alpha must be below 3/2, got {}", w.alpha)));
            }
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        if let Some(s) = self.snapshot_dt {
            if !(s > 0.0) {
                return Err(Error::Config("snapshot spacing must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Physical flux `(m, m^2 / rho + kappa rho^3)`.
pub fn macro_flux(rho: f64, m: f64, kappa_p: f64) -> (f64, f64) {
    (m, m * bulk_velocity(rho, m) + kappa_p * rho * rho * rho)
}

/// Local Lax-Friedrichs flux between states `(rho, m)`.
pub fn numerical_flux_rusanov(left: (f64, f64), right: (f64, f64), kappa_p: f64) -> (f64, f64) {
    let c = (3.0 * kappa_p).sqrt();
    let speed = |(r, m): (f64, f64)| bulk_velocity(r, m).abs() + c * r;
    let s = speed(left).max(speed(right));
    let fl = macro_flux(left.0, left.1, kappa_p);
    let fr = macro_flux(right.0, right.1, kappa_p);
    (
        0.5 * (fl.0 + fr.0) - 0.5 * s * (right.0 - left.0),
        0.5 * (fl.1 + fr.1) - 0.5 * s * (right.1 - left.1),
    )
}

/// Momentum source `-rho_i sum_{k != i} phi(d(x_i, x_k)) (u_i - u_k) rho_k dx`.
pub fn alignment_source(state: &MacroState, w: &WeightParams) -> Result<Vec<f64>> {
    w.validate()?;
    if w.alpha >= 1.5 {
        return Err(Error::Config(format!("alpha must be below 3/2, got {}", w.alpha)));
    }
    if w.length != state.grid.length {
        return Err(Error::GridMismatch("weight length differs from the torus length".into()));
    }
    let kernel = sample_kernel(w, &state.grid);
    Ok(source_with(&kernel, &state.rho, &state.velocity(), state.grid.dx))
}

fn source_with(kernel: &[f64], rho: &[f64], u: &[f64], dx: f64) -> Vec<f64> {
    let n = rho.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for k in 0..n {
                if k == i {
                    continue;
                }
                let d = if i >= k { i - k } else { i + n - k };
                acc += kernel[d] * (u[i] - u[k]) * rho[k];
            }
            -rho[i] * acc * dx
        })
        .collect()
}

#[inline]
fn minmod(a: f64, b: f64) -> f64 {
    if a * b <= 0.0 {
        0.0
    } else if a > 0.0 {
        a.min(b)
    } else {
        a.max(b)
    }
}

struct Rhs {
    d_rho: Vec<f64>,
    d_m: Vec<f64>,
    /// `-sum u S dx`, the alignment dissipation rate.
    dissipation: f64,
}

fn slopes(q: &[f64], limiter: Limiter) -> Vec<f64> {
    let n = q.len();
    (0..n)
        .map(|i| {
            let a = q[i] - q[(i + n - 1) % n];
            let b = q[(i + 1) % n] - q[i];
            match limiter {
                Limiter::Minmod => minmod(a, b),
                Limiter::None => 0.5 * (a + b),
            }
        })
        .collect()
}

fn rhs(rho: &[f64], m: &[f64], kappa: f64, dx: f64, limiter: Limiter, kernel: Option<&[f64]>) -> Rhs {
    let n = rho.len();
    let sr = slopes(rho, limiter);
    let sm = slopes(m, limiter);
    // flux through the right face of every cell
    let faces: Vec<(f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let j = (i + 1) % n;
            let left = (rho[i] + 0.5 * sr[i], m[i] + 0.5 * sm[i]);
            let right = (rho[j] - 0.5 * sr[j], m[j] - 0.5 * sm[j]);
            numerical_flux_rusanov(left, right, kappa)
        })
        .collect();
    let mut d_rho = vec![0.0; n];
    let mut d_m = vec![0.0; n];
    for i in 0..n {
        let l = faces[(i + n - 1) % n];
        let r = faces[i];
        d_rho[i] = -(r.0 - l.0) / dx;
        d_m[i] = -(r.1 - l.1) / dx;
    }
    let mut dissipation = 0.0;
    if let Some(kernel) = kernel {
        let u: Vec<f64> = rho.iter().zip(m).map(|(r, m)| bulk_velocity(*r, *m)).collect();
        let s = source_with(kernel, rho, &u, dx);
        for i in 0..n {
            d_m[i] += s[i];
            dissipation -= u[i] * s[i];
        }
        dissipation *= dx;
    }
    Rhs { d_rho, d_m, dissipation }
}

/// Step integrator with cached kernel samples.
#[derive(Debug, Clone)]
pub struct MacroSolver {
    cfg: MacroConfig,
    kernel: Option<Vec<f64>>,
}

impl MacroSolver {
    pub fn new(cfg: MacroConfig, grid: &TorusGrid) -> Result<Self> {
        cfg.validate()?;
        let kernel = match &cfg.weights {
            Some(w) => {
                if w.length != grid.length {
                    return Err(Error::GridMismatch("weight length differs from the torus length".into()));
                }
                Some(sample_kernel(w, grid))
            }
            None => None,
        };
        Ok(Self { cfg, kernel })
    }

    pub fn max_dt(&self, state: &MacroState) -> f64 {
        let s = state.max_wave_speed();
        if s > 0.0 {
            self.cfg.cfl * state.grid.dx / s
        } else {
            f64::INFINITY
        }
    }

    /// One SSP-RK2 step; returns the alignment dissipation over the step.
    pub fn step(&self, state: &mut MacroState, dt: f64) -> Result<f64> {
        let limit = self.max_dt(state);
        if dt > limit * (1.0 + 1e-12) {
            return Err(Error::StepSize { dt, limit });
        }
        let (dx, kappa, lim) = (state.grid.dx, state.kappa_p, self.cfg.limiter);
        let kernel = self.kernel.as_deref();
        let n = state.grid.n;

        let k1 = rhs(&state.rho, &state.m, kappa, dx, lim, kernel);
        let r1: Vec<f64> = (0..n).map(|i| state.rho[i] + dt * k1.d_rho[i]).collect();
        let m1: Vec<f64> = (0..n).map(|i| state.m[i] + dt * k1.d_m[i]).collect();
        let k2 = rhs(&r1, &m1, kappa, dx, lim, kernel);
        for i in 0..n {
            state.rho[i] = 0.5 * state.rho[i] + 0.5 * (r1[i] + dt * k2.d_rho[i]);
            state.m[i] = 0.5 * state.m[i] + 0.5 * (m1[i] + dt * k2.d_m[i]);
        }
        for (i, r) in state.rho.iter_mut().enumerate() {
            if *r < -1e-12 {
                return Err(Error::NegativeDensity { cell: i, value: *r });
            }
            if *r < 0.0 {
                *r = 0.0;
            }
        }
        Ok(0.5 * dt * (k1.dissipation + k2.dissipation))
    }
}

pub fn macro_step(state: &MacroState, cfg: &MacroConfig, dt: f64) -> Result<MacroState> {
    let solver = MacroSolver::new(cfg.clone(), &state.grid)?;
    let mut out = state.clone();
    solver.step(&mut out, dt)?;
    Ok(out)
}

/// `w+- = u +- sqrt(3 kappa) rho`.
pub fn riemann_invariants(state: &MacroState) -> (Vec<f64>, Vec<f64>) {
    let c = (3.0 * state.kappa_p).sqrt();
    let u = state.velocity();
    let plus = u.iter().zip(&state.rho).map(|(u, r)| u + c * r).collect();
    let minus = u.iter().zip(&state.rho).map(|(u, r)| u - c * r).collect();
    (plus, minus)
}

/// Estimated time until characteristics of either invariant cross,
/// `1 / max(-dw/dx)`; infinite when both invariants are nondecreasing.
pub fn crossing_time(state: &MacroState) -> f64 {
    let (wp, wm) = riemann_invariants(state);
    let n = state.grid.n;
    let dx = state.grid.dx;
    let steep = |w: &[f64]| {
        (0..n)
            .map(|i| -(w[(i + 1) % n] - w[(i + n - 1) % n]) / (2.0 * dx))
            .fold(0.0, f64::max)
    };
    let s = steep(&wp).max(steep(&wm));
    if s > 0.0 {
        1.0 / s
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroLedgerRow {
    pub t: f64,
    pub mass: f64,
    pub momentum: f64,
    pub free_energy: f64,
    #[serde(rename = "D_align_cum")]
    pub d_align_cum: f64,
    pub min_crossing_time: f64,
}

#[derive(Debug, Clone)]
pub struct MacroTrajectory {
    pub states: Vec<(f64, MacroState)>,
    pub ledger: Vec<MacroLedgerRow>,
    /// Set when the steepening monitor predicts crossing before `t_end`.
    pub shock_warning: bool,
    pub steps: usize,
}

impl MacroTrajectory {
    pub fn final_state(&self) -> &MacroState {
        &self.states.last().expect("trajectory holds the initial state").1
    }

    /// Worst relative excess of `E(t) + D_align_cum(t)` over `E(0)`.
    pub fn budget_residual(&self) -> f64 {
        let e0 = self.ledger[0].free_energy;
        self.ledger
            .iter()
            .map(|r| (r.free_energy + r.d_align_cum - e0) / e0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_ledger_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        for r in &self.ledger {
            w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Rows `t,x,rho,u` for every stored state.
    pub fn write_trajectory_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("t,x,rho,u\n");
        for (t, s) in &self.states {
            let u = s.velocity();
            for i in 0..s.grid.n {
                out.push_str(&format!("{t},{},{},{}\n", s.grid.centers[i], s.rho[i], u[i]));
            }
        }
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
    }
}

fn row(t: f64, s: &MacroState, d: f64) -> MacroLedgerRow {
    MacroLedgerRow {
        t,
        mass: s.mass(),
        momentum: s.momentum(),
        free_energy: s.free_energy(),
        d_align_cum: d,
        min_crossing_time: crossing_time(s),
    }
}

/// Runs to `cfg.t_end`, storing states every `cfg.snapshot_dt`.
pub fn run_macro(state0: &MacroState, cfg: &MacroConfig) -> Result<MacroTrajectory> {
    let mut times = Vec::new();
    if let Some(h) = cfg.snapshot_dt {
        let k = (cfg.t_end / h * (1.0 - 1e-12)).floor() as usize;
        times.extend((1..=k).map(|j| j as f64 * h).filter(|t| *t < cfg.t_end));
    }
    times.push(cfg.t_end);
    run_macro_at(state0, cfg, &times)
}

/// Runs through the increasing `times`, landing on each exactly; the
/// initial state is always stored first.
pub fn run_macro_at(state0: &MacroState, cfg: &MacroConfig, times: &[f64]) -> Result<MacroTrajectory> {
    let solver = MacroSolver::new(cfg.clone(), &state0.grid)?;
    if times.windows(2).any(|w| w[1] <= w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::Config("output times must be increasing and nonnegative".into()));
    }
    let horizon = times.last().copied().unwrap_or(0.0).max(cfg.t_end);
    let mut state = state0.clone();
    let mut t = 0.0;
    let mut d_cum = 0.0;
    let mut steps = 0;
    let first = row(0.0, &state, 0.0);
    let mass0 = first.mass;
    let mom0 = first.momentum;
    let mut shock_warning = first.min_crossing_time < horizon;
    let mut ledger = vec![first];
    let mut states = vec![(0.0, state.clone())];
    for &target in times {
        while t < target {
            let dt = solver.max_dt(&state).min(target - t);
            d_cum += solver.step(&mut state, dt)?;
            steps += 1;
            t = if target - t - dt <= 1e-14 * target.max(1.0) { target } else { t + dt };
            let r = row(t, &state, d_cum);
            if (r.mass - mass0).abs() > 1e-12 * mass0.abs().max(1.0) {
                return Err(Error::Conservation(format!("mass drifted from {mass0} to {} at t = {t}", r.mass)));
            }
            if (r.momentum - mom0).abs() > 1e-10 {
                return Err(Error::Conservation(format!(
                    "momentum drifted from {mom0} to {} at t = {t}",
                    r.momentum
                )));
            }
            if t + r.min_crossing_time < horizon {
                shock_warning = true;
            }
            ledger.push(r);
        }
        if states.last().map(|(s, _)| *s) != Some(target) {
            states.push((target, state.clone()));
        }
    }
    if shock_warning {
        log::warn!("steepening monitor predicts characteristic crossing before t = {horizon}");
    }
    Ok(MacroTrajectory {
        states,
        ledger,
        shock_warning,
        steps,
    })
}
