//! Time integration of the BGK-alignment model
//!
//! `df/dt + v df/dx + d/dv((J - K v) f) = (M[f] - f) / eps`
//!
//! by Strang splitting: half transport, half drift, exact relaxation, half
//! drift, half transport.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::field::{
    bulk_velocity, column_moments, compute_moments, indicator_column, kinetic_energy,
    DistributionField, MomentCorrection, MomentSet,
};
use crate::error::{Error, Result};
use crate::grid::{TorusGrid, VelocityGrid};
use crate::weight::{sample_kernel, Convolver, WeightParams};

/// Number of outermost velocity cells per side watched by the truncation monitor.
pub const BOUNDARY_CELLS: usize = 2;

/// Slope limiter of the x reconstruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportLimiter {
    #[default]
    Minmod,
    /// Monotonized central.
    Mc,
}

impl TransportLimiter {
    #[inline]
    fn slope(self, a: f64, b: f64) -> f64 {
        match self {
            TransportLimiter::Minmod => minmod(a, b),
            TransportLimiter::Mc => minmod(0.5 * (a + b), 2.0 * minmod(a, b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KineticConfig {
    pub epsilon: f64,
    /// Regularized weights; `weights.epsilon` must equal `epsilon`.
    pub weights: WeightParams,
    pub cfl: f64,
    pub limiter: TransportLimiter,
    pub t_end: f64,
    pub boundary_mass_tol: f64,
    /// Allowed relative excess in the energy budget before a run aborts.
    pub budget_tol: f64,
}

impl KineticConfig {
    pub fn new(alpha: f64, beta: f64, epsilon: f64, length: f64, t_end: f64) -> Self {
        Self {
            epsilon,
            weights: WeightParams::regularized(alpha, beta, epsilon, length),
            cfl: 0.5,
            limiter: TransportLimiter::Minmod,
            t_end,
            boundary_mass_tol: 1e-10,
            budget_tol: 1e-3,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.weights.regularized {
            return Err(Error::Config("the kinetic model needs regularized weights".into()));
        }
        if self.weights.epsilon != self.epsilon {
            return Err(Error::Config(format!(
                "weight epsilon {} differs from relaxation epsilon {}",
                self.weights.epsilon, self.epsilon
            )));
        }
        if !(self.weights.alpha > 0.0 && self.weights.beta > 0.0) {
            return Err(Error::Config("alpha and beta must be positive".into()));
        }
        if !(self.epsilon > 0.0 && self.epsilon <= 1.0) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1], got {}", self.epsilon)));
        }
        if !(self.cfl > 0.0 && self.cfl <= 1.0) {
            return Err(Error::Config(format!("cfl must lie in (0, 1], got {}", self.cfl)));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be nonnegative, got {}", self.t_end)));
        }
        Ok(())
    }
}

/// `J = phi * (rho u)` and `K = phi * rho`; the force is `J - v K`.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentCoefficients {
    pub j: Vec<f64>,
    pub k: Vec<f64>,
}

pub fn alignment_coefficients(mom: &MomentSet, w: &WeightParams, grid: &TorusGrid) -> Result<AlignmentCoefficients> {
    if !w.regularized {
        return Err(Error::Config(
            "alignment coefficients need a bounded (regularized) kernel".into(),
        ));
    }
    Ok(coefficients_with(&Convolver::for_weights(w, grid), mom))
}

fn coefficients_with(conv: &Convolver, mom: &MomentSet) -> AlignmentCoefficients {
    let flux: Vec<f64> = mom.rho.iter().zip(&mom.velocity).map(|(r, u)| r * u).collect();
    AlignmentCoefficients {
        j: conv.apply(&flux),
        k: conv.apply(&mom.rho),
    }
}

/// `(1/2) sum_ik phi(x_i - x_k) |u_i - u_k|^2 rho_i rho_k dx^2`, summed directly.
pub fn alignment_dissipation(mom: &MomentSet, w: &WeightParams, grid: &TorusGrid) -> f64 {
    let kernel = sample_kernel(w, grid);
    let n = grid.n;
    let rows: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut acc = 0.0;
            for k in 0..n {
                let d = if i >= k { i - k } else { i + n - k };
                let du = mom.velocity[i] - mom.velocity[k];
                acc += kernel[d] * du * du * mom.rho[k];
            }
            acc * mom.rho[i]
        })
        .collect();
    0.5 * rows.iter().sum::<f64>() * grid.dx * grid.dx
}

/// The same functional through `sum rho u^2 K - sum rho u J`.
pub fn alignment_dissipation_from_coefficients(mom: &MomentSet, coeff: &AlignmentCoefficients, dx: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..mom.len() {
        let (r, u) = (mom.rho[i], mom.velocity[i]);
        acc += r * u * (u * coeff.k[i] - coeff.j[i]);
    }
    acc * dx
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

/// One limited upwind step for `dg/dt + c dg/dx = 0` on a periodic row,
/// `nu = c dt / dx`, `|nu| <= 1`.
fn advect_row(g: &[f64], nu: f64, limiter: TransportLimiter, out: &mut [f64]) {
    let n = g.len();
    if nu == 0.0 {
        out.copy_from_slice(g);
        return;
    }
    let at = |i: isize| g[i.rem_euclid(n as isize) as usize];
    let slope = |i: isize| limiter.slope(at(i) - at(i - 1), at(i + 1) - at(i));
    let a = nu.abs();
    // flux through the right face of cell i, already scaled by dt/dx
    let face = |i: isize| {
        if nu > 0.0 {
            nu * (at(i) + 0.5 * (1.0 - a) * slope(i))
        } else {
            nu * (at(i + 1) - 0.5 * (1.0 - a) * slope(i + 1))
        }
    };
    let mut left = face(-1);
    for i in 0..n {
        let right = face(i as isize);
        out[i] = g[i] - (right - left);
        left = right;
    }
}

fn transport_in_place(f: &mut DistributionField, dt: f64, cfl: f64, limiter: TransportLimiter) -> Result<()> {
    let g = &f.grid;
    let limit = cfl * g.x.dx / g.v.v_max;
    if dt > limit * (1.0 + 1e-12) {
        return Err(Error::StepSize { dt, limit });
    }
    let (n_x, n_v) = (g.n_x(), g.n_v());
    let dx = g.x.dx;
    let rows: Vec<Vec<f64>> = (0..n_v)
        .into_par_iter()
        .map(|j| {
            let row: Vec<f64> = (0..n_x).map(|i| f.values[i * n_v + j]).collect();
            let mut out = vec![0.0; n_x];
            advect_row(&row, f.grid.v.centers[j] * dt / dx, limiter, &mut out);
            out
        })
        .collect();
    for (j, row) in rows.iter().enumerate() {
        for (i, v) in row.iter().enumerate() {
            f.values[i * n_v + j] = *v;
        }
    }
    Ok(())
}

/// Free transport `df/dt + v df/dx = 0` over `dt` with the default CFL bound 1.
pub fn step_transport(f: &DistributionField, dt: f64) -> Result<DistributionField> {
    step_transport_cfl(f, dt, 1.0)
}

/// Free transport with minmod slopes, rejecting `dt > cfl dx / v_max`.
pub fn step_transport_cfl(f: &DistributionField, dt: f64, cfl: f64) -> Result<DistributionField> {
    step_transport_with(f, dt, cfl, TransportLimiter::Minmod)
}

pub fn step_transport_with(
    f: &DistributionField,
    dt: f64,
    cfl: f64,
    limiter: TransportLimiter,
) -> Result<DistributionField> {
    let mut out = f.clone();
    transport_in_place(&mut out, dt, cfl, limiter)?;
    Ok(out)
}

/// Cubic Lagrange interpolation of cell-centered data at fractional index `s`,
/// clipped to the two bracketing values; zero outside the grid.
fn interp_clipped(col: &[f64], s: f64) -> f64 {
    let n = col.len() as isize;
    if !(s > -2.0 && s < (n + 1) as f64) {
        return 0.0;
    }
    let k = s.floor() as isize;
    let t = s - k as f64;
    let at = |i: isize| if (0..n).contains(&i) { col[i as usize] } else { 0.0 };
    let (pm, p0, p1, p2) = (at(k - 1), at(k), at(k + 1), at(k + 2));
    let wm = -t * (t - 1.0) * (t - 2.0) / 6.0;
    let w0 = (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0;
    let w1 = -(t + 1.0) * t * (t - 2.0) / 2.0;
    let w2 = (t + 1.0) * t * (t - 1.0) / 6.0;
    let v = wm * pm + w0 * p0 + w1 * p1 + w2 * p2;
    v.clamp(p0.min(p1), p0.max(p1))
}

/// Exact-characteristic drift of one column, followed by a linear tilt that
/// restores the column mass and sets the column momentum to
/// `m + tau (J rho - K m)`.
fn drift_column(
    col: &mut [f64],
    scratch: &mut [f64],
    vg: &VelocityGrid,
    j_coef: f64,
    k_coef: f64,
    tau: f64,
    boundary_tol: f64,
) -> Result<()> {
    let (rho, m, _) = column_moments(col, vg);
    if rho <= 0.0 || (j_coef == 0.0 && k_coef == 0.0) {
        return Ok(());
    }
    let kt = k_coef * tau;
    let phi1 = if kt.abs() > 1e-300 { kt.exp_m1() / k_coef } else { tau };
    let growth = kt.exp();
    let n = vg.n;
    let dv = vg.dv;
    let edge = BOUNDARY_CELLS.min(n / 2);
    let low_mass: f64 = col[..edge].iter().sum::<f64>() * dv;
    let high_mass: f64 = col[n - edge..].iter().sum::<f64>() * dv;
    scratch.copy_from_slice(col);
    for (j, out) in col.iter_mut().enumerate() {
        let v = vg.centers[j];
        let foot = v + (k_coef * v - j_coef) * phi1;
        let exit_low = -vg.v_max - foot;
        let exit_high = foot - vg.v_max;
        if (exit_low > 2.0 * dv && low_mass > boundary_tol) || (exit_high > 2.0 * dv && high_mass > boundary_tol) {
            return Err(Error::Truncation(format!(
                "drift foot {foot:.6} leaves the velocity grid while the edge carries mass {:.3e}",
                low_mass.max(high_mass)
            )));
        }
        *out = growth * interp_clipped(scratch, (foot - vg.centers[0]) / dv);
    }

    let target_m = m + tau * (j_coef * rho - k_coef * m);
    let (r0, m0, _) = column_moments(col, vg);
    if r0 <= 0.0 {
        col.copy_from_slice(scratch);
        return Ok(());
    }
    let ubar = m0 / r0;
    // unknowns (a, b) in the factor 1 + a + b (v - ubar)
    let (mut p, mut w) = (0.0, 0.0);
    for (f, v) in col.iter().zip(&vg.centers) {
        p += f * (v - ubar);
        w += f * v * (v - ubar);
    }
    p *= dv;
    w *= dv;
    let det = r0 * w - p * m0;
    let mut tilted = false;
    if det.abs() > 1e-300 {
        let rm = rho - r0;
        let mm = target_m - m0;
        let a = (rm * w - p * mm) / det;
        let b = (r0 * mm - m0 * rm) / det;
        let factor = |v: f64| 1.0 + a + b * (v - ubar);
        if col.iter().zip(&vg.centers).all(|(f, v)| *f == 0.0 || factor(*v) >= 0.0) {
            for (f, v) in col.iter_mut().zip(&vg.centers) {
                *f *= factor(*v);
            }
            tilted = true;
        }
    }
    if !tilted {
        let s = rho / r0;
        col.iter_mut().for_each(|f| *f *= s);
    }
    Ok(())
}

fn drift_in_place(f: &mut DistributionField, coeff: &AlignmentCoefficients, tau: f64, boundary_tol: f64) -> Result<()> {
    let vg = f.grid.v.clone();
    f.values
        .par_chunks_mut(vg.n)
        .enumerate()
        .try_for_each_init(
            || vec![0.0; vg.n],
            |scratch, (i, col)| drift_column(col, scratch, &vg, coeff.j[i], coeff.k[i], tau, boundary_tol),
        )
}

/// Drift `df/dt + d/dv((J - K v) f) = 0` with frozen coefficients over `dt`.
pub fn step_velocity_drift(f: &DistributionField, coeff: &AlignmentCoefficients, dt: f64) -> Result<DistributionField> {
    if coeff.j.len() != f.grid.n_x() || coeff.k.len() != f.grid.n_x() {
        return Err(Error::GridMismatch("coefficient arrays do not match the x-grid".into()));
    }
    if coeff.k.iter().any(|k| *k < 0.0) {
        return Err(Error::Config("K must be nonnegative".into()));
    }
    let mut out = f.clone();
    drift_in_place(&mut out, coeff, dt, 1e-10)?;
    Ok(out)
}

/// Exact relaxation `f <- M + exp(-dt/eps) (f - M)`; returns the kinetic
/// energy it removes, `(1 - exp(-dt/eps)) / 2 * sum v^2 (f - M)`.
fn relax_in_place(f: &mut DistributionField, epsilon: f64, dt: f64) -> Result<f64> {
    let decay = (-dt / epsilon).exp();
    let vg = f.grid.v.clone();
    let drops = f
        .values
        .par_chunks_mut(vg.n)
        .map_init(
            || vec![0.0; vg.n],
            |eq, col| -> Result<f64> {
                let (rho, m, s_old) = column_moments(col, &vg);
                indicator_column(rho, bulk_velocity(rho, m), &vg, MomentCorrection::default(), eq)?;
                for (fv, mv) in col.iter_mut().zip(eq.iter()) {
                    *fv = mv + decay * (*fv - mv);
                }
                Ok(0.5 * (s_old - column_moments(col, &vg).2))
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    Ok(drops.iter().sum::<f64>() * f.grid.x.dx)
}

/// BGK relaxation over `dt` (exact in time).
pub fn step_relaxation(f: &DistributionField, epsilon: f64, dt: f64) -> Result<DistributionField> {
    let mut out = f.clone();
    relax_in_place(&mut out, epsilon, dt)?;
    Ok(out)
}

/// Dissipation collected during one step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepDissipation {
    pub align: f64,
    pub relax: f64,
}

/// Strang stepper with a cached kernel transform.
#[derive(Debug)]
pub struct KineticSolver {
    cfg: KineticConfig,
    conv: Convolver,
}

impl KineticSolver {
    pub fn new(cfg: KineticConfig, grid: &TorusGrid) -> Result<Self> {
        cfg.validate()?;
        if cfg.weights.length != grid.length {
            return Err(Error::GridMismatch("weight length differs from the torus length".into()));
        }
        let conv = Convolver::for_weights(&cfg.weights, grid);
        Ok(Self { cfg, conv })
    }

    pub fn config(&self) -> &KineticConfig {
        &self.cfg
    }

    /// Largest step allowed by the transport CFL condition.
    pub fn max_dt(&self, f: &DistributionField) -> f64 {
        self.cfg.cfl * f.grid.x.dx / f.grid.v.v_max
    }

    /// Drift coefficients from the current moments.
    pub fn coefficients(&self, f: &DistributionField) -> (MomentSet, AlignmentCoefficients) {
        let mom = compute_moments(f);
        let c = coefficients_with(&self.conv, &mom);
        (mom, c)
    }

    fn half_drift(&self, f: &mut DistributionField, tau: f64) -> Result<f64> {
        let (mom, coeff) = self.coefficients(f);
        let d = alignment_dissipation_from_coefficients(&mom, &coeff, f.grid.x.dx);
        drift_in_place(f, &coeff, tau, self.cfg.boundary_mass_tol)?;
        Ok(d * tau)
    }

    /// `T(dt/2) D(dt/2) R(dt) D(dt/2) T(dt/2)`. Drift coefficients are taken
    /// from the moments at the start of each drift sub-step.
    pub fn step(&self, f: &mut DistributionField, dt: f64) -> Result<StepDissipation> {
        let half = 0.5 * dt;
        transport_in_place(f, half, self.cfg.cfl, self.cfg.limiter)?;
        let mut align = self.half_drift(f, half)?;
        let relax = relax_in_place(f, self.cfg.epsilon, dt)?;
        align += self.half_drift(f, half)?;
        transport_in_place(f, half, self.cfg.cfl, self.cfg.limiter)?;
        Ok(StepDissipation { align, relax })
    }
}

pub fn strang_step(f: &DistributionField, cfg: &KineticConfig, dt: f64) -> Result<DistributionField> {
    let solver = KineticSolver::new(cfg.clone(), &f.grid.x)?;
    let mut out = f.clone();
    solver.step(&mut out, dt)?;
    Ok(out)
}

/// One row of the kinetic energy ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    pub energy: f64,
    #[serde(rename = "D_align_cum")]
    pub d_align_cum: f64,
    #[serde(rename = "D_relax_cum")]
    pub d_relax_cum: f64,
    pub mass: f64,
    pub momentum: f64,
    pub boundary_mass: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnergyLedger {
    pub rows: Vec<LedgerRow>,
}

impl EnergyLedger {
    /// Largest relative excess of `E(t) + D_relax + D_align` over `E(0)`.
    pub fn budget_residual(&self) -> f64 {
        let Some(first) = self.rows.first() else {
            return 0.0;
        };
        let e0 = first.energy;
        self.rows
            .iter()
            .map(|r| (r.energy + r.d_relax_cum + r.d_align_cum - e0) / e0)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        for r in &self.rows {
            w.serialize(r).map_err(|e| Error::format(path, e.to_string()))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        let rows = r
            .deserialize()
            .collect::<std::result::Result<Vec<LedgerRow>, _>>()
            .map_err(|e| Error::format(path, e.to_string()))?;
        Ok(Self { rows })
    }
}

/// Receives the state after every step (and the initial state as step 0).
pub trait Observer {
    fn observe(&mut self, step: usize, t: f64, f: &DistributionField) -> Result<()>;
}

impl<F> Observer for F
where
    F: FnMut(usize, f64, &DistributionField) -> Result<()>,
{
    fn observe(&mut self, step: usize, t: f64, f: &DistributionField) -> Result<()> {
        self(step, t, f)
    }
}

/// Observer that ignores everything.
pub struct NoObserver;

impl Observer for NoObserver {
    fn observe(&mut self, _: usize, _: f64, _: &DistributionField) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct KineticRun {
    pub final_state: DistributionField,
    pub ledger: EnergyLedger,
    pub dt: f64,
    pub steps: usize,
}

/// Uniform step count landing exactly on `t_end`.
pub fn step_plan(t_end: f64, max_dt: f64) -> (usize, f64) {
    if t_end <= 0.0 {
        return (0, max_dt);
    }
    let steps = ((t_end / max_dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
    (steps, t_end / steps as f64)
}

fn ledger_row(t: f64, f: &DistributionField, d: StepDissipation) -> LedgerRow {
    LedgerRow {
        t,
        energy: kinetic_energy(f),
        d_align_cum: d.align,
        d_relax_cum: d.relax,
        mass: f.mass(),
        momentum: f.momentum(),
        boundary_mass: f.boundary_mass(BOUNDARY_CELLS),
    }
}

/// Advances `f0` to `cfg.t_end`, auditing conservation, positivity, velocity
/// truncation and the energy budget after every step.
pub fn run_kinetic(f0: &DistributionField, cfg: &KineticConfig, observer: &mut dyn Observer) -> Result<KineticRun> {
    let solver = KineticSolver::new(cfg.clone(), &f0.grid.x)?;
    if f0.min_value() < 0.0 {
        return Err(Error::Config("initial density has negative values".into()));
    }
    let (steps, dt) = step_plan(cfg.t_end, solver.max_dt(f0));
    let mut f = f0.clone();
    let mut cum = StepDissipation::default();
    let mut ledger = EnergyLedger {
        rows: vec![ledger_row(0.0, &f, cum)],
    };
    let e0 = ledger.rows[0].energy;
    let mass0 = ledger.rows[0].mass;
    observer.observe(0, 0.0, &f)?;
    for n in 1..=steps {
        let d = solver.step(&mut f, dt)?;
        cum.align += d.align;
        cum.relax += d.relax;
        let t = if n == steps { cfg.t_end } else { n as f64 * dt };
        let row = ledger_row(t, &f, cum);

        let min = f.min_value();
        if min < -1e-12 {
            return Err(Error::Conservation(format!("negative density {min:e} at t = {t}")));
        }
        if row.boundary_mass > cfg.boundary_mass_tol {
            return Err(Error::Truncation(format!(
                "boundary mass {:e} exceeds {:e} at t = {t}",
                row.boundary_mass, cfg.boundary_mass_tol
            )));
        }
        if (row.mass - mass0).abs() > 1e-12 * n as f64 * mass0.abs().max(1.0) {
            return Err(Error::Conservation(format!(
                "mass drifted from {mass0} to {} at t = {t}",
                row.mass
            )));
        }
        let residual = (row.energy + row.d_relax_cum + row.d_align_cum - e0) / e0;
        if residual > cfg.budget_tol {
            return Err(Error::EnergyBudget {
                residual,
                tol: cfg.budget_tol,
            });
        }
        ledger.rows.push(row);
        observer.observe(n, t, &f)?;
    }
    Ok(KineticRun {
        final_state: f,
        ledger,
        dt,
        steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_phase_grid;
    use crate::kinetic::field::{maxwellian_indicator, maxwellian_of};
    use crate::weight::conv_direct;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const L: f64 = 2.0 * PI;

    fn moments_from(rho: Vec<f64>, u: Vec<f64>) -> MomentSet {
        let momentum = rho.iter().zip(&u).map(|(r, v)| r * v).collect();
        MomentSet {
            second: vec![0.0; rho.len()],
            rho,
            momentum,
            velocity: u,
        }
    }

    #[test]
    fn coefficients_for_uniform_states() {
        let g = TorusGrid::new(64, L).unwrap();
        let w = WeightParams::regularized(0.5, 4.0, 0.1, L);
        let total: f64 = sample_kernel(&w, &g).iter().sum::<f64>() * g.dx;
        let c = alignment_coefficients(&moments_from(vec![1.0 / L; 64], vec![0.0; 64]), &w, &g).unwrap();
        for i in 0..64 {
            assert!(c.j[i].abs() < 1e-14);
            assert!((c.k[i] - total / L).abs() < 1e-12);
        }
        let c = alignment_coefficients(&moments_from(vec![0.3; 64], vec![0.7; 64]), &w, &g).unwrap();
        for i in 0..64 {
            // force at v = 0.7 vanishes
            assert!((c.j[i] - 0.7 * c.k[i]).abs() < 1e-12);
        }
        assert!(alignment_coefficients(&moments_from(vec![0.3; 64], vec![0.7; 64]), &WeightParams::singular(0.5, L), &g).is_err());
    }

    #[test]
    fn coefficients_match_direct_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let g = TorusGrid::new(64, L).unwrap();
        let w = WeightParams::regularized(1.0, 2.0, 0.2, L);
        let rho: Vec<f64> = (0..64).map(|_| rng.gen_range(0.1..1.0)).collect();
        let u: Vec<f64> = (0..64).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mom = moments_from(rho.clone(), u.clone());
        let c = alignment_coefficients(&mom, &w, &g).unwrap();
        let kernel = sample_kernel(&w, &g);
        let ru: Vec<f64> = rho.iter().zip(&u).map(|(r, v)| r * v).collect();
        let jd = conv_direct(&kernel, &ru, g.dx);
        let kd = conv_direct(&kernel, &rho, g.dx);
        for i in 0..64 {
            assert!((c.j[i] - jd[i]).abs() <= 1e-10 * jd[i].abs().max(1e-3));
            assert!((c.k[i] - kd[i]).abs() <= 1e-10 * kd[i]);
        }
    }

    #[test]
    fn dissipation_two_paths() {
        let g = TorusGrid::new(128, L).unwrap();
        let w = WeightParams::regularized(0.5, 4.0, 0.05, L);
        let u: Vec<f64> = g.centers.iter().map(|x| x.sin()).collect();
        let mom = moments_from(vec![1.0 / L; 128], u);
        let direct = alignment_dissipation(&mom, &w, &g);
        let c = alignment_coefficients(&mom, &w, &g).unwrap();
        let exp = alignment_dissipation_from_coefficients(&mom, &c, g.dx);
        assert!(direct > 0.0);
        assert!((direct - exp).abs() <= 1e-10 * direct);
        let flat = moments_from(vec![1.0 / L; 128], vec![0.4; 128]);
        assert!(alignment_dissipation(&flat, &w, &g).abs() < 1e-15);
    }

    #[test]
    fn transport_trivial_cases() {
        let g = build_phase_grid(32, 8, L, 2.0).unwrap();
        let flat = DistributionField::from_fn(g.clone(), |_, v| (-v * v).exp());
        let out = step_transport(&flat, 0.05).unwrap();
        for (a, b) in out.values.iter().zip(&flat.values) {
            assert!((a - b).abs() < 1e-15);
        }
        // n_v = 9 puts a cell center at v = 0
        let g = build_phase_grid(32, 9, L, 2.0).unwrap();
        assert_eq!(g.v.centers[4], 0.0);
        let f = DistributionField::from_fn(g.clone(), |x, v| 1.0 + x.sin() * (1.0 + v * v));
        let out = step_transport(&f, 0.05).unwrap();
        assert_eq!(out.column(3)[4], f.column(3)[4]);
        assert!((out.mass() - f.mass()).abs() < 1e-14 * f.mass());
        assert!(matches!(step_transport(&f, 1.0), Err(Error::StepSize { .. })));
    }

    #[test]
    fn transport_order_of_accuracy() {
        for lim in [TransportLimiter::Minmod, TransportLimiter::Mc] {
            transport_order_with(lim);
        }
    }

    fn transport_order_with(lim: TransportLimiter) {
        // one period of a smooth profile at speed 1 on v_max = 2
        let mut errs = Vec::new();
        for n in [64, 128, 256, 512] {
            let g = build_phase_grid(n, 4, L, 2.0).unwrap();
            let f0 = DistributionField::from_fn(g.clone(), |x, _| 1.0 + 0.5 * x.sin() + 0.2 * (2.0 * x).cos());
            let mut row: Vec<f64> = (0..n).map(|i| f0.column(i)[0]).collect();
            let steps = 4 * n;
            let nu = -L / steps as f64 / g.x.dx; // speed -1 on the lowest cell ... use |nu| < 1
            let mut out = vec![0.0; n];
            for _ in 0..steps {
                advect_row(&row, nu, lim, &mut out);
                std::mem::swap(&mut row, &mut out);
            }
            let err: f64 = (0..n).map(|i| (row[i] - f0.column(i)[0]).abs()).sum::<f64>() * g.x.dx;
            errs.push(err);
        }
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() >= 1.5, "{lim:?} {errs:?}");
        }
    }

    fn gaussian_column_field(n_v: usize, v_max: f64, sigma: f64) -> DistributionField {
        let g = build_phase_grid(4, n_v, L, v_max).unwrap();
        DistributionField::from_fn(g, |_, v| (-0.5 * v * v / (sigma * sigma)).exp() / (sigma * (2.0 * PI).sqrt()))
    }

    #[test]
    fn drift_identity_when_force_free() {
        let f = gaussian_column_field(64, 4.0, 0.5);
        let c = AlignmentCoefficients { j: vec![0.0; 4], k: vec![0.0; 4] };
        assert_eq!(step_velocity_drift(&f, &c, 0.1).unwrap(), f);
    }

    #[test]
    fn drift_contracts_gaussian_variance() {
        let (sigma, k, dt) = (0.5, 0.8, 0.05);
        let f = gaussian_column_field(512, 4.0, sigma);
        let c = AlignmentCoefficients { j: vec![0.0; 4], k: vec![k; 4] };
        let out = step_velocity_drift(&f, &c, dt).unwrap();
        let vg = &f.grid.v;
        let cell = vg.dv * vg.dv / 12.0;
        let (r0, _, s0) = column_moments(f.column(0), vg);
        let (r1, m1, s1) = column_moments(out.column(0), vg);
        assert!((r1 - r0).abs() < 1e-14);
        assert!(m1.abs() < 1e-14);
        let ratio = (s1 / r1 - cell) / (s0 / r0 - cell);
        assert!((ratio - (-2.0 * k * dt).exp()).abs() < 1e-4, "{ratio}");
    }

    #[test]
    fn drift_contracts_indicator_about_its_center() {
        let g = build_phase_grid(4, 400, L, 2.0).unwrap();
        let f = maxwellian_indicator(&[1.0; 4], &[0.3; 4], &g).unwrap();
        let k = 1.5;
        let c = AlignmentCoefficients { j: vec![0.3 * k; 4], k: vec![k; 4] };
        let dt = 0.1;
        let out = step_velocity_drift(&f, &c, dt).unwrap();
        let (r, m, s) = column_moments(out.column(2), &g.v);
        assert!((r - 1.0).abs() < 1e-13);
        assert!((m / r - 0.3).abs() < 1e-13);
        let var = s / r - 0.09;
        let want = (-2.0 * k * dt).exp() / 12.0;
        assert!((var - want).abs() < 2e-3 * want, "{var} vs {want}");
        // support shrinks: cells beyond the contracted edge are empty
        let edge = 0.3 + 0.5 * (-k * dt).exp() + 2.0 * g.v.dv;
        for (fv, v) in out.column(2).iter().zip(&g.v.centers) {
            if (v - 0.3).abs() > edge - 0.3 {
                assert_eq!(*fv, 0.0);
            }
        }
    }

    #[test]
    fn relaxation_examples() {
        let g = build_phase_grid(8, 128, L, 3.0).unwrap();
        let f = DistributionField::from_fn(g.clone(), |x, v| {
            0.5 * (1.0 + 0.3 * x.sin()) * ((-(v - 0.5).powi(2) * 8.0).exp() + (-(v + 0.7).powi(2) * 8.0).exp())
        });
        let m = maxwellian_of(&f).unwrap();
        let half = step_relaxation(&f, 0.3, 0.3 * 2f64.ln()).unwrap();
        for ((h, a), b) in half.values.iter().zip(&f.values).zip(&m.values) {
            assert!((h - 0.5 * (a + b)).abs() < 1e-14);
        }
        let fixed = step_relaxation(&m, 0.1, 0.5).unwrap();
        for (a, b) in fixed.values.iter().zip(&m.values) {
            assert!((a - b).abs() < 1e-13);
        }
        let mom0 = compute_moments(&f);
        let mom1 = compute_moments(&half);
        for i in 0..8 {
            assert!((mom0.rho[i] - mom1.rho[i]).abs() < 1e-13);
            assert!((mom0.momentum[i] - mom1.momentum[i]).abs() < 1e-13);
        }
        let full = step_relaxation(&f, 1e-3, 1.0).unwrap();
        assert!(kinetic_energy(&full) < kinetic_energy(&f));
        assert!((kinetic_energy(&full) - kinetic_energy(&m)).abs() < 1e-12);
    }

    fn sine_data(n_x: usize, n_v: usize) -> DistributionField {
        let g = build_phase_grid(n_x, n_v, L, 0.6).unwrap();
        let rho: Vec<f64> = g.x.centers.iter().map(|x| (1.0 + 0.2 * x.sin()) / L).collect();
        let u: Vec<f64> = g.x.centers.iter().map(|x| 0.1 * x.sin()).collect();
        maxwellian_indicator(&rho, &u, &g).unwrap()
    }

    #[test]
    fn strang_conserves_mass_and_momentum() {
        let f0 = sine_data(64, 64);
        let cfg = KineticConfig::new(0.5, 4.0, 0.05, L, 1.0);
        let solver = KineticSolver::new(cfg, &f0.grid.x).unwrap();
        let dt = solver.max_dt(&f0);
        let mut f = f0.clone();
        for _ in 0..50 {
            solver.step(&mut f, dt).unwrap();
        }
        assert!((f.mass() - 1.0).abs() < 1e-12);
        assert!((f.momentum() - f0.momentum()).abs() < 1e-13);
        assert!(f.min_value() >= 0.0);
    }

    #[test]
    fn strang_without_relaxation_matches_composition() {
        let f0 = sine_data(32, 64);
        let cfg = KineticConfig::new(0.5, 4.0, 1.0, L, 1.0);
        let mut loose = cfg.clone();
        loose.epsilon = 1e6;
        loose.weights.epsilon = 1.0; // same kernel as the reference composition
        let solver = KineticSolver { cfg: loose, conv: Convolver::for_weights(&cfg.weights, &f0.grid.x) };
        let dt = solver.max_dt(&f0);
        let mut a = f0.clone();
        solver.step(&mut a, dt).unwrap();

        let mut b = f0.clone();
        transport_in_place(&mut b, 0.5 * dt, 0.5, TransportLimiter::Minmod).unwrap();
        solver.half_drift(&mut b, 0.5 * dt).unwrap();
        solver.half_drift(&mut b, 0.5 * dt).unwrap();
        transport_in_place(&mut b, 0.5 * dt, 0.5, TransportLimiter::Minmod).unwrap();
        let scale = b.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = a.values.iter().zip(&b.values).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(diff <= 2.0 * dt / 1e6 * scale, "{diff}");
    }

    #[test]
    fn consensus_moments_stay_put() {
        let g = build_phase_grid(16, 128, L, 1.0).unwrap();
        let f0 = maxwellian_indicator(&[1.0 / L; 16], &[0.2; 16], &g).unwrap();
        let cfg = KineticConfig::new(0.5, 4.0, 0.01, L, 0.5);
        let run = run_kinetic(&f0, &cfg, &mut NoObserver).unwrap();
        let m0 = compute_moments(&f0);
        let m1 = compute_moments(&run.final_state);
        for i in 0..16 {
            assert!((m1.rho[i] - m0.rho[i]).abs() < 1e-10);
            assert!((m1.velocity[i] - 0.2).abs() < 1e-10);
        }
        let last = run.ledger.rows.last().unwrap();
        assert!(last.d_align_cum.abs() < 1e-15);
        assert!(run.ledger.budget_residual() <= 1e-12);
    }

    #[test]
    fn run_rejects_bad_configs() {
        let f0 = sine_data(16, 32);
        let mut cfg = KineticConfig::new(0.5, 4.0, 0.05, L, 0.1);
        cfg.weights.regularized = false;
        assert!(run_kinetic(&f0, &cfg, &mut NoObserver).unwrap_err().is_config());
        let mut cfg = KineticConfig::new(0.5, 4.0, 0.05, L, 0.1);
        cfg.weights.epsilon = 0.1;
        assert!(run_kinetic(&f0, &cfg, &mut NoObserver).unwrap_err().is_config());
    }

    #[test]
    fn step_plan_lands_on_horizon() {
        let (n, dt) = step_plan(1.0, 0.3);
        assert_eq!(n, 4);
        assert_eq!(dt, 0.25);
        let (n, _) = step_plan(1000.0 * 0.0123, 0.0123);
        assert_eq!(n, 1000);
    }
}
