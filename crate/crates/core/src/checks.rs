//! Property suite behind `check-invariants`.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::entropy::lower_bound_pointwise;
use crate::error::Result;
use crate::grid::{build_phase_grid, TorusGrid, VelocityGrid};
use crate::hydro::{run_macro, MacroConfig, MacroState};
use crate::kinetic::{
    column_moments, indicator_column, maxwellian_indicator, minimization_check, run_kinetic, DistributionField,
    KineticConfig, MomentCorrection, NoObserver, C1,
};
use crate::weight::{verify_phi_gap, WeightParams};

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {}", self.name, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvariantConfig {
    pub seed: u64,
    pub samples: usize,
    /// Grid size of the conservation runs (both directions for the kinetic one).
    pub n: usize,
    pub kinetic_steps: usize,
}

impl Default for InvariantConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            samples: 100,
            n: 256,
            kinetic_steps: 1000,
        }
    }
}

/// Mass, momentum and energy of the discrete indicator equilibrium.
pub fn check_maxwellian_moments(cfg: &InvariantConfig) -> Result<CheckResult> {
    let vg = VelocityGrid::new(256, 2.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut col = vec![0.0; vg.n];
    let (mut e0, mut e1, mut e2) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..cfg.samples {
        let rho = rng.gen_range(0.05..2.0);
        let reach = vg.v_max - 0.5 * rho - 2.0 * vg.dv;
        let u = rng.gen_range(-reach..reach);
        indicator_column(rho, u, &vg, MomentCorrection::Full, &mut col)?;
        let (m0, m1, m2) = column_moments(&col, &vg);
        e0 = e0.max((m0 - rho).abs());
        e1 = e1.max((m1 - rho * u).abs());
        e2 = e2.max((m2 - rho * u * u - C1 * rho.powi(3)).abs());
    }
    let dv2 = vg.dv * vg.dv;
    Ok(CheckResult {
        name: "maxwellian-moments",
        passed: e0 <= 1e-13 && e1 <= 1e-13 && e2 <= 5.0 * dv2,
        detail: format!("mass {e0:.2e}, momentum {e1:.2e}, energy {e2:.2e} (5dv^2 = {:.2e})", 5.0 * dv2),
    })
}

/// Random nonnegative fields with values in `[0, 1]`.
pub fn random_unit_field(rng: &mut impl Rng, n_x: usize, n_v: usize, v_max: f64) -> Result<DistributionField> {
    let g = build_phase_grid(n_x, n_v, 2.0 * PI, v_max)?;
    let mut f = DistributionField::zeros(g);
    let edge = n_v / 4;
    for col in f.values.chunks_mut(n_v) {
        for v in &mut col[edge..n_v - edge] {
            *v = rng.gen_range(0.0..1.0);
        }
    }
    Ok(f)
}

pub fn check_minimization(cfg: &InvariantConfig) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed + 1);
    let mut worst = f64::NEG_INFINITY;
    let mut failures = 0;
    for _ in 0..cfg.samples {
        let f = random_unit_field(&mut rng, 8, 64, 1.0)?;
        let c = minimization_check(&f)?;
        worst = worst.max((c.lhs - c.rhs) / c.rhs.abs());
        failures += usize::from(!c.ok);
    }
    Ok(CheckResult {
        name: "minimization",
        passed: failures == 0,
        detail: format!("{failures} violations, worst relative excess {worst:.2e}"),
    })
}

pub fn check_phi_gap_sweep() -> Result<CheckResult> {
    let mut points = 0;
    let mut failures = 0;
    let mut worst = f64::NEG_INFINITY;
    for &alpha in &[0.1, 0.5, 1.0, 1.4, 1.9] {
        for &beta in &[0.5, 1.0, 2.0, 4.0, 8.0] {
            for &eps in &[1.0, 0.3, 0.1, 0.03, 0.01, 1e-3, 1e-4, 1e-6] {
                let p = WeightParams::regularized(alpha, beta, eps, 2.0 * PI);
                for k in 0..50 {
                    let r = 1e-6 * (PI / 1e-6f64).powf(k as f64 / 49.0);
                    let g = verify_phi_gap(r, &p)?;
                    points += 1;
                    worst = worst.max(g.gap - g.bound);
                    failures += usize::from(g.gap > g.bound + 1e-12);
                }
            }
        }
    }
    Ok(CheckResult {
        name: "weight-gap",
        passed: failures == 0,
        detail: format!("{points} points, {failures} violations, max(gap - bound) {worst:.2e}"),
    })
}

pub fn check_lower_bound(cfg: &InvariantConfig) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed + 2);
    let n = 100 * cfg.samples;
    let mut failures = 0;
    for _ in 0..n {
        let (a, b) = (rng.gen_range(0.0..3.0), rng.gen_range(1e-6..3.0));
        failures += usize::from(!lower_bound_pointwise(a, b).ok);
    }
    Ok(CheckResult {
        name: "lower-bound",
        passed: failures == 0,
        detail: format!("{n} pairs, {failures} violations"),
    })
}

/// Kinetic and macro runs from a smooth profile with unit mass.
pub fn check_conservation(cfg: &InvariantConfig) -> Result<Vec<CheckResult>> {
    let n = cfg.n;
    let g = build_phase_grid(n, n, 2.0 * PI, 0.6)?;
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * g.x.dx).collect();
    let rho: Vec<f64> = xs.iter().map(|x| (1.0 + 0.2 * x.sin()) / (2.0 * PI)).collect();
    let u: Vec<f64> = xs.iter().map(|x| 0.1 * x.sin()).collect();
    let f0 = maxwellian_indicator(&rho, &u, &g)?;
    let mut kcfg = KineticConfig::new(0.5, 4.0, 0.1, 2.0 * PI, 0.0);
    let dt = kcfg.cfl * g.x.dx / g.v.v_max;
    kcfg.t_end = dt * cfg.kinetic_steps as f64;
    let run = run_kinetic(&f0, &kcfg, &mut NoObserver)?;
    let mass_err = (run.final_state.mass() - 1.0).abs();
    let mom_drift = (run.final_state.momentum() - f0.momentum()).abs();
    let kinetic = CheckResult {
        name: "kinetic-conservation",
        passed: mass_err <= 1e-10 && mom_drift <= 1e-9,
        detail: format!("{} steps, |mass - 1| {mass_err:.2e}, momentum drift {mom_drift:.2e}", run.steps),
    };

    let tg = TorusGrid::new(n, 2.0 * PI)?;
    let xs: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * tg.dx).collect();
    let rho: Vec<f64> = xs.iter().map(|x| (1.0 + 0.2 * x.sin()) / (2.0 * PI)).collect();
    let u: Vec<f64> = xs.iter().map(|x| 0.1 * x.sin()).collect();
    let s0 = MacroState::from_primitive(tg, rho, &u, C1)?;
    let traj = run_macro(&s0, &MacroConfig::new(Some(WeightParams::singular(0.5, 2.0 * PI)), 0.5))?;
    let last = traj.final_state();
    let mass_err = (last.mass() - s0.mass()).abs();
    let mom_drift = (last.momentum() - s0.momentum()).abs();
    let macro_check = CheckResult {
        name: "macro-conservation",
        passed: mass_err <= 1e-12 && mom_drift <= 1e-10,
        detail: format!("{} steps, mass drift {mass_err:.2e}, momentum drift {mom_drift:.2e}", traj.steps),
    };
    Ok(vec![kinetic, macro_check])
}

/// Every check in a fixed order.
pub fn run_invariant_suite(cfg: &InvariantConfig) -> Result<Vec<CheckResult>> {
    let mut out = vec![
        check_phi_gap_sweep()?,
        check_maxwellian_moments(cfg)?,
        check_minimization(cfg)?,
        check_lower_bound(cfg)?,
    ];
    out.extend(check_conservation(cfg)?);
    Ok(out)
}
