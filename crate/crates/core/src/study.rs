//! Epsilon sweep comparing the kinetic solver against the macro reference.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ProfileKind, StudyConfig};
use crate::entropy::{
    fit_rate, lambda_theory, macro_state_of, relative_entropy_field, wellprepared_check, ConvergenceRecord,
    EntropyReport, RateFit, WellPrepared,
};
use crate::error::{Error, Result};
use crate::grid::{build_phase_grid, PhaseGrid, TorusGrid};
use crate::hydro::{run_macro_at, MacroConfig, MacroState, MacroTrajectory};
use crate::kinetic::{
    compute_moments, maxwellian_indicator, run_kinetic, second_moment_gap, step_plan, DistributionField,
    EnergyLedger, KineticConfig, KineticRun, Snapshot,
};
use crate::weight::WeightParams;

pub const TORUS_LENGTH: f64 = 2.0 * PI;

/// Initial profile with its amplitudes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Profile {
    /// `rho0 = (1 + a sin x) / 2pi`, `u0 = b sin x`.
    Sine { a: f64, b: f64 },
    /// `rho0 = 1 / 2pi`, `u0 = u`.
    Consensus { u: f64 },
    /// Two equal indicator beams at `+-speed` over the sine density.
    CounterStream { a: f64, speed: f64 },
}

impl Profile {
    pub fn from_config(cfg: &StudyConfig) -> Self {
        match cfg.profile {
            ProfileKind::Sine => Profile::Sine {
                a: cfg.amp_rho,
                b: cfg.amp_u,
            },
            ProfileKind::Consensus => Profile::Consensus { u: cfg.amp_u },
            ProfileKind::CounterStream => Profile::CounterStream {
                a: cfg.amp_rho,
                speed: cfg.stream_speed,
            },
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        match *self {
            Profile::Sine { a, .. } | Profile::CounterStream { a, .. } => (1.0 + a * x.sin()) / TORUS_LENGTH,
            Profile::Consensus { .. } => 1.0 / TORUS_LENGTH,
        }
    }

    pub fn velocity(&self, x: f64) -> f64 {
        match *self {
            Profile::Sine { b, .. } => b * x.sin(),
            Profile::Consensus { u } => u,
            Profile::CounterStream { .. } => 0.0,
        }
    }

    /// Largest velocity the initial data reaches, plus the beam half-width.
    fn velocity_reach(&self) -> f64 {
        match *self {
            Profile::Sine { a, b } => b.abs() + 0.5 * (1.0 + a.abs()) / TORUS_LENGTH,
            Profile::Consensus { u } => u.abs() + 0.5 / TORUS_LENGTH,
            Profile::CounterStream { a, speed } => speed.abs() + 0.25 * (1.0 + a.abs()) / TORUS_LENGTH,
        }
    }

    /// `2 (max|u0| + max rho0)`, enlarged to hold the counter-streaming beams.
    pub fn default_v_max(&self) -> f64 {
        let base = match *self {
            Profile::Sine { a, b } => 2.0 * (b.abs() + (1.0 + a.abs()) / TORUS_LENGTH),
            Profile::Consensus { u } => 2.0 * (u.abs() + 1.0 / TORUS_LENGTH),
            Profile::CounterStream { .. } => 0.0,
        };
        base.max(2.0 * self.velocity_reach())
    }

    pub fn macro_state(&self, grid: &TorusGrid, kappa_p: f64) -> Result<MacroState> {
        let rho: Vec<f64> = grid.centers.iter().map(|x| self.density(*x)).collect();
        let u: Vec<f64> = grid.centers.iter().map(|x| self.velocity(*x)).collect();
        MacroState::from_primitive(grid.clone(), rho, &u, kappa_p)
    }
}

/// Well-prepared kinetic data `M[rho0, u0]` with its hydrodynamic state.
pub fn build_initial_data(profile: &Profile, grid: &PhaseGrid, kappa_p: f64) -> Result<(DistributionField, MacroState)> {
    if (grid.x.length - TORUS_LENGTH).abs() > 1e-12 {
        return Err(Error::Config("profiles live on a torus of length 2 pi".into()));
    }
    let state = profile.macro_state(&grid.x, kappa_p)?;
    let f0 = match *profile {
        Profile::CounterStream { speed, .. } => {
            let half: Vec<f64> = state.rho.iter().map(|r| 0.5 * r).collect();
            let n = grid.n_x();
            let plus = maxwellian_indicator(&half, &vec![speed; n], grid)?;
            let minus = maxwellian_indicator(&half, &vec![-speed; n], grid)?;
            let values = plus.values.iter().zip(&minus.values).map(|(a, b)| a + b).collect();
            DistributionField::from_values(grid.clone(), values)?
        }
        _ => maxwellian_indicator(&state.rho, &state.velocity(), grid)?,
    };
    let mom = compute_moments(&f0);
    let u0 = MacroState::new(grid.x.clone(), mom.rho, mom.momentum, kappa_p)?;
    Ok((f0, u0))
}

/// Final-time L1 distances between kinetic moments and the macro reference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FinalDistance {
    pub epsilon: f64,
    pub rho_l1: f64,
    pub momentum_l1: f64,
}

/// Everything one epsilon run produces.
#[derive(Debug, Clone)]
pub struct EpsilonRun {
    pub record: ConvergenceRecord,
    pub distance: FinalDistance,
    pub ledger: EnergyLedger,
    pub entropy: Vec<EntropyReport>,
    pub final_snapshot: Snapshot,
}

#[derive(Debug, Clone)]
pub struct StudyOutcome {
    pub config: StudyConfig,
    pub well_prepared: WellPrepared,
    pub macro_run: MacroTrajectory,
    pub runs: Vec<EpsilonRun>,
    pub fit: Option<RateFit>,
}

impl StudyOutcome {
    pub fn records(&self) -> Vec<ConvergenceRecord> {
        self.runs.iter().map(|r| r.record.clone()).collect()
    }
}

/// Pair-averages `state` down by `factor` cells.
pub fn restrict(state: &MacroState, coarse: &TorusGrid, factor: usize) -> Result<MacroState> {
    if state.grid.n != coarse.n * factor {
        return Err(Error::GridMismatch(format!(
            "cannot restrict {} cells onto {} by {factor}",
            state.grid.n, coarse.n
        )));
    }
    let avg = |q: &[f64]| -> Vec<f64> {
        q.chunks(factor).map(|c| c.iter().sum::<f64>() / factor as f64).collect()
    };
    MacroState::new(coarse.clone(), avg(&state.rho), avg(&state.m), state.kappa_p)
}

fn l1(a: &[f64], b: &[f64], dx: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() * dx
}

/// Runs the macro reference once and the kinetic solver once per epsilon.
pub fn run_limit_study(cfg: &StudyConfig) -> Result<StudyOutcome> {
    cfg.validate()?;
    if cfg.profile == ProfileKind::CounterStream {
        return Err(Error::Config("the limit study needs well-prepared (sine or consensus) data".into()));
    }
    let profile = Profile::from_config(cfg);
    let v_max = cfg.v_max.unwrap_or_else(|| profile.default_v_max());
    let grid = build_phase_grid(cfg.n_x, cfg.n_v, TORUS_LENGTH, v_max)?;
    let kappa = cfg.kappa();
    let (f0, u0) = build_initial_data(&profile, &grid, kappa)?;
    let eps_min = cfg.epsilons.iter().copied().fold(f64::INFINITY, f64::min);
    let well_prepared = wellprepared_check(&f0, &u0, eps_min, cfg.c_tol)?;

    // every kinetic run shares the same step sequence
    let (steps, dt) = step_plan(cfg.t_end, cfg.cfl * grid.x.dx / grid.v.v_max);
    let time_of = |n: usize| if n == steps { cfg.t_end } else { n as f64 * dt };
    let sample_steps: Vec<usize> = (1..=steps)
        .filter(|n| n % cfg.snapshot_stride == 0 || *n == steps)
        .collect();
    let times: Vec<f64> = sample_steps.iter().map(|n| time_of(*n)).collect();

    let fine = TorusGrid::new(cfg.macro_refine * cfg.n_x, TORUS_LENGTH)?;
    let mut macro_cfg = MacroConfig::new(Some(WeightParams::singular(cfg.alpha, TORUS_LENGTH)), cfg.t_end);
    macro_cfg.cfl = cfg.macro_cfl;
    let macro_run = run_macro_at(&profile.macro_state(&fine, kappa)?, &macro_cfg, &times)?;
    if macro_run.shock_warning {
        let crossing = macro_run
            .ledger
            .iter()
            .map(|r| r.t + r.min_crossing_time)
            .fold(f64::INFINITY, f64::min);
        return Err(Error::Shock {
            crossing,
            t_end: cfg.t_end,
        });
    }
    let reference: Vec<MacroState> = macro_run
        .states
        .iter()
        .map(|(_, s)| restrict(s, &grid.x, cfg.macro_refine))
        .collect::<Result<_>>()?;

    let runs = cfg
        .epsilons
        .par_iter()
        .map(|&eps| run_one(cfg, eps, &f0, &reference, &sample_steps, dt))
        .collect::<Result<Vec<_>>>()?;
    let records: Vec<ConvergenceRecord> = runs.iter().map(|r| r.record.clone()).collect();
    let weights = WeightParams::regularized(cfg.alpha, cfg.beta, eps_min, TORUS_LENGTH);
    let fit = if cfg.epsilons.len() >= 3 {
        Some(fit_rate(&records, &weights)?)
    } else {
        None
    };
    Ok(StudyOutcome {
        config: cfg.clone(),
        well_prepared,
        macro_run,
        runs,
        fit,
    })
}

fn run_one(
    cfg: &StudyConfig,
    eps: f64,
    f0: &DistributionField,
    reference: &[MacroState],
    sample_steps: &[usize],
    dt: f64,
) -> Result<EpsilonRun> {
    let mut kcfg = KineticConfig::new(cfg.alpha, cfg.beta, eps, TORUS_LENGTH, cfg.t_end);
    kcfg.cfl = cfg.cfl;
    kcfg.limiter = cfg.limiter;
    kcfg.boundary_mass_tol = cfg.boundary_mass_tol;
    kcfg.budget_tol = cfg.budget_tol;
    let kappa = cfg.kappa();

    let mut entropy = Vec::with_capacity(reference.len());
    let mut gap_integral = 0.0;
    let mut observer = |n: usize, t: f64, f: &DistributionField| -> Result<()> {
        if n > 0 {
            gap_integral += second_moment_gap(f)? * dt;
        }
        let slot = if n == 0 {
            Some(0)
        } else {
            sample_steps.binary_search(&n).ok().map(|k| k + 1)
        };
        if let Some(k) = slot {
            let mut rep = relative_entropy_field(&macro_state_of(f, kappa)?, &reference[k])?;
            rep.time = t;
            entropy.push(rep);
        }
        Ok(())
    };
    let KineticRun { final_state, ledger, .. } = run_kinetic(f0, &kcfg, &mut observer)?;

    let sup = |pick: fn(&EntropyReport) -> f64| entropy.iter().map(pick).fold(0.0, f64::max);
    let last = reference.last().expect("reference holds the final state");
    let mom = compute_moments(&final_state);
    let dx = final_state.grid.x.dx;
    let record = ConvergenceRecord {
        epsilon: eps,
        sup_rel_entropy: sup(|r| r.rel_entropy),
        h_part_sup: sup(|r| r.h_part),
        kinetic_part_sup: sup(|r| r.kinetic_part),
        gap_time_integral: gap_integral,
        energy_residual: ledger.budget_residual().max(0.0),
        lambda_theory: lambda_theory(cfg.alpha, cfg.beta),
        notes: format!("steps={} dt={dt:.6e}", ledger.rows.len() - 1),
    };
    Ok(EpsilonRun {
        distance: FinalDistance {
            epsilon: eps,
            rho_l1: l1(&mom.rho, &last.rho, dx),
            momentum_l1: l1(&mom.momentum, &last.m, dx),
        },
        record,
        ledger,
        entropy,
        final_snapshot: Snapshot {
            time: cfg.t_end,
            field: final_state,
        },
    })
}
