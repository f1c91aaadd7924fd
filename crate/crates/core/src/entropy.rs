//! Relative-entropy functionals between hydrodynamic states.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hydro::MacroState;
use crate::kinetic::{compute_moments, kinetic_energy, DistributionField, EnergyLedger};
use crate::weight::WeightParams;

/// `H(rho_bar | rho) = kappa (rho_bar^3 - rho^3 + 3 (rho - rho_bar) rho^2) / 2`,
/// evaluated in the factored form `kappa (rho_bar - rho)^2 (rho_bar + 2 rho) / 2`.
pub fn pressure_entropy_h(rho_bar: f64, rho: f64, kappa_p: f64) -> f64 {
    let d = rho_bar - rho;
    0.5 * kappa_p * d * d * (rho_bar + 2.0 * rho)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub rel_entropy: f64,
    pub h_part: f64,
    pub kinetic_part: f64,
    /// `int H - (1/2) int rho (rho_bar - rho)^2`, with `kappa = 1` in `H`.
    pub lower_bound_margin: f64,
    pub time: f64,
}

fn check_pair(bar: &MacroState, reference: &MacroState) -> Result<()> {
    if !bar.grid.same_as(&reference.grid) {
        return Err(Error::GridMismatch("relative entropy needs both states on one grid".into()));
    }
    Ok(())
}

/// `int rho_bar |u_bar - u|^2 / 2 + H(rho_bar | rho) dx` with the pressure
/// coefficient of `reference`.
pub fn relative_entropy_field(bar: &MacroState, reference: &MacroState) -> Result<EntropyReport> {
    check_pair(bar, reference)?;
    let (ub, u) = (bar.velocity(), reference.velocity());
    let kappa = reference.kappa_p;
    let (mut h, mut kin, mut margin) = (0.0, 0.0, 0.0);
    for i in 0..bar.grid.n {
        let (rb, r) = (bar.rho[i], reference.rho[i]);
        let du = ub[i] - u[i];
        h += pressure_entropy_h(rb, r, kappa);
        kin += 0.5 * rb * du * du;
        margin += pressure_entropy_h(rb, r, 1.0) - 0.5 * r * (rb - r) * (rb - r);
    }
    let dx = bar.grid.dx;
    let (h, kin) = (h * dx, kin * dx);
    Ok(EntropyReport {
        rel_entropy: h + kin,
        h_part: h,
        kinetic_part: kin,
        lower_bound_margin: margin * dx,
        time: 0.0,
    })
}

/// Per-cell `rho_bar (u_bar - u)^2 + 2 H(rho_bar | rho)`.
pub fn relative_flux(bar: &MacroState, reference: &MacroState) -> Result<Vec<f64>> {
    check_pair(bar, reference)?;
    let (ub, u) = (bar.velocity(), reference.velocity());
    Ok((0..bar.grid.n)
        .map(|i| {
            let du = ub[i] - u[i];
            bar.rho[i] * du * du + 2.0 * pressure_entropy_h(bar.rho[i], reference.rho[i], reference.kappa_p)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LowerBound {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// `H(rho_bar | rho) >= rho (rho_bar - rho)^2 / 2` at a single pair (`kappa = 1`).
pub fn lower_bound_pointwise(rho_bar: f64, rho: f64) -> LowerBound {
    let lhs = pressure_entropy_h(rho_bar, rho, 1.0);
    let rhs = 0.5 * rho * (rho_bar - rho) * (rho_bar - rho);
    LowerBound {
        lhs,
        rhs,
        ok: lhs >= rhs - 1e-12,
    }
}

pub fn lower_bound_gap(bar: &MacroState, reference: &MacroState) -> Result<LowerBound> {
    check_pair(bar, reference)?;
    let (mut lhs, mut rhs) = (0.0, 0.0);
    for (rb, r) in bar.rho.iter().zip(&reference.rho) {
        let p = lower_bound_pointwise(*rb, *r);
        lhs += p.lhs;
        rhs += p.rhs;
    }
    let dx = bar.grid.dx;
    let (lhs, rhs) = (lhs * dx, rhs * dx);
    Ok(LowerBound {
        lhs,
        rhs,
        ok: lhs >= rhs - 1e-12,
    })
}

/// Hydrodynamic state carried by the moments of `f`.
pub fn macro_state_of(f: &DistributionField, kappa_p: f64) -> Result<MacroState> {
    let mom = compute_moments(f);
    MacroState::new(f.grid.x.clone(), mom.rho, mom.momentum, kappa_p)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WellPrepared {
    pub h1: f64,
    pub h2: f64,
    pub ok: bool,
}

/// `h1 = int |v|^2 f0 / 2 - int rho (kappa rho^2 / 2 + u^2 / 2)` over the moments
/// of `f0`; `h2 = int E(U0^eps | U0)`; both compared with `c_tol sqrt(eps)`.
pub fn wellprepared_check(f0: &DistributionField, u0: &MacroState, epsilon: f64, c_tol: f64) -> Result<WellPrepared> {
    let bar = macro_state_of(f0, u0.kappa_p)?;
    let h2 = relative_entropy_field(&bar, u0)?.rel_entropy;
    let h1 = kinetic_energy(f0) - bar.free_energy();
    let bound = c_tol * epsilon.sqrt();
    Ok(WellPrepared {
        h1,
        h2,
        ok: h1 <= bound && h2 <= bound,
    })
}

/// Worst relative excess of the kinetic energy budget and whether it stays
/// within `tol`.
pub fn energy_budget(ledger: &EnergyLedger, tol: f64) -> (f64, bool) {
    let r = ledger.budget_residual();
    (r, r <= tol)
}

/// `min{1/2, beta/2, alpha beta/4, alpha beta/(2(alpha + 2))}`.
pub fn lambda_theory(alpha: f64, beta: f64) -> f64 {
    [0.5, beta / 2.0, alpha * beta / 4.0, alpha * beta / (2.0 * (alpha + 2.0))]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::Config("slope fit needs at least two matching points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Config("slope fit needs positive finite values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Config("slope fit needs distinct abscissae".into()));
    }
    Ok(sxy / sxx)
}

/// Per-epsilon summary of a limit-study run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRecord {
    pub epsilon: f64,
    pub sup_rel_entropy: f64,
    pub h_part_sup: f64,
    pub kinetic_part_sup: f64,
    pub gap_time_integral: f64,
    pub energy_residual: f64,
    pub lambda_theory: f64,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub epsilons: Vec<f64>,
    pub values: Vec<f64>,
    pub slope: f64,
    pub lambda_theory: f64,
    /// `slope >= lambda_theory - 0.1`.
    pub meets_theory: bool,
}

pub fn fit_rate(records: &[ConvergenceRecord], w: &WeightParams) -> Result<RateFit> {
    let mut eps: Vec<f64> = records.iter().map(|r| r.epsilon).collect();
    eps.sort_by(f64::total_cmp);
    eps.dedup();
    if eps.len() < 3 {
        return Err(Error::Config(format!(
            "rate fit needs at least 3 distinct epsilon values, got {}",
            eps.len()
        )));
    }
    let epsilons: Vec<f64> = records.iter().map(|r| r.epsilon).collect();
    let values: Vec<f64> = records.iter().map(|r| r.sup_rel_entropy).collect();
    let slope = log_log_slope(&epsilons, &values)?;
    let lambda = lambda_theory(w.alpha, w.beta);
    Ok(RateFit {
        epsilons,
        values,
        slope,
        lambda_theory: lambda,
        meets_theory: slope >= lambda - 0.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_phase_grid, TorusGrid};
    use crate::kinetic::{maxwellian_indicator, C1};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    const L: f64 = 2.0 * PI;

    #[test]
    fn h_examples() {
        assert_eq!(pressure_entropy_h(1.3, 1.3, 0.7), 0.0);
        assert!((pressure_entropy_h(2.0, 1.0, 1.0) - 2.0).abs() < 1e-15);
        assert!((pressure_entropy_h(0.0, 1.0, 1.0) - 1.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let (a, b, k) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0), rng.gen_range(0.01..2.0));
            let expanded = k * (a * a * a - b * b * b + 3.0 * (b - a) * b * b) / 2.0;
            let h = pressure_entropy_h(a, b, k);
            assert!(h >= 0.0);
            assert!((h - expanded).abs() <= 1e-12 * (1.0 + a * a * a + b * b * b));
        }
    }

    fn state(rho: Vec<f64>, u: Vec<f64>, kappa: f64) -> MacroState {
        let g = TorusGrid::new(rho.len(), L).unwrap();
        MacroState::from_primitive(g, rho, &u, kappa).unwrap()
    }

    #[test]
    fn report_examples() {
        let n = 32;
        let a = state(vec![1.0 / L; n], vec![1.0; n], 1.0);
        let b = state(vec![1.0 / L; n], vec![0.0; n], 1.0);
        let r = relative_entropy_field(&a, &b).unwrap();
        assert!((r.kinetic_part - 0.5).abs() < 1e-14);
        assert_eq!(r.h_part, 0.0);
        assert_eq!(r.rel_entropy, r.h_part + r.kinetic_part);
        assert_eq!(relative_entropy_field(&a, &a).unwrap().rel_entropy, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let rand_state = |rng: &mut ChaCha8Rng| {
            state(
                (0..n).map(|_| rng.gen_range(0.1..2.0)).collect(),
                (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
                1.0,
            )
        };
        let (p, q) = (rand_state(&mut rng), rand_state(&mut rng));
        let pq = relative_entropy_field(&p, &q).unwrap().rel_entropy;
        let qp = relative_entropy_field(&q, &p).unwrap().rel_entropy;
        assert!((pq - qp).abs() > 1e-6);
        let other = state(vec![1.0; 16], vec![0.0; 16], 1.0);
        assert!(matches!(relative_entropy_field(&p, &other), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn flux_examples() {
        let a = state(vec![1.0; 8], vec![1.0; 8], 1.0);
        let b = state(vec![1.0; 8], vec![0.0; 8], 1.0);
        assert!(relative_flux(&a, &b).unwrap().iter().all(|v| (*v - 1.0).abs() < 1e-15));
        assert!(relative_flux(&a, &a).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn lower_bound_examples() {
        let p = lower_bound_pointwise(2.0, 1.0);
        assert!((p.lhs - 2.0).abs() < 1e-15 && (p.rhs - 0.5).abs() < 1e-15 && p.ok);
        let p = lower_bound_pointwise(0.4, 0.4);
        assert_eq!((p.lhs, p.rhs), (0.0, 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..1000 {
            assert!(lower_bound_pointwise(rng.gen_range(0.0..5.0), rng.gen_range(0.0..5.0)).ok);
        }
        let a = state(vec![2.0; 8], vec![0.0; 8], 1.0);
        let b = state(vec![1.0; 8], vec![0.0; 8], 1.0);
        let g = lower_bound_gap(&a, &b).unwrap();
        assert!(g.ok && (g.lhs - 2.0 * L).abs() < 1e-12);
    }

    fn sine_data(kappa: f64) -> (DistributionField, MacroState) {
        let g = build_phase_grid(64, 128, L, 0.6).unwrap();
        let rho: Vec<f64> = g.x.centers.iter().map(|x| (1.0 + 0.2 * x.sin()) / L).collect();
        let u: Vec<f64> = g.x.centers.iter().map(|x| 0.1 * x.sin()).collect();
        let f = maxwellian_indicator(&rho, &u, &g).unwrap();
        (f, MacroState::from_primitive(g.x.clone(), rho, &u, kappa).unwrap())
    }

    #[test]
    fn well_prepared_indicator_data() {
        let (f, u0) = sine_data(C1);
        let w = wellprepared_check(&f, &u0, 0.01, 1.0).unwrap();
        assert!(w.h2 <= 1e-13, "{}", w.h2);
        assert!(w.h1 <= 0.0 && w.h1 > -1e-12, "{}", w.h1);
        assert!(w.ok);

        let (f, u0) = sine_data(1.0);
        let w = wellprepared_check(&f, &u0, 0.01, 1.0).unwrap();
        // rho^3 / 24 against rho^3 / 2
        let want: f64 = u0.rho.iter().map(|r| r * r * r * (1.0 / 24.0 - 0.5)).sum::<f64>() * u0.grid.dx;
        assert!(w.h1 < 0.0 && (w.h1 - want).abs() < 1e-10);
        assert!(w.h2 <= 1e-13);
    }

    #[test]
    fn well_prepared_detects_velocity_offset() {
        let (f, u0) = sine_data(C1);
        let du = 0.05;
        let shifted = MacroState::from_primitive(
            u0.grid.clone(),
            u0.rho.clone(),
            &u0.velocity().iter().map(|v| v + du).collect::<Vec<_>>(),
            C1,
        )
        .unwrap();
        let w = wellprepared_check(&f, &shifted, 0.01, 1.0).unwrap();
        assert!((w.h2 - 0.5 * du * du).abs() < 1e-10, "{}", w.h2);
    }

    #[test]
    fn lambda_examples() {
        assert!((lambda_theory(1.0, 2.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((lambda_theory(0.5, 4.0) - 0.4).abs() < 1e-15);
    }

    fn records(eps: &[f64], f: impl Fn(f64) -> f64) -> Vec<ConvergenceRecord> {
        eps.iter()
            .map(|e| ConvergenceRecord {
                epsilon: *e,
                sup_rel_entropy: f(*e),
                h_part_sup: 0.0,
                kinetic_part_sup: 0.0,
                gap_time_integral: 0.0,
                energy_residual: 0.0,
                lambda_theory: 0.0,
                notes: String::new(),
            })
            .collect()
    }

    #[test]
    fn fit_recovers_planted_slope() {
        let w = WeightParams::regularized(1.0, 2.0, 0.1, L);
        let fit = fit_rate(&records(&[0.08, 0.04, 0.02, 0.01], |e| 3.7 * e.powf(1.0 / 3.0)), &w).unwrap();
        assert!((fit.slope - 1.0 / 3.0).abs() < 1e-10);
        assert!(fit.meets_theory);
        assert!(fit_rate(&records(&[0.1, 0.05], |e| e), &w).is_err());
        assert!(fit_rate(&records(&[0.1, 0.1, 0.05], |e| e), &w).is_err());
    }
}
