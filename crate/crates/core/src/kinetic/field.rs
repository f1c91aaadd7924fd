//! Distribution-function storage, velocity moments and local equilibria.
//!
//! Cell values are read as cell averages of a piecewise-constant `f`, so the
//! velocity moments below are exact integrals of that reconstruction. For
//! the zeroth and first moment this is the plain midpoint sum; the second
//! moment picks up the in-cell variance `dv^2 / 12`.

use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::grid::{PhaseGrid, VelocityGrid};

/// Density below which the bulk velocity is set to zero.
pub const RHO_FLOOR: f64 = 1e-12;

/// Relative amount by which the corrected Maxwellian undershoots the
/// continuum equilibrium energy, so that rounding never puts it above.
const ENERGY_UNDERSHOOT: f64 = 1e-13;

/// Surface measure of the unit sphere in `R^d` (`|S^0| = 2`).
pub fn unit_sphere_measure(d: u32) -> f64 {
    let h = 0.5 * d as f64;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

/// Radius constant of the indicator equilibrium, `d / |S^{d-1}|`.
pub fn indicator_radius_constant(d: u32) -> f64 {
    d as f64 / unit_sphere_measure(d)
}

/// Pressure constant of the indicator equilibrium:
/// `int (v-u)^2 M dv = C_d rho^gamma` per direction.
pub fn closure_constant(d: u32) -> f64 {
    let s = unit_sphere_measure(d);
    let df = d as f64;
    s / (df * (df + 2.0)) * (df / s).powf((df + 2.0) / df)
}

/// `C_1 = 1/12`.
pub const C1: f64 = 1.0 / 12.0;

/// Kinetic density on a phase grid, stored x-major: `values[i * n_v + j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionField {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
}

impl DistributionField {
    pub fn zeros(grid: PhaseGrid) -> Self {
        let n = grid.n_x() * grid.n_v();
        Self {
            grid,
            values: vec![0.0; n],
        }
    }

    pub fn from_fn(grid: PhaseGrid, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = Self::zeros(grid);
        let n_v = out.grid.n_v();
        for i in 0..out.grid.n_x() {
            let x = out.grid.x.centers[i];
            for j in 0..n_v {
                out.values[i * n_v + j] = f(x, out.grid.v.centers[j]);
            }
        }
        out
    }

    pub fn from_values(grid: PhaseGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_x() * grid.n_v() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.n_x() * grid.n_v(),
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    /// Velocity column at x-cell `i`.
    #[inline]
    pub fn column(&self, i: usize) -> &[f64] {
        let n_v = self.grid.n_v();
        &self.values[i * n_v..(i + 1) * n_v]
    }

    #[inline]
    pub fn column_mut(&mut self, i: usize) -> &mut [f64] {
        let n_v = self.grid.n_v();
        &mut self.values[i * n_v..(i + 1) * n_v]
    }

    pub fn columns(&self) -> std::slice::Chunks<'_, f64> {
        self.values.chunks(self.grid.n_v())
    }

    /// Total mass `sum f dx dv`.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_volume()
    }

    /// Total momentum `sum v f dx dv`.
    pub fn momentum(&self) -> f64 {
        self.columns()
            .map(|c| column_moments(c, &self.grid.v).1)
            .sum::<f64>()
            * self.grid.x.dx
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Mass held in the `cells` outermost velocity cells on each side.
    pub fn boundary_mass(&self, cells: usize) -> f64 {
        let n_v = self.grid.n_v();
        let k = cells.min(n_v / 2);
        let s: f64 = self
            .columns()
            .map(|c| c[..k].iter().sum::<f64>() + c[n_v - k..].iter().sum::<f64>())
            .sum();
        s * self.grid.cell_volume()
    }
}

/// Velocity moments per x-cell.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub rho: Vec<f64>,
    pub momentum: Vec<f64>,
    pub second: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl MomentSet {
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

/// Bulk velocity with the vacuum convention.
#[inline]
pub fn bulk_velocity(rho: f64, m: f64) -> f64 {
    if rho >= RHO_FLOOR {
        m / rho
    } else {
        0.0
    }
}

/// `(rho, m, S)` of one velocity column.
pub fn column_moments(col: &[f64], vg: &VelocityGrid) -> (f64, f64, f64) {
    let cell_var = vg.dv * vg.dv / 12.0;
    let (mut r, mut m, mut s) = (0.0, 0.0, 0.0);
    for (f, v) in col.iter().zip(&vg.centers) {
        r += f;
        s += f * (v * v + cell_var);
    }
    // mirrored pairs, so even columns carry exactly zero momentum
    let n = col.len();
    for j in 0..n / 2 {
        m += vg.centers[j] * (col[j] - col[n - 1 - j]);
    }
    (r * vg.dv, m * vg.dv, s * vg.dv)
}

pub fn compute_moments(f: &DistributionField) -> MomentSet {
    let vg = &f.grid.v;
    let per: Vec<(f64, f64, f64)> = f
        .values
        .par_chunks(vg.n)
        .map(|c| column_moments(c, vg))
        .collect();
    let rho: Vec<f64> = per.iter().map(|p| p.0).collect();
    let momentum: Vec<f64> = per.iter().map(|p| p.1).collect();
    let second: Vec<f64> = per.iter().map(|p| p.2).collect();
    let velocity = rho
        .iter()
        .zip(&momentum)
        .map(|(&r, &m)| bulk_velocity(r, m))
        .collect();
    MomentSet {
        rho,
        momentum,
        second,
        velocity,
    }
}

/// How the discrete indicator equilibrium is adjusted after the exact-overlap
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MomentCorrection {
    /// Exact overlap fractions only: mass exact, momentum and second moment
    /// accurate to `O(dv^2)`.
    None,
    /// Rescale the two partially covered cells so mass and momentum are exact.
    BoundaryCells,
    /// Multiply the overlap profile by a quadratic in `v` so that mass,
    /// momentum and second moment all match the continuum equilibrium.
    #[default]
    Full,
}

/// Writes the indicator equilibrium `1_{|v-u| <= rho/2}` into `out`.
pub fn indicator_column(
    rho: f64,
    u: f64,
    vg: &VelocityGrid,
    correction: MomentCorrection,
    out: &mut [f64],
) -> Result<()> {
    out.iter_mut().for_each(|v| *v = 0.0);
    if rho <= 0.0 {
        return Ok(());
    }
    let half = 0.5 * rho;
    let (lo, hi) = (u - half, u + half);
    if lo < -vg.v_max || hi > vg.v_max || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Truncation(format!(
            "equilibrium support [{lo:.6}, {hi:.6}] leaves [-{v}, {v}]",
            v = vg.v_max
        )));
    }
    let dv = vg.dv;
    let j_lo = (((lo + vg.v_max) / dv).floor() as usize).min(vg.n - 1);
    let j_hi = (((hi + vg.v_max) / dv).ceil() as usize).clamp(j_lo + 1, vg.n) - 1;
    for j in j_lo..=j_hi {
        let a = vg.lower_edge(j);
        let b = a + dv;
        out[j] = ((b.min(hi) - a.max(lo)) / dv).max(0.0);
    }
    if correction == MomentCorrection::None {
        return Ok(());
    }
    if j_lo == j_hi {
        deposit_linear(rho, u, vg, out);
        return Ok(());
    }
    match correction {
        MomentCorrection::None => unreachable!(),
        MomentCorrection::BoundaryCells => correct_boundary_cells(rho, u, vg, j_lo, j_hi, out),
        MomentCorrection::Full => {
            let central = C1 * rho.powi(3) - ENERGY_UNDERSHOOT * (rho * u * u + C1 * rho.powi(3));
            if !tilt(rho, u, Some(central), vg, j_lo, j_hi, out)
                && !tilt(rho, u, None, vg, j_lo, j_hi, out)
            {
                correct_boundary_cells(rho, u, vg, j_lo, j_hi, out);
            }
        }
    }
    Ok(())
}

/// Puts mass `rho` at velocity `u` onto the two nearest centers.
fn deposit_linear(rho: f64, u: f64, vg: &VelocityGrid, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    let s = (u - vg.centers[0]) / vg.dv;
    let height = rho / vg.dv;
    if s <= 0.0 {
        out[0] = height;
    } else if s >= (vg.n - 1) as f64 {
        out[vg.n - 1] = height;
    } else {
        let k = s.floor() as usize;
        let w = s - k as f64;
        out[k] = height * (1.0 - w);
        out[k + 1] = height * w;
    }
}

fn correct_boundary_cells(rho: f64, u: f64, vg: &VelocityGrid, j_lo: usize, j_hi: usize, out: &mut [f64]) {
    let (vl, vr) = (vg.centers[j_lo], vg.centers[j_hi]);
    let mut mass = 0.0;
    let mut mom = 0.0;
    for j in j_lo + 1..j_hi {
        mass += out[j];
        mom += out[j] * vg.centers[j];
    }
    let need_mass = rho / vg.dv - mass;
    let need_mom = rho * u / vg.dv - mom;
    // a + b = need_mass, a vl + b vr = need_mom
    let b = (need_mom - vl * need_mass) / (vr - vl);
    let a = need_mass - b;
    if a >= 0.0 && b >= 0.0 {
        out[j_lo] = a;
        out[j_hi] = b;
    }
}

/// Multiplies the overlap profile by `1 + c0 + c1 y + c2 y^2`, `y = (v-u)/s`,
/// to hit mass, zero central first moment and (optionally) the central second
/// moment. Returns false, leaving `out` untouched, if the result would be
/// negative somewhere or the system is singular.
fn tilt(
    rho: f64,
    u: f64,
    central: Option<f64>,
    vg: &VelocityGrid,
    j_lo: usize,
    j_hi: usize,
    out: &mut [f64],
) -> bool {
    let dv = vg.dv;
    let s = (0.5 * rho).max(dv);
    let cell = (dv / s).powi(2) / 12.0;
    let dim = if central.is_some() { 3 } else { 2 };
    let mut a = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    rhs[0] = rho / dv;
    if let Some(c) = central {
        rhs[2] = c / (dv * s * s);
    }
    for j in j_lo..=j_hi {
        let o = out[j];
        let y = (vg.centers[j] - u) / s;
        let basis = [1.0, y, y * y];
        let q = [1.0, y, y * y + cell];
        for k in 0..dim {
            rhs[k] -= o * q[k];
            for l in 0..dim {
                a[k][l] += o * q[k] * basis[l];
            }
        }
    }
    let Some(c) = solve_small(a, rhs, dim) else {
        return false;
    };
    let factor = |j: usize| {
        let y = (vg.centers[j] - u) / s;
        1.0 + c[0] + c[1] * y + c[2] * y * y
    };
    if (j_lo..=j_hi).any(|j| factor(j) < 0.0) {
        return false;
    }
    for j in j_lo..=j_hi {
        out[j] *= factor(j);
    }
    true
}

/// Gaussian elimination with partial pivoting on the leading `dim x dim` block.
fn solve_small(mut a: [[f64; 3]; 3], mut b: [f64; 3], dim: usize) -> Option<[f64; 3]> {
    for col in 0..dim {
        let piv = (col..dim).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..dim {
            let f = a[r][col] / a[col][col];
            for k in col..dim {
                a[r][k] -= f * a[col][k];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for r in (0..dim).rev() {
        let mut acc = b[r];
        for k in r + 1..dim {
            acc -= a[r][k] * x[k];
        }
        x[r] = acc / a[r][r];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Indicator equilibrium for per-cell `(rho, u)`, with the default correction.
pub fn maxwellian_indicator(rho: &[f64], u: &[f64], grid: &PhaseGrid) -> Result<DistributionField> {
    maxwellian_indicator_with(rho, u, grid, MomentCorrection::default())
}

pub fn maxwellian_indicator_with(
    rho: &[f64],
    u: &[f64],
    grid: &PhaseGrid,
    correction: MomentCorrection,
) -> Result<DistributionField> {
    if rho.len() != grid.n_x() || u.len() != grid.n_x() {
        return Err(Error::GridMismatch(format!(
            "moment arrays of length {} / {} on a grid with {} cells",
            rho.len(),
            u.len(),
            grid.n_x()
        )));
    }
    let mut out = DistributionField::zeros(grid.clone());
    let vg = &grid.v;
    out.values
        .par_chunks_mut(vg.n)
        .enumerate()
        .try_for_each(|(i, col)| indicator_column(rho[i], u[i], vg, correction, col))?;
    Ok(out)
}

/// `M[f]`: the indicator equilibrium built from the moments of `f`.
pub fn maxwellian_of(f: &DistributionField) -> Result<DistributionField> {
    let mom = compute_moments(f);
    maxwellian_indicator(&mom.rho, &mom.velocity, &f.grid)
}

/// Closure family for the pressure law `rho^gamma` in one dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClosureKind {
    /// Uniform distribution on `|v-u| <= rho/2`, `gamma = 3`.
    Indicator,
    /// `c (2 gamma/(gamma-1) rho^(gamma-1) - |v-u|^2)_+^(n/2)`, `gamma` in `(1, 3)`.
    PowerLaw { gamma: f64 },
    /// Gaussian with unit temperature, `gamma = 1`.
    Gaussian,
}

impl ClosureKind {
    pub fn gamma(&self) -> f64 {
        match self {
            ClosureKind::Indicator => 3.0,
            ClosureKind::PowerLaw { gamma } => *gamma,
            ClosureKind::Gaussian => 1.0,
        }
    }
}

/// Exponent `n = 2/(gamma-1) - d` of the power-law equilibrium.
pub fn power_law_exponent(gamma_exp: f64, d: u32) -> f64 {
    2.0 / (gamma_exp - 1.0) - d as f64
}

/// Normalization `c_{gamma,d}` of the power-law equilibrium.
pub fn power_law_constant(gamma_exp: f64, d: u32) -> f64 {
    let n = power_law_exponent(gamma_exp, d);
    let g1 = gamma_exp / (gamma_exp - 1.0);
    (2.0 * g1).powf(-1.0 / (gamma_exp - 1.0)) * gamma(g1)
        / (std::f64::consts::PI.powf(0.5 * d as f64) * gamma(0.5 * n + 1.0))
}

/// Samples a local equilibrium of the given kind on the velocity cells.
pub fn equilibrium_family(kind: ClosureKind, rho: f64, u: f64, vg: &VelocityGrid) -> Result<Vec<f64>> {
    if rho < 0.0 {
        return Err(Error::Config(format!("density must be nonnegative, got {rho}")));
    }
    let mut out = vec![0.0; vg.n];
    match kind {
        ClosureKind::Indicator => indicator_column(rho, u, vg, MomentCorrection::default(), &mut out)?,
        ClosureKind::Gaussian => {
            let norm = rho / (2.0 * std::f64::consts::PI).sqrt();
            for (o, v) in out.iter_mut().zip(&vg.centers) {
                *o = norm * (-0.5 * (v - u).powi(2)).exp();
            }
        }
        ClosureKind::PowerLaw { gamma: g } => {
            if !(g > 1.0 && g < 3.0) {
                return Err(Error::Config(format!(
                    "power-law closure needs gamma in (1, 3), got {g}"
                )));
            }
            let n = power_law_exponent(g, 1);
            let c = power_law_constant(g, 1);
            let cap = 2.0 * g / (g - 1.0) * rho.powf(g - 1.0);
            for (o, v) in out.iter_mut().zip(&vg.centers) {
                let base = cap - (v - u).powi(2);
                if base > 0.0 {
                    *o = c * base.powf(0.5 * n);
                }
            }
        }
    }
    Ok(out)
}

/// Kinetic energy `sum (v^2/2) f dx dv`.
pub fn kinetic_energy(f: &DistributionField) -> f64 {
    let vg = &f.grid.v;
    let s: f64 = f.columns().map(|c| column_moments(c, vg).2).sum();
    0.5 * s * f.grid.x.dx
}

/// Compares the energy of `M[f]` with that of `f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinimizationCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

/// Energy of the local equilibrium versus energy of `f`.
///
/// The equilibrium minimizes the energy among densities with values in
/// `[0, 1]` and the same mass and momentum; fields exceeding 1 can sit below it.
pub fn minimization_check(f: &DistributionField) -> Result<MinimizationCheck> {
    let lhs = kinetic_energy(&maxwellian_of(f)?);
    let rhs = kinetic_energy(f);
    Ok(MinimizationCheck {
        lhs,
        rhs,
        ok: lhs <= rhs + 1e-8 * rhs.abs(),
    })
}

/// `sum_x |sum_v v^2 (M[f] - f) dv| dx` at one time slice.
pub fn second_moment_gap(f: &DistributionField) -> Result<f64> {
    let vg = &f.grid.v;
    let mut scratch = vec![0.0; vg.n];
    let mut total = 0.0;
    for col in f.columns() {
        let (rho, m, s) = column_moments(col, vg);
        indicator_column(rho, bulk_velocity(rho, m), vg, MomentCorrection::default(), &mut scratch)?;
        let s_eq = column_moments(&scratch, vg).2;
        total += (s_eq - s).abs();
    }
    Ok(total * f.grid.x.dx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_phase_grid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn vgrid(n: usize, v_max: f64) -> VelocityGrid {
        VelocityGrid::new(n, v_max).unwrap()
    }

    #[test]
    fn closure_constants_in_one_dimension() {
        assert!((unit_sphere_measure(1) - 2.0).abs() < 1e-14);
        assert!((indicator_radius_constant(1) - 0.5).abs() < 1e-14);
        // (2/3) (1/2)^3
        assert!((closure_constant(1) - 1.0 / 12.0).abs() < 1e-14);
        assert!((unit_sphere_measure(2) - 2.0 * PI).abs() < 1e-13);
        assert!((unit_sphere_measure(3) - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn moments_of_exact_cell_average_indicator() {
        // dv = 1/16, so [1/2, 3/2] is aligned with cell edges
        let g = build_phase_grid(4, 64, 2.0 * PI, 2.0).unwrap();
        let rho = vec![1.0; 4];
        let u = vec![1.0; 4];
        let f = maxwellian_indicator_with(&rho, &u, &g, MomentCorrection::None).unwrap();
        let m = compute_moments(&f);
        for i in 0..4 {
            assert!((m.rho[i] - 1.0).abs() < 1e-12);
            assert!((m.momentum[i] - 1.0).abs() < 1e-12);
            assert!((m.second[i] - (1.0 + 1.0 / 12.0)).abs() < 1e-12);
            assert!((m.velocity[i] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn vacuum_and_even_fields() {
        let g = build_phase_grid(4, 16, 2.0 * PI, 2.0).unwrap();
        let m = compute_moments(&DistributionField::zeros(g.clone()));
        assert!(m.rho.iter().chain(&m.momentum).chain(&m.second).chain(&m.velocity).all(|v| *v == 0.0));
        let f = DistributionField::from_fn(g, |x, v| (1.0 + x.sin().abs()) * (-v * v).exp());
        let m = compute_moments(&f);
        assert!(m.momentum.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn indicator_at_rest() {
        let vg = vgrid(64, 2.0);
        let mut col = vec![0.0; 64];
        indicator_column(1.0, 0.0, &vg, MomentCorrection::Full, &mut col).unwrap();
        let (r, m, s) = column_moments(&col, &vg);
        assert!((r - 1.0).abs() < 1e-14);
        assert!(m.abs() < 1e-14);
        assert!((s - 1.0 / 12.0).abs() < 1e-13);
        assert!(col.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn zero_density_gives_zero_column() {
        let vg = vgrid(32, 2.0);
        let mut col = vec![1.0; 32];
        indicator_column(0.0, 0.7, &vg, MomentCorrection::Full, &mut col).unwrap();
        assert!(col.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn support_outside_grid_is_truncation() {
        let vg = vgrid(32, 1.0);
        let mut col = vec![0.0; 32];
        let err = indicator_column(1.0, 0.8, &vg, MomentCorrection::Full, &mut col).unwrap_err();
        assert!(matches!(err, Error::Truncation(_)));
    }

    #[test]
    fn corrections_hit_their_moments() {
        let vg = vgrid(128, 3.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut col = vec![0.0; 128];
        for _ in 0..200 {
            let rho = rng.gen_range(0.1..2.0);
            let u = rng.gen_range(-1.0..1.0);
            indicator_column(rho, u, &vg, MomentCorrection::None, &mut col).unwrap();
            let (r, _, _) = column_moments(&col, &vg);
            assert!((r - rho).abs() < 1e-13);

            indicator_column(rho, u, &vg, MomentCorrection::BoundaryCells, &mut col).unwrap();
            let (r, m, _) = column_moments(&col, &vg);
            assert!((r - rho).abs() < 1e-13);
            assert!((m - rho * u).abs() < 1e-13);

            indicator_column(rho, u, &vg, MomentCorrection::Full, &mut col).unwrap();
            let (r, m, s) = column_moments(&col, &vg);
            assert!((r - rho).abs() < 1e-13);
            assert!((m - rho * u).abs() < 1e-13);
            let target = rho * u * u + C1 * rho.powi(3);
            assert!(s <= target);
            assert!(target - s < 1e-12 * target);
            assert!(col.iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn narrow_support_falls_back_to_linear_deposit() {
        let vg = vgrid(16, 2.0);
        let mut col = vec![0.0; 16];
        indicator_column(0.05, 0.3, &vg, MomentCorrection::Full, &mut col).unwrap();
        let (r, m, _) = column_moments(&col, &vg);
        assert!((r - 0.05).abs() < 1e-15);
        assert!((m - 0.015).abs() < 1e-15);
    }

    #[test]
    fn gaussian_closure_normalized() {
        let vg = vgrid(240, 8.0);
        let col = equilibrium_family(ClosureKind::Gaussian, 1.0, 0.0, &vg).unwrap();
        let mass: f64 = col.iter().sum::<f64>() * vg.dv;
        assert!((mass - 1.0).abs() < 1e-8);
        let col = equilibrium_family(ClosureKind::Gaussian, 0.7, 0.4, &vg).unwrap();
        let (r, m, _) = column_moments(&col, &vg);
        assert!((r - 0.7).abs() < 1e-8);
        assert!((m - 0.28).abs() < 1e-8);
    }

    /// Composite Simpson on a fine grid, independent of the cell sampling.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for k in 1..n {
            s += f(a + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn power_law_mass_converges() {
        let (rho, u, g) = (0.8, 0.1, 2.0);
        let c = power_law_constant(g, 1);
        let cap: f64 = 2.0 * g / (g - 1.0) * rho;
        let half = cap.sqrt();
        let oracle = simpson(
            |v| c * (cap - (v - u).powi(2)).max(0.0).powf(0.5),
            u - half,
            u + half,
            200_000,
        );
        assert!((oracle - rho).abs() < 1e-6);
        let mut errs = Vec::new();
        for n in [64, 128, 256, 512, 1024] {
            let vg = vgrid(n, 3.0);
            let col = equilibrium_family(ClosureKind::PowerLaw { gamma: g }, rho, u, &vg).unwrap();
            let mass: f64 = col.iter().sum::<f64>() * vg.dv;
            let m: f64 = col.iter().zip(&vg.centers).map(|(f, v)| f * v).sum::<f64>() * vg.dv;
            assert!((m - rho * u).abs() < 0.05 * rho * u.abs() + 1e-3);
            errs.push((mass - oracle).abs());
        }
        assert!(errs.last().unwrap() < &1e-3);
        assert!(errs[4] < errs[0]);
        assert!(equilibrium_family(ClosureKind::PowerLaw { gamma: 3.5 }, 1.0, 0.0, &vgrid(8, 2.0)).is_err());
    }

    #[test]
    fn all_closures_centered_at_bulk_velocity() {
        let vg = vgrid(400, 8.0);
        for kind in [ClosureKind::Indicator, ClosureKind::Gaussian, ClosureKind::PowerLaw { gamma: 1.5 }] {
            let col = equilibrium_family(kind, 0.9, -0.3, &vg).unwrap();
            let (r, m, _) = column_moments(&col, &vg);
            assert!((m - r * -0.3).abs() < 1e-6, "{kind:?}");
        }
    }

    #[test]
    fn kinetic_energy_of_moving_indicator() {
        let g = build_phase_grid(16, 128, 2.0 * PI, 3.0).unwrap();
        let f = maxwellian_indicator(&[1.0; 16], &[1.0; 16], &g).unwrap();
        assert!((kinetic_energy(&f) - 13.0 * PI / 12.0).abs() < 1e-11);
        assert_eq!(kinetic_energy(&DistributionField::zeros(g.clone())), 0.0);
        let mut twice = f.clone();
        twice.values.iter_mut().for_each(|v| *v *= 2.0);
        assert!((kinetic_energy(&twice) - 2.0 * kinetic_energy(&f)).abs() < 1e-13);
    }

    #[test]
    fn minimization_equality_and_strict_cases() {
        let g = build_phase_grid(8, 128, 2.0 * PI, 3.0).unwrap();
        let rho: Vec<f64> = g.x.centers.iter().map(|x| 1.0 + 0.3 * x.sin()).collect();
        let u: Vec<f64> = g.x.centers.iter().map(|x| 0.2 * x.cos()).collect();
        let m = maxwellian_indicator(&rho, &u, &g).unwrap();
        let c = minimization_check(&m).unwrap();
        assert!(c.ok);
        assert!((c.lhs - c.rhs).abs() < 1e-12 * c.rhs);

        // two unit-height bumps with total mass 1 and zero momentum
        let bumps = DistributionField::from_fn(g.clone(), |_, v| {
            if (v - 1.0).abs() <= 0.25 || (v + 1.0).abs() <= 0.25 {
                1.0
            } else {
                0.0
            }
        });
        let c = minimization_check(&bumps).unwrap();
        assert!(c.ok && c.lhs < c.rhs - 0.1);
    }

    #[test]
    fn gap_examples() {
        let g = build_phase_grid(8, 256, 2.0 * PI, 8.0).unwrap();
        let m = maxwellian_indicator(&[1.0; 8], &[0.0; 8], &g).unwrap();
        assert!(second_moment_gap(&m).unwrap() < 1e-12);
        let gauss = DistributionField::from_fn(g.clone(), |_, v| (-0.5 * v * v).exp() / (2.0 * PI).sqrt());
        let gap = second_moment_gap(&gauss).unwrap();
        let dv = g.v.dv;
        assert!((gap - (1.0 - 1.0 / 12.0) * 2.0 * PI).abs() < 2.0 * PI * dv * dv);
    }
}
