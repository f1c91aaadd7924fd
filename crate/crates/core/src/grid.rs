//! Periodic physical grid and truncated velocity grid.
//!
//! Both grids are cell-centered; every integral in the crate is a midpoint
//! sum over these cells.

use crate::error::{Error, Result};

/// Uniform cell-centered grid on the torus `[0, length)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusGrid {
    pub n: usize,
    pub length: f64,
    pub dx: f64,
    pub centers: Vec<f64>,
}

impl TorusGrid {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::Config(format!("n_x must be at least 4, got {n}")));
        }
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::Config(format!("torus length must be positive, got {length}")));
        }
        let dx = length / n as f64;
        let centers = (0..n).map(|i| (i as f64 + 0.5) * dx).collect();
        Ok(Self {
            n,
            length,
            dx,
            centers,
        })
    }

    /// Midpoint-rule integral of cell values.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.dx
    }

    /// Same geometry (cell count and circumference).
    pub fn same_as(&self, other: &TorusGrid) -> bool {
        self.n == other.n && self.length == other.length
    }
}

/// Symmetric velocity grid on `[-v_max, v_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid {
    pub n: usize,
    pub v_max: f64,
    pub dv: f64,
    pub centers: Vec<f64>,
}

impl VelocityGrid {
    pub fn new(n: usize, v_max: f64) -> Result<Self> {
        if n < 4 {
            return Err(Error::Config(format!("n_v must be at least 4, got {n}")));
        }
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(Error::Config(format!("v_max must be positive, got {v_max}")));
        }
        let dv = 2.0 * v_max / n as f64;
        // mirror-symmetric to the last bit
        let half = n as f64 / 2.0;
        let centers = (0..n).map(|j| (j as f64 + 0.5 - half) * dv).collect();
        Ok(Self {
            n,
            v_max,
            dv,
            centers,
        })
    }

    /// Lower edge of cell `j`.
    #[inline]
    pub fn lower_edge(&self, j: usize) -> f64 {
        -self.v_max + j as f64 * self.dv
    }
}

/// Phase space `T x [-v_max, v_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseGrid {
    pub x: TorusGrid,
    pub v: VelocityGrid,
}

impl PhaseGrid {
    #[inline]
    pub fn n_x(&self) -> usize {
        self.x.n
    }

    #[inline]
    pub fn n_v(&self) -> usize {
        self.v.n
    }

    /// Phase-space cell volume `dx * dv`.
    #[inline]
    pub fn cell_volume(&self) -> f64 {
        self.x.dx * self.v.dv
    }
}

pub fn build_phase_grid(n_x: usize, n_v: usize, length: f64, v_max: f64) -> Result<PhaseGrid> {
    Ok(PhaseGrid {
        x: TorusGrid::new(n_x, length)?,
        v: VelocityGrid::new(n_v, v_max)?,
    })
}

/// Distance between `a` and `b` on a circle of circumference `length`.
pub fn periodic_distance(a: f64, b: f64, length: f64) -> f64 {
    let r = (a - b).abs().rem_euclid(length);
    r.min(length - r)
}
