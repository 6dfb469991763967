//! Uniform periodic tensor grids on `[-L, L)^dim` and complex fields living
//! on them, together with the discrete norms used throughout the crate.
//!
//! Discrete integrals use the rectangle rule with measure `h^dim`; on a
//! periodic grid this is spectrally accurate for well-resolved fields, which
//! is the accuracy regime every routine here assumes.

use num_complex::Complex64;

use crate::error::{CoreError, Result};

pub type C64 = Complex64;

/// A uniform periodic grid: `points` nodes per axis on `[-L, L)`, repeated
/// over `dim` axes in row-major order (axis 0 slowest).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    dim: usize,
    half_width: f64,
    points: usize,
}

impl Grid {
    pub fn new(dim: usize, half_width: f64, points: usize) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(CoreError::Grid(format!("dim must be 1, 2, or 3 (got {dim})")));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(CoreError::Grid(format!("half-width must be positive (got {half_width})")));
        }
        if points < 16 || !points.is_power_of_two() {
            return Err(CoreError::Grid(format!(
                "points per axis must be a power of two >= 16 (got {points})"
            )));
        }
        Ok(Grid { dim, half_width, points })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Half-width `L` of the box `[-L, L)^dim`.
    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    /// Nodes per axis.
    pub fn points(&self) -> usize {
        self.points
    }

    /// Mesh width `h = 2L / points`.
    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    /// Total node count `points^dim`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Quadrature weight `h^dim` of one node.
    pub fn cell_measure(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    /// Axis coordinates `x_i = -L + i h`, shared by all axes.
    pub fn axis_coords(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.points).map(|i| -self.half_width + i as f64 * h).collect()
    }

    /// Angular wavenumbers in FFT layout: `xi_j = pi j / L` with
    /// `j = 0, 1, ..., M/2 - 1, -M/2, ..., -1`.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let m = self.points;
        let scale = std::f64::consts::PI / self.half_width;
        (0..m)
            .map(|i| {
                let j = if i < m / 2 { i as i64 } else { i as i64 - m as i64 };
                scale * j as f64
            })
            .collect()
    }

    /// Decompose a flat row-major index into per-axis indices
    /// (unused trailing axes are zero).
    pub fn axis_indices(&self, flat: usize) -> [usize; 3] {
        let m = self.points;
        match self.dim {
            1 => [flat, 0, 0],
            2 => [flat / m, flat % m, 0],
            _ => [flat / (m * m), (flat / m) % m, flat % m],
        }
    }

    /// Coordinates of a node by flat index (unused axes are zero).
    pub fn node_coords(&self, flat: usize) -> [f64; 3] {
        let idx = self.axis_indices(flat);
        let h = self.spacing();
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = -self.half_width + idx[a] as f64 * h;
        }
        x
    }

    /// Squared Euclidean radius of a node.
    pub fn node_radius2(&self, flat: usize) -> f64 {
        let x = self.node_coords(flat);
        x[..self.dim].iter().map(|c| c * c).sum()
    }

    /// Whether a node lies in the inner half-domain `|x| <= L/2`.
    pub fn is_inner(&self, flat: usize) -> bool {
        self.node_radius2(flat) <= (self.half_width / 2.0).powi(2) * (1.0 + 1e-14)
    }

    /// The Japanese-bracket weight `<x>^e = (1 + |x|^2)^{e/2}` at every node.
    pub fn weight_vector(&self, exponent: f64) -> Vec<f64> {
        (0..self.len())
            .map(|i| (1.0 + self.node_radius2(i)).powf(exponent / 2.0))
            .collect()
    }
}

/// A complex field sampled on a [`Grid`], stamped with its model time.
#[derive(Clone, Debug)]
pub struct Field {
    grid: Grid,
    values: Vec<C64>,
    time: f64,
}

impl Field {
    pub fn new(grid: Grid, values: Vec<C64>, time: f64) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(CoreError::Grid(format!(
                "value count {} does not match grid size {}",
                values.len(),
                grid.len()
            )));
        }
        if !time.is_finite() {
            return Err(CoreError::Grid(format!("time stamp must be finite (got {time})")));
        }
        Ok(Field { grid, values, time })
    }

    pub fn zeros(grid: Grid) -> Self {
        let n = grid.len();
        Field { grid, values: vec![C64::new(0.0, 0.0); n], time: 0.0 }
    }

    /// Sample a scalar function of the node coordinates.
    pub fn from_fn(grid: Grid, time: f64, mut f: impl FnMut(&[f64]) -> C64) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.node_coords(i);
                f(&x[..grid.dim()])
            })
            .collect();
        Field { grid, values, time }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<C64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Discrete `L^2` norm, `sqrt(h^dim sum |f|^2)`.
    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_measure() * self.values.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt()
    }

    /// `h^dim sum |f|^p` — the `p`-th power of the discrete `L^p` norm.
    pub fn lp_pow(&self, p: f64) -> f64 {
        self.grid.cell_measure()
            * self.values.iter().map(|z| z.norm().powf(p)).sum::<f64>()
    }

    /// Discrete `L^p` norm.
    pub fn lp_norm(&self, p: f64) -> f64 {
        self.lp_pow(p).powf(1.0 / p)
    }

    /// Sup norm over all nodes.
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Weighted sup norm `sup <x>^e |f|`.
    pub fn weighted_sup(&self, exponent: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, z)| (1.0 + self.grid.node_radius2(i)).powf(exponent / 2.0) * z.norm())
            .fold(0.0, f64::max)
    }

    /// Weighted `L^2` norm `|| <x>^e f ||_2`.
    pub fn weighted_l2(&self, exponent: f64) -> f64 {
        let s: f64 = self
            .values
            .iter()
            .enumerate()
            .map(|(i, z)| (1.0 + self.grid.node_radius2(i)).powf(exponent) * z.norm_sqr())
            .sum();
        (self.grid.cell_measure() * s).sqrt()
    }

    /// Weighted infimum `inf <x>^e |f|`, the lower brake on vanishing tails.
    pub fn weighted_inf(&self, exponent: f64) -> f64 {
        self.values
            .iter()
            .enumerate()
            .map(|(i, z)| (1.0 + self.grid.node_radius2(i)).powf(exponent / 2.0) * z.norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Minimum of `|f|` over the inner half-domain `|x| <= L/2`.
    pub fn min_abs_inner(&self) -> f64 {
        self.values
            .iter()
            .enumerate()
            .filter(|(i, _)| self.grid.is_inner(*i))
            .map(|(_, z)| z.norm())
            .fold(f64::INFINITY, f64::min)
    }
}
