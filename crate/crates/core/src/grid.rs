//! Cell-centred tensor grids on the box `[-X, X]^n`.
//!
//! A grid function is a flat `Vec<f64>` in row-major order: for `n = 2` the
//! sample at `(x_i, y_j)` sits at `i * P + j`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{hermite_row, HermiteExpansion, Layout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub dimension: usize,
    pub halfwidth: f64,
    pub points_per_axis: usize,
}

impl Grid {
    pub fn new(dimension: usize, halfwidth: f64, points_per_axis: usize) -> Result<Self> {
        if !(dimension == 1 || dimension == 2) {
            return Err(Error::domain(format!("grid dimension {dimension} not in {{1, 2}}")));
        }
        if !(halfwidth > 0.0 && halfwidth.is_finite()) {
            return Err(Error::domain(format!("box halfwidth {halfwidth} must be positive")));
        }
        if points_per_axis < 2 {
            return Err(Error::domain("need at least two points per axis"));
        }
        Ok(Self {
            dimension,
            halfwidth,
            points_per_axis,
        })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.halfwidth / self.points_per_axis as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dimension as i32)
    }

    pub fn len(&self) -> usize {
        self.points_per_axis.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axis(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.points_per_axis)
            .map(|i| -self.halfwidth + (i as f64 + 0.5) * h)
            .collect()
    }

    /// Coordinates of flat sample `idx`; the second entry is unused for `n = 1`.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let h = self.spacing();
        let c = |i: usize| -self.halfwidth + (i as f64 + 0.5) * h;
        match self.dimension {
            1 => [c(idx), 0.0],
            _ => [c(idx / self.points_per_axis), c(idx % self.points_per_axis)],
        }
    }

    pub fn points(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        (0..self.len()).map(|i| self.point(i))
    }

    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.points()
            .map(|p| f(&p[..self.dimension]))
            .collect()
    }

    /// Box quadrature `sum f_i * cell_volume`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        values.iter().sum::<f64>() * self.cell_volume()
    }

    /// Same box with `factor` times as many points per axis.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            points_per_axis: self.points_per_axis * factor.max(1),
            ..*self
        }
    }
}

/// Hermite functions tabulated on a grid axis, for fast synthesis.
#[derive(Debug, Clone)]
pub struct GridEvaluator {
    grid: Grid,
    degree_cap: usize,
    // P x (D+1)
    table: DMatrix<f64>,
}

impl GridEvaluator {
    pub fn new(grid: Grid, degree_cap: usize) -> Self {
        let table = axis_table(&grid.axis(), degree_cap);
        Self {
            grid,
            degree_cap,
            table,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn degree_cap(&self) -> usize {
        self.degree_cap
    }

    pub fn table(&self) -> &DMatrix<f64> {
        &self.table
    }

    /// Values of `e` at every grid point.
    pub fn synthesize(&self, e: &HermiteExpansion) -> Result<Vec<f64>> {
        if e.dimension() != self.grid.dimension {
            return Err(Error::input("expansion and grid dimensions differ"));
        }
        if e.degree_cap() > self.degree_cap {
            return Err(Error::input(format!(
                "expansion degree {} exceeds tabulated degree {}",
                e.degree_cap(),
                self.degree_cap
            )));
        }
        Ok(tensor_values(e, &self.table, &self.table))
    }
}

/// `h_a(x_i)` for `a = 0..=degree_cap` at arbitrary axis points.
pub fn axis_table(points: &[f64], degree_cap: usize) -> DMatrix<f64> {
    let mut table = DMatrix::<f64>::zeros(points.len(), degree_cap + 1);
    for (i, &x) in points.iter().enumerate() {
        for (a, v) in hermite_row(x, degree_cap).into_iter().enumerate() {
            table[(i, a)] = v;
        }
    }
    table
}

/// Coefficients as a matrix: a `(D+1) x 1` column for `n = 1`, the
/// `(D+1) x (D+1)` array `c_{(a,b)}` for `n = 2`.
pub fn coeff_matrix(e: &HermiteExpansion) -> DMatrix<f64> {
    let d = e.degree_cap();
    match e.dimension() {
        1 => DMatrix::from_column_slice(d + 1, 1, e.coeffs()),
        _ => {
            let layout = e.layout();
            let mut cm = DMatrix::<f64>::zeros(d + 1, d + 1);
            for (s, &c) in e.coeffs().iter().enumerate() {
                let [a, b] = layout.entries_at(s);
                cm[(a, b)] = c;
            }
            cm
        }
    }
}

/// Inverse of [`coeff_matrix`]; entries outside the layout are ignored.
pub fn from_coeff_matrix(layout: Layout, m: &DMatrix<f64>) -> HermiteExpansion {
    let coeffs = (0..layout.len())
        .map(|s| match layout.dimension {
            1 => m[(s, 0)],
            _ => {
                let [a, b] = layout.entries_at(s);
                m[(a, b)]
            }
        })
        .collect();
    HermiteExpansion::from_layout(layout, coeffs).expect("layout length")
}

/// Values on the tensor product of the rows of `tx` and `ty`, row-major
/// (`ty` is ignored for `n = 1`). Tables may hold more columns than needed.
pub fn tensor_values(e: &HermiteExpansion, tx: &DMatrix<f64>, ty: &DMatrix<f64>) -> Vec<f64> {
    let d = e.degree_cap();
    let cm = coeff_matrix(e);
    let tx = tx.columns(0, d + 1);
    match e.dimension() {
        1 => (tx * cm).iter().copied().collect(),
        _ => {
            let ty = ty.columns(0, d + 1);
            let r = tx * cm * ty.transpose();
            let (px, py) = r.shape();
            let mut out = Vec::with_capacity(px * py);
            for i in 0..px {
                for j in 0..py {
                    out.push(r[(i, j)]);
                }
            }
            out
        }
    }
}
