//! The sampling scheme: spatial grid, Gauss-Hermite rule, and time grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, GridEvaluator};
use crate::hermite::hermite_row_scaled;
use crate::quadrature::{GaussHermite, TimeGrid, MAX_GAUSS_HERMITE};

/// Plain parameters of a [`SamplingScheme`]; this is what gets serialized
/// into reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeParams {
    pub dimension: usize,
    pub degree_cap: usize,
    pub box_halfwidth: f64,
    pub points_per_axis: usize,
    /// Gauss-Hermite size per axis; `0` means `degree_cap + 1`.
    pub quadrature_size: usize,
    pub time_levels: u32,
    pub nodes_per_level: usize,
    /// Spatial sub-samples per cube axis when estimating sups over cubes.
    pub cube_subsamples: usize,
}

impl Default for SchemeParams {
    fn default() -> Self {
        Self::default_for(1)
    }
}

impl SchemeParams {
    pub fn default_for(dimension: usize) -> Self {
        Self {
            dimension,
            degree_cap: if dimension == 1 { 256 } else { 64 },
            box_halfwidth: 8.0,
            points_per_axis: 512,
            quadrature_size: 0,
            time_levels: 12,
            nodes_per_level: 4,
            cube_subsamples: 3,
        }
    }

    /// Doubles (`factor` times) the spatial points, the time nodes per level
    /// and the cube sub-sampling.
    pub fn refined(&self, factor: usize) -> Self {
        let f = factor.max(1);
        Self {
            points_per_axis: self.points_per_axis * f,
            nodes_per_level: self.nodes_per_level * f,
            cube_subsamples: self.cube_subsamples * f,
            ..self.clone()
        }
    }

    pub fn effective_quadrature_size(&self) -> usize {
        if self.quadrature_size == 0 {
            self.degree_cap + 1
        } else {
            self.quadrature_size
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dimension == 1 || self.dimension == 2) {
            return Err(Error::domain(format!("dimension {} not in {{1, 2}}", self.dimension)));
        }
        if self.effective_quadrature_size() < self.degree_cap + 1 {
            return Err(Error::domain(format!(
                "quadrature size {} below degree cap + 1 = {}",
                self.effective_quadrature_size(),
                self.degree_cap + 1
            )));
        }
        if self.nodes_per_level == 0 || self.cube_subsamples == 0 {
            return Err(Error::domain("nodes_per_level and cube_subsamples must be positive"));
        }
        Ok(())
    }
}

/// Gauss-Hermite rule with its normalized Hermite table.
#[derive(Debug, Clone)]
struct Quadrature {
    rule: GaussHermite,
    // Q x (D+1): h_a(x_i) * sqrt(w_i e^{x_i^2})
    table: Vec<Vec<f64>>,
}

impl Quadrature {
    fn build(params: &SchemeParams) -> Result<Self> {
        let rule = GaussHermite::new(params.effective_quadrature_size())?;
        let q = rule.len();
        let table = rule
            .nodes
            .iter()
            .map(|&x| {
                let (row, _) = hermite_row_scaled(x, q - 1);
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                row[..=params.degree_cap].iter().map(|v| v / norm).collect()
            })
            .collect();
        Ok(Self { rule, table })
    }
}

/// Immutable, precomputed discretization shared by every operation. Schemes
/// above the Gauss-Hermite size cap carry no rule and still serve norms and
/// synthesis.
#[derive(Debug, Clone)]
pub struct SamplingScheme {
    params: SchemeParams,
    quadrature: Option<Quadrature>,
    time: TimeGrid,
    evaluator: GridEvaluator,
}

impl SamplingScheme {
    pub fn new(params: SchemeParams) -> Result<Self> {
        params.validate()?;
        let time = TimeGrid::new(params.time_levels, params.nodes_per_level)?;
        let grid = Grid::new(params.dimension, params.box_halfwidth, params.points_per_axis)?;
        let evaluator = GridEvaluator::new(grid, params.degree_cap);
        let quadrature = if params.effective_quadrature_size() <= MAX_GAUSS_HERMITE {
            Some(Quadrature::build(&params)?)
        } else {
            None
        };
        Ok(Self {
            params,
            quadrature,
            time,
            evaluator,
        })
    }

    fn quadrature(&self) -> Result<&Quadrature> {
        self.quadrature.as_ref().ok_or_else(|| {
            Error::Range(format!(
                "no Gauss-Hermite rule: size {} above the cap {MAX_GAUSS_HERMITE}",
                self.params.effective_quadrature_size()
            ))
        })
    }

    pub fn default_1d() -> Result<Self> {
        Self::new(SchemeParams::default_for(1))
    }

    pub fn params(&self) -> &SchemeParams {
        &self.params
    }

    pub fn dimension(&self) -> usize {
        self.params.dimension
    }

    pub fn degree_cap(&self) -> usize {
        self.params.degree_cap
    }

    /// The Gauss-Hermite rule; a range error above its size cap.
    pub fn gauss_hermite(&self) -> Result<&GaussHermite> {
        Ok(&self.quadrature()?.rule)
    }

    pub(crate) fn node_table(&self) -> Result<&[Vec<f64>]> {
        Ok(&self.quadrature()?.table)
    }

    pub fn time_grid(&self) -> &TimeGrid {
        &self.time
    }

    pub fn grid(&self) -> &Grid {
        self.evaluator.grid()
    }

    pub fn evaluator(&self) -> &GridEvaluator {
        &self.evaluator
    }

    pub fn refined(&self, factor: usize) -> Result<Self> {
        Self::new(self.params.refined(factor))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::{expand, HermiteExpansion};

    #[test]
    fn degree_above_rule_cap_still_evaluates() {
        let s = SamplingScheme::new(SchemeParams {
            degree_cap: 1024,
            points_per_axis: 64,
            ..SchemeParams::default_for(1)
        })
        .unwrap();
        assert!(matches!(s.gauss_hermite(), Err(Error::Range(_))));
        assert!(expand(|_| 1.0, 1, 1024, &s).is_err());
        let e = HermiteExpansion::from_1d(1024, &[(0, 1.0)]).unwrap();
        assert_eq!(s.evaluator().synthesize(&e).unwrap().len(), 64);
    }

    #[test]
    fn refinement_scales_sampling_only() {
        let p = SchemeParams::default_for(1).refined(2);
        assert_eq!(p.points_per_axis, 1024);
        assert_eq!(p.nodes_per_level, 8);
        assert_eq!(p.degree_cap, 256);
        let bad = SchemeParams {
            quadrature_size: 10,
            ..SchemeParams::default_for(1)
        };
        assert!(bad.validate().is_err());
    }
}
