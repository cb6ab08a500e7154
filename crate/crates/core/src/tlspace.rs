//! The inhomogeneous `F^{α(·),H,m}_{p(·),q(·)}` norm and the sequence-space
//! norm `f^{α(·)}_{p(·),q(·)}` over dyadic cubes.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::hermite::HermiteExpansion;
use crate::scheme::SamplingScheme;
use crate::semigroup::{apply_poisson, HERMITE_SUP};
use crate::varexp::{luxemburg_norm, mixed_norm, ExponentField, LevelFamily};

/// `Q = 2^{-v}([0,1)^n + k)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicCube {
    pub v: u32,
    pub k: Vec<i64>,
}

impl DyadicCube {
    pub fn new(v: u32, k: Vec<i64>) -> Result<Self> {
        if !(k.len() == 1 || k.len() == 2) {
            return Err(Error::domain(format!("cube index has dimension {}", k.len())));
        }
        Ok(Self { v, k })
    }

    pub fn dimension(&self) -> usize {
        self.k.len()
    }

    pub fn side(&self) -> f64 {
        2f64.powi(-(self.v as i32))
    }

    pub fn volume(&self) -> f64 {
        self.side().powi(self.dimension() as i32)
    }

    /// Lower corner `x_Q = 2^{-v} k`.
    pub fn corner(&self) -> Vec<f64> {
        self.k.iter().map(|&k| k as f64 * self.side()).collect()
    }

    pub fn center(&self) -> Vec<f64> {
        self.k
            .iter()
            .map(|&k| (k as f64 + 0.5) * self.side())
            .collect()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let s = self.side();
        self.k
            .iter()
            .zip(x)
            .all(|(&k, &xi)| (xi / s).floor() as i64 == k)
    }

    pub fn inside_box(&self, halfwidth: f64) -> bool {
        let s = self.side();
        self.k
            .iter()
            .all(|&k| k as f64 * s >= -halfwidth && (k + 1) as f64 * s <= halfwidth)
    }

    /// Cubes of level `v` tiling `[-X, X]^n`, in lexicographic order.
    pub fn tiling(v: u32, dimension: usize, halfwidth: f64) -> Vec<Self> {
        let s = 2f64.powi(-(v as i32));
        let lo = (-halfwidth / s).ceil() as i64;
        let hi = (halfwidth / s).floor() as i64;
        match dimension {
            1 => (lo..hi).map(|k| Self { v, k: vec![k] }).collect(),
            _ => (lo..hi)
                .flat_map(|a| (lo..hi).map(move |b| Self { v, k: vec![a, b] }))
                .collect(),
        }
    }

    /// Index of the level-`v` cube containing `x`.
    pub fn locate(v: u32, x: &[f64]) -> Vec<i64> {
        let scale = 2f64.powi(v as i32);
        x.iter().map(|xi| (xi * scale).floor() as i64).collect()
    }
}

/// `{s_Q}` over cubes of levels `0..=v_max` inside the box.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CoefficientSet {
    pub entries: BTreeMap<DyadicCube, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEntry {
    pub v: u32,
    pub k: Vec<i64>,
    pub s: f64,
}

impl Serialize for CoefficientSet {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<CoefficientEntry> = self
            .entries
            .iter()
            .map(|(c, s)| CoefficientEntry {
                v: c.v,
                k: c.k.clone(),
                s: *s,
            })
            .collect();
        rows.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for CoefficientSet {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<CoefficientEntry>::deserialize(de)?;
        Ok(Self {
            entries: rows
                .into_iter()
                .map(|r| (DyadicCube { v: r.v, k: r.k }, r.s))
                .collect(),
        })
    }
}

impl CoefficientSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cube: DyadicCube, s: f64) {
        self.entries.insert(cube, s);
    }

    pub fn get(&self, cube: &DyadicCube) -> f64 {
        self.entries.get(cube).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn v_max(&self) -> Option<u32> {
        self.entries.keys().map(|c| c.v).max()
    }

    pub fn dimension(&self) -> Option<usize> {
        self.entries.keys().next().map(|c| c.dimension())
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            entries: self.entries.iter().map(|(q, s)| (q.clone(), s * c)).collect(),
        }
    }

    /// Checks the box and level invariants.
    pub fn validate(&self, halfwidth: f64, v_max: u32) -> Result<()> {
        for c in self.entries.keys() {
            if c.v > v_max || !c.inside_box(halfwidth) {
                return Err(Error::input(format!(
                    "cube (v={}, k={:?}) outside the box or above level {v_max}",
                    c.v, c.k
                )));
            }
        }
        Ok(())
    }
}

/// Discretization facts carried in a [`NormBreakdown`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub dimension: usize,
    pub halfwidth: f64,
    pub points_per_axis: usize,
    pub time_levels: u32,
    pub nodes_per_level: usize,
    pub degree_cap: usize,
}

/// Truncation diagnostics of a [`tl_norm`] evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailReport {
    /// Bound on the pointwise inner `ℓ^{q}` contribution of `(0, 2^{-J})`.
    pub time_truncation: f64,
    /// Modular carried by the outermost cell layer (lowpass term).
    pub lowpass_boundary_modular: f64,
    /// Same for the square-function term.
    pub squarefn_boundary_modular: f64,
    /// `ℓ^2` share of coefficients in the top quarter of orders.
    pub degree_tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormBreakdown {
    pub term_lowpass: f64,
    pub term_squarefn: f64,
    pub total: f64,
    pub m: u32,
    pub m_threshold: f64,
    pub grid: GridInfo,
    pub tails: TailReport,
    pub warnings: Vec<String>,
}

/// Lower bound on `m` above which the space is `m`-independent:
/// `max{α⁺,0} + n + ⌊n/min{1,p⁻,q⁻} − n⌋ + 1 + C_log(α)`.
pub fn m_threshold(alpha: &ExponentField, p: &ExponentField, q: &ExponentField, n: usize) -> f64 {
    let nf = n as f64;
    let r = 1f64.min(p.p_minus).min(q.p_minus);
    alpha.p_plus.max(0.0) + nf + (nf / r - nf).floor() + 1.0 + alpha.clog_local.max(alpha.clog_infty)
}

fn degree_tail(f: &HermiteExpansion) -> f64 {
    let total = f.l2_norm();
    if total == 0.0 {
        return 0.0;
    }
    let layout = f.layout();
    let cut = 3 * f.degree_cap() / 4;
    let tail: f64 = f
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(i, _)| layout.order_at(*i) > cut)
        .map(|(_, c)| c * c)
        .sum();
    tail.sqrt() / total
}

/// `‖e^{-√H}f‖_{L^{p(·)}} + ‖(∫_0^1 [t^{-α}|(t√H)^m e^{-t√H}f|]^{q} dt/t)^{1/q}‖_{L^{p(·)}}`.
pub fn tl_norm(
    f: &HermiteExpansion,
    alpha: &ExponentField,
    p: &ExponentField,
    q: &ExponentField,
    m: u32,
    scheme: &SamplingScheme,
) -> Result<NormBreakdown> {
    let n = scheme.dimension();
    if f.dimension() != n {
        return Err(Error::input("expansion and scheme dimensions differ"));
    }
    p.require_lebesgue("p")?;
    q.require_lebesgue("q")?;
    let params = scheme.params();
    let grid = *scheme.grid();
    let info = GridInfo {
        dimension: n,
        halfwidth: grid.halfwidth,
        points_per_axis: grid.points_per_axis,
        time_levels: params.time_levels,
        nodes_per_level: params.nodes_per_level,
        degree_cap: params.degree_cap,
    };
    let threshold = m_threshold(alpha, p, q, n);
    let mut warnings = Vec::new();
    if (m as f64) <= threshold {
        warnings.push(format!(
            "m = {m} does not exceed the m-independence threshold {threshold:.4}"
        ));
    }
    let f = if f.degree_cap() > scheme.degree_cap() {
        warnings.push(format!(
            "expansion truncated from degree {} to {}",
            f.degree_cap(),
            scheme.degree_cap()
        ));
        f.with_degree_cap(scheme.degree_cap())?
    } else {
        f.clone()
    };
    let ev = scheme.evaluator();

    let low = ev.synthesize(&apply_poisson(&f, 1.0, 0)?)?;
    let low_norm = luxemburg_norm(&low, &grid, p)?;

    let alpha_vals = alpha.sample_on(&grid);
    let nodes = &scheme.time_grid().nodes;
    let members: Vec<Vec<f64>> = nodes
        .par_iter()
        .map(|node| {
            let vals = ev.synthesize(&apply_poisson(&f, node.t, m)?)?;
            let lt = node.t.ln();
            Ok(vals
                .iter()
                .zip(&alpha_vals)
                .map(|(v, a)| (-a * lt).exp() * v.abs())
                .collect())
        })
        .collect::<Result<_>>()?;
    let weights: Vec<f64> = nodes.iter().map(|n| n.weight).collect();
    let (sq_norm, sq_boundary) = if f.is_zero() {
        (0.0, 0.0)
    } else {
        let fam = LevelFamily::new(grid, weights, members)?;
        let r = mixed_norm(&fam, p, q)?;
        (r.norm, r.boundary_modular)
    };

    // (0, 2^{-J}) contribution: |(t√H)^m e^{-t√H} f| ≤ A t^m with A = sup|h|^n Σ|c| λ^{m/2}
    let a_const: f64 = HERMITE_SUP.powi(n as i32)
        * f.map_spectral(|l| l.powf(m as f64 / 2.0))
            .coeffs()
            .iter()
            .map(|c| c.abs())
            .sum::<f64>();
    let t0 = scheme.time_grid().t_min();
    let expo = m as f64 - alpha.p_plus.max(alpha.p_minus);
    let time_truncation = if a_const == 0.0 {
        0.0
    } else if expo > 0.0 {
        let qq = q.p_minus;
        let tmin_alpha = t0.powf(-alpha.p_plus.max(0.0)).max(t0.powf(-alpha.p_minus.min(0.0)));
        (a_const * t0.powf(m as f64) * tmin_alpha) * (1.0 / (expo * qq)).powf(1.0 / qq)
    } else {
        f64::INFINITY
    };

    Ok(NormBreakdown {
        term_lowpass: low_norm.norm,
        term_squarefn: sq_norm,
        total: low_norm.norm + sq_norm,
        m,
        m_threshold: threshold,
        grid: info,
        tails: TailReport {
            time_truncation,
            lowpass_boundary_modular: low_norm.boundary_modular,
            squarefn_boundary_modular: sq_boundary,
            degree_tail: degree_tail(&f),
        },
        warnings,
    })
}

/// Grid on which every cube of `s` is resolved: `base` refined until the
/// spacing is at most `2^{-v_max}`.
pub fn sequence_grid(s: &CoefficientSet, base: &Grid) -> Grid {
    let v_max = s.v_max().unwrap_or(0);
    let target = 2f64.powi(-(v_max as i32));
    let mut factor = 1;
    while base.spacing() / factor as f64 > target * (1.0 + 1e-12) {
        factor *= 2;
    }
    base.refined(factor)
}

/// Level functions `2^{vα(x)} Σ_{Q∈D_v} |s_Q||Q|^{-1/2} 1_Q(x)` for
/// `v = 0..=v_max` on `grid`.
pub fn level_functions(s: &CoefficientSet, alpha: &ExponentField, grid: &Grid) -> Vec<Vec<f64>> {
    let n = grid.dimension;
    let v_max = s.v_max().unwrap_or(0);
    let alpha_vals = alpha.sample_on(grid);
    let pts: Vec<[f64; 2]> = grid.points().collect();
    (0..=v_max)
        .into_par_iter()
        .map(|v| {
            let by_index: HashMap<&[i64], f64> = s
                .entries
                .iter()
                .filter(|(c, _)| c.v == v)
                .map(|(c, val)| (c.k.as_slice(), val.abs()))
                .collect();
            let scale = 2f64.powi(v as i32);
            let inv_sqrt_vol = scale.powf(n as f64 / 2.0);
            pts.iter()
                .zip(&alpha_vals)
                .map(|(x, a)| {
                    if by_index.is_empty() {
                        return 0.0;
                    }
                    let k = DyadicCube::locate(v, &x[..n]);
                    match by_index.get(k.as_slice()) {
                        Some(val) => scale.powf(*a) * val * inv_sqrt_vol,
                        None => 0.0,
                    }
                })
                .collect()
        })
        .collect()
}

/// `‖[Σ_v (2^{vα} Σ_Q |s_Q||Q|^{-1/2} 1_Q)^{q}]^{1/q}‖_{L^{p(·)}}` on a grid
/// fine enough to resolve every cube.
pub fn seq_norm(
    s: &CoefficientSet,
    alpha: &ExponentField,
    p: &ExponentField,
    q: &ExponentField,
    base: &Grid,
) -> Result<f64> {
    if s.entries.values().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    if s.dimension() != Some(base.dimension) {
        return Err(Error::input("coefficient set and grid dimensions differ"));
    }
    s.validate(base.halfwidth, u32::MAX)?;
    let grid = sequence_grid(s, base);
    let fam = LevelFamily::unweighted(grid, level_functions(s, alpha, &grid))?;
    Ok(mixed_norm(&fam, p, q)?.norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::SchemeParams;
    use std::f64::consts::PI;

    fn scheme_small() -> SamplingScheme {
        SamplingScheme::new(SchemeParams {
            degree_cap: 32,
            points_per_axis: 256,
            ..SchemeParams::default_for(1)
        })
        .unwrap()
    }

    fn c(v: f64) -> ExponentField {
        ExponentField::constant(v).unwrap()
    }

    #[test]
    fn cube_geometry() {
        let q = DyadicCube::new(2, vec![-3]).unwrap();
        assert_eq!(q.side(), 0.25);
        assert_eq!(q.corner(), vec![-0.75]);
        assert!(q.contains(&[-0.6]));
        assert!(!q.contains(&[-0.5]));
        assert_eq!(DyadicCube::tiling(1, 1, 8.0).len(), 32);
        assert_eq!(DyadicCube::tiling(0, 2, 2.0).len(), 16);
    }

    #[test]
    fn zero_function_has_zero_norm() {
        let s = scheme_small();
        let z = HermiteExpansion::zeros(1, 32).unwrap();
        let r = tl_norm(&z, &c(0.0), &c(2.0), &c(2.0), 3, &s).unwrap();
        assert_eq!((r.term_lowpass, r.term_squarefn, r.total), (0.0, 0.0, 0.0));
    }

    #[test]
    fn h0_terms_match_scalar_oracle() {
        let s = SamplingScheme::new(SchemeParams {
            degree_cap: 16,
            ..SchemeParams::default_for(1)
        })
        .unwrap();
        let h0 = HermiteExpansion::from_1d(16, &[(0, 1.0)]).unwrap();
        let r = tl_norm(&h0, &c(0.0), &c(2.0), &c(2.0), 3, &s).unwrap();
        assert!((r.term_lowpass / (-1f64).exp() - 1.0).abs() < 1e-6);
        // ∫_0^1 t^5 e^{-2t} dt = (120 - e^{-2} Σ_{j≤5} 120·2^j/j!)/64 by parts
        let tail: f64 = (0..=5)
            .map(|j| 120.0 / (1..=j).product::<usize>() as f64 * 2f64.powi(j as i32))
            .sum();
        let exact = ((120.0 - (-2f64).exp() * tail) / 64.0).sqrt();
        assert!((r.term_squarefn / exact - 1.0).abs() < 1e-6, "{} vs {}", r.term_squarefn, exact);
        assert!(r.total == r.term_lowpass + r.term_squarefn);
    }

    #[test]
    fn threshold_warning_is_emitted() {
        let s = scheme_small();
        let h0 = HermiteExpansion::from_1d(32, &[(0, 1.0)]).unwrap();
        let r = tl_norm(&h0, &c(0.0), &c(2.0), &c(2.0), 1, &s).unwrap();
        assert_eq!(r.m_threshold, 2.0);
        assert_eq!(r.warnings.len(), 1);
        let r = tl_norm(&h0, &c(0.0), &c(2.0), &c(2.0), 3, &s).unwrap();
        assert!(r.warnings.is_empty());
    }

    #[test]
    fn single_unit_cube_has_unit_norm() {
        let mut set = CoefficientSet::new();
        set.insert(DyadicCube::new(0, vec![0]).unwrap(), 1.0);
        let g = Grid::new(1, 8.0, 64).unwrap();
        let alpha = ExponentField::affine_clamped(0.0, 0.3, -0.5, 0.5).unwrap();
        let v = seq_norm(&set, &alpha, &c(2.0), &c(2.0), &g).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
        assert_eq!(seq_norm(&CoefficientSet::new(), &alpha, &c(2.0), &c(2.0), &g).unwrap(), 0.0);
    }

    #[test]
    fn fine_levels_refine_the_grid() {
        let mut set = CoefficientSet::new();
        set.insert(DyadicCube::new(7, vec![5]).unwrap(), 1.0);
        let g = Grid::new(1, 8.0, 512).unwrap();
        assert_eq!(sequence_grid(&set, &g).points_per_axis, 2048);
        // |Q|^{-1/2} ‖1_Q‖_2 = 1 at any level for α ≡ 0
        let v = seq_norm(&set, &c(0.0), &c(2.0), &c(2.0), &g).unwrap();
        assert!((v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn coefficient_set_json_round_trip() {
        let mut set = CoefficientSet::new();
        set.insert(DyadicCube::new(1, vec![-2, 3]).unwrap(), -0.5);
        set.insert(DyadicCube::new(0, vec![0, 0]).unwrap(), PI);
        let s = serde_json::to_string(&set).unwrap();
        let back: CoefficientSet = serde_json::from_str(&s).unwrap();
        assert_eq!(back, set);
    }
}
