//! Calderón reproducing formula, the constructive molecular decomposition,
//! molecule validation and synthesis.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};
use crate::grid::{axis_table, coeff_matrix, from_coeff_matrix, tensor_values, Grid};
use crate::hermite::{HermiteExpansion, Layout};
use crate::quadrature::{GaussLegendre, TimeGrid};
use crate::scheme::SamplingScheme;
use crate::semigroup::poisson_symbol;
use crate::tlspace::{CoefficientSet, DyadicCube};
use crate::varexp::ExponentField;

/// Gauss-Legendre nodes per dyadic level used by the Calderón operator.
pub const CALDERON_NODES: usize = 12;
/// Cubes with `s_Q` below this fraction of the largest are dropped.
pub const DROP_RATIO: f64 = 1e-14;
/// Largest relative Calderón remainder beyond `v_max` accepted by
/// [`molecular_decompose`].
pub const REMAINDER_TOL: f64 = 1e-2;

fn factorial(k: u32) -> f64 {
    (1..=k).map(|j| j as f64).product()
}

/// `2^l / (l-1)!`.
pub fn calderon_constant(l: u32) -> f64 {
    2f64.powi(l as i32) / factorial(l - 1)
}

/// `Σ_{k<l} 2^k/k! λ^{k/2} e^{-2√λ}`.
pub fn calderon_lowpass_symbol(lambda: f64, l: u32) -> f64 {
    let a = lambda.sqrt();
    let mut term = 1.0;
    let mut sum = 0.0;
    for k in 0..l {
        if k > 0 {
            term *= 2.0 * a / k as f64;
        }
        sum += term;
    }
    sum * (-2.0 * a).exp()
}

/// Symbol of the reconstructed operator at eigenvalue `λ`: the time rule on
/// `[2^{-J}, 1)`, the incomplete-gamma value of `(0, 2^{-J})`, and the
/// lowpass sum. Equals 1 up to quadrature error.
pub fn calderon_symbol(lambda: f64, l: u32, time: &TimeGrid) -> f64 {
    let a = lambda.sqrt();
    let cl = calderon_constant(l);
    let integral: f64 = time
        .nodes
        .iter()
        .map(|n| {
            let u = n.t * a;
            n.weight * u.powi(l as i32) * (-2.0 * u).exp()
        })
        .sum::<f64>()
        * cl;
    let head = gamma_lr(l as f64, 2.0 * a * time.t_min());
    integral + head + calderon_lowpass_symbol(lambda, l)
}

/// Time rule of the Calderón operator for a scheme with `levels` levels.
pub fn calderon_time_grid(levels: u32) -> Result<TimeGrid> {
    TimeGrid::new(levels, CALDERON_NODES)
}

/// Applies both terms of the Calderón reproducing formula in coefficient
/// space.
pub fn calderon_reconstruct(
    f: &HermiteExpansion,
    l: u32,
    scheme: &SamplingScheme,
) -> Result<HermiteExpansion> {
    if l == 0 {
        return Err(Error::domain("Calderón formula needs l >= 1"));
    }
    let time = calderon_time_grid(scheme.params().time_levels)?;
    Ok(f.map_spectral(|lambda| calderon_symbol(lambda, l, &time)))
}

/// Parameters of a molecular decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeParams {
    pub m: u32,
    #[serde(rename = "M")]
    pub big_m: u32,
    #[serde(rename = "N")]
    pub big_n: u32,
    pub v_max: u32,
}

impl Default for DecomposeParams {
    fn default() -> Self {
        Self {
            m: 6,
            big_m: 4,
            big_n: 2,
            v_max: 8,
        }
    }
}

impl DecomposeParams {
    /// `l = m + M + N`.
    pub fn l(&self) -> u32 {
        self.m + self.big_m + self.big_n
    }
}

/// Which synthesis hypotheses the parameters meet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Admissibility {
    pub n_bound: f64,
    pub n_ok: bool,
    pub m_bound: f64,
    pub m_ok: bool,
    pub big_m_bound: f64,
    pub big_m_ok: bool,
}

impl Admissibility {
    pub fn all(&self) -> bool {
        self.n_ok && self.m_ok && self.big_m_ok
    }
}

/// Checks `N > n/min{1,p⁻,q⁻} − n + C_log(α)`, `m > max{α⁺,0} + N + n` and
/// `M > n + N + |α⁻|`.
pub fn admissibility(
    params: &DecomposeParams,
    alpha: &ExponentField,
    p: &ExponentField,
    q: &ExponentField,
    n: usize,
) -> Admissibility {
    let nf = n as f64;
    let r = 1f64.min(p.p_minus).min(q.p_minus);
    let n_bound = nf / r - nf + alpha.clog_local.max(alpha.clog_infty);
    let m_bound = alpha.p_plus.max(0.0) + params.big_n as f64 + nf;
    let big_m_bound = nf + params.big_n as f64 + alpha.p_minus.abs();
    Admissibility {
        n_bound,
        n_ok: params.big_n as f64 > n_bound,
        m_bound,
        m_ok: params.m as f64 > m_bound,
        big_m_bound,
        big_m_ok: params.big_m as f64 > big_m_bound,
    }
}

/// An `(H, M, N)`-molecule `a = (√H)^M b` attached to a cube.
#[derive(Debug, Clone, PartialEq)]
pub struct MoleculeDescriptor {
    pub cube: DyadicCube,
    pub big_m: u32,
    pub big_n: u32,
    pub b: HermiteExpansion,
    pub zero_level: bool,
    pub size_constant: f64,
}

impl MoleculeDescriptor {
    /// `a = (√H)^M b`.
    pub fn molecule(&self) -> HermiteExpansion {
        let p = self.big_m as f64 / 2.0;
        self.b.map_spectral(|l| l.powf(p))
    }

    /// Orders `k` at which the size condition is required.
    pub fn required_orders(&self) -> std::ops::RangeInclusive<u32> {
        if self.zero_level {
            self.big_m..=2 * self.big_m
        } else {
            0..=2 * self.big_m
        }
    }
}

/// Result of [`molecular_decompose`].
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub params: DecomposeParams,
    pub coefficients: CoefficientSet,
    pub molecules: Vec<MoleculeDescriptor>,
    pub dropped: Vec<DyadicCube>,
    /// `‖Σ s_Q m_Q − f‖_2 / ‖f‖_2`.
    pub residual_l2: f64,
    /// Relative `L^2` size of the Calderón integral over `(0, 2^{-v_max})`.
    pub calderon_remainder: f64,
    /// Largest `s_Q` on cubes touching the box boundary over the largest `s_Q`.
    pub boundary_ratio: f64,
    pub admissibility: Admissibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubeRow {
    pub v: u32,
    pub k: Vec<i64>,
    pub s: f64,
    pub size_constant: f64,
    pub zero_level: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionDoc {
    pub cubes: Vec<CubeRow>,
    pub residual_l2: f64,
    pub calderon_remainder: f64,
    pub boundary_ratio: f64,
    pub dropped: usize,
    pub params: DecomposeParams,
    pub admissibility: Admissibility,
}

impl Decomposition {
    pub fn doc(&self) -> DecompositionDoc {
        DecompositionDoc {
            cubes: self
                .molecules
                .iter()
                .map(|m| CubeRow {
                    v: m.cube.v,
                    k: m.cube.k.clone(),
                    s: self.coefficients.get(&m.cube),
                    size_constant: m.size_constant,
                    zero_level: m.zero_level,
                })
                .collect(),
            residual_l2: self.residual_l2,
            calderon_remainder: self.calderon_remainder,
            boundary_ratio: self.boundary_ratio,
            dropped: self.dropped.len(),
            params: self.params,
            admissibility: self.admissibility.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.doc())?)
    }
}

/// Per-slot multipliers `factor(λ_slot)` for a layout.
fn slot_symbol(layout: &Layout, factor: impl Fn(f64) -> f64) -> Vec<f64> {
    layout.eigenvalues().into_iter().map(factor).collect()
}

fn apply_symbol(f: &HermiteExpansion, sym: &[f64]) -> HermiteExpansion {
    let coeffs = f.coeffs().iter().zip(sym).map(|(c, s)| c * s).collect();
    HermiteExpansion::from_layout(f.layout(), coeffs).expect("layout length")
}

/// Max over cube sub-samples of `|g_j|` for each function `g_j = f ⊙ sym_j`,
/// per cube of the level-`v` tiling.
fn level_sups(
    f: &HermiteExpansion,
    v: u32,
    symbols: &[Vec<f64>],
    subsamples: usize,
    halfwidth: f64,
) -> Vec<(DyadicCube, f64)> {
    let n = f.dimension();
    let cubes = DyadicCube::tiling(v, n, halfwidth);
    let side = 2f64.powi(-(v as i32));
    let lo = (-halfwidth / side).ceil() as i64;
    let per_axis = ((halfwidth / side).floor() as i64 - lo) as usize;
    let axis: Vec<f64> = (0..per_axis * subsamples)
        .map(|j| {
            let c = (j / subsamples) as i64 + lo;
            (c as f64 + ((j % subsamples) as f64 + 0.5) / subsamples as f64) * side
        })
        .collect();
    let table = axis_table(&axis, f.degree_cap());
    let sups: Vec<Vec<f64>> = symbols
        .par_iter()
        .map(|sym| {
            let vals = tensor_values(&apply_symbol(f, sym), &table, &table);
            let mut out = vec![0.0f64; cubes.len()];
            let len = axis.len();
            for (i, v) in vals.iter().enumerate() {
                let c = match n {
                    1 => i / subsamples,
                    _ => (i / len / subsamples) * per_axis + (i % len) / subsamples,
                };
                out[c] = out[c].max(v.abs());
            }
            out
        })
        .collect();
    cubes
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let s = sups.iter().map(|s| s[i]).fold(0.0, f64::max);
            (c, s)
        })
        .collect()
}

/// Gauss-Legendre order used to integrate degree-`D` products over a cube.
fn cube_order(side: f64, degree_cap: usize) -> usize {
    let w = (2.0 * degree_cap as f64 + 1.0).sqrt();
    ((12.0 + 2.0 * side * w).ceil() as usize).clamp(12, 96)
}

/// `∫_Q (f ⊙ sym_j) h_α` for every slot `α` and every symbol `j`.
fn cube_projections(
    f: &HermiteExpansion,
    cube: &DyadicCube,
    symbols: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let d = f.degree_cap();
    let side = cube.side();
    let gl = GaussLegendre::new(cube_order(side, d))?;
    let corner = cube.corner();
    let rule: Vec<(Vec<f64>, Vec<f64>)> = corner
        .iter()
        .map(|&a| gl.on_interval(a, a + side).unzip())
        .collect();
    let layout = f.layout();
    match f.dimension() {
        1 => {
            let (x, w) = &rule[0];
            let r = axis_table(x, d);
            let mut s = DMatrix::<f64>::zeros(d + 1, symbols.len());
            for (j, sym) in symbols.iter().enumerate() {
                for (a, (c, m)) in f.coeffs().iter().zip(sym).enumerate() {
                    s[(a, j)] = c * m;
                }
            }
            let mut g = &r * s;
            for (i, wi) in w.iter().enumerate() {
                g.row_mut(i).scale_mut(*wi);
            }
            let c = r.transpose() * g;
            Ok((0..symbols.len())
                .map(|j| c.column(j).iter().copied().collect())
                .collect())
        }
        _ => {
            let (x, wx) = &rule[0];
            let (y, wy) = &rule[1];
            let rx = axis_table(x, d);
            let ry = axis_table(y, d);
            symbols
                .iter()
                .map(|sym| {
                    let cm = coeff_matrix(&apply_symbol(f, sym));
                    let mut g = &rx * cm * ry.transpose();
                    for i in 0..wx.len() {
                        for k in 0..wy.len() {
                            g[(i, k)] *= wx[i] * wy[k];
                        }
                    }
                    let p = rx.transpose() * g * &ry;
                    Ok(from_coeff_matrix(layout, &p).coeffs().to_vec())
                })
                .collect()
        }
    }
}

/// Constructive molecular decomposition: `s_Q` from sampled sups of
/// `(t√H)^m e^{-t√H} f` over `Q × [2^{-v}, 2^{-v+1})`, molecules from the
/// localized Calderón integral over the same window, and the zero-level
/// molecules from the lowpass terms.
pub fn molecular_decompose(
    f: &HermiteExpansion,
    params: &DecomposeParams,
    alpha: &ExponentField,
    p: &ExponentField,
    q: &ExponentField,
    scheme: &SamplingScheme,
) -> Result<Decomposition> {
    let n = scheme.dimension();
    if f.dimension() != n {
        return Err(Error::input("expansion and scheme dimensions differ"));
    }
    if params.v_max == 0 {
        return Err(Error::domain("v_max must be at least 1"));
    }
    let admissibility = admissibility(params, alpha, p, q, n);
    let d = scheme.degree_cap();
    let f = f.with_degree_cap(d)?;
    let layout = f.layout();
    let l = params.l();
    let halfwidth = scheme.grid().halfwidth;
    let subsamples = scheme.params().cube_subsamples;
    let f_norm = f.l2_norm();

    let empty = |remainder: f64| Decomposition {
        params: *params,
        coefficients: CoefficientSet::new(),
        molecules: Vec::new(),
        dropped: Vec::new(),
        residual_l2: 0.0,
        calderon_remainder: remainder,
        boundary_ratio: 0.0,
        admissibility: admissibility.clone(),
    };
    if f.is_zero() {
        return Ok(empty(0.0));
    }

    let t_floor = 2f64.powi(-(params.v_max as i32));
    let remainder_sym = slot_symbol(&layout, |lam| gamma_lr(l as f64, 2.0 * lam.sqrt() * t_floor));
    let calderon_remainder = f
        .coeffs()
        .iter()
        .zip(&remainder_sym)
        .map(|(c, r)| (c * r) * (c * r))
        .sum::<f64>()
        .sqrt()
        / f_norm;
    if calderon_remainder > REMAINDER_TOL {
        return Err(Error::accuracy(format!(
            "Calderón remainder below t = 2^-{} is {calderon_remainder:.3e} of ‖f‖ (tolerance {REMAINDER_TOL:e})",
            params.v_max
        )));
    }

    let sup_time = TimeGrid::new(params.v_max, scheme.params().nodes_per_level)?;
    let cal_time = calderon_time_grid(params.v_max)?;
    let lowpass = slot_symbol(&layout, |lam| (-lam.sqrt()).exp());

    // s_Q for every cube at every level
    let mut sups: Vec<(DyadicCube, f64)> = level_sups(&f, 0, std::slice::from_ref(&lowpass), subsamples, halfwidth);
    for v in 1..=params.v_max {
        let syms: Vec<Vec<f64>> = sup_time
            .level_nodes(v)
            .map(|node| slot_symbol(&layout, |lam| poisson_symbol(lam, node.t, params.m)))
            .collect();
        let vol_sqrt = 2f64.powf(-(v as f64) * n as f64 / 2.0);
        sups.extend(
            level_sups(&f, v, &syms, subsamples, halfwidth)
                .into_iter()
                .map(|(c, s)| (c, s * vol_sqrt)),
        );
    }
    let s_max = sups.iter().map(|(_, s)| *s).fold(0.0, f64::max);
    if s_max == 0.0 {
        return Ok(empty(calderon_remainder));
    }
    let boundary_ratio = sups
        .iter()
        .filter(|(c, _)| {
            let side = c.side();
            c.k.iter()
                .any(|&k| k as f64 * side <= -halfwidth || (k + 1) as f64 * side >= halfwidth)
        })
        .map(|(_, s)| *s)
        .fold(0.0, f64::max)
        / s_max;
    let (kept, dropped): (Vec<_>, Vec<_>) = sups
        .into_iter()
        .partition(|(_, s)| *s > 0.0 && *s >= DROP_RATIO * s_max);
    let dropped: Vec<DyadicCube> = dropped.into_iter().map(|(c, _)| c).collect();

    // zero-level molecule symbol: Σ_{k<l} 2^k/k! λ^{k/2} e^{-√λ}, then λ^{-M/2} for b
    let zero_sym = slot_symbol(&layout, |lam| {
        calderon_lowpass_symbol(lam, l) * (2.0 * lam.sqrt()).exp() * (-lam.sqrt()).exp()
            * lam.powf(-(params.big_m as f64) / 2.0)
    });
    let cl = calderon_constant(l);
    let molecules: Vec<MoleculeDescriptor> = kept
        .par_iter()
        .map(|(cube, s)| {
            let b_coeffs: Vec<f64> = if cube.v == 0 {
                let proj = cube_projections(&f, cube, std::slice::from_ref(&lowpass))?;
                proj[0]
                    .iter()
                    .zip(&zero_sym)
                    .map(|(c, z)| c * z / s)
                    .collect()
            } else {
                let nodes: Vec<_> = cal_time.level_nodes(cube.v).copied().collect();
                let syms: Vec<Vec<f64>> = nodes
                    .iter()
                    .map(|node| slot_symbol(&layout, |lam| poisson_symbol(lam, node.t, params.m)))
                    .collect();
                let proj = cube_projections(&f, cube, &syms)?;
                let lams = layout.eigenvalues();
                (0..layout.len())
                    .map(|a| {
                        nodes
                            .iter()
                            .zip(&proj)
                            .map(|(node, pj)| {
                                node.weight
                                    * node.t.powi(params.big_m as i32)
                                    * poisson_symbol(lams[a], node.t, params.big_n)
                                    * pj[a]
                            })
                            .sum::<f64>()
                            * cl
                            / s
                    })
                    .collect()
            };
            Ok(MoleculeDescriptor {
                cube: cube.clone(),
                big_m: params.big_m,
                big_n: params.big_n,
                b: HermiteExpansion::from_layout(layout, b_coeffs)?,
                zero_level: cube.v == 0,
                size_constant: 0.0,
            })
        })
        .collect::<Result<_>>()?;

    let sampling = AuditSampling::for_scheme(scheme);
    let audits = validate_molecules(&molecules, &sampling)?;
    let molecules: Vec<MoleculeDescriptor> = molecules
        .into_iter()
        .zip(audits)
        .map(|(mut m, a)| {
            m.size_constant = a.max_ratio;
            m
        })
        .collect();

    let mut coefficients = CoefficientSet::new();
    for (c, s) in &kept {
        coefficients.insert(c.clone(), *s);
    }
    let synth = synthesize_molecules(&coefficients, &molecules)?;
    let residual_l2 = synth.difference(&f)?.l2_norm() / f_norm;

    Ok(Decomposition {
        params: *params,
        coefficients,
        molecules,
        dropped,
        residual_l2,
        calderon_remainder,
        boundary_ratio,
        admissibility,
    })
}

/// Sample points for molecule audits: the spatial grid plus a local tensor
/// grid of `local_points` per axis on `[x_Q − 2ℓ, x_Q + 3ℓ]`, and
/// `time_points` geometric times per audited window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSampling {
    pub grid: Grid,
    pub local_points: usize,
    pub time_points: usize,
}

impl AuditSampling {
    pub fn for_scheme(scheme: &SamplingScheme) -> Self {
        Self {
            grid: *scheme.grid(),
            local_points: 21,
            time_points: 9,
        }
    }

    /// Doubles every sampling density; the refined points contain the
    /// original ones.
    pub fn refined(&self) -> Self {
        Self {
            grid: self.grid.refined(2),
            local_points: 2 * self.local_points - 1,
            time_points: 2 * self.time_points - 1,
        }
    }

    /// Repeated [`refined`](Self::refined) until the density grows by at
    /// least `factor`.
    pub fn refined_by(&self, factor: usize) -> Self {
        let mut out = *self;
        let mut f = 1;
        while f < factor {
            out = out.refined();
            f *= 2;
        }
        out
    }

    fn local_axis(&self, corner: f64, side: f64) -> Vec<f64> {
        let n = self.local_points.max(2);
        (0..n)
            .map(|i| corner - 2.0 * side + 5.0 * side * i as f64 / (n - 1) as f64)
            .collect()
    }
}

/// Sup ratio of `(√H)^k b` against the molecule envelope, per order `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeAudit {
    pub v: u32,
    pub k: Vec<i64>,
    pub ratios: Vec<(u32, f64)>,
    pub max_ratio: f64,
    pub size_constant: f64,
    pub passes: bool,
}

/// Envelope distance factor `1 + |x − x_Q|/ℓ` at the audit points: grid
/// points followed by the local tensor points.
pub(crate) fn audit_distances(sampling: &AuditSampling, cube: &DyadicCube) -> Vec<f64> {
    let n = cube.dimension();
    let corner = cube.corner();
    let side = cube.side();
    let local: Vec<Vec<f64>> = corner
        .iter()
        .map(|&c| sampling.local_axis(c, side))
        .collect();
    let mut coords: Vec<[f64; 2]> = sampling.grid.points().collect();
    match n {
        1 => coords.extend(local[0].iter().map(|&x| [x, 0.0])),
        _ => {
            for &x in &local[0] {
                for &y in &local[1] {
                    coords.push([x, y]);
                }
            }
        }
    }
    coords
        .iter()
        .map(|p| {
            let r2: f64 = (0..n).map(|i| (p[i] - corner[i]).powi(2)).sum();
            1.0 + r2.sqrt() / side
        })
        .collect()
}

/// Values of each expansion in `es` (all sharing one layout) at the audit
/// points of `cube`.
pub(crate) fn values_at_audit_points(
    es: &[HermiteExpansion],
    sampling: &AuditSampling,
    cube: &DyadicCube,
    grid_table: &DMatrix<f64>,
) -> Vec<Vec<f64>> {
    let n = cube.dimension();
    let corner = cube.corner();
    let side = cube.side();
    let local: Vec<DMatrix<f64>> = corner
        .iter()
        .map(|&c| axis_table(&sampling.local_axis(c, side), es[0].degree_cap()))
        .collect();
    match n {
        1 => {
            let d = es[0].degree_cap();
            let mut b = DMatrix::<f64>::zeros(d + 1, es.len());
            for (j, e) in es.iter().enumerate() {
                b.column_mut(j).copy_from_slice(e.coeffs());
            }
            let g = grid_table.columns(0, d + 1) * &b;
            let lv = local[0].columns(0, d + 1) * &b;
            (0..es.len())
                .map(|j| g.column(j).iter().chain(lv.column(j).iter()).copied().collect())
                .collect()
        }
        _ => es
            .iter()
            .map(|e| {
                let mut v = tensor_values(e, grid_table, grid_table);
                v.extend(tensor_values(e, &local[0], &local[1]));
                v
            })
            .collect(),
    }
}

/// Audits every molecule's size condition on the sampling points.
pub fn validate_molecules(
    mols: &[MoleculeDescriptor],
    sampling: &AuditSampling,
) -> Result<Vec<MoleculeAudit>> {
    if mols.is_empty() {
        return Ok(Vec::new());
    }
    let d = mols.iter().map(|m| m.b.degree_cap()).max().unwrap_or(0);
    let grid_table = axis_table(&sampling.grid.axis(), d);
    Ok(mols
        .par_iter()
        .map(|mol| {
            let n = mol.cube.dimension();
            let orders: Vec<u32> = mol.required_orders().collect();
            let es: Vec<HermiteExpansion> = orders
                .iter()
                .map(|&k| mol.b.map_spectral(|lam| lam.powf(k as f64 / 2.0)))
                .collect();
            let vals = values_at_audit_points(&es, sampling, &mol.cube, &grid_table);
            let dist = audit_distances(sampling, &mol.cube);
            let side = mol.cube.side();
            let inv_sqrt_vol = side.powf(-(n as f64) / 2.0);
            let decay = -(n as f64) - mol.big_n as f64;
            let ratios: Vec<(u32, f64)> = orders
                .iter()
                .zip(&vals)
                .map(|(&k, v)| {
                    let scale = side.powi(mol.big_m as i32 - k as i32) * inv_sqrt_vol;
                    let r = v
                        .iter()
                        .zip(&dist)
                        .map(|(val, dq)| val.abs() / (scale * dq.powf(decay)))
                        .fold(0.0, f64::max);
                    (k, r)
                })
                .collect();
            let max_ratio = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
            MoleculeAudit {
                v: mol.cube.v,
                k: mol.cube.k.clone(),
                passes: ratios.iter().all(|r| r.1 <= mol.size_constant),
                ratios,
                max_ratio,
                size_constant: mol.size_constant,
            }
        })
        .collect())
}

/// Audits a single molecule.
pub fn validate_molecule(mol: &MoleculeDescriptor, sampling: &AuditSampling) -> Result<MoleculeAudit> {
    Ok(validate_molecules(std::slice::from_ref(mol), sampling)?.remove(0))
}

/// Sup over `t ∈ [ℓ/16, ℓ]` and the audit points of
/// `|(t√H)^m e^{-t√H} m_Q(x)|` divided by
/// `|Q|^{-1/2} (t/ℓ)^{m−N−n} (1 + |x − x_Q|/ℓ)^{-n−N}`.
pub fn heat_decay_audit(mol: &MoleculeDescriptor, m: u32, sampling: &AuditSampling) -> f64 {
    let n = mol.cube.dimension();
    let side = mol.cube.side();
    let a = mol.molecule();
    let steps = sampling.time_points.max(2);
    let times: Vec<f64> = (0..steps)
        .map(|i| side * 2f64.powf(-4.0 * i as f64 / (steps - 1) as f64))
        .collect();
    let es: Vec<HermiteExpansion> = times
        .iter()
        .map(|&t| a.map_spectral(|lam| poisson_symbol(lam, t, m)))
        .collect();
    let grid_table = axis_table(&sampling.grid.axis(), a.degree_cap());
    let vals = values_at_audit_points(&es, sampling, &mol.cube, &grid_table);
    let dist = audit_distances(sampling, &mol.cube);
    let inv_sqrt_vol = side.powf(-(n as f64) / 2.0);
    let t_exp = m as f64 - mol.big_n as f64 - n as f64;
    let decay = -(n as f64) - mol.big_n as f64;
    times
        .iter()
        .zip(&vals)
        .map(|(t, v)| {
            let scale = inv_sqrt_vol * (t / side).powf(t_exp);
            v.iter()
                .zip(&dist)
                .map(|(val, dq)| val.abs() / (scale * dq.powf(decay)))
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// The `per_level` molecules with largest `s_Q` on each level.
pub fn top_molecules(dec: &Decomposition, per_level: usize) -> Vec<&MoleculeDescriptor> {
    let mut out = Vec::new();
    for v in 0..=dec.params.v_max {
        let mut level: Vec<&MoleculeDescriptor> =
            dec.molecules.iter().filter(|m| m.cube.v == v).collect();
        level.sort_by(|a, b| {
            dec.coefficients
                .get(&b.cube)
                .partial_cmp(&dec.coefficients.get(&a.cube))
                .unwrap()
                .then_with(|| a.cube.cmp(&b.cube))
        });
        out.extend(level.into_iter().take(per_level));
    }
    out
}

/// `Σ_Q s_Q (√H)^M b_Q`.
pub fn synthesize_molecules(
    s: &CoefficientSet,
    mols: &[MoleculeDescriptor],
) -> Result<HermiteExpansion> {
    let mol_cubes: BTreeSet<&DyadicCube> = mols.iter().map(|m| &m.cube).collect();
    let set_cubes: BTreeSet<&DyadicCube> = s.entries.keys().collect();
    if mol_cubes.len() != mols.len() {
        return Err(Error::input("duplicate cube in molecule list"));
    }
    let orphans: Vec<String> = mol_cubes
        .symmetric_difference(&set_cubes)
        .map(|c| format!("(v={}, k={:?})", c.v, c.k))
        .collect();
    if !orphans.is_empty() {
        return Err(Error::input(format!(
            "coefficients and molecules are not aligned; orphan cubes: {}",
            orphans.join(", ")
        )));
    }
    let Some(first) = mols.first() else {
        let n = s.dimension().unwrap_or(1);
        return HermiteExpansion::zeros(n, 0);
    };
    let mut out = HermiteExpansion::zeros(first.b.dimension(), first.b.degree_cap())?;
    for m in mols {
        out.axpy(s.get(&m.cube), &m.molecule())?;
    }
    Ok(out)
}
