//! Smooth atoms on dyadic cubes: construction, support/moment/decay
//! validation, heat-decay audits and the atomic embedding ratio.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{audit_distances, values_at_audit_points, AuditSampling};
use crate::error::{Error, Result};
use crate::grid::{axis_table, Grid};
use crate::hermite::{HermiteExpansion, Layout};
use crate::operators::SpaceParams;
use crate::quadrature::GaussLegendre;
use crate::scheme::SamplingScheme;
use crate::semigroup::poisson_symbol;
use crate::tlspace::{seq_norm, tl_norm, CoefficientSet, DyadicCube};
use crate::varexp::eta;

/// Finite-difference step as a fraction of the cube side.
pub const FD_STEP_FRACTION: f64 = 1.0 / 64.0;
/// Tolerance on vanishing moments relative to `∫|x^γ a|`.
pub const MOMENT_TOL: f64 = 1e-10;

/// Ascending-coefficient polynomial evaluation.
fn poly_eval(c: &[f64], u: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, a| acc * u + a)
}

/// A compactly supported smooth atom `a(x) = scale Π_i ψ(u_i) P(u_i)`,
/// `u_i = (x_i − c_i)/w`, on `3Q` (centre `c` of `Q`, half-width `w = 1.5ℓ`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothAtom {
    pub cube: DyadicCube,
    /// Vanishing moments up to this order (levels `v ≥ 1`).
    #[serde(rename = "K")]
    pub k_moment: u32,
    /// Derivative order of the decay condition.
    #[serde(rename = "L")]
    pub l_smooth: u32,
    pub m_tilde: f64,
    pub scale: f64,
    /// Per-axis polynomial factor `P(u)`, ascending coefficients.
    pub poly: Vec<f64>,
}

impl SmoothAtom {
    fn bump_power(&self) -> i32 {
        self.l_smooth as i32 + 3
    }

    fn halfwidth(&self) -> f64 {
        1.5 * self.cube.side()
    }

    fn centres(&self) -> Vec<f64> {
        self.cube.center()
    }

    /// Un-normalized per-axis factor `ψ(u) P(u)`.
    fn factor(&self, axis: usize, x: f64) -> f64 {
        let u = (x - self.centres()[axis]) / self.halfwidth();
        if u.abs() >= 1.0 {
            return 0.0;
        }
        (1.0 - u * u).powi(self.bump_power()) * poly_eval(&self.poly, u)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        self.scale
            * x.iter()
                .enumerate()
                .map(|(i, &xi)| self.factor(i, xi))
                .product::<f64>()
    }

    /// Samples on `grid`.
    pub fn sample(&self, grid: &Grid) -> Vec<f64> {
        grid.sample(|x| self.value(x))
    }

    /// `d^r/dx^r` of the per-axis factor by the centred difference at step `h`.
    fn factor_fd(&self, axis: usize, x: f64, r: u32, h: f64) -> f64 {
        let mut s = 0.0;
        let mut binom = 1.0;
        for i in 0..=r {
            let off = (r as f64 / 2.0 - i as f64) * h;
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            s += sign * binom * self.factor(axis, x + off);
            binom = binom * (r - i) as f64 / (i + 1) as f64;
        }
        s / h.powi(r as i32)
    }

    /// Exact `d^r/dx^r` of the per-axis factor from its polynomial form.
    pub fn factor_derivative_exact(&self, axis: usize, x: f64, r: u32) -> f64 {
        let w = self.halfwidth();
        let u = (x - self.centres()[axis]) / w;
        if u.abs() >= 1.0 {
            return 0.0;
        }
        // (1 - u^2)^p P(u) as a polynomial in u
        let mut c = vec![1.0];
        for _ in 0..self.bump_power() {
            let mut next = vec![0.0; c.len() + 2];
            for (i, a) in c.iter().enumerate() {
                next[i] += a;
                next[i + 2] -= a;
            }
            c = next;
        }
        let mut prod = vec![0.0; c.len() + self.poly.len() - 1];
        for (i, a) in c.iter().enumerate() {
            for (j, b) in self.poly.iter().enumerate() {
                prod[i + j] += a * b;
            }
        }
        for _ in 0..r {
            prod = prod
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, a)| a * i as f64)
                .collect();
            if prod.is_empty() {
                return 0.0;
            }
        }
        poly_eval(&prod, u) / w.powi(r as i32)
    }

    /// Samples per axis for the decay check: step `ℓ/64` across `3Q`.
    fn decay_axes(&self) -> (Vec<Vec<f64>>, f64) {
        let h = self.cube.side() * FD_STEP_FRACTION;
        let w = self.halfwidth();
        let steps = (2.0 * w / h).round() as usize;
        let axes = self
            .centres()
            .iter()
            .map(|&c| (0..=steps).map(|i| c - w + i as f64 * h).collect())
            .collect();
        (axes, h)
    }

    /// `max_{|γ| ≤ L, x} |D^γ a(x)| / (2^{|γ|v} |Q|^{1/2} η_{v,m̃}(x − x_Q))`
    /// with finite differences, for the atom scaled by `scale`.
    fn decay_ratio_with_scale(&self, scale: f64) -> f64 {
        let n = self.cube.dimension();
        let v = self.cube.v;
        let (axes, h) = self.decay_axes();
        let corner = self.cube.corner();
        let sqrt_vol = self.cube.volume().sqrt();
        let l = self.l_smooth;
        // per-axis derivative tables: tables[axis][r][i]
        let tables: Vec<Vec<Vec<f64>>> = axes
            .iter()
            .enumerate()
            .map(|(ax, pts)| {
                (0..=l)
                    .map(|r| pts.iter().map(|&x| self.factor_fd(ax, x, r, h)).collect())
                    .collect()
            })
            .collect();
        let envelope = |x: &[f64], order: u32| -> f64 {
            let d: Vec<f64> = x.iter().zip(&corner).map(|(a, b)| a - b).collect();
            2f64.powi((order * v) as i32) * sqrt_vol * eta(v, self.m_tilde, &d)
        };
        match n {
            1 => (0..=l)
                .map(|r| {
                    axes[0]
                        .iter()
                        .enumerate()
                        .map(|(i, &x)| (scale * tables[0][r as usize][i]).abs() / envelope(&[x], r))
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max),
            _ => {
                let mut worst = 0.0f64;
                for r1 in 0..=l {
                    for r2 in 0..=(l - r1) {
                        for (i, &x) in axes[0].iter().enumerate() {
                            let a = tables[0][r1 as usize][i];
                            if a == 0.0 {
                                continue;
                            }
                            for (j, &y) in axes[1].iter().enumerate() {
                                let val = scale * a * tables[1][r2 as usize][j];
                                worst = worst.max(val.abs() / envelope(&[x, y], r1 + r2));
                            }
                        }
                    }
                }
                worst
            }
        }
    }

    /// Expansion to degree `degree_cap` by Gauss-Legendre on `3Q`, with the
    /// relative `L^2` mass left above the cap.
    pub fn expansion(&self, degree_cap: usize) -> Result<(HermiteExpansion, f64)> {
        let n = self.cube.dimension();
        let w = self.halfwidth();
        let poly_degree = 2 * self.bump_power() as usize + self.poly.len();
        let order = ((poly_degree as f64 / 2.0 + 16.0 + 4.0 * w * (2.0 * degree_cap as f64 + 1.0).sqrt())
            .ceil() as usize)
            .clamp(24, 1024);
        let gl = GaussLegendre::new(order)?;
        let per_axis: Vec<(Vec<f64>, f64)> = self
            .centres()
            .iter()
            .enumerate()
            .map(|(ax, &c)| {
                let (x, wts): (Vec<f64>, Vec<f64>) = gl.on_interval(c - w, c + w).unzip();
                let vals: Vec<f64> = x.iter().map(|&xi| self.factor(ax, xi)).collect();
                let table = axis_table(&x, degree_cap);
                let proj: Vec<f64> = (0..=degree_cap)
                    .map(|a| (0..x.len()).map(|i| wts[i] * vals[i] * table[(i, a)]).sum())
                    .collect();
                let norm2: f64 = (0..x.len()).map(|i| wts[i] * vals[i] * vals[i]).sum();
                (proj, norm2)
            })
            .collect();
        let layout = Layout::new(n, degree_cap)?;
        let coeffs: Vec<f64> = (0..layout.len())
            .map(|s| match n {
                1 => self.scale * per_axis[0].0[s],
                _ => {
                    let [a, b] = layout.entries_at(s);
                    self.scale * per_axis[0].0[a] * per_axis[1].0[b]
                }
            })
            .collect();
        let e = HermiteExpansion::from_layout(layout, coeffs)?;
        let total = self.scale * self.scale * per_axis.iter().map(|p| p.1).product::<f64>();
        let captured = e.l2_norm().powi(2);
        let leakage = if total > 0.0 {
            (1.0 - captured / total).max(0.0).sqrt()
        } else {
            0.0
        };
        Ok((e, leakage))
    }
}

/// Monic `P_{K+1}` orthogonal to degrees `≤ K` under `(1 − u^2)^p` on
/// `[−1, 1]`, by Gram-Schmidt over monomials.
fn orthogonal_poly(k: u32, p: i32) -> Result<Vec<f64>> {
    let deg = k as usize + 1;
    let gl = GaussLegendre::new(deg + p as usize + 8)?;
    let nodes: Vec<(f64, f64)> = gl.on_interval(-1.0, 1.0).collect();
    let inner = |a: &[f64], b: &[f64]| -> f64 {
        nodes
            .iter()
            .map(|&(u, w)| w * (1.0 - u * u).powi(p) * poly_eval(a, u) * poly_eval(b, u))
            .sum()
    };
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for d in 0..=deg {
        let mut m = vec![0.0; d + 1];
        m[d] = 1.0;
        let mut q = m.clone();
        for b in &basis {
            let c = inner(&m, b) / inner(b, b);
            for (i, bi) in b.iter().enumerate() {
                q[i] -= c * bi;
            }
        }
        let norm = inner(&q, &q);
        if !(norm > 1e-300) {
            return Err(Error::Construction(format!(
                "degenerate orthogonal polynomial of degree {d}"
            )));
        }
        basis.push(q);
    }
    Ok(basis.pop().expect("nonempty"))
}

/// Builds the atom for `cube` with moment order `K`, smoothness `L` and
/// decay exponent `m̃`, scaled so the decay condition holds with constant 1.
pub fn make_smooth_atom(cube: DyadicCube, k: u32, l: u32, m_tilde: f64) -> Result<SmoothAtom> {
    let n = cube.dimension();
    if !(m_tilde > n as f64) {
        return Err(Error::domain(format!("decay exponent m̃ = {m_tilde} must exceed n = {n}")));
    }
    let poly = if cube.v == 0 {
        vec![1.0]
    } else {
        orthogonal_poly(k, l as i32 + 3)?
    };
    let mut atom = SmoothAtom {
        cube,
        k_moment: k,
        l_smooth: l,
        m_tilde,
        scale: 1.0,
        poly,
    };
    let raw = atom.decay_ratio_with_scale(1.0);
    if !(raw.is_finite() && raw > 0.0) {
        return Err(Error::Construction(format!(
            "atom on cube (v={}, k={:?}) cannot be normalized (raw ratio {raw})",
            atom.cube.v, atom.cube.k
        )));
    }
    atom.scale = 1.0 / raw;
    Ok(atom)
}

/// Default `m̃ = M + n + 1` with `M = n`.
pub fn default_m_tilde(n: usize) -> f64 {
    (2 * n + 1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomAudit {
    pub support_ok: bool,
    pub max_outside: f64,
    /// `(γ, |∫x^γ a| / ∫|x^γ a|)`.
    pub moments: Vec<(Vec<u32>, f64)>,
    pub moments_ok: bool,
    pub decay_ratio: f64,
    pub decay_ok: bool,
}

impl AtomAudit {
    pub fn passes(&self) -> bool {
        self.support_ok && self.moments_ok && self.decay_ok
    }
}

/// Checks support on `grid`, vanishing moments by Gauss-Legendre on `3Q`,
/// and the decay condition by finite differences at step `ℓ/64`.
pub fn validate_atom(atom: &SmoothAtom, grid: &Grid) -> Result<AtomAudit> {
    let n = atom.cube.dimension();
    let c = atom.centres();
    let w = atom.halfwidth();
    let max_outside = grid
        .points()
        .filter(|p| (0..n).any(|i| (p[i] - c[i]).abs() >= w))
        .map(|p| atom.value(&p[..n]).abs())
        .fold(0.0, f64::max);
    let mut moments = Vec::new();
    if atom.cube.v >= 1 {
        let gl = GaussLegendre::new(2 * atom.bump_power() as usize + atom.poly.len() + 16)?;
        let axis_moments: Vec<Vec<(f64, f64)>> = (0..n)
            .map(|ax| {
                let nodes: Vec<(f64, f64)> = gl.on_interval(c[ax] - w, c[ax] + w).collect();
                (0..=atom.k_moment)
                    .map(|g| {
                        let mut s = 0.0;
                        let mut a = 0.0;
                        for &(x, wt) in &nodes {
                            let v = wt * x.powi(g as i32) * atom.factor(ax, x);
                            s += v;
                            a += v.abs();
                        }
                        (s, a)
                    })
                    .collect()
            })
            .collect();
        let k = atom.k_moment;
        match n {
            1 => {
                for g in 0..=k {
                    let (s, a) = axis_moments[0][g as usize];
                    moments.push((vec![g], s.abs() / a));
                }
            }
            _ => {
                for g1 in 0..=k {
                    for g2 in 0..=(k - g1) {
                        let (s1, a1) = axis_moments[0][g1 as usize];
                        let (s2, a2) = axis_moments[1][g2 as usize];
                        moments.push((vec![g1, g2], (s1 * s2).abs() / (a1 * a2)));
                    }
                }
            }
        }
    }
    let decay_ratio = atom.decay_ratio_with_scale(atom.scale);
    Ok(AtomAudit {
        support_ok: max_outside == 0.0,
        max_outside,
        moments_ok: moments.iter().all(|m| m.1 <= MOMENT_TOL),
        moments,
        decay_ratio,
        decay_ok: decay_ratio <= 1.0 + 1e-9,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AtomHeatAudit {
    /// Sup ratio for `t ≤ 2^{-v}` against `|Q|^{-1/2}(1+|x−x_Q|/ℓ)^{-n−K}`.
    pub small_t: f64,
    /// Sup ratio for `2^{-v} < t ≤ 1` against
    /// `|Q|^{-1/2}(ℓ/t)^L (1+|x−x_Q|/t)^{-n−K}`; 0 when the range is empty.
    pub large_t: f64,
    pub leakage: f64,
}

/// Sup ratios of `(t√H)^m e^{-t√H} a` against both heat-decay envelopes.
pub fn atom_heat_decay_audit(
    atom: &SmoothAtom,
    m: u32,
    scheme: &SamplingScheme,
    sampling: &AuditSampling,
) -> Result<AtomHeatAudit> {
    let (e, leakage) = atom.expansion(scheme.degree_cap())?;
    let n = atom.cube.dimension();
    let side = atom.cube.side();
    let steps = sampling.time_points.max(2);
    let small: Vec<f64> = (0..steps)
        .map(|i| side * 2f64.powf(-4.0 * i as f64 / (steps - 1) as f64))
        .collect();
    let large: Vec<f64> = (1..steps)
        .map(|i| side * 2f64.powf(4.0 * i as f64 / (steps - 1) as f64))
        .filter(|&t| t <= 1.0)
        .collect();
    let table = axis_table(&sampling.grid.axis(), e.degree_cap());
    // |x − x_Q| at the audit points
    let coords: Vec<f64> = audit_distances(sampling, &atom.cube)
        .into_iter()
        .map(|d| (d - 1.0) * side)
        .collect();
    let inv_sqrt_vol = side.powf(-(n as f64) / 2.0);
    let decay = -(n as f64) - atom.k_moment as f64;
    let sup = |times: &[f64], env: &dyn Fn(f64, f64) -> f64| -> f64 {
        if times.is_empty() {
            return 0.0;
        }
        let es: Vec<HermiteExpansion> = times
            .iter()
            .map(|&t| e.map_spectral(|lam| poisson_symbol(lam, t, m)))
            .collect();
        let vals = values_at_audit_points(&es, sampling, &atom.cube, &table);
        times
            .iter()
            .zip(&vals)
            .map(|(&t, v)| {
                v.iter()
                    .zip(&coords)
                    .map(|(val, &r)| val.abs() / env(t, r))
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    };
    let small_t = sup(&small, &|_, r| inv_sqrt_vol * (1.0 + r / side).powf(decay));
    let large_t = sup(&large, &|t, r| {
        inv_sqrt_vol * (side / t).powi(atom.l_smooth as i32) * (1.0 + r / t).powf(decay)
    });
    Ok(AtomHeatAudit {
        small_t,
        large_t,
        leakage,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    pub tl_norm: f64,
    pub seq_norm: f64,
    pub ratio: Option<f64>,
    /// `α⁺ < 0`.
    pub hypothesis_ok: bool,
    pub max_leakage: f64,
    pub notes: Vec<String>,
}

/// Forms `f = Σ s_Q a_Q` in coefficient space and reports
/// `tl_norm(f) / seq_norm(s)`.
pub fn embedding_check(
    s: &CoefficientSet,
    atoms: &[SmoothAtom],
    space: &SpaceParams,
    scheme: &SamplingScheme,
) -> Result<EmbeddingReport> {
    let mut notes = Vec::new();
    let hypothesis_ok = space.alpha.p_plus < 0.0;
    if !hypothesis_ok {
        notes.push(format!(
            "hypothesis α+ < 0 fails (α+ = {})",
            space.alpha.p_plus
        ));
    }
    if s.is_empty() {
        notes.push("empty coefficient set".into());
        return Ok(EmbeddingReport {
            tl_norm: 0.0,
            seq_norm: 0.0,
            ratio: None,
            hypothesis_ok,
            max_leakage: 0.0,
            notes,
        });
    }
    let atom_cubes: Vec<&DyadicCube> = atoms.iter().map(|a| &a.cube).collect();
    let orphans: Vec<String> = s
        .entries
        .keys()
        .filter(|c| !atom_cubes.contains(c))
        .chain(atoms.iter().map(|a| &a.cube).filter(|c| !s.entries.contains_key(c)))
        .map(|c| format!("(v={}, k={:?})", c.v, c.k))
        .collect();
    if !orphans.is_empty() {
        return Err(Error::input(format!(
            "coefficients and atoms are not aligned; orphan cubes: {}",
            orphans.join(", ")
        )));
    }
    let expansions: Vec<(HermiteExpansion, f64)> = atoms
        .par_iter()
        .map(|a| a.expansion(scheme.degree_cap()))
        .collect::<Result<_>>()?;
    let mut f = HermiteExpansion::zeros(scheme.dimension(), scheme.degree_cap())?;
    let mut max_leakage = 0.0f64;
    for (a, (e, leak)) in atoms.iter().zip(&expansions) {
        f.axpy(s.get(&a.cube), e)?;
        max_leakage = max_leakage.max(*leak);
    }
    let tl = tl_norm(&f, &space.alpha, &space.p, &space.q, space.m, scheme)?.total;
    let sq = seq_norm(s, &space.alpha, &space.p, &space.q, scheme.grid())?;
    let ratio = if sq == 0.0 {
        notes.push("zero sequence norm; ratio skipped".into());
        None
    } else {
        Some(tl / sq)
    };
    Ok(EmbeddingReport {
        tl_norm: tl,
        seq_norm: sq,
        ratio,
        hypothesis_ok,
        max_leakage,
        notes,
    })
}

/// Moment and smoothness orders `(K, L)` of atoms for the embedding into
/// `space`: `K = ⌊max{n/r − n, C_log(α)} + ε⌋`,
/// `L = ⌈max{α⁺ + 1, n/r − α⁺} + ε⌉`, `r = min{1, p⁻, q⁻}`.
pub fn embedding_orders(space: &SpaceParams, n: usize) -> (u32, u32) {
    const EPS: f64 = 1e-6;
    let nf = n as f64;
    let r = 1f64.min(space.p.p_minus).min(space.q.p_minus);
    let clog = space.alpha.clog_local.max(space.alpha.clog_infty);
    let a_plus = space.alpha.p_plus;
    let k = ((nf / r - nf).max(clog) + EPS).floor().max(0.0) as u32;
    let l = ((a_plus + 1.0).max(nf / r - a_plus) + EPS).ceil().max(1.0) as u32;
    (k, l.max(k + 1))
}

/// Random coefficients on `count` distinct cubes of levels `0..=v_max`
/// inside `[-active, active]^n`, each with its atom.
pub fn random_atomic_set(
    rng: &mut impl Rng,
    n: usize,
    v_max: u32,
    count: usize,
    active: f64,
    k: u32,
    l: u32,
) -> Result<(CoefficientSet, Vec<SmoothAtom>)> {
    let mut set = CoefficientSet::new();
    while set.len() < count {
        let v = rng.random_range(0..=v_max);
        let per = (active * 2f64.powi(v as i32)) as i64;
        let idx: Vec<i64> = (0..n).map(|_| rng.random_range(-per..per)).collect();
        let s = rng.random_range(-1.0..1.0);
        set.insert(DyadicCube::new(v, idx)?, s);
    }
    let atoms = set
        .entries
        .keys()
        .cloned()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|c| make_smooth_atom(c, k, l, default_m_tilde(n)))
        .collect::<Result<_>>()?;
    Ok((set, atoms))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::SchemeParams;
    use crate::varexp::ExponentField;

    fn grid() -> Grid {
        Grid::new(1, 8.0, 512).unwrap()
    }

    #[test]
    fn embedding_orders_for_negative_alpha() {
        let space = SpaceParams {
            alpha: ExponentField::constant(-0.3).unwrap(),
            p: ExponentField::constant(2.0).unwrap(),
            q: ExponentField::constant(2.0).unwrap(),
            m: 6,
        };
        assert_eq!(embedding_orders(&space, 1), (0, 2));
        let rough = SpaceParams {
            p: ExponentField::constant(0.5).unwrap(),
            ..space
        };
        // n/r − n = 1, L = max(0.7, 2.3) rounded up
        assert_eq!(embedding_orders(&rough, 1), (1, 3));
    }

    #[test]
    fn level_zero_atom_support_and_scale() {
        let a = make_smooth_atom(DyadicCube::new(0, vec![0]).unwrap(), 2, 3, 3.0).unwrap();
        let audit = validate_atom(&a, &grid()).unwrap();
        assert!(audit.passes(), "{audit:?}");
        assert!(audit.moments.is_empty());
        assert!((audit.decay_ratio - 1.0).abs() < 1e-12);
    }

    #[test]
    fn level_one_moments_vanish() {
        let a = make_smooth_atom(DyadicCube::new(1, vec![3]).unwrap(), 1, 3, 3.0).unwrap();
        let audit = validate_atom(&a, &grid()).unwrap();
        assert!(audit.passes(), "{audit:?}");
        assert_eq!(audit.moments.len(), 2);
    }

    #[test]
    fn sup_bounded_by_corner_envelope() {
        for v in 0..4 {
            let a = make_smooth_atom(DyadicCube::new(v, vec![1]).unwrap(), 1, 2, 3.0).unwrap();
            let g = Grid::new(1, 8.0, 8192).unwrap();
            let sup = a.sample(&g).iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!(sup <= 2f64.powf(v as f64 / 2.0) * (1.0 + 1e-12));
        }
    }

    #[test]
    fn finite_differences_track_exact_derivatives() {
        let a = make_smooth_atom(DyadicCube::new(2, vec![-1]).unwrap(), 2, 4, 3.0).unwrap();
        let h = a.cube.side() * FD_STEP_FRACTION;
        for r in 0..=4 {
            let scale = (0..50)
                .map(|i| a.factor_derivative_exact(0, -0.6 + 0.02 * i as f64, r).abs())
                .fold(0.0, f64::max);
            for i in 0..50 {
                let x = -0.6 + 0.02 * i as f64;
                let fd = a.factor_fd(0, x, r, h);
                let ex = a.factor_derivative_exact(0, x, r);
                assert!((fd - ex).abs() <= 1e-2 * scale, "r={r} x={x} fd={fd} ex={ex}");
            }
        }
    }

    #[test]
    fn two_d_atom_passes() {
        let a = make_smooth_atom(DyadicCube::new(1, vec![0, -1]).unwrap(), 1, 2, 5.0).unwrap();
        let g = Grid::new(2, 4.0, 64).unwrap();
        let audit = validate_atom(&a, &g).unwrap();
        assert!(audit.passes(), "{audit:?}");
        assert_eq!(audit.moments.len(), 3);
    }

    #[test]
    fn expansion_reproduces_atom() {
        let a = make_smooth_atom(DyadicCube::new(1, vec![1]).unwrap(), 1, 3, 3.0).unwrap();
        let (_, coarse) = a.expansion(128).unwrap();
        let (e, leak) = a.expansion(512).unwrap();
        assert!(leak < coarse && leak < 1e-3, "leakage {coarse} -> {leak}");
        for x in [0.3, 0.7, 1.1] {
            assert!((e.value_at(&[x]).unwrap() - a.value(&[x])).abs() < 1e-3 * a.scale);
        }
    }

    #[test]
    fn embedding_ratio_homogeneous_and_unit_atom() {
        let s = SamplingScheme::new(SchemeParams {
            degree_cap: 96,
            points_per_axis: 256,
            ..SchemeParams::default_for(1)
        })
        .unwrap();
        let space = SpaceParams {
            alpha: ExponentField::constant(-0.3).unwrap(),
            p: ExponentField::constant(2.0).unwrap(),
            q: ExponentField::constant(2.0).unwrap(),
            m: 4,
        };
        let cube = DyadicCube::new(0, vec![0]).unwrap();
        let atom = make_smooth_atom(cube.clone(), 1, 3, 3.0).unwrap();
        let mut set = CoefficientSet::new();
        set.insert(cube, 1.0);
        let r = embedding_check(&set, std::slice::from_ref(&atom), &space, &s).unwrap();
        assert!((r.seq_norm - 1.0).abs() < 1e-9);
        assert!((r.ratio.unwrap() - r.tl_norm).abs() < 1e-9);
        assert!(r.hypothesis_ok);
        let r2 = embedding_check(&set.scaled(2.0), &[atom], &space, &s).unwrap();
        assert!((r2.ratio.unwrap() / r.ratio.unwrap() - 1.0).abs() < 1e-9);
        let empty = embedding_check(&CoefficientSet::new(), &[], &space, &s).unwrap();
        assert!(empty.ratio.is_none() && !empty.notes.is_empty());
    }
}
