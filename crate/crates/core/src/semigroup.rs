//! The heat semigroup `e^{-tH}`, the Poisson-type family `(t√H)^k e^{-t√H}`,
//! their kernels, and kernel decay audits.
//!
//! Operators act diagonally on Hermite coefficients. Kernels are only
//! materialized for audits: the heat kernel in closed form (Mehler), the
//! Poisson-type kernels as truncated spectral sums with a tail bound.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::hermite::{hermite_row, HermiteExpansion, MAX_ORDER};
use crate::report::{write_csv, CsvTable};

/// Below this `t` the closed-form Mehler kernel is refused.
pub const MEHLER_T_MIN: f64 = 1e-8;

/// Relative accuracy demanded of truncated spectral kernel sums.
pub const KERNEL_REL_TOL: f64 = 1e-6;

/// Absolute accuracy demanded of decay-audit ratios: tail bound over envelope.
pub const AUDIT_RATIO_TOL: f64 = 1e-4;

/// Uniform bound `sup_m sup_x |h_m(x)|` (Cramér's inequality).
pub(crate) const HERMITE_SUP: f64 = 1.086_435 * crate::hermite::PI_M_QUARTER;

/// Closed-form Mehler kernel of `e^{-tH}`.
pub fn mehler_kernel(t: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("Mehler kernel needs t > 0, got {t}")));
    }
    if t < MEHLER_T_MIN {
        return Err(Error::Range(format!(
            "t = {t:e} below the closed-form overflow guard {MEHLER_T_MIN:e}; use the spectral path"
        )));
    }
    if x.len() != y.len() {
        return Err(Error::input("kernel points differ in dimension"));
    }
    let n = x.len() as f64;
    let diff2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    let sum2: f64 = x.iter().zip(y).map(|(a, b)| (a + b) * (a + b)).sum();
    // e^{-2t}/(1-e^{-4t}) = 1/(2 sinh 2t); the two exponent ratios are coth t and tanh t.
    let pre = (1.0 / (2.0 * (2.0 * t).sinh())).powf(n / 2.0) / PI.powf(n / 2.0);
    let expo = -0.25 * (diff2 / t.tanh() + sum2 * t.tanh());
    Ok(pre * expo.exp())
}

/// `c_alpha -> e^{-lambda_alpha t} c_alpha`.
pub fn apply_heat(e: &HermiteExpansion, t: f64) -> Result<HermiteExpansion> {
    if !(t >= 0.0) {
        return Err(Error::domain(format!("heat semigroup needs t >= 0, got {t}")));
    }
    Ok(e.map_spectral(|lambda| (-lambda * t).exp()))
}

/// Scalar symbol `(t sqrt(lambda))^k e^{-t sqrt(lambda)}`.
pub fn poisson_symbol(lambda: f64, t: f64, k: u32) -> f64 {
    let u = t * lambda.sqrt();
    u.powi(k as i32) * (-u).exp()
}

/// `c_alpha -> (t sqrt(lambda_alpha))^k e^{-t sqrt(lambda_alpha)} c_alpha`.
pub fn apply_poisson(e: &HermiteExpansion, t: f64, k: u32) -> Result<HermiteExpansion> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("Poisson operator needs t > 0, got {t}")));
    }
    Ok(e.map_spectral(|lambda| poisson_symbol(lambda, t, k)))
}

/// `(√H)^k`, diagonal with symbol `lambda^{k/2}`.
pub fn apply_sqrt_power(e: &HermiteExpansion, k: i32) -> HermiteExpansion {
    e.map_spectral(|lambda| lambda.powf(k as f64 / 2.0))
}

/// A request for `p_{t,k}(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelQuery {
    pub t: f64,
    pub k: u32,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub truncation: usize,
}

impl KernelQuery {
    fn validate(&self) -> Result<()> {
        if !(self.t > 0.0) {
            return Err(Error::domain(format!("kernel query needs t > 0, got {}", self.t)));
        }
        if self.x.len() != self.y.len() || !(1..=2).contains(&self.x.len()) {
            return Err(Error::input("kernel query points must share dimension 1 or 2"));
        }
        if self.truncation > MAX_ORDER {
            return Err(Error::Range(format!(
                "truncation {} above the supported cap {MAX_ORDER}",
                self.truncation
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// Number of multi-indices with `|alpha| = j` in dimension `n`.
fn multiplicity(j: usize, n: usize) -> f64 {
    if n == 1 {
        1.0
    } else {
        (j + 1) as f64
    }
}

/// Bound on `sum_{|alpha| > D} sym(lambda_alpha) |h_alpha(x) h_alpha(y)|` for a
/// symbol `sym(lambda) = (t sqrt(lambda))^k e^{-t sqrt(lambda)}`.
///
/// Terms are summed explicitly until `u = t sqrt(lambda)` passes the peak of
/// `u^{k+1} e^{-u}`; the monotone remainder is bounded by its integral,
/// `int u^k e^{-u} (u/t^2) mult(u) du`, in closed form via incomplete gammas.
pub fn spectral_tail_bound(t: f64, k: u32, n: usize, degree_cap: usize) -> f64 {
    let b2n = HERMITE_SUP.powi(2 * n as i32);
    let mut sum = 0.0;
    let mut j = degree_cap + 1;
    let peak = k as f64 + 4.0;
    loop {
        let lambda = (2 * j + n) as f64;
        let u = t * lambda.sqrt();
        if u > peak {
            break;
        }
        sum += multiplicity(j, n) * poisson_symbol(lambda, t, k);
        j += 1;
    }
    // remainder from index j on, bounded by the integral from j - 1
    let u0 = t * ((2 * j + n) as f64 - 2.0).sqrt();
    let upper = |a: f64| gamma_ur(a, u0) * gamma(a);
    let kf = k as f64;
    let rem = if n == 1 {
        upper(kf + 2.0) / (t * t)
    } else {
        // mult(s) = s + 1 = (u^2/t^2 - n)/2 + 1 <= u^2/(2 t^2) + 1
        upper(kf + 2.0) / (t * t) + upper(kf + 4.0) / (2.0 * t.powi(4))
    };
    b2n * (sum + rem)
}

/// Same bound for the heat symbol `e^{-t lambda}` (geometric series).
pub fn heat_tail_bound(t: f64, n: usize, degree_cap: usize) -> f64 {
    let b2n = HERMITE_SUP.powi(2 * n as i32);
    let first = (-t * (2 * (degree_cap + 1) + n) as f64).exp();
    let q = (-2.0 * t).exp();
    let geo = if n == 1 {
        first / (1.0 - q)
    } else {
        // sum_{j>=D+1} (j+1) q^{j-D-1} first
        let d1 = (degree_cap + 2) as f64;
        first * (d1 / (1.0 - q) + q / ((1.0 - q) * (1.0 - q)))
    };
    b2n * geo
}

fn spectral_sum(
    n: usize,
    degree_cap: usize,
    rows_x: &[Vec<f64>],
    rows_y: &[Vec<f64>],
    symbol: &dyn Fn(f64) -> f64,
) -> f64 {
    let mut s = 0.0;
    match n {
        1 => {
            for m in 0..=degree_cap {
                s += symbol((2 * m + 1) as f64) * rows_x[0][m] * rows_y[0][m];
            }
        }
        _ => {
            for d in 0..=degree_cap {
                let sym = symbol((2 * d + 2) as f64);
                let mut acc = 0.0;
                for j in 0..=d {
                    let a = d - j;
                    acc += rows_x[0][a] * rows_y[0][a] * rows_x[1][j] * rows_y[1][j];
                }
                s += sym * acc;
            }
        }
    }
    s
}

fn rows(p: &[f64], d: usize) -> Vec<Vec<f64>> {
    p.iter().map(|&x| hermite_row(x, d)).collect()
}

/// Truncated spectral sum for `p_{t,k}(x, y)` with a tail bound.
pub fn kernel_p_tk(q: &KernelQuery) -> Result<KernelValue> {
    q.validate()?;
    let n = q.x.len();
    let d = q.truncation;
    let value = spectral_sum(n, d, &rows(&q.x, d), &rows(&q.y, d), &|l| {
        poisson_symbol(l, q.t, q.k)
    });
    let tail_bound = spectral_tail_bound(q.t, q.k, n, d);
    check_tail(value, tail_bound, q.t, d)?;
    Ok(KernelValue { value, tail_bound })
}

/// Truncated spectral sum of the heat kernel `sum e^{-lambda t} h(x) h(y)`.
pub fn heat_kernel_spectral(t: f64, x: &[f64], y: &[f64], degree_cap: usize) -> Result<KernelValue> {
    if !(t > 0.0) {
        return Err(Error::domain(format!("heat kernel needs t > 0, got {t}")));
    }
    let n = x.len();
    let value = spectral_sum(n, degree_cap, &rows(x, degree_cap), &rows(y, degree_cap), &|l| {
        (-l * t).exp()
    });
    let tail_bound = heat_tail_bound(t, n, degree_cap);
    Ok(KernelValue { value, tail_bound })
}

fn check_tail(value: f64, tail: f64, t: f64, d: usize) -> Result<()> {
    if tail > KERNEL_REL_TOL * value.abs() {
        Err(Error::accuracy(format!(
            "spectral tail bound {tail:e} exceeds {KERNEL_REL_TOL:e} of |p| = {:e} at t = {t}, D = {d}; \
             raise the truncation or t",
            value.abs()
        )))
    } else {
        Ok(())
    }
}

/// One sampled decay-audit row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub k: u32,
    pub t: f64,
    pub distance: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// Sampled `lhs / rhs` ratios and their supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayAudit {
    pub label: String,
    pub rows: Vec<AuditRow>,
    pub sup: f64,
}

impl DecayAudit {
    pub fn from_rows(label: impl Into<String>, rows: Vec<AuditRow>) -> Self {
        let sup = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
        Self {
            label: label.into(),
            rows,
            sup,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.sup.is_finite() && self.rows.iter().all(|r| r.ratio.is_finite())
    }

    /// CSV `(k, t, |x-y|, lhs, rhs, ratio)` plus a trailing supremum row.
    pub fn to_csv(&self) -> Result<String> {
        let mut table = CsvTable::new(&["k", "t", "distance", "lhs", "rhs", "ratio"]);
        for r in &self.rows {
            table.push(vec![
                r.k.to_string(),
                r.t.to_string(),
                r.distance.to_string(),
                r.lhs.to_string(),
                r.rhs.to_string(),
                r.ratio.to_string(),
            ]);
        }
        table.push(vec![
            "sup".into(),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
            self.sup.to_string(),
        ]);
        write_csv(&table)
    }
}

/// Sample set for kernel audits: times and a 1-D coordinate list used for
/// both `x` and `y` (the box `[-a, a]^2` for `n = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelAuditGrid {
    pub times: Vec<f64>,
    pub coords: Vec<f64>,
    pub truncation: usize,
}

impl KernelAuditGrid {
    /// `nt` geometric times in `[t_lo, t_hi]` and `nx` equispaced coordinates
    /// in `[-a, a]`, both endpoint-inclusive so that `refined()` nests.
    pub fn new(t_lo: f64, t_hi: f64, nt: usize, a: f64, nx: usize, truncation: usize) -> Self {
        let times = (0..nt)
            .map(|i| t_lo * (t_hi / t_lo).powf(i as f64 / (nt - 1).max(1) as f64))
            .collect();
        let coords = (0..nx)
            .map(|i| -a + 2.0 * a * i as f64 / (nx - 1).max(1) as f64)
            .collect();
        Self {
            times,
            coords,
            truncation,
        }
    }

    /// Inserts midpoints in both the time and coordinate lists.
    pub fn refined(&self) -> Self {
        let mid = |v: &[f64], geometric: bool| {
            let mut out = Vec::with_capacity(2 * v.len());
            for w in v.windows(2) {
                out.push(w[0]);
                out.push(if geometric {
                    (w[0] * w[1]).sqrt()
                } else {
                    0.5 * (w[0] + w[1])
                });
            }
            if let Some(&last) = v.last() {
                out.push(last);
            }
            out
        };
        Self {
            times: mid(&self.times, true),
            coords: mid(&self.coords, false),
            truncation: self.truncation,
        }
    }
}

/// Audit of `|p_{t,k}(x,y)| (t+|x-y|)^{n+k} / t^k` (and for `k = 0` the
/// `t / (t+|x-y|)^{n+1}` envelope), `n = 1`.
pub fn poisson_decay_audit(k: u32, grid: &KernelAuditGrid) -> Result<DecayAudit> {
    let d = grid.truncation;
    let n = 1usize;
    let table: Vec<Vec<f64>> = grid.coords.iter().map(|&x| hermite_row(x, d)).collect();
    let mut out = Vec::new();
    for &t in &grid.times {
        let tail = spectral_tail_bound(t, k, n, d);
        let symbols: Vec<f64> = (0..=d)
            .map(|m| poisson_symbol((2 * m + 1) as f64, t, k))
            .collect();
        for (i, &x) in grid.coords.iter().enumerate() {
            for (j, &y) in grid.coords.iter().enumerate() {
                let value: f64 = (0..=d).map(|m| symbols[m] * table[i][m] * table[j][m]).sum();
                let dist = (x - y).abs();
                let rhs = if k == 0 {
                    t / (t + dist).powi(n as i32 + 1)
                } else {
                    t.powi(k as i32) / (t + dist).powi((n as u32 + k) as i32)
                };
                if tail > AUDIT_RATIO_TOL * rhs {
                    return Err(Error::accuracy(format!(
                        "spectral tail bound {tail:e} exceeds {AUDIT_RATIO_TOL:e} of the envelope {rhs:e} \
                         at t = {t}, |x-y| = {dist}, D = {d}; raise the truncation or t"
                    )));
                }
                let lhs = value.abs();
                out.push(AuditRow {
                    k,
                    t,
                    distance: dist,
                    lhs,
                    rhs,
                    ratio: lhs / rhs,
                });
            }
        }
    }
    Ok(DecayAudit::from_rows(format!("poisson-kernel k={k}"), out))
}

/// Audit of the heat-kernel Gaussian bound: `W_t(x,y) t^{n/2} e^{c|x-y|^2/t}`,
/// `n = 1`, closed-form kernel.
pub fn gaussian_bound_audit(c: f64, grid: &KernelAuditGrid) -> Result<DecayAudit> {
    let mut out = Vec::new();
    for &t in &grid.times {
        for &x in &grid.coords {
            for &y in &grid.coords {
                let w = mehler_kernel(t, &[x], &[y])?;
                let dist = (x - y).abs();
                let rhs = t.powf(-0.5) * (-c * dist * dist / t).exp();
                out.push(AuditRow {
                    k: 0,
                    t,
                    distance: dist,
                    lhs: w,
                    rhs,
                    ratio: w / rhs,
                });
            }
        }
    }
    Ok(DecayAudit::from_rows(format!("heat-kernel gaussian c={c}"), out))
}

/// Gaussian bound for the kernel `W_{t,k}` of `(tH)^k e^{-tH}`, spectral sum.
pub fn gaussian_bound_audit_k(k: u32, c: f64, grid: &KernelAuditGrid) -> Result<DecayAudit> {
    let d = grid.truncation;
    let table: Vec<Vec<f64>> = grid.coords.iter().map(|&x| hermite_row(x, d)).collect();
    let mut out = Vec::new();
    for &t in &grid.times {
        let symbols: Vec<f64> = (0..=d)
            .map(|m| {
                let l = (2 * m + 1) as f64;
                (t * l).powi(k as i32) * (-t * l).exp()
            })
            .collect();
        for (i, &x) in grid.coords.iter().enumerate() {
            for (j, &y) in grid.coords.iter().enumerate() {
                let value: f64 = (0..=d).map(|m| symbols[m] * table[i][m] * table[j][m]).sum();
                let dist = (x - y).abs();
                let rhs = t.powf(-0.5) * (-c * dist * dist / t).exp();
                out.push(AuditRow {
                    k,
                    t,
                    distance: dist,
                    lhs: value.abs(),
                    rhs,
                    ratio: value.abs() / rhs,
                });
            }
        }
    }
    Ok(DecayAudit::from_rows(format!("heat-kernel (tH)^{k} gaussian c={c}"), out))
}

/// `sup_x |x|^2 |(t√H)^k e^{-t√H} f(x)|` over the scheme's time grid and
/// spatial grid; one row per time node.
pub fn schwartz_decay_audit(
    f: &HermiteExpansion,
    k: u32,
    scheme: &crate::scheme::SamplingScheme,
) -> Result<DecayAudit> {
    let ev = scheme.evaluator();
    let grid = scheme.grid();
    let mut out = Vec::new();
    for node in &scheme.time_grid().nodes {
        let g = apply_poisson(f, node.t, k)?;
        let vals = ev.synthesize(&g)?;
        let mut best = AuditRow {
            k,
            t: node.t,
            distance: 0.0,
            lhs: 0.0,
            rhs: 1.0,
            ratio: 0.0,
        };
        for (i, v) in vals.iter().enumerate() {
            let p = grid.point(i);
            let r2: f64 = p[..grid.dimension].iter().map(|x| x * x).sum();
            let lhs = r2 * v.abs();
            if lhs > best.lhs {
                best.lhs = lhs;
                best.ratio = lhs;
                best.distance = r2.sqrt();
            }
        }
        out.push(best);
    }
    Ok(DecayAudit::from_rows(format!("schwartz |x|^2 k={k}"), out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mehler_reference_value() {
        let w = mehler_kernel(0.5, &[0.0], &[0.0]).unwrap();
        let e = std::f64::consts::E;
        let expect = PI.powf(-0.5) * ((1.0 / e) / (1.0 - 1.0 / (e * e))).sqrt();
        assert!((w - expect).abs() < 1e-15);
        assert!((w - 0.36800).abs() < 1e-5);
    }

    #[test]
    fn mehler_domain_and_guard() {
        assert!(matches!(mehler_kernel(0.0, &[0.0], &[0.0]), Err(Error::Domain(_))));
        assert!(matches!(mehler_kernel(-1.0, &[0.0], &[0.0]), Err(Error::Domain(_))));
        assert!(matches!(mehler_kernel(1e-9, &[0.0], &[0.0]), Err(Error::Range(_))));
    }

    #[test]
    fn mehler_large_time_leading_term() {
        let t = 8.0;
        for &(x, y) in &[(0.0, 0.0), (0.7, -0.3), (1.0, 1.0), (-1.0, 0.5)] {
            let w = mehler_kernel(t, &[x], &[y]).unwrap();
            let h0 = |s: f64| crate::hermite::PI_M_QUARTER * (-s * s / 2.0).exp();
            let lead = (-t).exp() * h0(x) * h0(y);
            assert!((w / lead - 1.0).abs() <= 1e-6, "x={x} y={y}");
        }
    }

    #[test]
    fn heat_on_h0_halves_at_ln2() {
        let e = HermiteExpansion::from_1d(4, &[(0, 1.0)]).unwrap();
        let out = apply_heat(&e, std::f64::consts::LN_2).unwrap();
        assert!((out.coeffs()[0] - 0.5).abs() < 1e-15);
        assert_eq!(apply_heat(&e, 0.0).unwrap(), e);
        assert!(apply_heat(&e, -0.1).is_err());
    }

    #[test]
    fn poisson_examples() {
        let e = HermiteExpansion::from_1d(8, &[(0, 1.0)]).unwrap();
        let out = apply_poisson(&e, 1.0, 0).unwrap();
        assert!((out.coeffs()[0] - (-1f64).exp()).abs() < 1e-15);
        let e4 = HermiteExpansion::from_1d(8, &[(4, 1.0)]).unwrap();
        let out = apply_poisson(&e4, 1.0 / 3.0, 2).unwrap();
        assert!((out.coeffs()[4] - (-1f64).exp()).abs() < 1e-15);
        assert!(apply_poisson(&e, 0.0, 1).is_err());
    }

    #[test]
    fn poisson_kernel_at_origin_matches_closed_form_oracle() {
        // h_{2j}(0) = pi^{-1/4} (-1)^j sqrt((2j)!) / (2^j j!), odd orders vanish
        let t = 4.0;
        let mut oracle = 0.0;
        let mut h2j_sq = PI.powf(-0.5);
        for j in 0..40usize {
            if j > 0 {
                let jf = j as f64;
                // ratio (2j)!/(4^j j!^2) over (2j-2)!/(4^{j-1} (j-1)!^2)
                h2j_sq *= (2.0 * jf) * (2.0 * jf - 1.0) / (4.0 * jf * jf);
            }
            oracle += (-t * ((4 * j + 1) as f64).sqrt()).exp() * h2j_sq;
        }
        let q = KernelQuery {
            t,
            k: 0,
            x: vec![0.0],
            y: vec![0.0],
            truncation: 256,
        };
        let v = kernel_p_tk(&q).unwrap();
        assert!((v.value - oracle).abs() / oracle < 1e-12);
        // dominated by the ground state
        let lead = (-t).exp() / PI.sqrt();
        assert!((v.value - lead).abs() / lead < 5e-3);
        assert!((v.value - 0.010332).abs() < 1e-4);
        let sym = KernelQuery { x: vec![0.3], y: vec![-1.2], ..q.clone() };
        let rev = KernelQuery { x: vec![-1.2], y: vec![0.3], ..q };
        assert_eq!(kernel_p_tk(&sym).unwrap().value, kernel_p_tk(&rev).unwrap().value);
    }

    #[test]
    fn poisson_kernel_refuses_inaccurate_truncation() {
        let q = KernelQuery {
            t: 0.05,
            k: 1,
            x: vec![0.0],
            y: vec![2.0],
            truncation: 64,
        };
        assert!(matches!(kernel_p_tk(&q), Err(Error::Accuracy(_))));
    }

    #[test]
    fn tail_bound_dominates_explicit_tail() {
        // explicit tail of the symbol sum with |h| <= bound, D=50 vs D=4000
        let (t, k, d) = (0.5, 2, 50);
        let explicit: f64 = (d + 1..20000)
            .map(|m| poisson_symbol((2 * m + 1) as f64, t, k))
            .sum::<f64>()
            * HERMITE_SUP.powi(2);
        let b = spectral_tail_bound(t, k, 1, d);
        assert!(b >= explicit && b < 10.0 * explicit, "b={b} explicit={explicit}");
    }
}
