//! Normalized Hermite functions, eigenvalue bookkeeping, and finite Hermite
//! expansions.
//!
//! One-dimensional values come from the orthonormal three-term recurrence
//! `h_{m+1}(t) = t sqrt(2/(m+1)) h_m(t) - sqrt(m/(m+1)) h_{m-1}(t)`, run on the
//! polynomial part with the Gaussian factor and any overflow rescaling kept
//! in a separate log-scale. No factorials are ever formed.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::scheme::SamplingScheme;

/// Highest 1-D order the evaluator accepts.
pub const MAX_ORDER: usize = 4096;

/// `pi^{-1/4}`.
pub const PI_M_QUARTER: f64 = 0.751_125_544_464_942_5;

const RESCALE_AT: f64 = 1e150;

/// Values `r_k`, `k = 0..=d`, and a log-shift `s` such that
/// `h_k(t) = r_k * exp(s - t^2/2)`.
pub(crate) fn hermite_row_scaled(t: f64, d: usize) -> (Vec<f64>, f64) {
    let mut row = Vec::with_capacity(d + 1);
    let mut shift = 0.0;
    row.push(PI_M_QUARTER);
    if d == 0 {
        return (row, shift);
    }
    row.push(std::f64::consts::SQRT_2 * t * PI_M_QUARTER);
    for m in 1..d {
        let mf = m as f64;
        let next = t * (2.0 / (mf + 1.0)).sqrt() * row[m] - (mf / (mf + 1.0)).sqrt() * row[m - 1];
        row.push(next);
        if next.abs() > RESCALE_AT {
            for v in row.iter_mut() {
                *v /= RESCALE_AT;
            }
            shift += RESCALE_AT.ln();
        }
    }
    (row, shift)
}

/// `h_0(t), ..., h_d(t)`. Values that underflow are returned as zero.
pub fn hermite_row(t: f64, d: usize) -> Vec<f64> {
    let (mut row, shift) = hermite_row_scaled(t, d);
    let log_scale = shift - 0.5 * t * t;
    if log_scale > -650.0 {
        let scale = log_scale.exp();
        for v in row.iter_mut() {
            *v *= scale;
        }
    } else {
        for v in row.iter_mut() {
            if *v != 0.0 {
                *v = v.signum() * (v.abs().ln() + log_scale).exp();
            }
        }
    }
    row
}

/// Single 1-D normalized Hermite function `h_m(t)`.
pub fn hermite_fn(m: usize, t: f64) -> Result<f64> {
    check_order(m)?;
    Ok(hermite_row(t, m)[m])
}

fn check_order(m: usize) -> Result<()> {
    if m > MAX_ORDER {
        Err(Error::Range(format!(
            "Hermite order {m} exceeds the supported cap {MAX_ORDER}"
        )))
    } else {
        Ok(())
    }
}

fn check_dimension(n: usize) -> Result<()> {
    if n == 1 || n == 2 {
        Ok(())
    } else {
        Err(Error::domain(format!("dimension {n} not supported (1 or 2)")))
    }
}

/// A multi-index `alpha` in `N_0^n`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Result<Self> {
        check_dimension(entries.len())?;
        Ok(Self(entries))
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::new(vec![0; n])
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    /// `|alpha| = sum of entries`.
    pub fn order(&self) -> usize {
        self.0.iter().sum()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, a) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{a}")?;
        }
        write!(f, ")")
    }
}

/// `lambda_alpha = 2|alpha| + n`.
pub fn eigenvalue(alpha: &MultiIndex, n: usize) -> f64 {
    (2 * alpha.order() + n) as f64
}

/// Tensor-product Hermite function `h_alpha(x)`.
pub fn eval_hermite(alpha: &MultiIndex, x: &[f64]) -> Result<f64> {
    if alpha.dimension() != x.len() {
        return Err(Error::input(format!(
            "multi-index {alpha} has dimension {}, point has {}",
            alpha.dimension(),
            x.len()
        )));
    }
    let mut v = 1.0;
    for (&a, &xi) in alpha.entries().iter().zip(x) {
        v *= hermite_fn(a, xi)?;
    }
    Ok(v)
}

/// Dense triangular layout of all `|alpha| <= D` in dimension `n`.
///
/// For `n = 2` slots are ordered by total degree `d`, then by the second
/// entry: slot `d(d+1)/2 + j` holds `(d - j, j)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Layout {
    pub dimension: usize,
    pub degree_cap: usize,
}

impl Layout {
    pub fn new(dimension: usize, degree_cap: usize) -> Result<Self> {
        check_dimension(dimension)?;
        check_order(degree_cap)?;
        Ok(Self {
            dimension,
            degree_cap,
        })
    }

    pub fn len(&self) -> usize {
        let d = self.degree_cap;
        match self.dimension {
            1 => d + 1,
            _ => (d + 1) * (d + 2) / 2,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn index_of(&self, alpha: &MultiIndex) -> Option<usize> {
        if alpha.dimension() != self.dimension || alpha.order() > self.degree_cap {
            return None;
        }
        let e = alpha.entries();
        Some(match self.dimension {
            1 => e[0],
            _ => {
                let d = e[0] + e[1];
                d * (d + 1) / 2 + e[1]
            }
        })
    }

    /// Entries of the multi-index stored at `slot`.
    pub fn entries_at(&self, slot: usize) -> [usize; 2] {
        match self.dimension {
            1 => [slot, 0],
            _ => {
                // d = floor((sqrt(8 s + 1) - 1) / 2), corrected for rounding
                let mut d = (((8 * slot + 1) as f64).sqrt() as usize).saturating_sub(1) / 2;
                while (d + 1) * (d + 2) / 2 <= slot {
                    d += 1;
                }
                while d * (d + 1) / 2 > slot {
                    d -= 1;
                }
                let j = slot - d * (d + 1) / 2;
                [d - j, j]
            }
        }
    }

    pub fn multi_index_at(&self, slot: usize) -> MultiIndex {
        let e = self.entries_at(slot);
        MultiIndex(e[..self.dimension].to_vec())
    }

    /// Total degree `|alpha|` at `slot`.
    pub fn order_at(&self, slot: usize) -> usize {
        let e = self.entries_at(slot);
        e[0] + e[1]
    }

    /// `2|alpha| + n` for every slot.
    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.len())
            .map(|s| (2 * self.order_at(s) + self.dimension) as f64)
            .collect()
    }
}

/// A finite Hermite expansion `sum_{|alpha| <= D} c_alpha h_alpha`.
#[derive(Debug, Clone, PartialEq)]
pub struct HermiteExpansion {
    layout: Layout,
    coeffs: Vec<f64>,
}

impl HermiteExpansion {
    pub fn zeros(dimension: usize, degree_cap: usize) -> Result<Self> {
        let layout = Layout::new(dimension, degree_cap)?;
        Ok(Self {
            layout,
            coeffs: vec![0.0; layout.len()],
        })
    }

    pub fn from_layout(layout: Layout, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != layout.len() {
            return Err(Error::input(format!(
                "expected {} coefficients, got {}",
                layout.len(),
                coeffs.len()
            )));
        }
        Ok(Self { layout, coeffs })
    }

    pub fn from_terms(
        dimension: usize,
        degree_cap: usize,
        terms: &[(MultiIndex, f64)],
    ) -> Result<Self> {
        let mut e = Self::zeros(dimension, degree_cap)?;
        for (alpha, c) in terms {
            e.add_to(alpha, *c)?;
        }
        Ok(e)
    }

    /// Convenience for 1-D expansions given as `(order, coefficient)` pairs.
    pub fn from_1d(degree_cap: usize, terms: &[(usize, f64)]) -> Result<Self> {
        let mut e = Self::zeros(1, degree_cap)?;
        for &(m, c) in terms {
            e.add_to(&MultiIndex(vec![m]), c)?;
        }
        Ok(e)
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dimension(&self) -> usize {
        self.layout.dimension
    }

    pub fn degree_cap(&self) -> usize {
        self.layout.degree_cap
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn get(&self, alpha: &MultiIndex) -> f64 {
        self.layout
            .index_of(alpha)
            .map(|i| self.coeffs[i])
            .unwrap_or(0.0)
    }

    fn slot(&self, alpha: &MultiIndex) -> Result<usize> {
        self.layout.index_of(alpha).ok_or_else(|| {
            Error::input(format!(
                "multi-index {alpha} not valid for dimension {} and degree cap {}",
                self.layout.dimension, self.layout.degree_cap
            ))
        })
    }

    pub fn set(&mut self, alpha: &MultiIndex, value: f64) -> Result<()> {
        let i = self.slot(alpha)?;
        self.coeffs[i] = value;
        Ok(())
    }

    pub fn add_to(&mut self, alpha: &MultiIndex, value: f64) -> Result<()> {
        let i = self.slot(alpha)?;
        self.coeffs[i] += value;
        Ok(())
    }

    /// Non-zero terms in slot order.
    pub fn terms(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(i, &c)| (self.layout.multi_index_at(i), c))
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    /// Euclidean norm of the coefficients, equal to the `L^2` norm.
    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    /// Applies the diagonal operator `c_alpha -> factor(lambda_alpha) c_alpha`.
    pub fn map_spectral(&self, factor: impl Fn(f64) -> f64) -> Self {
        let n = self.layout.dimension;
        let coeffs = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                if c == 0.0 {
                    0.0
                } else {
                    c * factor((2 * self.layout.order_at(i) + n) as f64)
                }
            })
            .collect();
        Self {
            layout: self.layout,
            coeffs,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            layout: self.layout,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Self) -> Result<()> {
        self.check_compatible(other)?;
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
        Ok(())
    }

    pub fn difference(&self, other: &Self) -> Result<Self> {
        let mut d = self.clone();
        d.axpy(-1.0, other)?;
        Ok(d)
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::input(format!(
                "expansion layouts differ: ({}, {}) vs ({}, {})",
                self.layout.dimension,
                self.layout.degree_cap,
                other.layout.dimension,
                other.layout.degree_cap
            )));
        }
        Ok(())
    }

    /// Zeroes coefficients below `threshold` in magnitude. Never applied
    /// implicitly.
    pub fn pruned(&self, threshold: f64) -> Self {
        Self {
            layout: self.layout,
            coeffs: self
                .coeffs
                .iter()
                .map(|&c| if c.abs() < threshold { 0.0 } else { c })
                .collect(),
        }
    }

    /// Re-expresses the expansion under a different degree cap, dropping
    /// terms above the new cap.
    pub fn with_degree_cap(&self, degree_cap: usize) -> Result<Self> {
        let mut out = Self::zeros(self.layout.dimension, degree_cap)?;
        for (i, &c) in self.coeffs.iter().enumerate() {
            if c != 0.0 && self.layout.order_at(i) <= degree_cap {
                let alpha = self.layout.multi_index_at(i);
                out.set(&alpha, c)?;
            }
        }
        Ok(out)
    }

    /// Value at a single point.
    pub fn value_at(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.layout.dimension {
            return Err(Error::input(format!(
                "point dimension {} does not match expansion dimension {}",
                x.len(),
                self.layout.dimension
            )));
        }
        let d = self.layout.degree_cap;
        let r0 = hermite_row(x[0], d);
        Ok(match self.layout.dimension {
            1 => r0.iter().zip(&self.coeffs).map(|(h, c)| h * c).sum(),
            _ => {
                let r1 = hermite_row(x[1], d);
                let mut s = 0.0;
                for (i, &c) in self.coeffs.iter().enumerate() {
                    if c != 0.0 {
                        let [a, b] = self.layout.entries_at(i);
                        s += c * r0[a] * r1[b];
                    }
                }
                s
            }
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ExpansionDoc::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ExpansionDoc = serde_json::from_str(s)?;
        doc.try_into()
    }
}

/// Serialized form: `{dimension, degree_cap, coefficients: [[[alpha...], value], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExpansionDoc {
    pub dimension: usize,
    pub degree_cap: usize,
    pub coefficients: Vec<(Vec<usize>, f64)>,
}

impl From<&HermiteExpansion> for ExpansionDoc {
    fn from(e: &HermiteExpansion) -> Self {
        Self {
            dimension: e.dimension(),
            degree_cap: e.degree_cap(),
            coefficients: e.terms().map(|(a, c)| (a.0, c)).collect(),
        }
    }
}

impl TryFrom<ExpansionDoc> for HermiteExpansion {
    type Error = Error;

    fn try_from(doc: ExpansionDoc) -> Result<Self> {
        let mut e = HermiteExpansion::zeros(doc.dimension, doc.degree_cap)?;
        for (alpha, c) in doc.coefficients {
            if !c.is_finite() {
                return Err(Error::input(format!("non-finite coefficient at {alpha:?}")));
            }
            e.add_to(&MultiIndex::new(alpha)?, c)?;
        }
        Ok(e)
    }
}

/// Projects `f` onto `h_alpha`, `|alpha| <= D`, by Gauss-Hermite quadrature.
pub fn expand(
    f: impl Fn(&[f64]) -> f64 + Sync,
    dimension: usize,
    degree_cap: usize,
    scheme: &SamplingScheme,
) -> Result<HermiteExpansion> {
    let layout = Layout::new(dimension, degree_cap)?;
    if dimension != scheme.dimension() {
        return Err(Error::input(format!(
            "scheme is {}-dimensional, expansion requested in dimension {dimension}",
            scheme.dimension()
        )));
    }
    let gh = scheme.gauss_hermite()?;
    if degree_cap >= gh.len() {
        return Err(Error::domain(format!(
            "degree cap {degree_cap} needs a Gauss-Hermite rule of size >= {}, scheme has {}",
            degree_cap + 1,
            gh.len()
        )));
    }
    let table = scheme.node_table()?;
    let q = gh.len();
    match dimension {
        1 => {
            let mut coeffs = vec![0.0; layout.len()];
            for i in 0..q {
                let x = gh.nodes[i];
                let v = f(&[x]);
                if !v.is_finite() {
                    return Err(Error::input(format!("non-finite sample {v} at node x = {x}")));
                }
                let g = v * gh.sqrt_weights[i];
                let row = &table[i];
                for (c, h) in coeffs.iter_mut().zip(row) {
                    *c += g * h;
                }
            }
            HermiteExpansion::from_layout(layout, coeffs)
        }
        _ => {
            // F_ij = f(x_i, x_j) s_i s_j ; c_(a,b) = sum_ij A_ia F_ij A_jb
            let mut fmat = nalgebra::DMatrix::<f64>::zeros(q, q);
            for i in 0..q {
                for j in 0..q {
                    let x = [gh.nodes[i], gh.nodes[j]];
                    let v = f(&x);
                    if !v.is_finite() {
                        return Err(Error::input(format!(
                            "non-finite sample {v} at node ({}, {})",
                            x[0], x[1]
                        )));
                    }
                    fmat[(i, j)] = v * gh.sqrt_weights[i] * gh.sqrt_weights[j];
                }
            }
            let amat = nalgebra::DMatrix::from_fn(q, degree_cap + 1, |i, a| table[i][a]);
            let c = amat.transpose() * fmat * &amat;
            let coeffs = (0..layout.len())
                .map(|s| {
                    let [a, b] = layout.entries_at(s);
                    c[(a, b)]
                })
                .collect();
            HermiteExpansion::from_layout(layout, coeffs)
        }
    }
}

/// `sum_alpha c_alpha h_alpha(x)` at each point.
pub fn synthesize(e: &HermiteExpansion, points: &[Vec<f64>]) -> Result<Vec<f64>> {
    points.iter().map(|p| e.value_at(p)).collect()
}

/// Synthesis with an extrapolation count: points outside the box
/// `[-halfwidth, halfwidth]^n` are evaluated but counted.
pub fn synthesize_checked(
    e: &HermiteExpansion,
    points: &[Vec<f64>],
    halfwidth: f64,
) -> Result<(Vec<f64>, usize)> {
    let outside = points
        .iter()
        .filter(|p| p.iter().any(|x| x.abs() > halfwidth))
        .count();
    Ok((synthesize(e, points)?, outside))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn idx(v: &[usize]) -> MultiIndex {
        MultiIndex::new(v.to_vec()).unwrap()
    }

    #[test]
    fn h0_at_origin() {
        let v = eval_hermite(&idx(&[0]), &[0.0]).unwrap();
        assert!((v - PI.powf(-0.25)).abs() < 1e-15);
        assert!((v - 0.751_125_54).abs() < 1e-8);
    }

    #[test]
    fn h1_matches_closed_form() {
        // H_1(t) = 2t, normalization (2 * 1! * sqrt(pi))^{-1/2}
        let oracle = |t: f64| (2.0 * PI.sqrt()).powf(-0.5) * 2.0 * t * (-t * t / 2.0).exp();
        let v = eval_hermite(&idx(&[1]), &[1.0]).unwrap();
        assert!((v - oracle(1.0)).abs() < 1e-15);
        assert!((v - 0.64429).abs() < 1e-5);
    }

    #[test]
    fn low_orders_match_factorial_normalization() {
        // physicists' Hermite polynomials via explicit recurrence, factorial normalization
        for &t in &[-2.3, -0.4, 0.0, 1.1, 3.7] {
            let mut hp = vec![1.0, 2.0 * t];
            for m in 1..20 {
                hp.push(2.0 * t * hp[m] - 2.0 * m as f64 * hp[m - 1]);
            }
            let row = hermite_row(t, 20);
            let mut fact = 1.0;
            for m in 0..=20 {
                if m > 0 {
                    fact *= m as f64;
                }
                let norm = (2f64.powi(m as i32) * fact * PI.sqrt()).powf(-0.5);
                let expect = norm * hp[m] * (-t * t / 2.0).exp();
                assert!((row[m] - expect).abs() < 1e-12, "m={m} t={t}");
            }
        }
    }

    #[test]
    fn order_cap_is_a_range_error() {
        assert!(matches!(
            eval_hermite(&idx(&[MAX_ORDER + 1]), &[0.0]),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn recurrence_stays_bounded() {
        let mut worst: f64 = 0.0;
        let mut t = -20.0;
        while t <= 20.0 {
            let row = hermite_row(t, 512);
            for v in row {
                assert!(v.is_finite());
                worst = worst.max(v.abs());
            }
            t += 0.0625;
        }
        assert!(worst <= 1.1, "sup |h_m| = {worst}");
    }

    #[test]
    fn far_tails_do_not_overflow() {
        let row = hermite_row(45.0, 1500);
        assert!(row.iter().all(|v| v.is_finite()));
        assert!(row[1500] > 0.0);
    }

    #[test]
    fn eigenvalues() {
        assert_eq!(eigenvalue(&idx(&[0]), 1), 1.0);
        assert_eq!(eigenvalue(&idx(&[2, 3]), 2), 12.0);
        assert_eq!(eigenvalue(&idx(&[0, 0]), 2), 2.0);
    }

    #[test]
    fn layout_round_trips_slots() {
        let l = Layout::new(2, 30).unwrap();
        for s in 0..l.len() {
            let a = l.multi_index_at(s);
            assert!(a.order() <= 30);
            assert_eq!(l.index_of(&a), Some(s));
        }
        assert_eq!(l.len(), 31 * 32 / 2);
    }

    #[test]
    fn wrong_dimension_rejected() {
        assert!(MultiIndex::new(vec![1, 2, 3]).is_err());
        let mut e = HermiteExpansion::zeros(1, 4).unwrap();
        assert!(e.set(&idx(&[5]), 1.0).is_err());
        assert!(e.set(&idx(&[1, 1]), 1.0).is_err());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let e = HermiteExpansion::from_terms(
            2,
            6,
            &[(idx(&[1, 2]), 0.1 + 0.2), (idx(&[0, 0]), -1.0 / 3.0)],
        )
        .unwrap();
        let back = HermiteExpansion::from_json(&e.to_json().unwrap()).unwrap();
        assert_eq!(back, e);
    }
}
