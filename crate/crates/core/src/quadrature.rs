//! Quadrature rules: Gauss-Legendre, Gauss-Hermite (with weights folded into
//! the Hermite functions), adaptive Gauss-Kronrod, and the dyadic `dt/t` grid
//! on `(0, 1]`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::f64::consts::{LN_2, PI};

use crate::error::{Error, Result};
use crate::hermite::hermite_row_scaled;

/// Largest Gauss-Hermite rule we build. Beyond this the extreme nodes push
/// `e^{x^2/2}` out of double range.
pub const MAX_GAUSS_HERMITE: usize = 700;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::domain("Gauss-Legendre order must be positive"));
        }
        let n = order;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(Self { nodes, weights })
    }

    /// Nodes and weights mapped affinely onto `[a, b]`.
    pub fn on_interval(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        self.on_interval(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Gauss-Hermite rule for the weight `e^{-x^2}`.
///
/// The weights are stored as `sqrt_weights[i] = sqrt(w_i e^{x_i^2})`, i.e.
/// the square root of the Christoffel number for orthonormal Hermite
/// functions, `1 / sqrt(sum_k h_k(x_i)^2)`. Against Lebesgue measure,
/// `sum_i sqrt_weights[i]^2 * g(x_i)` integrates `g = h_j h_k` exactly for
/// `j + k <= 2Q - 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub sqrt_weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size > MAX_GAUSS_HERMITE {
            return Err(Error::Range(format!(
                "Gauss-Hermite size {size} outside 1..={MAX_GAUSS_HERMITE}"
            )));
        }
        let mut jacobi = DMatrix::<f64>::zeros(size, size);
        for k in 1..size {
            let b = (k as f64 / 2.0).sqrt();
            jacobi[(k - 1, k)] = b;
            jacobi[(k, k - 1)] = b;
        }
        let eig = SymmetricEigen::new(jacobi);
        let mut nodes: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        nodes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // Newton polish on h_Q, using h_Q' = sqrt(2Q) h_{Q-1} - x h_Q.
        let q = size as f64;
        for x in nodes.iter_mut() {
            for _ in 0..4 {
                let (row, _) = hermite_row_scaled(*x, size);
                let hq = row[size];
                let hq1 = row[size - 1];
                let d = (2.0 * q).sqrt() * hq1 - *x * hq;
                if d == 0.0 {
                    break;
                }
                let dx = hq / d;
                *x -= dx;
                if dx.abs() < 1e-15 * x.abs().max(1.0) {
                    break;
                }
            }
        }
        // Symmetrize to remove the last ulp of asymmetry.
        for i in 0..size / 2 {
            let m = 0.5 * (nodes[size - 1 - i] - nodes[i]);
            nodes[i] = -m;
            nodes[size - 1 - i] = m;
        }
        if size % 2 == 1 {
            nodes[size / 2] = 0.0;
        }
        let sqrt_weights = nodes
            .iter()
            .map(|&x| {
                let (row, shift) = hermite_row_scaled(x, size - 1);
                let sum: f64 = row.iter().map(|v| v * v).sum();
                // h_k = row_k * exp(shift - x^2/2); W = 1 / sum h_k^2.
                (0.5 * x * x - shift - 0.5 * sum.ln()).exp()
            })
            .collect();
        Ok(Self {
            nodes,
            sqrt_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `g` against Lebesgue measure, for `g` with Gaussian decay.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.sqrt_weights)
            .map(|(&x, &s)| s * s * g(x))
            .sum()
    }
}

// Gauss-Kronrod 7/15 abscissae and weights.
const GK_XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const GK_WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const GK_WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * GK_WGK[7];
    let mut gauss = fc * GK_WG[3];
    for j in 0..7 {
        let dx = h * GK_XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += GK_WGK[j] * s;
        if j % 2 == 1 {
            gauss += GK_WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
}

/// Adaptive Gauss-Kronrod on a finite interval; bisects the worst panel until
/// the summed error estimate falls below `max(abs_tol, rel_tol * |value|)`.
pub fn integrate_adaptive(
    f: impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<Integral> {
    const MAX_PANELS: usize = 4000;
    let mut panels = vec![{
        let (v, e) = gk15(&f, a, b);
        (a, b, v, e)
    }];
    loop {
        let value: f64 = panels.iter().map(|p| p.2).sum();
        let error: f64 = panels.iter().map(|p| p.3).sum();
        if !value.is_finite() {
            return Err(Error::accuracy(format!(
                "non-finite integrand on [{a}, {b}]"
            )));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral { value, error });
        }
        if panels.len() >= MAX_PANELS {
            return Err(Error::accuracy(format!(
                "adaptive quadrature on [{a}, {b}] did not converge (error {error:e})"
            )));
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.partial_cmp(&y.1 .3).unwrap())
            .unwrap();
        let (pa, pb, _, _) = panels.swap_remove(worst);
        let mid = 0.5 * (pa + pb);
        let (v1, e1) = gk15(&f, pa, mid);
        let (v2, e2) = gk15(&f, mid, pb);
        panels.push((pa, mid, v1, e1));
        panels.push((mid, pb, v2, e2));
    }
}

/// One node of the discretized `dt/t` measure on `(2^{-J}, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeNode {
    pub t: f64,
    /// Weight with respect to `dt/t`.
    pub weight: f64,
    /// Dyadic level `k`: the node lies in `[2^{-k}, 2^{-k+1})`.
    pub level: u32,
}

/// `J` dyadic levels with `G` Gauss-Legendre nodes per level in `log t`.
/// Nodes are ordered by strictly decreasing `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub levels: u32,
    pub nodes_per_level: usize,
    pub nodes: Vec<TimeNode>,
}

impl TimeGrid {
    pub fn new(levels: u32, nodes_per_level: usize) -> Result<Self> {
        if levels == 0 || levels > 60 {
            return Err(Error::domain(format!("time levels {levels} outside 1..=60")));
        }
        let gl = GaussLegendre::new(nodes_per_level)?;
        let mut nodes = Vec::with_capacity(levels as usize * nodes_per_level);
        for k in 1..=levels {
            let lo = -(k as f64) * LN_2;
            let hi = lo + LN_2;
            let mut level: Vec<TimeNode> = gl
                .on_interval(lo, hi)
                .map(|(u, w)| TimeNode {
                    t: u.exp(),
                    weight: w,
                    level: k,
                })
                .collect();
            level.sort_by(|a, b| b.t.partial_cmp(&a.t).unwrap());
            nodes.extend(level);
        }
        Ok(Self {
            levels,
            nodes_per_level,
            nodes,
        })
    }

    /// Lower end `2^{-J}` of the covered range.
    pub fn t_min(&self) -> f64 {
        (-(self.levels as f64) * LN_2).exp()
    }

    pub fn level_nodes(&self, level: u32) -> impl Iterator<Item = &TimeNode> {
        self.nodes.iter().filter(move |n| n.level == level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::hermite_row;

    #[test]
    fn legendre_integrates_polynomials() {
        let gl = GaussLegendre::new(5).unwrap();
        // degree 9 exact
        let v = gl.integrate(0.0, 2.0, |x| x.powi(9));
        assert!((v - 2f64.powi(10) / 10.0).abs() < 1e-12);
        let s: f64 = gl.weights.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
    }

    #[test]
    fn hermite_rule_small_sizes() {
        let gh = GaussHermite::new(1).unwrap();
        assert_eq!(gh.nodes, vec![0.0]);
        let gh = GaussHermite::new(20).unwrap();
        // integral of e^{-x^2} cos(x) over R
        let v = gh.integrate(|x| (-x * x).exp() * x.cos());
        assert!((v - PI.sqrt() * (-0.25f64).exp()).abs() < 1e-13);
    }

    #[test]
    fn hermite_rule_orthonormality_up_to_64() {
        let gh = GaussHermite::new(65).unwrap();
        let rows: Vec<Vec<f64>> = gh.nodes.iter().map(|&x| hermite_row(x, 64)).collect();
        for m in 0..=64 {
            for k in 0..=64 {
                let v: f64 = rows
                    .iter()
                    .zip(&gh.sqrt_weights)
                    .map(|(r, s)| s * s * r[m] * r[k])
                    .sum();
                let expect = if m == k { 1.0 } else { 0.0 };
                assert!((v - expect).abs() < 1e-10, "m={m} k={k} v={v}");
            }
        }
    }

    #[test]
    fn oversized_rule_is_rejected() {
        assert!(matches!(GaussHermite::new(0), Err(Error::Range(_))));
        assert!(matches!(
            GaussHermite::new(MAX_GAUSS_HERMITE + 1),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn adaptive_handles_peaks() {
        let r = integrate_adaptive(|x| 1.0 / (1e-4 + x * x), -1.0, 1.0, 1e-12, 1e-12).unwrap();
        let exact = 2.0 / 1e-2 * (1.0f64 / 1e-2).atan();
        assert!((r.value - exact).abs() / exact < 1e-10);
    }

    #[test]
    fn time_grid_weights_and_order() {
        let tg = TimeGrid::new(12, 4).unwrap();
        assert_eq!(tg.nodes.len(), 48);
        for k in 1..=12 {
            let s: f64 = tg.level_nodes(k).map(|n| n.weight).sum();
            assert!((s - LN_2).abs() < 1e-14);
            for n in tg.level_nodes(k) {
                let lo = 2f64.powi(-(k as i32));
                assert!(n.t >= lo && n.t < 2.0 * lo && n.weight > 0.0);
            }
        }
        assert!(tg.nodes.windows(2).all(|w| w[0].t > w[1].t));
        assert!(tg.nodes.iter().all(|n| n.t > 0.0 && n.t <= 1.0));
    }
}
