//! Hermite-Riesz and Bessel potentials, Laplace-type spectral multipliers,
//! and the boundedness-ratio harness.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::hermite::HermiteExpansion;
use crate::quadrature::integrate_adaptive;
use crate::report::{write_csv, CsvTable};
use crate::scheme::SamplingScheme;
use crate::tlspace::{tl_norm, NormBreakdown};
use crate::varexp::ExponentField;

/// Upper end of the `s = λt` integration range for multipliers; the
/// integrand carries `e^{-s}`.
const MULTIPLIER_S_MAX: f64 = 60.0;

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("potential order σ must be positive, got {sigma}")))
    }
}

/// `H^{-σ}`: `c_α ↦ λ_α^{-σ} c_α`.
pub fn riesz_potential(f: &HermiteExpansion, sigma: f64) -> Result<HermiteExpansion> {
    check_sigma(sigma)?;
    Ok(f.map_spectral(|l| l.powf(-sigma)))
}

/// `(I + H)^{-σ}`: `c_α ↦ (1 + λ_α)^{-σ} c_α`.
pub fn bessel_potential(f: &HermiteExpansion, sigma: f64) -> Result<HermiteExpansion> {
    check_sigma(sigma)?;
    Ok(f.map_spectral(|l| (1.0 + l).powf(-sigma)))
}

/// `Γ(σ)^{-1} ∫_0^∞ t^σ e^{-tλ} dt/t` by adaptive quadrature in `u = log t`.
pub fn riesz_time_integral(lambda: f64, sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if !(lambda > 0.0) {
        return Err(Error::domain(format!("Riesz symbol needs λ > 0, got {lambda}")));
    }
    // below u_lo the integrand is < e^{-36} of its scale; above u_hi the e^{-λt} factor is
    let shift = -lambda.ln();
    let u_lo = shift - 36.0 / sigma;
    let u_hi = shift + (40.0 + 2.0 * sigma).ln() + 2.0;
    let r = integrate_adaptive(
        |u| (sigma * u - lambda * u.exp()).exp(),
        u_lo,
        u_hi,
        0.0,
        1e-13,
    )
    .map_err(|e| Error::accuracy(format!("Riesz time integral at λ = {lambda}: {e}")))?;
    Ok(r.value / gamma(sigma))
}

/// Worst relative gap between the spectral and time-integral Riesz symbols.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RieszValidation {
    pub sigma: f64,
    pub max_rel_discrepancy: f64,
    pub worst_lambda: f64,
}

/// Compares `λ^{-σ}` with the time integral for every eigenvalue of the
/// layout of `f`.
pub fn validate_riesz(f: &HermiteExpansion, sigma: f64) -> Result<RieszValidation> {
    let n = f.dimension();
    let lambdas: Vec<f64> = (0..=f.degree_cap()).map(|d| (2 * d + n) as f64).collect();
    let gaps: Vec<(f64, f64)> = lambdas
        .par_iter()
        .map(|&l| {
            let t = riesz_time_integral(l, sigma)?;
            let s = l.powf(-sigma);
            Ok(((t - s).abs() / s, l))
        })
        .collect::<Result<_>>()?;
    let (gap, worst) = gaps
        .into_iter()
        .fold((0.0, lambdas[0]), |a, b| if b.0 > a.0 { b } else { a });
    Ok(RieszValidation {
        sigma,
        max_rel_discrepancy: gap,
        worst_lambda: worst,
    })
}

/// The bounded function `φ` of `m(H) = ∫_0^∞ φ(t) H e^{-tH} dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MultiplierProfile {
    Constant { value: f64 },
    /// `amplitude · e^{-rate t}`.
    ExpDecay { amplitude: f64, rate: f64 },
    /// Piecewise linear through `(times, values)`; beyond the last time
    /// `φ(t_last) e^{-tail_rate (t - t_last)}`. Profiles without a tail rate
    /// are rejected.
    Sampled {
        times: Vec<f64>,
        values: Vec<f64>,
        tail_rate: Option<f64>,
    },
}

impl MultiplierProfile {
    pub fn validate(&self) -> Result<()> {
        match self {
            MultiplierProfile::Constant { value } if value.is_finite() => Ok(()),
            MultiplierProfile::ExpDecay { amplitude, rate }
                if amplitude.is_finite() && *rate >= 0.0 && rate.is_finite() =>
            {
                Ok(())
            }
            MultiplierProfile::Sampled {
                times,
                values,
                tail_rate,
            } => {
                if tail_rate.is_none_or(|r| !(r >= 0.0)) {
                    return Err(Error::input(
                        "sampled multiplier profile needs a non-negative tail_rate",
                    ));
                }
                if times.len() < 2 || times.len() != values.len() {
                    return Err(Error::input(
                        "sampled multiplier profile needs matching times and values (at least 2)",
                    ));
                }
                if times[0] != 0.0 || times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::input(
                        "sampled multiplier times must start at 0 and increase strictly",
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::input("sampled multiplier has non-finite values"));
                }
                Ok(())
            }
            _ => Err(Error::input(format!("invalid multiplier profile {self:?}"))),
        }
    }

    /// `‖φ‖_∞`.
    pub fn sup_bound(&self) -> f64 {
        match self {
            MultiplierProfile::Constant { value } => value.abs(),
            MultiplierProfile::ExpDecay { amplitude, .. } => amplitude.abs(),
            MultiplierProfile::Sampled { values, .. } => {
                values.iter().fold(0.0, |a, v| a.max(v.abs()))
            }
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            MultiplierProfile::Constant { value } => *value,
            MultiplierProfile::ExpDecay { amplitude, rate } => amplitude * (-rate * t).exp(),
            MultiplierProfile::Sampled {
                times,
                values,
                tail_rate,
            } => {
                let last = times.len() - 1;
                if t >= times[last] {
                    return values[last] * (-tail_rate.unwrap_or(0.0) * (t - times[last])).exp();
                }
                let i = times.partition_point(|&x| x <= t).saturating_sub(1);
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i] * (1.0 - w) + values[i + 1] * w
            }
        }
    }
}

/// `m(λ) = ∫_0^∞ φ(t) λ e^{-tλ} dt`, integrated in `s = λt` with the
/// split at `t = 1/λ` (`s = 1`); asserts `|m(λ)| ≤ ‖φ‖_∞`.
pub fn multiplier_symbol(prof: &MultiplierProfile, lambda: f64) -> Result<f64> {
    prof.validate()?;
    let g = |s: f64| prof.value(s / lambda) * (-s).exp();
    let err = |e: Error| Error::accuracy(format!("multiplier integral at λ = {lambda}: {e}"));
    let head = integrate_adaptive(g, 0.0, 1.0, 1e-15, 1e-13).map_err(err)?;
    let tail = integrate_adaptive(g, 1.0, MULTIPLIER_S_MAX, 1e-15, 1e-13).map_err(err)?;
    let m = head.value + tail.value;
    let sup = prof.sup_bound();
    if m.abs() > sup * (1.0 + 1e-12) {
        return Err(Error::accuracy(format!(
            "|m({lambda})| = {} exceeds ‖φ‖∞ = {sup}",
            m.abs()
        )));
    }
    Ok(m)
}

/// `m(H) f`, with the symbol computed once per distinct eigenvalue.
pub fn spectral_multiplier(f: &HermiteExpansion, prof: &MultiplierProfile) -> Result<HermiteExpansion> {
    prof.validate()?;
    let n = f.dimension();
    let symbols: Vec<f64> = (0..=f.degree_cap())
        .into_par_iter()
        .map(|d| multiplier_symbol(prof, (2 * d + n) as f64))
        .collect::<Result<_>>()?;
    let layout = f.layout();
    let coeffs = f
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| c * symbols[layout.order_at(i)])
        .collect();
    HermiteExpansion::from_layout(layout, coeffs)
}

/// Operator under test in a boundedness report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum OperatorSpec {
    Identity,
    Scale { factor: f64 },
    Riesz { sigma: f64 },
    Bessel { sigma: f64 },
    Multiplier { profile: MultiplierProfile },
}

impl OperatorSpec {
    pub fn apply(&self, f: &HermiteExpansion) -> Result<HermiteExpansion> {
        match self {
            OperatorSpec::Identity => Ok(f.clone()),
            OperatorSpec::Scale { factor } => Ok(f.scaled(*factor)),
            OperatorSpec::Riesz { sigma } => riesz_potential(f, *sigma),
            OperatorSpec::Bessel { sigma } => bessel_potential(f, *sigma),
            OperatorSpec::Multiplier { profile } => spectral_multiplier(f, profile),
        }
    }

    /// Named hypotheses of the boundedness theorem for this operator.
    pub fn hypotheses(&self, n: usize) -> Vec<(String, bool)> {
        match self {
            OperatorSpec::Riesz { sigma } => {
                vec![(format!("σ = {sigma} > n/2 = {}", n as f64 / 2.0), *sigma > n as f64 / 2.0)]
            }
            OperatorSpec::Multiplier { profile } => {
                vec![("φ bounded".to_string(), profile.sup_bound().is_finite())]
            }
            _ => Vec::new(),
        }
    }
}

/// `F^{α(·),H,m}_{p(·),q(·)}` parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceParams {
    pub alpha: ExponentField,
    pub p: ExponentField,
    pub q: ExponentField,
    pub m: u32,
}

impl SpaceParams {
    pub fn norm(&self, f: &HermiteExpansion, scheme: &SamplingScheme) -> Result<NormBreakdown> {
        tl_norm(f, &self.alpha, &self.p, &self.q, self.m, scheme)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub member_id: String,
    pub source_norm: f64,
    pub target_norm: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundednessReport {
    pub operator: OperatorSpec,
    pub rows: Vec<RatioRow>,
    pub refined_rows: Vec<RatioRow>,
    pub max_ratio: f64,
    pub min_ratio: f64,
    pub refined_max_ratio: f64,
    pub stability_tol: f64,
    pub stable: bool,
    pub hypotheses: Vec<(String, bool)>,
    pub notes: Vec<String>,
}

impl BoundednessReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut t = CsvTable::new(&["member_id", "source_norm", "target_norm", "ratio"]);
        for r in &self.rows {
            t.push(vec![
                r.member_id.clone(),
                format!("{:e}", r.source_norm),
                format!("{:e}", r.target_norm),
                format!("{:e}", r.ratio),
            ]);
        }
        t.push(vec![
            "summary".into(),
            format!("min={:e}", self.min_ratio),
            format!("max={:e}", self.max_ratio),
            format!("stable={}", self.stable),
        ]);
        write_csv(&t)
    }
}

fn ratio_rows(
    op: &OperatorSpec,
    family: &[(String, HermiteExpansion)],
    source: &SpaceParams,
    target: &SpaceParams,
    scheme: &SamplingScheme,
    notes: &mut Vec<String>,
) -> Result<Vec<RatioRow>> {
    let mut rows = Vec::new();
    for (id, f) in family {
        let s = source.norm(f, scheme)?.total;
        if s == 0.0 {
            notes.push(format!("member {id} has zero source norm; skipped"));
            continue;
        }
        let t = target.norm(&op.apply(f)?, scheme)?.total;
        rows.push(RatioRow {
            member_id: id.clone(),
            source_norm: s,
            target_norm: t,
            ratio: t / s,
        });
    }
    Ok(rows)
}

/// `tl_norm(op f; target) / tl_norm(f; source)` per member, on the scheme
/// and on its 2x refinement.
pub fn boundedness_report(
    op: &OperatorSpec,
    family: &[(String, HermiteExpansion)],
    source: &SpaceParams,
    target: &SpaceParams,
    scheme: &SamplingScheme,
    stability_tol: f64,
) -> Result<BoundednessReport> {
    let mut notes = Vec::new();
    let rows = ratio_rows(op, family, source, target, scheme, &mut notes)?;
    let refined = scheme.refined(2)?;
    let mut refined_notes = Vec::new();
    let refined_rows = ratio_rows(op, family, source, target, &refined, &mut refined_notes)?;
    let max = |r: &[RatioRow]| r.iter().map(|x| x.ratio).fold(0.0, f64::max);
    let max_ratio = max(&rows);
    let min_ratio = rows.iter().map(|x| x.ratio).fold(f64::INFINITY, f64::min);
    let refined_max_ratio = max(&refined_rows);
    let stable = !rows.is_empty()
        && max_ratio.is_finite()
        && (refined_max_ratio / max_ratio - 1.0).abs() <= stability_tol;
    Ok(BoundednessReport {
        operator: op.clone(),
        hypotheses: op.hypotheses(scheme.dimension()),
        rows,
        refined_rows,
        max_ratio,
        min_ratio,
        refined_max_ratio,
        stability_tol,
        stable,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scheme::SchemeParams;

    fn small() -> SamplingScheme {
        SamplingScheme::new(SchemeParams {
            degree_cap: 24,
            points_per_axis: 128,
            ..SchemeParams::default_for(1)
        })
        .unwrap()
    }

    #[test]
    fn riesz_on_h4() {
        let f = HermiteExpansion::from_1d(8, &[(4, 1.0)]).unwrap();
        let r = riesz_potential(&f, 0.5).unwrap();
        assert!((r.coeffs()[4] - 1.0 / 3.0).abs() < 1e-15);
        assert!((riesz_time_integral(9.0, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        assert!(matches!(riesz_potential(&f, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn riesz_composition() {
        let f = HermiteExpansion::from_1d(16, &[(0, 1.0), (3, -2.0), (16, 0.5)]).unwrap();
        let a = riesz_potential(&riesz_potential(&f, 0.3).unwrap(), 0.9).unwrap();
        let b = riesz_potential(&f, 1.2).unwrap();
        assert!(a.difference(&b).unwrap().l2_norm() < 1e-12);
    }

    #[test]
    fn bessel_examples() {
        let f = HermiteExpansion::from_1d(16, &[(0, 1.0), (7, 1.0)]).unwrap();
        assert_eq!(bessel_potential(&f, 1.0).unwrap().coeffs()[0], 0.5);
        let b = bessel_potential(&f, 0.7).unwrap();
        let r = riesz_potential(&f, 0.7).unwrap();
        assert!(b.coeffs().iter().zip(r.coeffs()).all(|(x, y)| x.abs() <= y.abs()));
        let sigma = 1e-3;
        let near = bessel_potential(&f, sigma).unwrap();
        let dev = near.difference(&f).unwrap().coeffs().iter().fold(0.0f64, |a, v| a.max(v.abs()));
        assert!(dev <= sigma * (1.0 + 15.0f64).ln());
    }

    #[test]
    fn multiplier_examples() {
        let one = MultiplierProfile::Constant { value: 1.0 };
        for l in [1.0, 9.0, 513.0] {
            assert!((multiplier_symbol(&one, l).unwrap() - 1.0).abs() < 1e-10);
        }
        let exp = MultiplierProfile::ExpDecay {
            amplitude: 1.0,
            rate: 1.0,
        };
        assert!((multiplier_symbol(&exp, 9.0).unwrap() - 0.9).abs() < 1e-8);
        let f = HermiteExpansion::zeros(1, 8).unwrap();
        assert!(spectral_multiplier(&f, &exp).unwrap().is_zero());
    }

    #[test]
    fn sampled_profile_requires_tail() {
        let p = MultiplierProfile::Sampled {
            times: vec![0.0, 1.0],
            values: vec![1.0, 0.5],
            tail_rate: None,
        };
        assert!(multiplier_symbol(&p, 3.0).is_err());
        let p = MultiplierProfile::Sampled {
            times: vec![0.0, 1.0],
            values: vec![1.0, 1.0],
            tail_rate: Some(0.0),
        };
        assert!((multiplier_symbol(&p, 3.0).unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn identity_and_scaling_reports() {
        let s = small();
        let space = SpaceParams {
            alpha: ExponentField::constant(0.0).unwrap(),
            p: ExponentField::constant(2.0).unwrap(),
            q: ExponentField::constant(2.0).unwrap(),
            m: 3,
        };
        let fam = vec![
            ("h0".to_string(), HermiteExpansion::from_1d(24, &[(0, 1.0)]).unwrap()),
            ("h3".to_string(), HermiteExpansion::from_1d(24, &[(3, 1.0)]).unwrap()),
            ("zero".to_string(), HermiteExpansion::zeros(1, 24).unwrap()),
        ];
        let r = boundedness_report(&OperatorSpec::Identity, &fam, &space, &space, &s, 0.1).unwrap();
        assert!(r.rows.iter().all(|x| (x.ratio - 1.0).abs() < 1e-9));
        assert_eq!(r.notes.len(), 1);
        let r = boundedness_report(&OperatorSpec::Scale { factor: 2.0 }, &fam, &space, &space, &s, 0.1)
            .unwrap();
        assert!(r.rows.iter().all(|x| (x.ratio - 2.0).abs() < 1e-9));
        assert!(r.stable);
        assert!(r.to_csv().unwrap().contains("summary"));
    }
}
