//! Verification battery: one suite per checked property, shared by the
//! command line and the acceptance tests.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::atoms::{embedding_orders, random_atomic_set};
use crate::decomposition::{
    calderon_reconstruct, calderon_symbol, calderon_time_grid, heat_decay_audit, molecular_decompose,
    synthesize_molecules, top_molecules, validate_molecules, AuditSampling, DecomposeParams,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::hermite::HermiteExpansion;
use crate::operators::{
    boundedness_report, multiplier_symbol, spectral_multiplier, validate_riesz, BoundednessReport,
    MultiplierProfile, OperatorSpec, SpaceParams,
};
use crate::report::{write_csv, CsvTable};
use crate::scheme::{SamplingScheme, SchemeParams};
use crate::semigroup::{heat_kernel_spectral, mehler_kernel, poisson_decay_audit, KernelAuditGrid};
use crate::testfns::TestFunction;
use crate::tlspace::{seq_norm, tl_norm};
use crate::varexp::{luxemburg_norm, ExponentField};

pub const MEHLER_TRUNCATION: usize = 300;
pub const MEHLER_REL_TOL: f64 = 1e-8;
pub const MEHLER_ABS_TOL: f64 = 1e-12;
pub const MEHLER_ABS_FLOOR: f64 = 1e-8;
pub const CALDERON_TOL: f64 = 1e-8;
pub const LUXEMBURG_TOL: f64 = 1e-8;
pub const DECAY_TRUNCATION: usize = 4096;
pub const DECAY_STABILITY: f64 = 0.05;
pub const HEAT_DECAY_STABILITY: f64 = 0.10;
pub const ROUNDTRIP_TOL: f64 = 1e-2;
pub const EQUIVALENCE_BOUNDS: (f64, f64) = (1e-2, 1e2);
pub const EQUIVALENCE_STABILITY: f64 = 0.10;
pub const RIESZ_TOL: f64 = 1e-6;
pub const IDENTITY_TOL: f64 = 1e-10;
pub const MULTIPLIER_TOL: f64 = 1e-8;
pub const BOUNDEDNESS_STABILITY: f64 = 0.10;
pub const EMBEDDING_STABILITY: f64 = 0.15;
pub const EMBEDDING_SETS: usize = 20;
/// Degree cap resolving atoms down to level 3.
pub const EMBEDDING_DEGREE: usize = 4096;
/// Largest relative `L^2` mass of an atom allowed above the degree cap.
pub const EMBEDDING_LEAKAGE_TOL: f64 = 1e-2;
pub const RATIO_CEILING: f64 = 1e3;

/// Env var capping the worker count.
pub const THREADS_ENV: &str = "HTL_THREADS";

/// Sizes the global rayon pool from `HTL_THREADS`; returns the cap in force.
pub fn apply_thread_cap() -> Result<Option<usize>> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(None);
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::input(format!("{THREADS_ENV} must be a positive integer, got '{raw}'")))?;
    // a pool already built by an earlier call keeps its size
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(Some(n))
}

/// Knobs shared by every suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryConfig {
    /// Seed of the randomized suites.
    pub seed: u64,
    /// Refinement factor of the stability comparisons.
    pub refine: usize,
    pub scheme: SchemeParams,
    pub decompose: DecomposeParams,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            seed: 20_240_601,
            refine: 2,
            scheme: SchemeParams::default_for(1),
            decompose: DecomposeParams::default(),
        }
    }
}

impl BatteryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.refine < 2 {
            return Err(Error::domain(format!("refine factor must be at least 2, got {}", self.refine)));
        }
        if self.scheme.dimension != 1 {
            return Err(Error::domain("the battery runs in dimension 1"));
        }
        self.scheme.validate()
    }
}

/// A named CSV artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvArtifact {
    pub name: String,
    pub content: String,
}

/// Outcome of one suite: hard pass flag, refinement-stability flag and the
/// numbers behind both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOutcome {
    pub id: u32,
    pub name: String,
    pub passed: bool,
    pub stable: bool,
    pub summary: String,
    pub metrics: BTreeMap<String, f64>,
    pub notes: Vec<String>,
    #[serde(skip)]
    pub tables: Vec<CsvArtifact>,
}

impl SuiteOutcome {
    fn new(id: u32, name: &str) -> Self {
        Self {
            id,
            name: name.into(),
            passed: true,
            stable: true,
            summary: String::new(),
            metrics: BTreeMap::new(),
            notes: Vec::new(),
            tables: Vec::new(),
        }
    }

    fn metric(&mut self, key: impl Into<String>, value: f64) {
        self.metrics.insert(key.into(), value);
    }

    fn table(&mut self, name: &str, table: &CsvTable) -> Result<()> {
        self.tables.push(CsvArtifact {
            name: name.into(),
            content: write_csv(table)?,
        });
        Ok(())
    }

    fn require(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.passed = false;
            self.notes.push(format!("failed: {}", what.into()));
        }
    }

    fn expect_stable(&mut self, ok: bool, what: impl Into<String>) {
        if !ok {
            self.stable = false;
            self.notes.push(format!("unstable: {}", what.into()));
        }
    }

    /// `PASS`/`FAIL` plus stability and the summary.
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {}{}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.summary,
            if self.stable { "" } else { " (refinement-unstable)" }
        )
    }
}

fn rel_change(base: f64, refined: f64) -> f64 {
    if base == refined {
        0.0
    } else {
        (refined / base - 1.0).abs()
    }
}

fn constant(v: f64) -> Result<ExponentField> {
    ExponentField::constant(v)
}

fn scheme_of(cfg: &BatteryConfig) -> Result<SamplingScheme> {
    SamplingScheme::new(cfg.scheme.clone())
}

/// Same scheme with `refine` times as many time nodes per level.
fn time_refined(cfg: &BatteryConfig) -> Result<SamplingScheme> {
    SamplingScheme::new(SchemeParams {
        nodes_per_level: cfg.scheme.nodes_per_level * cfg.refine,
        ..cfg.scheme.clone()
    })
}

fn family(scheme: &SamplingScheme) -> Result<Vec<(String, HermiteExpansion)>> {
    TestFunction::family()
        .iter()
        .map(|t| Ok((t.to_string(), t.expansion(scheme)?)))
        .collect()
}

/// Truncated spectral heat kernel against the closed form.
pub fn mehler_suite(_cfg: &BatteryConfig) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new(1, "mehler-agreement");
    let coords: Vec<f64> = (0..25).map(|i| -3.0 + 0.25 * i as f64).collect();
    let mut table = CsvTable::new(&["t", "max_rel_err", "max_abs_err_small", "tail_bound"]);
    let mut worst_rel = 0.0f64;
    let mut worst_abs = 0.0f64;
    for t in [0.1, 0.5, 1.0, 2.0] {
        let errs: Vec<(f64, f64, f64)> = coords
            .par_iter()
            .flat_map_iter(|&x| coords.iter().map(move |&y| (x, y)))
            .map(|(x, y)| {
                let closed = mehler_kernel(t, &[x], &[y])?;
                let series = heat_kernel_spectral(t, &[x], &[y], MEHLER_TRUNCATION)?;
                let abs = (series.value - closed).abs();
                Ok(if closed.abs() < MEHLER_ABS_FLOOR {
                    (0.0, abs, series.tail_bound)
                } else {
                    (abs / closed.abs(), 0.0, series.tail_bound)
                })
            })
            .collect::<Result<_>>()?;
        let rel = errs.iter().map(|e| e.0).fold(0.0, f64::max);
        let abs = errs.iter().map(|e| e.1).fold(0.0, f64::max);
        let tail = errs.iter().map(|e| e.2).fold(0.0, f64::max);
        table.push(vec![t.to_string(), format!("{rel:e}"), format!("{abs:e}"), format!("{tail:e}")]);
        out.metric(format!("max_rel_err_t{t}"), rel);
        worst_rel = worst_rel.max(rel);
        worst_abs = worst_abs.max(abs);
    }
    out.require(worst_rel <= MEHLER_REL_TOL, format!("relative error {worst_rel:e}"));
    out.require(worst_abs <= MEHLER_ABS_TOL, format!("absolute error {worst_abs:e}"));
    out.metric("max_rel_err", worst_rel);
    out.metric("max_abs_err_small", worst_abs);
    out.summary = format!("D={MEHLER_TRUNCATION}, 25x25 on [-3,3]^2, max rel err {worst_rel:.2e}");
    out.table("mehler.csv", &table)?;
    Ok(out)
}

/// Scalar reproducing identity per eigenvalue and coefficient reconstruction.
pub fn calderon_suite(cfg: &BatteryConfig) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new(2, "calderon-identity");
    let scheme = scheme_of(cfg)?;
    let time = calderon_time_grid(cfg.scheme.time_levels)?;
    let mut table = CsvTable::new(&["l", "max_symbol_err"]);
    let mut worst = 0.0f64;
    for l in 1..=6u32 {
        let err = (0..256usize)
            .map(|m| (calderon_symbol((2 * m + 1) as f64, l, &time) - 1.0).abs())
            .fold(0.0, f64::max);
        table.push(vec![l.to_string(), format!("{err:e}")]);
        out.metric(format!("symbol_err_l{l}"), err);
        worst = worst.max(err);
    }
    out.require(worst <= CALDERON_TOL, format!("symbol error {worst:e}"));
    let f = HermiteExpansion::from_1d(scheme.degree_cap(), &[(0, 1.0), (4, 0.5)])?;
    let mut recon = 0.0f64;
    for l in 1..=6u32 {
        let r = calderon_reconstruct(&f, l, &scheme)?;
        recon = recon.max(r.difference(&f)?.l2_norm() / f.l2_norm());
    }
    out.require(recon <= CALDERON_TOL, format!("reconstruction error {recon:e}"));
    out.metric("max_symbol_err", worst);
    out.metric("reconstruction_rel_err", recon);
    out.summary = format!("l=1..6, λ≤511: symbol err {worst:.2e}, h0+0.5h4 rel err {recon:.2e}");
    out.table("calderon.csv", &table)?;
    Ok(out)
}

/// Luxemburg norm against direct quadrature and the two-piece example.
pub fn luxemburg_suite(_cfg: &BatteryConfig) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new(3, "luxemburg-norms");
    let grid = Grid::new(1, 8.0, 512)?;
    let f = grid.sample(|x| (1.0 + x[0] * x[0]) * (-x[0] * x[0] / 2.0).exp());
    let mut table = CsvTable::new(&["p", "luxemburg", "direct", "rel_err"]);
    let mut worst = 0.0f64;
    for p in [1.0, 2.0, 3.7] {
        let lux = luxemburg_norm(&f, &grid, &constant(p)?)?.norm;
        let direct = grid
            .integrate(&f.iter().map(|v| v.abs().powf(p)).collect::<Vec<_>>())
            .powf(1.0 / p);
        let err = (lux - direct).abs() / direct;
        table.push(vec![p.to_string(), lux.to_string(), direct.to_string(), format!("{err:e}")]);
        out.metric(format!("rel_err_p{p}"), err);
        worst = worst.max(err);
    }
    out.require(worst <= LUXEMBURG_TOL, format!("constant-exponent error {worst:e}"));
    let ind = grid.sample(|x| if (0.0..1.0).contains(&x[0]) { 1.0 } else { 0.0 });
    let p = ExponentField::sampled_from(&grid, |x| if x[0] < 0.5 { 2.0 } else { 4.0 })?;
    let two_piece = luxemburg_norm(&ind, &grid, &p)?.norm;
    out.require(
        (two_piece - 1.0).abs() <= LUXEMBURG_TOL,
        format!("two-piece norm {two_piece}"),
    );
    table.push(vec!["2|4".into(), two_piece.to_string(), "1".into(), format!("{:e}", (two_piece - 1.0).abs())]);
    out.metric("max_rel_err", worst);
    out.metric("two_piece_norm", two_piece);
    out.summary = format!("p∈{{1,2,3.7}} err {worst:.2e}, two-piece norm {two_piece:.10}");
    out.table("luxemburg.csv", &table)?;
    Ok(out)
}

/// Poisson-kernel decay constants for `k = 0..4` and their refinement drift.
pub fn kernel_decay_suite(cfg: &BatteryConfig) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new(4, "kernel-decay");
    let base = KernelAuditGrid::new(0.5, 2.0, 9, 3.0, 25, DECAY_TRUNCATION);
    let mut fine = base.clone();
    let mut f = 1;
    while f < cfg.refine {
        fine = fine.refined();
        f *= 2;
    }
    let mut table = CsvTable::new(&["k", "constant", "refined_constant", "rel_change"]);
    let audits: Vec<(u32, f64, f64)> = (0..=4u32)
        .into_par_iter()
        .map(|k| {
            let a = poisson_decay_audit(k, &base)?;
            let b = poisson_decay_audit(k, &fine)?;
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::accuracy(format!("non-finite decay constant at k = {k}")));
            }
            Ok((k, a.sup, b.sup))
        })
        .collect::<Result<_>>()?;
    let mut drift = 0.0f64;
    for &(k, a, b) in &audits {
        let d = rel_change(a, b);
        drift = drift.max(d);
        table.push(vec![k.to_string(), format!("{a:e}"), format!("{b:e}"), format!("{d:e}")]);
        out.metric(format!("constant_k{k}"), a);
        out.require(a.is_finite() && a > 0.0, format!("constant at k = {k}"));
        out.expect_stable(d <= DECAY_STABILITY, format!("k = {k} drift {d:.3}"));
    }
    out.metric("max_rel_change", drift);
    out.summary = format!("k=0..4 constants finite, max refinement drift {:.2}%", 100.0 * drift);
    out.table("kernel_decay.csv", &table)?;
    Ok(out)
}

fn reference_space(alpha: f64) -> Result<SpaceParams> {
    Ok(SpaceParams {
        alpha: constant(alpha)?,
        p: constant(2.0)?,
        q: constant(2.0)?,
        m: 6,
    })
}

/// Variable-exponent space used by the equivalence suites.
fn variable_space() -> Result<SpaceParams> {
    Ok(SpaceParams {
        alpha: ExponentField::affine_clamped(0.5, 0.1, 0.2, 0.8)?,
        p: ExponentField::affine_clamped(2.25, 0.25, 1.5, 3.0)?,
        q: ExponentField::affine_clamped(2.0, -0.2, 1.5, 2.5)?,
        m: 6,
    })
}

/// Every emitted molecule passes its size audit; heat-decay constants of
/// the leading molecules are finite and refinement-stable.
pub fn molecule_suite(cfg: &BatteryConfig) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new(5, "molecule-audit");
    let scheme = scheme_of(cfg)?;
    let space = reference_space(0.5)?;
    let sampling = AuditSampling::for_scheme(&scheme);
    let fine = sampling.refined_by(cfg.refine);
    let mut table = CsvTable::new(&[
        "function", "molecules", "failed", "max_size_ratio", "heat_constant", "refined_heat_constant",
        "max_rel_change",
    ]);
    let mut total = 0usize;
    let mut worst_drift = 0.0f64;
    for (name, f) in family(&scheme)? {
        let dec = molecular_decompose(&f, &cfg.decompose, &space.alpha, &space.p, &space.q, &scheme)?;
        let audits = validate_molecules(&dec.molecules, &sampling)?;
        let failed = audits.iter().filter(|a| !a.passes).count();
        let max_ratio = audits.iter().map(|a| a.max_ratio / a.size_constant).fold(0.0, f64::max);
        out.require(failed == 0, format!("{failed} molecules of {name} exceed their constant"));
        let top = top_molecules(&dec, 4);
        let pairs: Vec<(f64, f64)> = top
            .par_iter()
            .map(|m| {
                (
                    heat_decay_audit(m, cfg.decompose.m, &sampling),
                    heat_decay_audit(m, cfg.decompose.m, &fine),
                )
            })
            .collect();
        let heat = pairs.iter().map(|p| p.0).fold(0.0, f64::max);
        let heat_fine = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
        let drift = pairs.iter().map(|&(a, b)| rel_change(a, b)).fold(0.0, f64::max);
        out.require(
            pairs.iter().all(|p| p.0.is_finite() && p.1.is_finite()),
            format!("non-finite heat-decay constant for {name}"),
        );
        out.expect_stable(drift <= HEAT_DECAY_STABILITY, format!("{name} heat-decay drift {drift:.3}"));
        worst_drift = worst_drift.max(drift);
        total += dec.molecules.len();
        table.push(vec![
            name.clone(),
            dec.molecules.len().to_string(),
            failed.to_string(),
            format!("{max_ratio:e}"),
            format!("{heat:e}"),
            format!("{heat_fine:e}"),
            format!("{drift:e}"),
        ]);
        out.metric(format!("heat_constant_{name}"), heat);
    }
    out.metric("molecules", total as f64);
    out.metric("max_heat_rel_change", worst_drift);
    out.summary = format!(
        "{total} molecules audited, heat-decay drift {:.2}%",
        100.0 * worst_drift
    );
    out.table("molecules.csv", &table)?;
    Ok(out)
}

/// Decomposition followed by molecular synthesis reproduces the input.
pub fn roundtrip_suite(cfg: &BatteryConfig) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new(6, "decomposition-roundtrip");
    let scheme = scheme_of(cfg)?;
    let space = reference_space(0.0)?;
    let inputs = vec![
        ("h0+0.5h4".to_string(), HermiteExpansion::from_1d(scheme.degree_cap(), &[(0, 1.0), (4, 0.5)])?),
        ("gaussian(1)".to_string(), TestFunction::Gaussian(1.0).expansion(&scheme)?),
    ];
    let mut table = CsvTable::new(&["function", "molecules", "dropped", "residual_l2", "calderon_remainder"]);
    let mut worst = 0.0f64;
    for (name, f) in inputs {
        let dec = molecular_decompose(&f, &cfg.decompose, &space.alpha, &space.p, &space.q, &scheme)?;
        let back = synthesize_molecules(&dec.coefficients, &dec.molecules)?;
        let residual = back.difference(&f)?.l2_norm() / f.l2_norm();
        worst = worst.max(residual);
        out.require(residual <= ROUNDTRIP_TOL, format!("{name} residual {residual:e}"));
        table.push(vec![
            name.clone(),
            dec.molecules.len().to_string(),
            dec.dropped.len().to_string(),
            format!("{residual:e}"),
            format!("{:e}", dec.calderon_remainder),
        ]);
        out.metric(format!("residual_{name}"), residual);
    }
    out.summary = format!(
        "v_max={}, D={}: max residual {worst:.2e}",
        cfg.decompose.v_max,
        scheme.degree_cap()
    );
    out.table("roundtrip.csv", &table)?;
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct EquivalenceRow {
    analysis: f64,
    synthesis: f64,
    m_ratio: f64,
}

fn equivalence_rows(
    space: &SpaceParams,
    members: &[(String, HermiteExpansion)],
    cfg: &BatteryConfig,
    scheme: &SamplingScheme,
) -> Result<Vec<EquivalenceRow>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut rows = Vec::new();
    for (_, f) in members {
        let tl = tl_norm(f, &space.alpha, &space.p, &space.q, space.m, scheme)?.total;
        let tl8 = tl_norm(f, &space.alpha, &space.p, &space.q, space.m + 2, scheme)?.total;
        let dec = molecular_decompose(f, &cfg.decompose, &space.alpha, &space.p, &space.q, scheme)?;
        let sq = seq_norm(&dec.coefficients, &space.alpha, &space.p, &space.q, scheme.grid())?;
        let mut perturbed = dec.coefficients.clone();
        for s in perturbed.entries.values_mut() {
            *s *= rng.random_range(-1.0..1.0);
        }
        // molecules normalized to a uniform size constant of 1
        let mut normalized = perturbed.clone();
        for m in &dec.molecules {
            if m.size_constant > 0.0 {
                if let Some(s) = normalized.entries.get_mut(&m.cube) {
                    *s /= m.size_constant;
                }
            }
        }
        let g = synthesize_molecules(&normalized, &dec.molecules)?;
        let tl_g = tl_norm(&g, &space.alpha, &space.p, &space.q, space.m, scheme)?.total;
        let sq_g = seq_norm(&perturbed, &space.alpha, &space.p, &space.q, scheme.grid())?;
        rows.push(EquivalenceRow {
            analysis: sq / tl,
            synthesis: tl_g / sq_g,
            m_ratio: tl / tl8,
        });
    }
    Ok(rows)
}

/// Analysis, synthesis and `m`-independence ratios over the family.
pub fn equivalence_suite(cfg: &BatteryConfig) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new(7, "norm-equivalence");
    let scheme = scheme_of(cfg)?;
    let fine = time_refined(cfg)?;
    let members = family(&scheme)?;
    let (lo, hi) = EQUIVALENCE_BOUNDS;
    let mut table = CsvTable::new(&[
        "space", "function", "analysis", "synthesis", "m6_over_m8", "m6_over_m8_refined", "rel_change",
    ]);
    let spaces = [("reference", reference_space(0.5)?), ("variable", variable_space()?)];
    let mut extremes = (f64::INFINITY, 0.0f64);
    let mut worst_drift = 0.0f64;
    for (label, space) in &spaces {
        let rows = equivalence_rows(space, &members, cfg, &scheme)?;
        let refined = equivalence_rows(space, &members, cfg, &fine)?;
        for (((name, _), r), rf) in members.iter().zip(&rows).zip(&refined) {
            // analysis and synthesis are one-sided; m-independence is two-sided
            for (kind, v, floor) in [
                ("analysis", r.analysis, 0.0),
                ("synthesis", r.synthesis, 0.0),
                ("m-ratio", r.m_ratio, lo),
            ] {
                out.require(
                    v.is_finite() && v > floor && v <= hi,
                    format!("{label}/{name} {kind} ratio {v:e} outside ({floor}, {hi}]"),
                );
                extremes = (extremes.0.min(v), extremes.1.max(v));
            }
            let drift = rel_change(r.m_ratio, rf.m_ratio);
            worst_drift = worst_drift.max(drift);
            out.expect_stable(
                drift <= EQUIVALENCE_STABILITY,
                format!("{label}/{name} m-ratio drift {drift:.3}"),
            );
            table.push(vec![
                label.to_string(),
                name.clone(),
                format!("{:e}", r.analysis),
                format!("{:e}", r.synthesis),
                format!("{:e}", r.m_ratio),
                format!("{:e}", rf.m_ratio),
                format!("{drift:e}"),
            ]);
        }
    }
    out.metric("min_ratio", extremes.0);
    out.metric("max_ratio", extremes.1);
    out.metric("max_m_ratio_rel_change", worst_drift);
    out.summary = format!(
        "ratios in [{:.3}, {:.3}], m-ratio drift {:.2}%",
        extremes.0,
        extremes.1,
        100.0 * worst_drift
    );
    out.table("equivalence.csv", &table)?;
    Ok(out)
}

/// Riesz time-integral agreement, unit multiplier and `e^{-t}` multiplier.
pub fn operator_identity_suite(cfg: &BatteryConfig) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new(8, "operator-identities");
    let scheme = scheme_of(cfg)?;
    let f = TestFunction::Gaussian(1.0).expansion(&scheme)?;
    let mut table = CsvTable::new(&["check", "value", "error"]);
    let mut riesz = 0.0f64;
    for sigma in [0.5, 1.0, 1.5] {
        let v = validate_riesz(&f, sigma)?;
        riesz = riesz.max(v.max_rel_discrepancy);
        table.push(vec![format!("riesz sigma={sigma}"), String::new(), format!("{:e}", v.max_rel_discrepancy)]);
        out.metric(format!("riesz_gap_sigma{sigma}"), v.max_rel_discrepancy);
    }
    out.require(riesz <= RIESZ_TOL, format!("Riesz symbol gap {riesz:e}"));
    let one = spectral_multiplier(&f, &MultiplierProfile::Constant { value: 1.0 })?;
    let id_err = one.difference(&f)?.l2_norm() / f.l2_norm();
    out.require(id_err <= IDENTITY_TOL, format!("unit multiplier error {id_err:e}"));
    table.push(vec!["unit multiplier".into(), String::new(), format!("{id_err:e}")]);
    let decay = MultiplierProfile::ExpDecay {
        amplitude: 1.0,
        rate: 1.0,
    };
    let m9 = multiplier_symbol(&decay, 9.0)?;
    let m9_err = (m9 - 0.9).abs();
    out.require(m9_err <= MULTIPLIER_TOL, format!("e^(-t) multiplier at 9 is {m9}"));
    table.push(vec!["exp multiplier at 9".into(), m9.to_string(), format!("{m9_err:e}")]);
    out.metric("max_riesz_gap", riesz);
    out.metric("unit_multiplier_err", id_err);
    out.metric("exp_multiplier_at_9", m9);
    out.summary = format!("Riesz gap {riesz:.2e}, identity err {id_err:.2e}, m(9)={m9:.10}");
    out.table("operators.csv", &table)?;
    Ok(out)
}

fn report_row(table: &mut CsvTable, label: &str, r: &BoundednessReport) {
    for (row, fine) in r.rows.iter().zip(&r.refined_rows) {
        table.push(vec![
            label.into(),
            row.member_id.clone(),
            format!("{:e}", row.source_norm),
            format!("{:e}", row.target_norm),
            format!("{:e}", row.ratio),
            format!("{:e}", fine.ratio),
        ]);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSummary {
    pub ratios: Vec<f64>,
    pub refined_ratios: Vec<f64>,
    pub max_ratio: f64,
    pub refined_max_ratio: f64,
    pub max_leakage: f64,
    pub hypothesis_ok: bool,
}

/// Embedding ratios of seeded random atomic sets on `scheme` and its
/// spatial-and-time refinement; refuses spaces with `α⁺ ≥ 0`.
pub fn embedding_family(
    space: &SpaceParams,
    cfg: &BatteryConfig,
    scheme: &SamplingScheme,
) -> Result<EmbeddingSummary> {
    use crate::atoms::embedding_check;
    if !(space.alpha.p_plus < 0.0) {
        return Err(Error::domain(format!(
            "atomic embedding needs α+ < 0, got α+ = {}",
            space.alpha.p_plus
        )));
    }
    let fine = scheme.refined(cfg.refine)?;
    let (k, l) = embedding_orders(space, scheme.dimension());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let sets = (0..EMBEDDING_SETS)
        .map(|_| random_atomic_set(&mut rng, scheme.dimension(), 3, 8, 3.0, k, l))
        .collect::<Result<Vec<_>>>()?;
    let mut ratios = Vec::new();
    let mut refined_ratios = Vec::new();
    let mut max_leakage = 0.0f64;
    let mut hypothesis_ok = true;
    for (s, atoms) in &sets {
        let a = embedding_check(s, atoms, space, scheme)?;
        let b = embedding_check(s, atoms, space, &fine)?;
        hypothesis_ok &= a.hypothesis_ok && b.hypothesis_ok;
        max_leakage = max_leakage.max(a.max_leakage);
        if let (Some(x), Some(y)) = (a.ratio, b.ratio) {
            ratios.push(x);
            refined_ratios.push(y);
        }
    }
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(EmbeddingSummary {
        max_ratio: max(&ratios),
        refined_max_ratio: max(&refined_ratios),
        ratios,
        refined_ratios,
        max_leakage,
        hypothesis_ok,
    })
}

/// Ratio tables for the Riesz potential, the `e^{-t}` multiplier and the
/// atomic embedding.
pub fn boundedness_suite(cfg: &BatteryConfig) -> Result<SuiteOutcome> {
    let mut out = SuiteOutcome::new(9, "boundedness");
    let scheme = scheme_of(cfg)?;
    let members = family(&scheme)?;
    let riesz = OperatorSpec::Riesz { sigma: 1.0 };
    let sine = |shift: f64| {
        ExponentField::sampled_from(scheme.grid(), move |x| {
            (0.1 * x[0].sin()).clamp(-0.2, 0.2) + shift
        })
    };
    let cases = vec![
        ("riesz-constant", riesz.clone(), reference_space(0.0)?, reference_space(2.0)?),
        (
            "riesz-sine",
            riesz,
            SpaceParams {
                alpha: sine(0.0)?,
                ..reference_space(0.0)?
            },
            SpaceParams {
                alpha: sine(2.0)?,
                ..reference_space(0.0)?
            },
        ),
        (
            "multiplier-exp",
            OperatorSpec::Multiplier {
                profile: MultiplierProfile::ExpDecay {
                    amplitude: 1.0,
                    rate: 1.0,
                },
            },
            variable_space()?,
            variable_space()?,
        ),
    ];
    let mut table = CsvTable::new(&["suite", "member_id", "source_norm", "target_norm", "ratio", "refined_ratio"]);
    for (label, op, source, target) in &cases {
        let r = boundedness_report(op, &members, source, target, &scheme, BOUNDEDNESS_STABILITY)?;
        for (h, ok) in &r.hypotheses {
            out.require(*ok, format!("{label}: hypothesis {h}"));
        }
        out.require(
            r.rows.len() == members.len() && r.max_ratio.is_finite() && r.max_ratio <= RATIO_CEILING,
            format!("{label}: max ratio {:e}", r.max_ratio),
        );
        out.require(r.min_ratio > 0.0, format!("{label}: min ratio {:e}", r.min_ratio));
        out.expect_stable(
            r.stable,
            format!("{label}: refined max {:e} vs {:e}", r.refined_max_ratio, r.max_ratio),
        );
        out.metric(format!("{label}_max_ratio"), r.max_ratio);
        out.metric(format!("{label}_refined_max_ratio"), r.refined_max_ratio);
        report_row(&mut table, label, &r);
    }
    let negative = reference_space(-0.3)?;
    let atom_scheme = SamplingScheme::new(SchemeParams {
        degree_cap: EMBEDDING_DEGREE,
        ..cfg.scheme.clone()
    })?;
    let emb = embedding_family(&negative, cfg, &atom_scheme)?;
    out.require(emb.hypothesis_ok, "embedding hypothesis α+ < 0");
    out.require(
        emb.max_leakage <= EMBEDDING_LEAKAGE_TOL,
        format!("atom mass above the degree cap {:e}", emb.max_leakage),
    );
    out.require(
        emb.ratios.len() == EMBEDDING_SETS && emb.max_ratio.is_finite() && emb.max_ratio <= RATIO_CEILING,
        format!("embedding max ratio {:e} over {} sets", emb.max_ratio, emb.ratios.len()),
    );
    let drift = rel_change(emb.max_ratio, emb.refined_max_ratio);
    out.expect_stable(drift <= EMBEDDING_STABILITY, format!("embedding drift {drift:.3}"));
    let refused = matches!(
        embedding_family(&reference_space(0.3)?, cfg, &scheme),
        Err(Error::Domain(_))
    );
    out.require(refused, "embedding with α+ ≥ 0 was not refused");
    for (i, (a, b)) in emb.ratios.iter().zip(&emb.refined_ratios).enumerate() {
        table.push(vec![
            "embedding".into(),
            format!("set-{i}"),
            String::new(),
            String::new(),
            format!("{a:e}"),
            format!("{b:e}"),
        ]);
    }
    out.metric("embedding_max_ratio", emb.max_ratio);
    out.metric("embedding_refined_max_ratio", emb.refined_max_ratio);
    out.metric("embedding_max_leakage", emb.max_leakage);
    let riesz_max = out.metrics["riesz-constant_max_ratio"].max(out.metrics["riesz-sine_max_ratio"]);
    out.summary = format!(
        "Riesz max {riesz_max:.3}, multiplier max {:.3}, embedding max {:.3} (drift {:.1}%)",
        out.metrics["multiplier-exp_max_ratio"],
        emb.max_ratio,
        100.0 * drift
    );
    out.table("boundedness.csv", &table)?;
    Ok(out)
}

/// Suite ids with their runners, in battery order.
pub type SuiteFn = fn(&BatteryConfig) -> Result<SuiteOutcome>;

pub const SUITES: [(u32, &str, SuiteFn); 9] = [
    (1, "mehler-agreement", mehler_suite),
    (2, "calderon-identity", calderon_suite),
    (3, "luxemburg-norms", luxemburg_suite),
    (4, "kernel-decay", kernel_decay_suite),
    (5, "molecule-audit", molecule_suite),
    (6, "decomposition-roundtrip", roundtrip_suite),
    (7, "norm-equivalence", equivalence_suite),
    (8, "operator-identities", operator_identity_suite),
    (9, "boundedness", boundedness_suite),
];

/// Runs every suite in order.
pub fn run_battery(cfg: &BatteryConfig) -> Result<Vec<SuiteOutcome>> {
    cfg.validate()?;
    SUITES.iter().map(|(_, _, run)| run(cfg)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_line_format() {
        let mut o = SuiteOutcome::new(3, "x");
        o.summary = "ok".into();
        assert_eq!(o.line(), "[PASS]  3 x: ok");
        o.require(false, "bad");
        o.expect_stable(false, "drift");
        assert!(o.line().starts_with("[FAIL]"));
        assert!(o.line().ends_with("(refinement-unstable)"));
        assert_eq!(o.notes.len(), 2);
    }

    #[test]
    fn config_validation() {
        assert!(BatteryConfig::default().validate().is_ok());
        let bad = BatteryConfig {
            refine: 1,
            ..BatteryConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn fast_suites_pass() {
        let cfg = BatteryConfig::default();
        for run in [luxemburg_suite, operator_identity_suite] {
            let o = run(&cfg).unwrap();
            assert!(o.passed && o.stable, "{o:?}");
        }
    }

    #[test]
    fn rel_change_handles_equal_zeros() {
        assert_eq!(rel_change(0.0, 0.0), 0.0);
        assert!((rel_change(2.0, 2.1) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn positive_alpha_embedding_is_refused() {
        let cfg = BatteryConfig::default();
        let scheme = SamplingScheme::new(SchemeParams {
            degree_cap: 16,
            points_per_axis: 64,
            ..SchemeParams::default_for(1)
        })
        .unwrap();
        let r = embedding_family(&reference_space(0.3).unwrap(), &cfg, &scheme);
        assert!(matches!(r, Err(Error::Domain(_))));
    }
}
