//! Task execution and report writing.

use std::fs;
use std::path::Path;

use htl_core::decomposition::{
    heat_decay_audit, molecular_decompose, top_molecules, validate_molecules, AuditSampling,
};
use htl_core::operators::boundedness_report;
use htl_core::report::{write_csv, CsvTable};
use htl_core::suites::{self, SuiteOutcome, BOUNDEDNESS_STABILITY, HEAT_DECAY_STABILITY};
use htl_core::{tl_norm, HermiteExpansion, TestFunction};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{FunctionSpec, Resolved, Task};
use crate::CliError;

/// Report body plus CSV tables and the one-line check summaries.
struct Outcome {
    result: Value,
    tables: Vec<(String, String)>,
    lines: Vec<String>,
    warnings: Vec<String>,
    passed: bool,
}

impl Outcome {
    fn new(result: impl Serialize) -> Result<Self, CliError> {
        Ok(Self {
            result: serde_json::to_value(result).map_err(|e| CliError::Io(e.to_string()))?,
            tables: Vec::new(),
            lines: Vec::new(),
            warnings: Vec::new(),
            passed: true,
        })
    }

    fn table(&mut self, name: &str, table: &CsvTable) -> Result<(), CliError> {
        self.tables.push((name.into(), write_csv(table)?));
        Ok(())
    }
}

fn write(dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn run(r: &Resolved) -> Result<bool, CliError> {
    let task = r.config.task.unwrap_or(Task::VerifyAll);
    let out = match task {
        Task::Norm => norm(r)?,
        Task::Decompose => decompose(r)?,
        Task::Validate => validate(r)?,
        Task::Operator => operator(r)?,
        Task::KernelCheck => battery(r, &[1, 4])?,
        Task::VerifyAll => battery(r, &[1, 2, 3, 4, 5, 6, 7, 8, 9])?,
    };
    let dir = &r.config.output.dir;
    fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let report = json!({
        "task": task,
        "passed": out.passed,
        "config": r.config,
        "result": out.result,
        "warnings": out.warnings,
        "tables": out.tables.iter().map(|t| &t.0).collect::<Vec<_>>(),
    });
    let text = serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    write(dir, "report.json", &text)?;
    for (name, content) in &out.tables {
        write(dir, name, content)?;
    }
    for l in &out.lines {
        println!("{l}");
    }
    for w in &out.warnings {
        println!("warning: {w}");
    }
    println!(
        "{}: {} ({})",
        match task {
            Task::Norm => "norm",
            Task::Decompose => "decompose",
            Task::Validate => "validate",
            Task::Operator => "operator",
            Task::KernelCheck => "kernel-check",
            Task::VerifyAll => "verify-all",
        },
        if out.passed { "ok" } else { "FAILED" },
        dir.join("report.json").display()
    );
    Ok(out.passed)
}

fn norm(r: &Resolved) -> Result<Outcome, CliError> {
    let s = &r.space;
    let base = tl_norm(&r.function, &s.alpha, &s.p, &s.q, s.m, &r.scheme)?;
    let fine_scheme = r.scheme.refined(r.config.refine)?;
    let fine = tl_norm(&r.function, &s.alpha, &s.p, &s.q, s.m, &fine_scheme)?;
    let change = (fine.total / base.total - 1.0).abs();
    let mut o = Outcome::new(json!({ "breakdown": base, "refined_total": fine.total, "refined_rel_change": change }))?;
    let mut t = CsvTable::new(&["scheme", "term_lowpass", "term_squarefn", "total"]);
    for (label, b) in [("base", &base), ("refined", &fine)] {
        t.push(vec![
            label.into(),
            format!("{:e}", b.term_lowpass),
            format!("{:e}", b.term_squarefn),
            format!("{:e}", b.total),
        ]);
    }
    o.table("norm.csv", &t)?;
    o.warnings.extend(base.warnings.iter().cloned());
    o.lines.push(format!(
        "norm: total={:.12e} lowpass={:.6e} squarefn={:.6e} refined-change={:.2e}",
        base.total, base.term_lowpass, base.term_squarefn, change
    ));
    Ok(o)
}

fn decomposition(r: &Resolved) -> Result<htl_core::Decomposition, CliError> {
    let s = &r.space;
    Ok(molecular_decompose(&r.function, &r.config.decompose, &s.alpha, &s.p, &s.q, &r.scheme)?)
}

fn cube_table(dec: &htl_core::Decomposition) -> CsvTable {
    let mut t = CsvTable::new(&["v", "k", "s", "size_constant", "zero_level"]);
    for m in &dec.molecules {
        t.push(vec![
            m.cube.v.to_string(),
            m.cube.k.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "),
            format!("{:e}", dec.coefficients.get(&m.cube)),
            format!("{:e}", m.size_constant),
            m.zero_level.to_string(),
        ]);
    }
    t
}

fn decompose(r: &Resolved) -> Result<Outcome, CliError> {
    let dec = decomposition(r)?;
    let doc = dec.doc();
    let mut o = Outcome::new(&doc)?;
    o.table("cubes.csv", &cube_table(&dec))?;
    if !dec.admissibility.all() {
        o.warnings.push(format!("parameters not admissible for synthesis: {:?}", dec.admissibility));
    }
    o.lines.push(format!(
        "decompose: {} molecules, {} dropped, residual={:.3e}, calderon-remainder={:.3e}",
        dec.molecules.len(),
        dec.dropped.len(),
        dec.residual_l2,
        dec.calderon_remainder
    ));
    Ok(o)
}

fn validate(r: &Resolved) -> Result<Outcome, CliError> {
    let dec = decomposition(r)?;
    let sampling = AuditSampling::for_scheme(&r.scheme);
    let fine = sampling.refined_by(r.config.refine);
    let audits = validate_molecules(&dec.molecules, &sampling)?;
    let failed = audits.iter().filter(|a| !a.passes).count();
    let mut mt = CsvTable::new(&["v", "k", "max_ratio", "size_constant", "passes"]);
    for a in &audits {
        mt.push(vec![
            a.v.to_string(),
            a.k.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "),
            format!("{:e}", a.max_ratio),
            format!("{:e}", a.size_constant),
            a.passes.to_string(),
        ]);
    }
    let m = r.config.decompose.m;
    let mut ht = CsvTable::new(&["v", "k", "heat_constant", "refined_heat_constant", "rel_change"]);
    let mut drift = 0.0f64;
    let mut finite = true;
    for mol in top_molecules(&dec, 4) {
        let a = heat_decay_audit(mol, m, &sampling);
        let b = heat_decay_audit(mol, m, &fine);
        let d = if a == b { 0.0 } else { (b / a - 1.0).abs() };
        finite &= a.is_finite() && b.is_finite();
        drift = drift.max(d);
        ht.push(vec![
            mol.cube.v.to_string(),
            mol.cube.k.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(" "),
            format!("{a:e}"),
            format!("{b:e}"),
            format!("{d:e}"),
        ]);
    }
    let mut o = Outcome::new(json!({
        "molecules": audits.len(),
        "failed": failed,
        "heat_decay_max_rel_change": drift,
        "decomposition": dec.doc(),
    }))?;
    o.table("molecules.csv", &mt)?;
    o.table("heat_decay.csv", &ht)?;
    o.table("cubes.csv", &cube_table(&dec))?;
    o.passed = failed == 0 && finite;
    if drift > HEAT_DECAY_STABILITY {
        o.warnings.push(format!("heat-decay constants drift {:.1}% under refinement", 100.0 * drift));
    }
    o.lines.push(format!("molecule size audit: {} of {} pass", audits.len() - failed, audits.len()));
    o.lines.push(format!(
        "heat-decay audit: constants {}, refinement drift {:.2}%",
        if finite { "finite" } else { "NOT finite" },
        100.0 * drift
    ));
    Ok(o)
}

fn operator(r: &Resolved) -> Result<Outcome, CliError> {
    let mut family: Vec<(String, HermiteExpansion)> = Vec::new();
    let own = match &r.config.function {
        FunctionSpec::Named(t) => t.to_string(),
        FunctionSpec::File { expansion_file } => expansion_file.display().to_string(),
    };
    family.push((own.clone(), r.function.clone()));
    for t in TestFunction::family() {
        if t.to_string() != own {
            family.push((t.to_string(), t.expansion(&r.scheme)?));
        }
    }
    let rep = boundedness_report(
        &r.config.operator,
        &family,
        &r.space,
        &r.target,
        &r.scheme,
        BOUNDEDNESS_STABILITY,
    )?;
    let mut o = Outcome::new(&rep)?;
    o.tables.push(("ratios.csv".into(), rep.to_csv()?));
    for (h, ok) in &rep.hypotheses {
        if !ok {
            o.passed = false;
            o.lines.push(format!("hypothesis failed: {h}"));
        }
    }
    if !(rep.max_ratio.is_finite() && rep.min_ratio > 0.0) {
        o.passed = false;
    }
    if !rep.stable {
        o.warnings.push(format!(
            "ratio not refinement-stable: max {:e} vs refined {:e}",
            rep.max_ratio, rep.refined_max_ratio
        ));
    }
    o.warnings.extend(rep.notes.iter().cloned());
    o.lines.push(format!(
        "operator: ratios in [{:.6}, {:.6}] over {} functions, refined max {:.6}",
        rep.min_ratio,
        rep.max_ratio,
        rep.rows.len(),
        rep.refined_max_ratio
    ));
    Ok(o)
}

fn battery(r: &Resolved, ids: &[u32]) -> Result<Outcome, CliError> {
    let cfg = r.config.battery();
    let mut results: Vec<SuiteOutcome> = Vec::new();
    for (id, _, run) in suites::SUITES {
        if ids.contains(&id) {
            results.push(run(&cfg)?);
        }
    }
    let mut o = Outcome::new(&results)?;
    for s in &results {
        o.passed &= s.passed;
        if !s.stable {
            o.warnings.push(format!("suite {} {} is refinement-unstable", s.id, s.name));
        }
        o.lines.push(s.line());
        for t in &s.tables {
            o.tables.push((t.name.clone(), t.content.clone()));
        }
    }
    Ok(o)
}
