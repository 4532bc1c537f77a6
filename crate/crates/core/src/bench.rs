//! Benchmark harness: baseline vs synthesized kernels over a suite.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SuiteConfig;
use crate::error::{Error, Result};
use crate::ir::{estimated_latency, CostModel, Program};
use crate::kernels::KernelRegistry;
use crate::synth::{cost_fn, synthesize, ReportDoc, SynthContext};
use crate::verify::verify;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgramStats {
    pub instructions: usize,
    pub rotations: usize,
    pub multiplies: usize,
    pub mdepth: u32,
    pub logical_depth: usize,
    pub latency: f64,
    pub cost: f64,
}

impl ProgramStats {
    pub fn of(p: &Program, costs: &CostModel) -> Self {
        let counts = p.instruction_count();
        ProgramStats {
            instructions: counts.total,
            rotations: counts.rotations,
            multiplies: p.multiply_count(),
            mdepth: p.mdepth(),
            logical_depth: p.logical_depth(),
            latency: estimated_latency(p, costs),
            cost: cost_fn(p, costs),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub kernel: String,
    pub outcome: Outcome,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_instructions: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline: Option<ProgramStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub synthesized: Option<ProgramStats>,
    /// Baseline latency over synthesized latency.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub latency_ratio: Option<f64>,
    /// Reasons for a `fail` outcome.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub failures: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ReportDoc>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl BenchRow {
    fn errored(kernel: &str, e: Error, elapsed: Duration) -> Self {
        BenchRow {
            kernel: kernel.into(),
            outcome: Outcome::Error,
            target_instructions: None,
            baseline: None,
            synthesized: None,
            latency_ratio: None,
            failures: Vec::new(),
            error: Some(e.to_string()),
            report: None,
            elapsed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub seed: u64,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.outcome == Outcome::Pass)
    }

    pub fn row(&self, kernel: &str) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.kernel == kernel)
    }

    /// Pretty JSON. Times are included only when `with_times`; without them
    /// identical runs give byte-identical output.
    pub fn to_json(&self, with_times: bool) -> Result<String> {
        let mut doc = serde_json::to_value(self)?;
        if with_times {
            for (row, v) in self.rows.iter().zip(doc["rows"].as_array_mut().into_iter().flatten()) {
                v["elapsed_s"] = row.elapsed.as_secs_f64().into();
                if let (Some(r), Some(rv)) = (&row.report, v.get_mut("report")) {
                    rv["search"]["elapsed_ms"] = r.search.elapsed_ms.into();
                }
            }
        }
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        Ok(text)
    }

    /// Fixed-width text table mirroring baseline vs synthesized columns.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<22} {:>6} {:>6} {:>6} {:>6} {:>6} {:>8} {:>8} {:>7}  result",
            "kernel", "b.ins", "b.dep", "s.ins", "s.dep", "target", "b.cost", "s.cost", "speedup"
        );
        for r in &self.rows {
            let num = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
            let flt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.0}"));
            let mut result = match r.outcome {
                Outcome::Pass => "PASS".to_string(),
                Outcome::Fail => format!("FAIL ({})", r.failures.join("; ")),
                Outcome::Error => format!("ERROR ({})", r.error.as_deref().unwrap_or("")),
            };
            if let Some(rep) = &r.report {
                result.push_str(&format!(" [{}]", serde_json::to_value(rep.status).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()));
            }
            let _ = writeln!(
                out,
                "{:<22} {:>6} {:>6} {:>6} {:>6} {:>6} {:>8} {:>8} {:>7}  {}",
                r.kernel,
                num(r.baseline.map(|b| b.instructions)),
                num(r.baseline.map(|b| b.logical_depth)),
                num(r.synthesized.map(|s| s.instructions)),
                num(r.synthesized.map(|s| s.logical_depth)),
                num(r.target_instructions),
                flt(r.baseline.map(|b| b.cost)),
                flt(r.synthesized.map(|s| s.cost)),
                r.latency_ratio.map_or("-".to_string(), |v| format!("{v:.2}x")),
                result
            );
        }
        out
    }
}

/// Baseline and synthesized program of one kernel, both verified against
/// the same specification.
pub fn bench_kernel(ctx: &SynthContext, registry: &KernelRegistry, kernel: &str, cfg: &SuiteConfig) -> BenchRow {
    let start = Instant::now();
    match run_row(ctx, registry, kernel, cfg) {
        Ok(mut row) => {
            row.elapsed = start.elapsed();
            row
        }
        Err(e) => BenchRow::errored(kernel, e, start.elapsed()),
    }
}

fn run_row(ctx: &SynthContext, registry: &KernelRegistry, name: &str, cfg: &SuiteConfig) -> Result<BenchRow> {
    let kernel = registry.get(name)?;
    let spec = kernel.spec(&cfg.params_for(name))?;
    let baseline = kernel.baseline(&spec)?;
    if !verify(&baseline, &spec)?.is_equivalent() {
        return Err(Error::Internal(format!("baseline of {name} does not verify")));
    }
    let sketch = kernel.sketch(&spec)?;
    let report = synthesize(ctx, &spec, &sketch, &cfg.synth)?;
    let program = &report.final_solution.program;
    if !verify(program, &spec)?.is_equivalent() {
        return Err(Error::Internal(format!("synthesized {name} does not verify")));
    }
    let base = ProgramStats::of(&baseline, &ctx.costs);
    let synth = ProgramStats::of(program, &ctx.costs);
    let target = kernel.target_instructions();
    let mut failures = Vec::new();
    if let Some(t) = target {
        if synth.instructions > t {
            failures.push(format!("{} instructions > target {t}", synth.instructions));
        }
    }
    if synth.instructions > base.instructions {
        failures.push(format!("{} instructions > baseline {}", synth.instructions, base.instructions));
    }
    if synth.cost > base.cost {
        failures.push(format!("cost {} > baseline {}", synth.cost, base.cost));
    }
    Ok(BenchRow {
        kernel: name.into(),
        outcome: if failures.is_empty() { Outcome::Pass } else { Outcome::Fail },
        target_instructions: target,
        baseline: Some(base),
        synthesized: Some(synth),
        latency_ratio: Some(base.latency / synth.latency),
        failures,
        error: None,
        report: Some(report.to_doc(false)?),
        elapsed: Duration::ZERO,
    })
}

/// Runs every kernel of the suite. Rows are independent jobs; the report
/// lists them in suite order regardless of completion order.
pub fn run_suite(ctx: &SynthContext, registry: &KernelRegistry, cfg: &SuiteConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let rows = cfg.kernels.par_iter().map(|k| bench_kernel(ctx, registry, k, cfg)).collect();
    Ok(BenchReport { seed: cfg.synth.seed, rows })
}
