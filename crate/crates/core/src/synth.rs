//! CEGIS over sketch lengths, followed by cost minimization.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::clock::{Clock, Deadline, SystemClock};
use crate::error::{Error, Result};
use crate::ir::{estimated_latency, json, CostModel, InstrCount, Program};
use crate::search::{EnumerativeBackend, SearchBackend, SearchConfig, SearchOutcome, SearchStats};
use crate::sketch::Sketch;
use crate::spec::{random_example, Example, KernelSpec};
use crate::verify::{check_on_examples, verify, Verdict};

pub const DEFAULT_L_MAX: usize = 12;
pub const DEFAULT_TIMEOUT_SECS: f64 = 1200.0;

/// `latency * (1 + mdepth)`.
pub fn cost_fn(p: &Program, m: &CostModel) -> f64 {
    estimated_latency(p, m) * (1.0 + p.mdepth() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub l_min: usize,
    pub l_max: usize,
    /// Seconds without progress before giving up.
    pub timeout_secs: f64,
    pub optimize: bool,
    pub seed: u64,
    pub symmetry_breaking: bool,
    pub observational: bool,
    pub node_budget: Option<u64>,
    pub backend: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            l_min: 1,
            l_max: DEFAULT_L_MAX,
            timeout_secs: DEFAULT_TIMEOUT_SECS,
            optimize: true,
            seed: 0,
            symmetry_breaking: true,
            observational: true,
            node_budget: None,
            backend: "enumerative".into(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.l_min == 0 || self.l_min > self.l_max {
            return Err(Error::Config(format!("need 1 <= l_min <= l_max, got {}..{}", self.l_min, self.l_max)));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Config("timeout must be positive".into()));
        }
        if self.node_budget == Some(0) {
            return Err(Error::Config("node budget must be positive".into()));
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    fn search(&self, spec: &KernelSpec, deadline: Deadline) -> SearchConfig {
        SearchConfig {
            min_degree: output_degree(spec),
            symmetry_breaking: self.symmetry_breaking,
            observational: self.observational,
            node_budget: self.node_budget,
            deadline: Some(deadline),
            ..SearchConfig::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Optimal,
    TimeoutBest,
    InitialOnly,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub program: Program,
    pub cost: f64,
    pub mdepth: u32,
    pub counts: InstrCount,
    pub examples_used: usize,
    pub status: Status,
}

impl Solution {
    fn new(program: Program, costs: &CostModel, examples_used: usize, status: Status) -> Self {
        Solution {
            cost: cost_fn(&program, costs),
            mdepth: program.mdepth(),
            counts: program.instruction_count(),
            examples_used,
            status,
            program,
        }
    }

    pub fn summary(&self) -> Result<SolutionSummary> {
        Ok(SolutionSummary {
            cost: self.cost,
            mdepth: self.mdepth,
            counts: self.counts,
            examples_used: self.examples_used,
            status: self.status,
            program: json::to_value(&self.program)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub cost: f64,
    pub mdepth: u32,
    pub counts: InstrCount,
    pub examples_used: usize,
    pub status: Status,
    pub program: serde_json::Value,
}

/// Shared services for a synthesis job.
#[derive(Clone)]
pub struct SynthContext {
    pub backend: Arc<dyn SearchBackend>,
    pub costs: CostModel,
    pub clock: Arc<dyn Clock>,
}

impl SynthContext {
    pub fn new(backend: Arc<dyn SearchBackend>, costs: CostModel, clock: Arc<dyn Clock>) -> Self {
        SynthContext { backend, costs, clock }
    }
}

impl Default for SynthContext {
    fn default() -> Self {
        SynthContext {
            backend: Arc::new(EnumerativeBackend::new()),
            costs: CostModel::default(),
            clock: Arc::new(SystemClock::new()),
        }
    }
}

/// Mutable CEGIS state carried from initial synthesis into optimization.
#[derive(Debug, Clone, Default)]
pub struct CegisState {
    pub examples: Vec<Example>,
    pub stats: SearchStats,
    pub length: usize,
    pub iterations: usize,
}

impl CegisState {
    fn add_counterexample(&mut self, candidate: &Program, example: Example) -> Result<()> {
        if check_on_examples(candidate, std::slice::from_ref(&example))?.is_none() {
            return Err(Error::Internal("counterexample does not refute the candidate".into()));
        }
        self.examples.push(example);
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthReport {
    pub kernel: String,
    pub initial: Solution,
    pub final_solution: Solution,
    pub initial_time: Duration,
    pub total_time: Duration,
    pub length: usize,
    pub examples: usize,
    /// Costs of every verified solution, in the order found.
    pub trajectory: Vec<f64>,
    pub stats: SearchStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub kernel: String,
    pub examples: usize,
    pub length: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub status: Status,
    pub trajectory: Vec<f64>,
    pub initial: SolutionSummary,
    #[serde(rename = "final")]
    pub final_solution: SolutionSummary,
    pub search: SearchStats,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_time_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub total_time_s: Option<f64>,
}

impl SynthReport {
    /// JSON form. Wall-clock fields are omitted unless `with_times`, so that
    /// reports of identical runs are byte-identical.
    pub fn to_doc(&self, with_times: bool) -> Result<ReportDoc> {
        let mut search = self.stats.clone();
        if !with_times {
            search.elapsed_ms = 0.0;
        }
        Ok(ReportDoc {
            kernel: self.kernel.clone(),
            examples: self.examples,
            length: self.length,
            initial_cost: self.initial.cost,
            final_cost: self.final_solution.cost,
            status: self.final_solution.status,
            trajectory: self.trajectory.clone(),
            initial: self.initial.summary()?,
            final_solution: self.final_solution.summary()?,
            search,
            initial_time_s: with_times.then(|| self.initial_time.as_secs_f64()),
            total_time_s: with_times.then(|| self.total_time.as_secs_f64()),
        })
    }
}

/// Largest degree among the masked output polynomials, with binary inputs
/// reduced to multilinear form.
pub fn output_degree(spec: &KernelSpec) -> u32 {
    let binary = |v: u32| spec.is_binary_var(v);
    spec.mask
        .iter()
        .filter_map(|&s| spec.out_polys[s].as_ref())
        .map(|p| if spec.has_binary_inputs() { p.multilinearize(&binary).degree() } else { p.degree() })
        .max()
        .unwrap_or(0) as u32
}

/// Finds a verified completion of minimal length.
pub fn synthesize_initial(
    ctx: &SynthContext,
    spec: &KernelSpec,
    sketch: &Sketch,
    cfg: &SynthConfig,
) -> Result<(Solution, CegisState)> {
    cfg.validate()?;
    spec.validate()?;
    if sketch.params != spec.ring || sketch.ct_inputs.len() != spec.inputs.len() {
        return Err(Error::Signature(format!("sketch does not match the signature of {}", spec.name)));
    }
    let deadline = Deadline::after(ctx.clock.clone(), cfg.timeout());
    let mut state = CegisState { examples: vec![random_example(spec, cfg.seed)], ..CegisState::default() };
    for len in cfg.l_min..=cfg.l_max {
        let sized = sketch.with_length(len)?;
        let mut search = cfg.search(spec, deadline.clone());
        // Shorter lengths were refuted on a subset of the current examples.
        search.assume_minimal_length = cfg.l_min == 1;
        loop {
            state.iterations += 1;
            let res = ctx.backend.find_completion(&sized, &state.examples, &ctx.costs, &search)?;
            state.stats.absorb(&res.stats);
            match res.outcome {
                SearchOutcome::Unsat => break,
                SearchOutcome::Budget => return Err(Error::Budget),
                SearchOutcome::Timeout => return Err(Error::Timeout),
                SearchOutcome::Found { assignment, .. } => {
                    let candidate = sized.instantiate(&assignment)?;
                    match verify(&candidate, spec)? {
                        Verdict::Equivalent => {
                            state.length = len;
                            let sol = Solution::new(candidate, &ctx.costs, state.examples.len(), Status::InitialOnly);
                            return Ok((sol, state));
                        }
                        Verdict::Counterexample { example, .. } => state.add_counterexample(&candidate, example)?,
                    }
                }
            }
        }
    }
    Err(Error::SketchTooRestrictive(cfg.l_max))
}

/// Lowers the cost of `initial` by re-solving the same-length sketch under a
/// strictly decreasing cost bound. Returns the best verified solution and the
/// costs of every improvement.
pub fn optimize(
    ctx: &SynthContext,
    spec: &KernelSpec,
    sketch: &Sketch,
    initial: &Solution,
    state: &mut CegisState,
    cfg: &SynthConfig,
) -> Result<(Solution, Vec<f64>)> {
    let sized = sketch.with_length(state.length.max(1))?;
    let mut best = initial.clone();
    let mut trajectory = Vec::new();
    let mut deadline = Deadline::after(ctx.clock.clone(), cfg.timeout());
    loop {
        let mut search = cfg.search(spec, deadline.clone());
        search.cost_bound = Some(best.cost);
        search.assume_minimal_length = cfg.l_min == 1;
        state.iterations += 1;
        let res = ctx.backend.find_completion(&sized, &state.examples, &ctx.costs, &search)?;
        state.stats.absorb(&res.stats);
        match res.outcome {
            SearchOutcome::Unsat => {
                best.status = Status::Optimal;
                break;
            }
            SearchOutcome::Timeout | SearchOutcome::Budget => {
                best.status = Status::TimeoutBest;
                break;
            }
            SearchOutcome::Found { assignment, .. } => {
                let candidate = sized.instantiate(&assignment)?;
                match verify(&candidate, spec)? {
                    Verdict::Equivalent => {
                        let next = Solution::new(candidate, &ctx.costs, state.examples.len(), Status::InitialOnly);
                        if next.cost >= best.cost {
                            return Err(Error::Internal("search returned a completion above the cost bound".into()));
                        }
                        trajectory.push(next.cost);
                        best = next;
                        deadline = Deadline::after(ctx.clock.clone(), cfg.timeout());
                    }
                    Verdict::Counterexample { example, .. } => state.add_counterexample(&candidate, example)?,
                }
            }
        }
    }
    best.examples_used = state.examples.len();
    Ok((best, trajectory))
}

/// Initial synthesis followed by optimization (unless disabled).
pub fn synthesize(ctx: &SynthContext, spec: &KernelSpec, sketch: &Sketch, cfg: &SynthConfig) -> Result<SynthReport> {
    let start = ctx.clock.now();
    let (initial, mut state) = synthesize_initial(ctx, spec, sketch, cfg)?;
    let initial_time = ctx.clock.now().saturating_sub(start);
    let mut trajectory = vec![initial.cost];
    let final_solution = if cfg.optimize {
        let (best, improvements) = optimize(ctx, spec, sketch, &initial, &mut state, cfg)?;
        trajectory.extend(improvements);
        best
    } else {
        initial.clone()
    };
    let mut initial = initial;
    initial.examples_used = initial.examples_used.min(state.examples.len());
    Ok(SynthReport {
        kernel: spec.name.clone(),
        initial,
        final_solution,
        initial_time,
        total_time: ctx.clock.now().saturating_sub(start),
        length: state.length,
        examples: state.examples.len(),
        trajectory,
        stats: state.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::ManualClock;
    use crate::ir::{Instruction, NamedPt, Opcode, Operand, PtValue, RingParams};
    use crate::sketch::{Alternative, HoleKind, RotationDomain};
    use crate::spec::{lift_reference, CtInput, Expr, Layout, Reference, ValueDomain};

    fn ring(n: usize) -> RingParams {
        RingParams::new(n, 65537).unwrap()
    }

    fn vector_sum(n: usize) -> (KernelSpec, Sketch) {
        let r = Reference {
            inputs: vec![CtInput { name: "c0".into(), layout: Layout::vector(n), domain: ValueDomain::Full }],
            pt_inputs: vec![],
            output: Layout::scalar(),
            expr: Expr::sum((0..n).map(|i| Expr::at("c0", &[i])).collect()),
        };
        let spec = lift_reference("sum", ring(n), &r).unwrap();
        let d = RotationDomain::pow2(n);
        let sketch = Sketch::uniform(
            ring(n),
            vec!["c0".into()],
            vec![],
            vec![Alternative::new(Opcode::AddCtCt, HoleKind::CtRot(d.clone()), HoleKind::CtRot(d))],
            1,
        )
        .unwrap();
        (spec, sketch)
    }

    #[test]
    fn cost_function_examples() {
        let m = CostModel::default();
        let params = ring(8);
        let mut p = Program::identity(params, vec!["a".into(), "b".into()]);
        p.push(Instruction::ct_ct(Opcode::MulCtCt, Operand::input(0), Operand::input(1)));
        assert_eq!(cost_fn(&p, &m), 20.0);
        let mut q = Program::identity(params, vec!["a".into()]);
        q.push(Instruction::ct_ct(Opcode::AddCtCt, Operand::input(0), Operand::input(0).rotated(1)));
        assert_eq!(cost_fn(&q, &m), 10.0);
    }

    #[test]
    fn identity_needs_one_component() {
        let r = Reference {
            inputs: vec![CtInput { name: "x".into(), layout: Layout::vector(4), domain: ValueDomain::Full }],
            pt_inputs: vec![],
            output: Layout::vector(4),
            expr: Expr::read("x", &[0]),
        };
        let spec = lift_reference("identity", ring(4), &r).unwrap();
        let sketch = Sketch::uniform(
            ring(4),
            vec!["x".into()],
            vec![NamedPt { name: "zero".into(), value: PtValue::splat(&ring(4), 0) }],
            vec![Alternative::new(Opcode::AddCtPt, HoleKind::Ct, HoleKind::Pt(0))],
            1,
        )
        .unwrap();
        let (sol, state) = synthesize_initial(&SynthContext::default(), &spec, &sketch, &SynthConfig::default()).unwrap();
        assert_eq!(state.length, 1);
        assert_eq!(sol.counts.total, 1);
    }

    #[test]
    fn four_sum_minimal_length() {
        let (spec, sketch) = vector_sum(4);
        let report = synthesize(&SynthContext::default(), &spec, &sketch, &SynthConfig::default()).unwrap();
        assert_eq!(report.length, 2);
        assert_eq!(report.final_solution.counts.total, 4);
        assert_eq!(report.final_solution.status, Status::Optimal);
        assert!(verify(&report.final_solution.program, &spec).unwrap().is_equivalent());
        assert!(report.final_solution.cost <= report.initial.cost);
    }

    #[test]
    fn too_restrictive_sketch_fails() {
        let (spec, sketch) = vector_sum(8);
        let cfg = SynthConfig { l_max: 2, ..SynthConfig::default() };
        assert!(matches!(synthesize(&SynthContext::default(), &spec, &sketch, &cfg), Err(Error::SketchTooRestrictive(2))));
        assert!(SynthConfig { l_min: 3, l_max: 2, ..SynthConfig::default() }.validate().is_err());
        assert!(SynthConfig { timeout_secs: 0.0, ..SynthConfig::default() }.validate().is_err());
    }

    #[test]
    fn timeout_during_initial_search() {
        let (spec, sketch) = vector_sum(16);
        let clock = Arc::new(ManualClock::ticking(Duration::from_secs(1)));
        let ctx = SynthContext { clock, ..SynthContext::default() };
        let cfg = SynthConfig { timeout_secs: 2.0, l_min: 6, l_max: 6, ..SynthConfig::default() };
        assert!(matches!(synthesize(&ctx, &spec, &sketch, &cfg), Err(Error::Timeout)));
    }

    #[test]
    fn report_json_omits_times_by_default() {
        let (spec, sketch) = vector_sum(4);
        let report = synthesize(&SynthContext::default(), &spec, &sketch, &SynthConfig::default()).unwrap();
        let doc = serde_json::to_value(report.to_doc(false).unwrap()).unwrap();
        assert!(doc.get("total_time_s").is_none());
        assert_eq!(doc["status"], "optimal");
        let timed = serde_json::to_value(report.to_doc(true).unwrap()).unwrap();
        assert!(timed.get("total_time_s").is_some());
    }

    #[test]
    fn trajectory_strictly_decreases() {
        // With expensive additions, add(x, x) is found first but 2*x via a
        // plaintext multiply is cheaper.
        let r = Reference {
            inputs: vec![CtInput { name: "x".into(), layout: Layout::vector(4), domain: ValueDomain::Full }],
            pt_inputs: vec![],
            output: Layout::vector(4),
            expr: Expr::Add(vec![Expr::read("x", &[0]), Expr::read("x", &[0])]),
        };
        let spec = lift_reference("double", ring(4), &r).unwrap();
        let params = ring(4);
        let sketch = Sketch::uniform(
            params,
            vec!["x".into()],
            vec![NamedPt { name: "two".into(), value: PtValue::splat(&params, 2) }],
            vec![
                Alternative::new(Opcode::MulCtPt, HoleKind::Ct, HoleKind::Pt(0)),
                Alternative::new(Opcode::AddCtCt, HoleKind::Ct, HoleKind::Ct),
            ],
            1,
        )
        .unwrap();
        let costs = CostModel { add_ct: 50.0, ..CostModel::default() };
        let ctx = SynthContext { costs, ..SynthContext::default() };
        let report = synthesize(&ctx, &spec, &sketch, &SynthConfig::default()).unwrap();
        assert_eq!(report.trajectory, vec![50.0, 14.0]);
        assert_eq!(report.final_solution.status, Status::Optimal);
        assert_eq!(report.final_solution.program.body[0].op, Opcode::MulCtPt);
    }
}
