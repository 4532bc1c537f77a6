//! Multi-step synthesis: a pipeline of kernels whose outputs feed later
//! stages, each synthesized on its own and composed into one program.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{Instruction, NamedPt, Opcode, Operand, Program, Rhs, Source};
use crate::kernels::{alt, splat, Kernel, KernelParams, KernelRegistry};
use crate::poly::Poly;
use crate::sketch::{HoleKind, Sketch};
use crate::spec::{lift_reference, CtInput, Expr, KernelSpec, Layout, Padding, PtInput, Reference, ValueDomain};
use crate::synth::{synthesize, Solution, SynthConfig, SynthContext};
use crate::verify::verify;

/// Element-wise expression over values already in flight. Reads must use
/// offset 0; constants may only appear as factors of a product.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElementwiseDef {
    pub expr: Expr,
    #[serde(default)]
    pub constants: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageDef {
    pub name: String,
    /// Pipeline inputs or earlier stage names, in the kernel's input order.
    pub inputs: Vec<String>,
    #[serde(default)]
    pub kernel: Option<String>,
    #[serde(default)]
    pub elementwise: Option<ElementwiseDef>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineDef {
    pub name: String,
    pub inputs: Vec<String>,
    #[serde(default)]
    pub params: KernelParams,
    pub stages: Vec<StageDef>,
}

/// Element-wise kernel over a fixed layout, with constants as splatted plaintexts.
pub struct Elementwise {
    name: String,
    inputs: Vec<String>,
    layout: Layout,
    def: ElementwiseDef,
}

impl Elementwise {
    pub fn new(name: &str, inputs: Vec<String>, layout: Layout, def: ElementwiseDef) -> Self {
        Elementwise { name: name.into(), inputs, layout, def }
    }

    fn compile(&self, b: &mut Program, memo: &mut Vec<(Expr, Source)>, e: &Expr) -> Result<Source> {
        if let Some((_, s)) = memo.iter().find(|(x, _)| x == e) {
            return Ok(*s);
        }
        let s = self.compile_new(b, memo, e)?;
        memo.push((e.clone(), s));
        Ok(s)
    }

    fn compile_new(&self, b: &mut Program, memo: &mut Vec<(Expr, Source)>, e: &Expr) -> Result<Source> {
        let unsupported = || Error::Unsupported(format!("{}: expression is not a stage-compilable form", self.name));
        match e {
            Expr::Read { input, offset } if offset.iter().all(|&o| o == 0) => {
                let k = self.inputs.iter().position(|n| n == input).ok_or_else(unsupported)?;
                Ok(Source::Input(k))
            }
            Expr::Add(xs) => self.tree(b, memo, Opcode::AddCtCt, xs),
            Expr::Sub(x, y) => {
                let (x, y) = (self.compile(b, memo, x)?, self.compile(b, memo, y)?);
                Ok(b.push(Instruction::ct_ct(Opcode::SubCtCt, Operand::new(x, 0), Operand::new(y, 0))))
            }
            Expr::Mul(xs) => {
                let (consts, rest): (Vec<&Expr>, Vec<&Expr>) = xs.iter().partition(|x| matches!(x, Expr::Const(_)));
                let rest: Vec<Expr> = rest.into_iter().cloned().collect();
                let mut acc = self.tree(b, memo, Opcode::MulCtCt, &rest)?;
                for c in consts {
                    let Expr::Const(v) = c else { unreachable!() };
                    let k = b.pt_consts.iter().position(|p| p.value.slots[0] == b.params.reduce(*v)).ok_or_else(unsupported)?;
                    acc = b.push(Instruction::ct_pt(Opcode::MulCtPt, Operand::new(acc, 0), k));
                }
                Ok(acc)
            }
            _ => Err(unsupported()),
        }
    }

    fn tree(&self, b: &mut Program, memo: &mut Vec<(Expr, Source)>, op: Opcode, xs: &[Expr]) -> Result<Source> {
        let mut level = xs.iter().map(|x| self.compile(b, memo, x)).collect::<Result<Vec<_>>>()?;
        if level.is_empty() {
            return Err(Error::Unsupported(format!("{}: empty sum or product", self.name)));
        }
        while level.len() > 1 {
            level = level
                .chunks(2)
                .map(|p| match p {
                    [x, y] => b.push(Instruction::ct_ct(op, Operand::new(*x, 0), Operand::new(*y, 0))),
                    [x] => *x,
                    _ => unreachable!(),
                })
                .collect();
        }
        Ok(level[0])
    }
}

impl Kernel for Elementwise {
    fn name(&self) -> &str {
        &self.name
    }

    fn description(&self) -> &str {
        "element-wise combination stage"
    }

    fn spec(&self, params: &KernelParams) -> Result<KernelSpec> {
        let ring = params.ring_for(&[&self.layout])?;
        let reference = Reference {
            inputs: self
                .inputs
                .iter()
                .map(|n| CtInput { name: n.clone(), layout: self.layout.clone(), domain: ValueDomain::Full })
                .collect(),
            pt_inputs: self.def.constants.iter().map(|(n, &v)| PtInput::splat(n, &self.layout, v)).collect(),
            output: self.layout.clone(),
            expr: self.def.expr.clone(),
        };
        lift_reference(&self.name, ring, &reference)
    }

    fn sketch(&self, spec: &KernelSpec) -> Result<Sketch> {
        let mut alts = vec![
            alt(Opcode::AddCtCt, HoleKind::Ct, HoleKind::Ct),
            alt(Opcode::SubCtCt, HoleKind::Ct, HoleKind::Ct),
            alt(Opcode::MulCtCt, HoleKind::Ct, HoleKind::Ct),
        ];
        for k in 0..spec.pt_inputs.len() {
            alts.push(alt(Opcode::MulCtPt, HoleKind::Ct, HoleKind::Pt(k)));
        }
        Sketch::uniform(spec.ring, spec.input_names(), constants(spec), alts, 1)
    }

    fn baseline(&self, spec: &KernelSpec) -> Result<Program> {
        let mut p = Program::identity(spec.ring, spec.input_names());
        p.pt_consts = constants(spec);
        self.compile(&mut p, &mut Vec::new(), &self.def.expr)?;
        Ok(p)
    }
}

/// Splatted constants are uniform, so the plaintext is packed over every slot.
fn constants(spec: &KernelSpec) -> Vec<NamedPt> {
    spec.pt_inputs.iter().map(|p| splat(&spec.ring, &p.name, p.values.first().copied().unwrap_or(0))).collect()
}

pub struct Stage {
    pub name: String,
    pub inputs: Vec<String>,
    pub kernel: Arc<dyn Kernel>,
    pub spec: KernelSpec,
}

/// A pipeline with every stage spec resolved and checked for compatible layouts.
pub struct Pipeline {
    pub name: String,
    pub inputs: Vec<CtInput>,
    pub stages: Vec<Stage>,
}

impl Pipeline {
    pub fn build(def: &PipelineDef, registry: &KernelRegistry) -> Result<Pipeline> {
        if def.stages.is_empty() {
            return Err(Error::Config(format!("pipeline {} has no stages", def.name)));
        }
        if def.inputs.is_empty() {
            return Err(Error::Config(format!("pipeline {} has no inputs", def.name)));
        }
        let mut layouts: HashMap<String, Layout> = HashMap::new();
        let mut external: Vec<Option<CtInput>> = vec![None; def.inputs.len()];
        let mut stages: Vec<Stage> = Vec::new();
        let mut ring = None;
        for sd in &def.stages {
            if sd.name.is_empty() || def.inputs.contains(&sd.name) || stages.iter().any(|s| s.name == sd.name) {
                return Err(Error::Config(format!("stage name {:?} is empty or already used", sd.name)));
            }
            let kernel: Arc<dyn Kernel> = match (&sd.kernel, &sd.elementwise) {
                (Some(k), None) => registry.get(k)?,
                (None, Some(ew)) => {
                    let first = sd.inputs.first().ok_or_else(|| Error::Config(format!("stage {} has no inputs", sd.name)))?;
                    let layout = layouts
                        .get(first)
                        .cloned()
                        .ok_or_else(|| Error::Config(format!("stage {}: element-wise input {first} must be a stage output", sd.name)))?;
                    Arc::new(Elementwise::new(&sd.name, sd.inputs.clone(), layout.with_padding(Padding::Free), ew.clone()))
                }
                _ => return Err(Error::Config(format!("stage {} needs exactly one of kernel or elementwise", sd.name))),
            };
            let mut spec = kernel.spec(&def.params)?;
            if spec.inputs.len() != sd.inputs.len() {
                return Err(Error::LayoutMismatch(format!(
                    "stage {} takes {} inputs, {} wired",
                    sd.name,
                    spec.inputs.len(),
                    sd.inputs.len()
                )));
            }
            if *ring.get_or_insert(spec.ring) != spec.ring {
                return Err(Error::LayoutMismatch(format!("stage {} uses a different ring", sd.name)));
            }
            let mut relift = false;
            for (k, src) in sd.inputs.iter().enumerate() {
                let input = &spec.inputs[k];
                if let Some(pos) = def.inputs.iter().position(|n| n == src) {
                    let seen = external[pos].get_or_insert_with(|| CtInput { name: src.clone(), ..input.clone() });
                    if seen.layout != input.layout || seen.domain != input.domain {
                        return Err(Error::LayoutMismatch(format!("pipeline input {src} is read with two different layouts")));
                    }
                    continue;
                }
                let layout = layouts
                    .get(src)
                    .ok_or_else(|| Error::Config(format!("stage {} reads unknown value {src}", sd.name)))?;
                if !layout.same_packing(&input.layout) {
                    return Err(Error::LayoutMismatch(format!(
                        "stage {} input {} expects {:?}/{:?}+{}, {src} produces {:?}/{:?}+{}",
                        sd.name, input.name, input.layout.dims, input.layout.strides, input.layout.offset, layout.dims, layout.strides, layout.offset
                    )));
                }
                if input.layout.padding == Padding::Zero {
                    relift = true;
                }
            }
            if relift {
                // Stage outputs carry garbage outside their image.
                let mut reference = spec.reference.clone().ok_or_else(|| Error::Spec(format!("stage {} has no reference", sd.name)))?;
                for (k, src) in sd.inputs.iter().enumerate() {
                    if !def.inputs.contains(src) {
                        reference.inputs[k].layout.padding = Padding::Free;
                    }
                }
                spec = lift_reference(&sd.name, spec.ring, &reference)?;
            }
            layouts.insert(sd.name.clone(), spec.output.clone());
            stages.push(Stage { name: sd.name.clone(), inputs: sd.inputs.clone(), kernel, spec });
        }
        let inputs = external
            .into_iter()
            .zip(&def.inputs)
            .map(|(i, n)| i.ok_or_else(|| Error::Config(format!("pipeline input {n} is never read"))))
            .collect::<Result<Vec<_>>>()?;
        Ok(Pipeline { name: def.name.clone(), inputs, stages })
    }

    /// End-to-end specification obtained by substituting each stage's output
    /// polynomials into its consumers.
    pub fn composed_spec(&self) -> Result<KernelSpec> {
        let ring = self.stages[0].spec.ring;
        let n = ring.n;
        let mut values: HashMap<&str, Vec<Option<Poly>>> = HashMap::new();
        for (k, input) in self.inputs.iter().enumerate() {
            let image: std::collections::HashSet<usize> = input.layout.slots().into_iter().collect();
            let polys = (0..n)
                .map(|s| {
                    Some(if image.contains(&s) {
                        Poly::var(ring.t, (k * n + s) as u32)
                    } else {
                        Poly::zero(ring.t)
                    })
                })
                .collect();
            values.insert(&input.name, polys);
        }
        for stage in &self.stages {
            let args: Vec<&Vec<Option<Poly>>> = stage.inputs.iter().map(|i| &values[i.as_str()]).collect();
            let mut out = vec![None; n];
            for &s in &stage.spec.mask {
                let p = stage.spec.out_polys[s].as_ref().expect("masked slot has a polynomial");
                let defined = p.vars().iter().all(|&v| {
                    let (k, slot) = stage.spec.var_input(v);
                    args[k][slot].is_some()
                });
                if defined {
                    out[s] = Some(p.substitute(&|v| {
                        let (k, slot) = stage.spec.var_input(v);
                        args[k][slot].clone().expect("checked defined")
                    }));
                }
            }
            values.insert(&stage.name, out);
        }
        let last = self.stages.last().expect("pipeline has stages");
        let out_polys = values.remove(last.name.as_str()).expect("last stage evaluated");
        let mask: Vec<usize> = (0..n).filter(|&s| out_polys[s].is_some()).collect();
        let spec = KernelSpec {
            name: self.name.clone(),
            ring,
            inputs: self.inputs.clone(),
            pt_inputs: Vec::new(),
            output: last.spec.output.clone(),
            out_polys,
            mask,
            reference: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Concatenates per-stage programs into one SSA program.
    pub fn compose(&self, programs: &[Program]) -> Result<Program> {
        if programs.len() != self.stages.len() {
            return Err(Error::Internal("one program per stage expected".into()));
        }
        let ring = self.stages[0].spec.ring;
        let names: Vec<String> = self.inputs.iter().map(|i| i.name.clone()).collect();
        let mut out = Program::identity(ring, names.clone());
        let mut results: HashMap<&str, Source> = names.iter().enumerate().map(|(k, n)| (n.as_str(), Source::Input(k))).collect();
        for (stage, prog) in self.stages.iter().zip(programs) {
            let args: Vec<Source> = stage.inputs.iter().map(|i| results[i.as_str()]).collect();
            let base = out.body.len();
            let map = |s: Source| match s {
                Source::Input(k) => args[k],
                Source::Inst(j) => Source::Inst(base + j),
            };
            let mut pt_map = Vec::with_capacity(prog.pt_consts.len());
            for pt in &prog.pt_consts {
                pt_map.push(match out.pt_consts.iter().position(|q| q.name == pt.name) {
                    Some(i) if out.pt_consts[i].value == pt.value => i,
                    Some(_) => {
                        out.pt_consts.push(NamedPt { name: format!("{}_{}", stage.name, pt.name), value: pt.value.clone() });
                        out.pt_consts.len() - 1
                    }
                    None => {
                        out.pt_consts.push(pt.clone());
                        out.pt_consts.len() - 1
                    }
                });
            }
            for instr in &prog.body {
                let lhs = Operand::new(map(instr.lhs.src), instr.lhs.rot);
                let rhs = match instr.rhs {
                    Rhs::Ct(o) => Rhs::Ct(Operand::new(map(o.src), o.rot)),
                    Rhs::Pt(k) => Rhs::Pt(pt_map[k]),
                    Rhs::None => Rhs::None,
                };
                out.body.push(Instruction { op: instr.op, lhs, rhs });
            }
            let result = map(prog.result);
            results.insert(&stage.name, result);
            out.result = result;
        }
        out.validate()?;
        Ok(out)
    }

    pub fn baselines(&self) -> Result<Vec<Program>> {
        self.stages.iter().map(|s| s.kernel.baseline(&s.spec)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub kernel: String,
    pub baseline_instructions: usize,
    pub instructions: usize,
    pub mdepth: u32,
    pub cost: f64,
    pub status: crate::synth::Status,
}

#[derive(Debug, Clone)]
pub struct PipelineResult {
    pub name: String,
    pub stages: Vec<StageReport>,
    pub program: Program,
    pub baseline: Program,
    pub verified: bool,
    pub elapsed: std::time::Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineDoc {
    pub name: String,
    pub stages: Vec<StageReport>,
    pub baseline_instructions: usize,
    pub instructions: usize,
    pub baseline_logical_depth: usize,
    pub logical_depth: usize,
    pub mdepth: u32,
    pub verified: bool,
    pub program: serde_json::Value,
}

impl PipelineResult {
    pub fn to_doc(&self) -> Result<PipelineDoc> {
        Ok(PipelineDoc {
            name: self.name.clone(),
            stages: self.stages.clone(),
            baseline_instructions: self.baseline.instruction_count().total,
            instructions: self.program.instruction_count().total,
            baseline_logical_depth: self.baseline.logical_depth(),
            logical_depth: self.program.logical_depth(),
            mdepth: self.program.mdepth(),
            verified: self.verified,
            program: crate::ir::json::to_value(&self.program)?,
        })
    }
}

/// Synthesizes every stage, composes the results and verifies the whole
/// program against the composed specification.
pub fn synthesize_multistep(ctx: &SynthContext, pipeline: &Pipeline, cfg: &SynthConfig) -> Result<PipelineResult> {
    let start = Instant::now();
    let baselines = pipeline.baselines()?;
    let mut programs = Vec::with_capacity(pipeline.stages.len());
    let mut stages = Vec::with_capacity(pipeline.stages.len());
    for (stage, base) in pipeline.stages.iter().zip(&baselines) {
        let sketch = stage.kernel.sketch(&stage.spec)?;
        let report = synthesize(ctx, &stage.spec, &sketch, cfg)?;
        let Solution { program, cost, mdepth, counts, status, .. } = report.final_solution;
        stages.push(StageReport {
            name: stage.name.clone(),
            kernel: stage.kernel.name().to_string(),
            baseline_instructions: base.instruction_count().total,
            instructions: counts.total,
            mdepth,
            cost,
            status,
        });
        programs.push(program);
    }
    let program = pipeline.compose(&programs)?;
    let baseline = pipeline.compose(&baselines)?;
    let spec = pipeline.composed_spec()?;
    let verified = verify(&program, &spec)?.is_equivalent();
    Ok(PipelineResult { name: pipeline.name.clone(), stages, program, baseline, verified, elapsed: start.elapsed() })
}

fn read(name: &str, rank: usize) -> Expr {
    Expr::read(name, &vec![0; rank])
}

fn stage(name: &str, inputs: &[&str], kernel: &str) -> StageDef {
    StageDef { name: name.into(), inputs: inputs.iter().map(|s| s.to_string()).collect(), kernel: Some(kernel.into()), elementwise: None }
}

fn ew(name: &str, inputs: &[&str], expr: Expr, constants: &[(&str, i64)]) -> StageDef {
    StageDef {
        name: name.into(),
        inputs: inputs.iter().map(|s| s.to_string()).collect(),
        kernel: None,
        elementwise: Some(ElementwiseDef { expr, constants: constants.iter().map(|(n, v)| (n.to_string(), *v)).collect() }),
    }
}

/// Sobel gradient magnitude (squared): `Gx^2 + Gy^2`.
pub fn sobel(params: KernelParams) -> PipelineDef {
    let mag = Expr::sum(vec![Expr::square(read("gx", 2)), Expr::square(read("gy", 2))]);
    PipelineDef {
        name: "sobel".into(),
        inputs: vec!["img".into()],
        params,
        stages: vec![stage("gx", &["img"], "gx"), stage("gy", &["img"], "gy"), ew("magnitude", &["gx", "gy"], mag, &[])],
    }
}

/// Harris corner response `det(M) - k * trace(M)^2` with the structure
/// tensor `M` summed over 2x2 windows. `k` is an integer weight.
pub fn harris(params: KernelParams, k: i64) -> PipelineDef {
    let prod = |a: &str, b: &str| Expr::mul2(read(a, 2), read(b, 2));
    let det = Expr::sub(prod("sxx", "syy"), Expr::square(read("sxy", 2)));
    let trace_sq = Expr::Mul(vec![Expr::Const(k), Expr::square(Expr::sum(vec![read("sxx", 2), read("syy", 2)]))]);
    PipelineDef {
        name: "harris".into(),
        inputs: vec!["img".into()],
        params,
        stages: vec![
            stage("gx", &["img"], "gx"),
            stage("gy", &["img"], "gy"),
            ew("ixx", &["gx"], Expr::square(read("gx", 2)), &[]),
            ew("iyy", &["gy"], Expr::square(read("gy", 2)), &[]),
            ew("ixy", &["gx", "gy"], prod("gx", "gy"), &[]),
            stage("sxx", &["ixx"], "box_blur"),
            stage("syy", &["iyy"], "box_blur"),
            stage("sxy", &["ixy"], "box_blur"),
            ew("det", &["sxx", "syy", "sxy"], det, &[]),
            ew("trace_sq", &["sxx", "syy"], trace_sq, &[("k", k)]),
            ew("response", &["det", "trace_sq"], Expr::sub(read("det", 2), read("trace_sq", 2)), &[]),
        ],
    }
}

/// Image size used by the built-in pipelines when none is configured.
pub fn default_pipeline_params() -> KernelParams {
    KernelParams { height: Some(3), width: Some(3), ..KernelParams::default() }
}

pub fn builtin(name: &str, params: KernelParams) -> Result<PipelineDef> {
    match name {
        "sobel" => Ok(sobel(params)),
        "harris" => Ok(harris(params, 3)),
        _ => Err(Error::Config(format!("unknown pipeline {name:?} (available: sobel, harris)"))),
    }
}
