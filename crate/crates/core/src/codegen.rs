//! Lowering of synthesized programs to backend artifacts: explicit
//! rotations, relinearization markers, JSON IR and templated source text.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{json, Instruction, Opcode, Operand, Program, Rhs, Source};

/// Turns every distinct rotated operand into one standalone `Rotate`
/// placed just before its first use.
pub fn explicate_rotations(p: &Program) -> Program {
    let mut out = Program { body: Vec::with_capacity(p.body.len()), ..p.clone() };
    let mut map: Vec<Source> = Vec::with_capacity(p.body.len());
    let mut rotated: HashMap<(Source, usize), Source> = HashMap::new();
    let remap = |map: &Vec<Source>, s: Source| match s {
        Source::Input(_) => s,
        Source::Inst(j) => map[j],
    };
    for instr in &p.body {
        if !instr.op.is_arith() {
            let lhs = Operand::new(remap(&map, instr.lhs.src), instr.lhs.rot);
            map.push(out.push(Instruction { lhs, ..*instr }));
            continue;
        }
        let mut operand = |o: Operand, out: &mut Program| -> Operand {
            let src = remap(&map, o.src);
            if o.rot == 0 {
                return Operand::new(src, 0);
            }
            let r = *rotated.entry((src, o.rot)).or_insert_with(|| out.push(Instruction::rotate(src, o.rot)));
            Operand::new(r, 0)
        };
        let lhs = operand(instr.lhs, &mut out);
        let rhs = match instr.rhs {
            Rhs::Ct(o) => Rhs::Ct(operand(o, &mut out)),
            other => other,
        };
        map.push(out.push(Instruction { op: instr.op, lhs, rhs }));
    }
    out.result = remap(&map, p.result);
    out
}

/// Adds a `Relinearize` after every ciphertext-ciphertext multiply and
/// routes later uses through it.
pub fn insert_relinearization(p: &Program) -> Program {
    let mut out = Program { body: Vec::with_capacity(p.body.len()), ..p.clone() };
    let mut map: Vec<Source> = Vec::with_capacity(p.body.len());
    let remap = |map: &Vec<Source>, o: Operand| match o.src {
        Source::Input(_) => o,
        Source::Inst(j) => Operand::new(map[j], o.rot),
    };
    for instr in &p.body {
        let lhs = remap(&map, instr.lhs);
        let rhs = match instr.rhs {
            Rhs::Ct(o) => Rhs::Ct(remap(&map, o)),
            other => other,
        };
        let mut s = out.push(Instruction { op: instr.op, lhs, rhs });
        if instr.op == Opcode::MulCtCt {
            s = out.push(Instruction::relinearize(s));
        }
        map.push(s);
    }
    out.result = remap(&map, Operand::new(p.result, 0)).src;
    out
}

/// Explicit rotations followed by relinearization markers.
pub fn lower(p: &Program) -> Program {
    insert_relinearization(&explicate_rotations(p))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodegenMeta {
    pub kernel: String,
    pub instructions: usize,
    pub rotations: usize,
    pub relinearizations: usize,
    pub mdepth: u32,
    pub logical_depth: usize,
}

impl CodegenMeta {
    pub fn of(kernel: &str, lowered: &Program) -> Self {
        let counts = lowered.instruction_count();
        CodegenMeta {
            kernel: kernel.into(),
            instructions: counts.total,
            rotations: counts.rotations,
            relinearizations: lowered.body.iter().filter(|i| i.op == Opcode::Relinearize).count(),
            mdepth: lowered.mdepth(),
            logical_depth: lowered.logical_depth(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct IrDoc {
    meta: CodegenMeta,
    program: serde_json::Value,
}

pub fn emit_json_ir(kernel: &str, lowered: &Program) -> Result<String> {
    let doc = IrDoc { meta: CodegenMeta::of(kernel, lowered), program: json::to_value(lowered)? };
    let mut text = serde_json::to_string_pretty(&doc)?;
    text.push('\n');
    Ok(text)
}

pub fn parse_json_ir(text: &str) -> Result<(CodegenMeta, Program)> {
    let doc: IrDoc = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    Ok((doc.meta, json::from_value(doc.program)?))
}

/// Renders a lowered program as backend source text.
pub trait CodegenTemplate: Send + Sync {
    fn name(&self) -> &str;

    /// File extension of the rendered text, without the leading dot.
    fn extension(&self) -> &str;

    fn render(&self, lowered: &Program, meta: &CodegenMeta) -> Result<String>;
}

/// Template driven by per-opcode format strings.
///
/// Placeholders: `{dst}`, `{a}`, `{b}` (ciphertext variables), `{pt}`
/// (plaintext variable), `{rot}` (left rotation amount). The preamble also
/// sees `{kernel}`, `{fn}`, `{n}`, `{t}`, `{mdepth}`, `{params}`; the epilogue sees
/// `{result}`.
#[derive(Debug, Clone)]
pub struct TextTemplate {
    pub name: String,
    pub extension: String,
    pub preamble: String,
    pub ct_param: String,
    pub pt_param: String,
    pub param_separator: String,
    pub ops: BTreeMap<Opcode, String>,
    pub epilogue: String,
}

fn fill(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

impl CodegenTemplate for TextTemplate {
    fn name(&self) -> &str {
        &self.name
    }

    fn extension(&self) -> &str {
        &self.extension
    }

    fn render(&self, p: &Program, meta: &CodegenMeta) -> Result<String> {
        let var = |s: Source| match s {
            Source::Input(i) => format!("ct{i}"),
            Source::Inst(j) => format!("ct{}", p.ct_inputs.len() + j),
        };
        let pt_var = |k: usize| format!("pt_{}", sanitize(&p.pt_consts[k].name));
        let mut params: Vec<String> = (0..p.ct_inputs.len())
            .map(|i| fill(&self.ct_param, &[("var", &var(Source::Input(i))), ("name", &p.ct_inputs[i])]))
            .collect();
        params.extend((0..p.pt_consts.len()).map(|k| fill(&self.pt_param, &[("var", &pt_var(k)), ("name", &p.pt_consts[k].name)])));
        let (n, t, mdepth) = (p.params.n.to_string(), p.params.t.to_string(), meta.mdepth.to_string());
        let mut out = fill(
            &self.preamble,
            &[
                ("kernel", &meta.kernel),
                ("fn", &sanitize(&meta.kernel)),
                ("n", &n),
                ("t", &t),
                ("mdepth", &mdepth),
                ("params", &params.join(&self.param_separator)),
            ],
        );
        for (j, instr) in p.body.iter().enumerate() {
            let tmpl = self
                .ops
                .get(&instr.op)
                .ok_or_else(|| Error::Codegen(format!("template {} has no rendering for {}", self.name, instr.op.mnemonic())))?;
            if instr.op.is_arith() && instr.ct_operands().any(|o| o.rot != 0) {
                return Err(Error::Codegen("operand rotations must be explicated before rendering".into()));
            }
            let dst = var(Source::Inst(j));
            let a = var(instr.lhs.src);
            let rot = instr.lhs.rot.to_string();
            let (b, pt) = match instr.rhs {
                Rhs::Ct(o) => (var(o.src), String::new()),
                Rhs::Pt(k) => (String::new(), pt_var(k)),
                Rhs::None => (String::new(), String::new()),
            };
            out.push_str(&fill(tmpl, &[("dst", &dst), ("a", &a), ("b", &b), ("pt", &pt), ("rot", &rot)]));
            out.push('\n');
        }
        out.push_str(&fill(&self.epilogue, &[("result", &var(p.result))]));
        Ok(out)
    }
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

/// C++ against the SEAL BFV evaluator interface.
pub fn seal_bfv() -> TextTemplate {
    let ops = [
        (Opcode::AddCtCt, "    seal::Ciphertext {dst};\n    evaluator.add({a}, {b}, {dst});"),
        (Opcode::SubCtCt, "    seal::Ciphertext {dst};\n    evaluator.sub({a}, {b}, {dst});"),
        (Opcode::MulCtCt, "    seal::Ciphertext {dst};\n    evaluator.multiply({a}, {b}, {dst});"),
        (Opcode::AddCtPt, "    seal::Ciphertext {dst};\n    evaluator.add_plain({a}, {pt}, {dst});"),
        (Opcode::SubCtPt, "    seal::Ciphertext {dst};\n    evaluator.sub_plain({a}, {pt}, {dst});"),
        (Opcode::MulCtPt, "    seal::Ciphertext {dst};\n    evaluator.multiply_plain({a}, {pt}, {dst});"),
        (Opcode::Rotate, "    seal::Ciphertext {dst};\n    evaluator.rotate_rows({a}, {rot}, galois_keys, {dst});"),
        (Opcode::Relinearize, "    seal::Ciphertext {dst};\n    evaluator.relinearize({a}, relin_keys, {dst});"),
    ];
    TextTemplate {
        name: "seal-bfv".into(),
        extension: "cpp-text".into(),
        preamble: "// kernel: {kernel}\n\
                   // slots: {n}, plain modulus: {t}, multiplicative depth: {mdepth}\n\
                   #include \"seal/seal.h\"\n\
                   \n\
                   void {fn}(\n    seal::Evaluator &evaluator,\n    const seal::GaloisKeys &galois_keys,\n    const seal::RelinKeys &relin_keys,\n    {params},\n    seal::Ciphertext &result)\n{\n"
            .into(),
        ct_param: "const seal::Ciphertext &{var} /* {name} */".into(),
        pt_param: "const seal::Plaintext &{var}".into(),
        param_separator: ",\n    ".into(),
        ops: ops.into_iter().map(|(o, s)| (o, s.to_string())).collect(),
        epilogue: "    result = {result};\n}\n".into(),
    }
}

/// Mnemonic listing, one line per instruction.
pub fn listing() -> TextTemplate {
    let ops = Opcode::ARITH
        .iter()
        .map(|&op| {
            let rhs = if op.is_ct_pt() { "{pt}" } else { "{b}" };
            (op, format!("{{dst}} = {} {{a}} {rhs}", op.mnemonic()))
        })
        .chain([
            (Opcode::Rotate, "{dst} = rot-ct {a} {rot}".to_string()),
            (Opcode::Relinearize, "{dst} = relinearize {a}".to_string()),
        ])
        .collect();
    TextTemplate {
        name: "listing".into(),
        extension: "txt".into(),
        preamble: "; {kernel} n={n} t={t} mdepth={mdepth}\n; inputs: {params}\n".into(),
        ct_param: "{var}={name}".into(),
        pt_param: "{var}".into(),
        param_separator: " ".into(),
        ops,
        epilogue: "return {result}\n".into(),
    }
}

#[derive(Clone, Default)]
pub struct TemplateRegistry {
    templates: HashMap<String, Arc<dyn CodegenTemplate>>,
}

impl TemplateRegistry {
    pub fn with_builtin() -> Self {
        let mut r = TemplateRegistry::default();
        r.register(Arc::new(seal_bfv()));
        r.register(Arc::new(listing()));
        r
    }

    pub fn register(&mut self, t: Arc<dyn CodegenTemplate>) {
        self.templates.insert(t.name().to_string(), t);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn CodegenTemplate>> {
        self.templates
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown codegen template {name:?} (available: {})", self.names().join(", "))))
    }

    pub fn names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.templates.keys().cloned().collect();
        v.sort();
        v
    }
}

/// Rendered artifacts for one kernel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifacts {
    pub ir_file: String,
    pub ir: String,
    pub source_file: String,
    pub source: String,
}

pub fn generate(kernel: &str, p: &Program, template: &dyn CodegenTemplate) -> Result<Artifacts> {
    let lowered = lower(p);
    let meta = CodegenMeta::of(kernel, &lowered);
    Ok(Artifacts {
        ir_file: format!("{kernel}.ir.json"),
        ir: emit_json_ir(kernel, &lowered)?,
        source_file: format!("{kernel}.gen.{}", template.extension()),
        source: template.render(&lowered, &meta)?,
    })
}
