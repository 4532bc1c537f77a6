//! Behavioral model of a BFV-style SIMD instruction set.
//!
//! Ciphertexts are modeled as plain slot vectors over `Z_t` that carry a
//! multiplicative-depth counter. Programs are straight-line SSA lists of
//! arithmetic instructions whose ciphertext operands may carry a left-rotation
//! amount (local-rotate form). After code generation a program may also contain
//! explicit `Rotate` and `Relinearize` instructions.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod json;

pub const DEFAULT_T: u64 = 65537;
pub const DEFAULT_N: usize = 16;
pub const MAX_N: usize = 4096;
/// Products of two residues must fit in a `u64`.
pub const MAX_T: u64 = 1 << 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RingParams {
    pub n: usize,
    pub t: u64,
}

impl RingParams {
    pub fn new(n: usize, t: u64) -> Result<Self> {
        let params = RingParams { n, t };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !self.n.is_power_of_two() || self.n > MAX_N {
            return Err(Error::Structural(format!(
                "slot count {} must be a power of two in [2, {MAX_N}]",
                self.n
            )));
        }
        if self.t <= 2 || self.t >= MAX_T || !is_prime(self.t) {
            return Err(Error::Structural(format!(
                "plaintext modulus {} must be a prime in (2, 2^31)",
                self.t
            )));
        }
        Ok(())
    }

    /// Smallest power-of-two slot count (at least 2) holding `slots` slots.
    pub fn fitting(slots: usize, t: u64) -> Result<Self> {
        RingParams::new(slots.max(2).next_power_of_two(), t)
    }

    pub fn reduce(&self, x: i64) -> u64 {
        x.rem_euclid(self.t as i64) as u64
    }

    /// Normalizes any rotation amount to a left rotation in `[0, n)`.
    pub fn normalize_rot(&self, x: i64) -> usize {
        x.rem_euclid(self.n as i64) as usize
    }
}

impl Default for RingParams {
    fn default() -> Self {
        RingParams { n: DEFAULT_N, t: DEFAULT_T }
    }
}

pub fn is_prime(t: u64) -> bool {
    if t < 2 {
        return false;
    }
    let mut d = 2u64;
    while d * d <= t {
        if t % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Left rotation: `out[i] = v[(i + x) mod n]`.
pub fn rotate_slots<T: Copy>(v: &[T], x: i64) -> Vec<T> {
    let n = v.len();
    if n == 0 {
        return Vec::new();
    }
    let k = x.rem_euclid(n as i64) as usize;
    (0..n).map(|i| v[(i + k) % n]).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CtValue {
    pub slots: Vec<u64>,
    pub depth: u32,
}

impl CtValue {
    /// A fresh (depth 0) ciphertext.
    pub fn fresh(params: &RingParams, slots: Vec<u64>) -> Result<Self> {
        check_slots(params, &slots)?;
        Ok(CtValue { slots, depth: 0 })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PtValue {
    pub slots: Vec<u64>,
}

impl PtValue {
    pub fn new(params: &RingParams, slots: Vec<u64>) -> Result<Self> {
        check_slots(params, &slots)?;
        Ok(PtValue { slots })
    }

    pub fn splat(params: &RingParams, value: i64) -> Self {
        PtValue { slots: vec![params.reduce(value); params.n] }
    }
}

fn check_slots(params: &RingParams, slots: &[u64]) -> Result<()> {
    if slots.len() != params.n {
        return Err(Error::Structural(format!(
            "expected {} slots, got {}",
            params.n,
            slots.len()
        )));
    }
    if let Some(bad) = slots.iter().find(|&&s| s >= params.t) {
        return Err(Error::Structural(format!("slot value {bad} not reduced mod {}", params.t)));
    }
    Ok(())
}

/// Where an operand's value comes from. Inputs order before instructions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Source {
    Input(usize),
    Inst(usize),
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Input(i) => write!(f, "in{i}"),
            Source::Inst(i) => write!(f, "%{i}"),
        }
    }
}

/// A ciphertext operand, optionally rotated left by `rot` slots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Operand {
    pub src: Source,
    pub rot: usize,
}

impl Operand {
    pub fn new(src: Source, rot: usize) -> Self {
        Operand { src, rot }
    }

    pub fn input(i: usize) -> Self {
        Operand { src: Source::Input(i), rot: 0 }
    }

    pub fn inst(i: usize) -> Self {
        Operand { src: Source::Inst(i), rot: 0 }
    }

    pub fn rotated(self, rot: usize) -> Self {
        Operand { rot, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Opcode {
    AddCtCt,
    SubCtCt,
    MulCtCt,
    AddCtPt,
    SubCtPt,
    MulCtPt,
    /// Standalone rotation; the amount is carried by the operand.
    Rotate,
    /// Codegen-only marker placed after each ciphertext-ciphertext multiply.
    Relinearize,
}

impl Opcode {
    pub const ARITH: [Opcode; 6] = [
        Opcode::AddCtCt,
        Opcode::SubCtCt,
        Opcode::MulCtCt,
        Opcode::AddCtPt,
        Opcode::SubCtPt,
        Opcode::MulCtPt,
    ];

    pub fn is_ct_ct(self) -> bool {
        matches!(self, Opcode::AddCtCt | Opcode::SubCtCt | Opcode::MulCtCt)
    }

    pub fn is_ct_pt(self) -> bool {
        matches!(self, Opcode::AddCtPt | Opcode::SubCtPt | Opcode::MulCtPt)
    }

    pub fn is_arith(self) -> bool {
        self.is_ct_ct() || self.is_ct_pt()
    }

    pub fn is_unary(self) -> bool {
        matches!(self, Opcode::Rotate | Opcode::Relinearize)
    }

    pub fn is_commutative(self) -> bool {
        matches!(self, Opcode::AddCtCt | Opcode::MulCtCt)
    }

    pub fn is_multiply(self) -> bool {
        matches!(self, Opcode::MulCtCt | Opcode::MulCtPt)
    }

    /// Position in the search enumeration order.
    pub fn search_rank(self) -> u8 {
        match self {
            Opcode::AddCtCt => 0,
            Opcode::SubCtCt => 1,
            Opcode::MulCtPt => 2,
            Opcode::AddCtPt => 3,
            Opcode::SubCtPt => 4,
            Opcode::MulCtCt => 5,
            Opcode::Rotate => 6,
            Opcode::Relinearize => 7,
        }
    }

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::AddCtCt => "add-ct-ct",
            Opcode::SubCtCt => "sub-ct-ct",
            Opcode::MulCtCt => "mul-ct-ct",
            Opcode::AddCtPt => "add-ct-pt",
            Opcode::SubCtPt => "sub-ct-pt",
            Opcode::MulCtPt => "mul-ct-pt",
            Opcode::Rotate => "rot-ct",
            Opcode::Relinearize => "relinearize",
        }
    }

    pub fn from_mnemonic(s: &str) -> Option<Opcode> {
        [
            Opcode::AddCtCt,
            Opcode::SubCtCt,
            Opcode::MulCtCt,
            Opcode::AddCtPt,
            Opcode::SubCtPt,
            Opcode::MulCtPt,
            Opcode::Rotate,
            Opcode::Relinearize,
        ]
        .into_iter()
        .find(|op| op.mnemonic() == s)
    }

    /// Result depth from operand depths (`rhs` is ignored for plaintext and
    /// unary ops).
    pub fn result_depth(self, lhs: u32, rhs: u32) -> u32 {
        match self {
            Opcode::AddCtCt | Opcode::SubCtCt => lhs.max(rhs),
            Opcode::MulCtCt => lhs.max(rhs) + 1,
            Opcode::AddCtPt | Opcode::SubCtPt => lhs,
            Opcode::MulCtPt => lhs + 1,
            Opcode::Rotate | Opcode::Relinearize => lhs,
        }
    }

    #[inline]
    pub fn apply(self, a: u64, b: u64, t: u64) -> u64 {
        match self {
            Opcode::AddCtCt | Opcode::AddCtPt => {
                let s = a + b;
                if s >= t {
                    s - t
                } else {
                    s
                }
            }
            Opcode::SubCtCt | Opcode::SubCtPt => {
                if a >= b {
                    a - b
                } else {
                    a + t - b
                }
            }
            Opcode::MulCtCt | Opcode::MulCtPt => a * b % t,
            Opcode::Rotate | Opcode::Relinearize => a,
        }
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.mnemonic())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Rhs {
    Ct(Operand),
    /// Index into the program's plaintext constants.
    Pt(usize),
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Instruction {
    pub op: Opcode,
    pub lhs: Operand,
    pub rhs: Rhs,
}

impl Instruction {
    pub fn ct_ct(op: Opcode, lhs: Operand, rhs: Operand) -> Self {
        Instruction { op, lhs, rhs: Rhs::Ct(rhs) }
    }

    pub fn ct_pt(op: Opcode, lhs: Operand, pt: usize) -> Self {
        Instruction { op, lhs, rhs: Rhs::Pt(pt) }
    }

    pub fn rotate(src: Source, rot: usize) -> Self {
        Instruction { op: Opcode::Rotate, lhs: Operand::new(src, rot), rhs: Rhs::None }
    }

    pub fn relinearize(src: Source) -> Self {
        Instruction { op: Opcode::Relinearize, lhs: Operand::new(src, 0), rhs: Rhs::None }
    }

    pub fn ct_operands(&self) -> impl Iterator<Item = Operand> {
        let rhs = match self.rhs {
            Rhs::Ct(o) => Some(o),
            _ => None,
        };
        std::iter::once(self.lhs).chain(rhs)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NamedPt {
    pub name: String,
    pub value: PtValue,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub params: RingParams,
    pub ct_inputs: Vec<String>,
    pub pt_consts: Vec<NamedPt>,
    pub body: Vec<Instruction>,
    pub result: Source,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstrCount {
    pub arith: usize,
    pub rotations: usize,
    pub total: usize,
}

impl Program {
    /// An empty program returning its first input.
    pub fn identity(params: RingParams, ct_inputs: Vec<String>) -> Self {
        Program { params, ct_inputs, pt_consts: Vec::new(), body: Vec::new(), result: Source::Input(0) }
    }

    /// Appends an instruction and returns a reference to its value.
    pub fn push(&mut self, instr: Instruction) -> Source {
        self.body.push(instr);
        self.result = Source::Inst(self.body.len() - 1);
        self.result
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.ct_inputs.is_empty() {
            return Err(Error::Structural("program declares no ciphertext inputs".into()));
        }
        for pt in &self.pt_consts {
            check_slots(&self.params, &pt.value.slots)
                .map_err(|e| Error::Structural(format!("plaintext {}: {e}", pt.name)))?;
        }
        for (i, instr) in self.body.iter().enumerate() {
            self.check_operand(&instr.lhs, i)?;
            match (instr.op, instr.rhs) {
                (op, Rhs::Ct(o)) if op.is_ct_ct() => self.check_operand(&o, i)?,
                (op, Rhs::Pt(k)) if op.is_ct_pt() => {
                    if k >= self.pt_consts.len() {
                        return Err(Error::Structural(format!(
                            "instruction {i} references undeclared plaintext {k}"
                        )));
                    }
                }
                (op, Rhs::None) if op.is_unary() => {}
                (op, rhs) => {
                    return Err(Error::Structural(format!(
                        "instruction {i}: {op} cannot take operand {rhs:?}"
                    )))
                }
            }
        }
        self.check_source(self.result, self.body.len())
    }

    fn check_operand(&self, o: &Operand, at: usize) -> Result<()> {
        if o.rot >= self.params.n {
            return Err(Error::Structural(format!(
                "instruction {at}: rotation {} outside [0, {})",
                o.rot, self.params.n
            )));
        }
        self.check_source(o.src, at)
    }

    fn check_source(&self, src: Source, at: usize) -> Result<()> {
        match src {
            Source::Input(i) if i < self.ct_inputs.len() => Ok(()),
            Source::Inst(j) if j < at => Ok(()),
            _ => Err(Error::Structural(format!("reference {src} not bound before instruction {at}"))),
        }
    }

    /// True when the program uses only local-rotate arithmetic instructions.
    pub fn is_local_rotate(&self) -> bool {
        self.body.iter().all(|i| i.op.is_arith())
    }

    /// Arithmetic instructions, distinct `(source, rot != 0)` operand pairs plus
    /// explicit `Rotate` instructions, and their sum. Relinearize markers are not
    /// counted.
    pub fn instruction_count(&self) -> InstrCount {
        let mut pairs = BTreeSet::new();
        let mut arith = 0;
        let mut explicit = 0;
        for instr in &self.body {
            match instr.op {
                Opcode::Rotate => explicit += 1,
                Opcode::Relinearize => {}
                _ => {
                    arith += 1;
                    for o in instr.ct_operands() {
                        if o.rot != 0 {
                            pairs.insert((o.src, o.rot));
                        }
                    }
                }
            }
        }
        let rotations = pairs.len() + explicit;
        InstrCount { arith, rotations, total: arith + rotations }
    }

    /// Multiplicative depth of the result with all inputs fresh.
    pub fn mdepth(&self) -> u32 {
        let mut depths: Vec<u32> = Vec::with_capacity(self.body.len());
        let get = |depths: &Vec<u32>, s: Source| match s {
            Source::Input(_) => 0,
            Source::Inst(j) => depths[j],
        };
        for instr in &self.body {
            let l = get(&depths, instr.lhs.src);
            let r = match instr.rhs {
                Rhs::Ct(o) => get(&depths, o.src),
                _ => 0,
            };
            depths.push(instr.op.result_depth(l, r));
        }
        get(&depths, self.result)
    }

    pub fn multiply_count(&self) -> usize {
        self.body.iter().filter(|i| i.op.is_multiply()).count()
    }

    /// Longest chain of instructions (rotations of operands count as a level)
    /// from an input to the result.
    pub fn logical_depth(&self) -> usize {
        let mut levels: Vec<usize> = Vec::with_capacity(self.body.len());
        let level = |levels: &Vec<usize>, o: &Operand| {
            let base = match o.src {
                Source::Input(_) => 0,
                Source::Inst(j) => levels[j],
            };
            base + usize::from(o.rot != 0)
        };
        for instr in &self.body {
            let mut l = level(&levels, &instr.lhs);
            if let Rhs::Ct(o) = &instr.rhs {
                l = l.max(level(&levels, o));
            }
            let own = usize::from(instr.op != Opcode::Relinearize);
            levels.push(l + own);
        }
        match self.result {
            Source::Input(_) => 0,
            Source::Inst(j) => levels[j],
        }
    }
}

/// Abstract per-instruction latencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    pub add_ct: f64,
    pub sub_ct: f64,
    pub mul_ct_ct: f64,
    pub add_pt: f64,
    pub sub_pt: f64,
    pub mul_ct_pt: f64,
    pub rotate: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel { add_ct: 1.0, sub_ct: 1.0, mul_ct_ct: 10.0, add_pt: 1.0, sub_pt: 1.0, mul_ct_pt: 7.0, rotate: 9.0 }
    }
}

impl CostModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.add_ct, self.sub_ct, self.mul_ct_ct, self.add_pt, self.sub_pt, self.mul_ct_pt, self.rotate];
        if all.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
            return Err(Error::Config("cost model weights must be positive".into()));
        }
        if self.mul_ct_ct < self.mul_ct_pt {
            return Err(Error::Config("ct-ct multiply must cost at least a ct-pt multiply".into()));
        }
        Ok(())
    }

    pub fn latency(&self, op: Opcode) -> f64 {
        match op {
            Opcode::AddCtCt => self.add_ct,
            Opcode::SubCtCt => self.sub_ct,
            Opcode::MulCtCt => self.mul_ct_ct,
            Opcode::AddCtPt => self.add_pt,
            Opcode::SubCtPt => self.sub_pt,
            Opcode::MulCtPt => self.mul_ct_pt,
            Opcode::Rotate => self.rotate,
            Opcode::Relinearize => 0.0,
        }
    }
}

/// Sum of per-instruction latencies plus `rotate` per CSE-counted rotation.
pub fn estimated_latency(p: &Program, m: &CostModel) -> f64 {
    let arith: f64 = p
        .body
        .iter()
        .filter(|i| i.op != Opcode::Rotate)
        .map(|i| m.latency(i.op))
        .sum();
    arith + m.rotate * p.instruction_count().rotations as f64
}

/// Evaluates one instruction given the values it references.
pub fn eval_instruction(
    params: &RingParams,
    instr: &Instruction,
    lookup: &dyn Fn(Source) -> Option<CtValue>,
    pts: &[NamedPt],
) -> Result<CtValue> {
    let fetch = |o: &Operand| -> Result<CtValue> {
        let v = lookup(o.src).ok_or_else(|| Error::Structural(format!("unbound reference {}", o.src)))?;
        if v.slots.len() != params.n {
            return Err(Error::Structural(format!(
                "operand {} has {} slots, ring has {}",
                o.src,
                v.slots.len(),
                params.n
            )));
        }
        Ok(CtValue { slots: rotate_slots(&v.slots, o.rot as i64), depth: v.depth })
    };
    let a = fetch(&instr.lhs)?;
    let (b_slots, b_depth) = match instr.rhs {
        Rhs::Ct(o) => {
            let b = fetch(&o)?;
            (Some(b.slots), b.depth)
        }
        Rhs::Pt(k) => {
            let pt = pts
                .get(k)
                .ok_or_else(|| Error::Structural(format!("unbound plaintext {k}")))?;
            if pt.value.slots.len() != params.n {
                return Err(Error::Structural(format!("plaintext {} has wrong slot count", pt.name)));
            }
            (Some(pt.value.slots.clone()), 0)
        }
        Rhs::None => (None, 0),
    };
    let t = params.t;
    let slots = match b_slots {
        Some(b) => a.slots.iter().zip(&b).map(|(&x, &y)| instr.op.apply(x, y, t)).collect(),
        None => a.slots,
    };
    Ok(CtValue { slots, depth: instr.op.result_depth(a.depth, b_depth) })
}

/// Runs `p` on positional ciphertext inputs.
pub fn eval_program(p: &Program, inputs: &[CtValue]) -> Result<CtValue> {
    if inputs.len() != p.ct_inputs.len() {
        return Err(Error::Structural(format!(
            "program expects {} inputs, got {}",
            p.ct_inputs.len(),
            inputs.len()
        )));
    }
    for (name, v) in p.ct_inputs.iter().zip(inputs) {
        check_slots(&p.params, &v.slots).map_err(|e| Error::Structural(format!("input {name}: {e}")))?;
    }
    let mut values: Vec<CtValue> = Vec::with_capacity(p.body.len());
    for instr in &p.body {
        let v = {
            let lookup = |s: Source| match s {
                Source::Input(i) => inputs.get(i).cloned(),
                Source::Inst(j) => values.get(j).cloned(),
            };
            eval_instruction(&p.params, instr, &lookup, &p.pt_consts)?
        };
        values.push(v);
    }
    match p.result {
        Source::Input(i) => inputs.get(i).cloned(),
        Source::Inst(j) => values.get(j).cloned(),
    }
    .ok_or_else(|| Error::Structural("result reference unbound".into()))
}

/// Runs `p` on inputs given by name.
pub fn eval_named(p: &Program, inputs: &std::collections::HashMap<String, CtValue>) -> Result<CtValue> {
    let positional = p
        .ct_inputs
        .iter()
        .map(|name| {
            inputs
                .get(name)
                .cloned()
                .ok_or_else(|| Error::Structural(format!("missing input {name}")))
        })
        .collect::<Result<Vec<_>>>()?;
    eval_program(p, &positional)
}

/// Slot values only, with fresh inputs. Used by the hot paths in tests.
pub fn eval_slots(p: &Program, inputs: &[Vec<u64>]) -> Result<Vec<u64>> {
    let cts: Vec<CtValue> = inputs.iter().map(|s| CtValue { slots: s.clone(), depth: 0 }).collect();
    Ok(eval_program(p, &cts)?.slots)
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = |s: Source| match s {
            Source::Input(i) => self.ct_inputs[i].clone(),
            Source::Inst(j) => format!("c{}", j + 1),
        };
        let operand = |o: &Operand| {
            if o.rot == 0 {
                name(o.src)
            } else {
                format!("(rot-ct {} {})", name(o.src), o.rot)
            }
        };
        for (i, instr) in self.body.iter().enumerate() {
            let rhs = match instr.rhs {
                Rhs::Ct(o) => format!(" {}", operand(&o)),
                Rhs::Pt(k) => format!(" {}", self.pt_consts[k].name),
                Rhs::None => String::new(),
            };
            writeln!(f, "c{} = ({} {}{})", i + 1, instr.op, operand(&instr.lhs), rhs)?;
        }
        write!(f, "return {}", name(self.result))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring(n: usize, t: u64) -> RingParams {
        RingParams::new(n, t).unwrap()
    }

    fn ct(slots: &[u64], depth: u32) -> CtValue {
        CtValue { slots: slots.to_vec(), depth }
    }

    /// Applies a single binary instruction to two inputs.
    fn binop(params: RingParams, op: Opcode, a: CtValue, b: CtValue, pt: Option<Vec<u64>>) -> CtValue {
        let mut p = Program::identity(params, vec!["x".into(), "y".into()]);
        let instr = match pt {
            Some(slots) => {
                p.pt_consts.push(NamedPt { name: "k".into(), value: PtValue { slots } });
                Instruction::ct_pt(op, Operand::input(0), 0)
            }
            None => Instruction::ct_ct(op, Operand::input(0), Operand::input(1)),
        };
        p.push(instr);
        eval_program(&p, &[a, b]).unwrap()
    }

    #[test]
    fn ring_validation() {
        assert!(RingParams::new(16, 65537).is_ok());
        assert!(RingParams::new(12, 65537).is_err());
        assert!(RingParams::new(1, 65537).is_err());
        assert!(RingParams::new(16, 65536).is_err());
        assert!(RingParams::new(16, 2).is_err());
        assert_eq!(RingParams::fitting(25, 17).unwrap().n, 32);
    }

    #[test]
    fn rotate_examples() {
        let v = [10, 11, 12, 13, 14];
        assert_eq!(rotate_slots(&v, 1), vec![11, 12, 13, 14, 10]);
        assert_eq!(rotate_slots(&v, 0), v.to_vec());
        assert_eq!(rotate_slots(&v, 5), v.to_vec());
        assert_eq!(rotate_slots(&v, -1), vec![14, 10, 11, 12, 13]);
    }

    // One test per row of the instruction table: value and depth rule.
    #[test]
    fn add_ct_ct_row() {
        let r = binop(ring(4, 7), Opcode::AddCtCt, ct(&[1, 2, 3, 4], 2), ct(&[4, 3, 2, 1], 5), None);
        assert_eq!(r, ct(&[5, 5, 5, 5], 5));
    }

    #[test]
    fn add_ct_pt_row() {
        let r = binop(ring(4, 7), Opcode::AddCtPt, ct(&[1, 2, 3, 4], 3), ct(&[0; 4], 9), Some(vec![6, 6, 0, 1]));
        assert_eq!(r, ct(&[0, 1, 3, 5], 3));
    }

    #[test]
    fn sub_ct_ct_row() {
        // Depth is max(x, y), same as addition.
        let r = binop(ring(4, 7), Opcode::SubCtCt, ct(&[1, 2, 3, 4], 1), ct(&[4, 3, 2, 1], 4), None);
        assert_eq!(r, ct(&[4, 6, 1, 3], 4));
    }

    #[test]
    fn sub_ct_pt_row() {
        let r = binop(ring(4, 7), Opcode::SubCtPt, ct(&[1, 2, 3, 4], 2), ct(&[0; 4], 0), Some(vec![2, 2, 2, 2]));
        assert_eq!(r, ct(&[6, 0, 1, 2], 2));
    }

    #[test]
    fn mul_ct_ct_row() {
        let r = binop(ring(4, 7), Opcode::MulCtCt, ct(&[1, 2, 3, 4], 0), ct(&[4, 3, 2, 1], 0), None);
        assert_eq!(r, ct(&[4, 6, 6, 4], 1));
        let r = binop(ring(4, 7), Opcode::MulCtCt, ct(&[1, 1, 1, 1], 3), ct(&[2, 2, 2, 2], 1), None);
        assert_eq!(r.depth, 4);
    }

    #[test]
    fn mul_ct_pt_row() {
        let r = binop(ring(4, 7), Opcode::MulCtPt, ct(&[1, 2, 3, 4], 2), ct(&[0; 4], 6), Some(vec![3, 3, 3, 3]));
        assert_eq!(r, ct(&[3, 6, 2, 5], 3));
    }

    #[test]
    fn rotate_row() {
        let mut p = Program::identity(ring(4, 7), vec!["x".into()]);
        p.push(Instruction::rotate(Source::Input(0), 1));
        let r = eval_program(&p, &[ct(&[1, 2, 3, 4], 2)]).unwrap();
        assert_eq!(r, ct(&[2, 3, 4, 1], 2));
    }

    #[test]
    fn sub_of_opposite_rotations() {
        // rot(c,1) - rot(c,-1) on c = {0,1,2,3}, t = 17.
        let params = ring(4, 17);
        let mut p = Program::identity(params, vec!["c".into()]);
        let minus_one = params.normalize_rot(-1);
        p.push(Instruction::ct_ct(Opcode::SubCtCt, Operand::input(0).rotated(1), Operand::input(0).rotated(minus_one)));
        let r = eval_program(&p, &[ct(&[0, 1, 2, 3], 0)]).unwrap();
        let c = [0i64, 1, 2, 3];
        let oracle: Vec<u64> = (0..4).map(|i| params.reduce(c[(i + 1) % 4] - c[(i + 3) % 4])).collect();
        assert_eq!(r.slots, oracle);
        assert_eq!(r.slots, vec![15, 2, 2, 15]);
    }

    #[test]
    fn empty_program_returns_input() {
        let p = Program::identity(ring(4, 7), vec!["c".into()]);
        let v = ct(&[1, 2, 3, 4], 0);
        assert_eq!(eval_program(&p, &[v.clone()]).unwrap(), v);
        assert_eq!(p.mdepth(), 0);
        assert_eq!(p.instruction_count(), InstrCount { arith: 0, rotations: 0, total: 0 });
        assert_eq!(estimated_latency(&p, &CostModel::default()), 0.0);
    }

    #[test]
    fn dot_product_reduction_shape() {
        let params = ring(4, 65537);
        let mut p = Program::identity(params, vec!["a".into(), "b".into()]);
        let r = p.push(Instruction::ct_ct(Opcode::MulCtCt, Operand::input(0), Operand::input(1)));
        let s = p.push(Instruction::ct_ct(Opcode::AddCtCt, Operand::new(r, 0), Operand::new(r, 2)));
        p.push(Instruction::ct_ct(Opcode::AddCtCt, Operand::new(s, 0), Operand::new(s, 1)));
        let a = [3u64, 5, 7, 11];
        let b = [2u64, 4, 6, 8];
        let out = eval_program(&p, &[ct(&a, 0), ct(&b, 0)]).unwrap();
        let dot: u64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert_eq!(out.slots[0], dot % 65537);
        assert_eq!(out.depth, 1);
    }

    #[test]
    fn depth_and_counts() {
        let params = ring(8, 65537);
        let mut p = Program::identity(params, (0..4).map(|i| format!("x{i}")).collect());
        let ab = p.push(Instruction::ct_ct(Opcode::MulCtCt, Operand::input(0), Operand::input(1)));
        let cd = p.push(Instruction::ct_ct(Opcode::MulCtCt, Operand::input(2), Operand::input(3)));
        p.push(Instruction::ct_ct(Opcode::MulCtCt, Operand::new(ab, 0), Operand::new(cd, 0)));
        assert_eq!(p.mdepth(), 2);
        let m = CostModel { mul_ct_ct: 10.0, ..CostModel::default() };
        assert_eq!(estimated_latency(&p, &m), 30.0);

        let mut q = Program::identity(params, vec!["x".into()]);
        q.pt_consts.push(NamedPt { name: "two".into(), value: PtValue::splat(&params, 2) });
        q.push(Instruction::ct_pt(Opcode::MulCtPt, Operand::input(0), 0));
        assert_eq!(q.mdepth(), 1);
    }

    #[test]
    fn duplicate_rotation_counted_once() {
        let params = ring(8, 65537);
        let mut p = Program::identity(params, vec!["c0".into()]);
        p.push(Instruction::ct_ct(Opcode::AddCtCt, Operand::input(0).rotated(1), Operand::input(0).rotated(1)));
        assert_eq!(p.instruction_count(), InstrCount { arith: 1, rotations: 1, total: 2 });
        let mut q = Program::identity(params, vec!["a".into(), "b".into()]);
        q.push(Instruction::ct_ct(Opcode::AddCtCt, Operand::input(0), Operand::input(1)));
        assert_eq!(q.instruction_count(), InstrCount { arith: 1, rotations: 0, total: 1 });
    }

    #[test]
    fn validate_rejects_forward_reference() {
        let params = ring(8, 65537);
        let mut p = Program::identity(params, vec!["c0".into()]);
        p.body.push(Instruction::ct_ct(Opcode::AddCtCt, Operand::inst(0), Operand::input(0)));
        p.result = Source::Inst(0);
        assert!(p.validate().is_err());
        let mut q = Program::identity(params, vec!["c0".into()]);
        q.push(Instruction::ct_pt(Opcode::AddCtPt, Operand::input(0), 0));
        assert!(q.validate().is_err());
    }

    #[test]
    fn eval_reports_bad_inputs() {
        let params = ring(4, 7);
        let p = Program::identity(params, vec!["c".into()]);
        assert!(eval_program(&p, &[]).is_err());
        assert!(eval_program(&p, &[ct(&[1, 2, 3], 0)]).is_err());
        assert!(eval_program(&p, &[ct(&[1, 2, 3, 9], 0)]).is_err());
        let named = std::collections::HashMap::new();
        assert!(eval_named(&p, &named).is_err());
    }

    #[test]
    fn default_cost_model_is_valid() {
        CostModel::default().validate().unwrap();
        let bad = CostModel { mul_ct_ct: 1.0, ..CostModel::default() };
        assert!(bad.validate().is_err());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn rotation_group_law(v in prop::collection::vec(0u64..100, 1..17), a in -40i64..40, b in -40i64..40) {
                let n = v.len() as i64;
                prop_assert_eq!(rotate_slots(&rotate_slots(&v, a), b), rotate_slots(&v, (a + b).rem_euclid(n)));
            }

            #[test]
            fn left_right_duality(v in prop::collection::vec(0u64..100, 16), x in 0i64..16) {
                let params = RingParams::new(16, 65537).unwrap();
                prop_assert_eq!(rotate_slots(&v, x), rotate_slots(&v, params.normalize_rot(-(16 - x)) as i64));
            }

            #[test]
            fn elementwise_commutes_with_rotation(a in prop::collection::vec(0u64..65537, 8), b in prop::collection::vec(0u64..65537, 8), k in 0usize..8) {
                let params = RingParams::new(8, 65537).unwrap();
                let mut rotated = Program::identity(params, vec!["a".into(), "b".into()]);
                rotated.push(Instruction::ct_ct(Opcode::AddCtCt, Operand::input(0).rotated(k), Operand::input(1).rotated(k)));
                let mut plain = Program::identity(params, vec!["a".into(), "b".into()]);
                plain.push(Instruction::ct_ct(Opcode::AddCtCt, Operand::input(0), Operand::input(1)));
                let lhs = eval_slots(&rotated, &[a.clone(), b.clone()]).unwrap();
                let rhs = rotate_slots(&eval_slots(&plain, &[a, b]).unwrap(), k as i64);
                prop_assert_eq!(lhs, rhs);
            }

            #[test]
            fn depth_bounded_by_multiplies(ops in prop::collection::vec((0usize..6, 0usize..50, 0usize..50, 0usize..8), 0..12)) {
                let params = RingParams::new(8, 65537).unwrap();
                let mut p = Program::identity(params, vec!["x".into()]);
                p.pt_consts.push(NamedPt { name: "k".into(), value: PtValue::splat(&params, 3) });
                for (i, (op, l, r, rot)) in ops.into_iter().enumerate() {
                    let src = |x: usize| if x % (i + 1) == 0 { Source::Input(0) } else { Source::Inst(x % (i + 1) - 1) };
                    let op = Opcode::ARITH[op];
                    let lhs = Operand::new(src(l), rot);
                    p.push(if op.is_ct_pt() { Instruction::ct_pt(op, lhs, 0) } else { Instruction::ct_ct(op, lhs, Operand::new(src(r), 0)) });
                }
                prop_assert!(p.validate().is_ok());
                prop_assert!(p.mdepth() as usize <= p.multiply_count());
            }

            #[test]
            fn independent_reorder_preserves_result(a in prop::collection::vec(0u64..65537, 8), r1 in 0usize..8, r2 in 0usize..8) {
                let params = RingParams::new(8, 65537).unwrap();
                let build = |swap: bool| {
                    let mut p = Program::identity(params, vec!["a".into()]);
                    let first = Instruction::ct_ct(Opcode::MulCtCt, Operand::input(0), Operand::input(0).rotated(r1));
                    let second = Instruction::ct_ct(Opcode::AddCtCt, Operand::input(0), Operand::input(0).rotated(r2));
                    let (x, y) = if swap { (second, first) } else { (first, second) };
                    p.push(x);
                    p.push(y);
                    p.push(Instruction::ct_ct(Opcode::SubCtCt, Operand::inst(if swap { 1 } else { 0 }), Operand::inst(if swap { 0 } else { 1 })));
                    p
                };
                let v = CtValue { slots: a, depth: 0 };
                prop_assert_eq!(eval_program(&build(false), &[v.clone()]).unwrap(), eval_program(&build(true), &[v]).unwrap());
            }
        }
    }
}
