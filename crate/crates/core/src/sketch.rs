//! Local-rotate sketches: a fixed number of components, each choosing one of
//! several opcode/operand-hole alternatives.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{Instruction, NamedPt, Opcode, Operand, Program, PtValue, RingParams, Rhs, Source};

/// Allowed left-rotation amounts, sorted, always containing 0.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RotationDomain {
    amounts: Vec<usize>,
}

impl RotationDomain {
    pub fn from_amounts(n: usize, amounts: impl IntoIterator<Item = i64>) -> Self {
        let mut set: BTreeSet<usize> = amounts.into_iter().map(|a| a.rem_euclid(n as i64) as usize).collect();
        set.insert(0);
        RotationDomain { amounts: set.into_iter().collect() }
    }

    pub fn zero() -> Self {
        RotationDomain { amounts: vec![0] }
    }

    pub fn full(n: usize) -> Self {
        RotationDomain { amounts: (0..n).collect() }
    }

    /// `{0, 1, 2, 4, ..., n/2}`.
    pub fn pow2(n: usize) -> Self {
        let mut amounts = vec![0];
        let mut k = 1;
        while k < n {
            amounts.push(k);
            k *= 2;
        }
        RotationDomain { amounts }
    }

    /// Rotations that bring any element of an `h x w` window over an image with
    /// row stride `stride` onto the window anchor.
    pub fn sliding_window(h: usize, w: usize, stride: usize, n: usize) -> Result<Self> {
        if h == 0 || w == 0 {
            return Err(Error::Sketch("empty window".into()));
        }
        if w > stride || h * stride > n {
            return Err(Error::Sketch(format!("{h}x{w} window does not fit stride {stride} in {n} slots")));
        }
        let rows = -((h as i64 - 1) / 2)..=(h as i64 - 1 - (h as i64 - 1) / 2);
        let cols = -((w as i64 - 1) / 2)..=(w as i64 - 1 - (w as i64 - 1) / 2);
        let mut offsets = Vec::new();
        for r in rows {
            for c in cols.clone() {
                offsets.push(r * stride as i64 + c);
            }
        }
        Ok(RotationDomain::from_amounts(n, offsets))
    }

    pub fn amounts(&self) -> &[usize] {
        &self.amounts
    }

    pub fn contains(&self, rot: usize) -> bool {
        self.amounts.binary_search(&rot).is_ok()
    }

    pub fn len(&self) -> usize {
        self.amounts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amounts.is_empty()
    }

    pub fn is_subset(&self, other: &RotationDomain) -> bool {
        self.amounts.iter().all(|&a| other.contains(a))
    }

    pub fn union(&self, other: &RotationDomain) -> RotationDomain {
        let set: BTreeSet<usize> = self.amounts.iter().chain(&other.amounts).copied().collect();
        RotationDomain { amounts: set.into_iter().collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum HoleKind {
    /// Any prior ciphertext value, unrotated.
    Ct,
    /// Any prior ciphertext value, rotated by an amount in the domain.
    CtRot(RotationDomain),
    /// A fixed plaintext constant of the sketch.
    Pt(usize),
    /// No operand (unary opcodes).
    Empty,
}

impl HoleKind {
    fn rotations(&self) -> &[usize] {
        match self {
            HoleKind::CtRot(d) => d.amounts(),
            _ => &[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Alternative {
    pub op: Opcode,
    pub lhs: HoleKind,
    pub rhs: HoleKind,
}

impl Alternative {
    pub fn new(op: Opcode, lhs: HoleKind, rhs: HoleKind) -> Self {
        Alternative { op, lhs, rhs }
    }

    pub fn validate(&self, pt_count: usize) -> Result<()> {
        let ct = |h: &HoleKind| matches!(h, HoleKind::Ct | HoleKind::CtRot(_));
        let ok = match (&self.rhs, self.op) {
            (_, op) if !ct(&self.lhs) => return Err(Error::Sketch(format!("{op}: first operand must be a ciphertext hole"))),
            (HoleKind::Pt(k), op) if op.is_ct_pt() => *k < pt_count,
            (h, op) if op.is_ct_ct() => ct(h),
            (HoleKind::Empty, Opcode::Rotate) => true,
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Sketch(format!("{}: operand holes {:?} do not fit the opcode", self.op, self.rhs)))
        }
    }

    pub fn lhs_rotations(&self) -> &[usize] {
        self.lhs.rotations()
    }

    pub fn rhs_rotations(&self) -> &[usize] {
        self.rhs.rotations()
    }

    /// Whether this alternative can produce `instr`.
    pub fn admits(&self, instr: &Instruction) -> bool {
        if instr.op != self.op || !self.lhs.rotations().contains(&instr.lhs.rot) {
            return false;
        }
        match (&self.rhs, instr.rhs) {
            (HoleKind::Pt(k), Rhs::Pt(j)) => *k == j,
            (HoleKind::Empty, Rhs::None) => true,
            (h @ (HoleKind::Ct | HoleKind::CtRot(_)), Rhs::Ct(o)) => h.rotations().contains(&o.rot),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ComponentTemplate {
    pub alternatives: Vec<Alternative>,
}

impl ComponentTemplate {
    /// Alternatives sorted into the search enumeration order.
    pub fn new(mut alternatives: Vec<Alternative>) -> Self {
        alternatives.sort_by_key(|a| a.op.search_rank());
        ComponentTemplate { alternatives }
    }
}

/// The value of a hole assignment: one instruction per component.
pub type HoleAssignment = Vec<Instruction>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sketch {
    pub params: RingParams,
    pub ct_inputs: Vec<String>,
    pub pt_consts: Vec<NamedPt>,
    pub components: Vec<ComponentTemplate>,
}

impl Sketch {
    /// `len` copies of the same component template.
    pub fn uniform(
        params: RingParams,
        ct_inputs: Vec<String>,
        pt_consts: Vec<NamedPt>,
        alternatives: Vec<Alternative>,
        len: usize,
    ) -> Result<Self> {
        if alternatives.is_empty() {
            return Err(Error::Sketch("empty opcode set".into()));
        }
        if len == 0 {
            return Err(Error::Sketch("sketch length must be at least 1".into()));
        }
        for a in &alternatives {
            a.validate(pt_consts.len())?;
        }
        let template = ComponentTemplate::new(alternatives);
        Ok(Sketch { params, ct_inputs, pt_consts, components: vec![template; len] })
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Same sketch with `len` copies of the first component's template.
    pub fn with_length(&self, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Sketch("sketch length must be at least 1".into()));
        }
        let template = self.components.first().cloned().ok_or_else(|| Error::Sketch("sketch has no components".into()))?;
        Ok(Sketch { components: vec![template; len], ..self.clone() })
    }

    /// Explicit-rotation variant: rotation becomes a standalone component and
    /// arithmetic operands lose their rotation holes.
    pub fn to_explicit_rotations(&self) -> Self {
        let components = self
            .components
            .iter()
            .map(|c| {
                let mut domain = RotationDomain::zero();
                let strip = |h: &HoleKind, domain: &mut RotationDomain| match h {
                    HoleKind::CtRot(d) => {
                        *domain = domain.union(d);
                        HoleKind::Ct
                    }
                    other => other.clone(),
                };
                let mut alts: Vec<Alternative> = c
                    .alternatives
                    .iter()
                    .filter(|a| a.op != Opcode::Rotate)
                    .map(|a| Alternative { op: a.op, lhs: strip(&a.lhs, &mut domain), rhs: strip(&a.rhs, &mut domain) })
                    .collect();
                if domain.len() > 1 {
                    alts.push(Alternative::new(Opcode::Rotate, HoleKind::CtRot(domain), HoleKind::Empty));
                }
                ComponentTemplate::new(alts)
            })
            .collect();
        Sketch { components, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.components.is_empty() {
            return Err(Error::Sketch("sketch length must be at least 1".into()));
        }
        for c in &self.components {
            if c.alternatives.is_empty() {
                return Err(Error::Sketch("component with no alternatives".into()));
            }
            for a in &c.alternatives {
                a.validate(self.pt_consts.len())?;
                for h in [&a.lhs, &a.rhs] {
                    if let HoleKind::CtRot(d) = h {
                        if d.amounts().iter().any(|&r| r >= self.params.n) {
                            return Err(Error::Sketch("rotation domain exceeds slot count".into()));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Value ids: inputs first, then components.
    pub fn source_of(&self, id: usize) -> Source {
        if id < self.ct_inputs.len() {
            Source::Input(id)
        } else {
            Source::Inst(id - self.ct_inputs.len())
        }
    }

    pub fn source_id(&self, s: Source) -> usize {
        match s {
            Source::Input(i) => i,
            Source::Inst(j) => self.ct_inputs.len() + j,
        }
    }

    /// Builds the program for a complete hole assignment.
    pub fn instantiate(&self, a: &HoleAssignment) -> Result<Program> {
        if a.len() != self.components.len() {
            return Err(Error::Sketch(format!("assignment has {} components, sketch has {}", a.len(), self.components.len())));
        }
        for (i, (instr, template)) in a.iter().zip(&self.components).enumerate() {
            for o in instr.ct_operands() {
                if let Source::Inst(j) = o.src {
                    if j >= i {
                        return Err(Error::Sketch(format!("component {i} references component {j} (not yet defined)")));
                    }
                }
                if let Source::Input(k) = o.src {
                    if k >= self.ct_inputs.len() {
                        return Err(Error::Sketch(format!("component {i} references unknown input {k}")));
                    }
                }
            }
            if !template.alternatives.iter().any(|alt| alt.admits(instr)) {
                return Err(Error::Sketch(format!("component {i}: {instr:?} is outside the sketch's choices")));
            }
        }
        let p = Program {
            params: self.params,
            ct_inputs: self.ct_inputs.clone(),
            pt_consts: self.pt_consts.clone(),
            body: a.clone(),
            result: Source::Inst(a.len() - 1),
        };
        p.validate()?;
        Ok(p)
    }

    /// Every instruction component `i` may choose, in enumeration order.
    pub fn choices(&self, i: usize) -> Vec<Instruction> {
        let values = self.ct_inputs.len() + i;
        let mut out = Vec::new();
        for alt in &self.components[i].alternatives {
            for l in 0..values {
                for &lr in alt.lhs_rotations() {
                    let lhs = Operand::new(self.source_of(l), lr);
                    match &alt.rhs {
                        HoleKind::Pt(k) => out.push(Instruction::ct_pt(alt.op, lhs, *k)),
                        HoleKind::Empty => out.push(Instruction { op: alt.op, lhs, rhs: Rhs::None }),
                        h => {
                            for r in 0..values {
                                for &rr in h.rotations() {
                                    out.push(Instruction::ct_ct(alt.op, lhs, Operand::new(self.source_of(r), rr)));
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Every completion, without any pruning. Only for small sketches.
    pub fn all_completions(&self) -> Vec<HoleAssignment> {
        let mut out = vec![Vec::new()];
        for i in 0..self.components.len() {
            let choices = self.choices(i);
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    choices.iter().map(move |c| {
                        let mut v = prefix.clone();
                        v.push(*c);
                        v
                    })
                })
                .collect();
        }
        out
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PtDecl {
    name: String,
    #[serde(default)]
    value: Option<i64>,
    #[serde(default)]
    slots: Option<Vec<i64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct AltDecl {
    op: String,
    lhs: String,
    #[serde(default)]
    rhs: Option<String>,
}

/// On-disk sketch description.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SketchFile {
    #[serde(rename = "L")]
    pub len: usize,
    pub ring: RingParams,
    pub inputs: Vec<String>,
    #[serde(default)]
    pt_consts: Vec<PtDecl>,
    /// `"full"`, `"pow2"`, or `"window h w stride"`.
    pub domain: String,
    alternatives: Vec<AltDecl>,
    #[serde(default)]
    pub explicit_rotations: bool,
}

pub fn parse_domain(spec: &str, n: usize) -> Result<RotationDomain> {
    let words: Vec<&str> = spec.split_whitespace().collect();
    match words.as_slice() {
        ["full"] => Ok(RotationDomain::full(n)),
        ["pow2"] => Ok(RotationDomain::pow2(n)),
        ["none"] => Ok(RotationDomain::zero()),
        ["window", h, w, stride] => {
            let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad window size {s}")));
            RotationDomain::sliding_window(num(h)?, num(w)?, num(stride)?, n)
        }
        _ => Err(Error::Parse(format!("unknown rotation domain {spec:?}"))),
    }
}

impl SketchFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn build(&self) -> Result<Sketch> {
        let params = self.ring;
        params.validate()?;
        let domain = parse_domain(&self.domain, params.n)?;
        let pt_consts = self
            .pt_consts
            .iter()
            .map(|p| {
                let slots = match (&p.value, &p.slots) {
                    (Some(v), None) => vec![params.reduce(*v); params.n],
                    (None, Some(s)) if s.len() == params.n => s.iter().map(|&x| params.reduce(x)).collect(),
                    _ => return Err(Error::Parse(format!("plaintext {} needs a value or {} slots", p.name, params.n))),
                };
                Ok(NamedPt { name: p.name.clone(), value: PtValue { slots } })
            })
            .collect::<Result<Vec<_>>>()?;
        let hole = |s: &str| -> Result<HoleKind> {
            let words: Vec<&str> = s.split_whitespace().collect();
            match words.as_slice() {
                ["ct"] => Ok(HoleKind::Ct),
                ["ct-r"] => Ok(HoleKind::CtRot(domain.clone())),
                ["pt", name] => pt_consts
                    .iter()
                    .position(|p| p.name == *name)
                    .map(HoleKind::Pt)
                    .ok_or_else(|| Error::Parse(format!("unknown plaintext {name}"))),
                _ => Err(Error::Parse(format!("unknown operand kind {s:?}"))),
            }
        };
        let alternatives = self
            .alternatives
            .iter()
            .map(|a| {
                let op = Opcode::from_mnemonic(&a.op).ok_or_else(|| Error::Parse(format!("unknown opcode {}", a.op)))?;
                let rhs = match &a.rhs {
                    Some(r) => hole(r)?,
                    None => HoleKind::Empty,
                };
                Ok(Alternative::new(op, hole(&a.lhs)?, rhs))
            })
            .collect::<Result<Vec<_>>>()?;
        let sketch = Sketch::uniform(params, self.inputs.clone(), pt_consts, alternatives, self.len)?;
        Ok(if self.explicit_rotations { sketch.to_explicit_rotations() } else { sketch })
    }
}
