//! Kernel specifications: reference computations lifted to per-slot
//! polynomials over the packed input slots.

use std::collections::{BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{Instruction, NamedPt, Program, PtValue, RingParams, Rhs, Source};
use crate::poly::Poly;

/// What the slots outside a layout's image hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Known zero; out-of-range reads evaluate to 0.
    #[default]
    Zero,
    /// Unknown contents; out-of-range reads make an output undefined.
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ValueDomain {
    #[default]
    Full,
    Binary,
}

/// Strided packing of a tensor into a slot vector.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Layout {
    pub dims: Vec<usize>,
    pub strides: Vec<usize>,
    #[serde(default)]
    pub offset: usize,
    #[serde(default)]
    pub padding: Padding,
}

impl Layout {
    pub fn vector(len: usize) -> Self {
        Layout { dims: vec![len], strides: vec![1], offset: 0, padding: Padding::Zero }
    }

    /// A single value in slot 0.
    pub fn scalar() -> Self {
        Layout::vector(1)
    }

    /// Row-major `h x w` image surrounded by a `pad`-wide zero border.
    pub fn image(h: usize, w: usize, pad: usize) -> Self {
        let stride = w + 2 * pad;
        Layout { dims: vec![h, w], strides: vec![stride, 1], offset: pad * stride + pad, padding: Padding::Zero }
    }

    pub fn with_padding(mut self, padding: Padding) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_offset(mut self, offset: usize) -> Self {
        self.offset = offset;
        self
    }

    /// Same packing, different padding.
    pub fn same_packing(&self, other: &Layout) -> bool {
        self.dims == other.dims && self.strides == other.strides && self.offset == other.offset
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, idx: &[i64]) -> bool {
        idx.len() == self.dims.len() && idx.iter().zip(&self.dims).all(|(&i, &d)| i >= 0 && (i as usize) < d)
    }

    pub fn slot(&self, idx: &[usize]) -> usize {
        self.offset + idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum::<usize>()
    }

    pub fn linear(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.dims).fold(0, |acc, (i, d)| acc * d + i)
    }

    /// All logical indices in row-major order.
    pub fn indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new()];
        for &d in &self.dims {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    (0..d).map(move |i| {
                        let mut v = prefix.clone();
                        v.push(i);
                        v
                    })
                })
                .collect();
        }
        out
    }

    /// Slots in the image of the packing.
    pub fn slots(&self) -> Vec<usize> {
        self.indices().iter().map(|i| self.slot(i)).collect()
    }

    pub fn max_slot(&self) -> usize {
        self.slots().into_iter().max().unwrap_or(0)
    }

    /// Slot count needed to hold the layout including a trailing border as
    /// wide as the leading one.
    pub fn extent(&self) -> usize {
        self.max_slot() + 1 + self.offset
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.dims.is_empty() || self.dims.len() != self.strides.len() || self.is_empty() {
            return Err(Error::Spec(format!("malformed layout {:?}", self.dims)));
        }
        let slots = self.slots();
        if slots.iter().any(|&s| s >= n) {
            return Err(Error::Spec(format!("layout needs slot {} but ring has {n}", self.max_slot())));
        }
        let distinct: BTreeSet<_> = slots.iter().collect();
        if distinct.len() != slots.len() {
            return Err(Error::Spec("layout packing is not injective".into()));
        }
        Ok(())
    }
}

/// Pure reference expression evaluated at each logical output index.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expr {
    Const(i64),
    /// Reads `input[out + offset]`.
    Read { input: String, offset: Vec<i64> },
    /// Reads `input[index]` independent of the output index.
    ReadAt { input: String, index: Vec<usize> },
    Add(Vec<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Vec<Expr>),
    Neg(Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Lt(Box<Expr>, Box<Expr>),
    Select(Box<Expr>, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn read(input: &str, offset: &[i64]) -> Expr {
        Expr::Read { input: input.into(), offset: offset.to_vec() }
    }

    pub fn at(input: &str, index: &[usize]) -> Expr {
        Expr::ReadAt { input: input.into(), index: index.to_vec() }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        Expr::Sub(Box::new(a), Box::new(b))
    }

    pub fn mul2(a: Expr, b: Expr) -> Expr {
        Expr::Mul(vec![a, b])
    }

    pub fn square(a: Expr) -> Expr {
        Expr::Mul(vec![a.clone(), a])
    }

    pub fn sum(terms: Vec<Expr>) -> Expr {
        Expr::Add(terms)
    }

    fn check_supported(&self) -> Result<()> {
        match self {
            Expr::Const(_) | Expr::Read { .. } | Expr::ReadAt { .. } => Ok(()),
            Expr::Add(xs) | Expr::Mul(xs) => xs.iter().try_for_each(Expr::check_supported),
            Expr::Sub(a, b) => {
                a.check_supported()?;
                b.check_supported()
            }
            Expr::Neg(a) => a.check_supported(),
            Expr::Div(..) => Err(Error::Unsupported("division has no ring counterpart".into())),
            Expr::Lt(..) => Err(Error::Unsupported("comparison is not expressible as ring arithmetic".into())),
            Expr::Select(..) => Err(Error::Unsupported("data-dependent branch".into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CtInput {
    pub name: String,
    pub layout: Layout,
    #[serde(default)]
    pub domain: ValueDomain,
}

/// Plaintext operand with known logical values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PtInput {
    pub name: String,
    pub layout: Layout,
    pub values: Vec<i64>,
}

impl PtInput {
    /// The same value at every logical position of `layout`.
    pub fn splat(name: &str, layout: &Layout, value: i64) -> Self {
        PtInput { name: name.into(), layout: layout.clone(), values: vec![value; layout.len()] }
    }

    pub fn pack(&self, params: &RingParams) -> PtValue {
        let mut slots = vec![0; params.n];
        for idx in self.layout.indices() {
            slots[self.layout.slot(&idx)] = params.reduce(self.values[self.layout.linear(&idx)]);
        }
        PtValue { slots }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub inputs: Vec<CtInput>,
    #[serde(default)]
    pub pt_inputs: Vec<PtInput>,
    pub output: Layout,
    pub expr: Expr,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelSpec {
    pub name: String,
    pub ring: RingParams,
    pub inputs: Vec<CtInput>,
    pub pt_inputs: Vec<PtInput>,
    pub output: Layout,
    /// One entry per slot; `None` for slots outside the mask.
    pub out_polys: Vec<Option<Poly>>,
    pub mask: Vec<usize>,
    pub reference: Option<Reference>,
}

/// Concrete inputs and the expected values on masked slots.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Example {
    pub inputs: Vec<Vec<u64>>,
    pub expected: Vec<(usize, u64)>,
}

impl KernelSpec {
    /// Variable id of input `k`, slot `s`.
    pub fn var(&self, k: usize, s: usize) -> u32 {
        (k * self.ring.n + s) as u32
    }

    pub fn var_input(&self, v: u32) -> (usize, usize) {
        let v = v as usize;
        (v / self.ring.n, v % self.ring.n)
    }

    pub fn num_vars(&self) -> usize {
        self.inputs.len() * self.ring.n
    }

    pub fn input_names(&self) -> Vec<String> {
        self.inputs.iter().map(|i| i.name.clone()).collect()
    }

    /// Input slots that hold a known zero.
    pub fn zero_slots(&self, k: usize) -> Vec<bool> {
        let layout = &self.inputs[k].layout;
        let mut zero = vec![layout.padding == Padding::Zero; self.ring.n];
        for s in layout.slots() {
            zero[s] = false;
        }
        zero
    }

    /// Symbolic value of input `k` at slot `s`.
    pub fn input_poly(&self, k: usize, s: usize) -> Poly {
        if self.zero_slots(k)[s] {
            Poly::zero(self.ring.t)
        } else {
            Poly::var(self.ring.t, self.var(k, s))
        }
    }

    pub fn is_binary_var(&self, v: u32) -> bool {
        self.inputs[self.var_input(v).0].domain == ValueDomain::Binary
    }

    pub fn has_binary_inputs(&self) -> bool {
        self.inputs.iter().any(|i| i.domain == ValueDomain::Binary)
    }

    /// Plaintext operands packed into slot vectors, in declaration order.
    pub fn packed_pts(&self) -> Vec<NamedPt> {
        self.pt_inputs.iter().map(|p| NamedPt { name: p.name.clone(), value: p.pack(&self.ring) }).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.ring.validate()?;
        if self.mask.is_empty() {
            return Err(Error::Spec(format!("{}: validity mask is empty", self.name)));
        }
        if self.out_polys.len() != self.ring.n {
            return Err(Error::Spec("out_polys must cover every slot".into()));
        }
        let nv = self.num_vars() as u32;
        for &s in &self.mask {
            let p = self.out_polys.get(s).and_then(|p| p.as_ref());
            let p = p.ok_or_else(|| Error::Spec(format!("masked slot {s} has no polynomial")))?;
            if p.vars().iter().any(|&v| v >= nv) {
                return Err(Error::Spec(format!("slot {s} references an undeclared input")));
            }
            if p.degree() as u64 >= self.ring.t {
                return Err(Error::Spec(format!("slot {s} degree reaches the plaintext modulus")));
            }
        }
        Ok(())
    }

    /// Evaluates the spec polynomials at masked slots.
    pub fn expected(&self, inputs: &[Vec<u64>]) -> Vec<(usize, u64)> {
        let n = self.ring.n;
        let lookup = |v: u32| inputs[v as usize / n][v as usize % n];
        self.mask
            .iter()
            .map(|&s| (s, self.out_polys[s].as_ref().expect("masked slot").eval(&lookup)))
            .collect()
    }

    /// Input slot vectors with padding and domains respected, zero where known.
    pub fn sanitize(&self, inputs: &mut [Vec<u64>]) {
        for (k, input) in inputs.iter_mut().enumerate() {
            let zero = self.zero_slots(k);
            for (s, v) in input.iter_mut().enumerate() {
                if zero[s] {
                    *v = 0;
                } else if self.inputs[k].domain == ValueDomain::Binary {
                    *v = u64::from(*v != 0);
                } else {
                    *v %= self.ring.t;
                }
            }
        }
    }

    pub fn example_for(&self, mut inputs: Vec<Vec<u64>>) -> Example {
        self.sanitize(&mut inputs);
        let expected = self.expected(&inputs);
        Example { inputs, expected }
    }
}

/// Lifts a reference computation into a kernel spec.
pub fn lift_reference(name: &str, ring: RingParams, reference: &Reference) -> Result<KernelSpec> {
    ring.validate()?;
    reference.expr.check_supported()?;
    if reference.inputs.is_empty() {
        return Err(Error::Spec(format!("{name}: no ciphertext inputs")));
    }
    for input in &reference.inputs {
        input.layout.validate(ring.n).map_err(|e| Error::Spec(format!("{name}: input {}: {e}", input.name)))?;
    }
    for pt in &reference.pt_inputs {
        pt.layout.validate(ring.n)?;
        if pt.values.len() != pt.layout.len() {
            return Err(Error::Spec(format!("plaintext {} has {} values for {} positions", pt.name, pt.values.len(), pt.layout.len())));
        }
    }
    reference.output.validate(ring.n).map_err(|e| Error::Spec(format!("{name}: output: {e}")))?;

    let mut spec = KernelSpec {
        name: name.into(),
        ring,
        inputs: reference.inputs.clone(),
        pt_inputs: reference.pt_inputs.clone(),
        output: reference.output.clone(),
        out_polys: vec![None; ring.n],
        mask: Vec::new(),
        reference: Some(reference.clone()),
    };
    for idx in reference.output.indices() {
        let out: Vec<i64> = idx.iter().map(|&i| i as i64).collect();
        if let Some(p) = lift_expr(&spec, &reference.expr, &out)? {
            let s = reference.output.slot(&idx);
            spec.out_polys[s] = Some(p);
            spec.mask.push(s);
        }
    }
    spec.mask.sort_unstable();
    spec.validate()?;
    Ok(spec)
}

enum Operand<'a> {
    Ct(usize, &'a CtInput),
    Pt(&'a PtInput),
}

fn find_input<'a>(spec: &'a KernelSpec, name: &str) -> Result<Operand<'a>> {
    if let Some((k, i)) = spec.inputs.iter().enumerate().find(|(_, i)| i.name == name) {
        return Ok(Operand::Ct(k, i));
    }
    spec.pt_inputs
        .iter()
        .find(|p| p.name == name)
        .map(Operand::Pt)
        .ok_or_else(|| Error::Spec(format!("unknown input {name}")))
}

fn lift_read(spec: &KernelSpec, input: &str, idx: &[i64]) -> Result<Option<Poly>> {
    let t = spec.ring.t;
    let (layout, in_range) = match find_input(spec, input)? {
        Operand::Ct(_, i) => (&i.layout, i.layout.contains(idx)),
        Operand::Pt(p) => (&p.layout, p.layout.contains(idx)),
    };
    if idx.len() != layout.dims.len() {
        return Err(Error::Spec(format!("read of {input} has rank {} but layout has rank {}", idx.len(), layout.dims.len())));
    }
    if !in_range {
        return Ok(match layout.padding {
            Padding::Zero => Some(Poly::zero(t)),
            Padding::Free => None,
        });
    }
    let uidx: Vec<usize> = idx.iter().map(|&i| i as usize).collect();
    Ok(Some(match find_input(spec, input)? {
        Operand::Ct(k, i) => Poly::var(t, spec.var(k, i.layout.slot(&uidx))),
        Operand::Pt(p) => Poly::constant(t, p.values[p.layout.linear(&uidx)]),
    }))
}

fn lift_expr(spec: &KernelSpec, e: &Expr, out: &[i64]) -> Result<Option<Poly>> {
    let t = spec.ring.t;
    let all = |xs: &[Expr]| -> Result<Option<Vec<Poly>>> {
        let mut v = Vec::with_capacity(xs.len());
        for x in xs {
            match lift_expr(spec, x, out)? {
                Some(p) => v.push(p),
                None => return Ok(None),
            }
        }
        Ok(Some(v))
    };
    Ok(match e {
        Expr::Const(c) => Some(Poly::constant(t, *c)),
        Expr::Read { input, offset } => {
            if offset.len() != out.len() {
                return Err(Error::Spec(format!("read of {input}: offset rank differs from output rank")));
            }
            let idx: Vec<i64> = out.iter().zip(offset).map(|(o, d)| o + d).collect();
            lift_read(spec, input, &idx)?
        }
        Expr::ReadAt { input, index } => {
            let idx: Vec<i64> = index.iter().map(|&i| i as i64).collect();
            lift_read(spec, input, &idx)?
        }
        Expr::Add(xs) => all(xs)?.map(|ps| ps.iter().fold(Poly::zero(t), |acc, p| acc.add(p))),
        Expr::Mul(xs) => all(xs)?.map(|ps| ps.iter().fold(Poly::constant(t, 1), |acc, p| acc.mul(p))),
        Expr::Sub(a, b) => match (lift_expr(spec, a, out)?, lift_expr(spec, b, out)?) {
            (Some(a), Some(b)) => Some(a.sub(&b)),
            _ => None,
        },
        Expr::Neg(a) => lift_expr(spec, a, out)?.map(|p| p.neg()),
        Expr::Div(..) | Expr::Lt(..) | Expr::Select(..) => unreachable!("rejected by check_supported"),
    })
}

/// Direct evaluation of the reference on packed inputs, without polynomials.
/// Returns `None` for undefined outputs.
pub fn eval_reference(spec: &KernelSpec, inputs: &[Vec<u64>]) -> Result<Vec<(usize, Option<u64>)>> {
    let reference = spec.reference.as_ref().ok_or_else(|| Error::Spec("spec has no reference".into()))?;
    let t = spec.ring.t as i128;
    fn go(spec: &KernelSpec, inputs: &[Vec<u64>], e: &Expr, out: &[i64], t: i128) -> Result<Option<i128>> {
        let read = |input: &str, idx: &[i64]| -> Result<Option<i128>> {
            Ok(match find_input(spec, input)? {
                Operand::Ct(k, i) => {
                    if i.layout.contains(idx) {
                        let u: Vec<usize> = idx.iter().map(|&x| x as usize).collect();
                        Some(inputs[k][i.layout.slot(&u)] as i128)
                    } else if i.layout.padding == Padding::Zero {
                        Some(0)
                    } else {
                        None
                    }
                }
                Operand::Pt(p) => {
                    if p.layout.contains(idx) {
                        let u: Vec<usize> = idx.iter().map(|&x| x as usize).collect();
                        Some(p.values[p.layout.linear(&u)] as i128)
                    } else if p.layout.padding == Padding::Zero {
                        Some(0)
                    } else {
                        None
                    }
                }
            })
        };
        let r = match e {
            Expr::Const(c) => Some(*c as i128),
            Expr::Read { input, offset } => {
                let idx: Vec<i64> = out.iter().zip(offset).map(|(o, d)| o + d).collect();
                read(input, &idx)?
            }
            Expr::ReadAt { input, index } => {
                let idx: Vec<i64> = index.iter().map(|&i| i as i64).collect();
                read(input, &idx)?
            }
            Expr::Add(xs) => {
                let mut acc = 0i128;
                for x in xs {
                    match go(spec, inputs, x, out, t)? {
                        Some(v) => acc = (acc + v).rem_euclid(t),
                        None => return Ok(None),
                    }
                }
                Some(acc)
            }
            Expr::Mul(xs) => {
                let mut acc = 1i128;
                for x in xs {
                    match go(spec, inputs, x, out, t)? {
                        Some(v) => acc = (acc * v.rem_euclid(t)).rem_euclid(t),
                        None => return Ok(None),
                    }
                }
                Some(acc)
            }
            Expr::Sub(a, b) => match (go(spec, inputs, a, out, t)?, go(spec, inputs, b, out, t)?) {
                (Some(a), Some(b)) => Some(a - b),
                _ => None,
            },
            Expr::Neg(a) => go(spec, inputs, a, out, t)?.map(|v| -v),
            _ => return Err(Error::Unsupported("unsupported reference construct".into())),
        };
        Ok(r.map(|v| v.rem_euclid(t)))
    }
    reference
        .output
        .indices()
        .into_iter()
        .map(|idx| {
            let out: Vec<i64> = idx.iter().map(|&i| i as i64).collect();
            let v = go(spec, inputs, &reference.expr, &out, t)?;
            Ok((reference.output.slot(&idx), v.map(|v| v as u64)))
        })
        .collect()
}

/// Deterministic random example honoring padding and value domains.
pub fn random_example(spec: &KernelSpec, seed: u64) -> Example {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.ring.n;
    let inputs: Vec<Vec<u64>> = spec
        .inputs
        .iter()
        .map(|input| match input.domain {
            ValueDomain::Binary => (0..n).map(|_| rng.gen_range(0..2)).collect(),
            ValueDomain::Full => (0..n).map(|_| rng.gen_range(0..spec.ring.t)).collect(),
        })
        .collect();
    spec.example_for(inputs)
}

/// Seeded uniform slot vectors for `count` ciphertexts.
pub fn random_inputs(params: &RingParams, count: usize, seed: u64) -> Vec<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| (0..params.n).map(|_| rng.gen_range(0..params.t)).collect()).collect()
}

/// Symbolic slot values of every program value, computed on demand.
pub struct SymbolicEval<'a> {
    program: &'a Program,
    input: &'a dyn Fn(usize, usize) -> Poly,
    memo: HashMap<(Source, usize), Poly>,
}

impl<'a> SymbolicEval<'a> {
    pub fn new(program: &'a Program, input: &'a dyn Fn(usize, usize) -> Poly) -> Self {
        SymbolicEval { program, input, memo: HashMap::new() }
    }

    pub fn value(&mut self, src: Source, slot: usize) -> Poly {
        if let Some(p) = self.memo.get(&(src, slot)) {
            return p.clone();
        }
        let n = self.program.params.n;
        let p = match src {
            Source::Input(k) => (self.input)(k, slot),
            Source::Inst(j) => {
                let Instruction { op, lhs, rhs } = self.program.body[j];
                let a = self.value(lhs.src, (slot + lhs.rot) % n);
                match rhs {
                    Rhs::Ct(o) => {
                        let b = self.value(o.src, (slot + o.rot) % n);
                        apply(op, &a, &b)
                    }
                    Rhs::Pt(k) => {
                        let t = self.program.params.t;
                        let b = Poly::constant(t, self.program.pt_consts[k].value.slots[slot] as i64);
                        apply(op, &a, &b)
                    }
                    Rhs::None => a,
                }
            }
        };
        self.memo.insert((src, slot), p.clone());
        p
    }

    pub fn result(&mut self, slot: usize) -> Poly {
        self.value(self.program.result, slot)
    }
}

fn apply(op: crate::ir::Opcode, a: &Poly, b: &Poly) -> Poly {
    use crate::ir::Opcode::*;
    match op {
        AddCtCt | AddCtPt => a.add(b),
        SubCtCt | SubCtPt => a.sub(b),
        MulCtCt | MulCtPt => a.mul(b),
        Rotate | Relinearize => a.clone(),
    }
}

/// Polynomials of every output slot with input `k`, slot `s` as variable
/// `k * n + s`.
pub fn poly_of_program(p: &Program) -> Vec<Poly> {
    let (n, t) = (p.params.n, p.params.t);
    let input = move |k: usize, s: usize| Poly::var(t, (k * n + s) as u32);
    let mut ev = SymbolicEval::new(p, &input);
    (0..n).map(|s| ev.result(s)).collect()
}

/// Polynomials of the requested output slots, binding inputs as `spec` does
/// (known-zero padding substituted).
pub fn program_polys(p: &Program, spec: &KernelSpec, slots: &[usize]) -> Vec<Poly> {
    let zero: Vec<Vec<bool>> = (0..spec.inputs.len()).map(|k| spec.zero_slots(k)).collect();
    let t = spec.ring.t;
    let input = |k: usize, s: usize| {
        if zero[k][s] {
            Poly::zero(t)
        } else {
            Poly::var(t, spec.var(k, s))
        }
    };
    let mut ev = SymbolicEval::new(p, &input);
    slots.iter().map(|&s| ev.result(s)).collect()
}
