//! Benchmark kernels: specification, sketch and hand-written baseline.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ir::{Instruction, NamedPt, Opcode, Operand, Program, PtValue, RingParams, Source, DEFAULT_T};
use crate::sketch::{Alternative, HoleKind, RotationDomain, Sketch};
use crate::spec::{KernelSpec, Layout};

mod image;
mod regression;
mod vector;

pub use image::{BoxBlur, Gradient, GradientAxis, RobertsCross};
pub use regression::{LinearRegression, PolynomialRegression};
pub use vector::{DotProduct, Hamming, L2Distance, VectorSum};

/// Size and encoding knobs shared by all kernels; each kernel reads the
/// fields it needs and fills the rest from its defaults.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelParams {
    pub length: Option<usize>,
    pub height: Option<usize>,
    pub width: Option<usize>,
    /// Slot count; the smallest fitting power of two when absent.
    pub n: Option<usize>,
    pub t: u64,
    /// Encrypt regression coefficients instead of passing them as plaintexts.
    pub encrypted_coefficients: bool,
    pub coefficient_seed: u64,
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams {
            length: None,
            height: None,
            width: None,
            n: None,
            t: DEFAULT_T,
            encrypted_coefficients: false,
            coefficient_seed: 7,
        }
    }
}

impl KernelParams {
    pub fn ring_for(&self, layouts: &[&Layout]) -> Result<RingParams> {
        let needed = layouts.iter().map(|l| l.extent()).max().unwrap_or(1);
        match self.n {
            Some(n) if n < needed => Err(Error::Spec(format!("{needed} slots needed, ring has {n}"))),
            Some(n) => RingParams::new(n, self.t),
            None => RingParams::fitting(needed, self.t),
        }
    }
}

pub trait Kernel: Send + Sync {
    fn name(&self) -> &str;

    fn description(&self) -> &str;

    fn spec(&self, params: &KernelParams) -> Result<KernelSpec>;

    fn sketch(&self, spec: &KernelSpec) -> Result<Sketch>;

    /// Hand-written program that minimizes logic depth.
    fn baseline(&self, spec: &KernelSpec) -> Result<Program>;

    /// Instruction count the synthesized kernel is expected not to exceed.
    fn target_instructions(&self) -> Option<usize> {
        None
    }
}

#[derive(Clone, Default)]
pub struct KernelRegistry {
    kernels: HashMap<String, Arc<dyn Kernel>>,
}

impl KernelRegistry {
    pub fn new() -> Self {
        KernelRegistry::default()
    }

    pub fn with_builtin() -> Self {
        let mut r = KernelRegistry::new();
        r.register(Arc::new(BoxBlur));
        r.register(Arc::new(DotProduct));
        r.register(Arc::new(Hamming));
        r.register(Arc::new(L2Distance));
        r.register(Arc::new(LinearRegression));
        r.register(Arc::new(PolynomialRegression));
        r.register(Arc::new(Gradient::new(GradientAxis::X)));
        r.register(Arc::new(Gradient::new(GradientAxis::Y)));
        r.register(Arc::new(RobertsCross));
        r.register(Arc::new(VectorSum));
        r
    }

    pub fn register(&mut self, kernel: Arc<dyn Kernel>) {
        self.kernels.insert(kernel.name().to_string(), kernel);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn Kernel>> {
        self.kernels
            .get(name)
            .cloned()
            .ok_or_else(|| Error::Config(format!("unknown kernel {name:?} (available: {})", self.names().join(", "))))
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.kernels.keys().cloned().collect();
        names.sort();
        names
    }
}

/// The kernels of the benchmark suite, in report order.
pub const SUITE: [&str; 9] = [
    "box_blur",
    "dot_product",
    "hamming",
    "l2_distance",
    "linear_regression",
    "polynomial_regression",
    "gx",
    "gy",
    "roberts_cross",
];

pub fn ct_rot(d: &RotationDomain) -> HoleKind {
    HoleKind::CtRot(d.clone())
}

pub fn alt(op: Opcode, lhs: HoleKind, rhs: HoleKind) -> Alternative {
    Alternative::new(op, lhs, rhs)
}

pub fn splat(params: &RingParams, name: &str, value: i64) -> NamedPt {
    NamedPt { name: name.into(), value: PtValue::splat(params, value) }
}

/// Small helper for writing baselines by hand.
pub(crate) struct Builder {
    pub program: Program,
}

impl Builder {
    pub fn new(spec: &KernelSpec) -> Self {
        let mut program = Program::identity(spec.ring, spec.input_names());
        program.pt_consts = spec.packed_pts();
        Builder { program }
    }

    pub fn pt_index(&self, name: &str) -> usize {
        self.program.pt_consts.iter().position(|p| p.name == name).expect("declared plaintext")
    }

    fn norm(&self, rot: i64) -> usize {
        self.program.params.normalize_rot(rot)
    }

    pub fn op(&mut self, op: Opcode, a: Source, ra: i64, b: Source, rb: i64) -> Source {
        let (ra, rb) = (self.norm(ra), self.norm(rb));
        self.program.push(Instruction::ct_ct(op, Operand::new(a, ra), Operand::new(b, rb)))
    }

    pub fn add(&mut self, a: Source, b: Source) -> Source {
        self.op(Opcode::AddCtCt, a, 0, b, 0)
    }

    pub fn sub(&mut self, a: Source, b: Source) -> Source {
        self.op(Opcode::SubCtCt, a, 0, b, 0)
    }

    pub fn mul(&mut self, a: Source, b: Source) -> Source {
        self.op(Opcode::MulCtCt, a, 0, b, 0)
    }

    pub fn op_pt(&mut self, op: Opcode, a: Source, pt: usize) -> Source {
        self.program.push(Instruction::ct_pt(op, Operand::new(a, 0), pt))
    }

    pub fn add_r(&mut self, a: Rot, b: Rot) -> Source {
        self.op(Opcode::AddCtCt, a.0, a.1, b.0, b.1)
    }

    pub fn sub_r(&mut self, a: Rot, b: Rot) -> Source {
        self.op(Opcode::SubCtCt, a.0, a.1, b.0, b.1)
    }

    /// Rotate-and-add reduction leaving the sum of the first `len` slots in slot 0.
    pub fn reduce(&mut self, mut x: Source, len: usize) -> Source {
        let mut step = len.next_power_of_two() / 2;
        while step >= 1 {
            x = self.add_r(Rot(x, 0), Rot(x, step as i64));
            step /= 2;
        }
        x
    }

    /// Sum of `x` rotated by every offset in `offsets` (balanced tree).
    pub fn tree_sum(&mut self, x: Source, offsets: &[i64]) -> Source {
        let mut level: Vec<Rot> = offsets.iter().map(|&r| Rot(x, r)).collect();
        while level.len() > 1 {
            let mut next = Vec::with_capacity(level.len().div_ceil(2));
            for pair in level.chunks(2) {
                next.push(match pair {
                    [a, b] => Rot(self.add_r(*a, *b), 0),
                    [a] => *a,
                    _ => unreachable!(),
                });
            }
            level = next;
        }
        assert_eq!(level[0].1, 0, "tree_sum needs at least two terms");
        level[0].0
    }

    pub fn finish(self) -> Program {
        self.program
    }
}

/// A source rotated left by an amount (possibly negative).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Rot(pub Source, pub i64);
