//! Sliding-window image kernels over a zero-bordered, row-major packing.

use crate::error::{Error, Result};
use crate::ir::{Opcode, Program};
use crate::sketch::{HoleKind, RotationDomain, Sketch};
use crate::spec::{lift_reference, CtInput, Expr, KernelSpec, Layout, Reference, ValueDomain};

use super::{alt, ct_rot, splat, Builder, Kernel, KernelParams, Rot};

fn image_layout(params: &KernelParams, default: usize) -> Result<Layout> {
    let h = params.height.unwrap_or(default);
    let w = params.width.unwrap_or(default);
    if h == 0 || w == 0 {
        return Err(Error::Spec("empty image".into()));
    }
    Ok(Layout::image(h, w, 1))
}

fn image_spec(name: &str, params: &KernelParams, default: usize, expr: Expr) -> Result<KernelSpec> {
    let layout = image_layout(params, default)?;
    let ring = params.ring_for(&[&layout])?;
    let reference = Reference {
        inputs: vec![CtInput { name: "img".into(), layout: layout.clone(), domain: ValueDomain::Full }],
        pt_inputs: Vec::new(),
        output: layout,
        expr,
    };
    lift_reference(name, ring, &reference)
}

fn stride(spec: &KernelSpec) -> i64 {
    spec.inputs[0].layout.strides[0] as i64
}

fn window(spec: &KernelSpec, h: usize, w: usize) -> Result<RotationDomain> {
    RotationDomain::sliding_window(h, w, stride(spec) as usize, spec.ring.n)
}

/// Sum over a 2x2 window anchored at the top-left pixel.
pub struct BoxBlur;

impl Kernel for BoxBlur {
    fn name(&self) -> &str {
        "box_blur"
    }

    fn description(&self) -> &str {
        "2x2 box blur (unnormalized window sum)"
    }

    fn spec(&self, params: &KernelParams) -> Result<KernelSpec> {
        let taps = [[0, 0], [0, 1], [1, 0], [1, 1]];
        let expr = Expr::sum(taps.iter().map(|d| Expr::read("img", d)).collect());
        image_spec(self.name(), params, 6, expr)
    }

    fn sketch(&self, spec: &KernelSpec) -> Result<Sketch> {
        let d = window(spec, 2, 2)?;
        Sketch::uniform(spec.ring, spec.input_names(), Vec::new(), vec![alt(Opcode::AddCtCt, ct_rot(&d), ct_rot(&d))], 1)
    }

    fn baseline(&self, spec: &KernelSpec) -> Result<Program> {
        let s = stride(spec);
        let mut b = Builder::new(spec);
        let x = crate::ir::Source::Input(0);
        b.tree_sum(x, &[0, 1, s, s + 1]);
        Ok(b.finish())
    }

    fn target_instructions(&self) -> Option<usize> {
        Some(4)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradientAxis {
    X,
    Y,
}

/// 3x3 Sobel gradient along one axis.
pub struct Gradient {
    axis: GradientAxis,
}

impl Gradient {
    pub fn new(axis: GradientAxis) -> Self {
        Gradient { axis }
    }

    /// `(weight, positive tap, negative tap)` as (row, col) offsets.
    pub fn taps(&self) -> [(i64, [i64; 2], [i64; 2]); 3] {
        let t = |w, a: i64| match self.axis {
            GradientAxis::X => (w, [a, 1], [a, -1]),
            GradientAxis::Y => (w, [1, a], [-1, a]),
        };
        [t(1, -1), t(2, 0), t(1, 1)]
    }
}

impl Kernel for Gradient {
    fn name(&self) -> &str {
        match self.axis {
            GradientAxis::X => "gx",
            GradientAxis::Y => "gy",
        }
    }

    fn description(&self) -> &str {
        match self.axis {
            GradientAxis::X => "3x3 Sobel horizontal gradient",
            GradientAxis::Y => "3x3 Sobel vertical gradient",
        }
    }

    fn spec(&self, params: &KernelParams) -> Result<KernelSpec> {
        let mut terms = Vec::new();
        for (w, pos, neg) in self.taps() {
            let diff = Expr::sub(Expr::read("img", &pos), Expr::read("img", &neg));
            terms.push(if w == 1 { diff } else { Expr::mul2(Expr::Const(w), diff) });
        }
        image_spec(self.name(), params, 3, Expr::sum(terms))
    }

    fn sketch(&self, spec: &KernelSpec) -> Result<Sketch> {
        let d = window(spec, 3, 3)?;
        let alts = vec![
            alt(Opcode::AddCtCt, ct_rot(&d), ct_rot(&d)),
            alt(Opcode::SubCtCt, ct_rot(&d), ct_rot(&d)),
            alt(Opcode::MulCtPt, HoleKind::Ct, HoleKind::Pt(0)),
        ];
        Sketch::uniform(spec.ring, spec.input_names(), vec![splat(&spec.ring, "two", 2)], alts, 1)
    }

    fn baseline(&self, spec: &KernelSpec) -> Result<Program> {
        let s = stride(spec);
        let off = |d: [i64; 2]| d[0] * s + d[1];
        let x = crate::ir::Source::Input(0);
        let mut b = Builder::new(spec);
        let diffs: Vec<_> = self.taps().iter().map(|&(_, p, n)| b.sub_r(Rot(x, off(p)), Rot(x, off(n)))).collect();
        let doubled = b.add(diffs[1], diffs[1]);
        let outer = b.add(diffs[0], diffs[2]);
        b.add(outer, doubled);
        Ok(b.finish())
    }

    fn target_instructions(&self) -> Option<usize> {
        Some(7)
    }
}

/// Roberts cross edge response `D1^2 + D2^2` over 2x2 windows.
pub struct RobertsCross;

impl Kernel for RobertsCross {
    fn name(&self) -> &str {
        "roberts_cross"
    }

    fn description(&self) -> &str {
        "Roberts cross squared gradient magnitude"
    }

    fn spec(&self, params: &KernelParams) -> Result<KernelSpec> {
        let d1 = Expr::sub(Expr::read("img", &[0, 0]), Expr::read("img", &[1, 1]));
        let d2 = Expr::sub(Expr::read("img", &[0, 1]), Expr::read("img", &[1, 0]));
        image_spec(self.name(), params, 3, Expr::sum(vec![Expr::square(d1), Expr::square(d2)]))
    }

    fn sketch(&self, spec: &KernelSpec) -> Result<Sketch> {
        let d = window(spec, 2, 2)?;
        let alts = vec![
            alt(Opcode::SubCtCt, ct_rot(&d), ct_rot(&d)),
            alt(Opcode::MulCtCt, HoleKind::Ct, HoleKind::Ct),
            alt(Opcode::AddCtCt, HoleKind::Ct, HoleKind::Ct),
        ];
        Sketch::uniform(spec.ring, spec.input_names(), Vec::new(), alts, 1)
    }

    fn baseline(&self, spec: &KernelSpec) -> Result<Program> {
        let s = stride(spec);
        let x = crate::ir::Source::Input(0);
        let mut b = Builder::new(spec);
        let d1 = b.sub_r(Rot(x, 0), Rot(x, s + 1));
        let d2 = b.sub_r(Rot(x, 1), Rot(x, s));
        let a = b.mul(d1, d1);
        let c = b.mul(d2, d2);
        b.add(a, c);
        Ok(b.finish())
    }

    fn target_instructions(&self) -> Option<usize> {
        Some(10)
    }
}
