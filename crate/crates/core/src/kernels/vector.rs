//! Reductions over packed vectors; the result lands in slot 0.

use crate::error::{Error, Result};
use crate::ir::{Opcode, Program, Source};
use crate::sketch::{HoleKind, RotationDomain, Sketch};
use crate::spec::{lift_reference, CtInput, Expr, KernelSpec, Layout, Reference, ValueDomain};

use super::{alt, ct_rot, Builder, Kernel, KernelParams};

fn reduction_spec(
    name: &str,
    params: &KernelParams,
    default_len: usize,
    inputs: &[&str],
    domain: ValueDomain,
    term: impl Fn(usize) -> Expr,
) -> Result<KernelSpec> {
    let len = params.length.unwrap_or(default_len);
    if len < 2 {
        return Err(Error::Spec(format!("{name}: length must be at least 2")));
    }
    let layout = Layout::vector(len);
    let ring = params.ring_for(&[&layout])?;
    if ring.n < len.next_power_of_two() {
        return Err(Error::Spec(format!("{name}: reduction of {len} needs {} slots", len.next_power_of_two())));
    }
    let reference = Reference {
        inputs: inputs.iter().map(|n| CtInput { name: (*n).into(), layout: layout.clone(), domain }).collect(),
        pt_inputs: Vec::new(),
        output: Layout::scalar(),
        expr: Expr::sum((0..len).map(term).collect()),
    };
    lift_reference(name, ring, &reference)
}

fn length(spec: &KernelSpec) -> usize {
    spec.inputs[0].layout.len()
}

fn pow2(spec: &KernelSpec) -> RotationDomain {
    RotationDomain::pow2(length(spec).next_power_of_two())
}

fn sq_diff(x: &str, y: &str, i: usize) -> Expr {
    Expr::square(Expr::sub(Expr::at(x, &[i]), Expr::at(y, &[i])))
}

fn sq_diff_sketch(spec: &KernelSpec) -> Result<Sketch> {
    let d = pow2(spec);
    let alts = vec![
        alt(Opcode::SubCtCt, HoleKind::Ct, HoleKind::Ct),
        alt(Opcode::MulCtCt, HoleKind::Ct, HoleKind::Ct),
        alt(Opcode::AddCtCt, ct_rot(&d), ct_rot(&d)),
    ];
    Sketch::uniform(spec.ring, spec.input_names(), Vec::new(), alts, 1)
}

fn sq_diff_baseline(spec: &KernelSpec) -> Program {
    let mut b = Builder::new(spec);
    let d = b.sub(Source::Input(0), Source::Input(1));
    let m = b.mul(d, d);
    b.reduce(m, length(spec));
    b.finish()
}

pub struct DotProduct;

impl Kernel for DotProduct {
    fn name(&self) -> &str {
        "dot_product"
    }

    fn description(&self) -> &str {
        "inner product of two encrypted vectors"
    }

    fn spec(&self, params: &KernelParams) -> Result<KernelSpec> {
        reduction_spec(self.name(), params, 8, &["a", "b"], ValueDomain::Full, |i| {
            Expr::mul2(Expr::at("a", &[i]), Expr::at("b", &[i]))
        })
    }

    fn sketch(&self, spec: &KernelSpec) -> Result<Sketch> {
        let d = pow2(spec);
        let alts = vec![alt(Opcode::MulCtCt, HoleKind::Ct, HoleKind::Ct), alt(Opcode::AddCtCt, ct_rot(&d), ct_rot(&d))];
        Sketch::uniform(spec.ring, spec.input_names(), Vec::new(), alts, 1)
    }

    fn baseline(&self, spec: &KernelSpec) -> Result<Program> {
        let mut b = Builder::new(spec);
        let m = b.mul(Source::Input(0), Source::Input(1));
        b.reduce(m, length(spec));
        Ok(b.finish())
    }

    fn target_instructions(&self) -> Option<usize> {
        Some(7)
    }
}

/// Hamming distance of two bit vectors, computed as a sum of squared differences.
pub struct Hamming;

impl Kernel for Hamming {
    fn name(&self) -> &str {
        "hamming"
    }

    fn description(&self) -> &str {
        "Hamming distance of two encrypted bit vectors"
    }

    fn spec(&self, params: &KernelParams) -> Result<KernelSpec> {
        reduction_spec(self.name(), params, 4, &["x", "y"], ValueDomain::Binary, |i| sq_diff("x", "y", i))
    }

    fn sketch(&self, spec: &KernelSpec) -> Result<Sketch> {
        sq_diff_sketch(spec)
    }

    fn baseline(&self, spec: &KernelSpec) -> Result<Program> {
        Ok(sq_diff_baseline(spec))
    }

    fn target_instructions(&self) -> Option<usize> {
        Some(6)
    }
}

/// Squared Euclidean distance.
pub struct L2Distance;

impl Kernel for L2Distance {
    fn name(&self) -> &str {
        "l2_distance"
    }

    fn description(&self) -> &str {
        "squared L2 distance of two encrypted vectors"
    }

    fn spec(&self, params: &KernelParams) -> Result<KernelSpec> {
        reduction_spec(self.name(), params, 8, &["x", "y"], ValueDomain::Full, |i| sq_diff("x", "y", i))
    }

    fn sketch(&self, spec: &KernelSpec) -> Result<Sketch> {
        sq_diff_sketch(spec)
    }

    fn baseline(&self, spec: &KernelSpec) -> Result<Program> {
        Ok(sq_diff_baseline(spec))
    }
}

pub struct VectorSum;

impl Kernel for VectorSum {
    fn name(&self) -> &str {
        "vector_sum"
    }

    fn description(&self) -> &str {
        "sum of the elements of an encrypted vector"
    }

    fn spec(&self, params: &KernelParams) -> Result<KernelSpec> {
        reduction_spec(self.name(), params, 4, &["x"], ValueDomain::Full, |i| Expr::at("x", &[i]))
    }

    fn sketch(&self, spec: &KernelSpec) -> Result<Sketch> {
        let d = pow2(spec);
        Sketch::uniform(spec.ring, spec.input_names(), Vec::new(), vec![alt(Opcode::AddCtCt, ct_rot(&d), ct_rot(&d))], 1)
    }

    fn baseline(&self, spec: &KernelSpec) -> Result<Program> {
        let mut b = Builder::new(spec);
        b.reduce(Source::Input(0), length(spec));
        Ok(b.finish())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::eval_slots;
    use crate::spec::eval_reference;
    use crate::verify::verify;

    fn pad(v: &[u64], n: usize) -> Vec<u64> {
        let mut s = v.to_vec();
        s.resize(n, 0);
        s
    }

    #[test]
    fn hamming_of_known_bits() {
        let spec = Hamming.spec(&KernelParams::default()).unwrap();
        let x = pad(&[1, 0, 1, 1], spec.ring.n);
        let y = pad(&[1, 1, 0, 1], spec.ring.n);
        assert_eq!(eval_reference(&spec, &[x.clone(), y.clone()]).unwrap(), vec![(0, Some(2))]);
        let base = Hamming.baseline(&spec).unwrap();
        assert_eq!(eval_slots(&base, &[x, y]).unwrap()[0], 2);
    }

    #[test]
    fn dot_product_oracle() {
        let spec = DotProduct.spec(&KernelParams::default()).unwrap();
        let a: Vec<u64> = (1..=8).collect();
        let b: Vec<u64> = (1..=8).map(|i| 9 - i).collect();
        let want: u64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let base = DotProduct.baseline(&spec).unwrap();
        assert_eq!(eval_slots(&base, &[a, b]).unwrap()[0], want);
        assert_eq!(base.instruction_count().total, 7);
        assert_eq!(base.logical_depth(), 7);
    }

    #[test]
    fn odd_length_reduction() {
        let params = KernelParams { length: Some(6), ..KernelParams::default() };
        let spec = L2Distance.spec(&params).unwrap();
        assert_eq!(spec.ring.n, 8);
        assert!(verify(&L2Distance.baseline(&spec).unwrap(), &spec).unwrap().is_equivalent());
    }

    #[test]
    fn baseline_counts() {
        let p = KernelParams::default();
        let h = Hamming.spec(&p).unwrap();
        let hb = Hamming.baseline(&h).unwrap();
        assert_eq!(hb.instruction_count().total, 6);
        assert_eq!(hb.logical_depth(), 6);
        let l = L2Distance.spec(&p).unwrap();
        assert_eq!(L2Distance.baseline(&l).unwrap().instruction_count().total, 8);
    }
}
