//! Element-wise polynomial models with plaintext or encrypted coefficients.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ir::{Opcode, Program, Source};
use crate::sketch::{HoleKind, Sketch};
use crate::spec::{lift_reference, CtInput, Expr, KernelSpec, Layout, PtInput, Reference, ValueDomain};

use super::{alt, Builder, Kernel, KernelParams};

fn coefficients(params: &KernelParams, count: usize) -> Vec<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.coefficient_seed);
    (0..count).map(|_| rng.gen_range(2..params.t as i64)).collect()
}

/// Builds `expr` over `x` and named coefficients, each either a splatted
/// plaintext or an extra ciphertext input.
fn model_spec(name: &str, params: &KernelParams, coeffs: &[&str], expr: Expr) -> Result<KernelSpec> {
    let len = params.length.unwrap_or(4);
    if len == 0 {
        return Err(Error::Spec(format!("{name}: empty vector")));
    }
    let layout = Layout::vector(len);
    let ring = params.ring_for(&[&layout])?;
    let ct = |n: &str| CtInput { name: n.into(), layout: layout.clone(), domain: ValueDomain::Full };
    let mut inputs = vec![ct("x")];
    let mut pt_inputs = Vec::new();
    if params.encrypted_coefficients {
        inputs.extend(coeffs.iter().map(|c| ct(c)));
    } else {
        for (c, v) in coeffs.iter().zip(coefficients(params, coeffs.len())) {
            pt_inputs.push(PtInput::splat(c, &layout, v));
        }
    }
    let reference = Reference { inputs, pt_inputs, output: layout.clone(), expr };
    lift_reference(name, ring, &reference)
}

fn model_sketch(spec: &KernelSpec) -> Result<Sketch> {
    let mut alts =
        vec![alt(Opcode::AddCtCt, HoleKind::Ct, HoleKind::Ct), alt(Opcode::MulCtCt, HoleKind::Ct, HoleKind::Ct)];
    for k in 0..spec.pt_inputs.len() {
        alts.push(alt(Opcode::MulCtPt, HoleKind::Ct, HoleKind::Pt(k)));
        alts.push(alt(Opcode::AddCtPt, HoleKind::Ct, HoleKind::Pt(k)));
    }
    Sketch::uniform(spec.ring, spec.input_names(), spec.packed_pts(), alts, 1)
}

/// Multiplies or adds `x` by the named coefficient, whichever way it is encoded.
fn apply(b: &mut Builder, spec: &KernelSpec, op: Opcode, x: Source, coeff: &str) -> Source {
    match spec.inputs.iter().position(|i| i.name == coeff) {
        Some(k) => {
            let ct_op = if op == Opcode::MulCtPt { Opcode::MulCtCt } else { Opcode::AddCtCt };
            b.op(ct_op, x, 0, Source::Input(k), 0)
        }
        None => {
            let k = b.pt_index(coeff);
            b.op_pt(op, x, k)
        }
    }
}

fn x() -> Expr {
    Expr::read("x", &[0])
}

fn c(name: &str) -> Expr {
    Expr::read(name, &[0])
}

/// `a*x + b`.
pub struct LinearRegression;

impl Kernel for LinearRegression {
    fn name(&self) -> &str {
        "linear_regression"
    }

    fn description(&self) -> &str {
        "element-wise linear model a*x + b"
    }

    fn spec(&self, params: &KernelParams) -> Result<KernelSpec> {
        let expr = Expr::sum(vec![Expr::mul2(c("a"), x()), c("b")]);
        model_spec(self.name(), params, &["a", "b"], expr)
    }

    fn sketch(&self, spec: &KernelSpec) -> Result<Sketch> {
        model_sketch(spec)
    }

    fn baseline(&self, spec: &KernelSpec) -> Result<Program> {
        let mut b = Builder::new(spec);
        let m = apply(&mut b, spec, Opcode::MulCtPt, Source::Input(0), "a");
        apply(&mut b, spec, Opcode::AddCtPt, m, "b");
        Ok(b.finish())
    }
}

/// `a*x^2 + b*x + c`.
pub struct PolynomialRegression;

impl Kernel for PolynomialRegression {
    fn name(&self) -> &str {
        "polynomial_regression"
    }

    fn description(&self) -> &str {
        "element-wise quadratic model a*x^2 + b*x + c"
    }

    fn spec(&self, params: &KernelParams) -> Result<KernelSpec> {
        let expr = Expr::sum(vec![Expr::Mul(vec![c("a"), x(), x()]), Expr::mul2(c("b"), x()), c("c")]);
        model_spec(self.name(), params, &["a", "b", "c"], expr)
    }

    fn sketch(&self, spec: &KernelSpec) -> Result<Sketch> {
        model_sketch(spec)
    }

    fn baseline(&self, spec: &KernelSpec) -> Result<Program> {
        let mut b = Builder::new(spec);
        let x = Source::Input(0);
        let sq = b.mul(x, x);
        let quad = apply(&mut b, spec, Opcode::MulCtPt, sq, "a");
        let lin = apply(&mut b, spec, Opcode::MulCtPt, x, "b");
        let sum = b.add(quad, lin);
        apply(&mut b, spec, Opcode::AddCtPt, sum, "c");
        Ok(b.finish())
    }

    fn target_instructions(&self) -> Option<usize> {
        Some(7)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::eval_slots;
    use crate::verify::verify;

    #[test]
    fn encrypted_coefficients_variant() {
        let params = KernelParams { encrypted_coefficients: true, ..KernelParams::default() };
        for k in [&LinearRegression as &dyn Kernel, &PolynomialRegression] {
            let spec = k.spec(&params).unwrap();
            assert!(spec.pt_inputs.is_empty());
            assert!(spec.inputs.len() >= 3);
            let base = k.baseline(&spec).unwrap();
            assert!(base.pt_consts.is_empty());
            assert!(verify(&base, &spec).unwrap().is_equivalent());
        }
    }

    #[test]
    fn quadratic_oracle() {
        let params = KernelParams::default();
        let spec = PolynomialRegression.spec(&params).unwrap();
        let co = coefficients(&params, 3);
        let t = params.t as i128;
        let xs: Vec<u64> = vec![3, 0, 65536, 1234];
        let got = eval_slots(&PolynomialRegression.baseline(&spec).unwrap(), &[xs.clone()]).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            let x = x as i128;
            let want = (co[0] as i128 * x * x + co[1] as i128 * x + co[2] as i128).rem_euclid(t);
            assert_eq!(got[i] as i128, want);
        }
    }

    #[test]
    fn coefficients_are_seeded() {
        let p = KernelParams::default();
        assert_eq!(coefficients(&p, 3), coefficients(&p, 3));
        let q = KernelParams { coefficient_seed: 8, ..p.clone() };
        assert_ne!(coefficients(&p, 3), coefficients(&q, 3));
    }

    #[test]
    fn baseline_multiplies() {
        let spec = PolynomialRegression.spec(&KernelParams::default()).unwrap();
        let base = PolynomialRegression.baseline(&spec).unwrap();
        assert_eq!(base.multiply_count(), 3);
        assert_eq!(base.instruction_count().total, 5);
    }
}
