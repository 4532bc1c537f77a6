//! Equivalence checking of candidate programs against kernel specs.
//!
//! A cheap random-probe filter runs first; the decision itself compares the
//! canonical polynomials of every masked slot.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::ir::{eval_slots, Program};
use crate::poly::Poly;
use crate::spec::{program_polys, Example, KernelSpec};

pub const PROBE_COUNT: usize = 64;
const PROBE_SEED: u64 = 0x5eed_cafe;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Equivalent,
    Counterexample { example: Example, actual: Vec<(usize, u64)> },
}

impl Verdict {
    pub fn is_equivalent(&self) -> bool {
        matches!(self, Verdict::Equivalent)
    }
}

fn check_signature(p: &Program, spec: &KernelSpec) -> Result<()> {
    if p.params != spec.ring {
        return Err(Error::Signature(format!("program ring {:?} differs from spec ring {:?}", p.params, spec.ring)));
    }
    if p.ct_inputs.len() != spec.inputs.len() {
        return Err(Error::Signature(format!(
            "program takes {} ciphertexts, spec declares {}",
            p.ct_inputs.len(),
            spec.inputs.len()
        )));
    }
    p.validate()
}

fn actual_on_mask(p: &Program, spec: &KernelSpec, inputs: &[Vec<u64>]) -> Result<Vec<(usize, u64)>> {
    let out = eval_slots(p, inputs)?;
    Ok(spec.mask.iter().map(|&s| (s, out[s])).collect())
}

/// Decides whether `p` computes `spec` on every masked slot for all inputs.
pub fn verify(p: &Program, spec: &KernelSpec) -> Result<Verdict> {
    check_signature(p, spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    let n = spec.ring.n;
    for probe in 0..PROBE_COUNT {
        let bits = probe < PROBE_COUNT / 2;
        let inputs: Vec<Vec<u64>> = (0..spec.inputs.len())
            .map(|_| (0..n).map(|_| if bits { rng.gen_range(0..2) } else { rng.gen_range(0..spec.ring.t) }).collect())
            .collect();
        let example = spec.example_for(inputs);
        let actual = actual_on_mask(p, spec, &example.inputs)?;
        if actual != example.expected {
            return Ok(Verdict::Counterexample { example, actual });
        }
    }

    let binary = |v: u32| spec.is_binary_var(v);
    let got = program_polys(p, spec, &spec.mask);
    for (&s, got) in spec.mask.iter().zip(&got) {
        let want = spec.out_polys[s].as_ref().expect("masked slot has a polynomial");
        if got.degree() as u64 >= spec.ring.t {
            return Err(Error::Internal(format!("slot {s}: degree reaches the plaintext modulus")));
        }
        let (got, want) = (got.multilinearize(&binary), want.multilinearize(&binary));
        if got != want {
            let point = counterexample_from_polys(&got, &want, spec.num_vars(), &binary)?;
            let inputs: Vec<Vec<u64>> = point.chunks(n).map(<[u64]>::to_vec).collect();
            let example = spec.example_for(inputs);
            let actual = actual_on_mask(p, spec, &example.inputs)?;
            return Ok(Verdict::Counterexample { example, actual });
        }
    }
    Ok(Verdict::Equivalent)
}

/// A point (one value per variable) where `pa` and `pb` evaluate differently.
/// Variables with `binary(v)` only take values 0 and 1.
pub fn counterexample_from_polys(pa: &Poly, pb: &Poly, num_vars: usize, binary: &dyn Fn(u32) -> bool) -> Result<Vec<u64>> {
    let t = pa.modulus();
    let diff = pa.sub(pb).multilinearize(binary);
    if diff.is_zero() {
        return Err(Error::Internal("no counterexample: polynomials are equal".into()));
    }
    let num_vars = num_vars.max(diff.vars().iter().next_back().map_or(0, |&v| v as usize + 1));

    // Small values first, so counterexamples stay readable.
    let mut rng = ChaCha8Rng::seed_from_u64(PROBE_SEED);
    for probe in 0..PROBE_COUNT {
        let hi = if probe < PROBE_COUNT / 2 { 2 } else { t };
        let point: Vec<u64> =
            (0..num_vars as u32).map(|v| if binary(v) { rng.gen_range(0..2) } else { rng.gen_range(0..hi) }).collect();
        if diff.eval_slice(&point) != 0 {
            return Ok(point);
        }
    }

    // The smallest monomial survives when every other variable is zero; a
    // non-zero polynomial has a non-root on the grid {0..deg_v} per variable.
    let (m, _) = diff.terms().next().expect("non-zero");
    let mut vars: Vec<u32> = m.vars().to_vec();
    vars.dedup();
    let bounds: Vec<u64> = vars.iter().map(|&v| diff.degree_in(v) as u64 + 1).collect();
    let mut point = vec![0u64; num_vars];
    let mut counter = vec![0u64; vars.len()];
    loop {
        for (i, &v) in vars.iter().enumerate() {
            point[v as usize] = counter[i];
        }
        if diff.eval_slice(&point) != 0 {
            return Ok(point);
        }
        let mut i = 0;
        loop {
            if i == counter.len() {
                return Err(Error::Internal("grid search found no distinguishing point".into()));
            }
            counter[i] += 1;
            if counter[i] < bounds[i] {
                break;
            }
            counter[i] = 0;
            i += 1;
        }
    }
}

/// Index of the first example on which `p` disagrees with the expected
/// masked outputs.
pub fn check_on_examples(p: &Program, examples: &[Example]) -> Result<Option<usize>> {
    for (i, ex) in examples.iter().enumerate() {
        let out = eval_slots(p, &ex.inputs)?;
        if ex.expected.iter().any(|&(s, v)| out[s] != v) {
            return Ok(Some(i));
        }
    }
    Ok(None)
}
