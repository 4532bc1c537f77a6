//! Canonical multivariate polynomials over `Z_t`.
//!
//! A polynomial is a sparse map from monomials to non-zero coefficients.
//! Monomials are sorted multisets of variable ids, ordered by degree and then
//! lexicographically, so two polynomials are equal as functions over a prime
//! field of large enough order exactly when their term maps are equal.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// A sorted multiset of variable ids. The empty monomial is the constant term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial(Vec<u32>);

impl Monomial {
    pub fn one() -> Self {
        Monomial(Vec::new())
    }

    pub fn var(v: u32) -> Self {
        Monomial(vec![v])
    }

    pub fn from_vars(mut vars: Vec<u32>) -> Self {
        vars.sort_unstable();
        Monomial(vars)
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn vars(&self) -> &[u32] {
        &self.0
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        let (a, b) = (&self.0, &other.0);
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                out.push(a[i]);
                i += 1;
            } else {
                out.push(b[j]);
                j += 1;
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Monomial(out)
    }

    pub fn eval(&self, vals: &dyn Fn(u32) -> u64, t: u64) -> u64 {
        self.0.iter().fold(1u64, |acc, &v| acc * (vals(v) % t) % t)
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Poly {
    t: u64,
    terms: BTreeMap<Monomial, u64>,
}

impl Poly {
    pub fn zero(t: u64) -> Self {
        Poly { t, terms: BTreeMap::new() }
    }

    pub fn constant(t: u64, c: i64) -> Self {
        let mut p = Poly::zero(t);
        p.add_term(Monomial::one(), c.rem_euclid(t as i64) as u64);
        p
    }

    pub fn var(t: u64, v: u32) -> Self {
        let mut p = Poly::zero(t);
        p.terms.insert(Monomial::var(v), 1);
        p
    }

    pub fn modulus(&self) -> u64 {
        self.t
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Monomial, u64)> {
        self.terms.iter().map(|(m, &c)| (m, c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn coefficient(&self, m: &Monomial) -> u64 {
        self.terms.get(m).copied().unwrap_or(0)
    }

    /// Constant value, if the polynomial has no variables.
    pub fn as_constant(&self) -> Option<u64> {
        match self.terms.len() {
            0 => Some(0),
            1 => self.terms.get(&Monomial::one()).copied(),
            _ => None,
        }
    }

    pub fn degree(&self) -> usize {
        self.terms.keys().map(Monomial::degree).max().unwrap_or(0)
    }

    pub fn vars(&self) -> BTreeSet<u32> {
        self.terms.keys().flat_map(|m| m.vars().iter().copied()).collect()
    }

    fn add_term(&mut self, m: Monomial, c: u64) {
        if c == 0 {
            return;
        }
        let t = self.t;
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(c % t);
            }
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let s = (*e.get() + c) % t;
                if s == 0 {
                    e.remove();
                } else {
                    *e.get_mut() = s;
                }
            }
        }
    }

    pub fn add(&self, other: &Poly) -> Poly {
        debug_assert_eq!(self.t, other.t);
        let mut out = self.clone();
        for (m, &c) in &other.terms {
            out.add_term(m.clone(), c);
        }
        out
    }

    pub fn neg(&self) -> Poly {
        let t = self.t;
        Poly { t, terms: self.terms.iter().map(|(m, &c)| (m.clone(), t - c)).collect() }
    }

    pub fn sub(&self, other: &Poly) -> Poly {
        self.add(&other.neg())
    }

    pub fn scale(&self, k: u64) -> Poly {
        let t = self.t;
        let k = k % t;
        if k == 0 {
            return Poly::zero(t);
        }
        Poly { t, terms: self.terms.iter().map(|(m, &c)| (m.clone(), c * k % t)).collect() }
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        debug_assert_eq!(self.t, other.t);
        let t = self.t;
        let mut out = Poly::zero(t);
        for (ma, &ca) in &self.terms {
            for (mb, &cb) in &other.terms {
                out.add_term(ma.mul(mb), ca * cb % t);
            }
        }
        out
    }

    /// Evaluates at the point given by `vals`.
    pub fn eval(&self, vals: &dyn Fn(u32) -> u64) -> u64 {
        let t = self.t;
        self.terms.iter().fold(0u64, |acc, (m, &c)| (acc + c * m.eval(vals, t)) % t)
    }

    /// Evaluates with variable `v` bound to `vals[v]`.
    pub fn eval_slice(&self, vals: &[u64]) -> u64 {
        self.eval(&|v| vals[v as usize])
    }

    /// Replaces every variable with a polynomial.
    pub fn substitute(&self, f: &dyn Fn(u32) -> Poly) -> Poly {
        let t = self.t;
        let mut cache: BTreeMap<u32, Poly> = BTreeMap::new();
        let mut out = Poly::zero(t);
        for (m, &c) in &self.terms {
            let mut term = Poly::constant(t, c as i64);
            for &v in m.vars() {
                let sub = cache.entry(v).or_insert_with(|| f(v));
                term = term.mul(sub);
            }
            out = out.add(&term);
        }
        out
    }

    /// Reduces `v^k` to `v` for every variable with `binary(v)`, giving the
    /// canonical form of the function on `{0, 1}` values of those variables.
    pub fn multilinearize(&self, binary: &dyn Fn(u32) -> bool) -> Poly {
        let mut out = Poly::zero(self.t);
        for (m, &c) in &self.terms {
            let mut vars = m.vars().to_vec();
            vars.dedup_by(|a, b| a == b && binary(*a));
            out.add_term(Monomial(vars), c);
        }
        out
    }

    /// Largest exponent of `v`.
    pub fn degree_in(&self, v: u32) -> usize {
        self.terms.keys().map(|m| m.vars().iter().filter(|&&x| x == v).count()).max().unwrap_or(0)
    }

    /// Renames every variable.
    pub fn rename(&self, f: &dyn Fn(u32) -> u32) -> Poly {
        let mut out = Poly::zero(self.t);
        for (m, &c) in &self.terms {
            out.add_term(Monomial::from_vars(m.vars().iter().map(|&v| f(v)).collect()), c);
        }
        out
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (i, (m, &c)) in self.terms.iter().enumerate() {
            if i > 0 {
                f.write_str(" + ")?;
            }
            if m.degree() == 0 || c != 1 {
                write!(f, "{c}")?;
            }
            for (k, v) in m.vars().iter().enumerate() {
                if k > 0 || c != 1 {
                    f.write_str("*")?;
                }
                write!(f, "v{v}")?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const T: u64 = 65537;

    fn x(v: u32) -> Poly {
        Poly::var(T, v)
    }

    #[test]
    fn cancellation_removes_terms() {
        let p = x(0).add(&x(1)).sub(&x(0));
        assert_eq!(p, x(1));
        assert!(x(3).sub(&x(3)).is_zero());
        assert_eq!(Poly::constant(T, -1).as_constant(), Some(T - 1));
    }

    #[test]
    fn square_of_difference() {
        let d = x(0).sub(&x(1));
        let sq = d.mul(&d);
        let expect = x(0).mul(&x(0)).add(&x(1).mul(&x(1))).sub(&x(0).mul(&x(1)).scale(2));
        assert_eq!(sq, expect);
        assert_eq!(sq.degree(), 2);
        assert_eq!(sq.num_terms(), 3);
    }

    #[test]
    fn monomial_order_is_degree_then_lex() {
        let a = Monomial::from_vars(vec![5]);
        let b = Monomial::from_vars(vec![0, 1]);
        let c = Monomial::from_vars(vec![0, 2]);
        assert!(Monomial::one() < a);
        assert!(a < b);
        assert!(b < c);
    }

    #[test]
    fn substitute_composes() {
        // p(v0) = v0^2 with v0 := v1 + 1 gives v1^2 + 2 v1 + 1.
        let p = x(0).mul(&x(0));
        let q = p.substitute(&|_| x(1).add(&Poly::constant(T, 1)));
        let expect = x(1).mul(&x(1)).add(&x(1).scale(2)).add(&Poly::constant(T, 1));
        assert_eq!(q, expect);
    }

    #[test]
    fn multilinear_reduction() {
        let d = x(0).sub(&x(1));
        let sq = d.mul(&d).multilinearize(&|_| true);
        // (x - y)^2 = x + y - 2xy on bits.
        let expect = x(0).add(&x(1)).sub(&x(0).mul(&x(1)).scale(2));
        assert_eq!(sq, expect);
        assert_eq!(x(0).mul(&x(0)).multilinearize(&|v| v != 0).degree_in(0), 2);
    }

    #[test]
    fn small_modulus_wraps() {
        let p = x(0).scale(5).add(&x(0).scale(2));
        assert!(Poly::zero(7) == Poly { t: 7, terms: BTreeMap::new() });
        let p7 = Poly::var(7, 0).scale(5).add(&Poly::var(7, 0).scale(2));
        assert!(p7.is_zero());
        assert_eq!(p.coefficient(&Monomial::var(0)), 7);
    }

    fn arb_poly() -> impl Strategy<Value = Poly> {
        prop::collection::vec((prop::collection::vec(0u32..4, 0..3), 0u64..T), 0..5).prop_map(|terms| {
            let mut p = Poly::zero(T);
            for (vars, c) in terms {
                p.add_term(Monomial::from_vars(vars), c);
            }
            p
        })
    }

    proptest! {
        #[test]
        fn ring_laws(a in arb_poly(), b in arb_poly(), c in arb_poly()) {
            prop_assert_eq!(a.add(&b).add(&c), a.add(&b.add(&c)));
            prop_assert_eq!(a.add(&b), b.add(&a));
            prop_assert_eq!(a.mul(&b), b.mul(&a));
            prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
            prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
            prop_assert!(a.sub(&a).is_zero());
        }

        #[test]
        fn canonical_form_has_no_zero_coefficients(a in arb_poly(), b in arb_poly()) {
            for p in [a.add(&b), a.mul(&b), a.sub(&b)] {
                prop_assert!(p.terms().all(|(_, c)| c != 0 && c < T));
            }
        }

        #[test]
        fn eval_is_a_homomorphism(a in arb_poly(), b in arb_poly(), pt in prop::collection::vec(0u64..T, 4)) {
            let ea = a.eval_slice(&pt);
            let eb = b.eval_slice(&pt);
            prop_assert_eq!(a.add(&b).eval_slice(&pt), (ea + eb) % T);
            prop_assert_eq!(a.mul(&b).eval_slice(&pt), ea * eb % T);
            prop_assert_eq!(a.sub(&b).eval_slice(&pt), (ea + T - eb) % T);
        }
    }
}
