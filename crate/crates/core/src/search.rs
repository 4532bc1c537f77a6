//! Finding sketch completions that agree with a set of input/output examples.
//!
//! The built-in backend is a depth-first enumeration over components with
//! canonical-form pruning (operand ordering, no dead code, first-use order),
//! cost-bound pruning, and merging of observationally equivalent prefixes.

use std::collections::hash_map::DefaultHasher;
use std::collections::HashMap;
use std::hash::{Hash, Hasher};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::clock::Deadline;
use crate::error::{Error, Result};
use crate::ir::{CostModel, Instruction, Opcode, Rhs, Source};
use crate::sketch::{HoleAssignment, Sketch};
use crate::spec::Example;

pub const DEFAULT_OBS_TABLE_LIMIT: usize = 1 << 22;
const CLOCK_CHECK_INTERVAL: u64 = 1 << 12;

#[derive(Debug, Clone)]
pub struct SearchConfig {
    pub symmetry_breaking: bool,
    pub observational: bool,
    /// Completions must cost strictly less than this.
    pub cost_bound: Option<f64>,
    pub node_budget: Option<u64>,
    pub deadline: Option<Deadline>,
    /// Set when every shorter sketch is known to have no completion for a
    /// subset of these examples; enables pruning of components that repeat an
    /// existing value.
    pub assume_minimal_length: bool,
    pub obs_table_limit: usize,
    /// Polynomial degree the result must reach; prefixes whose degree bound
    /// stays below it are cut, and it implies a floor on multiplicative depth.
    pub min_degree: u32,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            symmetry_breaking: true,
            observational: true,
            cost_bound: None,
            node_budget: None,
            deadline: None,
            assume_minimal_length: false,
            obs_table_limit: DEFAULT_OBS_TABLE_LIMIT,
            min_degree: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.node_budget == Some(0) {
            return Err(Error::Config("node budget must be positive".into()));
        }
        if let Some(b) = self.cost_bound {
            if b.is_nan() {
                return Err(Error::Config("cost bound is NaN".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub generated: u64,
    pub pruned_symmetry: u64,
    pub pruned_cost: u64,
    pub pruned_observational: u64,
    pub pruned_redundant: u64,
    pub pruned_degree: u64,
    pub pruned_examples: u64,
    pub surviving: u64,
    pub elapsed_ms: f64,
}

impl SearchStats {
    pub fn pruned(&self) -> u64 {
        self.pruned_symmetry + self.pruned_cost + self.pruned_observational + self.pruned_redundant + self.pruned_degree + self.pruned_examples
    }

    pub fn absorb(&mut self, other: &SearchStats) {
        self.generated += other.generated;
        self.pruned_symmetry += other.pruned_symmetry;
        self.pruned_cost += other.pruned_cost;
        self.pruned_observational += other.pruned_observational;
        self.pruned_redundant += other.pruned_redundant;
        self.pruned_degree += other.pruned_degree;
        self.pruned_examples += other.pruned_examples;
        self.surviving += other.surviving;
        self.elapsed_ms += other.elapsed_ms;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    Found { assignment: HoleAssignment, cost: f64 },
    Unsat,
    Budget,
    Timeout,
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub outcome: SearchOutcome,
    pub stats: SearchStats,
}

pub trait SearchBackend: Send + Sync {
    fn name(&self) -> &str;

    fn find_completion(
        &self,
        sketch: &Sketch,
        examples: &[Example],
        costs: &CostModel,
        cfg: &SearchConfig,
    ) -> Result<SearchResult>;
}

/// Depth-first enumeration. With `exhaustive` set, every pruning rule except
/// the cost bound is disabled regardless of the config.
#[derive(Debug, Clone, Default)]
pub struct EnumerativeBackend {
    exhaustive: bool,
}

impl EnumerativeBackend {
    pub fn new() -> Self {
        EnumerativeBackend { exhaustive: false }
    }

    pub fn exhaustive() -> Self {
        EnumerativeBackend { exhaustive: true }
    }
}

impl SearchBackend for EnumerativeBackend {
    fn name(&self) -> &str {
        if self.exhaustive {
            "exhaustive"
        } else {
            "enumerative"
        }
    }

    fn find_completion(
        &self,
        sketch: &Sketch,
        examples: &[Example],
        costs: &CostModel,
        cfg: &SearchConfig,
    ) -> Result<SearchResult> {
        sketch.validate()?;
        cfg.validate()?;
        let mut cfg = cfg.clone();
        if self.exhaustive {
            cfg.symmetry_breaking = false;
            cfg.observational = false;
            cfg.assume_minimal_length = false;
            cfg.min_degree = 0;
        }
        for ex in examples {
            if ex.inputs.len() != sketch.ct_inputs.len() || ex.inputs.iter().any(|v| v.len() != sketch.params.n) {
                return Err(Error::Signature("example inputs do not match the sketch".into()));
            }
            if ex.expected.iter().any(|&(s, _)| s >= sketch.params.n) {
                return Err(Error::Signature("example expects a slot outside the ring".into()));
            }
        }
        let start = Instant::now();
        let mut engine = Engine::new(sketch, examples, costs, &cfg);
        if cfg.symmetry_breaking {
            engine.build_canonical_tables();
        }
        engine.dfs(0);
        let outcome = engine.stop.take().unwrap_or(SearchOutcome::Unsat);
        let mut stats = engine.stats;
        stats.elapsed_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(SearchResult { outcome, stats })
    }
}

/// Named search backends.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    backends: HashMap<String, Arc<dyn SearchBackend>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        BackendRegistry::default()
    }

    pub fn with_builtin() -> Self {
        let mut r = BackendRegistry::new();
        r.register(Arc::new(EnumerativeBackend::new()));
        r.register(Arc::new(EnumerativeBackend::exhaustive()));
        r
    }

    pub fn register(&mut self, backend: Arc<dyn SearchBackend>) {
        self.backends.insert(backend.name().to_string(), backend);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn SearchBackend>> {
        self.backends.get(name).cloned().ok_or_else(|| {
            Error::Config(format!("unknown search backend {name:?} (available: {})", self.names().join(", ")))
        })
    }

    pub fn names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.backends.keys().cloned().collect();
        names.sort();
        names
    }
}

struct Engine<'a> {
    costs: &'a CostModel,
    cfg: &'a SearchConfig,
    n: usize,
    t: u64,
    num_examples: usize,
    num_inputs: usize,
    len: usize,
    choices: Vec<Vec<Instruction>>,
    /// Whether the operand-swapped form of each choice is also a choice.
    swappable: Vec<Vec<bool>>,
    /// `canon[k][m]`: canonical choices of component `k` (index, new used
    /// prefix) when the first `m` components are used.
    canon: Vec<Vec<Vec<(usize, usize)>>>,
    /// Per value id (inputs, then components): slots of every example, concatenated.
    values: Vec<Vec<u64>>,
    depths: Vec<u32>,
    /// Upper bounds on the polynomial degree of each value.
    degrees: Vec<u32>,
    max_degree: u32,
    min_depth: u32,
    pts: Vec<Vec<u64>>,
    expected: Vec<Vec<(usize, u64)>>,
    chosen: Vec<Instruction>,
    /// Distinct `(source id, rotation)` pairs with reference counts.
    pairs: Vec<((usize, usize), u32)>,
    arith_latency: f64,
    max_depth: u32,
    used_prefix: usize,
    /// Cheapest possible latency of components `k..`.
    min_rest: Vec<f64>,
    value_hashes: Vec<u128>,
    seen: HashMap<u128, f64>,
    stats: SearchStats,
    stop: Option<SearchOutcome>,
}

impl<'a> Engine<'a> {
    fn new(sketch: &'a Sketch, examples: &'a [Example], costs: &'a CostModel, cfg: &'a SearchConfig) -> Self {
        let n = sketch.params.n;
        let num_inputs = sketch.ct_inputs.len();
        let len = sketch.len();
        let num_examples = examples.len();
        let mut values: Vec<Vec<u64>> = Vec::with_capacity(num_inputs + len);
        for k in 0..num_inputs {
            values.push(examples.iter().flat_map(|e| e.inputs[k].iter().copied()).collect());
        }
        values.resize(num_inputs + len, vec![0; num_examples * n]);
        let mut min_rest = vec![0.0; len + 1];
        for k in (0..len).rev() {
            let cheapest = sketch.components[k]
                .alternatives
                .iter()
                .map(|a| costs.latency(a.op))
                .fold(f64::INFINITY, f64::min);
            min_rest[k] = min_rest[k + 1] + cheapest;
        }
        let value_hashes = (0..num_inputs).map(|k| hash128(&(k, &values[k]))).collect();
        let choices: Vec<Vec<Instruction>> = (0..len).map(|k| sketch.choices(k)).collect();
        let swappable = choices
            .iter()
            .enumerate()
            .map(|(k, cs)| {
                cs.iter()
                    .map(|c| match c.rhs {
                        Rhs::Ct(r) => {
                            let swapped = Instruction::ct_ct(c.op, r, c.lhs);
                            sketch.components[k].alternatives.iter().any(|a| a.admits(&swapped))
                        }
                        _ => false,
                    })
                    .collect()
            })
            .collect();
        Engine {
            costs,
            cfg,
            n,
            t: sketch.params.t,
            num_examples,
            num_inputs,
            len,
            choices,
            swappable,
            canon: Vec::new(),
            values,
            depths: vec![0; num_inputs + len],
            degrees: vec![1; num_inputs + len],
            max_degree: 1,
            min_depth: min_depth_for_degree(cfg.min_degree),
            pts: sketch.pt_consts.iter().map(|p| p.value.slots.clone()).collect(),
            expected: examples.iter().map(|e| e.expected.clone()).collect(),
            chosen: Vec::with_capacity(len),
            pairs: Vec::new(),
            arith_latency: 0.0,
            max_depth: 0,
            used_prefix: 0,
            min_rest,
            value_hashes,
            seen: HashMap::new(),
            stats: SearchStats::default(),
            stop: None,
        }
    }

    fn id(&self, s: Source) -> usize {
        match s {
            Source::Input(i) => i,
            Source::Inst(j) => self.num_inputs + j,
        }
    }

    fn check_limits(&mut self) -> bool {
        if let Some(b) = self.cfg.node_budget {
            if self.stats.generated > b {
                self.stop = Some(SearchOutcome::Budget);
                return false;
            }
        }
        if self.stats.generated % CLOCK_CHECK_INTERVAL == 0 {
            if let Some(d) = &self.cfg.deadline {
                if d.expired() {
                    self.stop = Some(SearchOutcome::Timeout);
                    return false;
                }
            }
        }
        true
    }

    /// Canonical-form check for component `k`; returns the new used-prefix
    /// length when the choice is canonical.
    fn canonical(&self, k: usize, instr: &Instruction, swappable: bool) -> Option<usize> {
        if swappable && instr.op.is_commutative() {
            if let Rhs::Ct(r) = instr.rhs {
                if instr.lhs > r {
                    return None;
                }
            }
        }
        if instr.op == Opcode::Rotate && instr.lhs.rot == 0 {
            return None;
        }
        let m = self.used_prefix;
        let mut new = [false; 2];
        for o in instr.ct_operands() {
            if let Source::Inst(j) = o.src {
                if j >= m {
                    if j > m + 1 {
                        return None;
                    }
                    new[j - m] = true;
                }
            }
        }
        let new_m = match new {
            [false, false] => m,
            [true, false] => m + 1,
            [true, true] => m + 2,
            [false, true] => return None,
        };
        let unused = k + 1 - new_m;
        let remaining = self.len - 1 - k;
        if unused > remaining + 1 {
            return None;
        }
        Some(new_m)
    }

    fn new_pairs(&self, instr: &Instruction) -> ([(usize, usize); 2], usize) {
        let mut out = [(0, 0); 2];
        let mut count = 0;
        if !instr.op.is_arith() {
            return (out, 0);
        }
        for o in instr.ct_operands() {
            if o.rot == 0 {
                continue;
            }
            let key = (self.id(o.src), o.rot);
            if self.pairs.iter().any(|(p, _)| *p == key) || out[..count].contains(&key) {
                continue;
            }
            out[count] = key;
            count += 1;
        }
        (out, count)
    }

    fn push_pairs(&mut self, instr: &Instruction) {
        if !instr.op.is_arith() {
            return;
        }
        for o in instr.ct_operands() {
            if o.rot == 0 {
                continue;
            }
            let key = (self.id(o.src), o.rot);
            match self.pairs.iter_mut().find(|(p, _)| *p == key) {
                Some((_, c)) => *c += 1,
                None => self.pairs.push((key, 1)),
            }
        }
    }

    fn pop_pairs(&mut self, instr: &Instruction) {
        if !instr.op.is_arith() {
            return;
        }
        for o in instr.ct_operands() {
            if o.rot == 0 {
                continue;
            }
            let key = (self.id(o.src), o.rot);
            let pos = self.pairs.iter().position(|(p, _)| *p == key).expect("pair pushed");
            self.pairs[pos].1 -= 1;
            if self.pairs[pos].1 == 0 {
                self.pairs.remove(pos);
            }
        }
    }

    fn instr_latency(&self, instr: &Instruction) -> f64 {
        self.costs.latency(instr.op)
    }

    fn operand_degree(&self, instr: &Instruction) -> u32 {
        let l = self.degrees[self.id(instr.lhs.src)];
        match (instr.op, instr.rhs) {
            (Opcode::MulCtCt, Rhs::Ct(o)) => l.saturating_add(self.degrees[self.id(o.src)]),
            (_, Rhs::Ct(o)) => l.max(self.degrees[self.id(o.src)]),
            _ => l,
        }
    }

    fn operand_depth(&self, instr: &Instruction) -> u32 {
        let l = self.depths[self.id(instr.lhs.src)];
        let r = match instr.rhs {
            Rhs::Ct(o) => self.depths[self.id(o.src)],
            _ => 0,
        };
        instr.op.result_depth(l, r)
    }

    /// Value of `instr` at slot `s` of example `e`.
    #[inline]
    fn eval_at(&self, instr: &Instruction, e: usize, s: usize) -> u64 {
        let mask = self.n - 1;
        let base = e * self.n;
        let a = self.values[self.id(instr.lhs.src)][base + ((s + instr.lhs.rot) & mask)];
        match instr.rhs {
            Rhs::Ct(o) => instr.op.apply(a, self.values[self.id(o.src)][base + ((s + o.rot) & mask)], self.t),
            Rhs::Pt(k) => instr.op.apply(a, self.pts[k][s], self.t),
            Rhs::None => a,
        }
    }

    fn matches_examples(&self, instr: &Instruction) -> bool {
        (0..self.num_examples).all(|e| self.expected[e].iter().all(|&(s, want)| self.eval_at(instr, e, s) == want))
    }

    fn eval_full(&mut self, instr: &Instruction, target: usize) {
        let mut out = std::mem::take(&mut self.values[target]);
        let (n, mask, t) = (self.n, self.n - 1, self.t);
        let a = &self.values[self.id(instr.lhs.src)];
        let ra = instr.lhs.rot;
        for e in 0..self.num_examples {
            let base = e * n;
            match instr.rhs {
                Rhs::Ct(o) => {
                    let b = &self.values[self.id(o.src)];
                    let rb = o.rot;
                    for s in 0..n {
                        out[base + s] = instr.op.apply(a[base + ((s + ra) & mask)], b[base + ((s + rb) & mask)], t);
                    }
                }
                Rhs::Pt(k) => {
                    let b = &self.pts[k];
                    for s in 0..n {
                        out[base + s] = instr.op.apply(a[base + ((s + ra) & mask)], b[s], t);
                    }
                }
                Rhs::None => {
                    for s in 0..n {
                        out[base + s] = a[base + ((s + ra) & mask)];
                    }
                }
            }
        }
        self.values[target] = out;
    }

    fn observation_key(&self, k: usize, new_m: usize) -> u128 {
        let range = self.num_inputs..=self.num_inputs + k;
        let values = &self.value_hashes[self.num_inputs..];
        if self.cfg.cost_bound.is_none() {
            // Without a bound, rotation reuse cannot change feasibility.
            return hash128(&(k, new_m, values, &self.depths[range.clone()], &self.degrees[range]));
        }
        let mut pairs: Vec<(usize, usize)> = self.pairs.iter().map(|(p, _)| *p).collect();
        pairs.sort_unstable();
        hash128(&(k, new_m, values, &self.depths[range.clone()], &self.degrees[range], pairs))
    }

    fn dfs(&mut self, k: usize) {
        let last = k + 1 == self.len;
        let symmetry = self.cfg.symmetry_breaking;
        let rot_latency = self.costs.rotate;
        let target = self.num_inputs + k;
        let total = self.choices[k].len();
        let count = if symmetry { self.canon[k][self.used_prefix].len() } else { total };
        let mut next = 0;
        for idx in 0..count {
            let (ci, new_m) = if symmetry { self.canon[k][self.used_prefix][idx] } else { (idx, 0) };
            if !self.skip_noncanonical(ci - next) {
                return;
            }
            next = ci + 1;
            let instr = self.choices[k][ci];
            self.stats.generated += 1;
            if !self.check_limits() {
                return;
            }

            let degree = self.operand_degree(&instr);
            let remaining = (self.len - 1 - k) as u32;
            let reachable = self.max_degree.max(degree).saturating_mul(1u32.checked_shl(remaining).unwrap_or(u32::MAX));
            if (if last { degree } else { reachable }) < self.cfg.min_degree {
                self.stats.pruned_degree += 1;
                continue;
            }

            let (_, added) = self.new_pairs(&instr);
            let latency = self.arith_latency
                + self.instr_latency(&instr)
                + rot_latency * (self.pairs.len() + added) as f64;
            let depth = self.operand_depth(&instr);
            if let Some(bound) = self.cfg.cost_bound {
                let estimate = if last {
                    latency * (1.0 + depth as f64)
                } else {
                    let floor = if symmetry { self.max_depth.max(depth) } else { 0 }.max(self.min_depth);
                    let factor = 1.0 + floor as f64;
                    (latency + self.min_rest[k + 1]) * factor
                };
                if estimate >= bound {
                    self.stats.pruned_cost += 1;
                    continue;
                }
            }

            if last {
                if !self.matches_examples(&instr) {
                    self.stats.pruned_examples += 1;
                    continue;
                }
                self.stats.surviving += 1;
                let mut assignment = self.chosen.clone();
                assignment.push(instr);
                self.stop = Some(SearchOutcome::Found { assignment, cost: latency * (1.0 + depth as f64) });
                return;
            }

            self.eval_full(&instr, target);
            if self.cfg.assume_minimal_length && (0..target).any(|v| self.values[v] == self.values[target]) {
                self.stats.pruned_redundant += 1;
                continue;
            }

            let saved_depth = self.depths[target];
            self.depths[target] = depth;
            self.degrees[target] = degree;
            self.value_hashes.push(hash128(&self.values[target]));
            self.push_pairs(&instr);
            let mut skip = false;
            if self.cfg.observational {
                let key = self.observation_key(k, new_m);
                match self.seen.get_mut(&key) {
                    Some(best) if *best <= latency || self.cfg.cost_bound.is_none() => skip = true,
                    Some(best) => *best = latency,
                    None => {
                        if self.seen.len() < self.cfg.obs_table_limit {
                            self.seen.insert(key, latency);
                        }
                    }
                }
            }
            if skip {
                self.stats.pruned_observational += 1;
            } else {
                self.stats.surviving += 1;
                let saved = (self.arith_latency, self.max_depth, self.used_prefix, self.max_degree);
                self.arith_latency += self.instr_latency(&instr);
                self.max_depth = self.max_depth.max(depth);
                self.max_degree = self.max_degree.max(degree);
                self.used_prefix = new_m;
                self.chosen.push(instr);
                self.dfs(k + 1);
                self.chosen.pop();
                (self.arith_latency, self.max_depth, self.used_prefix, self.max_degree) = saved;
            }
            self.pop_pairs(&instr);
            self.value_hashes.pop();
            self.depths[target] = saved_depth;
            if self.stop.is_some() {
                return;
            }
        }
        self.skip_noncanonical(total - next);
    }

    /// Accounts for `skipped` non-canonical candidates without visiting them,
    /// stopping exactly where the node budget would have stopped a visit.
    fn skip_noncanonical(&mut self, skipped: usize) -> bool {
        if skipped == 0 {
            return true;
        }
        let skipped = skipped as u64;
        let before = self.stats.generated;
        if let Some(b) = self.cfg.node_budget {
            if before + skipped > b {
                self.stats.pruned_symmetry += b.saturating_sub(before);
                self.stats.generated = b.max(before) + 1;
                self.stop = Some(SearchOutcome::Budget);
                return false;
            }
        }
        self.stats.generated += skipped;
        self.stats.pruned_symmetry += skipped;
        if before / CLOCK_CHECK_INTERVAL != self.stats.generated / CLOCK_CHECK_INTERVAL {
            if let Some(d) = &self.cfg.deadline {
                if d.expired() {
                    self.stop = Some(SearchOutcome::Timeout);
                    return false;
                }
            }
        }
        true
    }

    fn build_canonical_tables(&mut self) {
        let saved = self.used_prefix;
        self.canon = (0..self.len)
            .map(|k| {
                (0..=k)
                    .map(|m| {
                        self.used_prefix = m;
                        (0..self.choices[k].len())
                            .filter_map(|ci| {
                                self.canonical(k, &self.choices[k][ci], self.swappable[k][ci]).map(|nm| (ci, nm))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        self.used_prefix = saved;
    }
}

/// Smallest multiplicative depth whose products can reach `degree`.
pub fn min_depth_for_degree(degree: u32) -> u32 {
    if degree <= 1 {
        0
    } else {
        32 - (degree - 1).leading_zeros()
    }
}

fn hash128<T: Hash>(x: &T) -> u128 {
    let mut a = DefaultHasher::new();
    x.hash(&mut a);
    let mut b = DefaultHasher::new();
    0x9e37_79b9_7f4a_7c15u64.hash(&mut b);
    x.hash(&mut b);
    (u128::from(a.finish()) << 64) | u128::from(b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{estimated_latency, NamedPt, Operand, Program, PtValue, RingParams};
    use crate::sketch::{Alternative, HoleKind, RotationDomain};
    use crate::spec::{lift_reference, random_example, CtInput, Expr, KernelSpec, Layout, Reference, ValueDomain};
    use crate::verify::check_on_examples;
    use proptest::prelude::*;

    fn ring(n: usize) -> RingParams {
        RingParams::new(n, 65537).unwrap()
    }

    fn cost_of(p: &Program, m: &CostModel) -> f64 {
        estimated_latency(p, m) * (1.0 + p.mdepth() as f64)
    }

    fn vector_sum_spec(n: usize) -> KernelSpec {
        let r = Reference {
            inputs: vec![CtInput { name: "c0".into(), layout: Layout::vector(n), domain: ValueDomain::Full }],
            pt_inputs: vec![],
            output: Layout::scalar(),
            expr: Expr::sum((0..n).map(|i| Expr::at("c0", &[i])).collect()),
        };
        lift_reference("sum", ring(n), &r).unwrap()
    }

    fn add_sketch(n: usize, domain: RotationDomain, len: usize) -> Sketch {
        Sketch::uniform(
            ring(n),
            vec!["c0".into()],
            vec![],
            vec![Alternative::new(Opcode::AddCtCt, HoleKind::CtRot(domain.clone()), HoleKind::CtRot(domain))],
            len,
        )
        .unwrap()
    }

    fn run(sketch: &Sketch, examples: &[Example], cfg: &SearchConfig) -> SearchResult {
        EnumerativeBackend::new().find_completion(sketch, examples, &CostModel::default(), cfg).unwrap()
    }

    #[test]
    fn add_cannot_make_a_product() {
        let r = Reference {
            inputs: ["x", "y"]
                .iter()
                .map(|n| CtInput { name: n.to_string(), layout: Layout::vector(4), domain: ValueDomain::Full })
                .collect(),
            pt_inputs: vec![],
            output: Layout::vector(4),
            expr: Expr::mul2(Expr::read("x", &[0]), Expr::read("y", &[0])),
        };
        let spec = lift_reference("mul", ring(4), &r).unwrap();
        let sketch = Sketch::uniform(
            ring(4),
            vec!["x".into(), "y".into()],
            vec![],
            vec![Alternative::new(Opcode::AddCtCt, HoleKind::CtRot(RotationDomain::full(4)), HoleKind::CtRot(RotationDomain::full(4)))],
            1,
        )
        .unwrap();
        let res = run(&sketch, &[random_example(&spec, 1)], &SearchConfig::default());
        assert_eq!(res.outcome, SearchOutcome::Unsat);
    }

    #[test]
    fn four_element_sum_uses_log_reduction() {
        let spec = vector_sum_spec(4);
        let sketch = add_sketch(4, RotationDomain::pow2(4), 2);
        let examples: Vec<Example> = (0..3).map(|s| random_example(&spec, s)).collect();
        let res = run(&sketch, &examples, &SearchConfig::default());
        let SearchOutcome::Found { assignment, .. } = res.outcome else { panic!("no completion") };
        let p = sketch.instantiate(&assignment).unwrap();
        assert_eq!(p.instruction_count().total, 4);
        assert!(crate::verify::verify(&p, &spec).unwrap().is_equivalent());
        // Brute force: every consistent L = 2 completion computes the same
        // slot-0 polynomial as the tree reduction.
        let consistent: Vec<_> = sketch
            .all_completions()
            .into_iter()
            .filter(|a| check_on_examples(&sketch.instantiate(a).unwrap(), &examples).unwrap().is_none())
            .collect();
        assert!(!consistent.is_empty());
        for a in consistent {
            let q = sketch.instantiate(&a).unwrap();
            assert!(crate::verify::verify(&q, &spec).unwrap().is_equivalent());
        }
        assert_eq!(run(&add_sketch(4, RotationDomain::pow2(4), 1), &examples, &SearchConfig::default()).outcome, SearchOutcome::Unsat);
    }

    #[test]
    fn bound_below_minimum_is_unsat() {
        let spec = vector_sum_spec(4);
        let sketch = add_sketch(4, RotationDomain::pow2(4), 2);
        let ex = vec![random_example(&spec, 0)];
        let found = run(&sketch, &ex, &SearchConfig::default());
        let SearchOutcome::Found { cost, .. } = found.outcome else { panic!() };
        let cfg = SearchConfig { cost_bound: Some(cost), ..SearchConfig::default() };
        assert_eq!(run(&sketch, &ex, &cfg).outcome, SearchOutcome::Unsat);
    }

    #[test]
    fn canonical_rules() {
        let sketch = Sketch::uniform(
            ring(4),
            vec!["c0".into()],
            vec![],
            vec![
                Alternative::new(Opcode::AddCtCt, HoleKind::Ct, HoleKind::Ct),
                Alternative::new(Opcode::SubCtCt, HoleKind::Ct, HoleKind::Ct),
            ],
            3,
        )
        .unwrap();
        let cfg = SearchConfig::default();
        let costs = CostModel::default();
        let mut e = Engine::new(&sketch, &[], &costs, &cfg);
        e.used_prefix = 0;
        // Two components defined, neither used yet.
        let add10 = Instruction::ct_ct(Opcode::AddCtCt, Operand::inst(1), Operand::inst(0));
        let add01 = Instruction::ct_ct(Opcode::AddCtCt, Operand::inst(0), Operand::inst(1));
        let sub10 = Instruction::ct_ct(Opcode::SubCtCt, Operand::inst(1), Operand::inst(0));
        assert_eq!(e.canonical(2, &add10, true), None);
        assert_eq!(e.canonical(2, &add01, true), Some(2));
        assert_eq!(e.canonical(2, &sub10, true), Some(2));
        // Final component leaving component 1 unused.
        let dead = Instruction::ct_ct(Opcode::SubCtCt, Operand::inst(0), Operand::input(0));
        assert_eq!(e.canonical(2, &dead, true), None);
        // Using component 1 before component 0.
        let skip = Instruction::ct_ct(Opcode::SubCtCt, Operand::inst(1), Operand::input(0));
        assert_eq!(e.canonical(2, &skip, true), None);
    }

    #[test]
    fn observationally_equal_prefixes_merge() {
        // add(c0, c0) and sub(... ) duplicates: the second add(c0,c0)-valued
        // prefix with identical depth is skipped.
        let spec = vector_sum_spec(4);
        let sketch = Sketch::uniform(
            ring(4),
            vec!["c0".into()],
            vec![NamedPt { name: "two".into(), value: PtValue::splat(&ring(4), 2) }],
            vec![
                Alternative::new(Opcode::AddCtCt, HoleKind::Ct, HoleKind::Ct),
                Alternative::new(Opcode::AddCtPt, HoleKind::Ct, HoleKind::Pt(0)),
                Alternative::new(Opcode::SubCtCt, HoleKind::Ct, HoleKind::Ct),
            ],
            3,
        )
        .unwrap();
        let ex = vec![random_example(&spec, 0)];
        let on = run(&sketch, &ex, &SearchConfig::default());
        let off = run(&sketch, &ex, &SearchConfig { observational: false, ..SearchConfig::default() });
        assert!(on.stats.pruned_observational > 0);
        assert_eq!(off.stats.pruned_observational, 0);
        assert_eq!(on.outcome, off.outcome);
    }

    #[test]
    fn budget_is_not_unsat() {
        let spec = vector_sum_spec(8);
        let sketch = add_sketch(8, RotationDomain::full(8), 3);
        let ex = vec![random_example(&spec, 0)];
        let cfg = SearchConfig { node_budget: Some(10), ..SearchConfig::default() };
        assert_eq!(run(&sketch, &ex, &cfg).outcome, SearchOutcome::Budget);
    }

    #[test]
    fn deadline_gives_timeout() {
        use crate::clock::{Clock, ManualClock};
        use std::time::Duration;
        let spec = vector_sum_spec(8);
        let sketch = add_sketch(8, RotationDomain::full(8), 4);
        let ex = vec![random_example(&spec, 0)];
        let clock: Arc<dyn Clock> = Arc::new(ManualClock::ticking(Duration::from_secs(1)));
        let cfg = SearchConfig {
            deadline: Some(Deadline::after(clock, Duration::from_secs(1))),
            assume_minimal_length: false,
            cost_bound: Some(1.0),
            ..SearchConfig::default()
        };
        let res = run(&sketch, &ex, &cfg);
        assert!(matches!(res.outcome, SearchOutcome::Timeout | SearchOutcome::Unsat));
    }

    #[test]
    fn depth_floor_from_degree() {
        let got: Vec<u32> = [0, 1, 2, 3, 4, 5, 8, 9].iter().map(|&d| min_depth_for_degree(d)).collect();
        assert_eq!(got, vec![0, 0, 1, 2, 2, 3, 3, 4]);
    }

    #[test]
    fn registry_lookup() {
        let r = BackendRegistry::with_builtin();
        assert_eq!(r.names(), vec!["enumerative".to_string(), "exhaustive".to_string()]);
        assert!(r.get("smt").is_err());
        assert_eq!(r.get("enumerative").unwrap().name(), "enumerative");
    }

    // Small random problems for the brute-force cross checks.
    fn small_problem() -> impl Strategy<Value = (Sketch, Vec<Example>)> {
        let alt_sets = prop::sample::select(vec![0usize, 1, 2, 3]);
        (alt_sets, 1usize..4, 0usize..6, any::<u64>()).prop_map(|(set, len, target, seed)| {
            let params = ring(4);
            let d = RotationDomain::from_amounts(4, [1, 2]);
            let alts = match set {
                0 => vec![
                    Alternative::new(Opcode::AddCtCt, HoleKind::CtRot(d.clone()), HoleKind::CtRot(d.clone())),
                    Alternative::new(Opcode::SubCtCt, HoleKind::CtRot(d.clone()), HoleKind::Ct),
                ],
                1 => vec![
                    Alternative::new(Opcode::MulCtCt, HoleKind::Ct, HoleKind::CtRot(d.clone())),
                    Alternative::new(Opcode::AddCtCt, HoleKind::Ct, HoleKind::Ct),
                ],
                2 => vec![
                    Alternative::new(Opcode::AddCtPt, HoleKind::CtRot(d.clone()), HoleKind::Pt(0)),
                    Alternative::new(Opcode::MulCtCt, HoleKind::Ct, HoleKind::Ct),
                ],
                _ => vec![
                    Alternative::new(Opcode::AddCtCt, HoleKind::CtRot(d.clone()), HoleKind::Ct),
                    Alternative::new(Opcode::MulCtPt, HoleKind::Ct, HoleKind::Pt(0)),
                ],
            };
            let two = NamedPt { name: "k".into(), value: PtValue::splat(&params, 2) };
            let sketch = Sketch::uniform(params, vec!["a".into()], vec![two], alts, len).unwrap();
            // Target: the output of a random completion (possibly longer).
            let pool = Sketch { components: vec![sketch.components[0].clone(); 2], ..sketch.clone() }.all_completions();
            let prog = Sketch { components: vec![sketch.components[0].clone(); 2], ..sketch.clone() }
                .instantiate(&pool[(seed as usize + target * 7919) % pool.len()])
                .unwrap();
            let examples = (0..2)
                .map(|e| {
                    let inputs = vec![(0..4).map(|i| (seed.rotate_left(e * 13 + i) % 97) as u64).collect::<Vec<u64>>()];
                    let out = crate::ir::eval_slots(&prog, &inputs).unwrap();
                    Example { inputs, expected: (0..4).map(|s| (s, out[s])).collect() }
                })
                .collect();
            (sketch, examples)
        })
    }

    fn brute_min_cost(sketch: &Sketch, examples: &[Example], costs: &CostModel) -> Option<f64> {
        sketch
            .all_completions()
            .into_iter()
            .map(|a| sketch.instantiate(&a).unwrap())
            .filter(|p| check_on_examples(p, examples).unwrap().is_none())
            .map(|p| cost_of(&p, costs))
            .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.min(c))))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn stats_balance((sketch, examples) in small_problem()) {
            let res = run(&sketch, &examples, &SearchConfig::default());
            prop_assert_eq!(res.stats.pruned() + res.stats.surviving, res.stats.generated);
        }

        #[test]
        fn found_completions_match_examples((sketch, examples) in small_problem()) {
            let res = run(&sketch, &examples, &SearchConfig::default());
            if let SearchOutcome::Found { assignment, cost } = res.outcome {
                let p = sketch.instantiate(&assignment).unwrap();
                prop_assert_eq!(check_on_examples(&p, &examples).unwrap(), None);
                prop_assert!((cost - cost_of(&p, &CostModel::default())).abs() < 1e-9);
            }
        }

        #[test]
        fn deterministic((sketch, examples) in small_problem()) {
            let a = run(&sketch, &examples, &SearchConfig::default());
            let b = run(&sketch, &examples, &SearchConfig::default());
            prop_assert_eq!(a.outcome, b.outcome);
        }

        /// Pruned search over lengths 1..=L finds a completion under a bound
        /// exactly when an unpruned completion of length L exists under it.
        #[test]
        fn complete_up_to_symmetry((sketch, examples) in small_problem()) {
            let costs = CostModel::default();
            let full_len = sketch.len();
            let brute = brute_min_cost(&sketch, &examples, &costs);
            let best_pruned = (1..=full_len)
                .filter_map(|l| {
                    let s = sketch.with_length(l).unwrap();
                    let mut bound = None;
                    let mut best = None;
                    loop {
                        let cfg = SearchConfig { cost_bound: bound, ..SearchConfig::default() };
                        match run(&s, &examples, &cfg).outcome {
                            SearchOutcome::Found { cost, .. } => { best = Some(cost); bound = Some(cost); }
                            _ => break,
                        }
                    }
                    best
                })
                .fold(None, |acc: Option<f64>, c| Some(acc.map_or(c, |a| a.min(c))));
            match (brute, best_pruned) {
                (None, None) => {}
                (Some(b), Some(p)) => prop_assert!(p <= b + 1e-9, "pruned best {p} exceeds brute best {b}"),
                (b, p) => prop_assert!(false, "brute {b:?} vs pruned {p:?}"),
            }
        }

        /// Degree pruning never removes a consistent completion whose actual
        /// polynomial reaches the required degree.
        #[test]
        fn degree_pruning_is_sound((sketch, examples) in small_problem()) {
            let costs = CostModel::default();
            let consistent: Vec<(u32, f64)> = sketch
                .all_completions()
                .into_iter()
                .map(|a| sketch.instantiate(&a).unwrap())
                .filter(|p| check_on_examples(p, &examples).unwrap().is_none())
                .map(|p| {
                    let deg = crate::spec::poly_of_program(&p).iter().map(|q| q.degree()).max().unwrap_or(0);
                    (deg as u32, cost_of(&p, &costs))
                })
                .collect();
            let Some(&(d, _)) = consistent.iter().max_by_key(|(d, _)| *d) else { return Ok(()) };
            let brute = consistent.iter().filter(|(e, _)| *e >= d).map(|(_, c)| *c).fold(f64::INFINITY, f64::min);
            let mut best = f64::INFINITY;
            for l in 1..=sketch.len() {
                let s = sketch.with_length(l).unwrap();
                let mut bound = None;
                while let SearchOutcome::Found { cost, .. } =
                    run(&s, &examples, &SearchConfig { cost_bound: bound, min_degree: d, ..SearchConfig::default() }).outcome
                {
                    best = best.min(cost);
                    bound = Some(cost);
                }
            }
            prop_assert!(best <= brute + 1e-9, "degree-pruned best {best} exceeds {brute}");
        }

        #[test]
        fn symmetry_breaking_preserves_satisfiability((sketch, examples) in small_problem()) {
            let off = EnumerativeBackend::exhaustive()
                .find_completion(&sketch, &examples, &CostModel::default(), &SearchConfig::default())
                .unwrap();
            let on_any = (1..=sketch.len()).any(|l| {
                matches!(run(&sketch.with_length(l).unwrap(), &examples, &SearchConfig::default()).outcome, SearchOutcome::Found { .. })
            });
            prop_assert_eq!(matches!(off.outcome, SearchOutcome::Found { .. }), on_any);
        }
    }
}
