//! Mutation operators and CADF-swap crossover.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::program::{random_instruction, Address, FunctionId, GenConfig, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationOp {
    Insert,
    Delete,
    RandomizeInstruction,
    RandomizeFunction,
    RandomizeConstants,
    RandomizeParameter,
    RandomizeDimIndices,
}

impl MutationOp {
    pub const ALL: [MutationOp; 7] = [
        MutationOp::Insert,
        MutationOp::Delete,
        MutationOp::RandomizeInstruction,
        MutationOp::RandomizeFunction,
        MutationOp::RandomizeConstants,
        MutationOp::RandomizeParameter,
        MutationOp::RandomizeDimIndices,
    ];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MutationWeights {
    pub insert: f64,
    pub delete: f64,
    pub randomize_instruction: f64,
    pub randomize_function: f64,
    pub randomize_constants: f64,
    pub randomize_parameter: f64,
    pub randomize_dim_indices: f64,
    /// Share of constants or dim indices touched by the randomize operators.
    pub fraction: f64,
    pub const_noise_std: f64,
}

impl Default for MutationWeights {
    fn default() -> Self {
        MutationWeights {
            insert: 0.5,
            delete: 1.0,
            randomize_instruction: 1.0,
            randomize_function: 0.1,
            randomize_constants: 0.5,
            randomize_parameter: 0.5,
            randomize_dim_indices: 0.5,
            fraction: 0.2,
            const_noise_std: 0.05,
        }
    }
}

impl MutationWeights {
    /// Only `op` has non-zero weight.
    pub fn only(op: MutationOp) -> Self {
        let mut w = MutationWeights {
            insert: 0.0,
            delete: 0.0,
            randomize_instruction: 0.0,
            randomize_function: 0.0,
            randomize_constants: 0.0,
            randomize_parameter: 0.0,
            randomize_dim_indices: 0.0,
            ..Self::default()
        };
        *w.weight_mut(op) = 1.0;
        w
    }

    pub fn weight(&self, op: MutationOp) -> f64 {
        match op {
            MutationOp::Insert => self.insert,
            MutationOp::Delete => self.delete,
            MutationOp::RandomizeInstruction => self.randomize_instruction,
            MutationOp::RandomizeFunction => self.randomize_function,
            MutationOp::RandomizeConstants => self.randomize_constants,
            MutationOp::RandomizeParameter => self.randomize_parameter,
            MutationOp::RandomizeDimIndices => self.randomize_dim_indices,
        }
    }

    fn weight_mut(&mut self, op: MutationOp) -> &mut f64 {
        match op {
            MutationOp::Insert => &mut self.insert,
            MutationOp::Delete => &mut self.delete,
            MutationOp::RandomizeInstruction => &mut self.randomize_instruction,
            MutationOp::RandomizeFunction => &mut self.randomize_function,
            MutationOp::RandomizeConstants => &mut self.randomize_constants,
            MutationOp::RandomizeParameter => &mut self.randomize_parameter,
            MutationOp::RandomizeDimIndices => &mut self.randomize_dim_indices,
        }
    }

    pub fn check(&self) -> Result<()> {
        let ws = MutationOp::ALL.map(|op| self.weight(op));
        if ws.iter().any(|w| !(w.is_finite() && *w >= 0.0)) || ws.iter().all(|&w| w == 0.0) {
            return Err(Error::Config(
                "mutation weights must be non-negative with at least one positive".into(),
            ));
        }
        if !(self.fraction > 0.0 && self.fraction <= 1.0) {
            return Err(Error::Config("mutation fraction must be in (0, 1]".into()));
        }
        if !(self.const_noise_std.is_finite() && self.const_noise_std >= 0.0) {
            return Err(Error::Config("const_noise_std must be non-negative".into()));
        }
        Ok(())
    }
}

/// Attempts at finding an applicable operator before giving up.
const MAX_RESAMPLES: usize = 64;

#[derive(Clone, Debug)]
pub struct Mutator {
    pub weights: MutationWeights,
    pub gen: GenConfig,
    /// Optional cap on function length; insert is skipped at the cap.
    pub max_len: Option<usize>,
    dist: WeightedIndex<f64>,
}

impl Mutator {
    pub fn new(weights: MutationWeights, gen: GenConfig, max_len: Option<usize>) -> Result<Self> {
        weights.check()?;
        gen.check()?;
        let dist = WeightedIndex::new(MutationOp::ALL.map(|op| weights.weight(op)))
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(Mutator {
            weights,
            gen,
            max_len,
            dist,
        })
    }

    pub fn sample_op<R: Rng + ?Sized>(&self, rng: &mut R) -> MutationOp {
        MutationOp::ALL[self.dist.sample(rng)]
    }

    pub fn mutate<R: Rng + ?Sized>(&self, parent: &Program, rng: &mut R) -> Program {
        self.mutate_traced(parent, rng).0
    }

    /// Applies one operator sampled by weight, resampling inapplicable ones.
    /// Returns the parent unchanged (and `None`) if nothing applies.
    pub fn mutate_traced<R: Rng + ?Sized>(
        &self,
        parent: &Program,
        rng: &mut R,
    ) -> (Program, Option<MutationOp>) {
        let mut child = parent.clone();
        for _ in 0..MAX_RESAMPLES {
            let op = self.sample_op(rng);
            if self.apply(op, &mut child, rng) {
                return (child, Some(op));
            }
        }
        (child, None)
    }

    /// Applies `op` in place; false when it does not apply to `p`.
    pub fn apply<R: Rng + ?Sized>(&self, op: MutationOp, p: &mut Program, rng: &mut R) -> bool {
        match op {
            MutationOp::Insert => self.insert(p, rng),
            MutationOp::Delete => match pick_nonempty(p, rng) {
                Some(f) => {
                    let body = p.function_mut(f);
                    let i = rng.random_range(0..body.len());
                    body.remove(i);
                    true
                }
                None => false,
            },
            MutationOp::RandomizeInstruction => match pick_nonempty(p, rng) {
                Some(f) => {
                    let i = rng.random_range(0..p.function(f).len());
                    let instr = random_instruction(&p.layout, &self.gen, self.callee_limit(p, f), rng);
                    materialize(p, instr.callee());
                    p.function_mut(f)[i] = instr;
                    true
                }
                None => false,
            },
            MutationOp::RandomizeFunction => match pick_nonempty(p, rng) {
                Some(f) => {
                    p.function_mut(f).shuffle(rng);
                    true
                }
                None => false,
            },
            MutationOp::RandomizeConstants => {
                self.randomize_constants(p, rng);
                true
            }
            MutationOp::RandomizeParameter => self.randomize_parameter(p, rng),
            MutationOp::RandomizeDimIndices => self.randomize_dim_indices(p, rng),
        }
    }

    /// Callee bound for calls generated in `f`: one past the existing CADFs
    /// (a new, empty one) up to the configured maximum.
    fn callee_limit(&self, p: &Program, f: FunctionId) -> usize {
        match f {
            FunctionId::GetAction => (p.cadfs.len() + 1).min(self.gen.max_cadfs),
            FunctionId::Cadf(_) => 0,
        }
    }

    fn insert<R: Rng + ?Sized>(&self, p: &mut Program, rng: &mut R) -> bool {
        let open: Vec<FunctionId> = p
            .functions()
            .filter(|&f| self.max_len.is_none_or(|cap| p.function(f).len() < cap))
            .collect();
        if open.is_empty() || (self.gen.ops.is_empty() && self.gen.max_cadfs == 0) {
            return false;
        }
        let f = open[rng.random_range(0..open.len())];
        let instr = random_instruction(&p.layout, &self.gen, self.callee_limit(p, f), rng);
        materialize(p, instr.callee());
        let body = p.function_mut(f);
        let at = rng.random_range(0..=body.len());
        body.insert(at, instr);
        true
    }

    fn n_touched(&self, len: usize) -> usize {
        ((self.weights.fraction * len as f64).round() as usize).clamp(1, len)
    }

    /// Picks one evolved-constant slot (a scalar, vector or matrix) and
    /// perturbs a fraction of its components with Gaussian noise.
    fn randomize_constants<R: Rng + ?Sized>(&self, p: &mut Program, rng: &mut R) {
        let l = p.layout;
        let n_slots = l.n_scalar + l.n_vector + l.n_matrix;
        let k = rng.random_range(0..n_slots);
        let values: &mut [f64] = if k < l.n_scalar {
            &mut p.init.scalars[k..=k]
        } else if k < l.n_scalar + l.n_vector {
            let s = k - l.n_scalar;
            &mut p.init.vectors[s * l.vec_dim..(s + 1) * l.vec_dim]
        } else {
            let s = k - l.n_scalar - l.n_vector;
            let n = l.mat_dim * l.mat_dim;
            &mut p.init.matrices[s * n..(s + 1) * n]
        };
        let noise = Normal::new(0.0, self.weights.const_noise_std).expect("checked std");
        let n = self.n_touched(values.len());
        for i in rand::seq::index::sample(rng, values.len(), n) {
            let x = values[i] + noise.sample(rng);
            values[i] = if x.is_finite() { x } else { 0.0 };
        }
    }

    /// Resamples one operand of one instruction: an address (within its
    /// bank), a literal constant, a literal dim index or a callee id.
    fn randomize_parameter<R: Rng + ?Sized>(&self, p: &mut Program, rng: &mut R) -> bool {
        let sites: Vec<(FunctionId, usize)> = p
            .functions()
            .flat_map(|f| {
                p.function(f)
                    .iter()
                    .enumerate()
                    .filter(|(_, ins)| n_params(ins) > 0)
                    .map(move |(i, _)| (f, i))
            })
            .collect();
        if sites.is_empty() {
            return false;
        }
        let (f, i) = sites[rng.random_range(0..sites.len())];
        let callee_limit = self.callee_limit(p, f);
        let layout = p.layout;
        let instr = &mut p.function_mut(f)[i];
        let (ni, no, nc) = (instr.inputs.len(), instr.outputs.len(), instr.consts.len());
        let mut k = rng.random_range(0..n_params(instr));
        let resample = |a: &mut Address, rng: &mut R| {
            a.slot = rng.random_range(0..layout.count(a.bank));
        };
        if k < ni {
            resample(&mut instr.inputs[k], rng);
            return true;
        }
        k -= ni;
        if k < no {
            resample(&mut instr.outputs[k], rng);
            return true;
        }
        k -= no;
        if k < nc {
            instr.consts[k] = self.gen.sample_const(rng);
            return true;
        }
        k -= nc;
        let new_callee = if instr.callee().is_some() {
            let c = rng.random_range(0..callee_limit.max(1));
            instr.indices[k] = c;
            Some(c)
        } else {
            instr.indices[k] = rng.random_range(0..layout.vec_dim);
            None
        };
        materialize(p, new_callee);
        true
    }

    fn randomize_dim_indices<R: Rng + ?Sized>(&self, p: &mut Program, rng: &mut R) -> bool {
        let sites: Vec<(FunctionId, usize)> = p
            .functions()
            .flat_map(|f| {
                p.function(f)
                    .iter()
                    .enumerate()
                    .filter(|(_, ins)| ins.op.has_dim_indices())
                    .map(move |(i, _)| (f, i))
            })
            .collect();
        if sites.is_empty() {
            return false;
        }
        let (f, i) = sites[rng.random_range(0..sites.len())];
        let dim = p.layout.vec_dim;
        let n = self.n_touched(p.function(f)[i].indices.len());
        let instr = &mut p.function_mut(f)[i];
        for k in rand::seq::index::sample(rng, instr.indices.len(), n) {
            instr.indices[k] = rng.random_range(0..dim);
        }
        true
    }
}

fn n_params(instr: &crate::program::Instruction) -> usize {
    instr.inputs.len() + instr.outputs.len() + instr.consts.len() + instr.indices.len()
}

/// Uniformly chosen function with at least one instruction.
fn pick_nonempty<R: Rng + ?Sized>(p: &Program, rng: &mut R) -> Option<FunctionId> {
    let fs: Vec<FunctionId> = p.functions().filter(|&f| !p.function(f).is_empty()).collect();
    (!fs.is_empty()).then(|| fs[rng.random_range(0..fs.len())])
}

/// Appends empty CADF bodies so that `callee` exists.
fn materialize(p: &mut Program, callee: Option<usize>) {
    if let Some(c) = callee {
        while p.cadfs.len() <= c {
            p.cadfs.push(Vec::new());
        }
    }
}

/// `parent_a` with one uniformly chosen CADF replaced by a uniformly chosen
/// CADF of `parent_b`. When either has no CADFs, a uniformly chosen parent
/// is returned unchanged.
pub fn crossover<R: Rng + ?Sized>(a: &Program, b: &Program, rng: &mut R) -> Result<Program> {
    if a.layout != b.layout {
        return Err(Error::LayoutMismatch);
    }
    if a.cadfs.is_empty() || b.cadfs.is_empty() {
        return Ok(if rng.random_bool(0.5) { a.clone() } else { b.clone() });
    }
    let mut child = a.clone();
    let i = rng.random_range(0..a.cadfs.len());
    let j = rng.random_range(0..b.cadfs.len());
    child.cadfs[i] = b.cadfs[j].clone();
    Ok(child)
}
