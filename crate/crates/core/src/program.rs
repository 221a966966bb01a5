//! Program representation: memory layout, typed addresses, instructions,
//! the evolved constant image and static validation.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ops::{Bank, Op};

/// Upper bound on the number of CADF bodies in a program.
pub const MAX_CADFS: usize = 6;

/// Sizes of the four register banks. Shared by main memory and every CADF's
/// local memory.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MemoryLayout {
    pub n_scalar: usize,
    pub n_vector: usize,
    pub n_matrix: usize,
    pub n_index: usize,
    pub vec_dim: usize,
    pub mat_dim: usize,
}

impl Default for MemoryLayout {
    fn default() -> Self {
        Self::for_task(4, 1)
    }
}

impl MemoryLayout {
    /// 16 slots per bank with vectors wide enough for both observations and
    /// actions.
    pub fn for_task(obs_dim: usize, act_dim: usize) -> Self {
        let dim = obs_dim.max(act_dim).max(1);
        MemoryLayout {
            n_scalar: 16,
            n_vector: 16,
            n_matrix: 16,
            n_index: 16,
            vec_dim: dim,
            mat_dim: dim,
        }
    }

    pub fn count(&self, bank: Bank) -> usize {
        match bank {
            Bank::Scalar => self.n_scalar,
            Bank::Vector => self.n_vector,
            Bank::Matrix => self.n_matrix,
            Bank::Index => self.n_index,
        }
    }

    /// Number of floats in the evolved constant image.
    pub fn init_len(&self) -> usize {
        self.n_scalar + self.n_vector * self.vec_dim + self.n_matrix * self.mat_dim * self.mat_dim
    }

    pub fn check(&self) -> Result<()> {
        for bank in Bank::ALL {
            if self.count(bank) == 0 {
                return Err(Error::Config(format!("{bank:?} bank must have at least one slot")));
            }
        }
        if self.vec_dim == 0 || self.mat_dim == 0 {
            return Err(Error::Config("dimensions must be positive".into()));
        }
        if self.vec_dim != self.mat_dim {
            return Err(Error::Config(format!(
                "mat_dim ({}) must equal vec_dim ({})",
                self.mat_dim, self.vec_dim
            )));
        }
        Ok(())
    }

    /// Checks that observations and actions fit in a vector register.
    pub fn check_task(&self, obs_dim: usize, act_dim: usize) -> Result<()> {
        self.check()?;
        if self.vec_dim < obs_dim.max(act_dim) {
            return Err(Error::Config(format!(
                "vec_dim {} is smaller than observation/action size {}",
                self.vec_dim,
                obs_dim.max(act_dim)
            )));
        }
        // observation in v1, action in s3 or v4
        let (bank, slot) = if act_dim == 1 { (Bank::Scalar, 3) } else { (Bank::Vector, 4) };
        if self.n_vector < 2 || self.count(bank) <= slot {
            return Err(Error::Config(format!(
                "layout needs v1 for observations and {}{slot} for actions",
                bank.prefix()
            )));
        }
        Ok(())
    }
}

/// A typed memory address such as `s3` or `v1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Address {
    pub bank: Bank,
    pub slot: usize,
}

impl Address {
    pub const fn new(bank: Bank, slot: usize) -> Self {
        Address { bank, slot }
    }
    pub const fn scalar(slot: usize) -> Self {
        Self::new(Bank::Scalar, slot)
    }
    pub const fn vector(slot: usize) -> Self {
        Self::new(Bank::Vector, slot)
    }
    pub const fn matrix(slot: usize) -> Self {
        Self::new(Bank::Matrix, slot)
    }
    pub const fn index(slot: usize) -> Self {
        Self::new(Bank::Index, slot)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.bank.prefix(), self.slot)
    }
}

impl std::str::FromStr for Address {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let mut chars = s.chars();
        let bank = chars
            .next()
            .and_then(Bank::from_prefix)
            .ok_or_else(|| format!("bad address `{s}`"))?;
        let slot = chars
            .as_str()
            .parse::<usize>()
            .map_err(|_| format!("bad address `{s}`"))?;
        Ok(Address { bank, slot })
    }
}

/// One operation with its operands.
#[derive(Clone, Debug, PartialEq)]
pub struct Instruction {
    pub op: Op,
    pub inputs: Vec<Address>,
    pub outputs: Vec<Address>,
    pub consts: Vec<f64>,
    /// Literal component indices, or the callee id for [`Op::CallCadf`].
    pub indices: Vec<usize>,
}

impl Instruction {
    pub fn new(
        op: Op,
        inputs: Vec<Address>,
        outputs: Vec<Address>,
        consts: Vec<f64>,
        indices: Vec<usize>,
    ) -> Self {
        Instruction {
            op,
            inputs,
            outputs,
            consts,
            indices,
        }
    }

    /// Shorthand for ops with exactly one output and no literals.
    pub fn simple(op: Op, inputs: &[Address], output: Address) -> Self {
        Self::new(op, inputs.to_vec(), vec![output], vec![], vec![])
    }

    pub fn callee(&self) -> Option<usize> {
        (self.op == Op::CallCadf).then(|| self.indices.first().copied().unwrap_or(0))
    }
}

/// The evolved constants written into main memory by `StartEpisode`.
/// Index memory is not part of the image; it always starts at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitValues {
    pub scalars: Vec<f64>,
    pub vectors: Vec<f64>,
    pub matrices: Vec<f64>,
}

impl InitValues {
    pub fn zeros(layout: &MemoryLayout) -> Self {
        InitValues {
            scalars: vec![0.0; layout.n_scalar],
            vectors: vec![0.0; layout.n_vector * layout.vec_dim],
            matrices: vec![0.0; layout.n_matrix * layout.mat_dim * layout.mat_dim],
        }
    }

    pub fn len(&self) -> usize {
        self.scalars.len() + self.vectors.len() + self.matrices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.scalars.iter().chain(&self.vectors).chain(&self.matrices)
    }
}

/// Identifies one of a program's instruction lists.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FunctionId {
    GetAction,
    Cadf(usize),
}

impl fmt::Display for FunctionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionId::GetAction => f.write_str("get_action"),
            FunctionId::Cadf(k) => write!(f, "cadf{k}"),
        }
    }
}

/// An evolved control program.
#[derive(Clone, Debug, PartialEq)]
pub struct Program {
    pub layout: MemoryLayout,
    pub init: InitValues,
    pub get_action: Vec<Instruction>,
    pub cadfs: Vec<Vec<Instruction>>,
}

impl Program {
    /// All-zero constants and empty bodies.
    pub fn empty(layout: MemoryLayout) -> Self {
        Program {
            layout,
            init: InitValues::zeros(&layout),
            get_action: Vec::new(),
            cadfs: Vec::new(),
        }
    }

    pub fn function(&self, id: FunctionId) -> &[Instruction] {
        match id {
            FunctionId::GetAction => &self.get_action,
            FunctionId::Cadf(k) => &self.cadfs[k],
        }
    }

    pub fn function_mut(&mut self, id: FunctionId) -> &mut Vec<Instruction> {
        match id {
            FunctionId::GetAction => &mut self.get_action,
            FunctionId::Cadf(k) => &mut self.cadfs[k],
        }
    }

    pub fn functions(&self) -> impl Iterator<Item = FunctionId> {
        std::iter::once(FunctionId::GetAction).chain((0..self.cadfs.len()).map(FunctionId::Cadf))
    }

    pub fn instruction_count(&self) -> usize {
        self.get_action.len() + self.cadfs.iter().map(Vec::len).sum::<usize>()
    }

    pub fn validate(&self) -> Vec<Violation> {
        validate(self)
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_empty()
    }
}

/// One static problem found by [`validate`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub function: Option<FunctionId>,
    pub instruction: Option<usize>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.function, self.instruction) {
            (Some(func), Some(i)) => write!(f, "{func} instruction {i}: {}", self.message),
            (Some(func), None) => write!(f, "{func}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

/// Lists every static problem in `program`; an empty list means the
/// interpreter can run it without out-of-layout accesses.
pub fn validate(program: &Program) -> Vec<Violation> {
    let mut out = Vec::new();
    let layout = &program.layout;
    let global = |message: String| Violation {
        function: None,
        instruction: None,
        message,
    };
    if let Err(e) = layout.check() {
        out.push(global(e.to_string()));
        return out;
    }
    let expected = InitValues::zeros(layout);
    if program.init.scalars.len() != expected.scalars.len()
        || program.init.vectors.len() != expected.vectors.len()
        || program.init.matrices.len() != expected.matrices.len()
    {
        out.push(global("constant image does not match layout".into()));
    }
    if program.init.values().any(|v| !v.is_finite()) {
        out.push(global("non-finite initial constant".into()));
    }
    if program.cadfs.len() > MAX_CADFS {
        out.push(global(format!(
            "{} CADFs exceed the maximum of {MAX_CADFS}",
            program.cadfs.len()
        )));
    }
    for func in program.functions() {
        for (i, instr) in program.function(func).iter().enumerate() {
            for message in check_instruction(instr, layout, func, program.cadfs.len()) {
                out.push(Violation {
                    function: Some(func),
                    instruction: Some(i),
                    message,
                });
            }
        }
    }
    out
}

fn check_instruction(
    instr: &Instruction,
    layout: &MemoryLayout,
    func: FunctionId,
    n_cadfs: usize,
) -> Vec<String> {
    let mut problems = Vec::new();
    let sig = instr.op.signature();
    let check_operands = |role: &str, addrs: &[Address], banks: &[Bank], problems: &mut Vec<String>| {
        if addrs.len() != banks.len() {
            problems.push(format!(
                "{} expects {} {role}s, found {}",
                instr.op,
                banks.len(),
                addrs.len()
            ));
            return;
        }
        for (k, (addr, bank)) in addrs.iter().zip(banks).enumerate() {
            if addr.bank != *bank {
                problems.push(format!(
                    "{} {role} {k} must be a {bank:?} address, found {addr}",
                    instr.op
                ));
            } else if addr.slot >= layout.count(*bank) {
                problems.push(format!("{role} address {addr} is outside the layout"));
            }
        }
    };
    check_operands("input", &instr.inputs, sig.inputs, &mut problems);
    check_operands("output", &instr.outputs, sig.outputs, &mut problems);
    if instr.consts.len() != sig.n_consts {
        problems.push(format!(
            "{} expects {} constants, found {}",
            instr.op,
            sig.n_consts,
            instr.consts.len()
        ));
    }
    if instr.consts.iter().any(|c| !c.is_finite()) {
        problems.push("non-finite literal constant".into());
    }
    if instr.indices.len() != sig.n_indices {
        problems.push(format!(
            "{} expects {} literal indices, found {}",
            instr.op,
            sig.n_indices,
            instr.indices.len()
        ));
    } else if instr.op == Op::CallCadf {
        if matches!(func, FunctionId::Cadf(_)) {
            problems.push("recursive CADF call".into());
        }
        let callee = instr.indices[0];
        if callee >= n_cadfs {
            problems.push(format!("call to missing cadf{callee}"));
        }
    } else if let Some(&bad) = instr.indices.iter().find(|&&i| i >= layout.vec_dim) {
        problems.push(format!("literal index {bad} out of range for dimension {}", layout.vec_dim));
    }
    problems
}

/// Bounds for random program and instruction generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub min_instructions: usize,
    pub max_instructions: usize,
    pub max_cadfs: usize,
    pub const_range: (f64, f64),
    /// Numbered ops available to random instructions. Calls are governed by
    /// `max_cadfs` instead.
    pub ops: Vec<Op>,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            min_instructions: 1,
            max_instructions: 10,
            max_cadfs: MAX_CADFS,
            const_range: (-1.0, 1.0),
            ops: Op::numbered().collect(),
        }
    }
}

impl GenConfig {
    pub fn check(&self) -> Result<()> {
        if self.min_instructions > self.max_instructions {
            return Err(Error::Config(format!(
                "min_instructions {} exceeds max_instructions {}",
                self.min_instructions, self.max_instructions
            )));
        }
        if self.max_cadfs > MAX_CADFS {
            return Err(Error::Config(format!("max_cadfs is at most {MAX_CADFS}")));
        }
        let (lo, hi) = self.const_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Config(format!("bad const_range ({lo}, {hi})")));
        }
        if self.ops.contains(&Op::CallCadf) {
            return Err(Error::Config("calls are enabled through max_cadfs, not the op list".into()));
        }
        if self.ops.is_empty() && self.max_instructions > 0 {
            return Err(Error::Config("op list is empty".into()));
        }
        Ok(())
    }

    pub(crate) fn sample_const<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let (lo, hi) = self.const_range;
        lo + (hi - lo) * rng.random::<f64>()
    }
}

/// A random instruction. `callee_limit` bounds the callee id of a generated
/// call; zero disables calls (as inside CADF bodies).
pub fn random_instruction<R: Rng + ?Sized>(
    layout: &MemoryLayout,
    config: &GenConfig,
    callee_limit: usize,
    rng: &mut R,
) -> Instruction {
    let n_choices = config.ops.len() + usize::from(callee_limit > 0);
    assert!(n_choices > 0, "no ops to sample from");
    let pick = rng.random_range(0..n_choices);
    let op = config.ops.get(pick).copied().unwrap_or(Op::CallCadf);
    random_instruction_for_op(op, layout, config, callee_limit, rng)
}

pub(crate) fn random_instruction_for_op<R: Rng + ?Sized>(
    op: Op,
    layout: &MemoryLayout,
    config: &GenConfig,
    callee_limit: usize,
    rng: &mut R,
) -> Instruction {
    let sig = op.signature();
    let mut addr = |bank: Bank| Address::new(bank, rng.random_range(0..layout.count(bank)));
    let inputs = sig.inputs.iter().map(|&b| addr(b)).collect();
    let outputs = sig.outputs.iter().map(|&b| addr(b)).collect();
    let consts = (0..sig.n_consts).map(|_| config.sample_const(rng)).collect();
    let indices = if op == Op::CallCadf {
        vec![rng.random_range(0..callee_limit.max(1))]
    } else {
        (0..sig.n_indices).map(|_| rng.random_range(0..layout.vec_dim)).collect()
    };
    Instruction::new(op, inputs, outputs, consts, indices)
}

/// Samples a random valid program: uniform constants, 0..=`max_cadfs` CADF
/// bodies and bodies of uniformly sampled length within the bounds.
pub fn random_program<R: Rng + ?Sized>(
    layout: MemoryLayout,
    config: &GenConfig,
    rng: &mut R,
) -> Result<Program> {
    layout.check()?;
    config.check()?;
    let mut program = Program::empty(layout);
    for v in program
        .init
        .scalars
        .iter_mut()
        .chain(program.init.vectors.iter_mut())
        .chain(program.init.matrices.iter_mut())
    {
        *v = config.sample_const(rng);
    }
    let n_cadfs = rng.random_range(0..=config.max_cadfs);
    let body = |callee_limit: usize, rng: &mut R| {
        let len = rng.random_range(config.min_instructions..=config.max_instructions);
        (0..len)
            .map(|_| random_instruction(&layout, config, callee_limit, rng))
            .collect::<Vec<_>>()
    };
    program.cadfs = (0..n_cadfs).map(|_| body(0, rng)).collect();
    program.get_action = body(n_cadfs, rng);
    Ok(program)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layout() -> MemoryLayout {
        MemoryLayout {
            n_scalar: 16,
            n_vector: 16,
            n_matrix: 8,
            n_index: 16,
            vec_dim: 4,
            mat_dim: 4,
        }
    }

    #[test]
    fn random_program_respects_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_program(layout(), &GenConfig::default(), &mut rng).unwrap();
        assert!((1..=10).contains(&p.get_action.len()));
        assert!(p.validate().is_empty(), "{:?}", p.validate());
    }

    #[test]
    fn zero_bounds_give_empty_body() {
        let config = GenConfig {
            min_instructions: 0,
            max_instructions: 0,
            ..GenConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_program(layout(), &config, &mut rng).unwrap();
        assert!(p.get_action.is_empty());
        assert!(p.cadfs.iter().all(Vec::is_empty));
        assert!(p.is_valid());
    }

    #[test]
    fn many_samples_are_valid_with_bounded_cadfs() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let config = GenConfig::default();
        for _ in 0..1000 {
            let p = random_program(layout(), &config, &mut rng).unwrap();
            assert!(p.cadfs.len() <= 6);
            assert_eq!(p.validate(), vec![]);
        }
    }

    #[test]
    fn same_seed_same_program() {
        let config = GenConfig::default();
        let a = random_program(layout(), &config, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let b = random_program(layout(), &config, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn inverted_bounds_are_rejected() {
        let config = GenConfig {
            min_instructions: 5,
            max_instructions: 2,
            ..GenConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            random_program(layout(), &config, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn type_mismatch_names_instruction() {
        let mut p = Program::empty(layout());
        p.get_action.push(Instruction::simple(Op::ScalarAdd, &[Address::scalar(0), Address::scalar(1)], Address::scalar(2)));
        p.get_action.push(Instruction::simple(Op::ScalarAdd, &[Address::vector(0), Address::scalar(1)], Address::scalar(2)));
        let v = p.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].instruction, Some(1));
        assert!(v[0].to_string().contains("instruction 1"));
    }

    #[test]
    fn call_inside_cadf_is_recursive() {
        let mut p = Program::empty(layout());
        let mut call = random_instruction_for_op(
            Op::CallCadf,
            &p.layout,
            &GenConfig::default(),
            1,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        call.indices = vec![0];
        p.cadfs.push(vec![call.clone()]);
        p.get_action.push(call);
        let v = p.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].function, Some(FunctionId::Cadf(0)));
        assert!(v[0].message.contains("recursive CADF call"));
    }

    #[test]
    fn out_of_layout_slot_is_reported() {
        let mut p = Program::empty(layout());
        p.get_action.push(Instruction::simple(Op::MatrixCopy, &[Address::matrix(8)], Address::matrix(0)));
        assert_eq!(p.validate().len(), 1);
    }

    #[test]
    fn too_many_cadfs() {
        let mut p = Program::empty(layout());
        p.cadfs = vec![Vec::new(); 7];
        assert!(p.validate()[0].message.contains("exceed"));
    }
}
