//! Executes programs: op semantics, conditional CADF invocation and the
//! `StartEpisode` / `GetAction` memory lifecycle.
//!
//! Every written float is sanitized (non-finite becomes `0.0`) and index
//! values used to address components wrap modulo the structure length, so
//! a validated program can never fault at run time.

use std::borrow::Cow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ops::{Bank, Op};
use crate::program::{Address, InitValues, Instruction, MemoryLayout, Program};

/// Main memory slot receiving the observation.
pub const OBS_VECTOR: usize = 1;
/// Main memory slot holding a scalar action.
pub const ACTION_SCALAR: usize = 3;
/// Main memory slot holding a vector action.
pub const ACTION_VECTOR: usize = 4;

#[inline]
fn sanitize(x: f64) -> f64 {
    if x.is_finite() {
        x
    } else {
        0.0
    }
}

#[inline]
fn wrap(i: i64, len: usize) -> usize {
    i.rem_euclid(len as i64) as usize
}

#[inline]
fn heaviside(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn norm(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// The four typed register banks. Vectors and matrices are stored flat,
/// matrices row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryState {
    pub scalars: Vec<f64>,
    pub vectors: Vec<f64>,
    pub matrices: Vec<f64>,
    pub indices: Vec<i64>,
    dim: usize,
    scratch: Vec<f64>,
}

impl MemoryState {
    pub fn zeros(layout: &MemoryLayout) -> Self {
        let dim = layout.vec_dim;
        MemoryState {
            scalars: vec![0.0; layout.n_scalar],
            vectors: vec![0.0; layout.n_vector * dim],
            matrices: vec![0.0; layout.n_matrix * dim * dim],
            indices: vec![0; layout.n_index],
            dim,
            scratch: vec![0.0; dim * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Writes the evolved constants and zeroes index memory.
    pub fn load_init(&mut self, init: &InitValues) {
        self.scalars.copy_from_slice(&init.scalars);
        self.vectors.copy_from_slice(&init.vectors);
        self.matrices.copy_from_slice(&init.matrices);
        self.indices.fill(0);
        self.scratch.fill(0.0);
    }

    pub fn clear(&mut self) {
        self.scalars.fill(0.0);
        self.vectors.fill(0.0);
        self.matrices.fill(0.0);
        self.indices.fill(0);
        self.scratch.fill(0.0);
    }

    pub fn vector(&self, slot: usize) -> &[f64] {
        &self.vectors[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn vector_mut(&mut self, slot: usize) -> &mut [f64] {
        &mut self.vectors[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn matrix(&self, slot: usize) -> &[f64] {
        let n = self.dim * self.dim;
        &self.matrices[slot * n..(slot + 1) * n]
    }

    /// Register contents as floats (a single value for scalars and indices).
    pub fn read(&self, addr: Address) -> Vec<f64> {
        match addr.bank {
            Bank::Scalar => vec![self.scalars[addr.slot]],
            Bank::Vector => self.vector(addr.slot).to_vec(),
            Bank::Matrix => self.matrix(addr.slot).to_vec(),
            Bank::Index => vec![self.indices[addr.slot] as f64],
        }
    }

    pub fn all_finite(&self) -> bool {
        self.scalars
            .iter()
            .chain(&self.vectors)
            .chain(&self.matrices)
            .all(|x| x.is_finite())
    }
}

/// Executes one non-call instruction against `mem` and returns the number
/// of floating point operations it performed. [`Op::CallCadf`] is a no-op
/// here; calls are dispatched by [`Runtime`].
pub fn exec_instruction<R: Rng + ?Sized>(
    instr: &Instruction,
    mem: &mut MemoryState,
    rng: &mut R,
) -> u64 {
    let d = mem.dim;
    let dd = d * d;
    let MemoryState {
        scalars: s,
        vectors: v,
        matrices: m,
        indices: ix,
        scratch,
        ..
    } = mem;
    let inp = &instr.inputs;
    let a = |k: usize| inp[k].slot;
    let out = instr.outputs.first().map_or(0, |o| o.slot);
    let vr = |slot: usize| slot * d..(slot + 1) * d;
    let mr = |slot: usize| slot * dd..(slot + 1) * dd;
    let op = instr.op;

    macro_rules! set_s {
        ($e:expr) => {{
            let value = $e;
            s[out] = sanitize(value);
        }};
    }
    // Element-wise ops read and write the same component only, so in-place
    // evaluation is alias safe.
    macro_rules! vec_map1 {
        ($f:expr) => {{
            let (src, dst) = (a(0) * d, out * d);
            for i in 0..d {
                let x = v[src + i];
                v[dst + i] = sanitize($f(x));
            }
        }};
    }
    macro_rules! vec_map2 {
        ($f:expr) => {{
            let (p, q, dst) = (a(0) * d, a(1) * d, out * d);
            for i in 0..d {
                let (x, y) = (v[p + i], v[q + i]);
                v[dst + i] = sanitize($f(x, y));
            }
        }};
    }
    macro_rules! mat_map1 {
        ($f:expr) => {{
            let (src, dst) = (a(0) * dd, out * dd);
            for i in 0..dd {
                let x = m[src + i];
                m[dst + i] = sanitize($f(x));
            }
        }};
    }
    macro_rules! mat_map2 {
        ($f:expr) => {{
            let (p, q, dst) = (a(0) * dd, a(1) * dd, out * dd);
            for i in 0..dd {
                let (x, y) = (m[p + i], m[q + i]);
                m[dst + i] = sanitize($f(x, y));
            }
        }};
    }
    // Results that mix components are staged in scratch first.
    macro_rules! vec_from_scratch {
        () => {{
            for (dst, x) in v[vr(out)].iter_mut().zip(&scratch[..d]) {
                *dst = sanitize(*x);
            }
        }};
    }
    macro_rules! mat_from_scratch {
        () => {{
            for (dst, x) in m[mr(out)].iter_mut().zip(&scratch[..dd]) {
                *dst = sanitize(*x);
            }
        }};
    }

    match op {
        Op::NoOp | Op::CallCadf => {}
        Op::ScalarAdd => set_s!(s[a(0)] + s[a(1)]),
        Op::ScalarSub => set_s!(s[a(0)] - s[a(1)]),
        Op::ScalarMul => set_s!(s[a(0)] * s[a(1)]),
        Op::ScalarDiv => set_s!(s[a(0)] / s[a(1)]),
        Op::ScalarAbs => set_s!(s[a(0)].abs()),
        Op::ScalarRecip => set_s!(1.0 / s[a(0)]),
        Op::ScalarSin => set_s!(s[a(0)].sin()),
        Op::ScalarCos => set_s!(s[a(0)].cos()),
        Op::ScalarTan => set_s!(s[a(0)].tan()),
        Op::ScalarArcSin => set_s!(s[a(0)].asin()),
        Op::ScalarArcCos => set_s!(s[a(0)].acos()),
        Op::ScalarArcTan => set_s!(s[a(0)].atan()),
        Op::ScalarExp => set_s!(s[a(0)].exp()),
        Op::ScalarLog => set_s!(s[a(0)].ln()),
        Op::ScalarHeaviside => set_s!(heaviside(s[a(0)])),
        Op::VectorHeaviside => vec_map1!(heaviside),
        Op::MatrixHeaviside => mat_map1!(heaviside),
        Op::ScalarVectorMul => {
            let k = s[a(0)];
            let (src, dst) = (a(1) * d, out * d);
            for i in 0..d {
                v[dst + i] = sanitize(k * v[src + i]);
            }
        }
        Op::VectorBroadcast => {
            let k = sanitize(s[a(0)]);
            v[vr(out)].fill(k);
        }
        Op::VectorRecip => vec_map1!(|x: f64| 1.0 / x),
        Op::VectorNorm => set_s!(norm(&v[vr(a(0))])),
        Op::VectorAbs => vec_map1!(f64::abs),
        Op::VectorAdd => vec_map2!(|x, y| x + y),
        Op::VectorSub => vec_map2!(|x, y| x - y),
        Op::VectorMul => vec_map2!(|x, y| x * y),
        Op::VectorDiv => vec_map2!(|x, y| x / y),
        Op::VectorDot => {
            let (p, q) = (a(0) * d, a(1) * d);
            set_s!((0..d).map(|i| v[p + i] * v[q + i]).sum::<f64>())
        }
        Op::VectorOuter => {
            let (p, q) = (a(0) * d, a(1) * d);
            for r in 0..d {
                for c in 0..d {
                    scratch[r * d + c] = v[p + r] * v[q + c];
                }
            }
            mat_from_scratch!();
        }
        Op::ScalarMatrixMul => {
            let k = s[a(0)];
            let (src, dst) = (a(1) * dd, out * dd);
            for i in 0..dd {
                m[dst + i] = sanitize(k * m[src + i]);
            }
        }
        Op::MatrixRecip => mat_map1!(|x: f64| 1.0 / x),
        Op::MatrixVectorProduct => {
            let (p, q) = (a(0) * dd, a(1) * d);
            for r in 0..d {
                scratch[r] = (0..d).map(|c| m[p + r * d + c] * v[q + c]).sum();
            }
            vec_from_scratch!();
        }
        Op::MatrixBroadcastRows => {
            let src = a(0) * d;
            for r in 0..d {
                for c in 0..d {
                    scratch[r * d + c] = v[src + r];
                }
            }
            mat_from_scratch!();
        }
        Op::MatrixBroadcastCols => {
            let src = a(0) * d;
            for r in 0..d {
                for c in 0..d {
                    scratch[r * d + c] = v[src + c];
                }
            }
            mat_from_scratch!();
        }
        Op::MatrixNorm => set_s!(norm(&m[mr(a(0))])),
        Op::MatrixRowNorms => {
            let p = a(0) * dd;
            for r in 0..d {
                scratch[r] = norm(&m[p + r * d..p + (r + 1) * d]);
            }
            vec_from_scratch!();
        }
        Op::MatrixColNorms => {
            let p = a(0) * dd;
            for c in 0..d {
                scratch[c] = (0..d).map(|r| m[p + r * d + c].powi(2)).sum::<f64>().sqrt();
            }
            vec_from_scratch!();
        }
        Op::MatrixTranspose => {
            let p = a(0) * dd;
            for r in 0..d {
                for c in 0..d {
                    scratch[c * d + r] = m[p + r * d + c];
                }
            }
            mat_from_scratch!();
        }
        Op::MatrixAbs => mat_map1!(f64::abs),
        Op::MatrixAdd => mat_map2!(|x, y| x + y),
        Op::MatrixSub => mat_map2!(|x, y| x - y),
        Op::MatrixMul => mat_map2!(|x, y| x * y),
        Op::MatrixDiv => mat_map2!(|x, y| x / y),
        Op::MatrixMatmul => {
            let (p, q) = (a(0) * dd, a(1) * dd);
            for r in 0..d {
                for c in 0..d {
                    scratch[r * d + c] = (0..d).map(|k| m[p + r * d + k] * m[q + k * d + c]).sum();
                }
            }
            mat_from_scratch!();
        }
        Op::ScalarMin => set_s!(s[a(0)].min(s[a(1)])),
        Op::VectorMin => vec_map2!(f64::min),
        Op::MatrixMin => mat_map2!(f64::min),
        Op::ScalarMax => set_s!(s[a(0)].max(s[a(1)])),
        Op::VectorMax => vec_map2!(f64::max),
        Op::MatrixMax => mat_map2!(f64::max),
        Op::VectorMean => set_s!(mean(&v[vr(a(0))])),
        Op::MatrixMean => set_s!(mean(&m[mr(a(0))])),
        Op::MatrixRowMeans => {
            let p = a(0) * dd;
            for r in 0..d {
                scratch[r] = mean(&m[p + r * d..p + (r + 1) * d]);
            }
            vec_from_scratch!();
        }
        Op::MatrixRowStds => {
            let p = a(0) * dd;
            for r in 0..d {
                scratch[r] = std_dev(&m[p + r * d..p + (r + 1) * d]);
            }
            vec_from_scratch!();
        }
        Op::VectorStd => set_s!(std_dev(&v[vr(a(0))])),
        Op::MatrixStd => set_s!(std_dev(&m[mr(a(0))])),
        Op::ScalarConst => set_s!(instr.consts[0]),
        Op::VectorSetConst => v[out * d + instr.indices[0] % d] = sanitize(instr.consts[0]),
        Op::MatrixSetConst => {
            let (r, c) = (instr.indices[0] % d, instr.indices[1] % d);
            m[out * dd + r * d + c] = sanitize(instr.consts[0]);
        }
        Op::ScalarUniform => {
            let (lo, hi) = (instr.consts[0], instr.consts[1]);
            set_s!(lo + (hi - lo) * rng.random::<f64>())
        }
        Op::MatrixCopy => m.copy_within(mr(a(0)), out * dd),
        Op::VectorCopy => v.copy_within(vr(a(0)), out * d),
        Op::IndexCopy => ix[out] = ix[a(0)],
        Op::VectorPow => vec_map2!(f64::powf),
        Op::MatrixColumn => {
            let (p, c) = (a(0) * dd, wrap(ix[a(1)], d));
            for r in 0..d {
                scratch[r] = m[p + r * d + c];
            }
            vec_from_scratch!();
        }
        Op::MatrixRow => {
            let (p, r) = (a(0) * dd, wrap(ix[a(1)], d));
            scratch[..d].copy_from_slice(&m[p + r * d..p + (r + 1) * d]);
            vec_from_scratch!();
        }
        Op::MatrixElement => {
            let (r, c) = (wrap(ix[a(1)], d), wrap(ix[a(2)], d));
            set_s!(m[a(0) * dd + r * d + c])
        }
        Op::VectorElement => set_s!(v[a(0) * d + wrap(ix[a(1)], d)]),
        Op::VectorZero => v[vr(out)].fill(0.0),
        Op::ScalarZero => s[out] = 0.0,
        Op::IndexZero => ix[out] = 0,
        Op::VectorSqrt => vec_map1!(f64::sqrt),
        Op::VectorSquare => vec_map1!(|x: f64| x * x),
        Op::VectorSum => set_s!(v[vr(a(0))].iter().sum::<f64>()),
        Op::ScalarSqrt => set_s!(s[a(0)].sqrt()),
        Op::ScalarMulAdd => set_s!(s[a(0)] * s[a(1)] + s[a(2)]),
        Op::ScalarScale => set_s!(s[a(0)] * instr.consts[0]),
        Op::MatrixSetRow => {
            let r = instr.indices[0] % d;
            let src = a(0) * d;
            for c in 0..d {
                m[out * dd + r * d + c] = v[src + c];
            }
        }
        Op::MatrixSetColumn => {
            let c = instr.indices[0] % d;
            let src = a(0) * d;
            for r in 0..d {
                m[out * dd + r * d + c] = v[src + r];
            }
        }
        Op::IndexRowsMinusOne | Op::IndexColsMinusOne | Op::IndexLenMinusOne => {
            ix[out] = d as i64 - 1
        }
        Op::VectorElementMulAdd => {
            let i = wrap(ix[a(3)], d);
            set_s!(v[a(0) * d + i] * v[a(1) * d + i] + s[a(2)])
        }
        Op::VectorPrefixDot => {
            let k = wrap(ix[a(2)], d) + 1;
            let (p, q) = (a(0) * d, a(1) * d);
            set_s!((0..k).map(|i| v[p + i] * v[q + i]).sum::<f64>());
            return 2 * k as u64;
        }
    }
    op.flop_cost(d)
}

/// Most recently written local addresses of a CADF, per returned bank.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LastWritten {
    pub scalar: Option<usize>,
    pub vector: Option<usize>,
    pub index: Option<usize>,
}

/// Persistent per-episode state of one CADF.
#[derive(Clone, Debug, PartialEq)]
pub struct CadfState {
    pub memory: MemoryState,
    pub last_written: LastWritten,
}

impl CadfState {
    pub fn new(layout: &MemoryLayout) -> Self {
        CadfState {
            memory: MemoryState::zeros(layout),
            last_written: LastWritten::default(),
        }
    }

    pub fn reset(&mut self) {
        self.memory.clear();
        self.last_written = LastWritten::default();
    }
}

/// Values handed to a CADF: 4 scalars, 2 vectors, 2 indices.
#[derive(Clone, Debug, PartialEq)]
pub struct CadfArgs {
    pub scalars: [f64; 4],
    pub vectors: [Vec<f64>; 2],
    pub indices: [i64; 2],
}

/// What a call produced. `executed` is false when the guard `s0 < s1`
/// failed; the returned values then reflect earlier executions.
#[derive(Clone, Debug, PartialEq)]
pub struct CadfReturn {
    pub executed: bool,
    pub scalar: f64,
    pub vector: Vec<f64>,
    pub index: i64,
    pub flops: u64,
    pub instructions: u64,
}

/// Invokes a CADF body. The body runs iff `args.scalars[0] < args.scalars[1]`;
/// arguments are then copied into local `s0..s3`, `v0..v1`, `i0..i1` (as far
/// as the layout has room). The result is read from the most recently
/// written local scalar, vector and index, defaulting to zero.
pub fn call_cadf<R: Rng + ?Sized>(
    body: &[Instruction],
    args: &CadfArgs,
    state: &mut CadfState,
    rng: &mut R,
) -> CadfReturn {
    let executed = args.scalars[0] < args.scalars[1];
    let mut flops = 0;
    let mut instructions = 0;
    if executed {
        let mem = &mut state.memory;
        for (k, x) in args.scalars.iter().enumerate().take(mem.scalars.len()) {
            mem.scalars[k] = *x;
        }
        for (k, x) in args.vectors.iter().enumerate().take(mem.vectors.len() / mem.dim) {
            mem.vector_mut(k).copy_from_slice(x);
        }
        for (k, x) in args.indices.iter().enumerate().take(mem.indices.len()) {
            mem.indices[k] = *x;
        }
        for instr in body {
            flops += exec_instruction(instr, mem, rng);
            instructions += 1;
            if let Some(out) = instr.outputs.first() {
                match out.bank {
                    Bank::Scalar => state.last_written.scalar = Some(out.slot),
                    Bank::Vector => state.last_written.vector = Some(out.slot),
                    Bank::Index => state.last_written.index = Some(out.slot),
                    Bank::Matrix => {}
                }
            }
        }
    }
    let mem = &state.memory;
    let lw = state.last_written;
    CadfReturn {
        executed,
        scalar: lw.scalar.map_or(0.0, |k| mem.scalars[k]),
        vector: lw
            .vector
            .map_or_else(|| vec![0.0; mem.dim], |k| mem.vector(k).to_vec()),
        index: lw.index.map_or(0, |k| mem.indices[k]),
        flops,
        instructions,
    }
}

/// Execution statistics accumulated over an episode.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ExecRecord {
    pub instructions_executed: u64,
    pub flops: u64,
    pub last_step_flops: u64,
    /// `(timestep, callee)` for every call whose body executed.
    pub cadf_calls: Vec<(u64, usize)>,
}

/// Per-episode interpreter state for one program.
#[derive(Clone, Debug)]
pub struct Runtime<'p> {
    program: Cow<'p, Program>,
    pub main: MemoryState,
    pub cadfs: Vec<CadfState>,
    pub record: ExecRecord,
    timestep: u64,
    rng: ChaCha8Rng,
}

/// `StartEpisode`: loads the evolved constants, zeroes index memory and
/// every CADF's local memory. `seed` drives stochastic ops.
pub fn start_episode(program: &Program, seed: u64) -> Runtime<'_> {
    Runtime::new(Cow::Borrowed(program), seed)
}

impl Runtime<'static> {
    /// Like [`start_episode`], owning its program.
    pub fn owned(program: Program, seed: u64) -> Self {
        Runtime::new(Cow::Owned(program), seed)
    }
}

impl<'p> Runtime<'p> {
    fn new(program: Cow<'p, Program>, seed: u64) -> Self {
        let mut main = MemoryState::zeros(&program.layout);
        main.load_init(&program.init);
        let cadfs = program.cadfs.iter().map(|_| CadfState::new(&program.layout)).collect();
        Runtime {
            program,
            main,
            cadfs,
            record: ExecRecord::default(),
            timestep: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

fn exec_call(
    instr: &Instruction,
    program: &Program,
    main: &mut MemoryState,
    cadfs: &mut [CadfState],
    record: &mut ExecRecord,
    timestep: u64,
    rng: &mut ChaCha8Rng,
) -> u64 {
    let callee = instr.indices[0];
    let inp = &instr.inputs;
    let args = CadfArgs {
        scalars: [0, 1, 2, 3].map(|k| main.scalars[inp[k].slot]),
        vectors: [4, 5].map(|k| main.vector(inp[k].slot).to_vec()),
        indices: [6, 7].map(|k| main.indices[inp[k].slot]),
    };
    let ret = call_cadf(&program.cadfs[callee], &args, &mut cadfs[callee], rng);
    record.instructions_executed += ret.instructions;
    if ret.executed {
        record.cadf_calls.push((timestep, callee));
        let outs = &instr.outputs;
        main.scalars[outs[0].slot] = ret.scalar;
        main.vector_mut(outs[1].slot).copy_from_slice(&ret.vector);
        main.indices[outs[2].slot] = ret.index;
    }
    Op::CallCadf.flop_cost(main.dim) + ret.flops
}

impl<'p> Runtime<'p> {
    pub fn program(&self) -> &Program {
        &self.program
    }

    /// Number of completed `get_action` calls this episode.
    pub fn timestep(&self) -> u64 {
        self.timestep
    }

    /// Resets to the state right after [`start_episode`].
    pub fn restart(&mut self, seed: u64) {
        self.main.load_init(&self.program.init);
        for c in &mut self.cadfs {
            c.reset();
        }
        self.record = ExecRecord::default();
        self.timestep = 0;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    /// Copies `obs` into `v1` (zero padded) and runs the `GetAction` body.
    pub fn run_step(&mut self, obs: &[f64]) {
        let dim = self.main.dim;
        let slot = self.main.vector_mut(OBS_VECTOR);
        let n = obs.len().min(dim);
        slot[..n].copy_from_slice(&obs[..n]);
        slot[n..].fill(0.0);
        for x in &mut slot[..n] {
            *x = sanitize(*x);
        }

        let Runtime { program, main, cadfs, record, timestep, rng } = self;
        let mut flops = 0;
        for instr in &program.get_action {
            record.instructions_executed += 1;
            if instr.op == Op::CallCadf {
                flops += exec_call(instr, program, main, cadfs, record, *timestep, rng);
            } else {
                flops += exec_instruction(instr, main, rng);
            }
        }
        record.flops += flops;
        record.last_step_flops = flops;
        *timestep += 1;
    }

    /// `GetAction` for a scalar-action task: the raw (unclamped) `s3`.
    pub fn get_action_scalar(&mut self, obs: &[f64]) -> f64 {
        self.run_step(obs);
        self.main.scalars[ACTION_SCALAR]
    }

    /// `GetAction`: `s3` when `act_dim == 1`, else `v4` truncated to
    /// `act_dim` components.
    pub fn get_action(&mut self, obs: &[f64], act_dim: usize) -> Vec<f64> {
        self.run_step(obs);
        if act_dim == 1 {
            vec![self.main.scalars[ACTION_SCALAR]]
        } else {
            self.main.vector(ACTION_VECTOR)[..act_dim.min(self.main.dim)].to_vec()
        }
    }

    /// Current value of a main-memory register, flattened.
    pub fn read(&self, addr: Address) -> Vec<f64> {
        self.main.read(addr)
    }

    /// Calls executed during the most recent step.
    pub fn last_step_calls(&self) -> impl Iterator<Item = usize> + '_ {
        let t = self.timestep.saturating_sub(1);
        self.record
            .cadf_calls
            .iter()
            .rev()
            .take_while(move |(step, _)| *step == t)
            .map(|&(_, c)| c)
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
    }
}
