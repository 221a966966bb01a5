//! Complexity accounting, the closed-form linear recurrent model of the
//! golden cartpole controller, and register tracing.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::{Complex, Matrix3, SMatrix, Vector3, Vector4, Vector5};
use serde::{Deserialize, Serialize};

use crate::environment::EnvConfig;
use crate::error::{Error, Result};
use crate::evaluation::episode_seed;
use crate::interpreter::start_episode;
use crate::ops::{Bank, Op};
use crate::program::{Address, Program};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub parameter_count: u64,
    pub flops_per_step: u64,
}

/// Parameters are the non-zero evolved constants: each scalar counts once,
/// each vector `max(obs_dim, act_dim)` times and each matrix `mat_dim²`
/// times. FLOPs are the per-step worst case of `GetAction`, with every
/// conditional CADF body assumed to run.
pub fn count_complexity(program: &Program, obs_dim: usize, act_dim: usize) -> ComplexityReport {
    let l = &program.layout;
    let init = &program.init;
    let nonzero = |xs: &[f64], width: usize| {
        xs.chunks(width.max(1))
            .filter(|c| c.iter().any(|&x| x != 0.0))
            .count() as u64
    };
    let vec_width = obs_dim.max(act_dim) as u64;
    let mat_width = (l.mat_dim * l.mat_dim) as u64;
    let parameter_count = nonzero(&init.scalars, 1)
        + nonzero(&init.vectors, l.vec_dim) * vec_width
        + nonzero(&init.matrices, l.mat_dim * l.mat_dim) * mat_width;

    let dim = l.vec_dim;
    let body_cost = |body: &[crate::program::Instruction]| -> u64 {
        body.iter().map(|i| i.op.flop_cost(dim)).sum()
    };
    let flops_per_step = program
        .get_action
        .iter()
        .map(|i| match i.callee() {
            Some(k) => {
                Op::CallCadf.flop_cost(dim) + program.cadfs.get(k).map_or(0, |b| body_cost(b))
            }
            None => i.op.flop_cost(dim),
        })
        .sum();
    ComplexityReport {
        parameter_count,
        flops_per_step,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Mlp,
    Lstm,
}

/// Lower-bound size of a one-hidden-layer network of width `d`:
/// `d(d_in + d + d_out)` for an MLP, `d(4 d_in + 4 d + d_out)` for an LSTM,
/// with two FLOPs per parameter.
pub fn baseline_complexity(arch: Arch, d_in: u64, d: u64, d_out: u64) -> Result<ComplexityReport> {
    if d_in == 0 || d == 0 || d_out == 0 {
        return Err(Error::Config("dimensions must be positive".into()));
    }
    let parameter_count = match arch {
        Arch::Mlp => d * (d_in + d + d_out),
        Arch::Lstm => d * (4 * d_in + 4 * d + d_out),
    };
    Ok(ComplexityReport {
        parameter_count,
        flops_per_step: 2 * parameter_count,
    })
}

/// `Z' = Ũ Z + P̃ s`, `act = Ãᵀ Z' + W̃ᵀ s` with `s = (obs, previous action)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearRecurrentModel {
    pub u_tilde: Matrix3<f64>,
    pub p_tilde: SMatrix<f64, 3, 5>,
    pub a_tilde: Vector3<f64>,
    pub w_tilde: Vector5<f64>,
    pub z: Vector3<f64>,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub v: Vector4<f64>,
    pub w: Vector4<f64>,
}

pub const GOLDEN_A: f64 = -0.549;
pub const GOLDEN_B: f64 = -0.673;
pub const GOLDEN_C: f64 = 0.082;
pub const GOLDEN_V: [f64; 4] = [-1.960, -0.7422, 0.7373, -5.284];
pub const GOLDEN_W: [f64; 4] = [0.0, 0.365, 2.878, 2.799];

impl LinearRecurrentModel {
    /// The recurrence computed by the golden program, with `Z = (s0, s1, s2)`.
    pub fn new(a: f64, b: f64, c: f64, v: Vector4<f64>, w: Vector4<f64>) -> Self {
        let u_tilde = Matrix3::new(0.0, 0.0, a, 0.0, 1.0, a, 0.0, c, a * (1.0 + c));
        #[rustfmt::skip]
        let p_tilde = SMatrix::<f64, 3, 5>::from_row_slice(&[
            0.0, 0.0, 0.0, 0.0, 1.0,
            v[0], v[1], v[2], v[3], b + 1.0,
            c * v[0], c * v[1], c * v[2], c * v[3], 1.0 + c + b * c,
        ]);
        LinearRecurrentModel {
            u_tilde,
            p_tilde,
            a_tilde: Vector3::new(1.0, 0.0, 0.0),
            w_tilde: Vector5::new(w[0], w[1], w[2], w[3], 0.0),
            z: Vector3::zeros(),
            a,
            b,
            c,
            v,
            w,
        }
    }

    pub fn golden() -> Self {
        Self::new(
            GOLDEN_A,
            GOLDEN_B,
            GOLDEN_C,
            Vector4::from(GOLDEN_V),
            Vector4::from(GOLDEN_W),
        )
    }

    /// Advances the internal state and returns the new action.
    pub fn step(&mut self, obs: &[f64; 4], prev_action: f64) -> f64 {
        let s = Vector5::new(obs[0], obs[1], obs[2], obs[3], prev_action);
        self.z = self.u_tilde * self.z + self.p_tilde * s;
        self.a_tilde.dot(&self.z) + self.w_tilde.dot(&s)
    }

    /// Eigenvalues of `Ũ`, sorted by real part.
    pub fn eigenvalues(&self) -> Vec<Complex<f64>> {
        let mut ev: Vec<_> = self.u_tilde.complex_eigenvalues().iter().copied().collect();
        ev.sort_by(|x, y| x.re.total_cmp(&y.re));
        ev
    }
}

/// Per-step register values (after `GetAction`) and executed CADF calls.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRow {
    pub episode: usize,
    pub t: u64,
    pub values: Vec<f64>,
    pub cadf_calls: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegisterTrace {
    pub watch: Vec<Address>,
    pub columns: Vec<String>,
    pub rows: Vec<TraceRow>,
}

fn column_names(program: &Program, watch: &[Address]) -> Vec<String> {
    let d = program.layout.vec_dim;
    let mut cols = Vec::new();
    for a in watch {
        match a.bank {
            Bank::Scalar | Bank::Index => cols.push(a.to_string()),
            Bank::Vector => cols.extend((0..d).map(|i| format!("{a}[{i}]"))),
            Bank::Matrix => {
                cols.extend((0..d * d).map(|k| format!("{a}[{}][{}]", k / d, k % d)))
            }
        }
    }
    cols
}

/// Records the watched main-memory registers at every step of `episodes`
/// episodes, seeded like [`crate::evaluation::evaluate_fitness`].
pub fn trace_registers(
    program: &Program,
    config: &EnvConfig,
    watch: &[Address],
    episodes: usize,
    master_seed: u64,
) -> Result<RegisterTrace> {
    let l = &program.layout;
    if let Some(a) = watch.iter().find(|a| a.slot >= l.count(a.bank)) {
        return Err(Error::Config(format!("watched register {a} is outside the layout")));
    }
    let mut rt = start_episode(program, 0);
    let mut rows = Vec::new();
    for ep in 0..episodes {
        let seed = episode_seed(master_seed, ep as u64);
        let mut steps = Vec::new();
        let mut per_step_calls: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        crate::evaluation::run_episode_with(&mut rt, config, seed, |rt| {
            let values = watch.iter().flat_map(|a| rt.read(*a)).collect::<Vec<_>>();
            steps.push((rt.timestep() - 1, values));
        });
        for &(t, c) in &rt.record.cadf_calls {
            per_step_calls.entry(t).or_default().push(c);
        }
        rows.extend(steps.into_iter().map(|(t, values)| TraceRow {
            episode: ep,
            t,
            values,
            cadf_calls: per_step_calls.remove(&t).unwrap_or_default(),
        }));
    }
    Ok(RegisterTrace {
        watch: watch.to_vec(),
        columns: column_names(program, watch),
        rows,
    })
}

impl RegisterTrace {
    /// CSV with header `episode,t,<register columns>,cadf_calls`; calls in
    /// one step are separated by `;`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        write!(w, "episode,t")?;
        for c in &self.columns {
            write!(w, ",{c}")?;
        }
        writeln!(w, ",cadf_calls")?;
        for r in &self.rows {
            write!(w, "{},{}", r.episode, r.t)?;
            for v in &r.values {
                write!(w, ",{v}")?;
            }
            let calls: Vec<String> = r.cadf_calls.iter().map(|c| c.to_string()).collect();
            writeln!(w, ",{}", calls.join(";"))?;
        }
        Ok(())
    }

    /// One JSON object per step: `{episode, t, registers, cadf_calls}`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.rows {
            let registers: BTreeMap<&str, f64> = self
                .columns
                .iter()
                .map(String::as_str)
                .zip(r.values.iter().copied())
                .collect();
            let obj = serde_json::json!({
                "episode": r.episode,
                "t": r.t,
                "registers": registers,
                "cadf_calls": r.cadf_calls,
            });
            writeln!(w, "{obj}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::golden_program;
    use crate::program::{Instruction, MemoryLayout};

    #[test]
    fn golden_counts() {
        let r = count_complexity(&golden_program(), 4, 1);
        assert_eq!((r.parameter_count, r.flops_per_step), (11, 25));
    }

    #[test]
    fn empty_program_costs_nothing() {
        let p = Program::empty(MemoryLayout::default());
        assert_eq!(
            count_complexity(&p, 4, 1),
            ComplexityReport {
                parameter_count: 0,
                flops_per_step: 0
            }
        );
    }

    #[test]
    fn single_dot() {
        let mut p = Program::empty(MemoryLayout::default());
        p.get_action
            .push(Instruction::simple(Op::VectorDot, &[Address::vector(1), Address::vector(2)], Address::scalar(3)));
        assert_eq!(count_complexity(&p, 4, 1).flops_per_step, 8);
    }

    #[test]
    fn cadf_bodies_count_in_full() {
        let mut p = Program::empty(MemoryLayout::default());
        p.cadfs.push(vec![Instruction::simple(
            Op::VectorAdd,
            &[Address::vector(0), Address::vector(1)],
            Address::vector(2),
        )]);
        let call = Instruction::new(
            Op::CallCadf,
            vec![
                Address::scalar(0),
                Address::scalar(1),
                Address::scalar(2),
                Address::scalar(3),
                Address::vector(0),
                Address::vector(1),
                Address::index(0),
                Address::index(1),
            ],
            vec![Address::scalar(4), Address::vector(5), Address::index(2)],
            vec![],
            vec![0],
        );
        p.get_action.push(call);
        assert_eq!(count_complexity(&p, 4, 1).flops_per_step, 1 + 4);
    }

    #[test]
    fn baselines() {
        let f = |arch, i, d, o| {
            let r = baseline_complexity(arch, i, d, o).unwrap();
            (r.parameter_count, r.flops_per_step)
        };
        assert_eq!(f(Arch::Mlp, 37, 32, 12), (2592, 5184));
        assert_eq!(f(Arch::Lstm, 37, 32, 12), (9216, 18432));
        assert_eq!(f(Arch::Mlp, 4, 32, 1), (1184, 2368));
        assert_eq!(f(Arch::Lstm, 4, 32, 1), (4640, 9280));
        assert!(baseline_complexity(Arch::Mlp, 0, 1, 1).is_err());
    }

    #[test]
    fn zero_input_gives_zero_action() {
        let mut m = LinearRecurrentModel::golden();
        assert_eq!(m.step(&[0.0; 4], 0.0), 0.0);
    }

    #[test]
    fn eigenvalue_structure() {
        // det(Ũ - λI) = -λ (λ² - (1 + a + ac) λ + a)
        let m = LinearRecurrentModel::golden();
        let ev = m.eigenvalues();
        let (a, c) = (m.a, m.c);
        assert!(ev.iter().any(|e| e.norm() < 1e-12));
        let rest: Vec<_> = ev.iter().filter(|e| e.norm() >= 1e-12).collect();
        assert_eq!(rest.len(), 2);
        let sum = rest[0] + rest[1];
        let prod = rest[0] * rest[1];
        assert!((sum.re - (1.0 + a + a * c)).abs() < 1e-12 && sum.im.abs() < 1e-12);
        assert!((prod.re - a).abs() < 1e-12 && prod.im.abs() < 1e-12);
    }

    #[test]
    fn constant_program_trace_is_constant() {
        let mut p = Program::empty(MemoryLayout::default());
        p.init.scalars[3] = 0.25;
        let tr = trace_registers(&p, &EnvConfig::default(), &[Address::scalar(3)], 2, 0).unwrap();
        assert!(!tr.rows.is_empty());
        assert!(tr.rows.iter().all(|r| r.values == vec![0.25]));
        let mut csv = Vec::new();
        tr.write_csv(&mut csv).unwrap();
        assert!(String::from_utf8(csv).unwrap().starts_with("episode,t,s3,cadf_calls\n"));
    }

    #[test]
    fn watch_outside_layout_errors() {
        let p = Program::empty(MemoryLayout::default());
        assert!(trace_registers(&p, &EnvConfig::default(), &[Address::scalar(99)], 1, 0).is_err());
    }
}
