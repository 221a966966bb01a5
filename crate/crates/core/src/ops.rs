//! The instruction vocabulary: 84 numbered operations plus the CADF call.
//!
//! Each operation has a fixed signature: the memory banks of its input
//! operands, the banks it writes, how many literal constants it embeds and
//! how many literal component indices it embeds. Operand addresses that
//! appear as *inputs* of type [`Bank::Index`] are read from index memory at
//! run time; literal indices are baked into the instruction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// One of the four typed register banks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bank {
    Scalar,
    Vector,
    Matrix,
    Index,
}

impl Bank {
    pub const ALL: [Bank; 4] = [Bank::Scalar, Bank::Vector, Bank::Matrix, Bank::Index];

    pub fn prefix(self) -> char {
        match self {
            Bank::Scalar => 's',
            Bank::Vector => 'v',
            Bank::Matrix => 'm',
            Bank::Index => 'i',
        }
    }

    pub fn from_prefix(c: char) -> Option<Bank> {
        match c {
            's' => Some(Bank::Scalar),
            'v' => Some(Bank::Vector),
            'm' => Some(Bank::Matrix),
            'i' => Some(Bank::Index),
            _ => None,
        }
    }
}

/// Static description of an operation's operands.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Signature {
    pub inputs: &'static [Bank],
    pub outputs: &'static [Bank],
    pub n_consts: usize,
    pub n_indices: usize,
}

const fn sig(
    inputs: &'static [Bank],
    outputs: &'static [Bank],
    n_consts: usize,
    n_indices: usize,
) -> Signature {
    Signature {
        inputs,
        outputs,
        n_consts,
        n_indices,
    }
}

use Bank::{Index as I, Matrix as M, Scalar as S, Vector as V};

/// Operation identifiers. The discriminant of the numbered ops equals their
/// `OPnn` code.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
#[repr(u8)]
pub enum Op {
    NoOp = 1,
    ScalarAdd,
    ScalarSub,
    ScalarMul,
    ScalarDiv,
    ScalarAbs,
    ScalarRecip,
    ScalarSin,
    ScalarCos,
    ScalarTan,
    ScalarArcSin,
    ScalarArcCos,
    ScalarArcTan,
    ScalarExp,
    ScalarLog,
    ScalarHeaviside,
    VectorHeaviside,
    MatrixHeaviside,
    ScalarVectorMul,
    VectorBroadcast,
    VectorRecip,
    VectorNorm,
    VectorAbs,
    VectorAdd,
    VectorSub,
    VectorMul,
    VectorDiv,
    VectorDot,
    VectorOuter,
    ScalarMatrixMul,
    MatrixRecip,
    MatrixVectorProduct,
    MatrixBroadcastRows,
    MatrixBroadcastCols,
    MatrixNorm,
    MatrixRowNorms,
    MatrixColNorms,
    MatrixTranspose,
    MatrixAbs,
    MatrixAdd,
    MatrixSub,
    MatrixMul,
    MatrixDiv,
    MatrixMatmul,
    ScalarMin,
    VectorMin,
    MatrixMin,
    ScalarMax,
    VectorMax,
    MatrixMax,
    VectorMean,
    MatrixMean,
    MatrixRowMeans,
    MatrixRowStds,
    VectorStd,
    MatrixStd,
    ScalarConst,
    VectorSetConst,
    MatrixSetConst,
    ScalarUniform,
    MatrixCopy,
    VectorCopy,
    IndexCopy,
    VectorPow,
    MatrixColumn,
    MatrixRow,
    MatrixElement,
    VectorElement,
    VectorZero,
    ScalarZero,
    IndexZero,
    VectorSqrt,
    VectorSquare,
    VectorSum,
    ScalarSqrt,
    ScalarMulAdd,
    ScalarScale,
    MatrixSetRow,
    MatrixSetColumn,
    IndexRowsMinusOne,
    IndexColsMinusOne,
    IndexLenMinusOne,
    VectorElementMulAdd,
    VectorPrefixDot,
    /// Conditional subroutine call; the callee id is the instruction's only
    /// literal index.
    CallCadf,
}

/// Number of numbered operations (`OP1..=OP84`).
pub const NUM_NUMBERED_OPS: u8 = 84;

impl Op {
    /// All numbered operations in code order.
    pub fn numbered() -> impl Iterator<Item = Op> {
        (1..=NUM_NUMBERED_OPS).map(|c| Op::from_code(c).expect("dense op codes"))
    }

    /// `Some(n)` for `OPn`, `None` for the call.
    pub fn code(self) -> Option<u8> {
        match self {
            Op::CallCadf => None,
            op => Some(op as u8),
        }
    }

    pub fn from_code(code: u8) -> Option<Op> {
        if (1..=NUM_NUMBERED_OPS).contains(&code) {
            // SAFETY: `Op` is `repr(u8)` with dense discriminants 1..=85.
            Some(unsafe { std::mem::transmute::<u8, Op>(code) })
        } else {
            None
        }
    }

    pub fn signature(self) -> Signature {
        match self {
            Op::NoOp => sig(&[], &[], 0, 0),
            Op::ScalarAdd
            | Op::ScalarSub
            | Op::ScalarMul
            | Op::ScalarDiv
            | Op::ScalarMin
            | Op::ScalarMax => sig(&[S, S], &[S], 0, 0),
            Op::ScalarAbs
            | Op::ScalarRecip
            | Op::ScalarSin
            | Op::ScalarCos
            | Op::ScalarTan
            | Op::ScalarArcSin
            | Op::ScalarArcCos
            | Op::ScalarArcTan
            | Op::ScalarExp
            | Op::ScalarLog
            | Op::ScalarHeaviside
            | Op::ScalarSqrt => sig(&[S], &[S], 0, 0),
            Op::VectorHeaviside
            | Op::VectorRecip
            | Op::VectorAbs
            | Op::VectorCopy
            | Op::VectorSqrt
            | Op::VectorSquare => sig(&[V], &[V], 0, 0),
            Op::MatrixHeaviside
            | Op::MatrixRecip
            | Op::MatrixTranspose
            | Op::MatrixAbs
            | Op::MatrixCopy => sig(&[M], &[M], 0, 0),
            Op::ScalarVectorMul => sig(&[S, V], &[V], 0, 0),
            Op::VectorBroadcast => sig(&[S], &[V], 0, 0),
            Op::VectorNorm | Op::VectorMean | Op::VectorStd | Op::VectorSum => {
                sig(&[V], &[S], 0, 0)
            }
            Op::VectorAdd
            | Op::VectorSub
            | Op::VectorMul
            | Op::VectorDiv
            | Op::VectorMin
            | Op::VectorMax
            | Op::VectorPow => sig(&[V, V], &[V], 0, 0),
            Op::VectorDot => sig(&[V, V], &[S], 0, 0),
            Op::VectorOuter => sig(&[V, V], &[M], 0, 0),
            Op::ScalarMatrixMul => sig(&[S, M], &[M], 0, 0),
            Op::MatrixVectorProduct => sig(&[M, V], &[V], 0, 0),
            Op::MatrixBroadcastRows | Op::MatrixBroadcastCols => sig(&[V], &[M], 0, 0),
            Op::MatrixNorm | Op::MatrixMean | Op::MatrixStd => sig(&[M], &[S], 0, 0),
            Op::MatrixRowNorms | Op::MatrixColNorms | Op::MatrixRowMeans | Op::MatrixRowStds => {
                sig(&[M], &[V], 0, 0)
            }
            Op::MatrixAdd
            | Op::MatrixSub
            | Op::MatrixMul
            | Op::MatrixDiv
            | Op::MatrixMatmul
            | Op::MatrixMin
            | Op::MatrixMax => sig(&[M, M], &[M], 0, 0),
            Op::ScalarConst => sig(&[], &[S], 1, 0),
            Op::VectorSetConst => sig(&[], &[V], 1, 1),
            Op::MatrixSetConst => sig(&[], &[M], 1, 2),
            Op::ScalarUniform => sig(&[], &[S], 2, 0),
            Op::IndexCopy => sig(&[I], &[I], 0, 0),
            Op::MatrixColumn | Op::MatrixRow => sig(&[M, I], &[V], 0, 0),
            Op::MatrixElement => sig(&[M, I, I], &[S], 0, 0),
            Op::VectorElement => sig(&[V, I], &[S], 0, 0),
            Op::VectorZero => sig(&[], &[V], 0, 0),
            Op::ScalarZero => sig(&[], &[S], 0, 0),
            Op::IndexZero => sig(&[], &[I], 0, 0),
            Op::ScalarMulAdd => sig(&[S, S, S], &[S], 0, 0),
            Op::ScalarScale => sig(&[S], &[S], 1, 0),
            Op::MatrixSetRow | Op::MatrixSetColumn => sig(&[V], &[M], 0, 1),
            Op::IndexRowsMinusOne | Op::IndexColsMinusOne => sig(&[M], &[I], 0, 0),
            Op::IndexLenMinusOne => sig(&[V], &[I], 0, 0),
            Op::VectorElementMulAdd => sig(&[V, V, S, I], &[S], 0, 0),
            Op::VectorPrefixDot => sig(&[V, V, I], &[S], 0, 0),
            Op::CallCadf => sig(&[S, S, S, S, V, V, I, I], &[S, V, I], 0, 1),
        }
    }

    /// Whether the op's literal indices address components (as opposed to
    /// the call's callee id).
    pub fn has_dim_indices(self) -> bool {
        self != Op::CallCadf && self.signature().n_indices > 0
    }

    /// Worst-case floating point cost with vectors of length `dim` and
    /// `dim`×`dim` matrices.
    pub fn flop_cost(self, dim: usize) -> u64 {
        let d = dim as u64;
        let d2 = d * d;
        match self {
            Op::ScalarAdd
            | Op::ScalarSub
            | Op::ScalarMul
            | Op::ScalarDiv
            | Op::ScalarAbs
            | Op::ScalarRecip
            | Op::ScalarSin
            | Op::ScalarCos
            | Op::ScalarTan
            | Op::ScalarArcSin
            | Op::ScalarArcCos
            | Op::ScalarArcTan
            | Op::ScalarExp
            | Op::ScalarLog
            | Op::ScalarHeaviside
            | Op::ScalarMin
            | Op::ScalarMax
            | Op::ScalarSqrt
            | Op::ScalarScale => 1,
            Op::ScalarMulAdd | Op::VectorElementMulAdd => 2,
            Op::VectorHeaviside
            | Op::ScalarVectorMul
            | Op::VectorRecip
            | Op::VectorAbs
            | Op::VectorAdd
            | Op::VectorSub
            | Op::VectorMul
            | Op::VectorDiv
            | Op::VectorMin
            | Op::VectorMax
            | Op::VectorPow
            | Op::VectorSqrt
            | Op::VectorSquare
            | Op::VectorSum => d,
            Op::VectorDot | Op::VectorNorm | Op::VectorMean | Op::VectorStd => 2 * d,
            Op::VectorPrefixDot => 2 * d,
            Op::MatrixHeaviside
            | Op::VectorOuter
            | Op::ScalarMatrixMul
            | Op::MatrixRecip
            | Op::MatrixAbs
            | Op::MatrixAdd
            | Op::MatrixSub
            | Op::MatrixMul
            | Op::MatrixDiv
            | Op::MatrixMin
            | Op::MatrixMax => d2,
            Op::MatrixVectorProduct
            | Op::MatrixNorm
            | Op::MatrixRowNorms
            | Op::MatrixColNorms
            | Op::MatrixMean
            | Op::MatrixRowMeans
            | Op::MatrixRowStds
            | Op::MatrixStd => 2 * d2,
            Op::MatrixMatmul => 2 * d2 * d,
            // the comparison deciding whether the body runs
            Op::CallCadf => 1,
            Op::NoOp
            | Op::VectorBroadcast
            | Op::MatrixBroadcastRows
            | Op::MatrixBroadcastCols
            | Op::MatrixTranspose
            | Op::ScalarConst
            | Op::VectorSetConst
            | Op::MatrixSetConst
            | Op::ScalarUniform
            | Op::MatrixCopy
            | Op::VectorCopy
            | Op::IndexCopy
            | Op::MatrixColumn
            | Op::MatrixRow
            | Op::MatrixElement
            | Op::VectorElement
            | Op::VectorZero
            | Op::ScalarZero
            | Op::IndexZero
            | Op::MatrixSetRow
            | Op::MatrixSetColumn
            | Op::IndexRowsMinusOne
            | Op::IndexColsMinusOne
            | Op::IndexLenMinusOne => 0,
        }
    }
}

impl fmt::Display for Op {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.code() {
            Some(c) => write!(f, "OP{c}"),
            None => f.write_str("CALL_CADF"),
        }
    }
}

impl FromStr for Op {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "CALL_CADF" {
            return Ok(Op::CallCadf);
        }
        s.strip_prefix("OP")
            .and_then(|n| n.parse::<u8>().ok())
            .and_then(Op::from_code)
            .ok_or_else(|| format!("unknown op `{s}`"))
    }
}

impl From<Op> for String {
    fn from(op: Op) -> String {
        op.to_string()
    }
}

impl TryFrom<String> for Op {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}
