use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time {t} is outside the valid interval [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },

    #[error("point {x:?} is outside the grid box {lo:?} .. {hi:?}")]
    OutsideBox { x: Vec<f64>, lo: Vec<f64>, hi: Vec<f64> },

    #[error("non-finite value in {what} at t = {t}")]
    NonFinite { what: String, t: f64 },

    #[error("stimulus path exceeded |eta| > {bound} at t = {t}")]
    BlowUp { t: f64, bound: f64 },

    #[error("trajectory left the field domain at t = {t}, state {state:?}")]
    ExitedDomain { t: f64, state: Vec<f64> },

    #[error("grid too coarse: axis {axis} has {nodes} nodes, need at least {required}")]
    GridTooCoarse { axis: usize, nodes: usize, required: usize },

    #[error("absorbing set is not invariant: point starting at {start:?} (t0 = {t0}) reached {state:?} at t = {t}")]
    NotInvariant { t0: f64, start: Vec<f64>, t: f64, state: Vec<f64> },

    #[error("point set is empty")]
    EmptySet,

    #[error("no pullback limit exists for decay rate k = {k} (need k > 0)")]
    NoPullbackLimit { k: f64 },
}
