//! Differentiable numerics: parameter tensors, a reverse-mode tape,
//! initialisation, LSTM cells, a finite-difference checker and SGD.

mod gradcheck;
mod init;
mod lstm;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, relative_error, GradReport};
pub use init::{dropout, softmax, xavier_bound, xavier_fill, xavier_uniform};
pub use lstm::{lstm_step, lstm_step_values, Gate, LstmParams};
pub use tape::{Tape, Var};
pub use tensor::{lr_schedule, GradBuf, Gradients, ParamId, ParamStore, Tensor};
