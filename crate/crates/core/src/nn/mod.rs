//! Minimal dense numeric substrate: tensors, affine and LSTM layers,
//! dropout variants, Adam, and a finite-difference gradient harness.

pub mod adam;
pub mod dense;
pub mod dropout;
pub mod gradcheck;
pub mod init;
pub mod lstm;
pub mod store;
pub mod tensor;

pub use adam::AdamState;
pub use dense::{Activation, Dense};
pub use dropout::{apply_mask, inverted_dropout_mask, variational_mask};
pub use lstm::{BiLstm, LstmParams};
pub use store::ParameterStore;
pub use tensor::Tensor;
