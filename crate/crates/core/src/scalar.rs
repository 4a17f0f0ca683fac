/// Floating point width used throughout the numeric substrate.
///
/// 64-bit by default (required by the finite-difference gradient checks);
/// build with the `f32` feature for faster training at reduced precision.
#[cfg(not(feature = "f32"))]
pub type Scalar = f64;
#[cfg(feature = "f32")]
pub type Scalar = f32;

/// Dtype tag written into checkpoints so a mismatched build fails loudly.
#[cfg(not(feature = "f32"))]
pub const SCALAR_TAG: u8 = 64;
#[cfg(feature = "f32")]
pub const SCALAR_TAG: u8 = 32;
