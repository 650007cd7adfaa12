//! Learn proper canonical multiclass losses together with class
//! probabilities.
//!
//! The predictor is `x ↦ Π⁻¹((u ∘ v⁻¹)(Wx + b))` where `u` is `softmax⁺` and
//! `v⁻¹ = ∇g_1 ∘ … ∘ ∇g_B` is a composition of gradients of strongly convex
//! input-convex blocks. The composite map is the gradient of a Legendre
//! function, so it is an inverse canonical link; the proper loss it
//! determines can be reconstructed numerically ([`losses::canonical_loss`])
//! and its convex-analytic properties checked at runtime ([`verify`]).

pub mod autodiff;
pub mod bench;
pub mod blocks;
pub mod cli;
pub mod data;
pub mod error;
pub mod losses;
pub mod model;
pub mod quadrature;
pub mod simplex;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
