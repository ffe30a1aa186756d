//! latentlens: extraction and amplification of faint reflection signals
//! ("latent evidence") from video of a blank wall, plus estimation of scene
//! parameters from the amplified residuals.
//!
//! The crate is organized around the pipeline stages:
//!
//! - [`video`]: frame/clip model and bit-exact file I/O
//! - [`reference`]: baseline construction and residual computation
//! - [`amplify`]: spatio-temporal filtering and the two amplification modes
//! - [`flicker`]: periodic lighting-sway removal
//! - [`spacetime`]: space-time plot projection and rendering
//! - [`detect`]: presence, localization, color and activity estimation
//! - [`synth`]: seeded synthetic scenes with exact ground truth
//! - [`cli`]: end-to-end command wiring with JSON configs and provenance

pub mod amplify;
pub mod cli;
pub mod detect;
pub mod error;
pub mod flicker;
pub mod reference;
pub mod spacetime;
pub mod synth;
pub mod video;

pub use error::{LensError, Result};
