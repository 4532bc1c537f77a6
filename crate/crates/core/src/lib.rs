//! A synthesizing compiler for vectorized homomorphic-encryption kernels.
//!
//! A plaintext kernel is described as a [`spec::KernelSpec`] (per-slot canonical
//! polynomials plus data layouts). A [`sketch::Sketch`] describes the space of
//! candidate programs in the local-rotate style, where rotations are operand
//! modifiers of arithmetic instructions. The [`synth`] engine runs a CEGIS loop
//! over an enumerative [`search`] backend, checks candidates with the exact
//! polynomial [`verify`]er and minimizes `latency * (1 + mdepth)`. The result is
//! lowered by [`codegen`] to a JSON IR and to backend source text.

pub mod bench;
pub mod clock;
pub mod codegen;
pub mod config;
pub mod error;
pub mod ir;
pub mod kernels;
pub mod pipeline;
pub mod poly;
pub mod search;
pub mod sketch;
pub mod spec;
pub mod synth;
pub mod verify;

pub use error::{Error, Result};
