//! Numerical verification toolkit for stochastic-integral representations of
//! bounded-variation (BV) functionals of Brownian motion.
//!
//! A functional `f = phi(g)` — where `g` is either a unit-norm Wiener integral
//! `W(k)` or the running maximum of the path, and `phi` has a finite signed
//! derivative measure `Dphi` — admits the martingale representation
//!
//! ```text
//! f = E[f] + int_0^T H_s dW_s
//! ```
//!
//! with a predictable integrand `H` given in closed form by pairing `Dphi`
//! against a Gaussian (resp. half-normal) kernel of the time-to-horizon. This
//! crate simulates exact Brownian increments, evaluates those kernels, runs
//! the representation check end to end, verifies the BV chain rules that
//! produce the kernels (level sets, general measures, and their time
//! disintegration), and measures convergence of conditioned martingales in
//! the Orlicz space `L log^(1/2) L` where such functionals naturally live.
//!
//! Everything downstream of a `(seed, path index)` pair is deterministic:
//! repeated runs produce bit-identical numbers regardless of worker count.

// validation sites use `!(a < b)` on purpose: unlike `a >= b`, the negated
// form also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod clark;
pub mod error;
pub mod functional;
pub mod grid;
pub mod kernels;
pub mod mc;
pub mod measure;
pub mod orlicz;
pub mod quad;
pub mod report;
pub mod step;

pub use error::{Error, Result};
