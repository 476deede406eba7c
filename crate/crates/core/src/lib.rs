//! Debiased Bernoulli factory.
//!
//! Given a known target `f: [0, 1] -> (0, 1)` and a supply of independent
//! Bernoulli(x) coins with `x` unknown, this crate draws an unbiased,
//! almost-surely nonnegative estimate of `f(x)` from a random number `L` of
//! coins, where `L` follows a zeta law truncated below at `k`. The number of
//! coins consumed never depends on their values.
//!
//! Modules:
//!
//! * [`approx`]: target functions, coefficient schemes `a(n, k)` / `b(n, k)`
//!   and Bernstein-form evaluation.
//! * [`mixing`]: hypergeometric subsample weights and the mixed coefficients
//!   `H_n(m, k)` with their telescoping increments.
//! * [`truncation`]: Hurwitz zeta, the law of `L`, sampling by inversion.
//! * [`estimator`]: the estimator itself, coin sources, factory coins and
//!   seeded replicate runs.
//! * [`oracle`]: exact-arithmetic checks of the identities and bounds the
//!   estimator relies on.
//! * [`cli`]: the `debias` command-line front end.

pub mod approx;
pub mod cli;
mod error;
pub mod estimator;
pub mod mixing;
pub(crate) mod numeric;
pub mod oracle;
mod series;
pub mod truncation;

pub use error::{Error, Result};
