// `!(x > y)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod demand;
pub mod error;
pub mod hedging;
pub mod io;
pub mod matrix;
pub mod model;
pub mod numerics;
pub mod scalar;
pub mod solver;
pub mod transfer;
pub mod walrasian;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Economy64 = model::Economy<f64>;
pub type PriceSystem64 = model::PriceSystem<f64>;
pub type Economy32 = model::Economy<f32>;
pub type PriceSystem32 = model::PriceSystem<f32>;
