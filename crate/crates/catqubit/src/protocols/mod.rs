//! Measurement protocols emulated on simulated models, with the fitters and
//! closed-form estimators behind them.

mod closed_form;
mod fit;
mod logical;
mod simulated;

pub use closed_form::*;
pub use fit::*;
pub use logical::*;
pub use simulated::*;
