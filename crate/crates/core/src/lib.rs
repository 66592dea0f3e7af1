//! Pool-based active learning for binary classification with a constrained
//! logistic model, Bayesian D-optimal screening of uncertain points, and
//! the distance-based ADSL comparator.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baseline;
pub mod cli;
pub mod data;
pub mod design;
pub mod eval;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod optim;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/inference.md")]
    mod inference {}
    #[doc = include_str!("../../../book/src/design.md")]
    mod design {}
    #[doc = include_str!("../../../book/src/baseline.md")]
    mod baseline {}
    #[doc = include_str!("../../../book/src/data.md")]
    mod data {}
    #[doc = include_str!("../../../book/src/eval.md")]
    mod eval {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
