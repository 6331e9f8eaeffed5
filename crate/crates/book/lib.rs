// The guide's code listings run as doctests: each chapter of book/src is
// included as the docs of an empty module, so `cargo test` compiles and runs
// every ```rust block. One module per chapter keeps failures traceable to
// their chapter.

#[doc = include_str!("../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../book/src/vectors.md")]
pub mod vectors {}
#[doc = include_str!("../../book/src/metrics.md")]
pub mod metrics {}
#[doc = include_str!("../../book/src/open_ended.md")]
pub mod open_ended {}
#[doc = include_str!("../../book/src/spam.md")]
pub mod spam {}
#[doc = include_str!("../../book/src/evaluation.md")]
pub mod evaluation {}
#[doc = include_str!("../../book/src/pipeline.md")]
pub mod pipeline {}

#[doc = include_str!("../../README.md")]
pub mod readme {}
