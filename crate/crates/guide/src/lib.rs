//! The README and the chapters of the book under `book/src`, compiled so that
//! `cargo test --doc` runs every listing. One module per chapter keeps
//! failures traceable to their file.

#[doc = include_str!("../../../README.md")]
pub mod readme {}
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/targets.md")]
pub mod targets {}
#[doc = include_str!("../../../book/src/store.md")]
pub mod store {}
#[doc = include_str!("../../../book/src/updating.md")]
pub mod updating {}
#[doc = include_str!("../../../book/src/accuracy.md")]
pub mod accuracy {}
#[doc = include_str!("../../../book/src/control.md")]
pub mod control {}
#[doc = include_str!("../../../book/src/system.md")]
pub mod system {}
#[doc = include_str!("../../../book/src/models.md")]
pub mod models {}
#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
