//! The guide's chapters, included so `cargo test --doc` runs every listing.
//! One module per chapter, so a failing listing points at its chapter.

#[doc = include_str!("../../../book/src/intro.md")]
pub mod intro {}
#[doc = include_str!("../../../book/src/linkage.md")]
pub mod linkage {}
#[doc = include_str!("../../../book/src/baseline.md")]
pub mod baseline {}
#[doc = include_str!("../../../book/src/privmatch.md")]
pub mod privmatch {}
#[doc = include_str!("../../../book/src/disclosure.md")]
pub mod disclosure {}
#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
