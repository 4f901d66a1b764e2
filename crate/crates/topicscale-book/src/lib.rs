//! Doc-test target for the guide in `book/`.
//!
//! Each module below embeds one chapter of the mdbook source verbatim, so
//! `cargo test` compiles and runs every Rust snippet the book shows. When the
//! library's API changes, the guide breaks the build instead of rotting.
//!
//! This crate exports nothing; it exists for its documentation tests.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/corpus.md")]
pub mod corpus {}

#[doc = include_str!("../../../book/src/wordfish.md")]
pub mod wordfish {}

#[doc = include_str!("../../../book/src/slda.md")]
pub mod slda {}

#[doc = include_str!("../../../book/src/renyi.md")]
pub mod renyi {}

#[doc = include_str!("../../../book/src/pipeline.md")]
pub mod pipeline {}
