// mdbook cannot run snippets against an external crate, so every chapter is
// pulled into this crate as a doc comment and `cargo test --doc` runs them.

#[doc = include_str!("src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("src/model.md")]
pub mod model {}
#[doc = include_str!("src/distributions.md")]
pub mod distributions {}
#[doc = include_str!("src/fitting.md")]
pub mod fitting {}
#[doc = include_str!("src/silence.md")]
pub mod silence {}
#[doc = include_str!("src/audio.md")]
pub mod audio {}
#[doc = include_str!("src/cli.md")]
pub mod cli {}
#[doc = include_str!("../README.md")]
pub mod readme {}
