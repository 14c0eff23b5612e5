//! Train small transformers on Dyck and code corpora, replace attention-head
//! internals with simplified proxies, and measure how faithful the proxies
//! are across generalization splits.

pub mod code;
pub mod container;
pub mod dyck;
pub mod error;
pub mod faithfulness;
pub mod model;
pub mod numerics;
pub mod par;
pub mod simplify;

pub use error::{Error, Result};

/// Version string stamped into every artifact.
pub const VERSION: &str = concat!("proxylab ", env!("CARGO_PKG_VERSION"));
