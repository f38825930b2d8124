//! Span-based neural constituency parsing with CKY decoding, plus the
//! probing and context-analysis procedures built on top of the parser.

pub mod analysis;
pub mod error;
pub mod tensor;
pub mod lexical;
pub mod parser;
pub mod span_encoder;
pub mod treebank;

pub use error::{Error, Result};
