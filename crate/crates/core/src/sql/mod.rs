//! SQL front end: tokenizer, syntax tree and parser.

pub mod ast;
pub mod lexer;
pub mod parser;

pub use ast::Statement;
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::parse;
