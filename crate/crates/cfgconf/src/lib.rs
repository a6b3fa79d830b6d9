//! Domain-aware control flow graph drawing.
//!
//! Turns a JSON specification of a CFG (nodes, edges, loops, functions,
//! filtering and style rules) into a deterministic drawing: loop-preserving
//! filtered subgraphs, collapsed utility functions, a loop-aware layered
//! layout, and SVG or dot output.
//!
//! The pipeline is pure and deterministic: spec -> resolve -> filter ->
//! collapse -> layout -> emit. All stages operate on immutable inputs and
//! identical inputs produce byte-identical output.

pub mod collapse;
pub mod diagnostics;
pub mod dot_io;
pub mod filter;
pub mod graph_model;
pub mod layout;
pub mod pipeline;
pub mod render;
pub mod spec_model;

pub use diagnostics::{Diagnostic, Diagnostics, Severity};
pub use spec_model::{apply_defaults, parse_spec, resolve_files, serialize_spec, Spec};
