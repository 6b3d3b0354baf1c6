//! Easel specifications and their compilation into backend workflow graphs.

pub mod compile;
pub mod graph;
pub mod maps;
pub mod palette;
pub mod pills;
pub mod quick;
pub mod spec;
pub mod template;
pub mod validate;

pub use compile::{compile, compile_with, CompileError};
pub use graph::WorkflowGraph;
pub use quick::{compile_quick_op, QuickOpKind, QuickPlan, Recipe};
pub use spec::{BackendModel, EaselKind, EaselSpec, MapKind, SlotRole, StylePreset};
