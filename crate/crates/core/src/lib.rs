//! Component-based deployment orchestration: every deployment mechanism
//! (host, protocol, shell, transfer, middleware) is a component with an
//! install/start/stop/uninstall lifecycle, ordering is derived from the
//! bindings between components, and deployments are described in a small
//! configuration language.

pub mod assembly;
pub mod component;
pub mod personality;
pub mod pipeline;
pub mod runtime;
pub mod stdlib;
pub mod simgrid;
pub mod dsl;
