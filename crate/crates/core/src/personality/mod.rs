//! Personalities: software-specific kinds declared in data files, and the
//! registry the assembly generator resolves constructor names against.

mod data;
mod params;
mod registry;
mod scripted;

pub use data::{load_str, PersonalityError};
pub use params::{bind_args, ArgError, Args, ParamSpec, ParamType, ParamValue, ResourceRequest};
pub use registry::{
    Category, Factory, KindSpec, NodeTemplate, Registry, SlotDefault, TemplateBinding,
};
pub use scripted::{exists_on_node, run, substitute, Native, Scripted, Scripts};
