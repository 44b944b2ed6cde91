//! Graph spaces, graphs, canonical projections and exact distributions.

mod dist;
mod json;
mod repr;
mod space;

pub(crate) use dist::sum_tolerance;
pub use dist::{check_independence, marginal, DistributionTable};
pub use json::{token, EdgeJson, GraphJson, VertexJson};
pub use repr::{Attr, EdgeVal, Graph, VertexId};
pub use space::{AttributeSpace, Distance, EdgeSpace, SpaceSpec, VertexLabel, DEFAULT_CAP};

