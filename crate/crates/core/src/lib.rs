//! Exact k-nearest-neighbor search for points that lie along trajectories.
//!
//! Trajectories are cut into fixed-size rows summarised by a segment and an
//! error radius. Segment lower bounds under an anisotropic scaled metric
//! with a causal time mask let [`search::tnn_query`] skip most of the data
//! while returning exactly what the exhaustive scan returns.
//!
//! On top of the search sit a masked KD-tree baseline ([`kdtree`]), wind
//! nowcasting by kernel averaging ([`nowcast`]), a benchmark harness
//! ([`bench`]) and the `tnn` command line ([`cli`]).

pub mod bench;
pub mod cli;
pub mod data;
pub mod dataset;
pub mod error;
pub mod index;
pub mod kdtree;
pub mod metric;
pub mod nowcast;
pub mod search;

pub use dataset::{Dataset, Record};
pub use error::{Error, Result};
pub use index::{segment_lower_bounds, TrajectoryIndex};
pub use kdtree::KdTree;
pub use metric::{scaled_distance_sq, Mask, Measurement, Point3, Point4, ScaleParams, WindVector};
pub use search::{
    compare_results, linear_query, linear_query_with, merge_topk, tnn_query, tnn_query_with, NeighborSet, QueryBatch,
    SearchOptions,
};
