//! Random split trees, complete d-ary trees, and supercritical bond
//! percolation on both, with the limiting Poisson laws of the largest
//! clusters and a seeded experiment harness that compares the two.
//!
//! ```
//! use perctree::{clusters, percolate, PercolationParams, SplitTree, SplitTreeParams};
//! use perctree::rng::stream_from_seed;
//!
//! let mut rng = stream_from_seed(7);
//! let tree = SplitTree::generate(&SplitTreeParams::bst(1000).unwrap(), &mut rng).unwrap();
//! let params = PercolationParams::split_regime(0.5, 1000).unwrap();
//! let report = clusters(&tree, &percolate(&tree, &params, &mut rng)).unwrap();
//! assert_eq!(report.total_balls(), 1000);
//! ```

pub mod error;
pub mod harness;
pub mod limit_laws;
pub mod oracle;
pub mod percolation;
pub mod regular_tree;
pub mod rng;
pub mod scalar;
pub mod split_tree;
pub mod split_vector;

pub use error::{Error, Result};
pub use limit_laws::{exponential_rate, LimitLaw};
pub use oracle::{ExactDistribution, Weight};
pub use percolation::{clusters, percolate, ClusterReport, EdgeMask, PercolationParams};
pub use regular_tree::{percolate_regular, RegularClusterReport, RegularParams};
pub use rng::RandomStream;
pub use scalar::Real;
pub use split_tree::{SplitTree, SplitTreeParams};
pub use split_vector::{SplitVectorKind, SplitVectorSpec};

pub type LimitLawF64 = LimitLaw<f64>;
pub type LimitLawF32 = LimitLaw<f32>;
pub type ExactDistributionF64<K> = ExactDistribution<K, f64>;
pub type ExactDistributionRational<K> = ExactDistribution<K, num_rational::BigRational>;
