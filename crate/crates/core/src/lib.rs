//! Instance segmentation for point clouds.
//!
//! The pipeline learns per-point embeddings on the unit hypersphere with a
//! cosine-margin loss, extracts instances with DBSCAN over the embeddings
//! concatenated with normalized coordinates, and scores the result with a
//! containment (IoS) based metric that separates true positives from partial
//! detections, false mergings and false positives.
//!
//! Modules:
//! - [`scene`]: domain types and the deterministic synthetic scene generator.
//! - [`io`]: text formats for scenes, label files and head checkpoints.
//! - [`loss`]: cosine-margin loss, Euclidean discriminative baseline,
//!   weighted cross entropy, analytic gradients and a finite-difference check.
//! - [`trainer`]: a single fully connected embedding head trained with Adam.
//! - [`clustering`]: grid-accelerated DBSCAN and instance extraction.
//! - [`metrics`]: IoS containment metric, error taxonomy and proposal recall.
//! - [`bench`]: pairwise-similarity vs centroid loss scaling harness.
//! - [`pipeline`]: synthetic generate, train, segment and evaluate runs.
//! - [`cli`]: the `pcinst` command line front end.

pub mod bench;
pub mod cli;
pub mod clustering;
pub mod error;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod trainer;

pub use error::{Error, Result};
pub use scene::{EmbeddingMatrix, PointCloud, SceneLabels, SyntheticSceneSpec, NOISE};
