//! Ground normal estimation from point clouds and the global normal map.

pub mod bench;
pub mod io;
pub mod knn;
pub mod map;
pub mod pca;

use nalgebra::Vector3;
use thiserror::Error;

pub use knn::KnnIndex;
pub use map::{
    incline_angle, query_normal, MapConfig, NormalCell, NormalFilter, NormalMap, SharedNormalMap, UpdateReport,
};
pub use pca::{eigen_entropy, estimate_normal, optimal_neighborhood, NormalEstimate};

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("insufficient neighborhood: {available} points available, {required} required")]
    InsufficientNeighborhood { available: usize, required: usize },
    #[error("degenerate neighborhood: points are collinear or coincident")]
    DegenerateNeighborhood,
    #[error("invalid neighborhood range [{k_min}, {k_max}]: need 3 <= k_min < k_max")]
    InvalidRange { k_min: usize, k_max: usize },
    #[error("point {index} has a non-finite coordinate")]
    NonFinite { index: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("empty point cloud")]
    EmptyCloud,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A set of world-frame points.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
    pub timestamp: Option<f64>,
}

impl PointCloud {
    /// Rejects any non-finite coordinate.
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self, TerrainError> {
        if let Some(index) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(TerrainError::NonFinite { index });
        }
        Ok(Self { points, timestamp: None })
    }

    pub fn with_timestamp(mut self, t: f64) -> Self {
        self.timestamp = Some(t);
        self
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Appends another cloud (used to merge LiDAR frames).
    pub fn extend(&mut self, other: &PointCloud) {
        self.points.extend_from_slice(&other.points);
    }
}
