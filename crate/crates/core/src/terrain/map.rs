//! Sparse grid of estimated normals with filtered lookahead queries.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use nalgebra::{Vector2, Vector3};

use super::knn::KnnIndex;
use super::pca::estimate_adaptive;
use super::{PointCloud, TerrainError};

#[derive(Debug, Clone, PartialEq)]
pub struct MapConfig {
    /// m
    pub cell_size: f64,
    pub k_min: usize,
    pub k_max: usize,
    /// Horizontal radius around a cell centre in which points count as
    /// support for that cell, m.
    pub support_radius: f64,
    /// Fallback search radius for empty query cells, m.
    pub search_radius: f64,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            cell_size: 0.1,
            k_min: 30,
            k_max: 300,
            support_radius: 0.15,
            search_radius: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalCell {
    pub normal: Vector3<f64>,
    /// Points supporting the cell in its latest update.
    pub sample_count: usize,
    /// Batch number of the latest update.
    pub last_update: u64,
    pub k: usize,
    pub entropy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UpdateReport {
    pub updated: usize,
    pub degenerate: usize,
    pub sparse: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub config: MapConfig,
    cells: BTreeMap<(i64, i64), NormalCell>,
    batches: u64,
}

impl Default for NormalMap {
    fn default() -> Self {
        Self::new(MapConfig::default())
    }
}

impl NormalMap {
    pub fn new(config: MapConfig) -> Self {
        Self {
            config,
            cells: BTreeMap::new(),
            batches: 0,
        }
    }

    pub fn cell_key(&self, x: f64, y: f64) -> (i64, i64) {
        let c = self.config.cell_size;
        ((x / c).floor() as i64, (y / c).floor() as i64)
    }

    pub fn cell_center(&self, key: (i64, i64)) -> Vector2<f64> {
        let c = self.config.cell_size;
        Vector2::new((key.0 as f64 + 0.5) * c, (key.1 as f64 + 0.5) * c)
    }

    pub fn get(&self, key: (i64, i64)) -> Option<&NormalCell> {
        self.cells.get(&key)
    }

    pub fn cells(&self) -> impl Iterator<Item = (&(i64, i64), &NormalCell)> {
        self.cells.iter()
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn batches(&self) -> u64 {
        self.batches
    }

    /// Re-estimates every cell supported by `cloud`; other cells persist.
    /// Degenerate or under-supported cells are counted and skipped.
    pub fn update(&mut self, cloud: &PointCloud) -> Result<UpdateReport, TerrainError> {
        if cloud.is_empty() {
            return Err(TerrainError::EmptyCloud);
        }
        self.batches += 1;
        let cfg = self.config.clone();
        let index = KnnIndex::new(cloud.points(), cfg.cell_size);
        let mut candidates: Vec<(i64, i64)> = cloud.points().iter().map(|p| self.cell_key(p.x, p.y)).collect();
        candidates.sort_unstable();
        candidates.dedup();
        let mut report = UpdateReport::default();
        for key in candidates {
            let c = self.cell_center(key);
            let support = index.within_horizontal(c.x, c.y, cfg.support_radius);
            if support.len() < cfg.k_min {
                report.sparse += 1;
                continue;
            }
            let z = support.iter().map(|&i| cloud.points()[i].z).sum::<f64>() / support.len() as f64;
            match estimate_adaptive(&index, &Vector3::new(c.x, c.y, z), cfg.k_min, cfg.k_max) {
                Ok(est) => {
                    self.cells.insert(
                        key,
                        NormalCell {
                            normal: est.normal,
                            sample_count: support.len(),
                            last_update: self.batches,
                            k: est.k,
                            entropy: est.entropy,
                        },
                    );
                    report.updated += 1;
                }
                Err(TerrainError::DegenerateNeighborhood) => report.degenerate += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(report)
    }

    /// Normal of the cell containing `(x, y)`; otherwise the nearest
    /// occupied cell within the search radius; otherwise straight up.
    pub fn lookup(&self, x: f64, y: f64) -> Vector3<f64> {
        let key = self.cell_key(x, y);
        if let Some(c) = self.cells.get(&key) {
            return c.normal;
        }
        let reach = (self.config.search_radius / self.config.cell_size).ceil() as i64;
        let p = Vector2::new(x, y);
        let mut best: Option<(f64, (i64, i64))> = None;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                let k = (key.0 + dx, key.1 + dy);
                if !self.cells.contains_key(&k) {
                    continue;
                }
                let d = (self.cell_center(k) - p).norm();
                if d > self.config.search_radius {
                    continue;
                }
                if best.is_none_or(|(bd, bk)| d < bd || (d == bd && k < bk)) {
                    best = Some((d, k));
                }
            }
        }
        best.map(|(_, k)| self.cells[&k].normal).unwrap_or_else(Vector3::z)
    }
}

/// Exponential moving average on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalFilter {
    state: Vector3<f64>,
    pub smoothing: f64,
}

impl NormalFilter {
    /// Starts from straight up.
    pub fn new(smoothing: f64) -> Self {
        assert!(smoothing > 0.0 && smoothing <= 1.0, "smoothing factor must be in (0, 1]");
        Self {
            state: Vector3::z(),
            smoothing,
        }
    }

    pub fn reset(&mut self, n: Vector3<f64>) {
        self.state = n.normalize();
    }

    pub fn current(&self) -> Vector3<f64> {
        self.state
    }

    pub fn update(&mut self, sample: &Vector3<f64>) -> Vector3<f64> {
        let blended = self.state * (1.0 - self.smoothing) + sample * self.smoothing;
        let norm = blended.norm();
        if norm > 1e-12 {
            self.state = blended / norm;
        }
        self.state
    }
}

/// Looks up the map `lookahead` metres ahead along the horizontal heading
/// and feeds the cell normal through the filter.
pub fn query_normal(
    map: &NormalMap,
    position: &Vector2<f64>,
    heading: &Vector2<f64>,
    lookahead: f64,
    filter: &mut NormalFilter,
) -> Vector3<f64> {
    let dir = if heading.norm() > 1e-12 { heading.normalize() } else { Vector2::zeros() };
    let target = position + dir * lookahead;
    filter.update(&map.lookup(target.x, target.y))
}

/// Incline of a ground normal from vertical, in degrees.
pub fn incline_angle(n: &Vector3<f64>) -> f64 {
    let n = n.normalize();
    n.xy().norm().atan2(n.z).to_degrees()
}

/// Single-writer, multi-reader handle: readers take consistent snapshots;
/// the writer publishes whole maps.
#[derive(Debug, Default)]
pub struct SharedNormalMap {
    inner: RwLock<Arc<NormalMap>>,
}

impl SharedNormalMap {
    pub fn new(map: NormalMap) -> Self {
        Self {
            inner: RwLock::new(Arc::new(map)),
        }
    }

    pub fn snapshot(&self) -> Arc<NormalMap> {
        Arc::clone(&self.inner.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn publish(&self, map: NormalMap) {
        *self.inner.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(map);
    }

    /// Copies the current map, ingests `cloud`, and publishes the result.
    pub fn ingest(&self, cloud: &PointCloud) -> Result<UpdateReport, TerrainError> {
        let mut next = (*self.snapshot()).clone();
        let report = next.update(cloud)?;
        self.publish(next);
        Ok(report)
    }
}
