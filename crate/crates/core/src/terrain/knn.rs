//! k-nearest-neighbour search on a horizontal spatial hash.

use std::collections::HashMap;

use nalgebra::Vector3;

/// Buckets points by their `(x, y)` grid cell. Results are ordered by
/// distance, then by point index, so equal distances resolve the same way
/// every time.
#[derive(Debug, Clone)]
pub struct KnnIndex<'a> {
    points: &'a [Vector3<f64>],
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    lo: (i64, i64),
    hi: (i64, i64),
}

impl<'a> KnnIndex<'a> {
    pub fn new(points: &'a [Vector3<f64>], cell: f64) -> Self {
        assert!(cell > 0.0, "cell size must be positive");
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        let mut lo = (i64::MAX, i64::MAX);
        let mut hi = (i64::MIN, i64::MIN);
        for (i, p) in points.iter().enumerate() {
            let key = Self::key_of(cell, p);
            lo = (lo.0.min(key.0), lo.1.min(key.1));
            hi = (hi.0.max(key.0), hi.1.max(key.1));
            buckets.entry(key).or_default().push(i);
        }
        Self {
            points,
            cell,
            buckets,
            lo,
            hi,
        }
    }

    fn key_of(cell: f64, p: &Vector3<f64>) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    pub fn points(&self) -> &'a [Vector3<f64>] {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices of the `k` nearest points (fewer if the cloud is smaller).
    pub fn nearest(&self, q: &Vector3<f64>, k: usize) -> Vec<usize> {
        let k = k.min(self.points.len());
        if k == 0 {
            return Vec::new();
        }
        let c = Self::key_of(self.cell, q);
        let max_ring = [
            (c.0 - self.lo.0).abs(),
            (self.hi.0 - c.0).abs(),
            (c.1 - self.lo.1).abs(),
            (self.hi.1 - c.1).abs(),
        ]
        .into_iter()
        .max()
        .unwrap_or(0);
        let mut found: Vec<(f64, usize)> = Vec::new();
        for ring in 0..=max_ring {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    if let Some(ids) = self.buckets.get(&(c.0 + dx, c.1 + dy)) {
                        found.extend(ids.iter().map(|&i| ((self.points[i] - q).norm_squared(), i)));
                    }
                }
            }
            if found.len() >= k {
                let covered = ring as f64 * self.cell;
                found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                if found[k - 1].0 <= covered * covered {
                    break;
                }
            }
        }
        found.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        found.truncate(k);
        found.into_iter().map(|(_, i)| i).collect()
    }

    /// Indices of points within horizontal distance `r` of `(x, y)`.
    pub fn within_horizontal(&self, x: f64, y: f64, r: f64) -> Vec<usize> {
        let reach = (r / self.cell).ceil() as i64;
        let c = Self::key_of(self.cell, &Vector3::new(x, y, 0.0));
        let mut out = Vec::new();
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                if let Some(ids) = self.buckets.get(&(c.0 + dx, c.1 + dy)) {
                    for &i in ids {
                        let p = &self.points[i];
                        if (p.x - x).powi(2) + (p.y - y).powi(2) <= r * r {
                            out.push(i);
                        }
                    }
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// Exhaustive scan with the same ordering as [`KnnIndex::nearest`].
pub fn nearest_exhaustive(points: &[Vector3<f64>], q: &Vector3<f64>, k: usize) -> Vec<usize> {
    let mut all: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| ((p - q).norm_squared(), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}
