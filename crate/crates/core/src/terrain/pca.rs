//! Covariance analysis of point neighbourhoods.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use super::knn::KnnIndex;
use super::{PointCloud, TerrainError};

/// Entropies closer than this are treated as equal.
pub const ENTROPY_TIE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct NormalEstimate {
    pub normal: Vector3<f64>,
    pub k: usize,
    /// nats
    pub entropy: f64,
    /// Descending, non-negative.
    pub eigenvalues: [f64; 3],
}

/// Eigenvalues of a symmetric 3x3 matrix in descending order (closed form).
pub fn eigenvalues_sym3(m: &Matrix3<f64>) -> [f64; 3] {
    let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
    let mut e = if p1 == 0.0 {
        [m[(0, 0)], m[(1, 1)], m[(2, 2)]]
    } else {
        let q = m.trace() / 3.0;
        let p2 = (m[(0, 0)] - q).powi(2) + (m[(1, 1)] - q).powi(2) + (m[(2, 2)] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        let b = (m - Matrix3::identity() * q) / p;
        let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let e1 = q + 2.0 * p * phi.cos();
        let e3 = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
        [e1, 3.0 * q - e1 - e3, e3]
    };
    e.sort_by(|a, b| b.total_cmp(a));
    e.map(|v| v.max(0.0))
}

/// `-sum(eta ln eta)` over normalized eigenvalues, with `0 ln 0 = 0`.
/// Returns `+inf` when all eigenvalues vanish.
pub fn eigen_entropy(eigenvalues: &[f64; 3]) -> f64 {
    let total: f64 = eigenvalues.iter().sum();
    if !(total > 0.0) {
        return f64::INFINITY;
    }
    -eigenvalues
        .iter()
        .map(|&l| {
            let eta = l / total;
            if eta > 0.0 {
                eta * eta.ln()
            } else {
                0.0
            }
        })
        .sum::<f64>()
}

/// First `k` of an entropy profile `(k, entropy)` that attains the minimum;
/// later entries must be lower by more than [`ENTROPY_TIE`] to win.
pub fn select_min_entropy(profile: &[(usize, f64)]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &(k, e) in profile.iter().filter(|(_, e)| e.is_finite()) {
        match best {
            Some((_, b)) if e >= b - ENTROPY_TIE => {}
            _ => best = Some((k, e)),
        }
    }
    best.map(|(k, _)| k).or_else(|| profile.first().map(|&(k, _)| k))
}

fn covariance(points: &[Vector3<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let mean = points.iter().fold(Vector3::zeros(), |a, p| a + p) / n;
    points.iter().fold(Matrix3::zeros(), |a, p| {
        let d = p - mean;
        a + d * d.transpose()
    }) / n
}

/// Entropy for each `k` in `[k_min, k_max]` using the nearest neighbours
/// in `order` (closest first). Sums are accumulated incrementally about
/// the first neighbour to limit cancellation.
pub fn entropy_profile(points: &[Vector3<f64>], order: &[usize], k_min: usize, k_max: usize) -> Vec<(usize, f64)> {
    let Some(&first) = order.first() else {
        return Vec::new();
    };
    let origin = points[first];
    let mut sum = Vector3::zeros();
    let mut outer = Matrix3::zeros();
    let mut out = Vec::with_capacity(k_max.saturating_sub(k_min) + 1);
    for (n, &i) in order.iter().take(k_max).enumerate() {
        let d = points[i] - origin;
        sum += d;
        outer += d * d.transpose();
        let k = n + 1;
        if k >= k_min {
            let kf = k as f64;
            let mean = sum / kf;
            let cov = outer / kf - mean * mean.transpose();
            out.push((k, eigen_entropy(&eigenvalues_sym3(&cov))));
        }
    }
    out
}

fn check_range(k_min: usize, k_max: usize) -> Result<(), TerrainError> {
    if k_min < 3 || k_min >= k_max {
        return Err(TerrainError::InvalidRange { k_min, k_max });
    }
    Ok(())
}

pub(crate) fn optimal_k_indexed(
    index: &KnnIndex<'_>,
    query: &Vector3<f64>,
    k_min: usize,
    k_max: usize,
) -> Result<(usize, Vec<usize>), TerrainError> {
    check_range(k_min, k_max)?;
    if index.len() < k_min {
        return Err(TerrainError::InsufficientNeighborhood {
            available: index.len(),
            required: k_min,
        });
    }
    let order = index.nearest(query, k_max);
    let profile = entropy_profile(index.points(), &order, k_min, k_max);
    let k = select_min_entropy(&profile).unwrap_or(k_min);
    Ok((k, order))
}

/// Neighbourhood size in `[k_min, k_max]` minimizing the eigenvalue entropy
/// of the `k` nearest points to `query`. Ties go to the smaller `k`.
pub fn optimal_neighborhood(
    cloud: &PointCloud,
    query: &Vector3<f64>,
    k_min: usize,
    k_max: usize,
) -> Result<usize, TerrainError> {
    let index = KnnIndex::new(cloud.points(), 0.1);
    optimal_k_indexed(&index, query, k_min, k_max).map(|(k, _)| k)
}

/// Orients a normal into the upper hemisphere; vertical normals point to +x
/// (then +y).
pub fn orient_upward(n: Vector3<f64>) -> Vector3<f64> {
    const FLAT: f64 = 1e-12;
    let flip = if n.z.abs() > FLAT {
        n.z < 0.0
    } else if n.x.abs() > FLAT {
        n.x < 0.0
    } else {
        n.y < 0.0
    };
    if flip {
        -n
    } else {
        n
    }
}

/// PCA normal of an explicit neighbourhood.
pub fn normal_from_points(points: &[Vector3<f64>]) -> Result<NormalEstimate, TerrainError> {
    if points.len() < 3 {
        return Err(TerrainError::InsufficientNeighborhood {
            available: points.len(),
            required: 3,
        });
    }
    let cov = covariance(points);
    let eig = SymmetricEigen::new(cov);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let lambdas = order.map(|i| eig.eigenvalues[i].max(0.0));
    if !(lambdas[1] > 1e-12 * lambdas[0]) || lambdas[0] <= 0.0 {
        return Err(TerrainError::DegenerateNeighborhood);
    }
    let normal = orient_upward(eig.eigenvectors.column(order[2]).normalize());
    Ok(NormalEstimate {
        normal,
        k: points.len(),
        entropy: eigen_entropy(&lambdas),
        eigenvalues: lambdas,
    })
}

pub(crate) fn estimate_indexed(
    index: &KnnIndex<'_>,
    query: &Vector3<f64>,
    k: usize,
) -> Result<NormalEstimate, TerrainError> {
    if index.len() < k || k < 3 {
        return Err(TerrainError::InsufficientNeighborhood {
            available: index.len(),
            required: k.max(3),
        });
    }
    let pts: Vec<Vector3<f64>> = index.nearest(query, k).into_iter().map(|i| index.points()[i]).collect();
    normal_from_points(&pts)
}

/// PCA normal from the `k` nearest neighbours of `query`.
pub fn estimate_normal(cloud: &PointCloud, query: &Vector3<f64>, k: usize) -> Result<NormalEstimate, TerrainError> {
    estimate_indexed(&KnnIndex::new(cloud.points(), 0.1), query, k)
}

/// Adaptive neighbourhood selection followed by PCA.
pub fn estimate_adaptive(
    index: &KnnIndex<'_>,
    query: &Vector3<f64>,
    k_min: usize,
    k_max: usize,
) -> Result<NormalEstimate, TerrainError> {
    let (k, order) = optimal_k_indexed(index, query, k_min, k_max)?;
    let pts: Vec<Vector3<f64>> = order[..k].iter().map(|&i| index.points()[i]).collect();
    normal_from_points(&pts)
}
