use nalgebra::{DMatrix, DVector};

use super::active_set;
use super::{ConstraintSet, HqpError, LevelError, QpLevel, DECISION_DIM, TORQUE_DIM, TORQUE_OFFSET};

#[derive(Debug, Clone, PartialEq)]
pub struct HqpConfig {
    /// Tikhonov weight added to each level's Hessian.
    pub epsilon: f64,
    pub max_cycles: usize,
    /// Singular values below `rank_tol * sigma_max` count as zero.
    pub rank_tol: f64,
    /// Tolerance on the equality backward error `|Ax - b| / (1 + |b| + |A||x|)`.
    pub feasibility_tol: f64,
    /// Cap on proximal passes that remove the regularization bias.
    pub proximal_passes: usize,
}

impl Default for HqpConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-8,
            max_cycles: 200,
            rank_tol: 1e-9,
            feasibility_tol: 1e-8,
            proximal_passes: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelSolution {
    pub x: DVector<f64>,
    /// Active inequality rows and their (non-negative) multipliers.
    pub active: Vec<usize>,
    pub multipliers: Vec<f64>,
}

/// Particular solution and orthonormal nullspace basis of `A x = b`.
fn reduce_equalities(a: &DMatrix<f64>, b: &DVector<f64>, cfg: &HqpConfig) -> Result<(DVector<f64>, DMatrix<f64>), LevelError> {
    let n = a.ncols();
    let m = a.nrows();
    if m == 0 {
        return Ok((DVector::zeros(n), DMatrix::identity(n, n)));
    }
    // faer's SVD rather than nalgebra's: the latter can return
    // factorizations off by ~1e-6 on well-conditioned 16x22 systems.
    let mat = faer::Mat::<f64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = mat.svd().map_err(|_| LevelError::Malformed)?;
    let (u, sv, v) = (svd.U(), svd.S(), svd.V());
    let rank_max = m.min(n);
    let sigma_max = (0..rank_max).map(|k| sv[k]).fold(0.0_f64, f64::max);
    let cut = cfg.rank_tol * sigma_max;
    let mut x = DVector::zeros(n);
    let mut null_cols = Vec::new();
    for k in 0..n {
        let s = if k < rank_max { sv[k] } else { 0.0 };
        if s > cut && s > 0.0 {
            let coeff = (0..m).map(|i| u[(i, k)] * b[i]).sum::<f64>() / s;
            for j in 0..n {
                x[j] += v[(j, k)] * coeff;
            }
        } else {
            null_cols.push(k);
        }
    }
    let certificate = a * &x - b;
    let residual = certificate.norm();
    // Backward-error test: round-off in `x` scales with |A| |x|, not |b|.
    if residual > cfg.feasibility_tol * (1.0 + b.norm() + sigma_max * x.norm()) {
        return Err(LevelError::InfeasibleEqualities { residual, certificate });
    }
    let z = DMatrix::from_fn(n, null_cols.len(), |j, c| v[(j, null_cols[c])]);
    Ok((x, z))
}

/// Minimizes `1/2 x'Hx + g'x` (plus `epsilon/2 |x|^2` on the equality
/// manifold) subject to `A_eq x = b_eq` and `A_ineq x <= b_ineq`.
#[allow(clippy::too_many_arguments)]
pub fn solve_level(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    a_eq: &DMatrix<f64>,
    b_eq: &DVector<f64>,
    a_ineq: &DMatrix<f64>,
    b_ineq: &DVector<f64>,
    cfg: &HqpConfig,
    warm: &[usize],
) -> Result<LevelSolution, LevelError> {
    let (xp, z) = reduce_equalities(a_eq, b_eq, cfg)?;
    let nz = z.ncols();
    let slack0 = b_ineq - a_ineq * &xp;
    if nz == 0 {
        if let Some(i) = slack0.iter().position(|&s| s < -1e-12 * (1.0 + s.abs())) {
            return Err(LevelError::InfeasibleInequalities { constraint: i });
        }
        return Ok(LevelSolution { x: xp, active: vec![], multipliers: vec![] });
    }
    let zt = z.transpose();
    let m = &zt * h * &z + DMatrix::<f64>::identity(nz, nz) * cfg.epsilon;
    let c = &zt * (h * &xp + g) + &zt * &xp * cfg.epsilon;
    // A_ineq (xp + Z z) <= b_ineq  <=>  (-A_ineq Z) z >= -(b_ineq - A_ineq xp)
    let nmat = -(a_ineq * &z);
    let e = -slack0;
    // Proximal-point refinement: each pass solves the epsilon-regularized
    // problem re-centred at the previous iterate, which removes the Tikhonov
    // bias without ever factoring a singular Hessian.
    let mut res = active_set::solve(&m, &c, &nmat, &e, warm, cfg.max_cycles)?;
    for _ in 0..cfg.proximal_passes {
        let shifted = &c - &res.z * cfg.epsilon;
        let next = active_set::solve(&m, &shifted, &nmat, &e, &res.active, cfg.max_cycles)?;
        let step = (&next.z - &res.z).norm();
        res = next;
        if step <= 1e-13 * (1.0 + res.z.norm()) {
            break;
        }
    }
    let mut order: Vec<usize> = (0..res.active.len()).collect();
    order.sort_by_key(|&k| res.active[k]);
    Ok(LevelSolution {
        x: xp + z * res.z,
        active: order.iter().map(|&k| res.active[k]).collect(),
        multipliers: order.iter().map(|&k| res.multipliers[k]).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HqpSolution {
    pub x: DVector<f64>,
    pub tau: [f64; TORQUE_DIM],
    /// `|A_i x - b_i|` at the final solution.
    pub level_residuals: Vec<f64>,
    /// `|A_i x*_i - b_i|` right after level `i` was solved.
    pub achieved_residuals: Vec<f64>,
    pub active: Vec<Vec<usize>>,
    /// Levels (1-based) that kept the previous level's solution because the
    /// active-set solve failed numerically.
    pub fallback_levels: Vec<usize>,
}

impl HqpSolution {
    pub fn accelerations(&self) -> DVector<f64> {
        self.x.rows(0, super::ACCEL_DIM).into_owned()
    }

    pub fn forces(&self) -> [f64; super::FORCE_DIM] {
        std::array::from_fn(|i| self.x[super::FORCE_OFFSET + i])
    }
}

/// Cold-start cascade.
pub fn solve_hierarchy(levels: &[QpLevel], constraints: &ConstraintSet, cfg: &HqpConfig) -> Result<HqpSolution, HqpError> {
    HqpSolver::new(cfg.clone()).solve(levels, constraints)
}

/// Cascade solver that keeps each level's active set to warm-start the next call.
#[derive(Debug, Clone, Default)]
pub struct HqpSolver {
    pub config: HqpConfig,
    warm: Vec<Vec<usize>>,
}

impl HqpSolver {
    pub fn new(config: HqpConfig) -> Self {
        Self { config, warm: Vec::new() }
    }

    pub fn reset(&mut self) {
        self.warm.clear();
    }

    pub fn solve(&mut self, levels: &[QpLevel], constraints: &ConstraintSet) -> Result<HqpSolution, HqpError> {
        let mut a_eq = constraints.a_eq.clone();
        let mut b_eq = constraints.b_eq.clone();
        let mut x = DVector::zeros(DECISION_DIM);
        let mut achieved = Vec::with_capacity(levels.len());
        let mut active = Vec::with_capacity(levels.len());
        let mut fallback_levels = Vec::new();
        self.warm.resize(levels.len(), Vec::new());
        for (i, level) in levels.iter().enumerate() {
            let wrap = |source| HqpError { level: i + 1, source };
            level.validate().map_err(wrap)?;
            let at = level.a.transpose();
            let h = &at * &level.a;
            let g = -(&at * &level.b);
            let result = solve_level(
                &h,
                &g,
                &a_eq,
                &b_eq,
                &constraints.a_ineq,
                &constraints.b_ineq,
                &self.config,
                &self.warm[i],
            );
            // Below the first level the previous solution already satisfies
            // every constraint and every pinned row, so a failure there is
            // round-off (near-dependent pins, degenerate vertices); keep that
            // solution instead of failing.
            let sol = match result {
                Err(
                    LevelError::InfeasibleInequalities { .. }
                    | LevelError::InfeasibleEqualities { .. }
                    | LevelError::CycleLimit(_),
                ) if i > 0 => {
                    fallback_levels.push(i + 1);
                    LevelSolution { x: x.clone(), active: active.last().cloned().unwrap_or_default(), multipliers: Vec::new() }
                }
                other => other.map_err(wrap)?,
            };
            x = sol.x;
            achieved.push(level.residual(&x));
            self.warm[i] = sol.active.clone();
            active.push(sol.active);

            // Pin the value this level achieved.
            let pinned = &level.a * &x;
            let m = a_eq.nrows();
            a_eq = a_eq.insert_rows(m, level.a.nrows(), 0.0);
            a_eq.view_mut((m, 0), (level.a.nrows(), DECISION_DIM)).copy_from(&level.a);
            b_eq = b_eq.insert_rows(m, pinned.len(), 0.0);
            b_eq.rows_mut(m, pinned.len()).copy_from(&pinned);
        }
        Ok(HqpSolution {
            tau: std::array::from_fn(|k| x[TORQUE_OFFSET + k]),
            level_residuals: levels.iter().map(|l| l.residual(&x)).collect(),
            achieved_residuals: achieved,
            active,
            fallback_levels,
            x,
        })
    }
}
