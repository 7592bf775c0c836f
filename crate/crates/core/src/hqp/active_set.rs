//! Dual active-set (Goldfarb-Idnani) method for
//! `min 1/2 z'Mz + c'z  s.t.  N z >= e`, `M` positive definite.

use nalgebra::{DMatrix, DVector};

use super::LevelError;

pub(crate) struct ActiveSetResult {
    pub z: DVector<f64>,
    /// Constraint indices in activation order, with their multipliers.
    pub active: Vec<usize>,
    pub multipliers: Vec<f64>,
}

struct Factor {
    /// `L^-T Q`.
    j: DMatrix<f64>,
    r: DMatrix<f64>,
}

fn factor(l: &DMatrix<f64>, nmat: &DMatrix<f64>, active: &[usize]) -> Factor {
    let n = l.nrows();
    let q = active.len();
    let mut b = DMatrix::zeros(n, n);
    for (col, &i) in active.iter().enumerate() {
        b.set_column(col, &nmat.row(i).transpose());
    }
    let b = l.solve_lower_triangular(&b).expect("Cholesky factor is nonsingular");
    let qr = b.qr();
    let qfull = qr.q();
    let r = qr.r().view((0, 0), (q, q)).into_owned();
    let j = l.transpose().solve_upper_triangular(&qfull).expect("nonsingular");
    Factor { j, r }
}

pub(crate) fn solve(
    m: &DMatrix<f64>,
    c: &DVector<f64>,
    nmat: &DMatrix<f64>,
    e: &DVector<f64>,
    warm: &[usize],
    max_cycles: usize,
) -> Result<ActiveSetResult, LevelError> {
    let n = m.nrows();
    let chol = m.clone().cholesky().ok_or(LevelError::Malformed)?;
    let l = chol.l();
    let mut z = -chol.solve(c);
    let mut active: Vec<usize> = Vec::new();
    let mut u: Vec<f64> = Vec::new();
    let scale = |i: usize| 1e-12 * (1.0 + e[i].abs());
    let slack = |z: &DVector<f64>, i: usize| nmat.row(i).dot(&z.transpose()) - e[i];
    let mut cycles = 0;

    loop {
        // Most violated inactive constraint, previously active ones first.
        let pick = |pool: &mut dyn Iterator<Item = usize>, z: &DVector<f64>, active: &[usize]| {
            let mut best: Option<(usize, f64)> = None;
            for i in pool {
                if active.contains(&i) {
                    continue;
                }
                let s = slack(z, i);
                if s < -scale(i) && best.map_or(true, |(_, b)| s < b) {
                    best = Some((i, s));
                }
            }
            best.map(|(i, _)| i)
        };
        let p = match pick(&mut warm.iter().copied().filter(|&i| i < e.len()), &z, &active)
            .or_else(|| pick(&mut (0..e.len()), &z, &active))
        {
            Some(p) => p,
            None => {
                return Ok(ActiveSetResult { z, active, multipliers: u });
            }
        };
        let np = nmat.row(p).transpose();
        let mut u_plus = u.clone();
        u_plus.push(0.0);

        loop {
            cycles += 1;
            if cycles > max_cycles {
                return Err(LevelError::CycleLimit(max_cycles));
            }
            let q = active.len();
            let f = factor(&l, nmat, &active);
            let d = f.j.transpose() * &np;
            let step = if q < n {
                f.j.columns(q, n - q) * d.rows(q, n - q)
            } else {
                DVector::zeros(n)
            };
            let r = if q > 0 {
                f.r.solve_upper_triangular(&d.rows(0, q).into_owned()).expect("independent active rows")
            } else {
                DVector::zeros(0)
            };

            // Partial (dual) step limit.
            let mut t1 = f64::INFINITY;
            let mut drop = None;
            for k in 0..q {
                if r[k] > 0.0 {
                    let t = u_plus[k] / r[k];
                    if t < t1 {
                        t1 = t;
                        drop = Some(k);
                    }
                }
            }
            let curvature = step.dot(&np);
            let t2 = if step.norm() > 1e-14 * (1.0 + np.norm()) && curvature > 0.0 {
                -slack(&z, p) / curvature
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(LevelError::InfeasibleInequalities { constraint: p });
            }
            for k in 0..q {
                u_plus[k] -= t * r[k];
            }
            u_plus[q] += t;
            if t2.is_finite() {
                z += &step * t;
            }
            if t2 <= t1 {
                active.push(p);
                u = u_plus;
                break;
            }
            let k = drop.expect("t1 finite");
            active.remove(k);
            u_plus.remove(k);
        }
    }
}
