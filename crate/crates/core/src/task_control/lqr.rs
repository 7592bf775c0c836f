//! Centroidal balance: sagittal pendulum model, CARE and the LQR law.

use nalgebra::{DMatrix, Matrix4, RowVector4, Vector2, Vector4};

use super::ControlError;

/// Balance state `(r_x, r_x_dot, s_x, s_x_dot)`.
pub type BalanceState = Vector4<f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct LqrWeights {
    pub q: Matrix4<f64>,
    pub r: f64,
}

impl Default for LqrWeights {
    fn default() -> Self {
        Self {
            q: Matrix4::from_diagonal(&Vector4::new(100.0, 1.0, 10.0, 1.0)),
            r: 1.0,
        }
    }
}

impl LqrWeights {
    pub fn diagonal(q: [f64; 4], r: f64) -> Self {
        Self {
            q: Matrix4::from_diagonal(&Vector4::from(q)),
            r,
        }
    }
}

/// `(A, B)` of the sagittal pendulum with CoM height `rz` above the contacts.
pub fn balance_model(rz: f64, gravity: f64) -> (Matrix4<f64>, Vector4<f64>) {
    let mut a = Matrix4::zeros();
    a[(0, 1)] = 1.0;
    a[(2, 3)] = 1.0;
    a[(3, 0)] = gravity / rz;
    (a, Vector4::new(0.0, 1.0, 0.0, 0.0))
}

/// Stabilizing CARE solution.
#[derive(Debug, Clone)]
pub struct CareSolution {
    pub p: DMatrix<f64>,
    /// Frobenius norm of `A'P + PA - PBR^-1B'P + Q`.
    pub residual: f64,
    pub iterations: usize,
}

pub fn care_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let rinv = r.clone().try_inverse().unwrap_or_else(|| DMatrix::from_element(r.nrows(), r.ncols(), f64::NAN));
    (a.transpose() * p + p * a - p * b * rinv * b.transpose() * p + q).norm()
}

/// Solves `A'X + XA = -W` through the Kronecker-product linear system.
fn lyapunov(a: &DMatrix<f64>, w: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let at = a.transpose();
    let big = eye.kronecker(&at) + at.kronecker(&eye);
    let rhs = DMatrix::from_iterator(n * n, 1, w.iter().map(|v| -v));
    let x = big.lu().solve(&rhs)?;
    let x = DMatrix::from_iterator(n, n, x.iter().cloned());
    Some((&x + x.transpose()) * 0.5)
}

fn spectral_abscissa(m: &DMatrix<f64>) -> f64 {
    m.complex_eigenvalues().iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max)
}

/// Newton-Kleinman iteration started from a Bass stabilizing gain.
pub fn solve_care(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<CareSolution, ControlError> {
    let n = a.nrows();
    let rinv = r.clone().try_inverse().ok_or(ControlError::SingularWeight)?;

    // Bass: with beta above the spectral radius, Z from
    // (A + beta I) Z + Z (A + beta I)' = 2 B B' gives a stabilizing B' Z^-1.
    let norm_a = a.iter().map(|v| v.abs()).fold(0.0, f64::max) * n as f64;
    let beta = 1.0 + norm_a;
    let shifted = a + DMatrix::<f64>::identity(n, n) * beta;
    let z = lyapunov(&(-shifted.transpose()), &(b * b.transpose() * 2.0))
        .ok_or(ControlError::NotConverged { residual: f64::NAN, iterations: 0 })?;
    let mut k = b.transpose()
        * z.try_inverse()
            .ok_or(ControlError::Uncontrollable)?;

    let mut p = DMatrix::zeros(n, n);
    let mut best: Option<CareSolution> = None;
    let mut stalled = 0;
    for it in 1..=100 {
        let ac = a - b * &k;
        let w = q + k.transpose() * r * &k;
        let Some(next) = lyapunov(&ac, &w) else { break };
        let step = (&next - &p).norm();
        p = next;
        k = &rinv * b.transpose() * &p;
        let residual = care_residual(a, b, q, r, &p);
        if best.as_ref().map_or(true, |s| residual < s.residual) {
            best = Some(CareSolution { p: p.clone(), residual, iterations: it });
            stalled = 0;
        } else {
            stalled += 1;
        }
        // Newton converges quadratically; once it stops improving we are at
        // rounding level.
        if step <= 1e-14 * (1.0 + p.norm()) || stalled >= 3 {
            break;
        }
    }
    let Some(sol) = best else {
        return Err(ControlError::NotConverged { residual: f64::NAN, iterations: 0 });
    };
    let k = &rinv * b.transpose() * &sol.p;
    let stable = spectral_abscissa(&(a - b * k)) < 0.0;
    if !stable || !(sol.residual < 1e-8 * (1.0 + sol.p.norm())) {
        return Err(ControlError::NotConverged { residual: sol.residual, iterations: sol.iterations });
    }
    Ok(sol)
}

#[derive(Debug, Clone)]
pub struct LqrSolution {
    pub k: RowVector4<f64>,
    pub p: Matrix4<f64>,
    pub residual: f64,
    pub rz: f64,
}

pub fn lqr_gain(rz: f64, weights: &LqrWeights, gravity: f64) -> Result<LqrSolution, ControlError> {
    if !(rz > 0.0) {
        return Err(ControlError::InvalidHeight(rz));
    }
    if !(weights.r > 0.0) {
        return Err(ControlError::SingularWeight);
    }
    let (a, b) = balance_model(rz, gravity);
    let dyn4 = |m: &Matrix4<f64>| DMatrix::from_column_slice(4, 4, m.as_slice());
    let sol = solve_care(
        &dyn4(&a),
        &DMatrix::from_column_slice(4, 1, b.as_slice()),
        &dyn4(&weights.q),
        &DMatrix::from_element(1, 1, weights.r),
    )?;
    let p = Matrix4::from_column_slice(sol.p.as_slice());
    let k = b.transpose() * p / weights.r;
    Ok(LqrSolution {
        k,
        p,
        residual: sol.residual,
        rz,
    })
}

/// Desired relative CoM acceleration `-K (state - reference)`.
pub fn balance_accel(k: &RowVector4<f64>, reference: &BalanceState, state: &BalanceState) -> f64 {
    -(k * (state - reference))[0]
}

/// LQR gain cached per CoM height; re-solved when the height moves by more
/// than `resolve_threshold`.
#[derive(Debug, Clone)]
pub struct BalanceController {
    pub weights: LqrWeights,
    pub gravity: f64,
    pub resolve_threshold: f64,
    solution: Option<LqrSolution>,
    solves: usize,
}

impl BalanceController {
    pub fn new(weights: LqrWeights, gravity: f64) -> Self {
        Self {
            weights,
            gravity,
            resolve_threshold: 0.01,
            solution: None,
            solves: 0,
        }
    }

    pub fn gain(&mut self, rz: f64) -> Result<&LqrSolution, ControlError> {
        let stale = match &self.solution {
            Some(s) => (s.rz - rz).abs() > self.resolve_threshold,
            None => true,
        };
        if stale {
            self.solution = Some(lqr_gain(rz, &self.weights, self.gravity)?);
            self.solves += 1;
        }
        Ok(self.solution.as_ref().expect("solved above"))
    }

    pub fn solves(&self) -> usize {
        self.solves
    }

    pub fn accel(&mut self, rz: f64, reference: &BalanceState, state: &BalanceState) -> Result<f64, ControlError> {
        let k = self.gain(rz)?.k;
        Ok(balance_accel(&k, reference, state))
    }
}

/// `(m g + F_z, -r_z F_x + r_x F_z)`; zero at balance. `force` is the
/// sagittal contact force `(F_x, F_z)` exerted on the ground, `r` is
/// `(r_x, r_z)`.
pub fn balance_constraints_residual(force: &Vector2<f64>, r: &Vector2<f64>, mass: f64, gravity: f64) -> Vector2<f64> {
    Vector2::new(mass * gravity + force.y, -r.y * force.x + r.x * force.y)
}
