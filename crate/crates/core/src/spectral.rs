//! Jacobians, generalized Jacobians in a metric, and the two spectral
//! quantities the contraction conditions are stated in: the largest singular
//! value (discrete maps) and the largest eigenvalue of the symmetric part
//! (vector fields).

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default central-difference step: `1e-6 · max(1, ‖x‖)`.
pub fn default_fd_step(x: &[f64]) -> f64 {
    1e-6 * norm(x).max(1.0)
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Central-difference Jacobian of `f` at `x`.
///
/// Column k is `(f(x + eps·e_k) − f(x − eps·e_k)) / (2·eps)`. `f` writes its
/// value into the output slice, which has the same length as `x`.
pub fn jacobian_fd<F>(mut f: F, x: &[f64], eps: f64) -> Result<Matrix>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::InvalidArgument(format!("FD step must be positive, got {eps}")));
    }
    let n = x.len();
    let mut jac = Matrix::zeros(n);
    let mut probe = x.to_vec();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for k in 0..n {
        probe[k] = x[k] + eps;
        f(&probe, &mut plus);
        probe[k] = x[k] - eps;
        f(&probe, &mut minus);
        probe[k] = x[k];
        if plus.iter().chain(&minus).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("map value while differencing column {k}")));
        }
        for i in 0..n {
            jac[(i, k)] = (plus[i] - minus[i]) / (2.0 * eps);
        }
    }
    Ok(jac)
}

/// `F = Θ_{i+1} · J · Θ_i⁻¹`.
pub fn generalized_jacobian_discrete(
    jac: &Matrix,
    theta_i: &Matrix,
    theta_next: &Matrix,
) -> Result<Matrix> {
    let inv = theta_i.inverse()?;
    Ok(theta_next.matmul(jac).matmul(&inv))
}

/// `F = (Θ̇ + Θ · J) · Θ⁻¹`.
pub fn generalized_jacobian_continuous(
    jac: &Matrix,
    theta: &Matrix,
    theta_dot: &Matrix,
) -> Result<Matrix> {
    let inv = theta.inverse()?;
    Ok(theta_dot.add(&theta.matmul(jac)).matmul(&inv))
}

/// Largest singular value `sqrt(λ_max(FᵀF))`.
pub fn largest_singular_value(f: &Matrix) -> f64 {
    match f.dim() {
        0 => 0.0,
        1 => f[(0, 0)].abs(),
        2 => {
            let (a, b, c, d) = (f[(0, 0)], f[(0, 1)], f[(1, 0)], f[(1, 1)]);
            let s = a * a + b * b + c * c + d * d;
            let det = a * d - b * c;
            let disc = (s * s - 4.0 * det * det).max(0.0).sqrt();
            (0.5 * (s + disc)).sqrt()
        }
        _ => top_eigenvalue_psd(&f.gram()).max(0.0).sqrt(),
    }
}

/// Largest eigenvalue of the symmetric part `(F + Fᵀ)/2`.
pub fn lambda_max_symmetric(f: &Matrix) -> f64 {
    if f.dim() == 1 {
        return f[(0, 0)];
    }
    let s = f.symmetric_part();
    match s.dim() {
        0 => 0.0,
        1 => s[(0, 0)],
        2 => {
            let (p, q, r) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
            let half_gap = 0.5 * (p - r);
            0.5 * (p + r) + half_gap.hypot(q)
        }
        n => {
            // Gershgorin radius makes the shifted matrix positive semidefinite.
            let shift = (0..n)
                .map(|i| (0..n).map(|j| s[(i, j)].abs()).sum::<f64>())
                .fold(0.0, f64::max);
            let shifted = s.add(&Matrix::identity(n).scaled(shift));
            top_eigenvalue_psd(&shifted) - shift
        }
    }
}

/// Smallest eigenvalue of the symmetric part of `f`.
pub fn lambda_min_symmetric(f: &Matrix) -> f64 {
    -lambda_max_symmetric(&f.scaled(-1.0))
}

/// Dominant eigenvalue of a symmetric positive semidefinite matrix.
///
/// Power iteration on successive squares `S, S², S⁴, …` (normalized each
/// round), so the subdominant ratio decays like `r^(2^k)`. The dominant
/// direction is read off the largest column and the eigenvalue is its
/// Rayleigh quotient against the original `S`.
fn top_eigenvalue_psd(s: &Matrix) -> f64 {
    let n = s.dim();
    let scale = s.max_abs();
    if scale == 0.0 || !scale.is_finite() {
        return if scale.is_finite() { 0.0 } else { f64::NAN };
    }
    let mut a = s.scaled(1.0 / scale);
    let mut next = Matrix::zeros(n);
    for _ in 0..64 {
        a.matmul_into(&a, &mut next);
        let m = next.max_abs();
        if m == 0.0 {
            break;
        }
        let inv = 1.0 / m;
        let mut delta: f64 = 0.0;
        for (dst, src) in a.as_mut_slice().iter_mut().zip(next.as_slice()) {
            let v = src * inv;
            delta = delta.max((v - *dst).abs());
            *dst = v;
        }
        if delta <= 1e-15 {
            break;
        }
    }
    let mut best = 0;
    let mut best_norm = -1.0;
    for j in 0..n {
        let c: f64 = (0..n).map(|i| a[(i, j)] * a[(i, j)]).sum();
        if c > best_norm {
            best_norm = c;
            best = j;
        }
    }
    let v: Vec<f64> = (0..n).map(|i| a[(i, best)]).collect();
    let mut sv = vec![0.0; n];
    s.mul_vec(&v, &mut sv);
    let num: f64 = v.iter().zip(&sv).map(|(a, b)| a * b).sum();
    let den: f64 = v.iter().map(|a| a * a).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fd_linear_map_recovers_matrix() {
        let a = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        let x = [0.3, -1.2];
        let jac = jacobian_fd(|x, out| a.mul_vec(x, out), &x, default_fd_step(&x)).unwrap();
        for (u, v) in jac.as_slice().iter().zip(a.as_slice()) {
            assert!((u - v).abs() < 1e-9);
        }
    }

    #[test]
    fn fd_constant_map_is_zero() {
        let jac = jacobian_fd(|_, out| out.copy_from_slice(&[2.0, 5.0]), &[1.0, 1.0], 1e-6).unwrap();
        assert_eq!(jac.max_abs(), 0.0);
    }

    #[test]
    fn fd_hand_computed_jacobian() {
        // f(x) = (x1², x1·x2) at (3, 2): [[2x1, 0], [x2, x1]] = [[6, 0], [2, 3]]
        let x = [3.0, 2.0];
        let jac = jacobian_fd(
            |x, out| {
                out[0] = x[0] * x[0];
                out[1] = x[0] * x[1];
            },
            &x,
            default_fd_step(&x),
        )
        .unwrap();
        let expected = [6.0, 0.0, 2.0, 3.0];
        for (u, v) in jac.as_slice().iter().zip(expected) {
            assert!((u - v).abs() < 1e-6, "{jac:?}");
        }
    }

    #[test]
    fn fd_rejects_non_finite_and_bad_step() {
        let err = jacobian_fd(|x, out| out[0] = 1.0 / (x[0] - 1e-7), &[0.0], 1e-7);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert!(jacobian_fd(|_, _| {}, &[0.0], 0.0).is_err());
    }

    #[test]
    fn discrete_generalized_jacobian_examples() {
        let j = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        let id = Matrix::identity(2);
        assert_eq!(generalized_jacobian_discrete(&j, &id, &id).unwrap(), j);

        let f = generalized_jacobian_discrete(
            &Matrix::identity(2),
            &Matrix::diag(&[1.0, 2.0]),
            &Matrix::diag(&[2.0, 1.0]),
        )
        .unwrap();
        assert_eq!(f, Matrix::diag(&[2.0, 0.5]));

        let f = generalized_jacobian_discrete(
            &Matrix::scalar(0.7),
            &Matrix::scalar(2.0),
            &Matrix::scalar(2.0),
        )
        .unwrap();
        assert!((f[(0, 0)] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn singular_metric_rejected() {
        let j = Matrix::identity(2);
        let sing = Matrix::from_rows(&[[1.0, 1.0], [1.0, 1.0]]).unwrap();
        assert!(matches!(
            generalized_jacobian_discrete(&j, &sing, &j),
            Err(Error::Singular { .. })
        ));
        assert!(generalized_jacobian_continuous(&j, &sing, &j).is_err());
    }

    #[test]
    fn singular_value_examples() {
        assert!((largest_singular_value(&Matrix::identity(3)) - 1.0).abs() < 1e-14);
        assert_eq!(largest_singular_value(&Matrix::diag(&[2.0, 0.5])), 2.0);
        let f = Matrix::from_rows(&[[0.0, 3.0], [0.0, 0.0]]).unwrap();
        assert!((largest_singular_value(&f) - 3.0).abs() < 1e-14);
        let f3 = Matrix::from_rows(&[[0.0, 3.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]]).unwrap();
        assert!((largest_singular_value(&f3) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn continuous_generalized_jacobian_examples() {
        let j = Matrix::from_rows(&[[-1.0, 2.0], [0.5, -3.0]]).unwrap();
        let f = generalized_jacobian_continuous(&j, &Matrix::identity(2), &Matrix::zeros(2)).unwrap();
        assert_eq!(f, j);

        // Θ(t) = e^t: F = (e^t + e^t · (−2)) / e^t = −1
        let t: f64 = 0.37;
        let e = Matrix::scalar(t.exp());
        let f = generalized_jacobian_continuous(&Matrix::scalar(-2.0), &e, &e).unwrap();
        assert!((f[(0, 0)] + 1.0).abs() < 1e-14);

        let d = Matrix::diag(&[2.0, 5.0]);
        let jd = Matrix::diag(&[-1.0, -4.0]);
        let f = generalized_jacobian_continuous(&jd, &d, &Matrix::zeros(2)).unwrap();
        for (u, v) in f.as_slice().iter().zip(jd.as_slice()) {
            assert!((u - v).abs() < 1e-15);
        }
    }

    #[test]
    fn symmetric_eigenvalue_examples() {
        assert_eq!(lambda_max_symmetric(&Matrix::identity(2).scaled(-1.0)), -1.0);
        let skew = Matrix::from_rows(&[[0.0, 1.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(lambda_max_symmetric(&skew), 0.0);
        let f = Matrix::from_rows(&[[-1.0, 4.0], [0.0, -1.0]]).unwrap();
        assert!((lambda_max_symmetric(&f) - 1.0).abs() < 1e-14);
        let f3 = Matrix::from_rows(&[[-1.0, 4.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -5.0]]).unwrap();
        assert!((lambda_max_symmetric(&f3) - 1.0).abs() < 1e-12);
        assert!((lambda_min_symmetric(&f3) + 5.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_top_eigenvalue_converges() {
        let s = Matrix::diag(&[3.0, 3.0, 1.0, -2.0]);
        assert!((lambda_max_symmetric(&s) - 3.0).abs() < 1e-12);
        assert!((largest_singular_value(&s) - 3.0).abs() < 1e-12);
    }
}
