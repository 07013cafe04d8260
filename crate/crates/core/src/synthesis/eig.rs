use nalgebra::{Complex, Matrix2, Matrix3};

/// Eigenvalues of a symmetric 2x2 matrix, ascending.
pub fn sym2_eigenvalues(m: &Matrix2<f64>) -> [f64; 2] {
    let mean = 0.5 * (m[(0, 0)] + m[(1, 1)]);
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let r = half_diff.hypot(m[(0, 1)]);
    [mean - r, mean + r]
}

/// Eigenvalues of a symmetric 3x3 matrix, ascending, from the trigonometric
/// solution of the characteristic cubic.
pub fn sym3_eigenvalues(m: &Matrix3<f64>) -> [f64; 3] {
    let off = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
    let q = m.trace() / 3.0;
    let scale = m.amax();
    if off <= (f64::EPSILON * scale).powi(2) {
        let mut d = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
        d.sort_by(|a, b| a.total_cmp(b));
        return d;
    }
    let p2 =
        (m[(0, 0)] - q).powi(2) + (m[(1, 1)] - q).powi(2) + (m[(2, 2)] - q).powi(2) + 2.0 * off;
    let p = (p2 / 6.0).sqrt();
    let b = (m - Matrix3::identity() * q) / p;
    let r = (0.5 * b.determinant()).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
    let mid = 3.0 * q - hi - lo;
    [lo, mid, hi]
}

/// Roots of `s^2 + b s + c`, using the cancellation-free form for real roots.
pub fn monic_quadratic_roots(b: f64, c: f64) -> [Complex<f64>; 2] {
    let disc = b * b - 4.0 * c;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let q = -0.5 * (b + b.signum() * sq);
        if q == 0.0 {
            return [Complex::new(0.0, 0.0), Complex::new(-b, 0.0)];
        }
        let r1 = q;
        let r2 = c / q;
        let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
        [Complex::new(lo, 0.0), Complex::new(hi, 0.0)]
    } else {
        let re = -0.5 * b;
        let im = 0.5 * (-disc).sqrt();
        [Complex::new(re, -im), Complex::new(re, im)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn quadratic_roots() {
        let r = monic_quadratic_roots(2.0, 1.0);
        assert_relative_eq!(r[0].re, -1.0, epsilon = 1e-12);
        assert_relative_eq!(r[1].re, -1.0, epsilon = 1e-12);
        let r = monic_quadratic_roots(0.0, 4.0);
        assert_relative_eq!(r[1].im, 2.0, epsilon = 1e-15);
        let r = monic_quadratic_roots(5.0, 0.0);
        assert_eq!(r[1].re, 0.0);
        assert_eq!(r[0].re, -5.0);
    }

    proptest! {
        #[test]
        fn sym3_matches_iterative_solver(a in proptest::array::uniform6(-50.0..50.0f64)) {
            let m = Matrix3::new(a[0], a[1], a[2], a[1], a[3], a[4], a[2], a[4], a[5]);
            let closed = sym3_eigenvalues(&m);
            let mut reference: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().cloned().collect();
            reference.sort_by(|x, y| x.total_cmp(y));
            for (c, r) in closed.iter().zip(reference.iter()) {
                prop_assert!((c - r).abs() < 1e-9 * (1.0 + m.amax()));
            }
        }

        #[test]
        fn sym2_matches_iterative_solver(a in -10.0..10.0f64, b in -10.0..10.0f64, c in -10.0..10.0f64) {
            let m = Matrix2::new(a, b, b, c);
            let closed = sym2_eigenvalues(&m);
            let e = m.symmetric_eigen().eigenvalues;
            prop_assert!((closed[0] - e.min()).abs() < 1e-10);
            prop_assert!((closed[1] - e.max()).abs() < 1e-10);
        }

        #[test]
        fn quadratic_roots_satisfy_polynomial(b in -100.0..100.0f64, c in -100.0..100.0f64) {
            for r in monic_quadratic_roots(b, c) {
                let v = r * r + r * b + c;
                prop_assert!(v.norm() < 1e-9 * (1.0 + b * b + c.abs()));
            }
        }
    }
}
