use num_complex::Complex;

use crate::{Error, Result};

pub type C64 = Complex<f64>;
/// Row-major 2×2 complex matrix.
pub type Mat2 = [[C64; 2]; 2];

/// Euler angles of a U3 rotation, in radians.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GateParams {
    pub mu: f64,
    pub phi: f64,
    pub lambda: f64,
}

impl GateParams {
    pub fn new(mu: f64, phi: f64, lambda: f64) -> Self {
        GateParams { mu, phi, lambda }
    }

    pub fn from_slice(s: &[f64]) -> Self {
        GateParams::new(s[0], s[1], s[2])
    }

    fn check(&self) -> Result<()> {
        if self.mu.is_finite() && self.phi.is_finite() && self.lambda.is_finite() {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "non-finite gate angles {self:?}"
            )))
        }
    }
}

/// `[[cos(μ/2), −e^{iλ} sin(μ/2)], [e^{iφ} sin(μ/2), e^{i(φ+λ)} cos(μ/2)]]`.
pub fn u3_matrix(p: GateParams) -> Result<Mat2> {
    p.check()?;
    let (s, c) = (p.mu / 2.0).sin_cos();
    Ok([
        [C64::new(c, 0.0), -C64::from_polar(s, p.lambda)],
        [
            C64::from_polar(s, p.phi),
            C64::from_polar(c, p.phi + p.lambda),
        ],
    ])
}

/// Partial derivatives of [`u3_matrix`] with respect to `(μ, φ, λ)`.
pub fn u3_derivatives(p: GateParams) -> Result<[Mat2; 3]> {
    p.check()?;
    let (s, c) = (p.mu / 2.0).sin_cos();
    let i = C64::i();
    let zero = C64::new(0.0, 0.0);
    let e_phi = C64::from_polar(1.0, p.phi);
    let e_lam = C64::from_polar(1.0, p.lambda);
    let e_both = C64::from_polar(1.0, p.phi + p.lambda);
    Ok([
        [
            [C64::new(-s / 2.0, 0.0), -e_lam * (c / 2.0)],
            [e_phi * (c / 2.0), -e_both * (s / 2.0)],
        ],
        [[zero, zero], [i * e_phi * s, i * e_both * c]],
        [[zero, -i * e_lam * s], [zero, i * e_both * c]],
    ])
}

pub(crate) fn adjoint(m: &Mat2) -> Mat2 {
    [
        [m[0][0].conj(), m[1][0].conj()],
        [m[0][1].conj(), m[1][1].conj()],
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    fn close(a: &Mat2, b: &Mat2, tol: f64) -> bool {
        (0..2).all(|r| (0..2).all(|c| (a[r][c] - b[r][c]).norm() <= tol))
    }

    fn re(rows: [[f64; 2]; 2]) -> Mat2 {
        rows.map(|r| r.map(|v| C64::new(v, 0.0)))
    }

    #[test]
    fn named_gates() {
        assert!(close(
            &u3_matrix(GateParams::default()).unwrap(),
            &re([[1.0, 0.0], [0.0, 1.0]]),
            1e-15
        ));
        assert!(close(
            &u3_matrix(GateParams::new(PI, 0.0, PI)).unwrap(),
            &re([[0.0, 1.0], [1.0, 0.0]]),
            1e-15
        ));
        let h = FRAC_1_SQRT_2;
        assert!(close(
            &u3_matrix(GateParams::new(PI / 2.0, 0.0, PI)).unwrap(),
            &re([[h, h], [h, -h]]),
            1e-15
        ));
    }

    #[test]
    fn unitary_for_random_angles() {
        let mut rng = crate::seeded_rng(1, 0);
        for _ in 0..1000 {
            let p = GateParams::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            );
            let u = u3_matrix(p).unwrap();
            let ud = adjoint(&u);
            for (r, c) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                let v = u[r][0] * ud[0][c] + u[r][1] * ud[1][c];
                let id = if r == c { 1.0 } else { 0.0 };
                assert!((v - C64::new(id, 0.0)).norm() <= 1e-12);
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let p = GateParams::new(0.7, -1.3, 2.1);
        let d = u3_derivatives(p).unwrap();
        let h = 1e-6;
        let shifts = [
            |p: GateParams, h| GateParams { mu: p.mu + h, ..p },
            |p: GateParams, h| GateParams {
                phi: p.phi + h,
                ..p
            },
            |p: GateParams, h| GateParams {
                lambda: p.lambda + h,
                ..p
            },
        ];
        for (k, shift) in shifts.iter().enumerate() {
            let up = u3_matrix(shift(p, h)).unwrap();
            let down = u3_matrix(shift(p, -h)).unwrap();
            for r in 0..2 {
                for c in 0..2 {
                    let fd = (up[r][c] - down[r][c]) / (2.0 * h);
                    assert!((fd - d[k][r][c]).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn non_finite_rejected() {
        assert!(matches!(
            u3_matrix(GateParams::new(f64::NAN, 0.0, 0.0)),
            Err(Error::InvalidParameter(_))
        ));
        assert!(u3_matrix(GateParams::new(0.0, f64::INFINITY, 0.0)).is_err());
    }
}
