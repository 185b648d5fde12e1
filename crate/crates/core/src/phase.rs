//! Rescaled gradient dynamics of the Hamilton-Jacobi system.
//!
//! With `p_i = u_i'` and the new variable `s` defined by `ds/dx = 1/Delta(p)`,
//! the HJ system inside an interval with constant cost slopes
//! `K = (k1, k2)` becomes the polynomial planar system
//!
//! ```text
//! dp1/ds = (k1 - k2) p1 + k1 p2 - p1^2
//! dp2/ds = (k2 - k1) p2 + k2 p1 - p2^2
//! ```
//!
//! whose equilibria are the origin (always a saddle) and `K`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

/// A point of the gradient plane with its rescaled time and physical state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseState<T = f64> {
    pub p: [T; 2],
    pub s: T,
    pub x: T,
}

/// `Delta(p) = det Lambda(p) = (p1 + p2)^2 - p1 p2`.
#[inline]
pub fn capital_delta<T: Real>(p: [T; 2]) -> T {
    let sum = p[0] + p[1];
    sum * sum - p[0] * p[1]
}

/// The matrix `Lambda(p)` multiplying `dp/dx` in the differentiated HJ system.
pub fn lambda_matrix<T: Real>(p: [T; 2]) -> [[T; 2]; 2] {
    let sum = p[0] + p[1];
    [[sum, p[0]], [p[1], sum]]
}

/// Right-hand side `dp/ds` of the rescaled system for slopes `k`.
#[inline]
pub fn vector_field<T: Real>(p: [T; 2], k: [T; 2]) -> [T; 2] {
    let [p1, p2] = p;
    let [k1, k2] = k;
    [
        (k1 - k2) * p1 + k1 * p2 - p1 * p1,
        (k2 - k1) * p2 + k2 * p1 - p2 * p2,
    ]
}

/// `dp/dx = (dp/ds) / Delta(p)`, the gradient slope in physical coordinates.
#[inline]
pub fn gradient_slope<T: Real>(p: [T; 2], k: [T; 2]) -> [T; 2] {
    let d = capital_delta(p);
    let f = vector_field(p, k);
    [f[0] / d, f[1] / d]
}

/// Linearization data of the rescaled system at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenData<T = f64> {
    pub lambda_minus: T,
    pub lambda_plus: T,
    pub v_minus: [T; 2],
    pub v_plus: [T; 2],
    /// `k2 / k1`; `None` when `k1 = 0`.
    pub alpha: Option<T>,
}

impl<T: Real> EigenData<T> {
    pub fn unit_v_minus(&self) -> [T; 2] {
        unit(self.v_minus)
    }

    pub fn unit_v_plus(&self) -> [T; 2] {
        unit(self.v_plus)
    }
}

fn unit<T: Real>(v: [T; 2]) -> [T; 2] {
    let n = v[0].hypot(v[1]);
    [v[0] / n, v[1] / n]
}

/// Jacobian `H` of the vector field at the origin.
pub fn jacobian_at_origin<T: Real>(k: [T; 2]) -> [[T; 2]; 2] {
    let [k1, k2] = k;
    [[k1 - k2, k1], [k2, k2 - k1]]
}

/// `sqrt(k1^2 + k2^2 - k1 k2)`, the modulus of both eigenvalues of `H`.
pub fn eigen_modulus<T: Real>(k: [T; 2]) -> T {
    let [k1, k2] = k;
    (k1 * k1 + k2 * k2 - k1 * k2).sqrt()
}

/// Eigen-decomposition of the origin's linearization.
///
/// For `k1 != 0` the eigenvectors are `(1, (k2 - k1 -+ r)/k1)`. For `k1 = 0`
/// the closed form is singular and a direct 2x2 solve is used, returning unit
/// vectors with non-negative second component.
pub fn linearization<T: Real>(k: [T; 2]) -> Result<([[T; 2]; 2], EigenData<T>)> {
    let [k1, k2] = k;
    if k1 == T::zero() && k2 == T::zero() {
        return Err(Error::ZeroSlopePair { index: 0 });
    }
    let h = jacobian_at_origin(k);
    let r = eigen_modulus(k);
    let data = if k1 != T::zero() {
        EigenData {
            lambda_minus: -r,
            lambda_plus: r,
            v_minus: [T::one(), (k2 - k1 - r) / k1],
            v_plus: [T::one(), (k2 - k1 + r) / k1],
            alpha: Some(k2 / k1),
        }
    } else {
        EigenData {
            lambda_minus: -r,
            lambda_plus: r,
            v_minus: eigenvector_2x2(h, -r),
            v_plus: eigenvector_2x2(h, r),
            alpha: None,
        }
    };
    Ok((h, data))
}

/// Unit eigenvector of a 2x2 matrix for a known real eigenvalue.
pub fn eigenvector_2x2<T: Real>(m: [[T; 2]; 2], lambda: T) -> [T; 2] {
    // rows of (M - lambda I) are both orthogonal to the eigenvector
    let a = [m[0][1], lambda - m[0][0]];
    let b = [lambda - m[1][1], m[1][0]];
    let mut v = if a[0].hypot(a[1]) >= b[0].hypot(b[1]) { a } else { b };
    if v[0] == T::zero() && v[1] == T::zero() {
        // M = lambda I: any direction works
        v = [T::one(), T::zero()];
    }
    let mut v = unit(v);
    if v[1] < T::zero() || (v[1] == T::zero() && v[0] < T::zero()) {
        v = [-v[0], -v[1]];
    }
    v
}

/// The four maps from the slope ratio `alpha = k2/k1` to eigendirection
/// slopes: `alpha - 1 -+ sqrt(alpha^2 - alpha + 1)` restricted by the sign of
/// `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DirectionMap {
    /// minus root, `alpha > 0`; range `]-2, -1/2[`
    GMinus,
    /// minus root, `alpha < 0`; range `]-inf, -2[`
    LowerGMinus,
    /// plus root, `alpha > 0`; range `]0, inf[`
    GPlus,
    /// plus root, `alpha < 0`; range `]-1/2, 0[`
    LowerGPlus,
}

impl DirectionMap {
    pub const ALL: [DirectionMap; 4] = [
        DirectionMap::GMinus,
        DirectionMap::LowerGMinus,
        DirectionMap::GPlus,
        DirectionMap::LowerGPlus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DirectionMap::GMinus => "G-",
            DirectionMap::LowerGMinus => "g-",
            DirectionMap::GPlus => "G+",
            DirectionMap::LowerGPlus => "g+",
        }
    }

    pub fn positive_domain(self) -> bool {
        matches!(self, DirectionMap::GMinus | DirectionMap::GPlus)
    }

    pub fn minus_root(self) -> bool {
        matches!(self, DirectionMap::GMinus | DirectionMap::LowerGMinus)
    }
}

pub fn direction_map<T: Real>(which: DirectionMap, alpha: T) -> Result<T> {
    let in_domain = if which.positive_domain() {
        alpha > T::zero()
    } else {
        alpha < T::zero()
    };
    if !in_domain || !alpha.is_finite() {
        return Err(Error::DomainViolation {
            map: which.name(),
            alpha: alpha.to_f64_lossy(),
        });
    }
    Ok(eigen_slope(alpha, which.minus_root()))
}

/// `alpha - 1 -+ sqrt(alpha^2 - alpha + 1)` for any real alpha.
///
/// The difference form cancels when the two terms nearly agree (minus root
/// for large positive alpha, plus root for alpha below 1); there the
/// conjugate `-alpha / (alpha - 1 +- sqrt(..))` is used instead.
pub fn eigen_slope<T: Real>(alpha: T, minus_root: bool) -> T {
    let one = T::one();
    let root = (alpha * alpha - alpha + one).sqrt();
    if minus_root {
        if alpha > one {
            -alpha / (alpha - one + root)
        } else {
            alpha - one - root
        }
    } else if alpha < one {
        -alpha / (alpha - one - root)
    } else {
        alpha - one + root
    }
}

/// Type of the equilibrium `K` of its own interval dynamics. The Jacobian
/// there has eigenvalues `-(k1 + k2) +- sqrt(k1 k2)`, complex when
/// `k1 k2 < 0`.
pub fn equilibrium_spectrum<T: Real>(k: [T; 2]) -> EquilibriumType {
    let tr = -(k[0] + k[1]);
    let prod = k[0] * k[1];
    let trf = tr.to_f64_lossy();
    if prod < T::zero() {
        if trf < 0.0 {
            EquilibriumType::StableFocus
        } else if trf > 0.0 {
            EquilibriumType::UnstableFocus
        } else {
            EquilibriumType::Center
        }
    } else {
        let spread = prod.sqrt().to_f64_lossy();
        let (lo, hi) = (trf - spread, trf + spread);
        if hi < 0.0 {
            EquilibriumType::StableNode
        } else if lo > 0.0 {
            EquilibriumType::UnstableNode
        } else {
            EquilibriumType::Saddle
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumType {
    StableNode,
    UnstableNode,
    StableFocus,
    UnstableFocus,
    Center,
    Saddle,
}

impl EquilibriumType {
    /// `K` attracts forward orbits.
    pub fn attracts_forward(self) -> bool {
        matches!(self, EquilibriumType::StableNode | EquilibriumType::StableFocus)
    }

    /// `K` attracts backward orbits.
    pub fn attracts_backward(self) -> bool {
        matches!(
            self,
            EquilibriumType::UnstableNode | EquilibriumType::UnstableFocus
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn delta_examples() {
        assert_eq!(capital_delta([0.0, 0.0]), 0.0);
        assert_eq!(capital_delta([1.0, 1.0]), 3.0);
        let l = lambda_matrix([1.0, 1.0]);
        assert_eq!(l[0][0] * l[1][1] - l[0][1] * l[1][0], 3.0);
        let d = capital_delta([1.0, -1.0]);
        assert_eq!(d, 1.0);
        assert!((1.0..=4.0).contains(&d));
    }

    #[test]
    fn vector_field_examples() {
        assert_eq!(vector_field([0.0, 0.0], [3.0, -2.0]), [0.0, 0.0]);
        assert_eq!(vector_field([1.5, -0.25], [1.5, -0.25]), [0.0, 0.0]);
        assert_eq!(vector_field([1.0, 0.0], [1.0, 1.0]), [-1.0, 1.0]);
    }

    #[test]
    fn linearization_unit_slopes() {
        let (_, e) = linearization([1.0, 1.0]).unwrap();
        assert_eq!(e.lambda_minus, -1.0);
        assert_eq!(e.lambda_plus, 1.0);
        assert_eq!(e.v_minus, [1.0, -1.0]);
        assert_eq!(e.v_plus, [1.0, 1.0]);
    }

    #[test]
    fn linearization_opposite_slopes() {
        let (h, e) = linearization([1.0, -1.0]).unwrap();
        let s3 = 3f64.sqrt();
        assert_abs_diff_eq!(e.lambda_plus, s3, epsilon = 1e-15);
        assert_abs_diff_eq!(e.v_minus[1], -2.0 - s3, epsilon = 1e-14);
        assert_abs_diff_eq!(e.v_plus[1], -2.0 + s3, epsilon = 1e-14);
        // cross-check with the generic solver
        let gm = eigenvector_2x2(h, -s3);
        assert_abs_diff_eq!(gm[1] / gm[0], e.v_minus[1], epsilon = 1e-12);
        let gp = eigenvector_2x2(h, s3);
        assert_abs_diff_eq!(gp[1] / gp[0], e.v_plus[1], epsilon = 1e-12);
    }

    #[test]
    fn linearization_vertical_slopes() {
        let (h, e) = linearization([0.0, 1.0]).unwrap();
        assert_eq!(h, [[-1.0, 0.0], [1.0, 1.0]]);
        assert_eq!(e.lambda_minus, -1.0);
        assert_eq!(e.lambda_plus, 1.0);
        assert_eq!(e.v_plus, [0.0, 1.0]);
        let s5 = 5f64.sqrt();
        assert_abs_diff_eq!(e.v_minus[0], -2.0 / s5, epsilon = 1e-15);
        assert_abs_diff_eq!(e.v_minus[1], 1.0 / s5, epsilon = 1e-15);
        assert!(e.alpha.is_none());
        assert_eq!(linearization([0.0, 0.0]), Err(Error::ZeroSlopePair { index: 0 }));
    }

    #[test]
    fn direction_map_values() {
        assert_eq!(direction_map(DirectionMap::GMinus, 1.0).unwrap(), -1.0);
        assert_eq!(direction_map(DirectionMap::GPlus, 1.0).unwrap(), 1.0);
        assert_abs_diff_eq!(direction_map(DirectionMap::GMinus, 1e-9).unwrap(), -2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(direction_map(DirectionMap::GPlus, 1e-9).unwrap(), 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(direction_map(DirectionMap::GMinus, 1e9).unwrap(), -0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(direction_map(DirectionMap::LowerGPlus, -1e9).unwrap(), -0.5, epsilon = 1e-6);
        assert!(matches!(
            direction_map(DirectionMap::GMinus, -1.0),
            Err(Error::DomainViolation { .. })
        ));
        assert!(direction_map(DirectionMap::LowerGPlus, 0.0).is_err());
    }

    #[test]
    fn equilibrium_types() {
        assert_eq!(equilibrium_spectrum([1.0, 2.0]), EquilibriumType::StableNode);
        assert_eq!(equilibrium_spectrum([-2.0, -1.0]), EquilibriumType::UnstableNode);
        assert_eq!(equilibrium_spectrum([-1.0, 2.0]), EquilibriumType::StableFocus);
        assert_eq!(equilibrium_spectrum([-2.0, 1.0]), EquilibriumType::UnstableFocus);
    }

    #[test]
    fn works_in_single_precision() {
        let d: f32 = capital_delta([1.0f32, 1.0]);
        assert_eq!(d, 3.0);
        let (_, e) = linearization([1.0f32, 1.0]).unwrap();
        assert_eq!(e.lambda_plus, 1.0f32);
    }
}
