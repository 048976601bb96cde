//! Small dense linear-algebra and angle helpers used by the kinematic core.

use crate::scalar::Real;

/// Point or vector in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point2<R> {
    pub x: R,
    pub y: R,
}

impl<R: Real> Point2<R> {
    pub fn new(x: R, y: R) -> Self {
        Self { x, y }
    }

    pub fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: R) -> Self {
        Self::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Self) -> R {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 2D cross product `self × o`.
    pub fn cross(self, o: Self) -> R {
        self.x * o.y - self.y * o.x
    }

    pub fn norm_sq(self) -> R {
        self.dot(self)
    }

    pub fn norm(self) -> R {
        self.norm_sq().sqrt()
    }

    /// Counterclockwise perpendicular.
    pub fn perp(self) -> Self {
        Self::new(-self.y, self.x)
    }
}

/// Row-major 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat3<R> {
    pub m: [[R; 3]; 3],
}

impl<R: Real> Mat3<R> {
    pub fn new(m: [[R; 3]; 3]) -> Self {
        Self { m }
    }

    pub fn zeros() -> Self {
        Self::new([[R::zero(); 3]; 3])
    }

    pub fn det(&self) -> R {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Solves `self * x = b` by Gaussian elimination with partial pivoting.
    /// Returns `None` when a pivot vanishes.
    pub fn solve(&self, b: [R; 3]) -> Option<[R; 3]> {
        let mut a = self.m;
        let mut rhs = b;
        for col in 0..3 {
            let mut pivot = col;
            for row in col + 1..3 {
                if a[row][col].abs() > a[pivot][col].abs() {
                    pivot = row;
                }
            }
            if a[pivot][col] == R::zero() {
                return None;
            }
            a.swap(col, pivot);
            rhs.swap(col, pivot);
            for row in col + 1..3 {
                let f = a[row][col] / a[col][col];
                for k in col..3 {
                    a[row][k] = a[row][k] - f * a[col][k];
                }
                rhs[row] = rhs[row] - f * rhs[col];
            }
        }
        let mut x = [R::zero(); 3];
        for col in (0..3).rev() {
            let mut s = rhs[col];
            for k in col + 1..3 {
                s = s - a[col][k] * x[k];
            }
            x[col] = s / a[col][col];
        }
        Some(x)
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle<R: Real>(phi: R) -> R {
    let two_pi = R::PI() + R::PI();
    let mut t = (phi + R::PI()) % two_pi;
    if t < R::zero() {
        t = t + two_pi;
    }
    let w = t - R::PI();
    // Guard against `t == two_pi` after rounding.
    if w >= R::PI() {
        -R::PI()
    } else {
        w
    }
}

/// Absolute angular separation under wrap, in `[0, pi]`.
pub fn angle_distance<R: Real>(a: R, b: R) -> R {
    wrap_angle(a - b).abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn det_matches_triangular_product() {
        let m = Mat3::new([[2.0, 1.0, 0.5], [0.0, 3.0, -1.0], [0.0, 0.0, -4.0]]);
        assert_relative_eq!(m.det(), -24.0, max_relative = 1e-15);
    }

    #[test]
    fn solve_recovers_known_vector() {
        let m = Mat3::new([[4.0, 1.0, 2.0], [1.0, 5.0, -1.0], [2.0, -1.0, 6.0]]);
        let x = [1.5, -2.0, 0.25];
        let b = [
            m.m[0][0] * x[0] + m.m[0][1] * x[1] + m.m[0][2] * x[2],
            m.m[1][0] * x[0] + m.m[1][1] * x[1] + m.m[1][2] * x[2],
            m.m[2][0] * x[0] + m.m[2][1] * x[1] + m.m[2][2] * x[2],
        ];
        let got = m.solve(b).unwrap();
        for i in 0..3 {
            assert_relative_eq!(got[i], x[i], max_relative = 1e-12);
        }
    }

    #[test]
    fn singular_matrix_reports_no_solution() {
        let m = Mat3::new([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 1.0, 1.0]]);
        assert!(m.solve([1.0, 2.0, 3.0]).is_none());
    }

    #[test]
    fn wrap_angle_half_open_interval() {
        assert_eq!(wrap_angle(std::f64::consts::PI), -std::f64::consts::PI);
        assert_eq!(wrap_angle(-std::f64::consts::PI), -std::f64::consts::PI);
        assert_relative_eq!(wrap_angle(3.0 * std::f64::consts::PI / 2.0), -std::f64::consts::PI / 2.0);
    }

    proptest! {
        #[test]
        fn wrap_angle_is_idempotent_and_in_range(phi in -50.0f64..50.0) {
            let w = wrap_angle(phi);
            prop_assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&w));
            prop_assert_eq!(wrap_angle(w), w);
            // Same point on the circle.
            let d = (phi - w) / (2.0 * std::f64::consts::PI);
            prop_assert!((d - d.round()).abs() < 1e-9);
        }
    }
}
