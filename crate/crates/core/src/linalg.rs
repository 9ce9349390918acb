//! Small fixed-size vector and symmetric-matrix helpers.

use std::ops::{Add, Div, Mul, Sub};

use serde::{Deserialize, Serialize};

pub type Vec3 = [f64; 3];

/// Temporal indicator `(0, 0, 1)`.
pub const E_T: Vec3 = [0.0, 0.0, 1.0];

#[inline]
pub fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn scale(a: Vec3, s: f64) -> Vec3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn add(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Cosine similarity; zero when either vector vanishes.
pub fn cosine(a: Vec3, b: Vec3) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

/// Flip `v` so that its temporal component is non-negative. When the temporal
/// component is exactly zero, the first nonzero coordinate is made positive.
pub fn redirect(v: Vec3) -> Vec3 {
    let flip = if v[2] != 0.0 {
        v[2] < 0.0
    } else if v[0] != 0.0 {
        v[0] < 0.0
    } else {
        v[1] < 0.0
    };
    if flip {
        [-v[0], -v[1], -v[2]]
    } else {
        v
    }
}

/// Symmetric 3×3 matrix stored as its six unique entries.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sym3 {
    pub xx: f64,
    pub yy: f64,
    pub tt: f64,
    pub xy: f64,
    pub xt: f64,
    pub yt: f64,
}

impl Sym3 {
    pub const ZERO: Sym3 = Sym3 {
        xx: 0.0,
        yy: 0.0,
        tt: 0.0,
        xy: 0.0,
        xt: 0.0,
        yt: 0.0,
    };

    pub fn new(xx: f64, yy: f64, tt: f64, xy: f64, xt: f64, yt: f64) -> Self {
        Sym3 {
            xx,
            yy,
            tt,
            xy,
            xt,
            yt,
        }
    }

    pub fn diag(a: f64, b: f64, c: f64) -> Self {
        Sym3::new(a, b, c, 0.0, 0.0, 0.0)
    }

    pub fn identity() -> Self {
        Sym3::diag(1.0, 1.0, 1.0)
    }

    /// Outer product `a aᵀ`.
    pub fn outer(a: Vec3) -> Self {
        Sym3::new(
            a[0] * a[0],
            a[1] * a[1],
            a[2] * a[2],
            a[0] * a[1],
            a[0] * a[2],
            a[1] * a[2],
        )
    }

    /// Symmetric matrix from a full row-major array; the upper triangle is used.
    pub fn from_rows(m: [[f64; 3]; 3]) -> Self {
        Sym3::new(m[0][0], m[1][1], m[2][2], m[0][1], m[0][2], m[1][2])
    }

    pub fn to_rows(&self) -> [[f64; 3]; 3] {
        [
            [self.xx, self.xy, self.xt],
            [self.xy, self.yy, self.yt],
            [self.xt, self.yt, self.tt],
        ]
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.tt
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.xx * self.xx
            + self.yy * self.yy
            + self.tt * self.tt
            + 2.0 * (self.xy * self.xy + self.xt * self.xt + self.yt * self.yt)
    }

    pub fn frobenius(&self) -> f64 {
        self.frobenius_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        [self.xx, self.yy, self.tt, self.xy, self.xt, self.yt]
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        [self.xx, self.yy, self.tt, self.xy, self.xt, self.yt]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn mul_vec(&self, v: Vec3) -> Vec3 {
        [
            self.xx * v[0] + self.xy * v[1] + self.xt * v[2],
            self.xy * v[0] + self.yy * v[1] + self.yt * v[2],
            self.xt * v[0] + self.yt * v[1] + self.tt * v[2],
        ]
    }

    /// Quadratic form `vᵀ A v`.
    pub fn quad(&self, v: Vec3) -> f64 {
        dot(v, self.mul_vec(v))
    }

    pub fn shifted(&self, s: f64) -> Self {
        Sym3 {
            xx: self.xx - s,
            yy: self.yy - s,
            tt: self.tt - s,
            ..*self
        }
    }
}

impl Add for Sym3 {
    type Output = Sym3;
    fn add(self, o: Sym3) -> Sym3 {
        Sym3::new(
            self.xx + o.xx,
            self.yy + o.yy,
            self.tt + o.tt,
            self.xy + o.xy,
            self.xt + o.xt,
            self.yt + o.yt,
        )
    }
}

impl Sub for Sym3 {
    type Output = Sym3;
    fn sub(self, o: Sym3) -> Sym3 {
        Sym3::new(
            self.xx - o.xx,
            self.yy - o.yy,
            self.tt - o.tt,
            self.xy - o.xy,
            self.xt - o.xt,
            self.yt - o.yt,
        )
    }
}

impl Mul<f64> for Sym3 {
    type Output = Sym3;
    fn mul(self, s: f64) -> Sym3 {
        Sym3::new(
            self.xx * s,
            self.yy * s,
            self.tt * s,
            self.xy * s,
            self.xt * s,
            self.yt * s,
        )
    }
}

impl Div<f64> for Sym3 {
    type Output = Sym3;
    fn div(self, s: f64) -> Sym3 {
        Sym3::new(
            self.xx / s,
            self.yy / s,
            self.tt / s,
            self.xy / s,
            self.xt / s,
            self.yt / s,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn redirect_is_idempotent() {
        for v in [[0.3, -0.1, -0.9], [-1.0, 0.0, 0.0], [0.0, -2.0, 0.0], [0.0, 0.0, 0.0]] {
            let once = redirect(v);
            assert_eq!(redirect(once), once);
            assert!(once[2] >= 0.0);
        }
        assert_eq!(redirect([-1.0, 2.0, 0.0]), [1.0, -2.0, 0.0]);
    }

    #[test]
    fn cosine_ignores_positive_scale() {
        let a = [0.3, -1.2, 0.7];
        let b = [2.0, 0.1, -0.4];
        let c = cosine(a, b);
        assert!((cosine(scale(a, 17.0), scale(b, 0.02)) - c).abs() < 1e-15);
        assert_eq!(cosine([0.0; 3], b), 0.0);
    }

    #[test]
    fn frobenius_counts_off_diagonals_twice() {
        let m = Sym3::new(1.0, 2.0, 3.0, 1.0, 1.0, 1.0);
        assert_eq!(m.frobenius_sq(), 1.0 + 4.0 + 9.0 + 6.0);
    }
}
