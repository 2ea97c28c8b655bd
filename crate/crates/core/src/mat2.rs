//! Fixed-size 2×2 helpers used by the cocycle integrators.

pub type Vec2 = [f64; 2];
pub type Mat2 = [[f64; 2]; 2];
/// `t[i][j][k] = ∂²f_i / ∂x_j ∂x_k`.
pub type Tensor2 = [[[f64; 2]; 2]; 2];

pub const IDENTITY: Mat2 = [[1.0, 0.0], [0.0, 1.0]];
pub const ZERO: Mat2 = [[0.0; 2]; 2];
pub const ZERO_T: Tensor2 = [[[0.0; 2]; 2]; 2];

pub fn det(a: &Mat2) -> f64 {
    a[0][0] * a[1][1] - a[0][1] * a[1][0]
}

pub fn trace(a: &Mat2) -> f64 {
    a[0][0] + a[1][1]
}

pub fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut c = ZERO;
    for i in 0..2 {
        for j in 0..2 {
            c[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    c
}

pub fn apply(a: &Mat2, v: &Vec2) -> Vec2 {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

pub fn transpose(a: &Mat2) -> Mat2 {
    [[a[0][0], a[1][0]], [a[0][1], a[1][1]]]
}

/// Inverse transpose through the adjugate, valid for any invertible matrix.
pub fn inv_transpose(a: &Mat2) -> Mat2 {
    let d = det(a);
    [[a[1][1] / d, -a[1][0] / d], [-a[0][1] / d, a[0][0] / d]]
}

pub fn inverse(a: &Mat2) -> Mat2 {
    transpose(&inv_transpose(a))
}

pub fn frobenius(a: &Mat2) -> f64 {
    (a[0][0].powi(2) + a[0][1].powi(2) + a[1][0].powi(2) + a[1][1].powi(2)).sqrt()
}

/// Largest singular value.
pub fn spectral_norm(a: &Mat2) -> f64 {
    let f2 = a[0][0].powi(2) + a[0][1].powi(2) + a[1][0].powi(2) + a[1][1].powi(2);
    let d = det(a).abs();
    let disc = (f2 * f2 - 4.0 * d * d).max(0.0).sqrt();
    ((f2 + disc) / 2.0).sqrt()
}

pub fn norm(v: &Vec2) -> f64 {
    v[0].hypot(v[1])
}

pub fn dot(a: &Vec2, b: &Vec2) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Rotation by +π/2: `v⊥ = (-v2, v1)`.
pub fn perp(v: &Vec2) -> Vec2 {
    [-v[1], v[0]]
}

/// Eigenvalues of a real 2×2 matrix as `(re, im)` pairs, larger real part first.
pub fn eigenvalues(a: &Mat2) -> [(f64, f64); 2] {
    let tr = trace(a);
    let d = det(a);
    let disc = tr * tr / 4.0 - d;
    if disc >= 0.0 {
        let r = disc.sqrt();
        [(tr / 2.0 + r, 0.0), (tr / 2.0 - r, 0.0)]
    } else {
        let r = (-disc).sqrt();
        [(tr / 2.0, r), (tr / 2.0, -r)]
    }
}

/// Unit eigenvector for a real eigenvalue `lambda`.
pub fn eigenvector(a: &Mat2, lambda: f64) -> Vec2 {
    let r0 = [a[0][0] - lambda, a[0][1]];
    let r1 = [a[1][0], a[1][1] - lambda];
    // Null vector of the row with the larger norm.
    let r = if norm(&r0) >= norm(&r1) { r0 } else { r1 };
    let v = [-r[1], r[0]];
    let n = norm(&v);
    if n == 0.0 {
        [1.0, 0.0]
    } else {
        [v[0] / n, v[1] / n]
    }
}

/// Bilinear map `B(v, w)` for a tensor stored as `t[i][j][k]`.
pub fn bilinear(t: &Tensor2, v: &Vec2, w: &Vec2) -> Vec2 {
    let mut out = [0.0; 2];
    for (i, o) in out.iter_mut().enumerate() {
        for j in 0..2 {
            for k in 0..2 {
                *o += t[i][j][k] * v[j] * w[k];
            }
        }
    }
    out
}

/// `sup_{|v|=|w|=1} |B(v, w)|` for a tensor symmetric in its last two slots.
///
/// For symmetric bilinear maps the supremum is attained on the diagonal,
/// so a one-dimensional search over `v = (cos θ, sin θ)` suffices.
pub fn symmetric_bilinear_norm(t: &Tensor2) -> f64 {
    let f = |th: f64| {
        let v = [th.cos(), th.sin()];
        norm(&bilinear(t, &v, &v))
    };
    let n = 128;
    let mut best = (0.0, 0.0);
    for i in 0..n {
        let th = std::f64::consts::PI * i as f64 / n as f64;
        let val = f(th);
        if val > best.1 {
            best = (th, val);
        }
    }
    // Golden-section polish around the best sample.
    let h = std::f64::consts::PI / n as f64;
    let (mut a, mut b) = (best.0 - h, best.0 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    for _ in 0..60 {
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
        c = b - g * (b - a);
        d = a + g * (b - a);
    }
    best.1.max(f(0.5 * (a + b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = [[3.0, 0.0], [0.0, -0.5]];
        assert!((spectral_norm(&a) - 3.0).abs() < 1e-14);
    }

    #[test]
    fn inv_transpose_roundtrip() {
        let a = [[2.0, 1.0], [0.5, 3.0]];
        let b = mul(&transpose(&inv_transpose(&a)), &a);
        for i in 0..2 {
            for j in 0..2 {
                assert!((b[i][j] - IDENTITY[i][j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn eigenvector_of_saddle() {
        let a = [[-1.0, 0.0], [0.0, 1.0]];
        let v = eigenvector(&a, -1.0);
        assert!((v[0].abs() - 1.0).abs() < 1e-14 && v[1].abs() < 1e-14);
    }

    #[test]
    fn bilinear_norm_diagonal_form() {
        // B(v,v) = (v1², 0): sup is 1 at v = e1.
        let mut t = ZERO_T;
        t[0][0][0] = 1.0;
        assert!((symmetric_bilinear_norm(&t) - 1.0).abs() < 1e-12);
    }
}
