//! Truncated Taylor arithmetic for exact derivatives of the smooth cut-off
//! functions used by the bump profiles.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Number of Taylor coefficients carried (derivatives up to order 5).
pub const ORDER: usize = 6;

/// `c[n] = f^{(n)}(x₀) / n!`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub c: [f64; ORDER],
}

impl Jet {
    pub fn constant(v: f64) -> Jet {
        let mut c = [0.0; ORDER];
        c[0] = v;
        Jet { c }
    }

    /// The independent variable at `x0`.
    pub fn variable(x0: f64) -> Jet {
        let mut c = [0.0; ORDER];
        c[0] = x0;
        if ORDER > 1 {
            c[1] = 1.0;
        }
        Jet { c }
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// n-th derivative at the expansion point.
    pub fn derivative(&self, n: usize) -> f64 {
        let mut f = 1.0;
        for i in 2..=n {
            f *= i as f64;
        }
        self.c[n] * f
    }

    pub fn scale(self, a: f64) -> Jet {
        let mut c = self.c;
        c.iter_mut().for_each(|v| *v *= a);
        Jet { c }
    }

    pub fn exp(self) -> Jet {
        // y' = y·x'  ⇒  n y_n = Σ_{k=1}^{n} k x_k y_{n-k}
        let mut y = [0.0; ORDER];
        y[0] = self.c[0].exp();
        for n in 1..ORDER {
            let mut s = 0.0;
            for k in 1..=n {
                s += k as f64 * self.c[k] * y[n - k];
            }
            y[n] = s / n as f64;
        }
        Jet { c: y }
    }

    pub fn recip(self) -> Jet {
        let mut y = [0.0; ORDER];
        y[0] = 1.0 / self.c[0];
        for n in 1..ORDER {
            let mut s = 0.0;
            for k in 1..=n {
                s += self.c[k] * y[n - k];
            }
            y[n] = -s / self.c[0];
        }
        Jet { c: y }
    }

    pub fn powi(self, p: u32) -> Jet {
        let mut r = Jet::constant(1.0);
        for _ in 0..p {
            r = r * self;
        }
        r
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        let mut c = self.c;
        for (a, b) in c.iter_mut().zip(o.c) {
            *a += b;
        }
        Jet { c }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self + (-o)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-1.0)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        let mut c = [0.0; ORDER];
        for i in 0..ORDER {
            for j in 0..ORDER - i {
                c[i + j] += self.c[i] * o.c[j];
            }
        }
        Jet { c }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, o: Jet) -> Jet {
        self * o.recip()
    }
}

/// `e^{-1/x}` for `x > 0`, extended by zero (flat to all orders at 0).
pub fn flat_exp(x: Jet) -> Jet {
    if x.value() <= 0.0 {
        Jet::constant(0.0)
    } else {
        (-(x.recip())).exp()
    }
}

/// C^∞ step: 0 for `x ≤ 0`, 1 for `x ≥ 1`, with `S(x) + S(1-x) = 1`.
pub fn smooth_step(x: Jet) -> Jet {
    let v = x.value();
    if v <= 0.0 {
        Jet::constant(0.0)
    } else if v >= 1.0 {
        Jet::constant(1.0)
    } else {
        let a = flat_exp(x);
        let b = flat_exp(Jet::constant(1.0) - x);
        a / (a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exp_derivatives() {
        let j = Jet::variable(0.3).scale(2.0).exp();
        for n in 0..ORDER {
            let expect = 2f64.powi(n as i32) * (0.6f64).exp();
            assert!((j.derivative(n) - expect).abs() < 1e-12 * expect.abs().max(1.0));
        }
    }

    #[test]
    fn smooth_step_symmetry_and_derivative() {
        for &x in &[0.1, 0.37, 0.5, 0.8] {
            let a = smooth_step(Jet::variable(x));
            let b = smooth_step(Jet::variable(1.0 - x));
            assert!((a.value() + b.value() - 1.0).abs() < 1e-14);
            let h = 1e-5;
            let fd = (smooth_step(Jet::constant(x + h)).value()
                - smooth_step(Jet::constant(x - h)).value())
                / (2.0 * h);
            assert!((a.derivative(1) - fd).abs() < 1e-8);
        }
    }
}
