//! Small quadrature and fitting utilities.

/// Trapezoid weights for `n` equispaced samples with spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => {
            let mut w = vec![h; n];
            w[0] = 0.5 * h;
            w[n - 1] = 0.5 * h;
            w
        }
    }
}

/// Composite trapezoid rule on equispaced samples.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    trapezoid_weights(values.len(), h)
        .iter()
        .zip(values)
        .map(|(w, v)| w * v)
        .sum()
}

/// Least-squares slope of `ys` against `xs`.
pub fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    if sxx == 0.0 {
        0.0
    } else {
        sxy / sxx
    }
}

/// Least-squares slope restricted to samples with `x ≥ x_min`.
pub fn ls_slope_from(xs: &[f64], ys: &[f64], x_min: f64) -> f64 {
    let (a, b): (Vec<f64>, Vec<f64>) = xs
        .iter()
        .zip(ys)
        .filter(|(x, _)| **x >= x_min - 1e-12)
        .map(|(x, y)| (*x, *y))
        .unzip();
    ls_slope(&a, &b)
}

/// Strictly decreasing sequence.
pub fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_exact_for_linear() {
        let h = 0.1;
        let v: Vec<f64> = (0..11).map(|i| 2.0 * i as f64 * h + 1.0).collect();
        assert!((trapezoid(&v, h) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn slope_of_line() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 1.0).collect();
        assert!((ls_slope(&xs, &ys) - 3.0).abs() < 1e-12);
        assert!((ls_slope_from(&xs, &ys, 5.0) - 3.0).abs() < 1e-12);
    }
}
