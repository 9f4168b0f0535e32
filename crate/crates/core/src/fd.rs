//! Central finite differences with Richardson extrapolation.
//!
//! Used as an independent oracle for the jet and tape derivatives.

fn stencil(f: &dyn Fn(f64) -> f64, x: f64, order: usize, h: f64) -> f64 {
    match order {
        0 => f(x),
        1 => (f(x + h) - f(x - h)) / (2.0 * h),
        2 => (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h),
        3 => (f(x + 2.0 * h) - 2.0 * f(x + h) + 2.0 * f(x - h) - f(x - 2.0 * h)) / (2.0 * h * h * h),
        4 => {
            (f(x + 2.0 * h) - 4.0 * f(x + h) + 6.0 * f(x) - 4.0 * f(x - h) + f(x - 2.0 * h))
                / (h * h * h * h)
        }
        _ => panic!("finite differences only up to order 4"),
    }
}

/// `order`-th derivative of `f` at `x`.
///
/// The central stencils have even error expansions in `h`, so `levels`
/// rounds of Richardson extrapolation on `h, h/2, h/4, ..` cancel the
/// `h^2, h^4, ..` terms.
pub fn derivative(f: impl Fn(f64) -> f64, x: f64, order: usize, h: f64, levels: usize) -> f64 {
    let mut table: Vec<f64> = (0..=levels)
        .map(|i| stencil(&f, x, order, h / f64::powi(2.0, i as i32)))
        .collect();
    for level in 1..=levels {
        let factor = f64::powi(4.0, level as i32);
        for i in (level..=levels).rev() {
            table[i] = (factor * table[i] - table[i - 1]) / (factor - 1.0);
        }
    }
    table[levels]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_on_polynomials() {
        let f = |x: f64| 1.0 + x - 2.0 * x.powi(3) + 0.5 * x.powi(6);
        // f''' at 0.3 = -12 + 60 * 0.3^3
        let d3 = derivative(f, 0.3, 3, 0.1, 2);
        assert!((d3 - (-12.0 + 60.0 * 0.027)).abs() < 1e-9, "{d3}");
    }

    #[test]
    fn converges_on_smooth_functions() {
        for order in 1..=4 {
            let want = [0.5f64.cos(), -0.5f64.sin(), -0.5f64.cos(), 0.5f64.sin()][order - 1];
            let got = derivative(f64::sin, 0.5, order, 0.05, 3);
            assert!((got - want).abs() < 1e-8, "order {order}: {got} vs {want}");
        }
    }
}
