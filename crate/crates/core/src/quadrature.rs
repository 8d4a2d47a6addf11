//! Gauss–Legendre quadrature on the unit interval.

use std::f64::consts::PI;

/// Nodes and weights of the `order`-point Gauss–Legendre rule on `[0, 1]`.
pub fn gauss_legendre_unit(order: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(order >= 1);
    let mut nodes = vec![0.0; order];
    let mut weights = vec![0.0; order];
    let m = order.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess, then Newton on P_order.
        let mut x = (PI * (i as f64 + 0.75) / (order as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(order, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(order, x);
        if d != 0.0 {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // map [-1, 1] -> [0, 1]
        nodes[i] = 0.5 * (1.0 - x);
        nodes[order - 1 - i] = 0.5 * (1.0 + x);
        weights[i] = 0.5 * w;
        weights[order - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

fn legendre(order: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=order {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if order == 0 {
        return (1.0, 0.0);
    }
    let dp = order as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `∫₀¹ f` with the `order`-point rule.
pub fn integrate_unit(f: impl Fn(f64) -> f64, order: usize) -> f64 {
    let (nodes, weights) = gauss_legendre_unit(order);
    nodes.iter().zip(&weights).map(|(&x, &w)| w * f(x)).sum()
}

/// `∫₀¹ f`, doubling the order from 16 until two successive values differ by
/// less than `tol` (relative to `max(1, |I|)`) or `max_order` is reached.
pub fn integrate_unit_converged(f: impl Fn(f64) -> f64, tol: f64, max_order: usize) -> f64 {
    let mut order = 16;
    let mut prev = integrate_unit(&f, order);
    while order < max_order {
        order *= 2;
        let next = integrate_unit(&f, order);
        if (next - prev).abs() < tol * next.abs().max(1.0) {
            return next;
        }
        prev = next;
    }
    prev
}
