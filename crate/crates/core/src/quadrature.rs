//! Composite Simpson quadrature.

/// Panel count used for closed-form evaluations.
pub const SIMPSON_PANELS: usize = 10_000;

/// Composite Simpson rule with `panels` (rounded up to even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if a == b {
        return 0.0;
    }
    let n = (panels.max(2) + 1) & !1;
    let h = (b - a) / n as f64;
    let mut odd = 0.0;
    let mut even = 0.0;
    for k in 1..n {
        let v = f(a + h * k as f64);
        if k % 2 == 1 {
            odd += v;
        } else {
            even += v;
        }
    }
    h / 3.0 * (f(a) + f(b) + 4.0 * odd + 2.0 * even)
}

/// Nodes `x_k = a + k (b - a) / n` and the running integrals
/// `int_a^{x_k} f`, each interval integrated by Simpson's rule on its midpoint.
pub fn cumulative<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let n = n.max(1);
    let h = (b - a) / n as f64;
    let nodes: Vec<f64> = (0..=n).map(|k| if k == n { b } else { a + h * k as f64 }).collect();
    let mut acc = Vec::with_capacity(n + 1);
    acc.push(0.0);
    let mut left = f(a);
    let mut total = 0.0;
    for k in 0..n {
        let right = f(nodes[k + 1]);
        let mid = f(0.5 * (nodes[k] + nodes[k + 1]));
        total += (nodes[k + 1] - nodes[k]) / 6.0 * (left + 4.0 * mid + right);
        acc.push(total);
        left = right;
    }
    (nodes, acc)
}
