//! Small fixed-rule quadrature helpers used for approximation error
//! measurements and cell averages.

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683,
    0.0,
    0.538_469_310_105_683,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Composite 5-point Gauss–Legendre on `[a, b]` with `panels` equal panels.
pub fn gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> f64 {
    if b <= a {
        return 0.0;
    }
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        let half = 0.5 * width;
        let mut acc = 0.0;
        for (node, weight) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
            acc += weight * f(mid + half * node);
        }
        total += acc * half;
    }
    total
}

/// Tensor midpoint rule over the box `[lo, hi]` with `per_axis` samples per axis.
pub fn midpoint_box<F: Fn(&[f64]) -> f64>(f: F, lo: &[f64], hi: &[f64], per_axis: usize) -> f64 {
    let dim = lo.len();
    let per_axis = per_axis.max(1);
    let mut volume = 1.0;
    for k in 0..dim {
        volume *= hi[k] - lo[k];
    }
    if volume <= 0.0 {
        return 0.0;
    }
    let total_points = per_axis.pow(dim as u32);
    let mut idx = vec![0usize; dim];
    let mut x = vec![0.0; dim];
    let mut acc = 0.0;
    for _ in 0..total_points {
        for k in 0..dim {
            let step = (hi[k] - lo[k]) / per_axis as f64;
            x[k] = lo[k] + (idx[k] as f64 + 0.5) * step;
        }
        acc += f(&x);
        for i in idx.iter_mut() {
            *i += 1;
            if *i < per_axis {
                break;
            }
            *i = 0;
        }
    }
    acc / total_points as f64 * volume
}
