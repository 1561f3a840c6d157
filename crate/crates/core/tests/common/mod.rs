#![allow(dead_code)]

use ntc_core::{ControlArc, Piece, PiecewiseDensity1D};
use rand::Rng;

const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

fn field(arc: &ControlArc, x: &[f64]) -> Vec<f64> {
    let s: f64 = arc.a.iter().zip(x).map(|(a, v)| a * v).sum::<f64>() + arc.b;
    let s = s.max(0.0);
    arc.w.iter().map(|w| w * s).collect()
}

/// Adaptive Dormand–Prince 5(4) integration of `x' = w σ(⟨a,x⟩ + b)` over `[0, t]`.
pub fn rk45(arc: &ControlArc, x0: &[f64], t: f64, rtol: f64, atol: f64) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut time = 0.0;
    let mut h = (t / 100.0).max(1e-6);
    let mut k = vec![vec![0.0; n]; 7];
    while time < t {
        h = h.min(t - time);
        k[0] = field(arc, &x);
        let mut stage = vec![0.0; n];
        for s in 1..7 {
            for i in 0..n {
                stage[i] = x[i] + h * (0..s).map(|j| A[s - 1][j] * k[j][i]).sum::<f64>();
            }
            k[s] = field(arc, &stage);
        }
        let mut err: f64 = 0.0;
        let mut next = vec![0.0; n];
        for i in 0..n {
            let y5 = x[i] + h * (0..7).map(|j| B5[j] * k[j][i]).sum::<f64>();
            let y4 = x[i] + h * (0..7).map(|j| B4[j] * k[j][i]).sum::<f64>();
            let scale = atol + rtol * x[i].abs().max(y5.abs());
            err = err.max(((y5 - y4) / scale).abs());
            next[i] = y5;
        }
        if err <= 1.0 {
            time += h;
            x = next;
        }
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        h *= factor;
    }
    x
}

/// `k` disjoint random pieces inside `[lo, hi]` with total mass 1.
pub fn random_piecewise<R: Rng>(rng: &mut R, k: usize, lo: f64, hi: f64) -> PiecewiseDensity1D {
    let mut cuts: Vec<f64> = (0..2 * k).map(|_| rng.random_range(lo..hi)).collect();
    cuts.sort_by(f64::total_cmp);
    let mut pieces: Vec<Piece> = cuts
        .chunks(2)
        .filter(|c| c[1] - c[0] > 1e-3)
        .map(|c| Piece::new(c[0], c[1], rng.random_range(0.2..3.0)))
        .collect();
    if pieces.is_empty() {
        pieces.push(Piece::new(lo, hi, 1.0));
    }
    let p = PiecewiseDensity1D::new(pieces).unwrap();
    let m = p.mass();
    p.scaled(1.0 / m)
}
