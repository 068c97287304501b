//! Adaptive Gauss–Kronrod (7/15) quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

const MAX_SEGMENTS: usize = 10_000;

// Kronrod nodes on [0, 1] (the symmetric half), weights, and the embedded
// 7-point Gauss weights for the odd-indexed nodes.
const XK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = half * XK[i];
        let pair = f(center - dx) + f(center + dx);
        kronrod += WK[i] * pair;
        if i % 2 == 1 {
            gauss += WG[i / 2] * pair;
        }
    }
    Segment { a, b, value: kronrod * half, error: ((kronrod - gauss) * half).abs() }
}

/// `∫_a^b f` to relative tolerance `rtol`, bisecting the worst segment.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rtol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::invalid(format!("bad integration interval [{a}, {b}]")));
    }
    if a == b {
        return Ok(0.0);
    }
    let first = gauss_kronrod(&f, a, b);
    let mut heap = BinaryHeap::from([first]);
    let (mut total, mut error) = (first.value, first.error);
    while error > rtol * total.abs() && error > f64::MIN_POSITIVE {
        if heap.len() >= MAX_SEGMENTS {
            return Err(Error::Numerical(format!(
                "quadrature did not reach rtol {rtol:e}: estimate {total}, error {error:e}"
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        let left = gauss_kronrod(&f, worst.a, mid);
        let right = gauss_kronrod(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
    }
    if !total.is_finite() {
        return Err(Error::Numerical("quadrature produced a non-finite value".into()));
    }
    // re-sum to shed accumulated cancellation in the running total
    Ok(heap.iter().map(|s| s.value).sum())
}

/// `∫_a^∞ f` for `a > 0`, via `u = a·e^s` then `s = t / (1 − t)`, which
/// turns algebraic tails into exponentially decaying ones.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, rtol: f64) -> Result<f64> {
    if !(a > 0.0) {
        return Err(Error::invalid("integrate_to_infinity needs a positive lower limit"));
    }
    let g = |t: f64| {
        if t >= 1.0 {
            return 0.0;
        }
        let s = t / (1.0 - t);
        let u = a * s.exp();
        if !u.is_finite() {
            return 0.0;
        }
        let v = f(u) * u / ((1.0 - t) * (1.0 - t));
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(g, 0.0, 1.0, rtol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomials_and_smooth_functions() {
        let v = integrate(|x| x * x, 0.0, 3.0, 1e-12).unwrap();
        assert!((v - 9.0).abs() < 1e-12);
        let v = integrate(f64::sin, 0.0, PI, 1e-12).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
        assert_eq!(integrate(f64::exp, 1.0, 1.0, 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn infinite_ranges() {
        let v = integrate_to_infinity(|u| 1.0 / (1.0 + u * u), 1.0, 1e-10).unwrap();
        assert!((v - PI / 4.0).abs() < 1e-9);
        let v = integrate_to_infinity(|u| (-u).exp(), 2.0, 1e-10).unwrap();
        assert!((v - (-2.0f64).exp()).abs() < 1e-10);
        // slow algebraic tail u^{-1.2}
        let v = integrate_to_infinity(|u| u.powf(-1.2), 1.0, 1e-9).unwrap();
        assert!((v - 5.0).abs() < 1e-7);
    }

    #[test]
    fn rejects_bad_intervals() {
        assert!(integrate(|x| x, 1.0, 0.0, 1e-8).is_err());
        assert!(integrate_to_infinity(|x| x, 0.0, 1e-8).is_err());
    }
}
