//! Small numerical helpers: stable log-sum-exp and 1-D quadrature.

/// `ln Σ exp(x_i)`; `-∞` for an empty slice or when every term is `-∞`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return max;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `ln((1/n) Σ exp(x_i))`; `-∞` for an empty slice.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NEG_INFINITY;
    }
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// Trapezoid rule over `n` equal intervals of `[a, b]`.
pub fn trapezoid<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n >= 1, "trapezoid needs at least one interval");
    let h = (b - a) / n as f64;
    let mut sum = 0.5 * (f(a) + f(b));
    for i in 1..n {
        sum += f(a + i as f64 * h);
    }
    sum * h
}

const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd-indexed Kronrod nodes.
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Gauss–Kronrod 7/15 on `[a, b]`: (estimate, error estimate).
fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = KRONROD_WEIGHTS[7] * fc;
    let mut gauss = GAUSS_WEIGHTS[3] * fc;
    for i in 0..7 {
        let dx = h * KRONROD_NODES[i];
        let pair = f(c - dx) + f(c + dx);
        kronrod += KRONROD_WEIGHTS[i] * pair;
        if i % 2 == 1 {
            gauss += GAUSS_WEIGHTS[i / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

fn adaptive<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let (est, err) = gk15(f, a, b);
    if err <= tol || depth == 0 {
        return est;
    }
    let m = 0.5 * (a + b);
    adaptive(f, a, m, 0.5 * tol, depth - 1) + adaptive(f, m, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss–Kronrod integral of `f` over `[a, b]`; either bound may be infinite.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> f64 {
    const DEPTH: u32 = 40;
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive(&mut f, a, b, tol, DEPTH),
        // x = a + t/(1-t), t ∈ [0, 1)
        (true, false) => {
            let mut g = |t: f64| {
                let s = 1.0 - t;
                if s <= 0.0 {
                    0.0
                } else {
                    f(a + t / s) / (s * s)
                }
            };
            adaptive(&mut g, 0.0, 1.0, tol, DEPTH)
        }
        // x = b - t/(1-t)
        (false, true) => {
            let mut g = |t: f64| {
                let s = 1.0 - t;
                if s <= 0.0 {
                    0.0
                } else {
                    f(b - t / s) / (s * s)
                }
            };
            adaptive(&mut g, 0.0, 1.0, tol, DEPTH)
        }
        // x = t/(1-t²), t ∈ (-1, 1)
        (false, false) => {
            let mut g = |t: f64| {
                let s = 1.0 - t * t;
                if s <= 0.0 {
                    0.0
                } else {
                    f(t / s) * (1.0 + t * t) / (s * s)
                }
            };
            adaptive(&mut g, -1.0, 0.0, 0.5 * tol, DEPTH)
                + adaptive(&mut g, 0.0, 1.0, 0.5 * tol, DEPTH)
        }
    }
}
