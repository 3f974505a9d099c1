//! Adaptive Gauss–Kronrod (7/15) quadrature with deterministic bisection.

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728_0,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_DEPTH: u32 = 48;

/// One Kronrod panel: (estimate, error estimate). The error estimate never
/// drops below the rounding level of the panel, so tolerances finer than
/// the arithmetic can deliver stop refinement instead of recursing forever.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs = fc.abs() * WGK[7];
    for j in 0..7 {
        let dx = hw * XGK[j];
        let (l, r) = (f(c - dx), f(c + dx));
        kron += WGK[j] * (l + r);
        abs += WGK[j] * (l.abs() + r.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (l + r);
        }
    }
    let err = ((kron - gauss) * hw).abs();
    (kron * hw, err.max(ROUNDOFF * abs * hw.abs()))
}

/// Relative rounding level of one panel, in units of `∫|f|`.
const ROUNDOFF: f64 = 50.0 * f64::EPSILON;

fn recurse<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, whole: (f64, f64), depth: u32) -> f64 {
    let (est, err) = whole;
    if err <= tol || depth >= MAX_DEPTH || (b - a).abs() < 1e-15 * (1.0 + a.abs()) {
        return est;
    }
    let m = 0.5 * (a + b);
    let left = gk15(f, a, m);
    let right = gk15(f, m, b);
    // Accept if the refined pair agrees with the parent within tolerance.
    if left.1 + right.1 <= tol && (left.0 + right.0 - est).abs() <= 50.0 * tol {
        return left.0 + right.0;
    }
    // Splitting cannot help once both halves sit at the rounding floor.
    let at_floor = |p: (f64, f64)| p.1 <= 4.0 * ROUNDOFF * p.0.abs();
    if at_floor(left) && at_floor(right) {
        return left.0 + right.0;
    }
    recurse(f, a, m, 0.5 * tol, left, depth + 1) + recurse(f, m, b, 0.5 * tol, right, depth + 1)
}

/// Integrates `f` over `[a, b]` to absolute tolerance `tol`.
/// `b < a` yields the negated integral.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    if b < a {
        return -integrate(f, b, a, tol);
    }
    let whole = gk15(&f, a, b);
    recurse(&f, a, b, tol, whole, 0)
}

/// Fixed `k`-panel Gauss–Legendre (5-point) rule, used on smooth
/// piecewise data such as dense-output polynomials.
pub fn gauss_legendre_5<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683_1,
        0.0,
        0.538_469_310_105_683_1,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.236_926_885_056_189_1,
        0.478_628_670_499_366_5,
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
    ];
    let c = 0.5 * (a + b);
    let hw = 0.5 * (b - a);
    X.iter().zip(W.iter()).map(|(x, w)| w * f(c + hw * x)).sum::<f64>() * hw
}
