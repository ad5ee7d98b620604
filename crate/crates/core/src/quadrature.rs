//! Small numerical helpers shared by the kernel, source and entropy code:
//! fixed-order Gauss–Legendre, an adaptive wrapper around it, and a
//! golden-section maximiser.

const GL8_NODES: [f64; 4] = [
    0.183_434_642_495_649_8,
    0.525_532_409_916_329,
    0.796_666_477_413_626_7,
    0.960_289_856_497_536_3,
];
const GL8_WEIGHTS: [f64; 4] = [
    0.362_683_783_378_362,
    0.313_706_645_877_887_3,
    0.222_381_034_453_374_5,
    0.101_228_536_290_376_3,
];

/// Eight-point Gauss–Legendre rule on `[a, b]`. Exact for polynomials of
/// degree 15.
pub fn gauss_legendre8<F: FnMut(f64) -> f64>(a: f64, b: f64, mut f: F) -> f64 {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut acc = 0.0;
    for (node, weight) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()) {
        acc += weight * (f(mid - half * node) + f(mid + half * node));
    }
    acc * half
}

/// Nodes of the eight-point rule mapped to `[a, b]`, paired with weights.
pub fn gauss_legendre8_nodes(a: f64, b: f64) -> [(f64, f64); 8] {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let mut out = [(0.0, 0.0); 8];
    for (k, (node, weight)) in GL8_NODES.iter().zip(GL8_WEIGHTS.iter()).enumerate() {
        out[2 * k] = (mid - half * node, weight * half);
        out[2 * k + 1] = (mid + half * node, weight * half);
    }
    out
}

/// Adaptive bisection around [`gauss_legendre8`]: a panel is accepted once
/// the two-halves estimate changes the whole-panel estimate by less than
/// `rel_tol` relative (or `abs_tol` absolute).
pub fn adaptive_gauss_legendre<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    f: &mut F,
) -> f64 {
    if b <= a {
        return 0.0;
    }
    let whole = gauss_legendre8(a, b, &mut *f);
    adaptive_step(a, b, whole, rel_tol, abs_tol, 0, f)
}

const MAX_DEPTH: usize = 40;

fn adaptive_step<F: FnMut(f64) -> f64>(
    a: f64,
    b: f64,
    whole: f64,
    rel_tol: f64,
    abs_tol: f64,
    depth: usize,
    f: &mut F,
) -> f64 {
    let mid = 0.5 * (a + b);
    let left = gauss_legendre8(a, mid, &mut *f);
    let right = gauss_legendre8(mid, b, &mut *f);
    let refined = left + right;
    let change = (refined - whole).abs();
    if depth >= MAX_DEPTH || change <= abs_tol || change <= rel_tol * refined.abs() {
        return refined;
    }
    adaptive_step(a, mid, left, rel_tol, abs_tol * 0.5, depth + 1, f)
        + adaptive_step(mid, b, right, rel_tol, abs_tol * 0.5, depth + 1, f)
}

/// Golden-section search for a maximiser of a unimodal `f` on `[a, b]`.
/// Returns `(argmax, max)`.
pub fn golden_section_max<F: FnMut(f64) -> f64>(
    mut a: f64,
    mut b: f64,
    tol: f64,
    mut f: F,
) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    let fx = f(x);
    // endpoints of the last bracket can beat the midpoint on flat tops
    [(x, fx), (c, fc), (d, fd)]
        .into_iter()
        .fold((x, fx), |best, cand| if cand.1 > best.1 { cand } else { best })
}
