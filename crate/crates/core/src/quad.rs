//! Adaptive 7-point Gauss-Legendre quadrature for vector-valued integrands.

const NODES: [f64; 7] = [
    -0.949_107_912_342_758_5,
    -0.741_531_185_599_394_4,
    -0.405_845_151_377_397_2,
    0.0,
    0.405_845_151_377_397_2,
    0.741_531_185_599_394_4,
    0.949_107_912_342_758_5,
];

const WEIGHTS: [f64; 7] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
    0.381_830_050_505_118_9,
    0.279_705_391_489_276_7,
    0.129_484_966_168_869_7,
];

const MAX_DEPTH: u32 = 40;

fn rule<F: FnMut(f64, &mut [f64])>(
    f: &mut F,
    a: f64,
    b: f64,
    scratch: &mut [f64],
    out: &mut [f64],
) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    out.iter_mut().for_each(|o| *o = 0.0);
    for (x, w) in NODES.iter().zip(WEIGHTS) {
        f(c + h * x, scratch);
        for (o, s) in out.iter_mut().zip(scratch.iter()) {
            *o += w * h * s;
        }
    }
}

/// Integrates each component of `f` over `[a, b]`, bisecting until a
/// panel and its two halves agree to `abs_tol` in every component.
/// `f(t, out)` writes the integrand values at `t` into `out`.
pub(crate) fn integrate_vec<F: FnMut(f64, &mut [f64])>(
    mut f: F,
    a: f64,
    b: f64,
    len: usize,
    panels: usize,
    abs_tol: f64,
) -> Vec<f64> {
    let mut total = vec![0.0; len];
    let mut scratch = vec![0.0; len];
    let width = (b - a) / panels as f64;
    for p in 0..panels {
        let lo = a + p as f64 * width;
        let hi = if p + 1 == panels { b } else { lo + width };
        let mut whole = vec![0.0; len];
        rule(&mut f, lo, hi, &mut scratch, &mut whole);
        refine(
            &mut f,
            lo,
            hi,
            whole,
            abs_tol / panels as f64,
            0,
            &mut scratch,
            &mut total,
        );
    }
    total
}

#[allow(clippy::too_many_arguments)]
fn refine<F: FnMut(f64, &mut [f64])>(
    f: &mut F,
    a: f64,
    b: f64,
    whole: Vec<f64>,
    tol: f64,
    depth: u32,
    scratch: &mut [f64],
    total: &mut [f64],
) {
    let m = 0.5 * (a + b);
    let mut left = vec![0.0; whole.len()];
    let mut right = vec![0.0; whole.len()];
    rule(f, a, m, scratch, &mut left);
    rule(f, m, b, scratch, &mut right);
    let err = whole
        .iter()
        .zip(left.iter().zip(&right))
        .map(|(w, (l, r))| (w - l - r).abs())
        .fold(0.0, f64::max);
    if err <= tol || depth >= MAX_DEPTH {
        for (t, (l, r)) in total.iter_mut().zip(left.iter().zip(&right)) {
            *t += l + r;
        }
    } else {
        refine(f, a, m, left, 0.5 * tol, depth + 1, scratch, total);
        refine(f, m, b, right, 0.5 * tol, depth + 1, scratch, total);
    }
}
