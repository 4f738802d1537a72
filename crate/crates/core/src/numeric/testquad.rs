//! Adaptive Simpson quadrature, compiled only for tests. Serves as an
//! integration oracle independent of the FFT convolution path.

fn simpson(a: f64, b: f64, fa: f64, fb: f64, fm: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adaptive(
    f: &impl Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fb: f64,
    fm: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let flm = f(0.5 * (a + m));
    let frm = f(0.5 * (m + b));
    let left = simpson(a, m, fa, fm, flm);
    let right = simpson(m, b, fm, fb, frm);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    adaptive(f, a, m, fa, fm, flm, left, tol / 2.0, depth - 1)
        + adaptive(f, m, b, fm, fb, frm, right, tol / 2.0, depth - 1)
}

pub(crate) fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = simpson(a, b, fa, fb, fm);
    adaptive(&f, a, b, fa, fb, fm, whole, tol, 40)
}
