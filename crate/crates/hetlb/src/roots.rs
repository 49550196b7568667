//! Safeguarded Newton iteration with bisection fallback.

/// Root of `f` in `[a, b]` where `f(a)` and `f(b)` have opposite signs (or
/// one is zero). `fd` returns `(f(x), f'(x))`. Newton steps that leave the
/// current bracket, or fail to halve it, are replaced by bisection.
///
/// Returns `None` when the endpoints do not bracket a root.
pub fn newton_bisect<F>(mut fd: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64>
where
    F: FnMut(f64) -> (f64, f64),
{
    let (fa, _) = fd(a);
    let (fb, _) = fd(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    // orient so that f(a) < 0 < f(b)
    if fa > 0.0 {
        std::mem::swap(&mut a, &mut b);
    }
    let mut x = 0.5 * (a + b);
    let mut width = (b - a).abs();
    for _ in 0..200 {
        let (fx, dfx) = fd(x);
        if fx == 0.0 {
            return Some(x);
        }
        if fx < 0.0 {
            a = x;
        } else {
            b = x;
        }
        let lo = a.min(b);
        let hi = a.max(b);
        let newton = x - fx / dfx;
        let step_ok = dfx != 0.0 && newton.is_finite() && newton > lo && newton < hi;
        let next = if step_ok && (newton - x).abs() < 0.5 * width { newton } else { 0.5 * (a + b) };
        width = (next - x).abs();
        x = next;
        if (hi - lo) <= tol * (1.0 + x.abs()) || width <= 0.25 * tol * (1.0 + x.abs()) {
            return Some(x);
        }
    }
    Some(x)
}
