//! Golden-section search for a local maximum on a bracket.

const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct GoldenMax {
    pub x: f64,
    pub fx: f64,
    pub converged: bool,
}

/// Maximizes `f` on `[a, b]` until the bracket is narrower than
/// `tol · max(1, |x|)`. The returned point is the best one evaluated, so the
/// result never falls below `f` at either bracket end when those are passed
/// in through `seed`.
pub(crate) fn maximize<E>(
    mut f: impl FnMut(f64) -> Result<f64, E>,
    mut a: f64,
    mut b: f64,
    tol: f64,
    max_iter: usize,
    seed: Option<(f64, f64)>,
) -> Result<GoldenMax, E> {
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let mut best = seed.unwrap_or((a, f64::NEG_INFINITY));
    let keep = |x: f64, fx: f64, best: &mut (f64, f64)| {
        if fx > best.1 {
            *best = (x, fx);
        }
    };
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    keep(c, fc, &mut best);
    keep(d, fd, &mut best);
    let mut converged = false;
    for _ in 0..max_iter {
        let width = b - a;
        if width <= tol * best.0.abs().max(1.0) {
            converged = true;
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c)?;
            keep(c, fc, &mut best);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d)?;
            keep(d, fd, &mut best);
        }
    }
    if !converged {
        converged = b - a <= tol * best.0.abs().max(1.0);
    }
    Ok(GoldenMax {
        x: best.0,
        fx: best.1,
        converged,
    })
}
