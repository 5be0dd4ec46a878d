//! Small numeric helpers shared across the crate.

/// Probabilities are floored at this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-9;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`sigmoid`]. Undefined outside the open interval (0, 1).
#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// log(sum(exp(xs))) without overflow. Returns -inf for an empty slice.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Maximizes a unimodal-ish function on [lo, hi] by golden-section search.
/// Returns the best point seen, which is never worse than either endpoint.
pub fn golden_section_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, iters: usize) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let mid = if fc >= fd { c } else { d };
    // Guard against a maximum sitting exactly on an endpoint.
    let mut best = (f(mid), mid);
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.0 {
            best = (fx, x);
        }
    }
    best.1
}

/// Pearson correlation of paired samples. `None` when fewer than two pairs
/// or when either side has zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_logit_roundtrip() {
        for p in [1e-6, 0.2, 0.5, 0.9, 1.0 - 1e-6] {
            assert_relative_eq!(sigmoid(logit(p)), p, max_relative = 1e-12);
        }
    }

    #[test]
    fn logsumexp_matches_naive() {
        let xs = [-1.0f64, 0.5, 2.0];
        let naive: f64 = xs.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert_relative_eq!(logsumexp(&xs), naive, max_relative = 1e-12);
        assert!(logsumexp(&[]).is_infinite());
    }

    #[test]
    fn golden_section_finds_parabola_peak() {
        let x = golden_section_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 60);
        assert_relative_eq!(x, 0.3, epsilon = 1e-8);
    }

    #[test]
    fn golden_section_endpoint_max() {
        let x = golden_section_max(|x| x, 0.0, 1.0, 40);
        assert_relative_eq!(x, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn pearson_perfect_and_degenerate() {
        let xs = [1.0, 2.0, 3.0];
        let ys = [2.0, 4.0, 6.0];
        assert_relative_eq!(pearson(&xs, &ys).unwrap(), 1.0, epsilon = 1e-12);
        assert!(pearson(&xs, &[1.0, 1.0, 1.0]).is_none());
        assert!(pearson(&[1.0], &[1.0]).is_none());
    }
}
