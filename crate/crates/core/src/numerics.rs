//! Small numerical helpers shared by the link-budget and rate models.

/// Absolute error target handed to the double-exponential integrator.
pub const QUAD_TOL: f64 = 1e-12;

/// Definite integral of `f` over `[a, b]` by tanh-sinh quadrature.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    quadrature::double_exponential::integrate(f, a, b, QUAD_TOL).integral
}

/// Exponentially scaled modified Bessel function of the first kind,
/// `I0(x) * exp(-|x|)`.
///
/// Power series below 30 (all terms positive, no cancellation), Hankel
/// asymptotic series above.
pub fn bessel_i0e(x: f64) -> f64 {
    let x = x.abs();
    if x < 30.0 {
        let q = 0.25 * x * x;
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1.0;
        loop {
            term *= q / (k * k);
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
            k += 1.0;
        }
        sum * (-x).exp()
    } else {
        // sum_k ((2k-1)!!)^2 / (k! (8x)^k)
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 1..30 {
            let kf = k as f64;
            let next = term * (2.0 * kf - 1.0).powi(2) / (kf * 8.0 * x);
            if next.abs() > term.abs() {
                break;
            }
            term = next;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        sum / (2.0 * std::f64::consts::PI * x).sqrt()
    }
}

/// Compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let y = x - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut acc = KahanSum::default();
    for x in xs {
        acc.add(x);
    }
    acc.value()
}

/// Binomial(n, p) mass function over `0..=n`.
///
/// Built by the ratio recurrence outward from the mode and normalized at the
/// end, so there is no underflow of `(1-p)^n` for large `n`. Entries far in
/// the tails may be exactly zero.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    if p <= 0.0 {
        out[0] = 1.0;
        return out;
    }
    if p >= 1.0 {
        out[n] = 1.0;
        return out;
    }
    let mode = (((n + 1) as f64) * p).floor().min(n as f64) as usize;
    let odds = p / (1.0 - p);
    out[mode] = 1.0;
    for k in mode..n {
        let ratio = (n - k) as f64 / (k + 1) as f64 * odds;
        out[k + 1] = out[k] * ratio;
        if out[k + 1] < 1e-300 {
            break;
        }
    }
    for k in (0..mode).rev() {
        let ratio = (k + 1) as f64 / (n - k) as f64 / odds;
        out[k] = out[k + 1] * ratio;
        if out[k] < 1e-300 {
            break;
        }
    }
    let total = kahan_sum(out.iter().copied());
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Binomial(n, p) masses restricted to the window where they exceed
/// `rel_cut` times the modal mass. Returns `(first_index, masses)`,
/// normalized over the window.
pub fn binomial_window(n: usize, p: f64, rel_cut: f64) -> (usize, Vec<f64>) {
    if p <= 0.0 {
        return (0, vec![1.0]);
    }
    if p >= 1.0 {
        return (n, vec![1.0]);
    }
    let mode = (((n + 1) as f64) * p).floor().min(n as f64) as usize;
    let odds = p / (1.0 - p);
    let mut upper = vec![1.0];
    let mut k = mode;
    while k < n {
        let next = upper.last().unwrap() * (n - k) as f64 / (k + 1) as f64 * odds;
        if next < rel_cut {
            break;
        }
        upper.push(next);
        k += 1;
    }
    let mut lower = Vec::new();
    let mut v = 1.0;
    let mut k = mode;
    while k > 0 {
        v *= k as f64 / (n - k + 1) as f64 / odds;
        if v < rel_cut {
            break;
        }
        lower.push(v);
        k -= 1;
    }
    let first = mode - lower.len();
    lower.reverse();
    lower.extend(upper);
    let total = kahan_sum(lower.iter().copied());
    for v in &mut lower {
        *v /= total;
    }
    (first, lower)
}
