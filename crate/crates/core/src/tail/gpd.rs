//! Generalized Pareto fits to threshold excesses.
//!
//! The likelihood is maximized through the one-dimensional profile in
//! `theta = xi / sigma`: for fixed `theta` the shape has the closed form
//! `xi(theta) = mean(ln(1 + theta * x))` and `sigma = xi / theta`. `xi(theta)`
//! is increasing, so the shape bounds map to a `theta` interval that is
//! searched on a grid and refined by golden-section search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const XI_MIN: f64 = -0.5;
pub const XI_MAX: f64 = 1.0;
pub const DEFAULT_MIN_EXCEEDANCES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitMethod {
    Mle,
    MomentsFallback,
}

/// Requested estimator. `Mle` falls back to probability-weighted moments when
/// the profile likelihood has no interior optimum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GpdMethod {
    Mle,
    Moments,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GpdFit {
    pub shape: f64,
    pub scale: f64,
    pub n_exceedances: usize,
    pub method: FitMethod,
    pub converged: bool,
}

/// GPD log-likelihood of excesses `x` (all > 0).
pub fn gpd_log_likelihood(x: &[f64], shape: f64, scale: f64) -> f64 {
    if !(scale > 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = x.len() as f64;
    if shape.abs() < 1e-12 {
        return -n * scale.ln() - x.iter().sum::<f64>() / scale;
    }
    let mut acc = 0.0;
    for &v in x {
        let t = 1.0 + shape * v / scale;
        if t <= 0.0 {
            return f64::NEG_INFINITY;
        }
        acc += t.ln();
    }
    -n * scale.ln() - (1.0 + 1.0 / shape) * acc
}

struct Profile<'a> {
    x: &'a [f64],
    mean: f64,
}

impl Profile<'_> {
    fn shape_at(&self, theta: f64) -> f64 {
        self.x.iter().map(|&v| (theta * v).ln_1p()).sum::<f64>() / self.x.len() as f64
    }

    /// `(shape, scale, loglik)` at `theta`.
    fn eval(&self, theta: f64) -> (f64, f64, f64) {
        let n = self.x.len() as f64;
        if theta == 0.0 {
            return (0.0, self.mean, -n * self.mean.ln() - n);
        }
        let xi = self.shape_at(theta);
        let sigma = xi / theta;
        if !(sigma > 0.0) || !sigma.is_finite() {
            return (xi, sigma, f64::NEG_INFINITY);
        }
        // sum ln(1 + theta x) = n xi, so the likelihood collapses to this form.
        (xi, sigma, -n * sigma.ln() - n * (1.0 + xi))
    }

    /// `theta` in `(lo, hi)` where `shape_at(theta) == target`.
    fn invert(&self, target: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if self.shape_at(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn validate(x: &[f64], min_count: usize) -> Result<()> {
    if x.len() < min_count.max(2) {
        return Err(Error::InsufficientData(format!(
            "insufficient exceedances: {} < {}",
            x.len(),
            min_count.max(2)
        )));
    }
    if x.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::invalid("exceedances must be finite and > 0"));
    }
    let first = x[0];
    if x.iter().all(|&v| v == first) {
        return Err(Error::InsufficientData("degenerate exceedances: all values identical".into()));
    }
    Ok(())
}

/// Fits a GPD to excesses over a threshold.
pub fn fit_gpd(excesses: &[f64], method: GpdMethod, min_count: usize) -> Result<GpdFit> {
    validate(excesses, min_count)?;
    match method {
        GpdMethod::Moments => Ok(pwm(excesses, true)),
        GpdMethod::Mle => Ok(profile_mle(excesses).unwrap_or_else(|| {
            log::debug!("GPD profile likelihood has no interior optimum, using moments");
            pwm(excesses, false)
        })),
    }
}

fn profile_mle(x: &[f64]) -> Option<GpdFit> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let x_max = x.iter().copied().fold(0.0, f64::max);
    let prof = Profile { x, mean };

    // theta range giving shape in (XI_MIN, XI_MAX).
    let lower_domain = -1.0 / x_max;
    let eps = 1e-9;
    let theta_lo = prof.invert(XI_MIN + eps, lower_domain, 0.0);
    let mut upper = 1.0 / mean;
    while prof.shape_at(upper) < XI_MAX {
        upper *= 2.0;
        if !upper.is_finite() {
            return None;
        }
    }
    let theta_hi = prof.invert(XI_MAX - eps, 0.0, upper);

    // Coarse grid: linear on the negative side, geometric on the positive side.
    let mut grid: Vec<f64> = (0..40).map(|i| theta_lo * (1.0 - i as f64 / 40.0)).collect();
    grid.push(0.0);
    let pos_lo = (theta_hi * 1e-6).min(1e-6 / mean);
    let steps = 60;
    for i in 0..=steps {
        grid.push(pos_lo * (theta_hi / pos_lo).powf(i as f64 / steps as f64));
    }
    let ll: Vec<f64> = grid.iter().map(|&t| prof.eval(t).2).collect();
    let best = (0..grid.len()).fold(0, |b, i| if ll[i] > ll[b] { i } else { b });
    if !ll[best].is_finite() {
        return None;
    }
    let spread = ll.iter().copied().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max)
        - ll.iter().copied().filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    if spread < 1e-9 * n as f64 || best == 0 || best == grid.len() - 1 {
        return None;
    }

    // Golden-section search on the bracketing grid cell pair.
    let (mut a, mut b) = (grid[best - 1], grid[best + 1]);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (prof.eval(c).2, prof.eval(d).2);
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = prof.eval(c).2;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = prof.eval(d).2;
        }
    }
    let theta = if fc >= fd { c } else { d };
    let (mut shape, mut scale, mut ll_hat) = prof.eval(theta);
    if ll[best] > ll_hat {
        (shape, scale, ll_hat) = prof.eval(grid[best]);
    }
    if !ll_hat.is_finite() || !(XI_MIN..XI_MAX).contains(&shape) {
        return None;
    }
    Some(GpdFit {
        shape,
        scale,
        n_exceedances: n,
        method: FitMethod::Mle,
        converged: true,
    })
}

/// Probability-weighted moments estimator (Hosking & Wallis), clamped to the shape bounds.
fn pwm(x: &[f64], requested: bool) -> GpdFit {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let a0 = s.iter().sum::<f64>() / n;
    let a1 = s
        .iter()
        .enumerate()
        .map(|(i, &v)| (1.0 - (i as f64 + 1.0 - 0.35) / n) * v)
        .sum::<f64>()
        / n;
    let k = a0 / (a0 - 2.0 * a1) - 2.0;
    let shape = (-k).clamp(XI_MIN + 1e-3, XI_MAX - 1e-3);
    let scale = if (a0 - 2.0 * a1).abs() > 0.0 {
        (2.0 * a0 * a1 / (a0 - 2.0 * a1)).abs()
    } else {
        a0
    };
    GpdFit {
        shape,
        scale: if scale > 0.0 { scale } else { a0 },
        n_exceedances: x.len(),
        method: FitMethod::MomentsFallback,
        converged: requested,
    }
}
