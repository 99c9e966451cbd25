use crate::error::{Error, Result};
use crate::walk::estimate::ReturnEstimate;

#[derive(Debug, Clone, PartialEq)]
pub struct StretchedFit {
    /// Slope of `ln(-ln p)` against `ln n`.
    pub alpha_hat: f64,
    pub stderr: f64,
    /// `ln c` in `p ~ exp(-c n^alpha)`.
    pub intercept: f64,
    pub points: usize,
    /// Sum of squared residuals of `-ln p` under the stretched model.
    pub ssr_stretched: f64,
    /// Same under the power-law model `-ln p = a + b ln n`.
    pub ssr_power: f64,
}

impl StretchedFit {
    /// The series looks polynomial rather than stretched-exponential.
    pub fn polynomial_like(&self) -> bool {
        self.ssr_power < self.ssr_stretched
    }
}

/// Weighted least squares of `ln(-ln p)` on `ln n`. Points with a positive
/// standard error are weighted by the delta-method variance
/// `(se / (p |ln p|))^2`; if every point is exact the fit is unweighted.
pub fn fit_stretched_exponent(series: &[(f64, f64, f64)]) -> Result<StretchedFit> {
    for &(n, p, se) in series {
        if !(p > 0.0 && p < 1.0) || n <= 0.0 || !(se >= 0.0) {
            return Err(Error::DegenerateSeries(format!("point (n={n}, p={p}, se={se}) outside the fit domain")));
        }
    }
    let logs: Vec<(f64, f64, f64)> = series.iter().map(|&(n, p, se)| (n, -p.ln(), se / p)).collect();
    fit_neg_log(&logs)
}

/// [`fit_stretched_exponent`] on `(n, -ln p, stderr of -ln p)`, for
/// probabilities too small to hold in an `f64`.
pub fn fit_neg_log(series: &[(f64, f64, f64)]) -> Result<StretchedFit> {
    if series.len() < 4 {
        return Err(Error::DegenerateSeries(format!("need at least 4 points, got {}", series.len())));
    }
    for &(n, l, se) in series {
        if !(l > 0.0) || !l.is_finite() || !(n > 0.0) || !(se >= 0.0) {
            return Err(Error::DegenerateSeries(format!("point (n={n}, -ln p={l}, se={se}) outside the fit domain")));
        }
    }
    let xs: Vec<f64> = series.iter().map(|s| s.0.ln()).collect();
    let ys: Vec<f64> = series.iter().map(|s| s.1.ln()).collect();
    let vars: Vec<f64> = series.iter().map(|&(_, l, se)| (se / l).powi(2)).collect();
    let weighted = vars.iter().any(|v| *v > 0.0);
    let floor = vars.iter().cloned().filter(|v| *v > 0.0).fold(f64::INFINITY, f64::min) * 1e-3;
    let ws: Vec<f64> = vars.iter().map(|v| if weighted { 1.0 / v.max(floor) } else { 1.0 }).collect();

    let sw: f64 = ws.iter().sum();
    let mx = ws.iter().zip(&xs).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = ws.iter().zip(&ys).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = ws.iter().zip(&xs).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = ws.iter().zip(xs.iter().zip(&ys)).map(|(w, (x, y))| w * (x - mx) * (y - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateSeries("all points share one n".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let k = series.len() as f64;
    let resid: f64 = ws.iter().zip(xs.iter().zip(&ys)).map(|(w, (x, y))| w * (y - intercept - slope * x).powi(2)).sum();
    let stderr = if weighted {
        (1.0 / sxx).sqrt()
    } else {
        (resid / (k - 2.0) / sxx).sqrt()
    };

    let ls: Vec<f64> = series.iter().map(|s| s.1).collect();
    let ssr_stretched: f64 = xs.iter().zip(&ls).map(|(x, l)| (l - (intercept + slope * x).exp()).powi(2)).sum();
    let ux = xs.iter().sum::<f64>() / k;
    let ul = ls.iter().sum::<f64>() / k;
    let b = xs.iter().zip(&ls).map(|(x, l)| (x - ux) * (l - ul)).sum::<f64>() / xs.iter().map(|x| (x - ux).powi(2)).sum::<f64>();
    let a = ul - b * ux;
    let ssr_power: f64 = xs.iter().zip(&ls).map(|(x, l)| (l - a - b * x).powi(2)).sum();

    Ok(StretchedFit {
        alpha_hat: slope,
        stderr,
        intercept,
        points: series.len(),
        ssr_stretched,
        ssr_power,
    })
}

/// [`fit_stretched_exponent`] over estimate records.
pub fn fit_estimates(records: &[ReturnEstimate]) -> Result<StretchedFit> {
    let series: Vec<(f64, f64, f64)> = records.iter().map(|r| (r.n as f64, r.estimate, r.stderr)).collect();
    fit_stretched_exponent(&series)
}
