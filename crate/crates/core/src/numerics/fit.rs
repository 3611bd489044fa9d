//! Ordinary least squares for log-log rate fits.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual.
    pub residual: f64,
    pub slope_stderr: f64,
    /// Two-sided 95 % confidence interval on the slope.
    pub slope_ci: (f64, f64),
    pub points: usize,
}

/// Fit `y = slope x + intercept`. Returns `None` for fewer than two distinct abscissae.
pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = x[..n].iter().sum::<f64>() / nf;
    let my = y[..n].iter().sum::<f64>() / nf;
    let sxx: f64 = x[..n].iter().map(|xi| (xi - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x[..n].iter().zip(&y[..n]).map(|(xi, yi)| (xi - mx) * (yi - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = x[..n]
        .iter()
        .zip(&y[..n])
        .map(|(xi, yi)| (yi - slope * xi - intercept).powi(2))
        .sum();
    let residual = (ssr / nf).sqrt();
    let (slope_stderr, slope_ci) = if n > 2 {
        let se = (ssr / (nf - 2.0) / sxx).sqrt();
        let t = StudentsT::new(0.0, 1.0, nf - 2.0)
            .map(|d| d.inverse_cdf(0.975))
            .unwrap_or(1.96);
        (se, (slope - t * se, slope + t * se))
    } else {
        (0.0, (slope, slope))
    };
    Some(LineFit {
        slope,
        intercept,
        residual,
        slope_stderr,
        slope_ci,
        points: n,
    })
}

/// Slope of `ln y` against `ln x`, skipping non-positive entries.
pub fn log_log_fit(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .unzip();
    fit_line(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let x: Vec<f64> = (1..10).map(|k| 2f64.powi(-k)).collect();
        let y: Vec<f64> = x.iter().map(|e| 3.0 * e.powf(1.0 / 3.0)).collect();
        let fit = log_log_fit(&x, &y).unwrap();
        assert!((fit.slope - 1.0 / 3.0).abs() < 1e-12);
        assert!((fit.intercept - 3f64.ln()).abs() < 1e-12);
        assert!(fit.residual < 1e-12);
        assert!(fit.slope_ci.0 <= fit.slope && fit.slope <= fit.slope_ci.1);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(fit_line(&[1.0], &[2.0]).is_none());
        assert!(fit_line(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }
}
