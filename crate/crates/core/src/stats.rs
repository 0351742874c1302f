//! Small statistics helpers with order-independent reductions.

use crate::error::{Result, SimError};
use serde::{Deserialize, Serialize};

/// Pairwise (cascade) summation. The result depends only on the slice order,
/// never on thread scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const BLOCK: usize = 32;
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    pairwise_sum(xs) / xs.len() as f64
}

/// Sample standard deviation (n − 1 denominator); 0 for fewer than two values.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    (pairwise_sum(&sq) / (xs.len() - 1) as f64).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(SimError::invalid("pearson", "need two equal-length series of at least two points"));
    }
    let mx = mean(x);
    let my = mean(y);
    let sxy: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let sxx: Vec<f64> = x.iter().map(|a| (a - mx) * (a - mx)).collect();
    let syy: Vec<f64> = y.iter().map(|b| (b - my) * (b - my)).collect();
    let denom = (pairwise_sum(&sxx) * pairwise_sum(&syy)).sqrt();
    if denom == 0.0 {
        return Err(SimError::DegenerateFit("zero variance in pearson input".into()));
    }
    Ok(pairwise_sum(&sxy) / denom)
}

/// Result of a straight-line fit y = intercept + slope·x.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub chi2: f64,
}

/// Weighted least squares with weights w_i = 1/se_i². Standard errors come
/// from the inverse normal matrix.
pub fn weighted_line_fit(x: &[f64], y: &[f64], se: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() != se.len() || x.len() < 2 {
        return Err(SimError::invalid("line_fit", "need matching x, y, se of length >= 2"));
    }
    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    if w.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err(SimError::invalid("line_fit", "standard errors must be positive and finite"));
    }
    let s = pairwise_sum(&w);
    let sx = pairwise_sum(&w.iter().zip(x).map(|(w, x)| w * x).collect::<Vec<_>>());
    let sy = pairwise_sum(&w.iter().zip(y).map(|(w, y)| w * y).collect::<Vec<_>>());
    let sxx = pairwise_sum(&w.iter().zip(x).map(|(w, x)| w * x * x).collect::<Vec<_>>());
    let sxy = pairwise_sum(&w.iter().zip(x.iter().zip(y)).map(|(w, (x, y))| w * x * y).collect::<Vec<_>>());
    let det = s * sxx - sx * sx;
    if !(det.abs() > 1e-300) || det.abs() <= 1e-12 * s * sxx {
        return Err(SimError::DegenerateFit("all x values are equal".into()));
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    let chi2 = pairwise_sum(
        &x.iter()
            .zip(y)
            .zip(&w)
            .map(|((x, y), w)| w * (y - intercept - slope * x).powi(2))
            .collect::<Vec<_>>(),
    );
    Ok(LineFit { slope, intercept, slope_se: (s / det).sqrt(), intercept_se: (sxx / det).sqrt(), chi2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_recovered() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y: Vec<f64> = x.iter().map(|x| 2.0 + 0.5 * x).collect();
        let f = weighted_line_fit(&x, &y, &[1.0; 4]).unwrap();
        assert!((f.slope - 0.5).abs() < 1e-14 && (f.intercept - 2.0).abs() < 1e-14);
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_x_rejected() {
        assert!(matches!(weighted_line_fit(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0], &[1.0; 3]), Err(SimError::DegenerateFit(_))));
    }

    #[test]
    fn pairwise_sum_matches_naive_on_integers() {
        let xs: Vec<f64> = (0..1000).map(f64::from).collect();
        assert_eq!(pairwise_sum(&xs), 499_500.0);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}
