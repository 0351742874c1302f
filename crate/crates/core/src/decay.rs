//! Stretched-exponential relaxation curves: synthesis, ensemble averaging and
//! bounded Levenberg–Marquardt fitting of A·exp[−(τ/T1)^n].

use crate::error::{Result, SimError};
use crate::rng::{self, Domain};
use crate::stats;
use nalgebra::{Matrix3, Vector3};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

pub const MIN_STRETCH: f64 = 0.2;
pub const MAX_STRETCH: f64 = 2.0;

const MAX_ITERATIONS: usize = 500;
const AMPLITUDE_BOUNDS: (f64, f64) = (1e-3, 2.0);
// T1 may range over this factor beyond the sampled τ window before the fit
// is declared unconstrained.
const T1_WINDOW_FACTOR: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayCurve {
    /// s, strictly increasing.
    pub taus: Vec<f64>,
    pub signal: Vec<f64>,
    pub noise_std: Vec<f64>,
}

impl DecayCurve {
    pub fn validate(&self) -> Result<()> {
        let n = self.taus.len();
        if self.signal.len() != n || self.noise_std.len() != n {
            return Err(SimError::invalid("signal", "taus, signal and noise_std lengths differ"));
        }
        if self.taus.windows(2).any(|w| !(w[1] > w[0])) || self.taus.iter().any(|t| !(*t >= 0.0)) {
            return Err(SimError::invalid("taus", "must be non-negative and strictly increasing"));
        }
        if self.signal.iter().any(|s| !(-0.2..=1.2).contains(s)) {
            return Err(SimError::invalid("signal", "values must lie in [-0.2, 1.2]"));
        }
        if self.noise_std.iter().any(|s| !(*s >= 0.0)) {
            return Err(SimError::invalid("noise_std", "must be non-negative"));
        }
        Ok(())
    }
}

/// `count` points log-spaced over [lo, hi].
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
}

fn check_stretch(n: f64) -> Result<()> {
    if !(n > MIN_STRETCH && n <= MAX_STRETCH) {
        return Err(SimError::invalid("n", format!("stretch exponent must lie in (0.2, 2], got {n}")));
    }
    Ok(())
}

/// exp[−(τ/T1)^n] plus independent Gaussian noise, deterministic per seed.
pub fn synthesize_decay(t1: f64, n: f64, taus: &[f64], noise_std: f64, seed: u64) -> Result<DecayCurve> {
    if !(t1 > 0.0) {
        return Err(SimError::invalid("t1", "must be positive"));
    }
    check_stretch(n)?;
    if !(noise_std >= 0.0) {
        return Err(SimError::invalid("noise_std", "must be non-negative"));
    }
    let mut rng = rng::stream(seed, Domain::DecayNoise, 0);
    let noise = Normal::new(0.0, noise_std).map_err(|e| SimError::Numeric(e.to_string()))?;
    let signal = taus
        .iter()
        .map(|&t| {
            let clean = (-(t / t1).powf(n)).exp();
            if noise_std > 0.0 { clean + noise.sample(&mut rng) } else { clean }
        })
        .collect();
    let curve = DecayCurve { taus: taus.to_vec(), signal, noise_std: vec![noise_std; taus.len()] };
    curve.validate()?;
    Ok(curve)
}

/// Copy of `curve` with independent Gaussian noise added to every point.
pub fn add_noise(curve: &DecayCurve, noise_std: f64, seed: u64) -> Result<DecayCurve> {
    if !(noise_std >= 0.0) {
        return Err(SimError::invalid("noise_std", "must be non-negative"));
    }
    let mut rng = rng::stream(seed, Domain::DecayNoise, 0);
    let noise = Normal::new(0.0, noise_std).map_err(|e| SimError::Numeric(e.to_string()))?;
    let signal = curve.signal.iter().map(|&s| if noise_std > 0.0 { s + noise.sample(&mut rng) } else { s }).collect();
    let out = DecayCurve { taus: curve.taus.clone(), signal, noise_std: vec![noise_std; curve.taus.len()] };
    out.validate()?;
    Ok(out)
}

/// Ensemble signal when each NV decays mono-exponentially at its own rate.
pub fn ensemble_decay(rates: &[f64], taus: &[f64]) -> Result<DecayCurve> {
    if rates.is_empty() {
        return Err(SimError::invalid("rates", "need at least one rate"));
    }
    let signal = taus
        .iter()
        .map(|&t| {
            let terms: Vec<f64> = rates.iter().map(|r| (-r * t).exp()).collect();
            stats::pairwise_sum(&terms) / rates.len() as f64
        })
        .collect();
    let curve = DecayCurve { taus: taus.to_vec(), signal, noise_std: vec![0.0; taus.len()] };
    curve.validate()?;
    Ok(curve)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayGuess {
    pub amplitude: f64,
    pub t1: f64,
    pub n: f64,
}

impl DecayGuess {
    /// Amplitude from the first point, T1 from the 1/e crossing, n = 1.
    pub fn from_curve(curve: &DecayCurve) -> Self {
        let amplitude = curve.signal.first().copied().unwrap_or(1.0).clamp(0.1, 1.5);
        let level = amplitude / std::f64::consts::E;
        let t1 = curve
            .taus
            .windows(2)
            .zip(curve.signal.windows(2))
            .find(|(_, s)| s[0] >= level && s[1] < level)
            .map(|(t, s)| {
                let f = (s[0] - level) / (s[0] - s[1]);
                if t[0] > 0.0 {
                    (t[0].ln() + f * (t[1] / t[0]).ln()).exp()
                } else {
                    f * t[1]
                }
            })
            .unwrap_or_else(|| {
                let (a, b) = (curve.taus[0].max(f64::MIN_POSITIVE), curve.taus[curve.taus.len() - 1]);
                (a * b).sqrt()
            });
        Self { amplitude, t1, n: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub amplitude: f64,
    pub t1: f64,
    pub n: f64,
    pub amplitude_se: f64,
    pub t1_se: f64,
    pub n_se: f64,
    /// Covariance of (amplitude, ln T1, n).
    pub covariance: [[f64; 3]; 3],
    pub chi2: f64,
    pub iterations: usize,
}

struct Problem<'a> {
    taus: &'a [f64],
    y: &'a [f64],
    w: Vec<f64>,
    lo: Vector3<f64>,
    hi: Vector3<f64>,
}

impl Problem<'_> {
    fn clamp(&self, p: Vector3<f64>) -> Vector3<f64> {
        p.zip_zip_map(&self.lo, &self.hi, |x, l, h| x.clamp(l, h))
    }

    fn cost(&self, p: &Vector3<f64>) -> f64 {
        let (a, t1, n) = (p[0], p[1].exp(), p[2]);
        self.taus
            .iter()
            .zip(self.y)
            .zip(&self.w)
            .map(|((t, y), w)| (w * (a * (-(t / t1).powf(n)).exp() - y)).powi(2))
            .sum()
    }

    /// JᵀWJ and JᵀW r at `p`.
    fn normal_equations(&self, p: &Vector3<f64>) -> (Matrix3<f64>, Vector3<f64>) {
        let (a, t1, n) = (p[0], p[1].exp(), p[2]);
        let mut jtj = Matrix3::zeros();
        let mut jtr = Vector3::zeros();
        for ((&t, &y), &w) in self.taus.iter().zip(self.y).zip(&self.w) {
            let x = t / t1;
            let xn = if x > 0.0 { x.powf(n) } else { 0.0 };
            let e = (-xn).exp();
            let lx = if x > 0.0 { x.ln() } else { 0.0 };
            let j = Vector3::new(e, a * e * n * xn, -a * e * xn * lx) * w;
            let r = w * (a * e - y);
            jtj += j * j.transpose();
            jtr += j * r;
        }
        (jtj, jtr)
    }

    fn levenberg_marquardt(&self, start: Vector3<f64>) -> (Vector3<f64>, f64, usize) {
        let mut p = self.clamp(start);
        let mut cost = self.cost(&p);
        let mut mu = 1e-3;
        let mut it = 0;
        while it < MAX_ITERATIONS {
            it += 1;
            let (jtj, jtr) = self.normal_equations(&p);
            let mut improved = false;
            for _ in 0..40 {
                let mut m = jtj;
                for k in 0..3 {
                    m[(k, k)] += mu * jtj[(k, k)].max(1e-30);
                }
                let Some(step) = m.lu().solve(&(-jtr)) else {
                    mu *= 10.0;
                    continue;
                };
                let trial = self.clamp(p + step);
                let c = self.cost(&trial);
                if c < cost {
                    let gain = cost - c;
                    let moved = (trial - p).abs().max();
                    p = trial;
                    cost = c;
                    mu = (mu * 0.3).max(1e-12);
                    improved = true;
                    if gain <= 1e-15 * cost.max(1e-300) || moved < 1e-13 {
                        return (p, cost, it);
                    }
                    break;
                }
                mu *= 10.0;
            }
            if !improved {
                break;
            }
        }
        (p, cost, it)
    }
}

/// Fit A·exp[−(τ/T1)^n] starting from `guess`, with three extra restarts
/// from perturbed guesses; the lowest residual wins.
pub fn fit_decay(curve: &DecayCurve, guess: &DecayGuess) -> Result<DecayFit> {
    curve.validate()?;
    if !(guess.t1 > 0.0) {
        return Err(SimError::invalid("t1", "initial T1 guess must be positive"));
    }
    let m = curve.taus.len();
    if m < 5 {
        return Err(SimError::invalid("taus", "need at least five points"));
    }
    let (t_lo, t_hi) = (curve.taus[0], curve.taus[m - 1]);
    if t_lo > 0.2 * guess.t1 || t_hi < 2.0 * guess.t1 {
        return Err(SimError::invalid("taus", "points must span [0.2, 2] times the T1 guess"));
    }
    let positive_lo = curve.taus.iter().copied().find(|t| *t > 0.0).unwrap_or(t_hi);
    let w: Vec<f64> = if curve.noise_std.iter().all(|s| *s > 0.0) {
        curve.noise_std.iter().map(|s| 1.0 / s).collect()
    } else {
        vec![1.0; m]
    };
    let problem = Problem {
        taus: &curve.taus,
        y: &curve.signal,
        w,
        lo: Vector3::new(AMPLITUDE_BOUNDS.0, (positive_lo / T1_WINDOW_FACTOR).ln(), MIN_STRETCH + 1e-6),
        hi: Vector3::new(AMPLITUDE_BOUNDS.1, (t_hi * T1_WINDOW_FACTOR).ln(), MAX_STRETCH),
    };
    let base = Vector3::new(guess.amplitude, guess.t1.ln(), guess.n);
    let starts = [
        base,
        base + Vector3::new(0.0, 0.5f64.ln(), 0.2),
        base + Vector3::new(0.0, 2f64.ln(), -0.2),
        base + Vector3::new(-0.05, 0.0, 0.4),
    ];
    let mut best: Option<(Vector3<f64>, f64, usize)> = None;
    for s in starts {
        let r = problem.levenberg_marquardt(s);
        if best.as_ref().is_none_or(|b| r.1 < b.1) {
            best = Some(r);
        }
    }
    let (p, cost, iterations) = best.expect("at least one start");
    let best_vec = vec![p[0], p[1].exp(), p[2]];
    let tight = |x: f64, b: f64| (x - b).abs() <= 1e-6 * (1.0 + b.abs());
    if tight(p[1], problem.lo[1]) || tight(p[1], problem.hi[1]) {
        return Err(SimError::FitNonConvergence {
            reason: "T1 ran to the edge of the sampled window; the data do not constrain it".into(),
            best: best_vec,
        });
    }
    if tight(p[2], problem.lo[2]) || tight(p[2], problem.hi[2]) || tight(p[0], problem.lo[0]) || tight(p[0], problem.hi[0]) {
        return Err(SimError::FitNonConvergence {
            reason: "amplitude or stretch exponent pinned at a bound".into(),
            best: best_vec,
        });
    }
    let (jtj, _) = problem.normal_equations(&p);
    let dof = (m - 3).max(1) as f64;
    let scale = if cost > 0.0 { cost / dof } else { 0.0 };
    let inv = jtj.try_inverse().ok_or_else(|| SimError::FitNonConvergence {
        reason: "singular Jacobian at the optimum".into(),
        best: best_vec.clone(),
    })?;
    let cov = inv * scale;
    let se = |k: usize| cov[(k, k)].max(0.0).sqrt();
    let t1 = p[1].exp();
    let mut covariance = [[0.0; 3]; 3];
    for (i, row) in covariance.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = cov[(i, j)];
        }
    }
    Ok(DecayFit {
        amplitude: p[0],
        t1,
        n: p[2],
        amplitude_se: se(0),
        t1_se: t1 * se(1),
        n_se: se(2),
        covariance,
        chi2: cost,
        iterations,
    })
}
