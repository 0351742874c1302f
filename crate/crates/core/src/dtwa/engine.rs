//! Classical precession of trajectory batches.
//!
//! A batch of `B` trajectories of `n` spins is one `n × 3B` matrix whose
//! column blocks hold the x, y and z components. Mean fields for the whole
//! batch are then a single product with the coupling matrix.
//!
//! Each spin obeys ds/dt = s × h with h = −∂H/∂s for
//! H = −Σ_{i≠j} K_ij [λ(xᵢxⱼ + yᵢyⱼ) − 2 zᵢzⱼ], i.e.
//! h_i = 2 Σ_j K_ij (λxⱼ, λyⱼ, −2zⱼ).
//!
use super::Integrator;
use ndarray::linalg::general_mat_mul;
use log::debug;
use ndarray::{Array2, Zip};

/// out = s × h(f); returns max |h|.
fn precess(s: &Array2<f64>, f: &Array2<f64>, lambda: f64, out: &mut Array2<f64>) -> f64 {
    let cols = s.ncols();
    let b = cols / 3;
    let sv = s.as_slice().expect("standard layout");
    let fv = f.as_slice().expect("standard layout");
    let ov = out.as_slice_mut().expect("standard layout");
    let mut hmax2: f64 = 0.0;
    for row in 0..s.nrows() {
        let o = row * cols;
        for t in 0..b {
            let (ix, iy, iz) = (o + t, o + b + t, o + 2 * b + t);
            let (x, y, z) = (sv[ix], sv[iy], sv[iz]);
            let hx = 2.0 * lambda * fv[ix];
            let hy = 2.0 * lambda * fv[iy];
            let hz = -4.0 * fv[iz];
            hmax2 = hmax2.max(hx * hx + hy * hy + hz * hz);
            ov[ix] = y * hz - z * hy;
            ov[iy] = z * hx - x * hz;
            ov[iz] = x * hy - y * hx;
        }
    }
    hmax2.sqrt()
}

fn norms(s: &Array2<f64>, out: &mut Vec<f64>) {
    let cols = s.ncols();
    let b = cols / 3;
    let sv = s.as_slice().expect("standard layout");
    out.clear();
    for row in 0..s.nrows() {
        let o = row * cols;
        for t in 0..b {
            let (x, y, z) = (sv[o + t], sv[o + b + t], sv[o + 2 * b + t]);
            out.push((x * x + y * y + z * z).sqrt());
        }
    }
}

/// Work buffers for one flow on an `n × 3B` block.
pub(crate) struct Flow {
    k: Array2<f64>,
    lambda: f64,
    integrator: Integrator,
    bound: f64,
    k1: Array2<f64>,
    k2: Array2<f64>,
    k3: Array2<f64>,
    k4: Array2<f64>,
    tmp: Array2<f64>,
    f: Array2<f64>,
    before: Vec<f64>,
    after: Vec<f64>,
    pub max_norm_drift: f64,
    pub steps: u64,
    pub halvings: u64,
}

impl Flow {
    pub fn new(k: Array2<f64>, cols: usize, lambda: f64, integrator: Integrator, bound: f64) -> Self {
        let rows = k.nrows();
        let z = || Array2::zeros((rows, cols));
        Self {
            k,
            lambda,
            integrator,
            bound,
            k1: z(),
            k2: z(),
            k3: z(),
            k4: z(),
            tmp: z(),
            f: z(),
            before: Vec::new(),
            after: Vec::new(),
            max_norm_drift: 0.0,
            steps: 0,
            halvings: 0,
        }
    }

    /// Largest local field of this flow at `s`.
    pub fn max_field(&mut self, s: &Array2<f64>) -> f64 {
        general_mat_mul(1.0, &self.k, s, 0.0, &mut self.f);
        precess(s, &self.f, self.lambda, &mut self.k1)
    }

    /// Derivative at `tmp` into stage buffer `which`.
    fn eval(&mut self, which: usize) {
        general_mat_mul(1.0, &self.k, &self.tmp, 0.0, &mut self.f);
        let dst = match which {
            2 => &mut self.k2,
            3 => &mut self.k3,
            _ => &mut self.k4,
        };
        precess(&self.tmp, &self.f, self.lambda, dst);
    }

    /// One step of length `dt`; `k1` must already hold the derivative at `s`.
    fn step_primed(&mut self, s: &mut Array2<f64>, dt: f64) {
        norms(s, &mut self.before);
        match self.integrator {
            Integrator::Rk4 => {
                Zip::from(&mut self.tmp).and(&*s).and(&self.k1).for_each(|t, &a, &k| *t = a + 0.5 * dt * k);
                self.eval(2);
                Zip::from(&mut self.tmp).and(&*s).and(&self.k2).for_each(|t, &a, &k| *t = a + 0.5 * dt * k);
                self.eval(3);
                Zip::from(&mut self.tmp).and(&*s).and(&self.k3).for_each(|t, &a, &k| *t = a + dt * k);
                self.eval(4);
                Zip::from(&mut *s)
                    .and(&self.k1)
                    .and(&self.k2)
                    .and(&self.k3)
                    .and(&self.k4)
                    .for_each(|a, &p, &q, &r, &w| *a += dt / 6.0 * (p + 2.0 * q + 2.0 * r + w));
            }
            Integrator::Heun => {
                Zip::from(&mut self.tmp).and(&*s).and(&self.k1).for_each(|t, &a, &k| *t = a + dt * k);
                self.eval(2);
                Zip::from(&mut *s).and(&self.k1).and(&self.k2).for_each(|a, &p, &q| *a += 0.5 * dt * (p + q));
            }
        }
        norms(s, &mut self.after);
        let drift = self.before.iter().zip(&self.after).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        self.max_norm_drift = self.max_norm_drift.max(drift);
        self.steps += 1;
    }

    /// Advance by `tau` in equal substeps, each rotating spins by at most
    /// `bound` radians. The count starts from the field at `s` and doubles
    /// for the rest of the interval whenever a step would exceed the bound.
    /// Returns the number of substeps taken.
    pub fn advance(&mut self, s: &mut Array2<f64>, tau: f64) -> usize {
        let h = self.max_field(s);
        let mut dt = tau / substeps(tau, h, self.bound) as f64;
        let mut left = tau;
        let mut taken = 0;
        let mut primed = true;
        while left > 0.5 * dt {
            let h = if primed { h } else { self.max_field(s) };
            if !primed && dt * h > self.bound {
                while dt * h > self.bound {
                    dt *= 0.5;
                }
                debug!("rotation bound exceeded mid-interval, step halved to {dt:.3e} s");
                self.halvings += 1;
            }
            primed = false;
            let step = if left < 1.5 * dt { left } else { dt };
            self.step_primed(s, step);
            left -= step;
            taken += 1;
        }
        taken
    }
}

/// Smallest power of two `n` with `tau·h/n ≤ bound`.
pub(crate) fn substeps(tau: f64, h: f64, bound: f64) -> usize {
    let mut n = 1usize;
    while tau * h / n as f64 > bound && n < (1 << 40) {
        n *= 2;
    }
    n
}

/// Per-trajectory classical energy for a batch, using the full couplings.
pub(crate) fn energies(k: &Array2<f64>, s: &Array2<f64>, lambda: f64, f: &mut Array2<f64>) -> Vec<f64> {
    general_mat_mul(1.0, k, s, 0.0, f);
    let cols = s.ncols();
    let b = cols / 3;
    let sv = s.as_slice().expect("standard layout");
    let fv = f.as_slice().expect("standard layout");
    let mut e = vec![0.0; b];
    for row in 0..s.nrows() {
        let o = row * cols;
        for (t, et) in e.iter_mut().enumerate() {
            let (ix, iy, iz) = (o + t, o + b + t, o + 2 * b + t);
            *et -= lambda * (sv[ix] * fv[ix] + sv[iy] * fv[iy]) - 2.0 * sv[iz] * fv[iz];
        }
    }
    e
}
