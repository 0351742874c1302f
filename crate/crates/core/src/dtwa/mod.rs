//! Discrete truncated Wigner dynamics of dipolar spin arrays and the
//! Wineland squeezing parameter.

mod engine;
pub mod lattice;

pub use lattice::{build_lattice, LatticeKind, LatticeSpec, SpinLattice, DIPOLAR_J};

use crate::error::{Result, SimError};
use crate::rng::{self, Domain};
use crate::stats;
use engine::Flow;
use log::{debug, info};
use ndarray::{Array2, Axis};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    #[default]
    Rk4,
    Heun,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DtwaConfig {
    pub n_trajectories: usize,
    /// End of the time grid, s.
    pub t_max: f64,
    /// Grid points including t = 0.
    pub n_times: usize,
    /// λ; 1 is the dipolar XXZ form, 0 the Ising limit.
    pub anisotropy: f64,
    pub integrator: Integrator,
    /// Maximum rotation per step, rad.
    pub rotation_bound: f64,
    /// Trajectories integrated together; fixed so results do not depend on
    /// the worker count.
    pub batch_size: usize,
    pub seed: u64,
}

impl DtwaConfig {
    /// Defaults for `spec`: grid over (J/a³)·t ∈ [0, 4].
    pub fn for_lattice(spec: &LatticeSpec) -> Self {
        let rate = spec.nearest_neighbor_coupling();
        Self {
            n_trajectories: 1000,
            t_max: if rate > 0.0 { 4.0 / rate } else { 1e-4 },
            n_times: 200,
            anisotropy: 1.0,
            integrator: Integrator::Rk4,
            rotation_bound: 0.08,
            batch_size: 100,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trajectories < 2 {
            return Err(SimError::invalid("n_trajectories", "need at least two trajectories"));
        }
        if !(self.t_max > 0.0) || !self.t_max.is_finite() {
            return Err(SimError::invalid("t_max", "must be positive"));
        }
        if self.n_times < 2 {
            return Err(SimError::invalid("n_times", "need at least two grid points"));
        }
        if !(self.rotation_bound > 0.0 && self.rotation_bound < 0.1) {
            return Err(SimError::invalid("rotation_bound", "must lie in (0, 0.1) rad"));
        }
        if self.batch_size == 0 {
            return Err(SimError::invalid("batch_size", "must be positive"));
        }
        if !self.anisotropy.is_finite() {
            return Err(SimError::invalid("anisotropy", "must be finite"));
        }
        Ok(())
    }

    pub fn times(&self) -> Vec<f64> {
        let n = self.n_times - 1;
        (0..=n).map(|k| self.t_max * k as f64 / n as f64).collect()
    }
}

/// Initial spins of many trajectories: `sx`, `sy`, `sz` are `N × T`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble {
    pub sx: Array2<f64>,
    pub sy: Array2<f64>,
    pub sz: Array2<f64>,
}

impl TrajectoryEnsemble {
    pub fn n_spins(&self) -> usize {
        self.sx.nrows()
    }

    pub fn n_trajectories(&self) -> usize {
        self.sx.ncols()
    }

    /// Rotate every spin about z by `angle`.
    pub fn rotated_about_z(&self, angle: f64) -> Self {
        let (c, s) = (angle.cos(), angle.sin());
        Self {
            sx: &self.sx * c - &self.sy * s,
            sy: &self.sx * s + &self.sy * c,
            sz: self.sz.clone(),
        }
    }
}

/// Coherent state along +x: s_x = ½, s_y and s_z independently ±½.
/// Trajectory `t` depends only on `(seed, t)`.
pub fn sample_initial_state(n: usize, n_trajectories: usize, seed: u64) -> Result<TrajectoryEnsemble> {
    if n == 0 {
        return Err(SimError::invalid("n", "need at least one spin"));
    }
    let mut sy = Array2::zeros((n, n_trajectories));
    let mut sz = Array2::zeros((n, n_trajectories));
    for t in 0..n_trajectories {
        let mut rng = rng::stream(seed, Domain::InitialState, t as u64);
        for i in 0..n {
            sy[[i, t]] = if rng.random::<bool>() { 0.5 } else { -0.5 };
            sz[[i, t]] = if rng.random::<bool>() { 0.5 } else { -0.5 };
        }
    }
    Ok(TrajectoryEnsemble { sx: Array2::from_elem((n, n_trajectories), 0.5), sy, sz })
}

/// Trajectory-averaged collective moments on the time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub times: Vec<f64>,
    pub mean_sx: Vec<f64>,
    pub var_sy: Vec<f64>,
    pub var_sz: Vec<f64>,
    pub cov_syz: Vec<f64>,
    /// Spin count (mean over realizations when averaged).
    pub n_spins: f64,
}

impl Moments {
    /// Element-wise mean over realizations.
    pub fn average(parts: &[Moments]) -> Result<Moments> {
        let first = parts.first().ok_or_else(|| SimError::invalid("parts", "nothing to average"))?;
        if parts.iter().any(|p| p.times != first.times) {
            return Err(SimError::invalid("parts", "time grids differ"));
        }
        let avg = |get: fn(&Moments) -> &Vec<f64>| -> Vec<f64> {
            (0..first.times.len())
                .map(|k| stats::mean(&parts.iter().map(|p| get(p)[k]).collect::<Vec<_>>()))
                .collect()
        };
        Ok(Moments {
            times: first.times.clone(),
            mean_sx: avg(|m| &m.mean_sx),
            var_sy: avg(|m| &m.var_sy),
            var_sz: avg(|m| &m.var_sz),
            cov_syz: avg(|m| &m.cov_syz),
            n_spins: stats::mean(&parts.iter().map(|p| p.n_spins).collect::<Vec<_>>()),
        })
    }

    pub fn series(&self) -> ObservableSeries {
        let xi2 = (0..self.times.len())
            .map(|k| squeezing_parameter(self.n_spins, self.mean_sx[k], self.var_sy[k], self.var_sz[k], self.cov_syz[k]))
            .collect();
        ObservableSeries {
            times: self.times.clone(),
            mean_sx: self.mean_sx.clone(),
            var_sy: self.var_sy.clone(),
            var_sz: self.var_sz.clone(),
            cov_syz: self.cov_syz.clone(),
            xi2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub mean_sx: Vec<f64>,
    pub var_sy: Vec<f64>,
    pub var_sz: Vec<f64>,
    pub cov_syz: Vec<f64>,
    pub xi2: Vec<f64>,
}

impl ObservableSeries {
    /// (min ξ², index) over the grid.
    pub fn min_xi2(&self) -> (f64, usize) {
        self.xi2
            .iter()
            .enumerate()
            .fold((f64::INFINITY, 0), |best, (k, &x)| if x < best.0 { (x, k) } else { best })
    }
}

/// Smallest variance over directions in the y–z plane.
pub fn min_transverse_variance(var_sy: f64, var_sz: f64, cov: f64) -> f64 {
    0.5 * (var_sy + var_sz - ((var_sy - var_sz).powi(2) + 4.0 * cov * cov).sqrt())
}

/// ξ² = N·min Var(S_⊥)/⟨S_x⟩²; +∞ when ⟨S_x⟩ vanishes.
pub fn squeezing_parameter(n_spins: f64, mean_sx: f64, var_sy: f64, var_sz: f64, cov: f64) -> f64 {
    if mean_sx == 0.0 {
        return f64::INFINITY;
    }
    n_spins * min_transverse_variance(var_sy, var_sz, cov) / (mean_sx * mean_sx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Diagnostics {
    /// Largest number of substeps used for one grid interval.
    pub max_substeps_per_interval: usize,
    /// Total integration steps, summed over batches.
    pub steps: u64,
    /// Mid-interval step halvings, summed over batches.
    pub step_halvings: u64,
    /// Largest per-step change of any |s_i|.
    pub max_norm_drift_per_step: f64,
    /// max over trajectories and times of |ΔE| / max(|E(0)|, ¼Σ_{i≠j}K_ij).
    pub max_energy_drift_rel: f64,
    /// max over trajectories and times of |ΔS_z|.
    pub max_sz_drift: f64,
}

impl Diagnostics {
    fn merge(&mut self, o: &Diagnostics) {
        self.steps += o.steps;
        self.step_halvings += o.step_halvings;
        self.max_substeps_per_interval = self.max_substeps_per_interval.max(o.max_substeps_per_interval);
        self.max_norm_drift_per_step = self.max_norm_drift_per_step.max(o.max_norm_drift_per_step);
        self.max_energy_drift_rel = self.max_energy_drift_rel.max(o.max_energy_drift_rel);
        self.max_sz_drift = self.max_sz_drift.max(o.max_sz_drift);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub moments: Moments,
    pub series: ObservableSeries,
    pub diagnostics: Diagnostics,
    /// Per-trajectory collective S_x, `n_times × T`.
    pub collective_sx: Array2<f64>,
}

struct BatchRecord {
    /// `n_times × B` each.
    sx: Array2<f64>,
    sy: Array2<f64>,
    sz: Array2<f64>,
    diagnostics: Diagnostics,
}

fn run_batch(
    lattice: &SpinLattice,
    cfg: &DtwaConfig,
    init: &TrajectoryEnsemble,
    range: std::ops::Range<usize>,
    frame_angle: f64,
) -> Result<BatchRecord> {
    let n = lattice.len();
    let b = range.len();
    let mut s = Array2::zeros((n, 3 * b));
    for (c, t) in range.clone().enumerate() {
        for i in 0..n {
            s[[i, c]] = init.sx[[i, t]];
            s[[i, b + c]] = init.sy[[i, t]];
            s[[i, 2 * b + c]] = init.sz[[i, t]];
        }
    }
    let lambda = cfg.anisotropy;
    let k = &lattice.couplings;
    let mut flow = Flow::new(k.clone(), 3 * b, lambda, cfg.integrator, cfg.rotation_bound);
    let mut scratch = Array2::zeros((n, 3 * b));
    let e0 = engine::energies(k, &s, lambda, &mut scratch);
    let scale = 0.25 * k.sum();
    let sz0: Vec<f64> = s.slice(ndarray::s![.., 2 * b..]).sum_axis(Axis(0)).to_vec();

    let times = cfg.times();
    let (c, sn) = (frame_angle.cos(), frame_angle.sin());
    let mut rec = BatchRecord {
        sx: Array2::zeros((times.len(), b)),
        sy: Array2::zeros((times.len(), b)),
        sz: Array2::zeros((times.len(), b)),
        diagnostics: Diagnostics::default(),
    };
    for (step, w) in times.windows(2).enumerate().map(|(i, w)| (i, Some(w))).chain(std::iter::once((times.len() - 1, None))) {
        let totals = s.sum_axis(Axis(0));
        for t in 0..b {
            let (x, y) = (totals[t], totals[b + t]);
            rec.sx[[step, t]] = c * x + sn * y;
            rec.sy[[step, t]] = -sn * x + c * y;
            rec.sz[[step, t]] = totals[2 * b + t];
        }
        if !totals.iter().all(|v| v.is_finite()) {
            return Err(SimError::Numeric(format!("non-finite spin components at grid point {step}")));
        }
        let e = engine::energies(k, &s, lambda, &mut scratch);
        let d = &mut rec.diagnostics;
        for t in 0..b {
            d.max_energy_drift_rel = d.max_energy_drift_rel.max((e[t] - e0[t]).abs() / e0[t].abs().max(scale));
            d.max_sz_drift = d.max_sz_drift.max((rec.sz[[step, t]] - sz0[t]).abs());
        }
        if let Some(w) = w {
            let used = flow.advance(&mut s, w[1] - w[0]);
            d.max_substeps_per_interval = d.max_substeps_per_interval.max(used);
        }
    }
    rec.diagnostics.max_norm_drift_per_step = flow.max_norm_drift;
    rec.diagnostics.steps = flow.steps;
    rec.diagnostics.step_halvings = flow.halvings;
    Ok(rec)
}

/// Evolve `init` on `lattice`; the readout frame is rotated by `frame_angle`
/// about z.
pub fn evolve_from(lattice: &SpinLattice, cfg: &DtwaConfig, init: &TrajectoryEnsemble, frame_angle: f64) -> Result<Evolution> {
    cfg.validate()?;
    let n = lattice.len();
    if init.n_spins() != n {
        return Err(SimError::invalid("init", "spin count differs from the lattice"));
    }
    let total = init.n_trajectories();
    if total < 2 {
        return Err(SimError::invalid("init", "need at least two trajectories"));
    }
    let ranges: Vec<std::ops::Range<usize>> =
        (0..total).step_by(cfg.batch_size).map(|s| s..(s + cfg.batch_size).min(total)).collect();
    let records: Vec<BatchRecord> = ranges
        .into_par_iter()
        .map(|r| run_batch(lattice, cfg, init, r, frame_angle))
        .collect::<Result<_>>()?;

    let times = cfg.times();
    let nt = times.len();
    let join = |get: fn(&BatchRecord) -> &Array2<f64>| -> Array2<f64> {
        let views: Vec<_> = records.iter().map(|r| get(r).view()).collect();
        ndarray::concatenate(Axis(1), &views).expect("equal row counts")
    };
    let (sx, sy, sz) = (join(|r| &r.sx), join(|r| &r.sy), join(|r| &r.sz));
    let mut diagnostics = Diagnostics::default();
    for r in &records {
        diagnostics.merge(&r.diagnostics);
    }
    let mut m = Moments {
        times: times.clone(),
        mean_sx: Vec::with_capacity(nt),
        var_sy: Vec::with_capacity(nt),
        var_sz: Vec::with_capacity(nt),
        cov_syz: Vec::with_capacity(nt),
        n_spins: n as f64,
    };
    for k in 0..nt {
        let (x, y, z) = (sx.row(k).to_vec(), sy.row(k).to_vec(), sz.row(k).to_vec());
        m.mean_sx.push(stats::mean(&x));
        let (my, mz) = (stats::mean(&y), stats::mean(&z));
        let denom = (total - 1) as f64;
        let dy: Vec<f64> = y.iter().map(|v| v - my).collect();
        let dz: Vec<f64> = z.iter().map(|v| v - mz).collect();
        m.var_sy.push(stats::pairwise_sum(&dy.iter().map(|v| v * v).collect::<Vec<_>>()) / denom);
        m.var_sz.push(stats::pairwise_sum(&dz.iter().map(|v| v * v).collect::<Vec<_>>()) / denom);
        m.cov_syz.push(stats::pairwise_sum(&dy.iter().zip(&dz).map(|(a, b)| a * b).collect::<Vec<_>>()) / denom);
    }
    debug!(
        "dtwa: {} spins, {} trajectories, {} steps, max substeps/interval {}",
        n, total, diagnostics.steps, diagnostics.max_substeps_per_interval
    );
    let series = m.series();
    Ok(Evolution { moments: m, series, diagnostics, collective_sx: sx })
}

/// Upper bound on any local field: 2·max(|λ|, 2)·|s|·max_i Σ_j K_ij.
pub fn static_field_bound(lattice: &SpinLattice, lambda: f64) -> f64 {
    let row_max = lattice.couplings.sum_axis(Axis(1)).iter().copied().fold(0.0, f64::max);
    2.0 * lambda.abs().max(2.0) * (3f64.sqrt() / 2.0) * row_max
}

/// Sample the coherent initial state and evolve it.
pub fn evolve(lattice: &SpinLattice, cfg: &DtwaConfig) -> Result<Evolution> {
    let init = sample_initial_state(lattice.len(), cfg.n_trajectories, cfg.seed)?;
    evolve_from(lattice, cfg, &init, 0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub label: String,
    pub spec: LatticeSpec,
    pub min_xi2: f64,
    pub t_opt: f64,
    pub xi2_initial: f64,
    pub mean_spins: f64,
    pub realizations: usize,
    pub series: ObservableSeries,
    pub diagnostics: Diagnostics,
}

/// Run every case over `n_realizations` geometries, averaging moments over
/// trajectories and then realizations before forming ξ².
pub fn squeeze_study(specs: &[LatticeSpec], cfg: &DtwaConfig, n_realizations: usize, seed: u64) -> Result<Vec<CaseResult>> {
    if n_realizations == 0 {
        return Err(SimError::invalid("n_realizations", "must be positive"));
    }
    if let Some(first) = specs.first() {
        if specs.iter().any(|s| (s.areal_density() / first.areal_density() - 1.0).abs() > 1e-12) {
            return Err(SimError::invalid("specs", "cases must share the areal density"));
        }
    }
    let mut out = Vec::with_capacity(specs.len());
    for (c, spec) in specs.iter().enumerate() {
        let mut parts = Vec::with_capacity(n_realizations);
        let mut diagnostics = Diagnostics::default();
        for r in 0..n_realizations {
            let unit = ((c as u64) << 32) | r as u64;
            let lattice = build_lattice(spec, rng::sub_seed(seed, Domain::LatticeGeometry, unit))?;
            let run_cfg = DtwaConfig { seed: rng::sub_seed(seed, Domain::InitialState, unit), ..*cfg };
            let ev = evolve(&lattice, &run_cfg)?;
            diagnostics.merge(&ev.diagnostics);
            parts.push(ev.moments);
        }
        let avg = Moments::average(&parts)?;
        let series = avg.series();
        let (min_xi2, k) = series.min_xi2();
        info!("dtwa case {}: min xi2 {:.4} at t = {:.3e} s", spec.kind.label(), min_xi2, series.times[k]);
        out.push(CaseResult {
            label: spec.kind.label().to_string(),
            spec: *spec,
            min_xi2,
            t_opt: series.times[k],
            xi2_initial: series.xi2[0],
            mean_spins: avg.n_spins,
            realizations: n_realizations,
            series,
            diagnostics,
        });
    }
    Ok(out)
}

/// The four cases of the squeezing comparison at lattice constant 20 nm.
pub fn default_cases() -> Vec<LatticeSpec> {
    [LatticeKind::Square, LatticeKind::SquareDisordered, LatticeKind::SquareDiluted, LatticeKind::Random]
        .into_iter()
        .map(LatticeSpec::new)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_variance_examples() {
        assert_eq!(min_transverse_variance(2.0, 1.0, 0.0), 1.0);
        assert!((min_transverse_variance(1.0, 1.0, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(squeezing_parameter(10.0, 0.0, 1.0, 1.0, 0.0), f64::INFINITY);
    }

    #[test]
    fn sampling_law() {
        let e = sample_initial_state(10, 400, 3).unwrap();
        assert!(e.sx.iter().all(|&v| v == 0.5));
        assert!(e.sy.iter().chain(e.sz.iter()).all(|&v| v.abs() == 0.5));
        let m = e.sy.mean().unwrap();
        assert!(m.abs() < 3.0 / (4000f64).sqrt());
        assert_eq!(sample_initial_state(10, 400, 3).unwrap(), e);
        let short = sample_initial_state(10, 50, 3).unwrap();
        assert_eq!(short.sy, e.sy.slice(ndarray::s![.., ..50]));
    }

    fn small_cfg(t_max: f64, n_times: usize, n_traj: usize) -> DtwaConfig {
        DtwaConfig {
            n_trajectories: n_traj,
            t_max,
            n_times,
            anisotropy: 1.0,
            integrator: Integrator::Rk4,
            rotation_bound: 0.01,
            batch_size: 64,
            seed: 1,
        }
    }

    /// Ensemble listing every ±½ combination of (s_y, s_z) exactly once.
    fn enumerated(n: usize) -> TrajectoryEnsemble {
        let t = 1usize << (2 * n);
        let mut sy = Array2::zeros((n, t));
        let mut sz = Array2::zeros((n, t));
        for c in 0..t {
            for i in 0..n {
                sy[[i, c]] = if c >> (2 * i) & 1 == 1 { 0.5 } else { -0.5 };
                sz[[i, c]] = if c >> (2 * i + 1) & 1 == 1 { 0.5 } else { -0.5 };
            }
        }
        TrajectoryEnsemble { sx: Array2::from_elem((n, t), 0.5), sy, sz }
    }

    #[test]
    fn ising_limit_matches_product_formula() {
        let pos = vec![[0.0, 0.0], [5.0, 0.0], [0.0, 7.0]];
        let lat = SpinLattice::from_positions(pos, 1e6).unwrap();
        let k = lat.couplings.clone();
        let mut cfg = small_cfg(2e-4, 11, 64);
        cfg.anisotropy = 0.0;
        let ev = evolve_from(&lat, &cfg, &enumerated(3), 0.0).unwrap();
        for (step, &t) in ev.moments.times.iter().enumerate() {
            let expect: f64 = (0..3)
                .map(|i| 0.5 * (0..3).filter(|&j| j != i).map(|j| (2.0 * k[[i, j]] * t).cos()).product::<f64>())
                .sum();
            assert!((ev.moments.mean_sx[step] - expect).abs() < 1e-8, "t={t}");
        }
    }

    #[test]
    fn zero_coupling_is_static() {
        let lat = SpinLattice::from_positions(vec![[0.0, 0.0], [10.0, 0.0]], 0.0).unwrap();
        let cfg = small_cfg(1e-3, 5, 40);
        let init = sample_initial_state(2, 40, 9).unwrap();
        let ev = evolve_from(&lat, &cfg, &init, 0.0).unwrap();
        assert!(ev.moments.mean_sx.iter().all(|&v| v == 1.0));
        assert_eq!(ev.moments.var_sy.first(), ev.moments.var_sy.last());
        assert!((ev.series.xi2[0] - ev.series.xi2[4]).abs() < 1e-15);
    }

    /// Exact two-spin dynamics in the 4-dimensional Hilbert space.
    fn exact_pair(k: f64, lambda: f64, times: &[f64]) -> Vec<(f64, f64)> {
        use nalgebra::{Complex, DMatrix, DVector, SymmetricEigen};
        let c = |r: f64, i: f64| Complex::new(r, i);
        let sx = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0)]);
        let sy = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -0.5), c(0.0, 0.5), c(0.0, 0.0)]);
        let sz = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)]);
        let id = DMatrix::<Complex<f64>>::identity(2, 2);
        let one = |a: &DMatrix<Complex<f64>>| a.kronecker(&id);
        let two = |a: &DMatrix<Complex<f64>>| id.kronecker(a);
        let (x1, x2, y1, y2, z1, z2) = (one(&sx), two(&sx), one(&sy), two(&sy), one(&sz), two(&sz));
        // Both orderings of the pair appear in the sum over i ≠ j.
        let h = (&x1 * &x2 + &y1 * &y2) * c(-2.0 * k * lambda, 0.0) + &z1 * &z2 * c(4.0 * k, 0.0);
        let eig = SymmetricEigen::new(h.map(|v| v.re));
        let v = eig.eigenvectors.map(|r| c(r, 0.0));
        let plus = DVector::from_element(4, c(0.5, 0.0));
        let (tx, ty, tz) = (&x1 + &x2, &y1 + &y2, &z1 + &z2);
        times
            .iter()
            .map(|&t| {
                let phase = DMatrix::from_diagonal(&eig.eigenvalues.map(|e| Complex::from_polar(1.0, -e * t)));
                let psi = &v * phase * v.adjoint() * &plus;
                let ex = |o: &DMatrix<Complex<f64>>| (psi.adjoint() * o * &psi)[(0, 0)].re;
                let anti = &ty * &tz + &tz * &ty;
                let cov = 0.5 * ex(&anti) - ex(&ty) * ex(&tz);
                (ex(&tx), cov)
            })
            .collect()
    }

    #[test]
    fn two_spins_follow_exact_dynamics_at_short_times() {
        let k = 1e6;
        let lat = SpinLattice::from_positions(vec![[0.0, 0.0], [10.0, 0.0]], k * 1000.0).unwrap();
        let cfg = small_cfg(0.3 / k, 7, 16);
        let ev = evolve_from(&lat, &cfg, &enumerated(2), 0.0).unwrap();
        let exact = exact_pair(k, 1.0, &ev.moments.times);
        // |h|·t ≤ 2√3·K·t stays below 1 through t = 0.25/K.
        for (step, (sx, cov)) in exact.iter().enumerate().skip(1).take(5) {
            assert!((ev.moments.mean_sx[step] / sx - 1.0).abs() < 0.01, "sx {} vs {sx}", ev.moments.mean_sx[step]);
            // The enumerated ensemble uses 1/(T−1) normalization.
            let sim = ev.moments.cov_syz[step] * 15.0 / 16.0;
            assert!(sim * cov > 0.0, "covariance sign {sim} vs {cov}");
            assert!((sim / cov - 1.0).abs() < 0.1, "cov {sim} vs {cov}");
        }
    }

    #[test]
    fn rotating_state_and_frame_leaves_moments_unchanged() {
        let lat = build_lattice(&LatticeSpec { rows: 3, cols: 3, ..LatticeSpec::new(LatticeKind::SquareDisordered) }, 2).unwrap();
        let mut cfg = small_cfg(3.0 / 6.5e3 / 6.28, 6, 60);
        cfg.anisotropy = 0.7;
        let init = sample_initial_state(lat.len(), 60, 5).unwrap();
        let a = evolve_from(&lat, &cfg, &init, 0.0).unwrap();
        let b = evolve_from(&lat, &cfg, &init.rotated_about_z(0.9), 0.9).unwrap();
        for k in 0..6 {
            assert!((a.moments.mean_sx[k] - b.moments.mean_sx[k]).abs() < 1e-9);
            assert!((a.moments.var_sz[k] - b.moments.var_sz[k]).abs() < 1e-9);
            assert!((a.moments.cov_syz[k] - b.moments.cov_syz[k]).abs() < 1e-9);
        }
    }

    #[test]
    fn ideal_array_squeezes_and_conserves() {
        let spec = LatticeSpec { rows: 4, cols: 4, ..LatticeSpec::new(LatticeKind::Square) };
        let lat = build_lattice(&spec, 0).unwrap();
        let cfg = DtwaConfig { n_trajectories: 200, n_times: 40, ..DtwaConfig::for_lattice(&spec) };
        let ev = evolve(&lat, &cfg).unwrap();
        assert!((ev.series.xi2[0] - 1.0).abs() < 0.3);
        assert!(ev.series.min_xi2().0 < 0.7);
        assert!(ev.diagnostics.max_norm_drift_per_step < 1e-6);
        assert!(ev.diagnostics.max_energy_drift_rel < 1e-3);
        assert!(ev.diagnostics.max_sz_drift < 1e-9);
    }

    #[test]
    fn rejects_bad_config() {
        let spec = LatticeSpec::new(LatticeKind::Square);
        let mut cfg = DtwaConfig::for_lattice(&spec);
        cfg.rotation_bound = 0.5;
        assert!(matches!(cfg.validate(), Err(SimError::InvalidInput { field: "rotation_bound", .. })));
        cfg = DtwaConfig { n_times: 1, ..DtwaConfig::for_lattice(&spec) };
        assert!(cfg.validate().is_err());
    }
}
