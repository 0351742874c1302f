//! Monte Carlo NV-ensemble relaxometry: sensor sampling, rates over realized
//! spin fields, density sweeps and correlation-time extraction.

use crate::constants::{PhysicalConstants, T1_PRISTINE, TAU_C_GD};
use crate::error::{Result, SimError};
use crate::origami::{
    self, LabelPattern, OrigamiDeposition, OrigamiDesign, Region,
};
use crate::physics::{self, default_nv_axis, Kernel, NvSensor, SpinSpecies};
use crate::quadrature::{self, Tolerance};
use crate::rng::{self, Domain};
use crate::minimize::golden_section;
use crate::stats::{self, LineFit};
use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_4, TAU};

/// Sampled NV depths are truncated below this (nm).
pub const MIN_DEPTH_NM: f64 = 1.0;
pub const SENSING_RADIUS_NM: f64 = 4.0;
pub const DEFAULT_SPOT_RADIUS_NM: f64 = 150.0;
pub const DEFAULT_CUTOFF_NM: f64 = 60.0;

// Relative floor on per-point standard errors so a noiseless point (σ = 0
// gives every NV exactly 3Ω′) keeps a finite weight.
const SEM_FLOOR_REL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DepthDistribution {
    Normal { mean_nm: f64, std_nm: f64 },
    Fixed { depth_nm: f64 },
    /// (depth nm, weight) pairs.
    Tabulated { table: Vec<[f64; 2]> },
}

impl Default for DepthDistribution {
    fn default() -> Self {
        DepthDistribution::Normal { mean_nm: 4.5, std_nm: 1.5 }
    }
}

impl DepthDistribution {
    pub fn validate(&self) -> Result<()> {
        match self {
            DepthDistribution::Normal { mean_nm, std_nm } => {
                if !(*mean_nm > 0.0) || !(*std_nm >= 0.0) {
                    return Err(SimError::invalid("depth", "normal depth needs mean > 0 and std >= 0"));
                }
                if *mean_nm + 6.0 * std_nm <= MIN_DEPTH_NM {
                    return Err(SimError::invalid("depth", "almost no mass above the 1 nm truncation"));
                }
                if *std_nm == 0.0 && *mean_nm <= MIN_DEPTH_NM {
                    return Err(SimError::invalid("depth", "degenerate depth at or above the surface cutoff"));
                }
            }
            DepthDistribution::Fixed { depth_nm } => {
                if !(*depth_nm > MIN_DEPTH_NM) {
                    return Err(SimError::invalid("depth", format!("fixed depth must exceed {MIN_DEPTH_NM} nm")));
                }
            }
            DepthDistribution::Tabulated { table } => {
                if table.is_empty() || table.iter().any(|[d, w]| !(*d > MIN_DEPTH_NM) || !(*w >= 0.0)) {
                    return Err(SimError::invalid("depth", "table needs depths > 1 nm and non-negative weights"));
                }
                if !(table.iter().map(|e| e[1]).sum::<f64>() > 0.0) {
                    return Err(SimError::invalid("depth", "table weights sum to zero"));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            DepthDistribution::Normal { mean_nm, std_nm } => loop {
                let z: f64 = StandardNormal.sample(rng);
                let d = mean_nm + std_nm * z;
                if d > MIN_DEPTH_NM {
                    return d;
                }
            },
            DepthDistribution::Fixed { depth_nm } => *depth_nm,
            DepthDistribution::Tabulated { table } => {
                let total: f64 = table.iter().map(|e| e[1]).sum();
                let mut u = rng.random::<f64>() * total;
                for [d, w] in table {
                    if u < *w {
                        return *d;
                    }
                    u -= w;
                }
                table[table.len() - 1][0]
            }
        }
    }

    /// Expectation of `f(depth)` under the truncated distribution.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        match self {
            DepthDistribution::Normal { mean_nm, std_nm } if *std_nm > 0.0 => {
                let density = |d: f64| (-0.5 * ((d - mean_nm) / std_nm).powi(2)).exp();
                let hi = mean_nm + 12.0 * std_nm;
                let tol = Tolerance { rel: 1e-10, ..Tolerance::default() };
                let norm = quadrature::integrate(density, MIN_DEPTH_NM, hi, tol)?.value;
                let num = quadrature::integrate(|d| f(d) * density(d), MIN_DEPTH_NM, hi, tol)?.value;
                Ok(num / norm)
            }
            DepthDistribution::Normal { mean_nm, .. } => Ok(f(*mean_nm)),
            DepthDistribution::Fixed { depth_nm } => Ok(f(*depth_nm)),
            DepthDistribution::Tabulated { table } => {
                let total: f64 = table.iter().map(|e| e[1]).sum();
                Ok(table.iter().map(|[d, w]| w * f(*d)).sum::<f64>() / total)
            }
        }
    }

    pub fn mean_depth(&self) -> Result<f64> {
        self.expect(|d| d)
    }
}

/// In-plane orientation of the NV axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AxisMode {
    /// Every NV shares one axis with this azimuth.
    Fixed { azimuth_deg: f64 },
    /// Each NV takes one of the four ⟨111⟩ orientations at random.
    #[default]
    FourFold,
}

impl AxisMode {
    fn sample<R: Rng>(&self, rng: &mut R) -> Vector3<f64> {
        match self {
            AxisMode::Fixed { azimuth_deg } => default_nv_axis(azimuth_deg.to_radians()),
            AxisMode::FourFold => {
                let k = rng.random_range(0..4u32);
                default_nv_axis(FRAC_PI_4 * (2 * k + 1) as f64)
            }
        }
    }
}

/// Parameters of one NV-ensemble measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub consts: PhysicalConstants,
    /// Spin-label correlation time, s.
    pub tau_c: f64,
    /// Ω′, 1/s.
    pub intrinsic_rate: f64,
    pub depth: DepthDistribution,
    pub axis: AxisMode,
    pub n_nv: usize,
    /// NVs are spread uniformly over a disk of this radius (nm).
    pub spot_radius_nm: f64,
    /// Spins farther than this from an NV are ignored (nm).
    pub cutoff_nm: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            consts: PhysicalConstants::default(),
            tau_c: TAU_C_GD,
            intrinsic_rate: PhysicalConstants::intrinsic_rate_for_t1(T1_PRISTINE),
            depth: DepthDistribution::default(),
            axis: AxisMode::default(),
            n_nv: 1000,
            spot_radius_nm: DEFAULT_SPOT_RADIUS_NM,
            cutoff_nm: DEFAULT_CUTOFF_NM,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        self.species().validate()?;
        self.depth.validate()?;
        if self.n_nv == 0 {
            return Err(SimError::invalid("n_nv", "need at least one NV"));
        }
        if !(self.intrinsic_rate >= 0.0) {
            return Err(SimError::invalid("intrinsic_rate", "must be non-negative"));
        }
        if !(self.spot_radius_nm > 0.0) || !(self.cutoff_nm > 0.0) {
            return Err(SimError::invalid("spot_radius_nm", "spot radius and cutoff must be positive"));
        }
        Ok(())
    }

    pub fn species(&self) -> SpinSpecies {
        SpinSpecies::gd(&self.consts, self.tau_c)
    }

    /// Spin realizations must cover the spot plus one cutoff on each side.
    pub fn region(&self) -> Region {
        Region::centered_square(self.spot_radius_nm + self.cutoff_nm)
    }
}

/// Draw `cfg.n_nv` sensors. Sensor `i` depends only on `(seed, i)`.
pub fn sample_nvs(cfg: &EnsembleConfig, seed: u64) -> Result<Vec<NvSensor>> {
    cfg.validate()?;
    (0..cfg.n_nv as u64)
        .map(|i| {
            let mut rng = rng::stream(seed, Domain::NvSampling, i);
            let r = cfg.spot_radius_nm * rng.random::<f64>().sqrt();
            let phi = rng.random_range(0.0..TAU);
            let depth = cfg.depth.sample(&mut rng);
            let axis = cfg.axis.sample(&mut rng);
            NvSensor::new(
                Vector3::new(r * phi.cos(), r * phi.sin(), -depth),
                axis,
                cfg.consts.omega0,
                cfg.intrinsic_rate,
            )
        })
        .collect()
}

/// Spin positions bucketed on a square grid with cell size equal to the cutoff.
#[derive(Debug, Clone)]
pub struct SpinField {
    cutoff: f64,
    cells: HashMap<(i64, i64), Vec<Vector3<f64>>>,
    len: usize,
}

impl SpinField {
    pub fn new(positions: &[Vector3<f64>], cutoff: f64) -> Self {
        let mut cells: HashMap<(i64, i64), Vec<Vector3<f64>>> = HashMap::new();
        for p in positions {
            cells.entry(Self::cell(p, cutoff)).or_default().push(*p);
        }
        Self { cutoff, cells, len: positions.len() }
    }

    fn cell(p: &Vector3<f64>, cutoff: f64) -> (i64, i64) {
        ((p.x / cutoff).floor() as i64, (p.y / cutoff).floor() as i64)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// 3Ω′ plus the pair rates of every spin within the cutoff.
    pub fn total_rate(&self, consts: &PhysicalConstants, species: &SpinSpecies, nv: &NvSensor) -> Result<f64> {
        let (cx, cy) = Self::cell(&nv.position, self.cutoff);
        let cut2 = self.cutoff * self.cutoff;
        let mut terms = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(spins) = self.cells.get(&(cx + dx, cy + dy)) else { continue };
                for p in spins {
                    if (p - nv.position).norm_squared() <= cut2 {
                        terms.push(physics::pair_relaxation_rate(consts, nv, &species.label_at(*p))?);
                    }
                }
            }
        }
        Ok(3.0 * nv.intrinsic_rate + stats::pairwise_sum(&terms))
    }
}

/// Per-NV total rates, evaluated in parallel; output order follows `nvs`.
pub fn ensemble_rates(cfg: &EnsembleConfig, nvs: &[NvSensor], field: &SpinField) -> Result<Vec<f64>> {
    let species = cfg.species();
    nvs.par_iter().map(|nv| field.total_rate(&cfg.consts, &species, nv)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub mean: f64,
    pub std: f64,
    pub sem: f64,
    pub median: f64,
    pub n_spins: usize,
    pub achieved_coverage: f64,
    #[serde(skip)]
    pub rates: Vec<f64>,
}

impl EnsembleStats {
    /// `baseline` (3Ω′) is subtracted before averaging so a bare surface
    /// reports it exactly.
    pub fn from_rates(rates: Vec<f64>, baseline: f64, n_spins: usize, achieved_coverage: f64) -> Self {
        let n = rates.len() as f64;
        let excess: Vec<f64> = rates.iter().map(|r| r - baseline).collect();
        let std = if rates.len() > 1 { stats::std_dev(&excess) } else { 0.0 };
        Self {
            mean: baseline + stats::mean(&excess),
            std,
            sem: std / n.sqrt(),
            median: stats::median(&rates),
            n_spins,
            achieved_coverage,
            rates,
        }
    }
}

/// Realize one surface, sample NVs under it and summarize their total rates.
pub fn ensemble_mean_rate(
    design: &OrigamiDesign,
    pattern: &LabelPattern,
    dep: &OrigamiDeposition,
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<EnsembleStats> {
    cfg.validate()?;
    let realization = origami::realize_spin_positions(design, pattern, dep, &cfg.region(), seed)?;
    let nvs = sample_nvs(cfg, seed)?;
    let field = SpinField::new(&realization.positions, cfg.cutoff_nm);
    let rates = ensemble_rates(cfg, &nvs, &field)?;
    Ok(EnsembleStats::from_rates(rates, 3.0 * cfg.intrinsic_rate, realization.len(), realization.achieved_coverage))
}

/// One breadboard configuration (N_b occupied sites, M labels each, coverage C_s).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub n_b: usize,
    pub m: u32,
    pub coverage: f64,
}

impl SweepConfig {
    pub const fn new(n_b: usize, m: u32, coverage: f64) -> Self {
        Self { n_b, m, coverage }
    }
}

/// Eight configurations spanning σ from 0 to ≈0.11 nm⁻².
pub fn default_sweep_configs() -> Vec<SweepConfig> {
    vec![
        SweepConfig::new(204, 0, 0.88),
        SweepConfig::new(51, 1, 0.88),
        SweepConfig::new(102, 1, 0.88),
        SweepConfig::new(204, 1, 0.88),
        SweepConfig::new(204, 2, 0.60),
        SweepConfig::new(204, 2, 0.88),
        SweepConfig::new(204, 3, 0.88),
        SweepConfig::new(204, 4, 1.00),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub config: SweepConfig,
    pub sigma_gd: f64,
    pub n_gd: f64,
    pub rate_mean: f64,
    pub rate_std: f64,
    pub rate_sem: f64,
    pub rate_median: f64,
    pub achieved_coverage: f64,
    /// Standard error assigned to `rate_mean` in the line fit.
    pub fit_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub fit: LineFit,
    pub pearson_r: f64,
    pub tau_c: f64,
    pub intrinsic_rate: f64,
}

impl SweepResult {
    pub fn rate_points(&self) -> Vec<RatePoint> {
        self.points
            .iter()
            .map(|p| RatePoint { sigma_gd: p.sigma_gd, rate: p.rate_mean, rate_se: p.fit_se })
            .collect()
    }
}

/// Mean rate versus engineered density across `configs`; configuration `i`
/// draws from its own sub-seed of `seed`.
pub fn density_sweep(
    configs: &[SweepConfig],
    design: &OrigamiDesign,
    base: &OrigamiDeposition,
    cfg: &EnsembleConfig,
    seed: u64,
) -> Result<SweepResult> {
    if configs.len() < 3 {
        return Err(SimError::invalid("configs", "need at least three configurations"));
    }
    let mut points = Vec::with_capacity(configs.len());
    for (i, c) in configs.iter().enumerate() {
        let pattern = LabelPattern::evenly_spaced(c.n_b, c.m, design)?;
        let dep = OrigamiDeposition { coverage: c.coverage, ..*base };
        let sigma_gd = origami::gd_surface_density(&pattern, &dep, design);
        let st = ensemble_mean_rate(design, &pattern, &dep, cfg, rng::sub_seed(seed, Domain::SweepConfig, i as u64))?;
        points.push(SweepPoint {
            config: *c,
            sigma_gd,
            n_gd: origami::density_to_ngd(sigma_gd, SENSING_RADIUS_NM),
            rate_mean: st.mean,
            rate_std: st.std,
            rate_sem: st.sem,
            rate_median: st.median,
            achieved_coverage: st.achieved_coverage,
            fit_se: st.sem,
        });
    }
    let x: Vec<f64> = points.iter().map(|p| p.sigma_gd).collect();
    let y: Vec<f64> = points.iter().map(|p| p.rate_mean).collect();
    let fit = fit_sweep_line(&mut points, 3.0 * cfg.intrinsic_rate, cfg.n_nv)?;
    let pearson_r = stats::pearson(&x, &y)?;
    Ok(SweepResult { points, fit, pearson_r, tau_c: cfg.tau_c, intrinsic_rate: cfg.intrinsic_rate })
}

/// Weighted line fit of a sweep, filling in each point's `fit_se`.
///
/// Per-NV rates are heavy-tailed, and a mean that missed its upper tail
/// also has a small sample SEM; weighting by each point's own SEM therefore
/// pulls the slope low (by ≈3% at 1000 NVs). Instead the scatter is modeled
/// as a pooled multiple of the fitted spin-induced excess slope·σ, iterated
/// to convergence. Noiseless points keep a tiny floor.
fn fit_sweep_line(points: &mut [SweepPoint], baseline: f64, n_nv: usize) -> Result<LineFit> {
    let x: Vec<f64> = points.iter().map(|p| p.sigma_gd).collect();
    let y: Vec<f64> = points.iter().map(|p| p.rate_mean).collect();
    let floor = |p: &SweepPoint| (SEM_FLOOR_REL * p.rate_mean.abs()).max(f64::MIN_POSITIVE);
    let excess: f64 = points.iter().map(|p| (p.rate_mean - baseline).max(0.0)).sum();
    let spread: f64 = points.iter().map(|p| p.rate_std).sum();
    let rel = if excess > 0.0 { spread / excess } else { 0.0 };
    let mut fit = stats::weighted_line_fit(&x, &y, &vec![1.0; x.len()])?;
    for _ in 0..4 {
        for p in points.iter_mut() {
            let model = rel * (fit.slope * p.sigma_gd).max(0.0) / (n_nv as f64).sqrt();
            p.fit_se = model.max(floor(p));
        }
        let se: Vec<f64> = points.iter().map(|p| p.fit_se).collect();
        fit = stats::weighted_line_fit(&x, &y, &se)?;
    }
    Ok(fit)
}

/// A measured (or synthetic) rate at a known density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePoint {
    pub sigma_gd: f64,
    pub rate: f64,
    pub rate_se: f64,
}

/// Rate slope per unit areal density per unit Lorentzian filter value, i.e.
/// slope(τ) = `per_lorentzian` · τ/(1+ω0²τ²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeCalibration {
    pub per_lorentzian: f64,
    pub intrinsic_rate: f64,
    pub omega0: f64,
}

impl SlopeCalibration {
    pub fn slope(&self, tau_c: f64) -> f64 {
        self.per_lorentzian * physics::lorentzian(tau_c, self.omega0)
    }
}

/// Calibrate the slope by simulating `replicas` independent sweeps at
/// `cfg.tau_c` and averaging their slopes.
pub fn calibrate_slope(
    configs: &[SweepConfig],
    design: &OrigamiDesign,
    base: &OrigamiDeposition,
    cfg: &EnsembleConfig,
    replicas: usize,
    seed: u64,
) -> Result<SlopeCalibration> {
    if replicas == 0 {
        return Err(SimError::invalid("replicas", "need at least one calibration sweep"));
    }
    let slopes: Vec<f64> = (0..replicas as u64)
        .map(|r| density_sweep(configs, design, base, cfg, rng::derive_seed(seed, r)).map(|s| s.fit.slope))
        .collect::<Result<_>>()?;
    let per_lorentzian = stats::mean(&slopes) / physics::lorentzian(cfg.tau_c, cfg.consts.omega0);
    Ok(SlopeCalibration { per_lorentzian, intrinsic_rate: cfg.intrinsic_rate, omega0: cfg.consts.omega0 })
}

/// Calibrate the slope from the infinite-plane integral averaged over depths.
pub fn plane_slope_calibration(cfg: &EnsembleConfig, standoff_nm: f64, kernel: Kernel) -> Result<SlopeCalibration> {
    cfg.validate()?;
    let species = cfg.species();
    let axis = default_nv_axis(0.0);
    // plane rate ∝ 1/(depth + standoff)⁴; evaluate the prefactor once.
    let d_ref = 1.0;
    let at_ref = physics::plane_integrated_rate(&cfg.consts, &species, d_ref, 1.0, 0.0, kernel, &axis)?;
    let slope = cfg.depth.expect(|d| at_ref * (d_ref / (d + standoff_nm)).powi(4))?;
    Ok(SlopeCalibration {
        per_lorentzian: slope / physics::lorentzian(cfg.tau_c, cfg.consts.omega0),
        intrinsic_rate: cfg.intrinsic_rate,
        omega0: cfg.consts.omega0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TauBranch {
    /// τ < 1/ω0.
    Short,
    /// τ > 1/ω0 (Gd³⁺ at room temperature).
    #[default]
    Long,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauFitOptions {
    /// Search interval for τ_c, s.
    pub bounds: (f64, f64),
    pub branch: TauBranch,
    pub grid_points: usize,
}

impl Default for TauFitOptions {
    fn default() -> Self {
        Self { bounds: (1e-11, 1e-8), branch: TauBranch::Long, grid_points: 400 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauFit {
    pub tau_c: f64,
    /// From the χ² curvature at the minimum; infinite if flat.
    pub tau_c_se: f64,
    pub chi2: f64,
    /// Both branches fit the data within two standard errors.
    pub ambiguous: bool,
    /// Closed-form short and long roots; empty when the data slope exceeds
    /// the Lorentzian maximum.
    pub roots: Vec<f64>,
    /// Best-fit value of τ/(1+ω0²τ²), s.
    pub lorentzian: f64,
}

/// One-dimensional least squares for τ_c with the intercept fixed at 3Ω′.
pub fn fit_tau_c(data: &[RatePoint], cal: &SlopeCalibration, opts: &TauFitOptions) -> Result<TauFit> {
    if data.len() < 2 {
        return Err(SimError::invalid("data", "need at least two points"));
    }
    let (lo, hi) = opts.bounds;
    if !(lo >= 1e-12 && hi <= 1e-7 && lo < hi) {
        return Err(SimError::invalid("bounds", "must satisfy 1 ps <= lo < hi <= 100 ns"));
    }
    if data.iter().any(|p| !(p.rate_se > 0.0)) {
        return Err(SimError::invalid("rate_se", "standard errors must be positive"));
    }
    if !(cal.per_lorentzian > 0.0) {
        return Err(SimError::DegenerateFit("calibration slope is not positive".into()));
    }
    let base = 3.0 * cal.intrinsic_rate;
    let chi2 = |tau: f64| {
        let slope = cal.slope(tau);
        data.iter()
            .map(|p| ((p.rate - base - slope * p.sigma_gd) / p.rate_se).powi(2))
            .sum::<f64>()
    };

    // Closed form in the Lorentzian value L: linear least squares.
    let sxx: f64 = data.iter().map(|p| (p.sigma_gd / p.rate_se).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(SimError::DegenerateFit("all densities are zero".into()));
    }
    let sxy: f64 = data.iter().map(|p| p.sigma_gd * (p.rate - base) / p.rate_se.powi(2)).sum();
    let l_star = sxy / (cal.per_lorentzian * sxx);
    let l_se = 1.0 / (cal.per_lorentzian * sxx.sqrt());
    let w0 = cal.omega0;
    let l_max = 1.0 / (2.0 * w0);
    let disc = 1.0 - 4.0 * w0 * w0 * l_star * l_star;
    let roots = if l_star > 0.0 && disc >= 0.0 {
        let s = disc.sqrt();
        vec![(1.0 - s) / (2.0 * w0 * w0 * l_star), (1.0 + s) / (2.0 * w0 * w0 * l_star)]
    } else {
        vec![]
    };
    let ambiguous = l_max - l_star <= 2.0 * l_se;

    // Numerical route: log-grid scan on the requested branch, golden refinement.
    let peak = 1.0 / w0;
    let (a, b) = match opts.branch {
        TauBranch::Long => (lo.max(peak), hi),
        TauBranch::Short => (lo, hi.min(peak)),
    };
    if !(a < b) {
        return Err(SimError::invalid("bounds", "the requested branch lies outside the bounds"));
    }
    let n = opts.grid_points.max(16);
    let (la, lb) = (a.ln(), b.ln());
    let grid: Vec<f64> = (0..n).map(|k| (la + (lb - la) * k as f64 / (n - 1) as f64).exp()).collect();
    let values: Vec<f64> = grid.iter().map(|&t| chi2(t)).collect();
    let kmin = (0..n).min_by(|&i, &j| values[i].total_cmp(&values[j])).unwrap_or(0);
    let (ga, gb) = (grid[kmin.saturating_sub(1)].ln(), grid[(kmin + 1).min(n - 1)].ln());
    let ln_tau = golden_section(|x| chi2(x.exp()), ga, gb, 1e-12);
    let tau = ln_tau.exp();

    let at_peak_edge = match opts.branch {
        TauBranch::Long => a == peak,
        TauBranch::Short => b == peak,
    };
    let touches = |edge: f64| (tau / edge).ln().abs() < 1e-6;
    let bound_hit = (touches(a) && !(at_peak_edge && opts.branch == TauBranch::Long))
        || (touches(b) && !(at_peak_edge && opts.branch == TauBranch::Short));
    if bound_hit {
        return Err(SimError::FitNonConvergence {
            reason: format!("tau_c minimizer {tau:.4e} s sits on a search bound"),
            best: vec![tau],
        });
    }

    let h = 1e-3 * tau;
    let curv = (chi2(tau + h) - 2.0 * chi2(tau) + chi2(tau - h)) / (h * h);
    let tau_c_se = if curv > 0.0 { (2.0 / curv).sqrt() } else { f64::INFINITY };
    Ok(TauFit {
        tau_c: tau,
        tau_c_se,
        chi2: chi2(tau),
        ambiguous,
        roots,
        lorentzian: l_star,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(n_nv: usize) -> EnsembleConfig {
        EnsembleConfig { n_nv, ..Default::default() }
    }

    #[test]
    fn depth_sampling_respects_truncation() {
        let d = DepthDistribution::Normal { mean_nm: 1.5, std_nm: 2.0 };
        let mut rng = rng::stream(3, Domain::NvSampling, 0);
        assert!((0..2000).all(|_| d.sample(&mut rng) > MIN_DEPTH_NM));
        assert!(DepthDistribution::Fixed { depth_nm: 0.5 }.validate().is_err());
        assert!(DepthDistribution::Normal { mean_nm: -1.0, std_nm: 1.0 }.validate().is_err());
    }

    #[test]
    fn truncated_normal_mean_exceeds_untruncated() {
        let d = DepthDistribution::Normal { mean_nm: 4.5, std_nm: 1.5 };
        // μ + s·φ(a)/(1 − Φ(a)) with a = (1 − μ)/s, from scipy.
        let m = d.mean_depth().unwrap();
        assert!((m - 4.539722725242848).abs() < 1e-9, "{m}");
        let t = DepthDistribution::Tabulated { table: vec![[2.0, 1.0], [6.0, 3.0]] };
        assert!((t.mean_depth().unwrap() - 5.0).abs() < 1e-15);
    }

    #[test]
    fn bare_surface_gives_intrinsic_rate() {
        let d = OrigamiDesign::default();
        let p = LabelPattern::evenly_spaced(204, 0, &d).unwrap();
        let cfg = small_cfg(50);
        let st = ensemble_mean_rate(&d, &p, &OrigamiDeposition::default(), &cfg, 1).unwrap();
        assert_eq!(st.mean, 3.0 * cfg.intrinsic_rate);
        assert_eq!(st.std, 0.0);
    }

    #[test]
    fn single_spin_matches_pair_kernel() {
        let cfg = small_cfg(1);
        let nv = sample_nvs(&cfg, 9).unwrap()[0];
        let spin = nv.position + Vector3::new(1.0, -2.0, nv.depth() + 1.5);
        let field = SpinField::new(&[spin], cfg.cutoff_nm);
        let got = ensemble_rates(&cfg, &[nv], &field).unwrap()[0];
        let want = physics::pair_relaxation_rate(&cfg.consts, &nv, &cfg.species().label_at(spin)).unwrap()
            + 3.0 * cfg.intrinsic_rate;
        assert_eq!(got, want);
    }

    #[test]
    fn four_fold_axes_are_unit_and_symmetric() {
        let cfg = small_cfg(400);
        let nvs = sample_nvs(&cfg, 5).unwrap();
        let mean: Vector3<f64> = nvs.iter().map(|n| n.axis).sum::<Vector3<f64>>() / nvs.len() as f64;
        assert!(mean.x.abs() < 0.1 && mean.y.abs() < 0.1);
        assert!((mean.z - 1.0 / 3f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn closed_form_and_scan_agree() {
        let cal = SlopeCalibration { per_lorentzian: 1e15, intrinsic_rate: 175.0, omega0: 2.0 * std::f64::consts::PI * 2.87e9 };
        let tau = 0.18e-9;
        let data: Vec<RatePoint> = [0.0, 0.02, 0.05, 0.1]
            .iter()
            .map(|&s| RatePoint { sigma_gd: s, rate: 525.0 + cal.slope(tau) * s, rate_se: 10.0 })
            .collect();
        let fit = fit_tau_c(&data, &cal, &TauFitOptions::default()).unwrap();
        assert!((fit.tau_c / tau - 1.0).abs() < 1e-8, "{}", fit.tau_c);
        assert!((fit.roots[1] / tau - 1.0).abs() < 1e-12);
        assert!(!fit.ambiguous);
        let short = fit_tau_c(&data, &cal, &TauFitOptions { branch: TauBranch::Short, ..Default::default() }).unwrap();
        assert!((short.tau_c / fit.roots[0] - 1.0).abs() < 1e-8);
    }
}
