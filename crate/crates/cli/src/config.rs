//! Run configuration: strict JSON with unit-suffixed keys.
//!
//! Every block has defaults, so `{}` is a complete configuration. Values are
//! resolved in order: defaults, config file, `OSS_*` environment variables,
//! command-line flags.

use crate::error::CliError;
use oss_core::assay::{self, AptamerPanel, ReadoutModel};
use oss_core::constants::{self as k, PhysicalConstants};
use oss_core::decay::log_spaced;
use oss_core::dtwa::{self, DtwaConfig, Integrator, LatticeSpec};
use oss_core::origami::{self, OrigamiDeposition, OrigamiDesign, PlacementMode};
use oss_core::physics::Kernel;
use oss_core::relaxometry::{
    self, AxisMode, DepthDistribution, EnsembleConfig, SweepConfig, TauBranch, TauFitOptions,
};
use oss_core::SimError;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::f64::consts::PI;
use std::path::Path;

pub const ENV_PREFIX: &str = "OSS_";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    RelaxometrySweep,
    FitTauC,
    DecayFit,
    DtwaStudy,
    AssaySweep,
    LayoutExport,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::RelaxometrySweep => "relaxometry-sweep",
            ExperimentKind::FitTauC => "fit-tau-c",
            ExperimentKind::DecayFit => "decay-fit",
            ExperimentKind::DtwaStudy => "dtwa-study",
            ExperimentKind::AssaySweep => "assay-sweep",
            ExperimentKind::LayoutExport => "layout-export",
        }
    }
}

/// Which encodings tabular outputs are written in. Summaries, the config
/// echo and the manifest are always JSON.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Formats {
    Csv,
    Json,
    #[default]
    Both,
}

impl Formats {
    pub fn csv(&self) -> bool {
        matches!(self, Formats::Csv | Formats::Both)
    }

    pub fn json(&self) -> bool {
        matches!(self, Formats::Json | Formats::Both)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub experiment: Option<ExperimentKind>,
    pub master_seed: u64,
    pub output_dir: String,
    pub formats: Formats,
    pub physics: PhysicsBlock,
    pub layout: LayoutBlock,
    pub relaxometry: RelaxometryBlock,
    pub tau_fit: TauFitBlock,
    pub decay: DecayBlock,
    pub dtwa: DtwaBlock,
    pub assay: AssayBlock,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: None,
            master_seed: 0,
            output_dir: "oss-out".into(),
            formats: Formats::Both,
            physics: PhysicsBlock::default(),
            layout: LayoutBlock::default(),
            relaxometry: RelaxometryBlock::default(),
            tau_fit: TauFitBlock::default(),
            decay: DecayBlock::default(),
            dtwa: DtwaBlock::default(),
            assay: AssayBlock::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsBlock {
    pub tau_c_ns: f64,
    /// Bare-surface NV T1; sets Ω′ = 1/(3·T1).
    pub t1_pristine_ms: f64,
    pub g_gd: f64,
    pub spin_gd: f64,
    pub zero_field_ghz: f64,
    pub gamma_nv_ghz_per_t: f64,
    pub mu0_t_m_per_a: f64,
    pub hbar_j_s: f64,
}

impl Default for PhysicsBlock {
    fn default() -> Self {
        Self {
            tau_c_ns: 0.18,
            t1_pristine_ms: 1.9,
            g_gd: k::G_GD,
            spin_gd: k::S_GD,
            zero_field_ghz: 2.87,
            gamma_nv_ghz_per_t: 28.024,
            mu0_t_m_per_a: k::MU0,
            hbar_j_s: k::HBAR,
        }
    }
}

impl PhysicsBlock {
    pub fn constants(&self) -> PhysicalConstants {
        PhysicalConstants {
            mu0: self.mu0_t_m_per_a,
            hbar: self.hbar_j_s,
            gamma_nv: 2.0 * PI * self.gamma_nv_ghz_per_t * 1e9,
            g_gd: self.g_gd,
            omega0: 2.0 * PI * self.zero_field_ghz * 1e9,
            spin_gd: self.spin_gd,
        }
    }

    pub fn tau_c_s(&self) -> f64 {
        self.tau_c_ns * 1e-9
    }

    pub fn intrinsic_rate(&self) -> f64 {
        PhysicalConstants::intrinsic_rate_for_t1(self.t1_pristine_ms * 1e-3)
    }

    fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("tau_c_ns", self.tau_c_ns),
            ("t1_pristine_ms", self.t1_pristine_ms),
            ("g_gd", self.g_gd),
            ("spin_gd", self.spin_gd),
            ("zero_field_ghz", self.zero_field_ghz),
            ("gamma_nv_ghz_per_t", self.gamma_nv_ghz_per_t),
            ("mu0_t_m_per_a", self.mu0_t_m_per_a),
            ("hbar_j_s", self.hbar_j_s),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(field_error(&format!("physics.{name}"), format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Breadboard design and deposition. `n_b`, `labels_per_site` and
/// `coverage` describe the labeled surface used by layout export and the
/// labeled decay curve; density sweeps take them per configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LayoutBlock {
    pub side_length_nm: f64,
    pub n_b: usize,
    pub labels_per_site: u32,
    pub coverage: f64,
    pub standoff_nm: f64,
    pub mode: PlacementMode,
    pub linker_radius_nm: f64,
    /// Half-width of the exported square region.
    pub region_half_width_nm: f64,
}

impl Default for LayoutBlock {
    fn default() -> Self {
        Self {
            side_length_nm: origami::DEFAULT_SIDE_NM,
            n_b: origami::DEFAULT_SITE_COUNT,
            labels_per_site: origami::MAX_LABELS_PER_SITE,
            coverage: 0.88,
            standoff_nm: origami::DEFAULT_STANDOFF_NM,
            mode: PlacementMode::default(),
            linker_radius_nm: origami::DEFAULT_LINKER_RADIUS_NM,
            region_half_width_nm: 500.0,
        }
    }
}

impl LayoutBlock {
    pub fn design(&self) -> Result<OrigamiDesign, CliError> {
        OrigamiDesign::default_site_grid(self.side_length_nm).map_err(|e| prefixed("layout", e))
    }

    pub fn deposition(&self) -> OrigamiDeposition {
        OrigamiDeposition {
            coverage: self.coverage,
            standoff_nm: self.standoff_nm,
            mode: self.mode,
            linker_radius_nm: self.linker_radius_nm,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let design = self.design()?;
        self.deposition().validate().map_err(|e| prefixed("layout", e))?;
        origami::LabelPattern::evenly_spaced(self.n_b, self.labels_per_site, &design).map_err(|e| prefixed("layout", e))?;
        if !(self.region_half_width_nm > 0.0) || !self.region_half_width_nm.is_finite() {
            return Err(field_error("layout.region_half_width_nm", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RelaxometryBlock {
    pub n_nv: usize,
    pub spot_radius_nm: f64,
    pub cutoff_nm: f64,
    pub depth: DepthDistribution,
    pub axis: AxisMode,
    pub configs: Vec<SweepConfig>,
}

impl Default for RelaxometryBlock {
    fn default() -> Self {
        Self {
            n_nv: 1000,
            spot_radius_nm: relaxometry::DEFAULT_SPOT_RADIUS_NM,
            cutoff_nm: relaxometry::DEFAULT_CUTOFF_NM,
            depth: DepthDistribution::default(),
            axis: AxisMode::default(),
            configs: relaxometry::default_sweep_configs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Calibration {
    /// Slope from a simulated sweep with its own seed.
    #[default]
    Simulated,
    /// Slope from the depth-averaged infinite-plane integral.
    Plane,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TauFitBlock {
    /// CSV with columns sigma_gd, rate_mean, rate_sem; when absent a sweep
    /// is simulated at `physics.tau_c_ns`.
    pub data_path: Option<String>,
    pub calibration: Calibration,
    /// Independent sweeps averaged by the simulated calibration.
    pub calibration_replicas: usize,
    pub kernel: Kernel,
    pub bounds_ns: [f64; 2],
    pub branch: TauBranch,
    pub grid_points: usize,
}

impl Default for TauFitBlock {
    fn default() -> Self {
        let d = TauFitOptions::default();
        Self {
            data_path: None,
            calibration: Calibration::default(),
            calibration_replicas: 8,
            kernel: Kernel::default(),
            bounds_ns: [d.bounds.0 * 1e9, d.bounds.1 * 1e9],
            branch: d.branch,
            grid_points: d.grid_points,
        }
    }
}

impl TauFitBlock {
    pub fn options(&self) -> TauFitOptions {
        TauFitOptions {
            bounds: (self.bounds_ns[0] * 1e-9, self.bounds_ns[1] * 1e-9),
            branch: self.branch,
            grid_points: self.grid_points,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DecaySource {
    /// Pristine and labeled curves from simulated NV ensembles.
    #[default]
    Ensemble,
    /// Stretched exponentials listed in `curves`.
    Synthetic,
    /// A measured curve read from `input_path`.
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub label: String,
    pub t1_us: f64,
    pub stretch: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecayBlock {
    pub source: DecaySource,
    /// CSV with columns tau_s, signal and optionally noise_std.
    pub input_path: Option<String>,
    pub noise_std: f64,
    pub n_points: usize,
    pub tau_min_us: f64,
    pub tau_max_us: f64,
    pub curves: Vec<CurveSpec>,
}

impl Default for DecayBlock {
    fn default() -> Self {
        Self {
            source: DecaySource::Ensemble,
            input_path: None,
            noise_std: 0.02,
            n_points: 30,
            tau_min_us: 1.0,
            tau_max_us: 10_000.0,
            curves: vec![
                CurveSpec { label: "pristine".into(), t1_us: 1900.0, stretch: 0.83 },
                CurveSpec { label: "labeled".into(), t1_us: 88.0, stretch: 0.75 },
            ],
        }
    }
}

impl DecayBlock {
    pub fn taus(&self) -> Vec<f64> {
        log_spaced(self.tau_min_us * 1e-6, self.tau_max_us * 1e-6, self.n_points)
    }

    fn validate(&self) -> Result<(), CliError> {
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return Err(field_error("decay.noise_std", "must be non-negative"));
        }
        if self.n_points < 5 {
            return Err(field_error("decay.n_points", "need at least five points"));
        }
        if !(self.tau_min_us > 0.0 && self.tau_max_us > self.tau_min_us) || !self.tau_max_us.is_finite() {
            return Err(field_error("decay.tau_min_us", "need 0 < tau_min_us < tau_max_us"));
        }
        match self.source {
            DecaySource::File if self.input_path.is_none() => {
                Err(field_error("decay.input_path", "required when source is \"file\""))
            }
            DecaySource::Synthetic if self.curves.is_empty() => {
                Err(field_error("decay.curves", "need at least one curve"))
            }
            DecaySource::Synthetic => {
                for (i, c) in self.curves.iter().enumerate() {
                    if !(c.t1_us > 0.0) {
                        return Err(field_error(&format!("decay.curves[{i}].t1_us"), "must be positive"));
                    }
                    if !(c.stretch > 0.2 && c.stretch <= 2.0) {
                        return Err(field_error(&format!("decay.curves[{i}].stretch"), "must lie in (0.2, 2]"));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DtwaBlock {
    pub cases: Vec<LatticeSpec>,
    pub n_trajectories: usize,
    pub n_realizations: usize,
    /// End of the time grid; defaults to four nearest-neighbor periods
    /// 4·a³/J of the first case.
    pub t_max_us: Option<f64>,
    pub n_times: usize,
    pub anisotropy: f64,
    pub integrator: Integrator,
    pub rotation_bound_rad: f64,
    pub batch_size: usize,
}

impl Default for DtwaBlock {
    fn default() -> Self {
        let d = DtwaConfig::for_lattice(&LatticeSpec::default());
        Self {
            cases: dtwa::default_cases(),
            n_trajectories: d.n_trajectories,
            n_realizations: 10,
            t_max_us: None,
            n_times: d.n_times,
            anisotropy: d.anisotropy,
            integrator: d.integrator,
            rotation_bound_rad: d.rotation_bound,
            batch_size: d.batch_size,
        }
    }
}

impl DtwaBlock {
    pub fn config(&self, seed: u64) -> DtwaConfig {
        let first = self.cases.first().copied().unwrap_or_default();
        let base = DtwaConfig::for_lattice(&first);
        DtwaConfig {
            n_trajectories: self.n_trajectories,
            t_max: self.t_max_us.map_or(base.t_max, |t| t * 1e-6),
            n_times: self.n_times,
            anisotropy: self.anisotropy,
            integrator: self.integrator,
            rotation_bound: self.rotation_bound_rad,
            batch_size: self.batch_size,
            seed,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.cases.is_empty() {
            return Err(field_error("dtwa.cases", "need at least one case"));
        }
        for (i, c) in self.cases.iter().enumerate() {
            c.validate().map_err(|e| prefixed(&format!("dtwa.cases[{i}]"), e))?;
        }
        if self.n_realizations == 0 {
            return Err(field_error("dtwa.n_realizations", "must be positive"));
        }
        self.config(0).validate().map_err(|e| match e {
            SimError::InvalidInput { field: "t_max", reason } => field_error("dtwa.t_max_us", reason),
            SimError::InvalidInput { field: "rotation_bound", reason } => field_error("dtwa.rotation_bound_rad", reason),
            e => prefixed("dtwa", e),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AssayBlock {
    pub kd_molar: Vec<f64>,
    pub conc_min_molar: f64,
    pub conc_max_molar: f64,
    pub conc_count: usize,
    pub k_on_per_molar_s: f64,
    pub aptamer_amount_mol: f64,
    pub sensing_area_um2: f64,
    pub sample_volume_ul: f64,
    pub depletion: bool,
    pub counts_per_shot: f64,
    pub overhead_ms: f64,
    pub t1_on_us: f64,
    pub t1_off_ms: f64,
    pub stretch: f64,
    pub snr_target: f64,
}

impl Default for AssayBlock {
    fn default() -> Self {
        let p = AptamerPanel::default();
        let r = ReadoutModel::default();
        Self {
            kd_molar: assay::DEFAULT_KDS.to_vec(),
            conc_min_molar: 1e-15,
            conc_max_molar: 1e-6,
            conc_count: 20,
            k_on_per_molar_s: p.k_on_per_molar_s,
            aptamer_amount_mol: p.aptamer_amount_mol,
            sensing_area_um2: p.sensing_area_um2,
            sample_volume_ul: 1.0,
            depletion: p.depletion,
            counts_per_shot: r.counts_per_shot,
            overhead_ms: 5.0,
            t1_on_us: 88.0,
            t1_off_ms: 1.9,
            stretch: r.stretch,
            snr_target: r.snr_target,
        }
    }
}

impl AssayBlock {
    pub fn panel(&self) -> AptamerPanel {
        AptamerPanel {
            kd_molar: self.kd_molar.first().copied().unwrap_or(1e-9),
            k_on_per_molar_s: self.k_on_per_molar_s,
            aptamer_amount_mol: self.aptamer_amount_mol,
            sensing_area_um2: self.sensing_area_um2,
            sample_volume_l: self.sample_volume_ul * 1e-6,
            depletion: self.depletion,
        }
    }

    pub fn readout(&self) -> ReadoutModel {
        ReadoutModel {
            counts_per_shot: self.counts_per_shot,
            overhead_s: self.overhead_ms * 1e-3,
            t1_on_s: self.t1_on_us * 1e-6,
            t1_off_s: self.t1_off_ms * 1e-3,
            stretch: self.stretch,
            snr_target: self.snr_target,
        }
    }

    pub fn concentrations(&self) -> Vec<f64> {
        log_spaced(self.conc_min_molar, self.conc_max_molar, self.conc_count)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.kd_molar.is_empty() {
            return Err(field_error("assay.kd_molar", "need at least one value"));
        }
        for (i, kd) in self.kd_molar.iter().enumerate() {
            if !(*kd > 0.0) || !kd.is_finite() {
                return Err(field_error(&format!("assay.kd_molar[{i}]"), "must be positive"));
            }
        }
        if !(self.conc_min_molar > 0.0 && self.conc_max_molar >= self.conc_min_molar) || !self.conc_max_molar.is_finite() {
            return Err(field_error("assay.conc_min_molar", "need 0 < conc_min_molar <= conc_max_molar"));
        }
        if self.conc_count == 0 {
            return Err(field_error("assay.conc_count", "must be positive"));
        }
        let rename = |f: &str| match f {
            "sample_volume_l" => "sample_volume_ul".to_string(),
            "overhead_s" => "overhead_ms".to_string(),
            "t1_on_s" => "t1_on_us".to_string(),
            "t1_off_s" => "t1_off_ms".to_string(),
            other => other.to_string(),
        };
        let map = |e: SimError| match e {
            SimError::InvalidInput { field, reason } => field_error(&format!("assay.{}", rename(field)), reason),
            e => CliError::from(e),
        };
        self.panel().validate().map_err(map)?;
        self.readout().validate().map_err(map)
    }
}

impl RunConfig {
    /// Ensemble parameters shared by the relaxometry experiments.
    pub fn ensemble(&self) -> EnsembleConfig {
        EnsembleConfig {
            consts: self.physics.constants(),
            tau_c: self.physics.tau_c_s(),
            intrinsic_rate: self.physics.intrinsic_rate(),
            depth: self.relaxometry.depth.clone(),
            axis: self.relaxometry.axis,
            n_nv: self.relaxometry.n_nv,
            spot_radius_nm: self.relaxometry.spot_radius_nm,
            cutoff_nm: self.relaxometry.cutoff_nm,
        }
    }

    /// Check every block the experiment uses.
    pub fn validate(&self) -> Result<(), CliError> {
        let kind = self.experiment.ok_or_else(|| field_error("experiment", "no experiment selected"))?;
        if self.output_dir.is_empty() {
            return Err(field_error("output_dir", "must not be empty"));
        }
        self.physics.validate()?;
        let relax = || -> Result<(), CliError> {
            self.layout.validate()?;
            self.ensemble().validate().map_err(|e| prefixed("relaxometry", e))?;
            let design = self.layout.design()?;
            for (i, c) in self.relaxometry.configs.iter().enumerate() {
                let path = format!("relaxometry.configs[{i}]");
                origami::LabelPattern::evenly_spaced(c.n_b, c.m, &design).map_err(|e| prefixed(&path, e))?;
                OrigamiDeposition { coverage: c.coverage, ..self.layout.deposition() }
                    .validate()
                    .map_err(|e| prefixed(&path, e))?;
            }
            Ok(())
        };
        match kind {
            ExperimentKind::RelaxometrySweep => {
                relax()?;
                if self.relaxometry.configs.len() < 3 {
                    return Err(field_error("relaxometry.configs", "need at least three configurations"));
                }
            }
            ExperimentKind::FitTauC => {
                relax()?;
                let [lo, hi] = self.tau_fit.bounds_ns;
                if !(lo >= 1e-3 && hi <= 100.0 && lo < hi) {
                    return Err(field_error("tau_fit.bounds_ns", "must satisfy 0.001 <= lo < hi <= 100"));
                }
                if self.tau_fit.calibration_replicas == 0 {
                    return Err(field_error("tau_fit.calibration_replicas", "must be positive"));
                }
                if self.tau_fit.data_path.is_none() && self.relaxometry.configs.len() < 3 {
                    return Err(field_error("relaxometry.configs", "need at least three configurations"));
                }
            }
            ExperimentKind::DecayFit => {
                self.decay.validate()?;
                if self.decay.source == DecaySource::Ensemble {
                    relax()?;
                }
            }
            ExperimentKind::DtwaStudy => self.dtwa.validate()?,
            ExperimentKind::AssaySweep => self.assay.validate()?,
            ExperimentKind::LayoutExport => self.layout.validate()?,
        }
        Ok(())
    }

    /// Canonical JSON text of this configuration.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }
}

fn field_error(path: &str, reason: impl Into<String>) -> CliError {
    CliError::Config(format!("{path}: {}", reason.into()))
}

fn prefixed(block: &str, e: SimError) -> CliError {
    match e {
        SimError::InvalidInput { field, reason } => field_error(&format!("{block}.{field}"), reason),
        e => CliError::from(e),
    }
}

/// Strict parse of JSON text; unknown keys and type errors name their path.
pub fn parse_config_str(text: &str) -> Result<RunConfig, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        let path = e.path().to_string();
        if inner.is_syntax() || inner.is_eof() {
            CliError::Config(format!("malformed JSON at line {}, column {}: {inner}", inner.line(), inner.column()))
        } else {
            CliError::Config(format!("{path}: {inner}"))
        }
    })?;
    Ok(cfg)
}

pub fn parse_config_file(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

/// Apply `OSS_<PATH>` overrides, where PATH is the uppercased key path joined
/// by underscores (e.g. `OSS_PHYSICS_TAU_C_NS`). Values are parsed as JSON,
/// falling back to a plain string.
pub fn apply_env<I: IntoIterator<Item = (String, String)>>(cfg: RunConfig, vars: I) -> Result<RunConfig, CliError> {
    let vars: Vec<(String, String)> = vars.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    if vars.is_empty() {
        return Ok(cfg);
    }
    let mut tree = serde_json::to_value(&cfg).expect("config serializes");
    let mut leaves = Vec::new();
    collect_leaves(&tree, &mut Vec::new(), &mut leaves);
    let mut applied = Vec::new();
    for path in leaves {
        let name = format!("{ENV_PREFIX}{}", path.join("_").to_uppercase());
        if let Some((_, raw)) = vars.iter().find(|(k, _)| *k == name) {
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
            let mut slot = &mut tree;
            for key in &path {
                slot = slot.get_mut(key.as_str()).expect("leaf path exists");
            }
            *slot = value;
            applied.push(name);
        }
    }
    for (k, _) in &vars {
        if !applied.contains(k) {
            log::warn!("environment variable {k} does not match any config key");
        }
    }
    serde_path_to_error::deserialize(tree).map_err(|e| CliError::Config(format!("{} (from environment): {}", e.path(), e.inner())))
}

fn collect_leaves(v: &Value, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                prefix.push(k.clone());
                collect_leaves(child, prefix, out);
                prefix.pop();
            }
        }
        _ => out.push(prefix.clone()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_a_full_config() {
        let mut c = parse_config_str("{}").unwrap();
        assert_eq!(c, RunConfig::default());
        c.experiment = Some(ExperimentKind::RelaxometrySweep);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_key_names_its_path() {
        let e = parse_config_str(r#"{"physics": {"tau_c": 0.18}}"#).unwrap_err();
        assert!(e.to_string().contains("physics.tau_c"), "{e}");
        assert_eq!(e.exit_code(), 2);
        let e = parse_config_str(r#"{"dtwa": {"cases": [{"kind": "square", "spacing": 1}]}}"#).unwrap_err();
        assert!(e.to_string().contains("dtwa.cases[0].spacing"), "{e}");
    }

    #[test]
    fn malformed_json_reports_position() {
        let e = parse_config_str("{\n  \"master_seed\": 3,\n}").unwrap_err();
        assert!(e.to_string().contains("line 3"), "{e}");
    }

    #[test]
    fn negative_lattice_constant_is_named() {
        let c = parse_config_str(r#"{"experiment": "dtwa-study", "dtwa": {"cases": [{"kind": "square", "a_nm": -20}]}}"#).unwrap();
        let e = c.validate().unwrap_err();
        assert!(e.to_string().starts_with("dtwa.cases[0].a_nm"), "{e}");
    }

    #[test]
    fn default_constants_match_core() {
        let c = PhysicsBlock::default();
        let k = c.constants();
        assert!((k.omega0 / k::OMEGA0_NV - 1.0).abs() < 1e-15);
        assert!((k.gamma_nv / k::GAMMA_NV - 1.0).abs() < 1e-15);
        assert_eq!(c.tau_c_s(), 0.18e-9);
    }

    #[test]
    fn env_overrides_leaf_values() {
        let vars = vec![
            ("OSS_PHYSICS_TAU_C_NS".to_string(), "0.2".to_string()),
            ("OSS_DTWA_N_TRAJECTORIES".to_string(), "64".to_string()),
            ("OSS_TAU_FIT_DATA_PATH".to_string(), "data.csv".to_string()),
            ("HOME".to_string(), "/".to_string()),
        ];
        let c = apply_env(RunConfig::default(), vars).unwrap();
        assert_eq!(c.physics.tau_c_ns, 0.2);
        assert_eq!(c.dtwa.n_trajectories, 64);
        assert_eq!(c.tau_fit.data_path.as_deref(), Some("data.csv"));
        let bad = apply_env(RunConfig::default(), vec![("OSS_DTWA_N_TIMES".to_string(), "many".to_string())]);
        assert!(bad.unwrap_err().to_string().contains("dtwa.n_times"));
    }
}
