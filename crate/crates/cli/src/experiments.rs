//! One pipeline per experiment kind. Each returns its output files; writing
//! happens in [`crate::run`].

use crate::config::{Calibration, DecaySource, ExperimentKind, RunConfig};
use crate::error::CliError;
use crate::output::{float_json, json_bytes, Artifact, Cell, Table, Timing};
use log::info;
use oss_core::assay::{self, DetectionOutcome};
use oss_core::decay::{self, DecayCurve, DecayFit, DecayGuess};
use oss_core::dtwa;
use oss_core::origami::{self, LabelPattern, OrigamiDeposition, Region};
use oss_core::relaxometry::{self, RatePoint, SweepConfig, SweepResult};
use oss_core::rng::{self, Domain};
use serde_json::{json, Value};
use std::path::Path;
use std::time::Instant;

/// Collects artifacts and stage timings for one run.
pub struct Outputs {
    pub artifacts: Vec<Artifact>,
    pub timings: Vec<Timing>,
    csv: bool,
    json: bool,
}

impl Outputs {
    fn new(cfg: &RunConfig) -> Self {
        Self { artifacts: Vec::new(), timings: Vec::new(), csv: cfg.formats.csv(), json: cfg.formats.json() }
    }

    /// Add a table as `<stem>.csv` and/or `<stem>.json`.
    fn table(&mut self, stem: &str, t: &Table) {
        if self.csv {
            self.artifacts.push(Artifact::new(format!("{stem}.csv"), t.to_csv()));
        }
        if self.json {
            self.artifacts.push(Artifact::new(format!("{stem}.json"), t.to_json()));
        }
    }

    fn summary(&mut self, name: &str, v: &Value) {
        self.artifacts.push(Artifact::new(name, json_bytes(v)));
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T, CliError>) -> Result<T, CliError> {
        let start = Instant::now();
        let out = f()?;
        let seconds = start.elapsed().as_secs_f64();
        info!("{stage}: {seconds:.2} s");
        self.timings.push(Timing { stage: stage.into(), seconds });
        Ok(out)
    }
}

pub fn execute(cfg: &RunConfig) -> Result<Outputs, CliError> {
    let kind = cfg.experiment.ok_or_else(|| CliError::Config("experiment: no experiment selected".into()))?;
    let mut out = Outputs::new(cfg);
    match kind {
        ExperimentKind::RelaxometrySweep => relaxometry_sweep(cfg, &mut out)?,
        ExperimentKind::FitTauC => fit_tau_c(cfg, &mut out)?,
        ExperimentKind::DecayFit => decay_fit(cfg, &mut out)?,
        ExperimentKind::DtwaStudy => dtwa_study(cfg, &mut out)?,
        ExperimentKind::AssaySweep => assay_sweep(cfg, &mut out)?,
        ExperimentKind::LayoutExport => layout_export(cfg, &mut out)?,
    }
    Ok(out)
}

fn simulate_sweep(cfg: &RunConfig, seed: u64) -> Result<SweepResult, CliError> {
    let design = cfg.layout.design()?;
    Ok(relaxometry::density_sweep(&cfg.relaxometry.configs, &design, &cfg.layout.deposition(), &cfg.ensemble(), seed)?)
}

fn sweep_table(s: &SweepResult) -> Table {
    let mut t = Table::new(&[
        "sigma_gd", "n_gd", "rate_mean", "rate_std", "rate_sem", "fit_se", "rate_median", "n_b", "m", "coverage", "achieved_coverage",
    ]);
    for p in &s.points {
        t.push(vec![
            p.sigma_gd.into(),
            p.n_gd.into(),
            p.rate_mean.into(),
            p.rate_std.into(),
            p.rate_sem.into(),
            p.fit_se.into(),
            p.rate_median.into(),
            p.config.n_b.into(),
            p.config.m.into(),
            p.config.coverage.into(),
            p.achieved_coverage.into(),
        ]);
    }
    t
}

fn sweep_summary(s: &SweepResult) -> Value {
    let baseline = 3.0 * s.intrinsic_rate;
    json!({
        "configurations": s.points.len(),
        "tau_c_ns": s.tau_c * 1e9,
        "baseline_rate_hz": baseline,
        "slope_hz_nm2": s.fit.slope,
        "slope_se_hz_nm2": s.fit.slope_se,
        "intercept_hz": s.fit.intercept,
        "intercept_se_hz": s.fit.intercept_se,
        "intercept_offset_in_se": float_json((s.fit.intercept - baseline) / s.fit.intercept_se),
        "chi2": s.fit.chi2,
        "pearson_r": s.pearson_r,
    })
}

fn relaxometry_sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let sweep = out.timed("density_sweep", || simulate_sweep(cfg, cfg.master_seed))?;
    info!("pearson r {:.5}, slope {:.4e} Hz nm^2", sweep.pearson_r, sweep.fit.slope);
    out.table("sweep", &sweep_table(&sweep));
    out.summary("sweep_summary.json", &sweep_summary(&sweep));
    Ok(())
}

/// Rate data for a τ_c fit: columns sigma_gd, rate_mean and either fit_se
/// (as written by a simulated sweep) or rate_sem.
pub fn read_rate_points(path: &Path) -> Result<Vec<RatePoint>, CliError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let headers = r.headers().map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Config(format!("{}: missing column {name}", path.display())))
    };
    let ce = col("fit_se").or_else(|_| col("rate_sem"))?;
    let (cs, cr) = (col("sigma_gd")?, col("rate_mean")?);
    let mut points = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        let num = |c: usize| {
            rec.get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Config(format!("{}: row {} has a non-numeric field", path.display(), i + 1)))
        };
        points.push(RatePoint { sigma_gd: num(cs)?, rate: num(cr)?, rate_se: num(ce)? });
    }
    Ok(points)
}

fn fit_tau_c(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let design = cfg.layout.design()?;
    let ens = cfg.ensemble();
    let data = match &cfg.tau_fit.data_path {
        Some(p) => read_rate_points(Path::new(p))?,
        None => {
            let sweep = out.timed("data_sweep", || simulate_sweep(cfg, cfg.master_seed))?;
            out.table("sweep", &sweep_table(&sweep));
            out.summary("sweep_summary.json", &sweep_summary(&sweep));
            sweep.rate_points()
        }
    };
    let cal = out.timed("calibration", || {
        Ok(match cfg.tau_fit.calibration {
            Calibration::Simulated => relaxometry::calibrate_slope(
                &cfg.relaxometry.configs,
                &design,
                &cfg.layout.deposition(),
                &ens,
                cfg.tau_fit.calibration_replicas,
                rng::sub_seed(cfg.master_seed, Domain::TauFit, 0),
            )?,
            Calibration::Plane => relaxometry::plane_slope_calibration(&ens, cfg.layout.standoff_nm, cfg.tau_fit.kernel)?,
        })
    })?;
    let fit = relaxometry::fit_tau_c(&data, &cal, &cfg.tau_fit.options())?;
    info!("tau_c = {:.4} ns (se {:.2e} ns)", fit.tau_c * 1e9, fit.tau_c_se * 1e9);

    let base = 3.0 * cal.intrinsic_rate;
    let slope = cal.slope(fit.tau_c);
    let mut t = Table::new(&["sigma_gd", "rate_mean", "rate_sem", "model_rate"]);
    for p in &data {
        t.push(vec![p.sigma_gd.into(), p.rate.into(), p.rate_se.into(), (base + slope * p.sigma_gd).into()]);
    }
    out.table("tau_fit_points", &t);
    out.summary(
        "tau_fit.json",
        &json!({
            "tau_c_ns": fit.tau_c * 1e9,
            "tau_c_se_ns": float_json(fit.tau_c_se * 1e9),
            "chi2": fit.chi2,
            "ambiguous": fit.ambiguous,
            "roots_ns": fit.roots.iter().map(|r| r * 1e9).collect::<Vec<_>>(),
            "lorentzian_s": fit.lorentzian,
            "calibration": cfg.tau_fit.calibration,
            "slope_per_lorentzian": cal.per_lorentzian,
            "baseline_rate_hz": base,
        }),
    );
    Ok(())
}

/// A measured decay: columns tau_s, signal and optionally noise_std.
pub fn read_decay_curve(path: &Path) -> Result<DecayCurve, CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(io)?;
    let headers = r.headers().map_err(io)?.clone();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let ct = find("tau_s").ok_or_else(|| CliError::Config(format!("{}: missing column tau_s", path.display())))?;
    let cs = find("signal").ok_or_else(|| CliError::Config(format!("{}: missing column signal", path.display())))?;
    let cn = find("noise_std");
    let mut curve = DecayCurve { taus: vec![], signal: vec![], noise_std: vec![] };
    for (i, rec) in r.records().enumerate() {
        let rec = rec.map_err(io)?;
        let num = |c: usize| {
            rec.get(c)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| CliError::Config(format!("{}: row {} has a non-numeric field", path.display(), i + 1)))
        };
        curve.taus.push(num(ct)?);
        curve.signal.push(num(cs)?);
        curve.noise_std.push(match cn {
            Some(c) => num(c)?,
            None => 0.0,
        });
    }
    curve.validate()?;
    Ok(curve)
}

fn decay_model(fit: &DecayFit, tau: f64) -> f64 {
    fit.amplitude * (-(tau / fit.t1).powf(fit.n)).exp()
}

fn decay_fit(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let d = &cfg.decay;
    let taus = d.taus();
    let seed = |i: usize| rng::sub_seed(cfg.master_seed, Domain::DecayNoise, i as u64);
    let curves: Vec<(String, DecayCurve)> = match d.source {
        DecaySource::File => {
            let path = d.input_path.as_deref().expect("validated");
            vec![("measured".into(), read_decay_curve(Path::new(path))?)]
        }
        DecaySource::Synthetic => d
            .curves
            .iter()
            .enumerate()
            .map(|(i, c)| Ok((c.label.clone(), decay::synthesize_decay(c.t1_us * 1e-6, c.stretch, &taus, d.noise_std, seed(i))?)))
            .collect::<Result<_, CliError>>()?,
        DecaySource::Ensemble => {
            let design = cfg.layout.design()?;
            let dep = cfg.layout.deposition();
            let ens = cfg.ensemble();
            let surfaces = [("pristine", 0u32), ("labeled", cfg.layout.labels_per_site)];
            let mut v = Vec::new();
            for (i, (label, m)) in surfaces.into_iter().enumerate() {
                let pattern = LabelPattern::evenly_spaced(cfg.layout.n_b, m, &design)?;
                let st = out.timed(&format!("ensemble_{label}"), || {
                    Ok(relaxometry::ensemble_mean_rate(
                        &design,
                        &pattern,
                        &dep,
                        &ens,
                        rng::sub_seed(cfg.master_seed, Domain::SweepConfig, i as u64),
                    )?)
                })?;
                let clean = decay::ensemble_decay(&st.rates, &taus)?;
                v.push((label.to_string(), decay::add_noise(&clean, d.noise_std, seed(i))?));
            }
            v
        }
    };

    let mut t = Table::new(&["curve", "tau_s", "signal", "noise_std", "fit_signal"]);
    let mut fits = serde_json::Map::new();
    for (label, curve) in &curves {
        let fit = decay::fit_decay(curve, &DecayGuess::from_curve(curve))?;
        info!("{label}: T1 = {:.4e} s, n = {:.3}", fit.t1, fit.n);
        for ((tau, s), e) in curve.taus.iter().zip(&curve.signal).zip(&curve.noise_std) {
            t.push(vec![label.as_str().into(), (*tau).into(), (*s).into(), (*e).into(), decay_model(&fit, *tau).into()]);
        }
        fits.insert(
            label.clone(),
            json!({
                "t1_us": fit.t1 * 1e6,
                "t1_se_us": float_json(fit.t1_se * 1e6),
                "stretch": fit.n,
                "stretch_se": float_json(fit.n_se),
                "amplitude": fit.amplitude,
                "amplitude_se": float_json(fit.amplitude_se),
                "chi2": float_json(fit.chi2),
                "iterations": fit.iterations,
            }),
        );
    }
    out.table("decay_curves", &t);
    out.summary("decay_fits.json", &Value::Object(fits));
    Ok(())
}

fn dtwa_study(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let b = &cfg.dtwa;
    let run_cfg = b.config(cfg.master_seed);
    let results = out.timed("squeeze_study", || Ok(dtwa::squeeze_study(&b.cases, &run_cfg, b.n_realizations, cfg.master_seed)?))?;
    let mut cases = Vec::new();
    let mut seen = std::collections::HashMap::new();
    for r in &results {
        // Two cases of the same kind get distinct file names.
        let n = seen.entry(r.label.clone()).or_insert(0usize);
        let stem = if *n == 0 { format!("dtwa_{}", r.label) } else { format!("dtwa_{}_{}", r.label, n) };
        *n += 1;
        let s = &r.series;
        let mut t = Table::new(&["t_s", "mean_Sx", "var_Sy", "var_Sz", "cov", "xi2"]);
        for k in 0..s.times.len() {
            t.push(vec![
                s.times[k].into(),
                s.mean_sx[k].into(),
                s.var_sy[k].into(),
                s.var_sz[k].into(),
                s.cov_syz[k].into(),
                s.xi2[k].into(),
            ]);
        }
        out.table(&stem, &t);
        cases.push(json!({
            "label": r.label,
            "series": stem,
            "spec": r.spec,
            "min_xi2": float_json(r.min_xi2),
            "t_opt_s": r.t_opt,
            "xi2_initial": float_json(r.xi2_initial),
            "mean_spins": r.mean_spins,
            "realizations": r.realizations,
            "diagnostics": r.diagnostics,
        }));
    }
    out.summary(
        "dtwa_summary.json",
        &json!({
            "n_trajectories": run_cfg.n_trajectories,
            "n_realizations": b.n_realizations,
            "t_max_s": run_cfg.t_max,
            "n_times": run_cfg.n_times,
            "anisotropy": run_cfg.anisotropy,
            "integrator": run_cfg.integrator,
            "rotation_bound_rad": run_cfg.rotation_bound,
            "cases": cases,
        }),
    );
    Ok(())
}

fn assay_sweep(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let a = &cfg.assay;
    let readout = a.readout();
    let concs = a.concentrations();
    let rows = out.timed("affinity_sweep", || Ok(assay::affinity_sweep(&concs, &a.kd_molar, &a.panel(), &readout)?))?;
    let mut t = Table::new(&[
        "conc_molar",
        "kd_molar",
        "t_detect_s",
        "n_shots",
        "tau_sense_s",
        "incubation_s",
        "readout_s",
        "bound_fraction",
        "status",
    ]);
    for r in &rows {
        let row: Vec<Cell> = match &r.outcome {
            DetectionOutcome::Detected(d) => vec![
                r.protein_molar.into(),
                r.kd_molar.into(),
                d.total_s.into(),
                d.n_shots.into(),
                d.tau_sense_s.into(),
                d.incubation_s.into(),
                d.readout_s.into(),
                d.bound_fraction.into(),
                "detected".into(),
            ],
            DetectionOutcome::Undetectable => {
                let mut v: Vec<Cell> = vec![r.protein_molar.into(), r.kd_molar.into()];
                v.extend(std::iter::repeat_n(Cell::Float(f64::INFINITY), 6));
                v.push("undetectable".into());
                v
            }
        };
        t.push(row);
    }
    out.table("assay", &t);
    let floor = assay::saturation_floor(&readout);
    out.summary(
        "assay_summary.json",
        &json!({
            "kd_molar": a.kd_molar,
            "concentrations": concs.len(),
            "detected": rows.iter().filter(|r| matches!(r.outcome, DetectionOutcome::Detected(_))).count(),
            "saturation_floor_s": floor.map_or(Value::Null, float_json),
            "optimal_tau_sense_s": readout.optimize_sense_time().map_or(Value::Null, float_json),
            "aptamer_conc_molar": a.panel().aptamer_conc(),
        }),
    );
    Ok(())
}

fn layout_export(cfg: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    let l = &cfg.layout;
    let design = l.design()?;
    let pattern = LabelPattern::evenly_spaced(l.n_b, l.labels_per_site, &design)?;
    let dep: OrigamiDeposition = l.deposition();
    let region = Region::centered_square(l.region_half_width_nm);
    let real = out.timed("realize", || Ok(origami::realize_spin_positions(&design, &pattern, &dep, &region, cfg.master_seed)?))?;
    let mut t = Table::new(&["x_nm", "y_nm", "z_nm", "site_index", "origami_id"]);
    let id = |v: Option<u32>| v.map_or(Cell::Int(-1), |x| Cell::Int(x as i64));
    for ((p, s), o) in real.positions.iter().zip(&real.site_index).zip(&real.origami_id) {
        t.push(vec![p.x.into(), p.y.into(), p.z.into(), id(*s), id(*o)]);
    }
    out.table("layout", &t);
    let sigma = origami::gd_surface_density(&pattern, &dep, &design);
    out.summary(
        "layout_summary.json",
        &json!({
            "spins": real.len(),
            "origami": real.tiles.len(),
            "region_area_nm2": region.area(),
            "achieved_coverage": real.achieved_coverage,
            "sigma_gd_per_nm2": sigma,
            "realized_density_per_nm2": real.len() as f64 / region.area(),
            "sweep_config": SweepConfig::new(l.n_b, l.labels_per_site, l.coverage),
        }),
    );
    Ok(())
}
