//! Plot-ready CSV bundles assembled from a finished run directory.

use crate::error::CliError;
use crate::output::{read_manifest, write_atomic, Cell, Table};
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FigureId {
    /// Relaxation rate versus Gd density with the linear fit.
    Fig4,
    /// Detection time versus protein concentration per K_d.
    Fig5b,
    /// Squeezing parameter versus time per lattice case.
    Fig5d,
    /// Pristine and labeled T1 decay curves with fits.
    Fig3f,
}

impl FigureId {
    pub fn name(&self) -> &'static str {
        match self {
            FigureId::Fig4 => "fig4",
            FigureId::Fig5b => "fig5b",
            FigureId::Fig5d => "fig5d",
            FigureId::Fig3f => "fig3f",
        }
    }

    /// Experiments whose outputs can feed this figure.
    fn sources(&self) -> &'static [&'static str] {
        match self {
            FigureId::Fig4 => &["relaxometry-sweep", "fit-tau-c"],
            FigureId::Fig5b => &["assay-sweep"],
            FigureId::Fig5d => &["dtwa-study"],
            FigureId::Fig3f => &["decay-fit"],
        }
    }
}

struct Csv {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    path: PathBuf,
}

impl Csv {
    fn read(dir: &Path, name: &str) -> Result<Self, CliError> {
        let path = dir.join(name);
        if !path.exists() {
            return Err(CliError::Io(format!(
                "{} is missing; the run must include CSV tables (--format csv or both)",
                path.display()
            )));
        }
        let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        let mut r = csv::Reader::from_path(&path).map_err(io)?;
        let headers = r.headers().map_err(io)?.iter().map(str::to_string).collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|r| r.iter().map(str::to_string).collect()).map_err(io))
            .collect::<Result<_, _>>()?;
        Ok(Self { headers, rows, path })
    }

    fn col(&self, name: &str) -> Result<usize, CliError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::Io(format!("{}: missing column {name}", self.path.display())))
    }

    fn float(&self, row: usize, col: usize) -> Result<f64, CliError> {
        self.rows[row][col]
            .parse()
            .map_err(|_| CliError::Io(format!("{}: row {} is not numeric", self.path.display(), row + 1)))
    }
}

fn read_json(dir: &Path, name: &str) -> Result<Value, CliError> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| CliError::io(path.display(), e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn number(v: &Value, key: &str) -> Result<f64, CliError> {
    v[key].as_f64().ok_or_else(|| CliError::Io(format!("summary field {key} missing")))
}

fn fig4(dir: &Path) -> Result<Table, CliError> {
    let sweep = Csv::read(dir, "sweep.csv")?;
    let summary = read_json(dir, "sweep_summary.json")?;
    let (slope, intercept) = (number(&summary, "slope_hz_nm2")?, number(&summary, "intercept_hz")?);
    let (cs, cn, cm, cd) = (sweep.col("sigma_gd")?, sweep.col("n_gd")?, sweep.col("rate_mean")?, sweep.col("rate_std")?);
    let mut t = Table::new(&["sigma_gd_per_nm2", "n_gd", "inv_t1_mean_hz", "inv_t1_std_hz", "sim_fit_hz"]);
    for i in 0..sweep.rows.len() {
        let s = sweep.float(i, cs)?;
        t.push(vec![
            s.into(),
            sweep.float(i, cn)?.into(),
            sweep.float(i, cm)?.into(),
            sweep.float(i, cd)?.into(),
            (intercept + slope * s).into(),
        ]);
    }
    Ok(t)
}

fn fig5b(dir: &Path) -> Result<Table, CliError> {
    let a = Csv::read(dir, "assay.csv")?;
    let (cc, ck, ct, cs) = (a.col("conc_molar")?, a.col("kd_molar")?, a.col("t_detect_s")?, a.col("status")?);
    let mut t = Table::new(&["kd_molar", "conc_molar", "t_detect_s"]);
    for i in 0..a.rows.len() {
        if a.rows[i][cs] == "detected" {
            t.push(vec![a.float(i, ck)?.into(), a.float(i, cc)?.into(), a.float(i, ct)?.into()]);
        }
    }
    Ok(t)
}

fn fig5d(dir: &Path) -> Result<Table, CliError> {
    let summary = read_json(dir, "dtwa_summary.json")?;
    let cases = summary["cases"].as_array().ok_or_else(|| CliError::Io("dtwa_summary.json has no cases".into()))?;
    let mut t = Table::new(&["case", "t_s", "xi2"]);
    for c in cases {
        let label = c["label"].as_str().unwrap_or_default();
        let stem = c["series"].as_str().unwrap_or_default();
        let s = Csv::read(dir, &format!("{stem}.csv"))?;
        let (ct, cx) = (s.col("t_s")?, s.col("xi2")?);
        for i in 0..s.rows.len() {
            t.push(vec![label.into(), s.float(i, ct)?.into(), s.float(i, cx)?.into()]);
        }
    }
    Ok(t)
}

fn fig3f(dir: &Path) -> Result<Table, CliError> {
    let d = Csv::read(dir, "decay_curves.csv")?;
    let (cc, ct, cs, cf) = (d.col("curve")?, d.col("tau_s")?, d.col("signal")?, d.col("fit_signal")?);
    let mut t = Table::new(&["curve", "tau_s", "signal", "fit_signal"]);
    for i in 0..d.rows.len() {
        t.push(vec![Cell::Text(d.rows[i][cc].clone()), d.float(i, ct)?.into(), d.float(i, cs)?.into(), d.float(i, cf)?.into()]);
    }
    Ok(t)
}

/// Build the bundle for `id` from `run_dir` and write it to
/// `run_dir/figures/<id>.csv`.
pub fn emit_figure_data(run_dir: &Path, id: FigureId) -> Result<PathBuf, CliError> {
    let manifest = read_manifest(run_dir).map_err(|e| {
        CliError::Io(format!("no completed run in {} ({e}); run one of {:?} first", run_dir.display(), id.sources()))
    })?;
    if !id.sources().contains(&manifest.experiment.as_str()) {
        return Err(CliError::Config(format!(
            "{} needs a {} run, but {} holds a {} run",
            id.name(),
            id.sources().join(" or "),
            run_dir.display(),
            manifest.experiment
        )));
    }
    let table = match id {
        FigureId::Fig4 => fig4(run_dir)?,
        FigureId::Fig5b => fig5b(run_dir)?,
        FigureId::Fig5d => fig5d(run_dir)?,
        FigureId::Fig3f => fig3f(run_dir)?,
    };
    let dir = run_dir.join("figures");
    fs::create_dir_all(&dir).map_err(|e| CliError::io(dir.display(), e))?;
    write_atomic(&dir, &format!("{}.csv", id.name()), &table.to_csv())
}
