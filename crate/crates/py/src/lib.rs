//! Python bindings. Results come back as plain dicts and lists.

use nalgebra::Vector3;
use oss_cli::config::{ExperimentKind, RunConfig};
use oss_core::assay::{self, AptamerPanel, DetectionOutcome, ReadoutModel};
use oss_core::decay::{self, DecayCurve, DecayGuess};
use oss_core::dtwa::{self, DtwaConfig, LatticeKind, LatticeSpec};
use oss_core::origami::{self, LabelPattern, OrigamiDeposition, OrigamiDesign, PlacementMode};
use oss_core::physics::{self, Kernel, NvSensor, SpinSpecies};
use oss_core::relaxometry::{self, EnsembleConfig, SweepConfig};
use oss_core::{PhysicalConstants, SimError};
use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

fn err(e: SimError) -> PyErr {
    match e {
        SimError::InvalidInput { .. } => PyValueError::new_err(e.to_string()),
        e => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_f64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(f)) => f.into_pyobject(py)?.into_any(),
            _ => py.None().into_bound(py),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(a) => {
            let items = a.iter().map(|x| to_py(py, x)).collect::<PyResult<Vec<_>>>()?;
            PyList::new(py, items)?.into_any()
        }
        Value::Object(m) => {
            let d = PyDict::new(py);
            for (k, x) in m {
                d.set_item(k, to_py(py, x)?)?;
            }
            d.into_any()
        }
    })
}

fn serialize<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let value = serde_json::to_value(v).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    to_py(py, &value)
}

fn kernel(name: &str) -> PyResult<Kernel> {
    match name {
        "simple" => Ok(Kernel::Simple),
        "full_angular" => Ok(Kernel::FullAngular),
        _ => Err(PyValueError::new_err(format!("unknown kernel {name:?}"))),
    }
}

fn placement(name: &str) -> PyResult<PlacementMode> {
    match name {
        "explicit_tiling" => Ok(PlacementMode::ExplicitTiling),
        "effective_density" => Ok(PlacementMode::EffectiveDensity),
        _ => Err(PyValueError::new_err(format!("unknown placement mode {name:?}"))),
    }
}

fn ensemble(tau_c_ns: f64, t1_pristine_ms: f64, n_nv: usize) -> EnsembleConfig {
    EnsembleConfig {
        tau_c: tau_c_ns * 1e-9,
        intrinsic_rate: PhysicalConstants::intrinsic_rate_for_t1(t1_pristine_ms * 1e-3),
        n_nv,
        ..EnsembleConfig::default()
    }
}

/// Relaxation rate (1/s) one Gd spin adds to an NV.
///
/// Positions in nm with the diamond surface at z = 0; the NV axis is a
/// unit vector.
#[pyfunction]
#[pyo3(signature = (nv_position, nv_axis, spin_position, tau_c_ns=0.18))]
fn pair_relaxation_rate(nv_position: [f64; 3], nv_axis: [f64; 3], spin_position: [f64; 3], tau_c_ns: f64) -> PyResult<f64> {
    let consts = PhysicalConstants::default();
    let nv = NvSensor::new(Vector3::from(nv_position), Vector3::from(nv_axis), consts.omega0, 0.0).map_err(err)?;
    let spin = SpinSpecies::gd(&consts, tau_c_ns * 1e-9).label_at(Vector3::from(spin_position));
    physics::pair_relaxation_rate(&consts, &nv, &spin).map_err(err)
}

/// Share of the plane-integrated rate from spins within `radius_nm`.
#[pyfunction]
#[pyo3(signature = (depth_nm, radius_nm, kernel="full_angular"))]
fn sensing_fraction(depth_nm: f64, radius_nm: f64, kernel: &str) -> PyResult<f64> {
    physics::sensing_fraction(depth_nm, radius_nm, self::kernel(kernel)?, &physics::default_nv_axis(0.0)).map_err(err)
}

/// Mean Gd areal density (nm⁻²) for `n_b` sites with `m` labels at coverage.
#[pyfunction]
fn gd_surface_density(n_b: usize, m: u32, coverage: f64) -> PyResult<f64> {
    let design = OrigamiDesign::default();
    let pattern = LabelPattern::evenly_spaced(n_b, m, &design).map_err(err)?;
    let dep = OrigamiDeposition { coverage, ..Default::default() };
    dep.validate().map_err(err)?;
    Ok(origami::gd_surface_density(&pattern, &dep, &design))
}

/// Monte Carlo NV ensemble under one labeled surface.
#[pyfunction]
#[pyo3(signature = (n_b=204, m=4, coverage=0.88, n_nv=1000, seed=0, mode="explicit_tiling", tau_c_ns=0.18, t1_pristine_ms=1.9))]
#[allow(clippy::too_many_arguments)]
fn ensemble_mean_rate<'py>(
    py: Python<'py>,
    n_b: usize,
    m: u32,
    coverage: f64,
    n_nv: usize,
    seed: u64,
    mode: &str,
    tau_c_ns: f64,
    t1_pristine_ms: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let design = OrigamiDesign::default();
    let pattern = LabelPattern::evenly_spaced(n_b, m, &design).map_err(err)?;
    let dep = OrigamiDeposition { coverage, mode: placement(mode)?, ..Default::default() };
    let cfg = ensemble(tau_c_ns, t1_pristine_ms, n_nv);
    let st = py.detach(|| relaxometry::ensemble_mean_rate(&design, &pattern, &dep, &cfg, seed)).map_err(err)?;
    let d = serialize(py, &st)?;
    d.set_item("rates", st.rates)?;
    Ok(d)
}

/// Mean 1/T1 versus Gd density over `configs` ((n_b, m, coverage) tuples;
/// the eight default configurations when omitted).
#[pyfunction]
#[pyo3(signature = (configs=None, n_nv=1000, seed=0, tau_c_ns=0.18, t1_pristine_ms=1.9))]
fn density_sweep<'py>(
    py: Python<'py>,
    configs: Option<Vec<(usize, u32, f64)>>,
    n_nv: usize,
    seed: u64,
    tau_c_ns: f64,
    t1_pristine_ms: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let configs: Vec<SweepConfig> = match configs {
        Some(c) => c.into_iter().map(|(n, m, cs)| SweepConfig::new(n, m, cs)).collect(),
        None => relaxometry::default_sweep_configs(),
    };
    let cfg = ensemble(tau_c_ns, t1_pristine_ms, n_nv);
    let design = OrigamiDesign::default();
    let r = py
        .detach(|| relaxometry::density_sweep(&configs, &design, &OrigamiDeposition::default(), &cfg, seed))
        .map_err(err)?;
    serialize(py, &r)
}

/// exp[−(τ/T1)^n] sampled at `taus` (s) with Gaussian noise.
#[pyfunction]
#[pyo3(signature = (t1_s, stretch, taus, noise_std=0.0, seed=0))]
fn synthesize_decay(t1_s: f64, stretch: f64, taus: Vec<f64>, noise_std: f64, seed: u64) -> PyResult<Vec<f64>> {
    Ok(decay::synthesize_decay(t1_s, stretch, &taus, noise_std, seed).map_err(err)?.signal)
}

/// Stretched-exponential fit; returns amplitude, t1, n, their standard
/// errors and χ².
#[pyfunction]
#[pyo3(signature = (taus, signal, noise_std=None))]
fn fit_decay<'py>(py: Python<'py>, taus: Vec<f64>, signal: Vec<f64>, noise_std: Option<f64>) -> PyResult<Bound<'py, PyAny>> {
    let n = taus.len();
    let curve = DecayCurve { taus, signal, noise_std: vec![noise_std.unwrap_or(0.0); n] };
    curve.validate().map_err(err)?;
    let fit = decay::fit_decay(&curve, &DecayGuess::from_curve(&curve)).map_err(err)?;
    serialize(py, &fit)
}

fn lattice_kind(name: &str) -> PyResult<LatticeKind> {
    serde_json::from_value(Value::String(name.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown lattice kind {name:?}")))
}

/// Spin-squeezing study over lattice kinds ("square", "square_disordered",
/// "square_diluted", "square_disordered_diluted", "random").
#[pyfunction]
#[pyo3(signature = (kinds=None, n_trajectories=200, n_realizations=1, n_times=200, seed=0))]
fn squeeze_study<'py>(
    py: Python<'py>,
    kinds: Option<Vec<String>>,
    n_trajectories: usize,
    n_realizations: usize,
    n_times: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let specs: Vec<LatticeSpec> = match kinds {
        Some(k) => k.iter().map(|s| lattice_kind(s).map(LatticeSpec::new)).collect::<PyResult<_>>()?,
        None => dtwa::default_cases(),
    };
    let first = specs.first().copied().unwrap_or_default();
    let cfg = DtwaConfig { n_trajectories, n_times, seed, ..DtwaConfig::for_lattice(&first) };
    let r = py.detach(|| dtwa::squeeze_study(&specs, &cfg, n_realizations, seed)).map_err(err)?;
    serialize(py, &r)
}

/// Time to detect `protein_molar` of target; None when the readout cannot
/// distinguish bound from unbound.
#[pyfunction]
#[pyo3(signature = (protein_molar, kd_molar=1e-9, k_on_per_molar_s=1e6, snr_target=3.0))]
fn detection_time<'py>(
    py: Python<'py>,
    protein_molar: f64,
    kd_molar: f64,
    k_on_per_molar_s: f64,
    snr_target: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let panel = AptamerPanel { kd_molar, k_on_per_molar_s, ..Default::default() };
    let readout = ReadoutModel { snr_target, ..Default::default() };
    match assay::detection_time(protein_molar, &panel, &readout).map_err(err)? {
        DetectionOutcome::Detected(d) => serialize(py, &d),
        DetectionOutcome::Undetectable => Ok(py.None().into_bound(py)),
    }
}

/// Run a CLI experiment from a JSON config and return its manifest.
#[pyfunction]
#[pyo3(signature = (experiment, output_dir, config_json="{}", seed=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    experiment: &str,
    output_dir: &str,
    config_json: &str,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let kind: ExperimentKind = serde_json::from_value(Value::String(experiment.into()))
        .map_err(|_| PyValueError::new_err(format!("unknown experiment {experiment:?}")))?;
    let mut cfg: RunConfig = oss_cli::config::parse_config_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    cfg.experiment = Some(kind);
    cfg.output_dir = output_dir.into();
    if let Some(s) = seed {
        cfg.master_seed = s;
    }
    let manifest = py.detach(|| oss_cli::run(&cfg)).map_err(|e| match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        4 => PyOSError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    })?;
    serialize(py, &manifest)
}

#[pymodule]
fn _oss(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(pair_relaxation_rate, m)?)?;
    m.add_function(wrap_pyfunction!(sensing_fraction, m)?)?;
    m.add_function(wrap_pyfunction!(gd_surface_density, m)?)?;
    m.add_function(wrap_pyfunction!(ensemble_mean_rate, m)?)?;
    m.add_function(wrap_pyfunction!(density_sweep, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_decay, m)?)?;
    m.add_function(wrap_pyfunction!(fit_decay, m)?)?;
    m.add_function(wrap_pyfunction!(squeeze_study, m)?)?;
    m.add_function(wrap_pyfunction!(detection_time, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
