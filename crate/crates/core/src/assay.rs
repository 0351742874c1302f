//! Detection-time model for aptamer assays read out by T1 relaxometry.
//!
//! Target binding releases a Gd³⁺-labelled aptamer, so the NV ensemble's T1
//! moves from `t1_on` toward `t1_off` in proportion to the bound fraction.
//! Readout is photon shot-noise limited.

use crate::error::{Result, SimError};
use crate::minimize::golden_section;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Depletion is accounted for once aptamers exceed this fraction of the
/// protein in the sample.
pub const DEPLETION_THRESHOLD: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AptamerPanel {
    pub kd_molar: f64,
    /// Association rate, 1/(M·s).
    pub k_on_per_molar_s: f64,
    /// Aptamers on the sensing area, mol.
    pub aptamer_amount_mol: f64,
    pub sensing_area_um2: f64,
    pub sample_volume_l: f64,
    pub depletion: bool,
}

impl Default for AptamerPanel {
    fn default() -> Self {
        Self {
            kd_molar: 1e-9,
            k_on_per_molar_s: 1e6,
            aptamer_amount_mol: 1.25e-17,
            sensing_area_um2: 300.0,
            sample_volume_l: 1e-6,
            depletion: true,
        }
    }
}

impl AptamerPanel {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kd_molar", self.kd_molar),
            ("k_on_per_molar_s", self.k_on_per_molar_s),
            ("sensing_area_um2", self.sensing_area_um2),
            ("sample_volume_l", self.sample_volume_l),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::invalid(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.aptamer_amount_mol >= 0.0) {
            return Err(SimError::invalid("aptamer_amount_mol", "must be non-negative"));
        }
        Ok(())
    }

    pub fn k_off(&self) -> f64 {
        self.kd_molar * self.k_on_per_molar_s
    }

    /// Aptamer concentration if all were dissolved in the sample, M.
    pub fn aptamer_conc(&self) -> f64 {
        self.aptamer_amount_mol / self.sample_volume_l
    }

    fn depleted(&self, protein_molar: f64) -> bool {
        let a = self.aptamer_conc();
        self.depletion && a > 0.0 && a > DEPLETION_THRESHOLD * protein_molar
    }

    /// Roots b₁ ≤ b₂ of b² − (a + p + K_d)·b + a·p = 0, the fixed points of
    /// the bimolecular rate law for the bound concentration b.
    fn roots(&self, p: f64) -> (f64, f64) {
        let a = self.aptamer_conc();
        let s = a + p + self.kd_molar;
        let d = (s * s - 4.0 * a * p).max(0.0).sqrt();
        (2.0 * a * p / (s + d), 0.5 * (s + d))
    }

    /// Free protein concentration at binding equilibrium, M.
    pub fn free_protein(&self, protein_molar: f64) -> f64 {
        if !self.depleted(protein_molar) {
            return protein_molar;
        }
        (protein_molar - self.roots(protein_molar).0).max(0.0)
    }

    /// Fraction of aptamers bound after incubating for `t` seconds.
    ///
    /// With protein in excess this is the Langmuir relaxation
    /// p/(p + K_d)·(1 − e^{−(k_on·p + k_off)t}); otherwise the bimolecular
    /// law db/dt = k_on(p − b)(a − b) − k_off·b is solved exactly.
    pub fn bound_fraction(&self, t: f64, protein_molar: f64) -> f64 {
        let p = protein_molar;
        if !self.depleted(p) {
            let rate = self.k_on_per_molar_s * p + self.k_off();
            return p / (p + self.kd_molar) * -(-rate * t).exp_m1();
        }
        let (b1, b2) = self.roots(p);
        let e = (-self.k_on_per_molar_s * (b2 - b1) * t).exp();
        b1 * (1.0 - e) / (1.0 - b1 / b2 * e) / self.aptamer_conc()
    }

    pub fn equilibrium_fraction(&self, protein_molar: f64) -> f64 {
        if !self.depleted(protein_molar) {
            return protein_molar / (protein_molar + self.kd_molar);
        }
        self.roots(protein_molar).0 / self.aptamer_conc()
    }

    /// Slowest relaxation rate toward equilibrium, 1/s.
    fn relaxation_rate(&self, protein_molar: f64) -> f64 {
        if !self.depleted(protein_molar) {
            return self.k_on_per_molar_s * protein_molar + self.k_off();
        }
        let (b1, b2) = self.roots(protein_molar);
        self.k_on_per_molar_s * (b2 - b1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutModel {
    pub counts_per_shot: f64,
    /// Dead time per shot, s.
    pub overhead_s: f64,
    /// T1 with the label present, s.
    pub t1_on_s: f64,
    /// T1 with the label displaced, s.
    pub t1_off_s: f64,
    pub stretch: f64,
    pub snr_target: f64,
}

impl Default for ReadoutModel {
    fn default() -> Self {
        Self { counts_per_shot: 50.0, overhead_s: 5e-3, t1_on_s: 88e-6, t1_off_s: 1.9e-3, stretch: 0.8, snr_target: 3.0 }
    }
}

impl ReadoutModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.counts_per_shot > 0.0) {
            return Err(SimError::invalid("counts_per_shot", "must be positive"));
        }
        if !(self.overhead_s >= 0.0) {
            return Err(SimError::invalid("overhead_s", "must be non-negative"));
        }
        if !(self.t1_on_s > 0.0) || !(self.t1_off_s >= self.t1_on_s) {
            return Err(SimError::invalid("t1_off_s", "need t1_off_s ≥ t1_on_s > 0"));
        }
        if !(self.stretch > 0.0) {
            return Err(SimError::invalid("stretch", "must be positive"));
        }
        if !(self.snr_target > 0.0) {
            return Err(SimError::invalid("snr_target", "must be positive"));
        }
        Ok(())
    }

    /// Signal difference between fully displaced and fully present labels.
    pub fn full_contrast(&self, tau: f64) -> f64 {
        let n = self.stretch;
        (-(tau / self.t1_off_s).powf(n)).exp() - (-(tau / self.t1_on_s).powf(n)).exp()
    }

    pub fn contrast(&self, bound_fraction: f64, tau: f64) -> f64 {
        bound_fraction * self.full_contrast(tau)
    }

    /// Shots needed to reach the target SNR at contrast `c`.
    pub fn shots(&self, c: f64) -> f64 {
        self.snr_target * self.snr_target / (self.counts_per_shot * c * c)
    }

    /// Readout objective: squared contrast per unit shot time.
    fn efficiency(&self, tau: f64) -> f64 {
        self.full_contrast(tau).powi(2) / (tau + self.overhead_s)
    }

    /// Sense time maximizing C²/(τ + overhead), which minimizes the readout
    /// time at any fixed bound fraction. `None` when there is no contrast.
    pub fn optimize_sense_time(&self) -> Option<f64> {
        if self.t1_off_s <= self.t1_on_s {
            return None;
        }
        let (lo, hi) = ((self.t1_on_s * 1e-4).ln(), (self.t1_off_s * 1e3).ln());
        let n = 400;
        let grid: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
        let best = (0..=n)
            .max_by(|&a, &b| self.efficiency(grid[a].exp()).total_cmp(&self.efficiency(grid[b].exp())))
            .expect("non-empty grid");
        let a = grid[best.saturating_sub(1)];
        let b = grid[(best + 1).min(n)];
        let x = golden_section(|x| -self.efficiency(x.exp()), a, b, 1e-12);
        Some(x.exp())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    /// Incubation plus readout, s.
    pub total_s: f64,
    pub incubation_s: f64,
    pub readout_s: f64,
    pub n_shots: f64,
    pub tau_sense_s: f64,
    pub bound_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DetectionOutcome {
    Detected(Detection),
    /// The readout has no contrast, or no protein binds.
    Undetectable,
}

impl DetectionOutcome {
    pub fn total_s(&self) -> f64 {
        match self {
            DetectionOutcome::Detected(d) => d.total_s,
            DetectionOutcome::Undetectable => f64::INFINITY,
        }
    }
}

/// Minimize incubation + readout time over the incubation time and sense
/// time. The shot count is kept continuous.
pub fn detection_time(protein_molar: f64, panel: &AptamerPanel, readout: &ReadoutModel) -> Result<DetectionOutcome> {
    if !(protein_molar > 0.0) || !protein_molar.is_finite() {
        return Err(SimError::invalid("protein_molar", "must be positive"));
    }
    panel.validate()?;
    readout.validate()?;
    let Some(tau) = readout.optimize_sense_time() else {
        return Ok(DetectionOutcome::Undetectable);
    };
    let c_max = readout.full_contrast(tau);
    let f_inf = panel.equilibrium_fraction(protein_molar);
    if !(c_max > 0.0) || !(f_inf > 0.0) {
        return Ok(DetectionOutcome::Undetectable);
    }
    let per_shot = tau + readout.overhead_s;
    let floor = readout.shots(c_max) * per_shot;
    let total = |t: f64| t + floor / panel.bound_fraction(t, protein_molar).powi(2);
    // T(t) = t + floor/f(t)² falls while f rises steeply and grows linearly
    // once f saturates; scan ln t across the relaxation time, then refine.
    let t_relax = 1.0 / panel.relaxation_rate(protein_molar);
    let (lo, hi) = ((t_relax * 1e-9).ln(), (t_relax * 1e3 + floor / (f_inf * f_inf)).ln());
    let n = 600;
    let grid: Vec<f64> = (0..=n).map(|k| lo + (hi - lo) * k as f64 / n as f64).collect();
    let best = (0..=n).min_by(|&a, &b| total(grid[a].exp()).total_cmp(&total(grid[b].exp()))).expect("non-empty grid");
    let ln_t = golden_section(|x| total(x.exp()), grid[best.saturating_sub(1)], grid[(best + 1).min(n)], 1e-13);
    let incubation = ln_t.exp();
    let f = panel.bound_fraction(incubation, protein_molar);
    let n_shots = readout.shots(readout.contrast(f, tau));
    let readout_s = n_shots * per_shot;
    Ok(DetectionOutcome::Detected(Detection {
        total_s: incubation + readout_s,
        incubation_s: incubation,
        readout_s,
        n_shots,
        tau_sense_s: tau,
        bound_fraction: f,
    }))
}

/// Lower bound on the detection time: readout at full binding and optimal
/// sense time, s.
pub fn saturation_floor(readout: &ReadoutModel) -> Option<f64> {
    let tau = readout.optimize_sense_time()?;
    Some(readout.shots(readout.full_contrast(tau)) * (tau + readout.overhead_s))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffinityRow {
    pub protein_molar: f64,
    pub kd_molar: f64,
    pub outcome: DetectionOutcome,
}

/// Detection time for every (K_d, concentration) pair, K_d-major.
pub fn affinity_sweep(concs: &[f64], kds: &[f64], panel: &AptamerPanel, readout: &ReadoutModel) -> Result<Vec<AffinityRow>> {
    if concs.is_empty() || kds.is_empty() {
        return Err(SimError::invalid("concs", "concentration and K_d lists must be non-empty"));
    }
    let cells: Vec<(f64, f64)> = kds.iter().flat_map(|&k| concs.iter().map(move |&c| (k, c))).collect();
    cells
        .into_par_iter()
        .map(|(kd, c)| {
            let p = AptamerPanel { kd_molar: kd, ..*panel };
            Ok(AffinityRow { protein_molar: c, kd_molar: kd, outcome: detection_time(c, &p, readout)? })
        })
        .collect()
}

/// Default dissociation constants: 1 nM, 100 pM, 10 pM.
pub const DEFAULT_KDS: [f64; 3] = [1e-9, 1e-10, 1e-11];

/// `count` log-spaced concentrations from 1 fM to 1 µM.
pub fn default_concentrations(count: usize) -> Vec<f64> {
    crate::decay::log_spaced(1e-15, 1e-6, count)
}
