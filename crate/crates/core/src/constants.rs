//! Physical constants and the Gd³⁺/NV defaults.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Vacuum permeability, T·m/A (CODATA 2018).
pub const MU0: f64 = 1.256_637_062_12e-6;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Bohr magneton, J/T.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;
/// NV electron gyromagnetic ratio, rad/s/T (2π·28.024 GHz/T).
pub const GAMMA_NV: f64 = 2.0 * PI * 28.024e9;
/// Gd-DOTA g-factor.
pub const G_GD: f64 = 1.9923;
/// NV zero-field transition, rad/s (2π·2.87 GHz).
pub const OMEGA0_NV: f64 = 2.0 * PI * 2.87e9;
/// Gd³⁺ spin quantum number.
pub const S_GD: f64 = 3.5;
/// Intrinsic NV T1 of the bare surface, s.
pub const T1_PRISTINE: f64 = 1.9e-3;
/// Gd³⁺ correlation time, s.
pub const TAU_C_GD: f64 = 0.18e-9;
/// Polar angle of a ⟨111⟩ NV axis below a (100) surface, rad.
pub const NV_AXIS_POLAR: f64 = 0.955_316_618_124_509_3; // acos(1/√3)

/// Overridable constants entering the relaxation kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicalConstants {
    pub mu0: f64,
    pub hbar: f64,
    pub gamma_nv: f64,
    pub g_gd: f64,
    pub omega0: f64,
    pub spin_gd: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self { mu0: MU0, hbar: HBAR, gamma_nv: GAMMA_NV, g_gd: G_GD, omega0: OMEGA0_NV, spin_gd: S_GD }
    }
}

impl PhysicalConstants {
    /// γ_Gd = g·μ_B/ħ.
    pub fn gamma_gd(&self) -> f64 {
        self.g_gd * BOHR_MAGNETON / self.hbar
    }

    /// Ω′ such that the bare-surface T1 equals `t1` (1/T1 = 3Ω′).
    pub fn intrinsic_rate_for_t1(t1: f64) -> f64 {
        1.0 / (3.0 * t1)
    }
}
