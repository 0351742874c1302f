//! NV–spin relaxation kernel and its planar integrals.
//!
//! A fluctuating electronic spin with correlation time τ_c at distance r from
//! an NV induces the relaxation rate
//!
//! ```text
//! Γ = (μ0 ħ γ_nv γ_s / 4π r³)² (S² + S)(2 + 3 sin²α) τ_c / (1 + ω0² τ_c²)
//! ```
//!
//! with α the angle between the NV axis and the NV→spin direction. The bare
//! NV contributes a further 3Ω′ which callers add separately.

use crate::constants::{PhysicalConstants, NV_AXIS_POLAR};
use crate::error::{Result, SimError};
use crate::quadrature::{self, Tolerance};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI};

/// Separations at or below this are rejected (nm).
pub const SINGULARITY_GUARD_NM: f64 = 0.1;

/// Orientation average of the angular factor 2 + 3 sin²α.
pub const MEAN_ANGULAR_FACTOR: f64 = 4.0;

/// `(μ0 ħ γ_a γ_b / 4π)²` expressed in nm⁶/s², i.e. the value to divide by r⁶
/// with r in nanometres.
pub fn dipolar_prefactor_nm6(consts: &PhysicalConstants, gamma_a: f64, gamma_b: f64) -> f64 {
    let coupling_si = consts.mu0 * consts.hbar * gamma_a * gamma_b / (4.0 * PI); // m³/s
    let coupling_nm = coupling_si * 1e27; // nm³/s
    coupling_nm * coupling_nm
}

/// Lorentzian filter τ/(1 + ω²τ²), seconds.
#[inline]
pub fn lorentzian(tau_c: f64, omega0: f64) -> f64 {
    tau_c / (1.0 + omega0 * omega0 * tau_c * tau_c)
}

/// A paramagnetic spin label.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinLabel {
    /// nm; z above the diamond surface.
    pub position: Vector3<f64>,
    pub tau_c: f64,
    pub spin_s: f64,
    /// rad/s/T
    pub gamma: f64,
}

/// Species parameters shared by all labels of one kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpinSpecies {
    pub tau_c: f64,
    pub spin_s: f64,
    pub gamma: f64,
}

impl SpinSpecies {
    pub fn gd(consts: &PhysicalConstants, tau_c: f64) -> Self {
        Self { tau_c, spin_s: consts.spin_gd, gamma: consts.gamma_gd() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_c > 0.0) {
            return Err(SimError::invalid("tau_c", format!("must be positive, got {}", self.tau_c)));
        }
        let twice = 2.0 * self.spin_s;
        if !(0.5..=3.5).contains(&self.spin_s) || (twice - twice.round()).abs() > 1e-12 {
            return Err(SimError::invalid("spin_s", format!("must be a half-integer in [1/2, 7/2], got {}", self.spin_s)));
        }
        Ok(())
    }

    pub fn label_at(&self, position: Vector3<f64>) -> SpinLabel {
        SpinLabel { position, tau_c: self.tau_c, spin_s: self.spin_s, gamma: self.gamma }
    }

    /// Rate at unit distance (nm⁶/s) without the angular factor:
    /// prefactor · (S²+S) · τ_c/(1+ω0²τ_c²).
    pub fn strength_nm6(&self, consts: &PhysicalConstants, omega0: f64) -> f64 {
        dipolar_prefactor_nm6(consts, consts.gamma_nv, self.gamma)
            * (self.spin_s * self.spin_s + self.spin_s)
            * lorentzian(self.tau_c, omega0)
    }
}

impl SpinLabel {
    pub fn validate(&self) -> Result<()> {
        SpinSpecies { tau_c: self.tau_c, spin_s: self.spin_s, gamma: self.gamma }.validate()?;
        if self.position.z < 0.0 {
            return Err(SimError::invalid("position.z", "spin labels sit on or above the surface"));
        }
        Ok(())
    }
}

/// A shallow NV center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NvSensor {
    /// nm; z ≤ 0, depth = −z.
    pub position: Vector3<f64>,
    pub axis: Vector3<f64>,
    /// rad/s
    pub omega0: f64,
    /// Ω′, 1/s
    pub intrinsic_rate: f64,
}

impl NvSensor {
    pub fn new(position: Vector3<f64>, axis: Vector3<f64>, omega0: f64, intrinsic_rate: f64) -> Result<Self> {
        let nv = Self { position, axis, omega0, intrinsic_rate };
        nv.validate()?;
        Ok(nv)
    }

    pub fn validate(&self) -> Result<()> {
        if (self.axis.norm() - 1.0).abs() > 1e-12 {
            return Err(SimError::invalid("axis", format!("must be a unit vector, |axis| = {}", self.axis.norm())));
        }
        if !(self.position.z < 0.0) {
            return Err(SimError::invalid("position.z", "NV must lie below the surface (depth > 0)"));
        }
        if !(self.intrinsic_rate >= 0.0) {
            return Err(SimError::invalid("intrinsic_rate", "must be non-negative"));
        }
        Ok(())
    }

    pub fn depth(&self) -> f64 {
        -self.position.z
    }
}

/// NV axis at polar angle `polar` from the surface normal and azimuth `azimuth`.
pub fn nv_axis(polar: f64, azimuth: f64) -> Vector3<f64> {
    Vector3::new(polar.sin() * azimuth.cos(), polar.sin() * azimuth.sin(), polar.cos())
}

/// ⟨111⟩ axis of a (100) diamond surface with the given azimuth.
pub fn default_nv_axis(azimuth: f64) -> Vector3<f64> {
    nv_axis(NV_AXIS_POLAR, azimuth)
}

/// Spin-induced relaxation rate of `nv` from a single `spin` (excludes 3Ω′).
pub fn pair_relaxation_rate(consts: &PhysicalConstants, nv: &NvSensor, spin: &SpinLabel) -> Result<f64> {
    let d = spin.position - nv.position;
    let r2 = d.norm_squared();
    let r = r2.sqrt();
    if !(r > SINGULARITY_GUARD_NM) {
        return Err(SimError::SingularSeparation { distance_nm: r, guard_nm: SINGULARITY_GUARD_NM });
    }
    let cos_a = d.dot(&nv.axis) / r;
    let sin2 = (1.0 - cos_a * cos_a).max(0.0);
    let pref = dipolar_prefactor_nm6(consts, consts.gamma_nv, spin.gamma);
    let spin_factor = spin.spin_s * spin.spin_s + spin.spin_s;
    Ok(pref / (r2 * r2 * r2) * spin_factor * (2.0 + 3.0 * sin2) * lorentzian(spin.tau_c, nv.omega0))
}

/// 3Ω′ plus the sum of pair rates over `spins`.
pub fn total_relaxation_rate(consts: &PhysicalConstants, nv: &NvSensor, spins: &[SpinLabel]) -> Result<f64> {
    spins
        .iter()
        .try_fold(3.0 * nv.intrinsic_rate, |acc, s| Ok(acc + pair_relaxation_rate(consts, nv, s)?))
}

/// How the angular factor is treated in planar integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kernel {
    /// Constant factor equal to its orientation average (4); closed form.
    Simple,
    /// 2 + 3 sin²α integrated for the actual NV axis.
    #[default]
    FullAngular,
}

/// Angular integral over a disk of polar half-angle `beta_max` seen from the NV:
/// ∫dφ ∫ sinβ cos³β · w(α) dβ, where a plane at unit vertical distance is
/// parameterized by β (r = d·tanβ).
fn angular_disk_integral(kernel: Kernel, axis: &Vector3<f64>, beta_max: f64, tol: Tolerance) -> Result<f64> {
    if beta_max <= 0.0 {
        return Ok(0.0);
    }
    match kernel {
        Kernel::Simple => {
            let c = beta_max.cos();
            Ok(2.0 * PI * MEAN_ANGULAR_FACTOR * (1.0 - c.powi(4)) / 4.0)
        }
        Kernel::FullAngular => {
            let mut inner_err: Option<SimError> = None;
            let outer = quadrature::integrate(
                |phi: f64| {
                    let (sp, cp) = phi.sin_cos();
                    let inner = quadrature::integrate(
                        |beta: f64| {
                            let (sb, cb) = beta.sin_cos();
                            let cos_a = axis.x * sb * cp + axis.y * sb * sp + axis.z * cb;
                            sb * cb * cb * cb * (2.0 + 3.0 * (1.0 - cos_a * cos_a))
                        },
                        0.0,
                        beta_max,
                        tol,
                    );
                    match inner {
                        Ok(e) => e.value,
                        Err(e) => {
                            inner_err.get_or_insert(e);
                            0.0
                        }
                    }
                },
                0.0,
                2.0 * PI,
                tol,
            )?;
            if let Some(e) = inner_err {
                return Err(e);
            }
            Ok(outer.value)
        }
    }
}

/// Rate from an infinite plane of spins with areal density `sigma` (nm⁻²)
/// at height `standoff` above the surface, for an NV at `depth`.
pub fn plane_integrated_rate(
    consts: &PhysicalConstants,
    species: &SpinSpecies,
    depth: f64,
    sigma: f64,
    standoff: f64,
    kernel: Kernel,
    axis: &Vector3<f64>,
) -> Result<f64> {
    let d = depth + standoff;
    if !(d > 0.0) {
        return Err(SimError::invalid("depth", "depth + standoff must be positive"));
    }
    if !(sigma >= 0.0) {
        return Err(SimError::invalid("sigma", "areal density must be non-negative"));
    }
    if sigma == 0.0 {
        return Ok(0.0);
    }
    let angular = angular_disk_integral(kernel, axis, FRAC_PI_2, Tolerance::default())?;
    Ok(sigma * species.strength_nm6(consts, consts.omega0) * angular / d.powi(4))
}

/// Closed-form simple-kernel geometry constant: ∫ 2πr·4/(d²+r²)³ dr = 2π/d⁴,
/// so the plane rate is σ · strength · K / d⁴ with K = 2π.
pub fn simple_plane_constant() -> f64 {
    2.0 * PI
}

/// Fraction of the plane rate contributed by the disk of `radius` centered
/// above an NV at vertical distance `depth` from the spin plane.
pub fn sensing_fraction(depth: f64, radius: f64, kernel: Kernel, axis: &Vector3<f64>) -> Result<f64> {
    if !(depth > 0.0) {
        return Err(SimError::invalid("depth", "must be positive"));
    }
    if !(radius >= 0.0) {
        return Err(SimError::invalid("radius", "must be non-negative"));
    }
    if radius.is_infinite() {
        return Ok(1.0);
    }
    let tol = Tolerance::default();
    let total = angular_disk_integral(kernel, axis, FRAC_PI_2, tol)?;
    let part = angular_disk_integral(kernel, axis, (radius / depth).atan(), tol)?;
    Ok((part / total).clamp(0.0, 1.0))
}
