//! Spin arrays for the squeezing study.

use crate::error::{Result, SimError};
use crate::rng::{self, Domain};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

/// Dipolar coupling constant J, rad/s·nm³.
pub const DIPOLAR_J: f64 = 2.0 * std::f64::consts::PI * 52e6;
pub const DEFAULT_LATTICE_CONSTANT_NM: f64 = 20.0;
/// Smallest separation any array may contain (nm).
pub const MIN_SEPARATION_NM: f64 = 1.0;
/// Default hard-core distance used when placing random or disordered spins
/// (nm).
pub const DEFAULT_EXCLUSION_NM: f64 = 5.0;

const MAX_RESAMPLES: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeKind {
    Square,
    SquareDisordered,
    SquareDiluted,
    /// Square grid with both positional disorder and partial filling.
    SquareDisorderedDiluted,
    /// Uniform points at the square lattice's areal density 1/a².
    Random,
}

impl LatticeKind {
    pub fn label(&self) -> &'static str {
        match self {
            LatticeKind::Square => "ideal",
            LatticeKind::SquareDisordered => "disordered",
            LatticeKind::SquareDiluted => "diluted",
            LatticeKind::SquareDisorderedDiluted => "disordered_diluted",
            LatticeKind::Random => "random",
        }
    }
}

/// Fields left out of a serialized spec take the ideal-grid defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatticeSpec {
    pub kind: LatticeKind,
    pub rows: usize,
    pub cols: usize,
    pub a_nm: f64,
    /// Per-axis Gaussian offset (disordered kinds), nm.
    pub sigma_r_nm: f64,
    /// Site occupation probability (diluted kinds).
    pub filling: f64,
    /// Dipolar constant, rad/s·nm³.
    pub j_rad_s_nm3: f64,
    /// Randomly placed spins closer than this are redrawn, nm.
    pub exclusion_nm: f64,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        Self::new(LatticeKind::Square)
    }
}

impl LatticeSpec {
    pub fn new(kind: LatticeKind) -> Self {
        Self {
            kind,
            rows: 10,
            cols: 10,
            a_nm: DEFAULT_LATTICE_CONSTANT_NM,
            sigma_r_nm: 2.0,
            filling: 0.75,
            j_rad_s_nm3: DIPOLAR_J,
            exclusion_nm: DEFAULT_EXCLUSION_NM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(SimError::invalid("dims", "rows and cols must be positive"));
        }
        if !(self.a_nm > 0.0) || !self.a_nm.is_finite() {
            return Err(SimError::invalid("a_nm", format!("lattice constant must be positive, got {}", self.a_nm)));
        }
        if !(self.sigma_r_nm >= 0.0) {
            return Err(SimError::invalid("sigma_r_nm", "must be non-negative"));
        }
        if !(self.filling > 0.0 && self.filling <= 1.0) {
            return Err(SimError::invalid("filling", "must lie in (0, 1]"));
        }
        if !(self.exclusion_nm > MIN_SEPARATION_NM) || !self.exclusion_nm.is_finite() {
            return Err(SimError::invalid("exclusion_nm", format!("must exceed {MIN_SEPARATION_NM} nm")));
        }
        if !(self.j_rad_s_nm3 >= 0.0) {
            return Err(SimError::invalid("j_rad_s_nm3", "must be non-negative"));
        }
        Ok(())
    }

    /// Nearest-neighbor coupling J/a³ of the ideal grid, rad/s.
    pub fn nearest_neighbor_coupling(&self) -> f64 {
        self.j_rad_s_nm3 / self.a_nm.powi(3)
    }

    pub fn areal_density(&self) -> f64 {
        1.0 / (self.a_nm * self.a_nm)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinLattice {
    pub positions: Vec<[f64; 2]>,
    /// J/r³ for i ≠ j, zero diagonal, rad/s.
    pub couplings: Array2<f64>,
}

impl SpinLattice {
    pub fn from_positions(positions: Vec<[f64; 2]>, j: f64) -> Result<Self> {
        let n = positions.len();
        let mut couplings = Array2::zeros((n, n));
        for i in 0..n {
            for k in (i + 1)..n {
                let r = dist(&positions[i], &positions[k]);
                if !(r > MIN_SEPARATION_NM) {
                    return Err(SimError::invalid("positions", format!("spins {i} and {k} are {r:.3} nm apart")));
                }
                let c = j / (r * r * r);
                couplings[[i, k]] = c;
                couplings[[k, i]] = c;
            }
        }
        Ok(Self { positions, couplings })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, p) in self.positions.iter().enumerate() {
            for q in &self.positions[i + 1..] {
                best = best.min(dist(p, q));
            }
        }
        best
    }
}

fn dist(p: &[f64; 2], q: &[f64; 2]) -> f64 {
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}

fn too_close(p: &[f64; 2], placed: &[[f64; 2]], exclusion: f64) -> bool {
    placed.iter().any(|q| dist(p, q) <= exclusion)
}

/// Place spins per `spec`; deterministic in `seed`.
pub fn build_lattice(spec: &LatticeSpec, seed: u64) -> Result<SpinLattice> {
    spec.validate()?;
    let mut rng = rng::stream(seed, Domain::LatticeGeometry, 0);
    let a = spec.a_nm;
    let grid: Vec<[f64; 2]> = (0..spec.rows)
        .flat_map(|r| (0..spec.cols).map(move |c| [c as f64 * a, r as f64 * a]))
        .collect();
    let disordered = matches!(spec.kind, LatticeKind::SquareDisordered | LatticeKind::SquareDisorderedDiluted);
    let diluted = matches!(spec.kind, LatticeKind::SquareDiluted | LatticeKind::SquareDisorderedDiluted);
    let mut placed: Vec<[f64; 2]> = Vec::with_capacity(grid.len());
    match spec.kind {
        LatticeKind::Random => {
            let (w, h) = (spec.cols as f64 * a, spec.rows as f64 * a);
            for _ in 0..grid.len() {
                let p = resample(&placed, spec.exclusion_nm, || [rng.random_range(0.0..w), rng.random_range(0.0..h)])?;
                placed.push(p);
            }
        }
        _ => {
            let offset = Normal::new(0.0, spec.sigma_r_nm).map_err(|e| SimError::Numeric(e.to_string()))?;
            for site in grid {
                if diluted && rng.random::<f64>() >= spec.filling {
                    continue;
                }
                let p = if disordered {
                    resample(&placed, spec.exclusion_nm, || [site[0] + offset.sample(&mut rng), site[1] + offset.sample(&mut rng)])?
                } else {
                    site
                };
                placed.push(p);
            }
        }
    }
    SpinLattice::from_positions(placed, spec.j_rad_s_nm3)
}

fn resample<F: FnMut() -> [f64; 2]>(placed: &[[f64; 2]], exclusion: f64, mut draw: F) -> Result<[f64; 2]> {
    for _ in 0..MAX_RESAMPLES {
        let p = draw();
        if !too_close(&p, placed, exclusion) {
            return Ok(p);
        }
    }
    Err(SimError::Numeric(format!("could not keep spins {exclusion} nm apart after {MAX_RESAMPLES} draws")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ideal_grid_nearest_neighbor() {
        let spec = LatticeSpec::new(LatticeKind::Square);
        let l = build_lattice(&spec, 0).unwrap();
        assert_eq!(l.len(), 100);
        let nn = l.couplings[[0, 1]];
        assert!((nn / (2.0 * std::f64::consts::PI * 6.5e3) - 1.0).abs() < 1e-12);
        assert_eq!(l.couplings[[3, 3]], 0.0);
        assert_eq!(l.couplings[[7, 42]], l.couplings[[42, 7]]);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = LatticeSpec::new(LatticeKind::Square);
        s.a_nm = -1.0;
        assert!(matches!(build_lattice(&s, 0), Err(SimError::InvalidInput { field: "a_nm", .. })));
        let mut s = LatticeSpec::new(LatticeKind::SquareDiluted);
        s.filling = 0.0;
        assert!(build_lattice(&s, 0).is_err());
    }

    #[test]
    fn random_respects_min_distance_and_is_deterministic() {
        let spec = LatticeSpec::new(LatticeKind::Random);
        let a = build_lattice(&spec, 4).unwrap();
        let b = build_lattice(&spec, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 100);
        assert!(a.min_distance() > spec.exclusion_nm);
        let tight = LatticeSpec { exclusion_nm: 1.0 + 1e-9, ..spec };
        assert!(build_lattice(&tight, 4).unwrap().min_distance() > MIN_SEPARATION_NM);
        let bad = LatticeSpec { exclusion_nm: 0.5, ..spec };
        assert!(matches!(build_lattice(&bad, 4), Err(SimError::InvalidInput { field: "exclusion_nm", .. })));
    }
}
