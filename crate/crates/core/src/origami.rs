//! Triangular origami breadboard: binding-site geometry, label patterns,
//! surface deposition and spin-position realization.

use crate::error::{Result, SimError};
use crate::rng::{self, Domain};
use log::debug;
use nalgebra::{Rotation2, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

pub const DEFAULT_SIDE_NM: f64 = 130.0;
pub const DEFAULT_SITE_COUNT: usize = 204;
/// Fraction of the surface a closed layer of origami can cover (central hole).
pub const MAX_COVERAGE: f64 = 0.86;
pub const MAX_LABELS_PER_SITE: u32 = 4;
pub const DEFAULT_STANDOFF_NM: f64 = 1.5;
pub const DEFAULT_LINKER_RADIUS_NM: f64 = 0.5;

// Site grid: barycentric lattice with this many points per side, inset from
// the edges by side/65, with the innermost points removed to form the hole.
const GRID_POINTS_PER_SIDE: usize = 21;
const GRID_INSET_FRACTION: f64 = 1.0 / 65.0;

// Periodic random sequential adsorption of randomly rotated triangles starts
// to jam near 0.5 within the attempt budget; denser layers use the lattice
// tiling.
const RSA_MAX_AREA_FRACTION: f64 = 0.4;
const RSA_ATTEMPTS_PER_TILE: usize = 10_000;

/// An equilateral triangle given by its three vertices (counter-clockwise).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub vertices: [Vector2<f64>; 3],
}

impl Triangle {
    /// Up-pointing equilateral triangle of side `side` centered on the origin.
    pub fn centered(side: f64) -> Self {
        let rc = side / 3f64.sqrt();
        let v = |deg: f64| {
            let a = deg.to_radians();
            Vector2::new(rc * a.cos(), rc * a.sin())
        };
        Self { vertices: [v(90.0), v(210.0), v(330.0)] }
    }

    pub fn transformed(&self, center: Vector2<f64>, angle: f64) -> Self {
        let rot = Rotation2::new(angle);
        Self { vertices: self.vertices.map(|p| center + rot * p) }
    }

    /// Signed distance from `p` to the nearest edge; positive inside.
    pub fn edge_distance(&self, p: &Vector2<f64>) -> f64 {
        (0..3)
            .map(|k| {
                let a = self.vertices[k];
                let e = self.vertices[(k + 1) % 3] - a;
                let inward = Vector2::new(-e.y, e.x) / e.norm();
                (p - a).dot(&inward)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        self.edge_distance(p) >= -1e-9
    }

    pub fn centroid(&self) -> Vector2<f64> {
        (self.vertices[0] + self.vertices[1] + self.vertices[2]) / 3.0
    }

    /// Separating-axis test; shared edges or touching vertices do not count.
    pub fn overlaps(&self, other: &Triangle) -> bool {
        const EPS: f64 = 1e-9;
        for tri in [self, other] {
            for k in 0..3 {
                let e = tri.vertices[(k + 1) % 3] - tri.vertices[k];
                let axis = Vector2::new(-e.y, e.x);
                let (a0, a1) = project(self, &axis);
                let (b0, b1) = project(other, &axis);
                if a1 <= b0 + EPS * axis.norm() || b1 <= a0 + EPS * axis.norm() {
                    return false;
                }
            }
        }
        true
    }
}

fn project(t: &Triangle, axis: &Vector2<f64>) -> (f64, f64) {
    t.vertices
        .iter()
        .map(|v| v.dot(axis))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
}

/// Breadboard geometry. Site positions are in the origami frame: centroid at
/// the origin, apex along +y.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrigamiDesign {
    pub side_length_nm: f64,
    pub sites: Vec<[f64; 2]>,
    /// Projected solid-triangle area, nm².
    pub area_nm2: f64,
    pub max_coverage: f64,
}

impl Default for OrigamiDesign {
    fn default() -> Self {
        Self::default_site_grid(DEFAULT_SIDE_NM).expect("default side length is valid")
    }
}

impl OrigamiDesign {
    /// 204 sites on a regular triangular grid with the central region left
    /// empty, for a triangle of side `side_length_nm`.
    pub fn default_site_grid(side_length_nm: f64) -> Result<Self> {
        if !(side_length_nm > 0.0) || !side_length_nm.is_finite() {
            return Err(SimError::invalid("side_length_nm", "must be positive"));
        }
        let n = GRID_POINTS_PER_SIDE;
        let steps = (n - 1) as f64;
        let inner_side = side_length_nm * (1.0 - 2.0 * 3f64.sqrt() * GRID_INSET_FRACTION);
        let tri = Triangle::centered(inner_side);
        let [a, b, c] = tri.vertices;

        struct Candidate {
            pos: Vector2<f64>,
            depth: usize,
            order: usize,
        }
        let mut candidates = Vec::with_capacity(n * (n + 1) / 2);
        for j in 0..n {
            for i in 0..(n - j) {
                let k = n - 1 - i - j;
                let pos = (a * k as f64 + b * i as f64 + c * j as f64) / steps;
                candidates.push(Candidate { pos, depth: i.min(j).min(k), order: candidates.len() });
            }
        }
        let excess = candidates.len() - DEFAULT_SITE_COUNT;
        // Innermost first; ties broken by distance from the centroid.
        let mut by_depth: Vec<usize> = (0..candidates.len()).collect();
        by_depth.sort_by(|&x, &y| {
            let (cx, cy) = (&candidates[x], &candidates[y]);
            cy.depth
                .cmp(&cx.depth)
                .then(cx.pos.norm().total_cmp(&cy.pos.norm()))
                .then(cx.order.cmp(&cy.order))
        });
        let mut removed = vec![false; candidates.len()];
        for &idx in &by_depth[..excess] {
            removed[idx] = true;
        }
        let sites = candidates
            .iter()
            .filter(|c| !removed[c.order])
            .map(|c| [c.pos.x, c.pos.y])
            .collect();
        Ok(Self {
            side_length_nm,
            sites,
            area_nm2: 3f64.sqrt() / 4.0 * side_length_nm * side_length_nm,
            max_coverage: MAX_COVERAGE,
        })
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn triangle(&self) -> Triangle {
        Triangle::centered(self.side_length_nm)
    }

    /// Binding sites per unit projected area, nm⁻².
    pub fn site_density(&self) -> f64 {
        self.sites.len() as f64 / self.area_nm2
    }
}

/// Which binding sites carry labels and how many labels each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelPattern {
    pub occupied_sites: Vec<usize>,
    pub labels_per_site: u32,
}

impl LabelPattern {
    /// `n_b` sites spread evenly through the site list.
    pub fn evenly_spaced(n_b: usize, labels_per_site: u32, design: &OrigamiDesign) -> Result<Self> {
        let total = design.site_count();
        if n_b > total {
            return Err(SimError::invalid("n_b", format!("{n_b} exceeds the {total} available sites")));
        }
        let occupied_sites = (0..n_b).map(|k| (k * total) / n_b.max(1)).collect();
        let p = Self { occupied_sites, labels_per_site };
        p.validate(design)?;
        Ok(p)
    }

    pub fn n_b(&self) -> usize {
        self.occupied_sites.len()
    }

    pub fn validate(&self, design: &OrigamiDesign) -> Result<()> {
        if self.labels_per_site > MAX_LABELS_PER_SITE {
            return Err(SimError::invalid("labels_per_site", format!("must be at most {MAX_LABELS_PER_SITE}")));
        }
        let mut seen = vec![false; design.site_count()];
        for &s in &self.occupied_sites {
            if s >= seen.len() || std::mem::replace(&mut seen[s], true) {
                return Err(SimError::invalid("occupied_sites", format!("site {s} out of range or repeated")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlacementMode {
    /// Uniform Poisson process at the mean label density.
    EffectiveDensity,
    /// Explicit non-overlapping triangles carrying labels on their sites.
    #[default]
    ExplicitTiling,
}

/// How origami sit on the surface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrigamiDeposition {
    /// Fractional surface coverage C_s (already normalized by the hole factor).
    pub coverage: f64,
    pub standoff_nm: f64,
    pub mode: PlacementMode,
    pub linker_radius_nm: f64,
}

impl Default for OrigamiDeposition {
    fn default() -> Self {
        Self {
            coverage: 0.88,
            standoff_nm: DEFAULT_STANDOFF_NM,
            mode: PlacementMode::default(),
            linker_radius_nm: DEFAULT_LINKER_RADIUS_NM,
        }
    }
}

impl OrigamiDeposition {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.coverage) {
            return Err(SimError::invalid("coverage", format!("must lie in [0, 1], got {}", self.coverage)));
        }
        if !(0.5..=5.0).contains(&self.standoff_nm) {
            return Err(SimError::invalid("standoff_nm", format!("must lie in [0.5, 5] nm, got {}", self.standoff_nm)));
        }
        if !(self.linker_radius_nm >= 0.0) {
            return Err(SimError::invalid("linker_radius_nm", "must be non-negative"));
        }
        Ok(())
    }
}

/// Mean areal Gd density σ = N_b·M·C_s / A, nm⁻².
pub fn gd_surface_density(pattern: &LabelPattern, dep: &OrigamiDeposition, design: &OrigamiDesign) -> f64 {
    pattern.n_b() as f64 * pattern.labels_per_site as f64 * dep.coverage / design.area_nm2
}

/// Expected number of spins inside a disk of `sensing_radius` nm.
pub fn density_to_ngd(sigma_gd: f64, sensing_radius: f64) -> f64 {
    sigma_gd * PI * sensing_radius * sensing_radius
}

/// Axis-aligned rectangle in the surface plane, nm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Region {
    pub fn centered_square(half_width: f64) -> Self {
        Self { x0: -half_width, y0: -half_width, x1: half_width, y1: half_width }
    }

    pub fn area(&self) -> f64 {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        p.x >= self.x0 && p.x < self.x1 && p.y >= self.y0 && p.y < self.y1
    }

    /// The rectangle grown by `margin` on every side.
    pub fn padded(&self, margin: f64) -> Self {
        Self { x0: self.x0 - margin, y0: self.y0 - margin, x1: self.x1 + margin, y1: self.y1 + margin }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vector2<f64> {
        Vector2::new(rng.random_range(self.x0..self.x1), rng.random_range(self.y0..self.y1))
    }
}

/// One placed origami: centroid position and rotation of the origami frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tile {
    pub center: [f64; 2],
    pub angle: f64,
}

impl Tile {
    pub fn triangle(&self, design: &OrigamiDesign) -> Triangle {
        design.triangle().transformed(Vector2::from(self.center), self.angle)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TilingMethod {
    SequentialAdsorption,
    Lattice,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tiling {
    pub tiles: Vec<Tile>,
    pub method: TilingMethod,
    /// Solid-triangle area fraction of the region actually placed.
    pub achieved_coverage: f64,
}

/// Place non-overlapping triangles so their area fraction in `region`
/// approaches `coverage`.
pub fn tile_region<R: Rng>(design: &OrigamiDesign, coverage: f64, region: &Region, rng: &mut R) -> Result<Tiling> {
    if coverage <= 0.0 {
        return Ok(Tiling { tiles: vec![], method: TilingMethod::SequentialAdsorption, achieved_coverage: 0.0 });
    }
    if coverage <= RSA_MAX_AREA_FRACTION {
        sequential_adsorption(design, coverage, region, rng)
    } else {
        Ok(lattice_tiling(design, coverage, region, rng))
    }
}

fn sequential_adsorption<R: Rng>(design: &OrigamiDesign, coverage: f64, region: &Region, rng: &mut R) -> Result<Tiling> {
    // Fractional tile counts are resolved at random so the expected
    // density is exact in small regions too.
    let expected = coverage * region.area() / design.area_nm2;
    let target = expected.floor() as usize + (rng.random::<f64>() < expected.fract()) as usize;
    let reach = 2.0 * design.side_length_nm / 3f64.sqrt(); // two circumradii
    let cell_of = |p: &Vector2<f64>| ((p.x / reach).floor() as i64, (p.y / reach).floor() as i64);
    let (w, h) = (region.x1 - region.x0, region.y1 - region.y0);
    let images: Vec<Vector2<f64>> =
        [-1.0, 0.0, 1.0].iter().flat_map(|&i| [-1.0, 0.0, 1.0].map(|j| Vector2::new(i * w, j * h))).collect();
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    let mut tiles = Vec::with_capacity(target);
    let mut tris: Vec<Triangle> = Vec::with_capacity(target);
    let max_attempts = RSA_ATTEMPTS_PER_TILE.saturating_mul(target.max(1));
    let mut attempts = 0;
    while tiles.len() < target && attempts < max_attempts {
        attempts += 1;
        let center = region.sample(rng);
        let angle = rng.random_range(0.0..TAU);
        // Overlaps are tested against periodic images as well, so the
        // region edges do not collect extra tiles.
        let clash = images.iter().any(|shift| {
            let c = center + shift;
            let tri = design.triangle().transformed(c, angle);
            let (cx, cy) = cell_of(&c);
            (-1..=1).any(|dx| {
                (-1..=1).any(|dy| {
                    grid.get(&(cx + dx, cy + dy))
                        .is_some_and(|ids| ids.iter().any(|&k| tris[k].overlaps(&tri)))
                })
            })
        });
        if clash {
            continue;
        }
        grid.entry(cell_of(&center)).or_default().push(tris.len());
        tris.push(design.triangle().transformed(center, angle));
        tiles.push(Tile { center: [center.x, center.y], angle });
    }
    let achieved = tiles.len() as f64 * design.area_nm2 / region.area();
    if tiles.len() < target {
        return Err(SimError::Tiling { achieved, requested: coverage });
    }
    debug!("sequential adsorption placed {} tiles in {} attempts", tiles.len(), attempts);
    Ok(Tiling { tiles, method: TilingMethod::SequentialAdsorption, achieved_coverage: achieved })
}

/// Alternating up/down slots of an enlarged triangular tiling, each holding
/// one origami displaced by a random offset that keeps it inside its slot.
fn lattice_tiling<R: Rng>(design: &OrigamiDesign, coverage: f64, region: &Region, rng: &mut R) -> Tiling {
    let side = design.side_length_nm;
    let slot = side / coverage.sqrt();
    let slack = (slot - side) / (2.0 * 3f64.sqrt()); // inradius difference
    let theta = rng.random_range(0.0..TAU);
    let origin = region.sample(rng);
    let rot = Rotation2::new(theta);
    let a1 = rot * Vector2::new(slot, 0.0);
    let a2 = rot * Vector2::new(0.5 * slot, 0.5 * 3f64.sqrt() * slot);
    let diag = ((region.x1 - region.x0).powi(2) + (region.y1 - region.y0).powi(2)).sqrt();
    let span = (diag / slot).ceil() as i64 + 2;
    let mut tiles = Vec::new();
    for p in -span..=span {
        for q in -span..=span {
            let base = origin + a1 * p as f64 + a2 * q as f64;
            for (frac, flip) in [(1.0 / 3.0, 0.0), (2.0 / 3.0, PI)] {
                let centroid = base + (a1 + a2) * frac;
                if !region.contains(&centroid) {
                    continue;
                }
                let r = slack * rng.random::<f64>().sqrt();
                let phi = rng.random_range(0.0..TAU);
                let center = centroid + Vector2::new(r * phi.cos(), r * phi.sin());
                tiles.push(Tile { center: [center.x, center.y], angle: theta + flip });
            }
        }
    }
    let achieved = tiles.len() as f64 * design.area_nm2 / region.area();
    Tiling { tiles, method: TilingMethod::Lattice, achieved_coverage: achieved }
}

/// Spin positions of one surface realization, with provenance for export.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Realization {
    pub positions: Vec<Vector3<f64>>,
    /// Binding-site index per spin; `None` in effective-density mode.
    pub site_index: Vec<Option<u32>>,
    pub origami_id: Vec<Option<u32>>,
    pub tiles: Vec<Tile>,
    pub achieved_coverage: f64,
}

impl Realization {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// Realize spin positions over `region`. Deterministic for a given `seed`.
pub fn realize_spin_positions(
    design: &OrigamiDesign,
    pattern: &LabelPattern,
    dep: &OrigamiDeposition,
    region: &Region,
    seed: u64,
) -> Result<Realization> {
    dep.validate()?;
    pattern.validate(design)?;
    if region.area() < 10.0 * design.area_nm2 {
        return Err(SimError::invalid("region", "region must be much larger than one origami"));
    }
    let mut rng = rng::stream(seed, Domain::SpinRealization, 0);
    let mut out = Realization::default();
    if dep.coverage == 0.0 || pattern.n_b() == 0 || pattern.labels_per_site == 0 {
        return Ok(out);
    }
    match dep.mode {
        PlacementMode::EffectiveDensity => {
            let sigma = gd_surface_density(pattern, dep, design);
            let count = Poisson::new(sigma * region.area())
                .map_err(|e| SimError::Numeric(e.to_string()))?
                .sample(&mut rng) as usize;
            for _ in 0..count {
                let p = region.sample(&mut rng);
                out.positions.push(Vector3::new(p.x, p.y, dep.standoff_nm));
                out.site_index.push(None);
                out.origami_id.push(None);
            }
            out.achieved_coverage = dep.coverage;
        }
        PlacementMode::ExplicitTiling => {
            // Tiles near the edge of the tiled area spill past it, so tile a
            // margin of one circumradius and keep the spins inside `region`;
            // the label density is then uniform across the whole region.
            let margin = design.side_length_nm / 3f64.sqrt() + dep.linker_radius_nm;
            let tiling = tile_region(design, dep.coverage, &region.padded(margin), &mut rng)?;
            for (id, tile) in tiling.tiles.iter().enumerate() {
                let rot = Rotation2::new(tile.angle);
                let center = Vector2::from(tile.center);
                for &site in &pattern.occupied_sites {
                    let anchor = center + rot * Vector2::from(design.sites[site]);
                    for _ in 0..pattern.labels_per_site {
                        let r = dep.linker_radius_nm * rng.random::<f64>().sqrt();
                        let phi = rng.random_range(0.0..TAU);
                        let p = Vector2::new(anchor.x + r * phi.cos(), anchor.y + r * phi.sin());
                        if !region.contains(&p) {
                            continue;
                        }
                        out.positions.push(Vector3::new(p.x, p.y, dep.standoff_nm));
                        out.site_index.push(Some(site as u32));
                        out.origami_id.push(Some(id as u32));
                    }
                }
            }
            out.achieved_coverage = tiling.achieved_coverage;
            out.tiles = tiling.tiles;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_has_204_sites_inside_triangle() {
        let d = OrigamiDesign::default();
        assert_eq!(d.site_count(), 204);
        let tri = d.triangle();
        for s in &d.sites {
            assert!(tri.edge_distance(&Vector2::from(*s)) > 1.0);
        }
        // Central hole: nothing within a few nm of the centroid.
        assert!(d.sites.iter().all(|s| Vector2::from(*s).norm() > 10.0));
        let density = d.site_density();
        assert!((0.025..=0.030).contains(&density), "{density}");
        assert!((d.area_nm2 - 7317.9147).abs() < 1e-3);
    }

    #[test]
    fn doubling_side_quarters_density() {
        let a = OrigamiDesign::default_site_grid(130.0).unwrap();
        let b = OrigamiDesign::default_site_grid(260.0).unwrap();
        assert_eq!(b.site_count(), 204);
        assert!((a.site_density() / b.site_density() - 4.0).abs() < 1e-12);
        assert!(OrigamiDesign::default_site_grid(0.0).is_err());
    }

    #[test]
    fn eq2_density_values() {
        let d = OrigamiDesign::default();
        let full = LabelPattern::evenly_spaced(204, 4, &d).unwrap();
        let dep = OrigamiDeposition { coverage: 1.0, ..Default::default() };
        let sigma = gd_surface_density(&full, &dep, &d);
        assert!((sigma - 204.0 * 4.0 / d.area_nm2).abs() < 1e-15);
        assert!((sigma - 0.1115).abs() < 1e-3);
        let none = LabelPattern::evenly_spaced(204, 0, &d).unwrap();
        assert_eq!(gd_surface_density(&none, &dep, &d), 0.0);
        let half = OrigamiDeposition { coverage: 0.5, ..dep };
        assert!((gd_surface_density(&full, &half, &d) - sigma / 2.0).abs() < 1e-16);
    }

    #[test]
    fn ngd_conversion() {
        assert_eq!(density_to_ngd(0.0, 4.0), 0.0);
        assert!((density_to_ngd(0.02, 4.0) - 1.005_309_649_148_734).abs() < 1e-12);
        assert!(density_to_ngd(0.0198, 4.0) < 1.0);
    }

    #[test]
    fn pattern_validation() {
        let d = OrigamiDesign::default();
        assert!(LabelPattern::evenly_spaced(205, 1, &d).is_err());
        assert!(LabelPattern::evenly_spaced(10, 5, &d).is_err());
        let p = LabelPattern { occupied_sites: vec![1, 1], labels_per_site: 1 };
        assert!(p.validate(&d).is_err());
    }

    #[test]
    fn deposition_validation() {
        let bad = OrigamiDeposition { standoff_nm: 0.1, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = OrigamiDeposition { coverage: 1.2, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn triangles_overlap_logic() {
        let t = Triangle::centered(10.0);
        assert!(t.overlaps(&t.transformed(Vector2::new(3.0, 0.0), 0.0)));
        assert!(!t.overlaps(&t.transformed(Vector2::new(30.0, 0.0), 0.7)));
        // Up and down triangles sharing an edge do not overlap.
        let slot = Triangle { vertices: [Vector2::new(0.0, 0.0), Vector2::new(10.0, 0.0), Vector2::new(5.0, 8.660254037844386)] };
        let down = Triangle { vertices: [Vector2::new(10.0, 0.0), Vector2::new(15.0, 8.660254037844386), Vector2::new(5.0, 8.660254037844386)] };
        assert!(!slot.overlaps(&down));
    }

    #[test]
    fn zero_coverage_is_empty() {
        let d = OrigamiDesign::default();
        let p = LabelPattern::evenly_spaced(204, 4, &d).unwrap();
        let dep = OrigamiDeposition { coverage: 0.0, ..Default::default() };
        let r = realize_spin_positions(&d, &p, &dep, &Region::centered_square(500.0), 1).unwrap();
        assert!(r.is_empty());
    }
}
