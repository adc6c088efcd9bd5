//! Domain specifications and discrete grids.
//!
//! A [`Grid`] is a uniform tensor lattice over one of the supported domains,
//! carrying node coordinates, per-node quadrature weights and the boundary
//! layout. The nodal (midpoint) weights make the discrete inner product
//! `sum_m w_m f_m g_m` approximate the volume integral of `f g`, keep the
//! mass matrix diagonal, and integrate resolved trigonometric products
//! exactly on periodic grids.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Minimum cells per axis accepted by [`build_grid`].
pub const MIN_RESOLUTION: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryKind {
    Dirichlet,
    Periodic,
}

/// Positive density on a weighted torus.
///
/// `Samples` holds one value per node in lattice order and is the canonical
/// form: grids built from a callable store the sampled values and never
/// resample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DensitySpec {
    Constant { value: f64 },
    /// `rho(x, y) = base + amp * cos(2 pi x / px) * cos(2 pi y / py)`.
    Cosine { base: f64, amp: f64 },
    Samples { values: Vec<f64> },
}

/// Domain specification: geometry, resolution (cells per axis) and the
/// implied boundary condition (Dirichlet for bounded domains, periodic for
/// tori).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    Interval {
        a: f64,
        b: f64,
        resolution: usize,
    },
    Rectangle {
        lx: f64,
        ly: f64,
        resolution: [usize; 2],
    },
    /// Square `[0, side]^2` with the closed quadrant `[notch*side, side]^2`
    /// removed. The notch corner must land on a grid line.
    LShape {
        side: f64,
        notch: f64,
        resolution: usize,
    },
    Torus {
        periods: Vec<f64>,
        resolution: Vec<usize>,
    },
    WeightedTorus {
        periods: [f64; 2],
        resolution: [usize; 2],
        density: DensitySpec,
    },
}

impl DomainSpec {
    pub fn dim(&self) -> usize {
        match self {
            DomainSpec::Interval { .. } => 1,
            DomainSpec::Rectangle { .. }
            | DomainSpec::LShape { .. }
            | DomainSpec::WeightedTorus { .. } => 2,
            DomainSpec::Torus { periods, .. } => periods.len(),
        }
    }

    pub fn bc(&self) -> BoundaryKind {
        match self {
            DomainSpec::Interval { .. }
            | DomainSpec::Rectangle { .. }
            | DomainSpec::LShape { .. } => BoundaryKind::Dirichlet,
            DomainSpec::Torus { .. } | DomainSpec::WeightedTorus { .. } => BoundaryKind::Periodic,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            DomainSpec::Interval { .. } => "interval",
            DomainSpec::Rectangle { .. } => "rectangle",
            DomainSpec::LShape { .. } => "l_shape",
            DomainSpec::Torus { .. } => "torus",
            DomainSpec::WeightedTorus { .. } => "weighted_torus",
        }
    }

    fn resolutions(&self) -> Vec<usize> {
        match self {
            DomainSpec::Interval { resolution, .. } => vec![*resolution],
            DomainSpec::Rectangle { resolution, .. } => resolution.to_vec(),
            DomainSpec::LShape { resolution, .. } => vec![*resolution, *resolution],
            DomainSpec::Torus { resolution, .. } => resolution.clone(),
            DomainSpec::WeightedTorus { resolution, .. } => resolution.to_vec(),
        }
    }

    fn validate(&self) -> Result<()> {
        let res = self.resolutions();
        if res.iter().any(|&r| r < MIN_RESOLUTION) {
            return Err(Error::InvalidDomain(format!(
                "resolution must be >= {MIN_RESOLUTION} per axis, got {res:?}"
            )));
        }
        match self {
            DomainSpec::Interval { a, b, .. } => {
                if !(b > a) {
                    return Err(Error::InvalidDomain(format!("need b > a, got [{a}, {b}]")));
                }
            }
            DomainSpec::Rectangle { lx, ly, .. } => {
                if !(*lx > 0.0 && *ly > 0.0) {
                    return Err(Error::InvalidDomain(format!(
                        "rectangle sides must be positive, got {lx} x {ly}"
                    )));
                }
            }
            DomainSpec::LShape {
                side,
                notch,
                resolution,
            } => {
                if !(*side > 0.0) {
                    return Err(Error::InvalidDomain(format!("side must be positive, got {side}")));
                }
                if !(*notch > 0.0 && *notch < 1.0) {
                    return Err(Error::InvalidDomain(format!(
                        "notch fraction must lie in (0, 1), got {notch}"
                    )));
                }
                let cut = notch * *resolution as f64;
                if (cut - cut.round()).abs() > 1e-9 {
                    return Err(Error::InvalidDomain(format!(
                        "l_shape notch not aligned to grid: notch*resolution = {cut} is not an integer"
                    )));
                }
                let cut = cut.round() as usize;
                if cut == 0 || cut >= *resolution {
                    return Err(Error::InvalidDomain(
                        "l_shape notch corner must be strictly inside the square".into(),
                    ));
                }
            }
            DomainSpec::Torus {
                periods,
                resolution,
            } => {
                let d = periods.len();
                if d == 0 || d > 3 {
                    return Err(Error::InvalidDomain(format!(
                        "torus dimension must be in 1..=3, got {d}"
                    )));
                }
                if resolution.len() != d {
                    return Err(Error::InvalidDomain(format!(
                        "torus needs one resolution per axis: {d} axes, {} resolutions",
                        resolution.len()
                    )));
                }
                if periods.iter().any(|&p| !(p > 0.0)) {
                    return Err(Error::InvalidDomain(format!(
                        "torus periods must be positive, got {periods:?}"
                    )));
                }
            }
            DomainSpec::WeightedTorus {
                periods, density, ..
            } => {
                if periods.iter().any(|&p| !(p > 0.0)) {
                    return Err(Error::InvalidDomain(format!(
                        "torus periods must be positive, got {periods:?}"
                    )));
                }
                match density {
                    DensitySpec::Constant { value } => {
                        if !(*value > 0.0) {
                            return Err(Error::InvalidDomain(format!(
                                "density must be positive, got constant {value}"
                            )));
                        }
                    }
                    DensitySpec::Cosine { base, amp } => {
                        if !(base - amp.abs() > 0.0) {
                            return Err(Error::InvalidDomain(format!(
                                "cosine density base {base} must exceed |amp| {amp}"
                            )));
                        }
                    }
                    // sample positivity checked against the node count in build_grid
                    DensitySpec::Samples { .. } => {}
                }
            }
        }
        Ok(())
    }
}

/// Discrete grid over a [`DomainSpec`].
///
/// Only nodes carrying unknowns are materialized (interior nodes for
/// Dirichlet domains, every node for periodic ones); `interior_mask` covers
/// the full tensor lattice including boundary nodes.
#[derive(Clone, Debug)]
pub struct Grid {
    spec: DomainSpec,
    bc: BoundaryKind,
    dim: usize,
    /// Full lattice nodes per axis (Dirichlet: resolution+1 including the
    /// boundary; periodic: resolution).
    lattice_sizes: Vec<usize>,
    spacing: Vec<f64>,
    /// Unknown id per full-lattice node, -1 for boundary/notch nodes.
    lattice_to_unknown: Vec<i64>,
    /// Lattice index of each unknown.
    unknown_to_lattice: Vec<usize>,
    /// Flattened coordinates, `dim` entries per unknown.
    coords: Vec<f64>,
    weights: Vec<f64>,
    interior_mask: Vec<bool>,
    hash: String,
}

impl Grid {
    pub fn spec(&self) -> &DomainSpec {
        &self.spec
    }

    pub fn bc(&self) -> BoundaryKind {
        self.bc
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_unknowns(&self) -> usize {
        self.unknown_to_lattice.len()
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn max_spacing(&self) -> f64 {
        self.spacing.iter().cloned().fold(0.0, f64::max)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn interior_mask(&self) -> &[bool] {
        &self.interior_mask
    }

    pub fn coord(&self, unknown: usize) -> &[f64] {
        &self.coords[unknown * self.dim..(unknown + 1) * self.dim]
    }

    pub fn node_coords(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    /// Weighted total, `sum w` (the discrete volume, density-weighted on a
    /// weighted torus).
    pub fn volume(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Discrete inner product `sum_m w_m f_m g_m`.
    pub fn inner(&self, f: &[f64], g: &[f64]) -> Result<f64> {
        self.check_len(f)?;
        self.check_len(g)?;
        Ok(self
            .weights
            .iter()
            .zip(f.iter().zip(g.iter()))
            .map(|(w, (a, b))| w * a * b)
            .sum())
    }

    pub fn norm(&self, f: &[f64]) -> Result<f64> {
        Ok(self.inner(f, f)?.sqrt())
    }

    /// Nodal max of `|f|`.
    pub fn sup_norm(&self, f: &[f64]) -> Result<f64> {
        if f.is_empty() {
            return Err(Error::EmptyField);
        }
        self.check_len(f)?;
        Ok(f.iter().fold(0.0f64, |m, v| m.max(v.abs())))
    }

    /// Sample a function of the node coordinates into a nodal field.
    pub fn sample(&self, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
        self.node_coords().map(|x| f(x)).collect()
    }

    pub fn check_len(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.n_unknowns() {
            return Err(Error::SizeMismatch {
                expected: self.n_unknowns(),
                got: f.len(),
            });
        }
        Ok(())
    }

    /// Content hash over the defining data (spec, layout, coordinates,
    /// weights). Used to tie persisted bases back to the grid they were
    /// built on.
    pub fn content_hash(&self) -> &str {
        &self.hash
    }

    pub(crate) fn lattice_sizes(&self) -> &[usize] {
        &self.lattice_sizes
    }

    pub(crate) fn lattice_to_unknown(&self) -> &[i64] {
        &self.lattice_to_unknown
    }

    pub(crate) fn unknown_to_lattice(&self) -> &[usize] {
        &self.unknown_to_lattice
    }

    /// Decompose a flat lattice index into per-axis indices (last axis
    /// fastest).
    pub(crate) fn lattice_multi_index(&self, flat: usize, out: &mut [usize]) {
        let mut rem = flat;
        for ax in (0..self.dim).rev() {
            out[ax] = rem % self.lattice_sizes[ax];
            rem /= self.lattice_sizes[ax];
        }
    }

    pub(crate) fn lattice_flat_index(&self, multi: &[usize]) -> usize {
        let mut flat = 0;
        for ax in 0..self.dim {
            flat = flat * self.lattice_sizes[ax] + multi[ax];
        }
        flat
    }
}

/// Build the discrete grid for a validated domain spec.
pub fn build_grid(spec: &DomainSpec) -> Result<Grid> {
    spec.validate()?;
    let bc = spec.bc();
    let dim = spec.dim();
    let res = spec.resolutions();

    let (origin, extents): (Vec<f64>, Vec<f64>) = match spec {
        DomainSpec::Interval { a, b, .. } => (vec![*a], vec![b - a]),
        DomainSpec::Rectangle { lx, ly, .. } => (vec![0.0, 0.0], vec![*lx, *ly]),
        DomainSpec::LShape { side, .. } => (vec![0.0, 0.0], vec![*side, *side]),
        DomainSpec::Torus { periods, .. } => (vec![0.0; periods.len()], periods.clone()),
        DomainSpec::WeightedTorus { periods, .. } => (vec![0.0, 0.0], periods.to_vec()),
    };
    let spacing: Vec<f64> = extents
        .iter()
        .zip(res.iter())
        .map(|(e, &r)| e / r as f64)
        .collect();
    let lattice_sizes: Vec<usize> = match bc {
        BoundaryKind::Dirichlet => res.iter().map(|&r| r + 1).collect(),
        BoundaryKind::Periodic => res.clone(),
    };
    let lattice_len: usize = lattice_sizes.iter().product();

    // Notch test for the L-shape, in lattice indices.
    let notch_cut = match spec {
        DomainSpec::LShape {
            notch, resolution, ..
        } => Some((notch * *resolution as f64).round() as usize),
        _ => None,
    };

    let mut lattice_to_unknown = vec![-1i64; lattice_len];
    let mut unknown_to_lattice = Vec::new();
    let mut interior_mask = vec![false; lattice_len];
    let mut multi = vec![0usize; dim];
    for flat in 0..lattice_len {
        let mut rem = flat;
        for ax in (0..dim).rev() {
            multi[ax] = rem % lattice_sizes[ax];
            rem /= lattice_sizes[ax];
        }
        let is_unknown = match bc {
            BoundaryKind::Periodic => true,
            BoundaryKind::Dirichlet => {
                let interior = multi
                    .iter()
                    .zip(res.iter())
                    .all(|(&i, &r)| i > 0 && i < r);
                match notch_cut {
                    Some(cut) => interior && !(multi[0] >= cut && multi[1] >= cut),
                    None => interior,
                }
            }
        };
        if is_unknown {
            lattice_to_unknown[flat] = unknown_to_lattice.len() as i64;
            unknown_to_lattice.push(flat);
            interior_mask[flat] = true;
        }
    }

    let cell_volume: f64 = spacing.iter().product();
    let mut coords = Vec::with_capacity(unknown_to_lattice.len() * dim);
    let mut weights = Vec::with_capacity(unknown_to_lattice.len());
    for &flat in &unknown_to_lattice {
        let mut rem = flat;
        for ax in (0..dim).rev() {
            multi[ax] = rem % lattice_sizes[ax];
            rem /= lattice_sizes[ax];
        }
        for ax in 0..dim {
            coords.push(origin[ax] + multi[ax] as f64 * spacing[ax]);
        }
        weights.push(cell_volume);
    }

    // Density samples become the weights' rho factor; stored samples are the
    // ground truth from here on.
    if let DomainSpec::WeightedTorus {
        periods, density, ..
    } = spec
    {
        let n = unknown_to_lattice.len();
        let rho: Vec<f64> = match density {
            DensitySpec::Constant { value } => vec![*value; n],
            DensitySpec::Cosine { base, amp } => coords
                .chunks_exact(dim)
                .map(|x| {
                    base + amp
                        * (2.0 * std::f64::consts::PI * x[0] / periods[0]).cos()
                        * (2.0 * std::f64::consts::PI * x[1] / periods[1]).cos()
                })
                .collect(),
            DensitySpec::Samples { values } => {
                if values.len() != n {
                    return Err(Error::InvalidDomain(format!(
                        "density sample count {} does not match {} nodes",
                        values.len(),
                        n
                    )));
                }
                values.clone()
            }
        };
        if rho.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::InvalidDomain(
                "density must be strictly positive at every node".into(),
            ));
        }
        for (w, r) in weights.iter_mut().zip(rho.iter()) {
            *w *= r;
        }
    }

    let mut grid = Grid {
        spec: spec.clone(),
        bc,
        dim,
        lattice_sizes,
        spacing,
        lattice_to_unknown,
        unknown_to_lattice,
        coords,
        weights,
        interior_mask,
        hash: String::new(),
    };
    grid.hash = hash_grid(&grid)?;
    Ok(grid)
}

/// Build a weighted-torus grid from a density callable; the samples taken
/// here are stored in the spec and never recomputed.
pub fn build_weighted_torus_grid(
    periods: [f64; 2],
    resolution: [usize; 2],
    rho: impl Fn(f64, f64) -> f64,
) -> Result<Grid> {
    let probe = DomainSpec::Torus {
        periods: periods.to_vec(),
        resolution: resolution.to_vec(),
    };
    let plain = build_grid(&probe)?;
    let values: Vec<f64> = plain.node_coords().map(|x| rho(x[0], x[1])).collect();
    build_grid(&DomainSpec::WeightedTorus {
        periods,
        resolution,
        density: DensitySpec::Samples { values },
    })
}

fn hash_grid(grid: &Grid) -> Result<String> {
    let mut hasher = Sha256::new();
    hasher.update(serde_json::to_vec(&grid.spec)?);
    for &s in &grid.lattice_sizes {
        hasher.update((s as u64).to_le_bytes());
    }
    for v in grid.coords.iter().chain(grid.weights.iter()) {
        hasher.update(v.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    pub(crate) fn interval(res: usize) -> Grid {
        build_grid(&DomainSpec::Interval {
            a: 0.0,
            b: PI,
            resolution: res,
        })
        .unwrap()
    }

    fn torus1(res: usize) -> Grid {
        build_grid(&DomainSpec::Torus {
            periods: vec![2.0 * PI],
            resolution: vec![res],
        })
        .unwrap()
    }

    #[test]
    fn interval_grid_layout() {
        let g = interval(9);
        assert_eq!(g.n_unknowns(), 8);
        assert_relative_eq!(g.spacing()[0], PI / 9.0);
        for &w in g.weights() {
            assert_relative_eq!(w, PI / 9.0);
        }
        assert_relative_eq!(g.coord(0)[0], PI / 9.0);
        assert_relative_eq!(g.coord(7)[0], 8.0 * PI / 9.0);
    }

    #[test]
    fn torus_volume_is_period() {
        let g = torus1(16);
        assert_eq!(g.n_unknowns(), 16);
        assert_relative_eq!(g.volume(), 2.0 * PI, max_relative = 1e-14);
    }

    #[test]
    fn weighted_torus_constant_density_scales_volume() {
        let g = build_grid(&DomainSpec::WeightedTorus {
            periods: [2.0 * PI, 2.0 * PI],
            resolution: [16, 16],
            density: DensitySpec::Constant { value: 2.0 },
        })
        .unwrap();
        assert_eq!(g.n_unknowns(), 256);
        assert_relative_eq!(g.volume(), 2.0 * (2.0 * PI).powi(2), max_relative = 1e-13);
    }

    #[test]
    fn l_shape_node_count_excludes_notch() {
        let g = build_grid(&DomainSpec::LShape {
            side: 1.0,
            notch: 0.5,
            resolution: 16,
        })
        .unwrap();
        // 15^2 interior minus the 8x8 block with both indices >= 8
        assert_eq!(g.n_unknowns(), 15 * 15 - 8 * 8);
        let inside_notch = g
            .node_coords()
            .filter(|x| x[0] >= 0.5 && x[1] >= 0.5)
            .count();
        assert_eq!(inside_notch, 0);
    }

    #[test]
    fn l_shape_misaligned_notch_rejected() {
        let err = build_grid(&DomainSpec::LShape {
            side: 1.0,
            notch: 0.3,
            resolution: 16,
        })
        .unwrap_err();
        assert!(matches!(err, Error::InvalidDomain(_)));
    }

    #[test]
    fn coarse_resolution_rejected() {
        let err = build_grid(&DomainSpec::Interval {
            a: 0.0,
            b: PI,
            resolution: 7,
        })
        .unwrap_err();
        assert!(matches!(err, Error::InvalidDomain(_)));
    }

    #[test]
    fn nonpositive_density_rejected() {
        let err = build_weighted_torus_grid([2.0 * PI, 2.0 * PI], [8, 8], |x, _| x.cos()).unwrap_err();
        assert!(matches!(err, Error::InvalidDomain(_)));
    }

    #[test]
    fn inner_constant_on_torus_is_volume() {
        let g = torus1(16);
        let one = vec![1.0; g.n_unknowns()];
        assert_relative_eq!(g.inner(&one, &one).unwrap(), 2.0 * PI, max_relative = 1e-14);
    }

    #[test]
    fn inner_sin_cos_orthogonal_on_torus() {
        let g = torus1(16);
        let f = g.sample(|x| x[0].sin());
        let h = g.sample(|x| x[0].cos());
        assert!(g.inner(&f, &h).unwrap().abs() < 1e-13);
    }

    #[test]
    fn inner_normalized_sine_near_one() {
        // exact integral is 1; nodal quadrature error is far below h^2 here
        // because the integrand vanishes with zero slope of f^2 at the ends
        let g = interval(64);
        let f = g.sample(|x| (2.0 / PI).sqrt() * x[0].sin());
        assert!((g.inner(&f, &f).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn inner_is_bitwise_symmetric() {
        let g = interval(33);
        let f = g.sample(|x| (3.1 * x[0]).sin() + 0.3);
        let h = g.sample(|x| (1.7 * x[0]).cos() - 0.1);
        assert_eq!(g.inner(&f, &h).unwrap(), g.inner(&h, &f).unwrap());
    }

    #[test]
    fn inner_positive_definite() {
        let g = interval(17);
        let zero = vec![0.0; g.n_unknowns()];
        assert_eq!(g.inner(&zero, &zero).unwrap(), 0.0);
        let f = g.sample(|x| (x[0] - 1.0).max(0.0));
        assert!(g.inner(&f, &f).unwrap() > 0.0);
    }

    #[test]
    fn inner_length_mismatch_rejected() {
        let g = interval(16);
        let short = vec![1.0; 3];
        assert!(matches!(
            g.inner(&short, &short).unwrap_err(),
            Error::SizeMismatch { .. }
        ));
    }

    #[test]
    fn refinement_order_of_inner_at_least_1_8() {
        // fixed smooth admissible f with a closed-form square integral
        let exact = PI.powi(5) / 30.0; // integral of (x(pi-x))^2 over (0, pi)
        let err_at = |res: usize| {
            let g = interval(res);
            let f = g.sample(|x| x[0] * (PI - x[0]));
            (g.inner(&f, &f).unwrap() - exact).abs()
        };
        let (e1, e2) = (err_at(32), err_at(64));
        let order = (e1 / e2).log2();
        assert!(order >= 1.8, "observed refinement order {order}");
    }

    #[test]
    fn sup_norm_basics() {
        let g = torus1(16);
        let zero = vec![0.0; 16];
        assert_eq!(g.sup_norm(&zero).unwrap(), 0.0);
        let s = g.sample(|x| x[0].sin());
        // the grid hits pi/2 exactly at node 4
        assert_relative_eq!(g.sup_norm(&s).unwrap(), 1.0, max_relative = 1e-15);
        assert!(matches!(g.sup_norm(&[]).unwrap_err(), Error::EmptyField));
    }

    #[test]
    fn sup_norm_of_first_mode_misses_peak_by_h_squared() {
        let g = interval(33);
        let f = g.sample(|x| (2.0 / PI).sqrt() * x[0].sin());
        let h = g.spacing()[0];
        let gap = ((2.0 / PI).sqrt() - g.sup_norm(&f).unwrap()).abs();
        assert!(gap <= 0.5 * h * h, "gap {gap} vs h^2 {}", h * h);
    }

    #[test]
    fn grid_hash_distinguishes_specs() {
        let a = interval(16);
        let b = interval(17);
        assert_ne!(a.content_hash(), b.content_hash());
        let a2 = interval(16);
        assert_eq!(a.content_hash(), a2.content_hash());
    }
}
