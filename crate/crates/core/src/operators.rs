//! Discrete Laplacian assembly and shifted-inverse solves.
//!
//! The stiffness matrix is the standard second-order (2d+1)-point stencil
//! scaled by the cell volume, paired with the diagonal mass given by the
//! grid weights, so the generalized problem `L e = lambda^2 M e` carries the
//! classical discrete eigenvalues and its eigenvectors are orthonormal in
//! the quadrature inner product. On a weighted torus the density enters the
//! mass only, discretizing `-lap e = lambda^2 rho e`.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::domains::{BoundaryKind, Grid};
use crate::error::{Error, Result};

/// Solver tolerance on the relative residual, measured in the inverse-mass
/// norm.
pub const SOLVE_RTOL: f64 = 1e-10;

/// Symmetric sparse stiffness plus diagonal mass.
#[derive(Debug)]
pub struct SparseOperator {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    mass: Vec<f64>,
    bc: BoundaryKind,
    solve_count: AtomicU64,
}

impl SparseOperator {
    pub fn n_unknowns(&self) -> usize {
        self.n
    }

    pub fn bc(&self) -> BoundaryKind {
        self.bc
    }

    /// Per-unknown diagonal mass (equals the grid weights).
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    /// Number of `solve_shifted` calls made through this operator.
    pub fn solve_invocations(&self) -> u64 {
        self.solve_count.load(Ordering::Relaxed)
    }

    /// Stiffness application `y = L f` (no mass factor).
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.n {
            return Err(Error::SizeMismatch {
                expected: self.n,
                got: f.len(),
            });
        }
        let mut y = vec![0.0; self.n];
        self.apply_into(f, &mut y);
        Ok(y)
    }

    pub(crate) fn apply_into(&self, f: &[f64], y: &mut [f64]) {
        for row in 0..self.n {
            let mut acc = 0.0;
            for idx in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc += self.values[idx] * f[self.col_idx[idx]];
            }
            y[row] = acc;
        }
    }

    /// Stored entry at `(i, j)`, zero if absent. Test support.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        for idx in self.row_ptr[i]..self.row_ptr[i + 1] {
            if self.col_idx[idx] == j {
                return self.values[idx];
            }
        }
        0.0
    }

    fn mass_mean(&self, f: &[f64]) -> f64 {
        let num: f64 = self.mass.iter().zip(f).map(|(m, v)| m * v).sum();
        let den: f64 = self.mass.iter().sum();
        num / den
    }

    /// Solve `(shift*M + L) u = M f`, i.e. `u = (shift*I - lap)^{-1} f` in
    /// operator terms. `shift = 0` requires a Dirichlet operator or a
    /// mean-zero `f` on a periodic one, where the solve runs on the
    /// mean-zero complement and returns the mean-zero solution.
    pub fn solve_shifted(&self, f: &[f64], shift: f64) -> Result<Vec<f64>> {
        if f.len() != self.n {
            return Err(Error::SizeMismatch {
                expected: self.n,
                got: f.len(),
            });
        }
        if shift < 0.0 {
            return Err(Error::BadExponentArg(format!("negative shift {shift}")));
        }
        self.solve_count.fetch_add(1, Ordering::Relaxed);

        let singular = shift == 0.0 && self.bc == BoundaryKind::Periodic;
        let mut rhs_field = f.to_vec();
        if singular {
            let mean = self.mass_mean(f);
            let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
            if mean.abs() > 1e-10 * scale {
                return Err(Error::SingularSystem);
            }
            // remove the numerical mean so CG stays on the complement
            for v in rhs_field.iter_mut() {
                *v -= mean;
            }
        }

        // b = M f
        let b: Vec<f64> = self
            .mass
            .iter()
            .zip(&rhs_field)
            .map(|(m, v)| m * v)
            .collect();
        let inv_mass_norm = |r: &[f64]| -> f64 {
            r.iter()
                .zip(&self.mass)
                .map(|(v, m)| v * v / m)
                .sum::<f64>()
                .sqrt()
        };
        let b_norm = inv_mass_norm(&b);
        if b_norm == 0.0 {
            return Ok(vec![0.0; self.n]);
        }

        // Jacobi preconditioner on shift*M + L
        let mut diag = vec![0.0; self.n];
        for row in 0..self.n {
            diag[row] = shift * self.mass[row] + self.entry(row, row);
        }
        let project = |v: &mut Vec<f64>| {
            if singular {
                let mean = self.mass_mean(v);
                for x in v.iter_mut() {
                    *x -= mean;
                }
            }
        };

        let apply_a = |x: &[f64], y: &mut Vec<f64>| {
            self.apply_into(x, y);
            if shift != 0.0 {
                for ((yi, mi), xi) in y.iter_mut().zip(&self.mass).zip(x) {
                    *yi += shift * mi * xi;
                }
            }
        };

        let mut x = vec![0.0; self.n];
        let mut r = b.clone();
        let mut z: Vec<f64> = r.iter().zip(&diag).map(|(v, d)| v / d).collect();
        project(&mut z);
        let mut p = z.clone();
        let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let mut ap = vec![0.0; self.n];
        let max_iter = 10 * self.n;

        for it in 0..max_iter {
            apply_a(&p, &mut ap);
            let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
            if pap <= 0.0 {
                return Err(Error::NoConvergence {
                    iterations: it,
                    residual: inv_mass_norm(&r) / b_norm,
                });
            }
            let alpha = rz / pap;
            for i in 0..self.n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            if inv_mass_norm(&r) <= SOLVE_RTOL * b_norm {
                project(&mut x);
                return Ok(x);
            }
            z.clear();
            z.extend(r.iter().zip(&diag).map(|(v, d)| v / d));
            project(&mut z);
            let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..self.n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::NoConvergence {
            iterations: max_iter,
            residual: inv_mass_norm(&r) / b_norm,
        })
    }
}

/// Assemble the stiffness/mass pair for a grid.
pub fn assemble_laplacian(grid: &Grid) -> SparseOperator {
    let n = grid.n_unknowns();
    let dim = grid.dim();
    let spacing = grid.spacing();
    let cell_volume: f64 = spacing.iter().product();
    let sizes = grid.lattice_sizes();
    let to_unknown = grid.lattice_to_unknown();

    let mut row_ptr = Vec::with_capacity(n + 1);
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    row_ptr.push(0);

    let mut multi = vec![0usize; dim];
    let mut neigh = vec![0usize; dim];
    for unknown in 0..n {
        let flat = grid.unknown_to_lattice()[unknown];
        grid.lattice_multi_index(flat, &mut multi);

        // gather (col, value) then sort by col for a canonical CSR row
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(2 * dim + 1);
        let mut diag = 0.0;
        for ax in 0..dim {
            let coeff = cell_volume / (spacing[ax] * spacing[ax]);
            diag += 2.0 * coeff;
            for dir in [-1i64, 1i64] {
                neigh.copy_from_slice(&multi);
                let pos = multi[ax] as i64 + dir;
                let pos = match grid.bc() {
                    BoundaryKind::Periodic => {
                        (pos.rem_euclid(sizes[ax] as i64)) as usize
                    }
                    BoundaryKind::Dirichlet => {
                        if pos < 0 || pos as usize >= sizes[ax] {
                            continue; // off the lattice entirely
                        }
                        pos as usize
                    }
                };
                neigh[ax] = pos;
                let nb = to_unknown[grid.lattice_flat_index(&neigh)];
                if nb >= 0 {
                    row.push((nb as usize, -coeff));
                }
                // boundary/notch neighbors are dropped; the diagonal keeps
                // its full 2/h^2 contribution, enforcing the zero trace
            }
        }
        row.push((unknown, diag));
        row.sort_by_key(|&(c, _)| c);
        // merge duplicates (periodic wrap can alias on tiny lattices)
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
        for (c, v) in row {
            match merged.last_mut() {
                Some((lc, lv)) if *lc == c => *lv += v,
                _ => merged.push((c, v)),
            }
        }
        for (c, v) in merged {
            col_idx.push(c);
            values.push(v);
        }
        row_ptr.push(col_idx.len());
    }

    SparseOperator {
        n,
        row_ptr,
        col_idx,
        values,
        mass: grid.weights().to_vec(),
        bc: grid.bc(),
        solve_count: AtomicU64::new(0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{build_grid, DomainSpec};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn torus1(res: usize) -> (Grid, SparseOperator) {
        let g = build_grid(&DomainSpec::Torus {
            periods: vec![2.0 * PI],
            resolution: vec![res],
        })
        .unwrap();
        let op = assemble_laplacian(&g);
        (g, op)
    }

    fn interval(res: usize) -> (Grid, SparseOperator) {
        let g = build_grid(&DomainSpec::Interval {
            a: 0.0,
            b: PI,
            resolution: res,
        })
        .unwrap();
        let op = assemble_laplacian(&g);
        (g, op)
    }

    #[test]
    fn stored_matrix_is_symmetric() {
        let g = build_grid(&DomainSpec::LShape {
            side: 1.0,
            notch: 0.5,
            resolution: 12,
        })
        .unwrap();
        let op = assemble_laplacian(&g);
        for i in 0..op.n_unknowns() {
            for idx in op.row_ptr[i]..op.row_ptr[i + 1] {
                let j = op.col_idx[idx];
                assert_eq!(op.values[idx], op.entry(j, i), "asym at ({i},{j})");
            }
        }
    }

    #[test]
    fn periodic_rows_sum_to_zero() {
        let (_, op) = torus1(16);
        let ones = vec![1.0; op.n_unknowns()];
        let y = op.apply(&ones).unwrap();
        for v in y {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn apply_realizes_discrete_symbol_on_torus() {
        let (g, op) = torus1(64);
        let h = g.spacing()[0];
        let symbol = (2.0 / (h * h)) * (1.0 - h.cos());
        let f = g.sample(|x| x[0].sin());
        let y = op.apply(&f).unwrap();
        for m in 0..g.n_unknowns() {
            // L f = symbol * (M f) nodewise for an exact discrete eigenvector
            assert_relative_eq!(y[m], symbol * op.mass()[m] * f[m], max_relative = 1e-11, epsilon = 1e-13);
        }
    }

    #[test]
    fn dirichlet_tridiagonal_entries() {
        let (g, op) = interval(9);
        let h = g.spacing()[0];
        // stiffness = cellvol * (2, -1, -1)/h^2 with cellvol = h
        assert_relative_eq!(op.entry(3, 3), 2.0 / h, max_relative = 1e-14);
        assert_relative_eq!(op.entry(3, 4), -1.0 / h, max_relative = 1e-14);
        assert_relative_eq!(op.entry(0, 1), -1.0 / h, max_relative = 1e-14);
        assert_eq!(op.entry(0, 5), 0.0);
    }

    #[test]
    fn dirichlet_eigenvector_identity() {
        // sampled sin(k x) is an exact discrete eigenvector of the pencil
        let (g, op) = interval(32);
        let h = g.spacing()[0];
        let k = 3.0;
        let lambda2 = (4.0 / (h * h)) * (k * h / 2.0).sin().powi(2);
        let f = g.sample(|x| (k * x[0]).sin());
        let y = op.apply(&f).unwrap();
        for m in 0..g.n_unknowns() {
            assert_relative_eq!(y[m], lambda2 * op.mass()[m] * f[m], max_relative = 1e-10, epsilon = 1e-12);
        }
    }

    #[test]
    fn apply_inner_is_self_adjoint() {
        let (g, op) = interval(40);
        let f = g.sample(|x| (2.3 * x[0]).sin() + 0.1 * x[0]);
        let h = g.sample(|x| (x[0] * x[0]).cos());
        let a = g.inner(&f, &op.apply(&h).unwrap()).unwrap();
        let b = g.inner(&h, &op.apply(&f).unwrap()).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-12);
    }

    #[test]
    fn stiffness_is_positive_semidefinite() {
        let (g, op) = torus1(32);
        // a handful of deterministic pseudo-random fields
        for seed in 0..8u64 {
            let f: Vec<f64> = (0..g.n_unknowns())
                .map(|m| {
                    let t = (seed as f64 + 1.0) * (m as f64 + 0.7);
                    (t.sin() * 43758.5453).fract() - 0.5
                })
                .collect();
            let quad = g.inner(&f, &op.apply(&f).unwrap()).unwrap();
            assert!(quad >= -1e-10, "negative quadratic form {quad}");
        }
    }

    #[test]
    fn solve_shift_one_inverts_eigenvector() {
        let (g, op) = torus1(48);
        let h = g.spacing()[0];
        let symbol = (2.0 / (h * h)) * (1.0 - h.cos());
        let f = g.sample(|x| x[0].sin());
        let u = op.solve_shifted(&f, 1.0).unwrap();
        for m in 0..g.n_unknowns() {
            assert_relative_eq!(u[m], f[m] / (1.0 + symbol), max_relative = 1e-7, epsilon = 1e-12);
        }
        assert_eq!(op.solve_invocations(), 1);
    }

    #[test]
    fn solve_shift_zero_divides_by_symbol() {
        let (g, op) = torus1(48);
        let h = g.spacing()[0];
        let symbol = (2.0 / (h * h)) * (1.0 - h.cos());
        let f = g.sample(|x| x[0].sin());
        let u = op.solve_shifted(&f, 0.0).unwrap();
        for m in 0..g.n_unknowns() {
            assert_relative_eq!(u[m], f[m] / symbol, max_relative = 1e-7, epsilon = 1e-12);
        }
    }

    #[test]
    fn constant_rhs_is_singular_at_shift_zero() {
        let (g, op) = torus1(16);
        let ones = vec![1.0; g.n_unknowns()];
        assert!(matches!(
            op.solve_shifted(&ones, 0.0).unwrap_err(),
            Error::SingularSystem
        ));
    }

    #[test]
    fn solve_after_apply_is_identity_on_mean_zero() {
        let (g, op) = torus1(32);
        let f = g.sample(|x| (2.0 * x[0]).sin() + 0.5 * (3.0 * x[0]).cos());
        let lf = op.apply(&f).unwrap();
        // L f is M-weighted; solve expects a plain field rhs: (shift M + L) u = M g
        let g_rhs: Vec<f64> = lf.iter().zip(op.mass()).map(|(v, m)| v / m).collect();
        let u = op.solve_shifted(&g_rhs, 0.0).unwrap();
        for m in 0..g.n_unknowns() {
            assert_relative_eq!(u[m], f[m], max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn dirichlet_shift_zero_solves_poisson() {
        // -u'' = sin(x) on (0, pi) with zero trace: u = sin(x)/1 at the
        // discrete symbol value
        let (g, op) = interval(64);
        let h = g.spacing()[0];
        let lambda2 = (4.0 / (h * h)) * (h / 2.0).sin().powi(2);
        let f = g.sample(|x| x[0].sin());
        let u = op.solve_shifted(&f, 0.0).unwrap();
        for m in 0..g.n_unknowns() {
            assert_relative_eq!(u[m], f[m] / lambda2, max_relative = 1e-7, epsilon = 1e-12);
        }
    }

    #[test]
    fn weighted_torus_mass_carries_density() {
        let g = build_grid(&DomainSpec::WeightedTorus {
            periods: [2.0 * PI, 2.0 * PI],
            resolution: [8, 8],
            density: crate::domains::DensitySpec::Constant { value: 2.0 },
        })
        .unwrap();
        let op = assemble_laplacian(&g);
        let cell = g.spacing()[0] * g.spacing()[1];
        for &m in op.mass() {
            assert_relative_eq!(m, 2.0 * cell, max_relative = 1e-14);
        }
        // stiffness is the plain torus stencil: row sums still vanish
        let ones = vec![1.0; op.n_unknowns()];
        for v in op.apply(&ones).unwrap() {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn size_mismatch_rejected() {
        let (_, op) = torus1(16);
        assert!(matches!(
            op.apply(&[1.0, 2.0]).unwrap_err(),
            Error::SizeMismatch { .. }
        ));
        assert!(matches!(
            op.solve_shifted(&[1.0, 2.0], 1.0).unwrap_err(),
            Error::SizeMismatch { .. }
        ));
    }
}
