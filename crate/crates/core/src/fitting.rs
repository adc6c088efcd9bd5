//! Product-space compression and density-fitted repulsion integrals.
//!
//! The pair space is assembled as a weighted matrix whose column `(i, j)`
//! is `sqrt(w) .* (e_i e_j)`, making Euclidean column geometry equal to the
//! quadrature L^2 geometry. Its epsilon-rank is measured two ways: the
//! spectral mode searches for the smallest eigenfunction-span cutoff `nu`
//! meeting a per-product residual target, the optimal mode truncates the
//! singular value decomposition with the same per-column criterion. Both
//! report ranks after re-verifying every residual against the returned
//! subspace.
//!
//! Four-center integrals `(ij|kl) = <p_ij, K p_kl>` use the domain Green
//! function as the kernel: shift 0 on Dirichlet domains, shift 1 on tori
//! (so the kernel is the resolvent and the periodic null space never
//! enters). The fitted path expands every product in a common subspace and
//! factors the table through a small kernel core, cutting the solve count
//! from one per pair to one per subspace column.

use std::sync::Arc;
use std::time::Instant;

use ndarray::{s, Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domains::BoundaryKind;
use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::SparseOperator;
use crate::products::NormKind;
use crate::spectra::{resolution_limit, EigenBasis};

/// Default cap on `n_unknowns * pair_count` for the dense product matrix.
pub const DEFAULT_CELL_BUDGET: u128 = 1 << 27;

/// Parseval defect below this relative threshold counts as fully captured.
const CAPTURE_FLOOR: f64 = 1e-13;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Spectral,
    Optimal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EriKernel {
    /// Shift-0 Green function; Dirichlet domains only.
    Green0,
    /// Shift-1 resolvent; safe on tori.
    Resolvent1,
}

impl EriKernel {
    pub fn shift(&self) -> f64 {
        match self {
            EriKernel::Green0 => 0.0,
            EriKernel::Resolvent1 => 1.0,
        }
    }
}

/// Weighted pair-product matrix `sqrt(w) .* (e_i e_j)`, columns in
/// lexicographic `(i, j)` order with `1 <= i <= j <= n`.
#[derive(Clone, Debug)]
pub struct ProductMatrix {
    basis: Arc<EigenBasis>,
    n: usize,
    pairs: Vec<(usize, usize)>,
    columns: Array2<f64>,
}

impl ProductMatrix {
    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn columns(&self) -> &Array2<f64> {
        &self.columns
    }

    /// Euclidean Gram of the weighted columns (equals the quadrature Gram
    /// of the plain products).
    pub fn gram(&self) -> Array2<f64> {
        self.columns.t().dot(&self.columns)
    }
}

fn pair_list(n: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
    for i in 1..=n {
        for j in i..=n {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Plain (unweighted) nodal products for a pair list.
fn plain_products(basis: &EigenBasis, pairs: &[(usize, usize)]) -> Result<Array2<f64>> {
    let rows = basis.n_unknowns();
    let mut out = Array2::zeros((rows, pairs.len()));
    for (c, &(i, j)) in pairs.iter().enumerate() {
        let ei = basis.mode(i)?;
        let ej = basis.mode(j)?;
        for r in 0..rows {
            out[[r, c]] = ei[r] * ej[r];
        }
    }
    Ok(out)
}

/// Assemble the weighted product matrix for pairs `1 <= i <= j <= n`.
pub fn assemble_products(
    basis: &Arc<EigenBasis>,
    n: usize,
    override_limit: bool,
    cell_budget: Option<u128>,
) -> Result<ProductMatrix> {
    if n < 1 {
        return Err(Error::MalformedReport("need n >= 1 pairs".into()));
    }
    basis.check_index(n)?;
    if basis.index_origin() > n {
        return Err(Error::MalformedReport("pair indices start at 1".into()));
    }
    let limit = resolution_limit(basis);
    if !override_limit && n > limit {
        return Err(Error::BeyondResolutionLimit { index: n, limit });
    }
    let pairs = pair_list(n);
    let rows = basis.n_unknowns();
    let cap = cell_budget.unwrap_or(DEFAULT_CELL_BUDGET);
    let cells = rows as u128 * pairs.len() as u128;
    if cells > cap {
        return Err(Error::MemoryBudget {
            cells,
            cap,
            rows,
            cols: pairs.len(),
        });
    }
    let mut columns = plain_products(basis, &pairs)?;
    let sqrt_w: Vec<f64> = basis.grid().weights().iter().map(|w| w.sqrt()).collect();
    for (mut row, &sw) in columns.rows_mut().into_iter().zip(&sqrt_w) {
        row *= sw;
    }
    Ok(ProductMatrix {
        basis: basis.clone(),
        n,
        pairs,
        columns,
    })
}

/// Result of an epsilon-rank fit.
#[derive(Clone, Debug)]
pub struct FitReport {
    pub n: usize,
    pub pair_count: usize,
    pub epsilon: f64,
    pub mode: FitMode,
    pub norm_kind: NormKind,
    /// Achieved subspace dimension.
    pub rank: usize,
    /// Worst per-product residual, re-verified against the returned basis.
    pub max_residual: f64,
    pub handle: FitHandle,
}

/// The fitted subspace itself.
#[derive(Clone, Debug)]
pub enum FitHandle {
    Spectral { nu: usize },
    /// Mass-orthonormal nodal columns (left singular vectors divided by
    /// `sqrt(w)`).
    Optimal { columns: Array2<f64> },
}

impl FitReport {
    /// Mass-orthonormal nodal columns spanning the fitted subspace.
    pub fn subspace_columns(&self, basis: &EigenBasis) -> Result<Array2<f64>> {
        match &self.handle {
            FitHandle::Optimal { columns } => Ok(columns.clone()),
            FitHandle::Spectral { nu } => {
                let m = basis.subspace_size(*nu)?;
                Ok(basis.modes().slice(s![.., ..m]).to_owned())
            }
        }
    }
}

/// Smallest spectral cutoff `nu` with every pair remainder at or below
/// `epsilon` in the requested norm (`L2` or `Linf`).
pub fn fit_spectral(
    basis: &Arc<EigenBasis>,
    n: usize,
    epsilon: f64,
    norm_kind: NormKind,
    override_limit: bool,
) -> Result<FitReport> {
    if !(epsilon > 0.0) {
        return Err(Error::MalformedReport("epsilon must be positive".into()));
    }
    if !matches!(norm_kind, NormKind::L2 | NormKind::Linf) {
        return Err(Error::MalformedReport(
            "spectral fits support L2 and Linf targets".into(),
        ));
    }
    let pm = assemble_products(basis, n, override_limit, None)?;
    let pairs = pm.pairs().to_vec();
    let p = pairs.len();
    let k = basis.k();

    // coefficients of every weighted column: modes are mass-orthonormal, so
    // coeffs = Modes^T W (products) = (sqrt(w) Modes)^T columns
    let sqrt_w: Vec<f64> = basis.grid().weights().iter().map(|w| w.sqrt()).collect();
    let mut weighted_modes = basis.modes().clone();
    for (mut row, &sw) in weighted_modes.rows_mut().into_iter().zip(&sqrt_w) {
        row *= sw;
    }
    let coeffs = weighted_modes.t().dot(pm.columns()); // K x P

    // worst-pair L2 remainder per subspace size, by exact tail sums plus the
    // clamped unresolved mass (Parseval noise floor)
    let l2_worst: Vec<f64> = {
        let mut per_size = vec![0.0f64; k + 1];
        for c in 0..p {
            let col_norm2: f64 = pm.columns().column(c).dot(&pm.columns().column(c));
            let captured: f64 = (0..k).map(|r| coeffs[[r, c]].powi(2)).sum();
            let mut unresolved = col_norm2 - captured;
            if unresolved < CAPTURE_FLOOR * col_norm2 {
                unresolved = 0.0;
            }
            let mut tail = unresolved;
            // suffix sums accumulated from the top of the spectrum
            let mut tails = vec![0.0f64; k + 1];
            tails[k] = tail;
            for m in (0..k).rev() {
                tail += coeffs[[m, c]].powi(2);
                tails[m] = tail;
            }
            for m in 0..=k {
                per_size[m] = per_size[m].max(tails[m]);
            }
        }
        per_size.iter().map(|t| t.sqrt()).collect()
    };

    // worst-pair residual for a subspace of size m
    let worst_at = |m: usize| -> f64 {
        match norm_kind {
            NormKind::L2 => l2_worst[m],
            NormKind::Linf => {
                // reconstruct remainders for all pairs at once
                let recon = basis
                    .modes()
                    .slice(s![.., ..m])
                    .dot(&coeffs.slice(s![..m, ..]));
                let mut worst = 0.0f64;
                for c in 0..p {
                    for r in 0..pm.columns().nrows() {
                        let rem = (pm.columns()[[r, c]] - recon[[r, c]]) / sqrt_w[r];
                        worst = worst.max(rem.abs());
                    }
                }
                worst
            }
            _ => unreachable!(),
        }
    };

    let origin = basis.index_origin();
    let min_size = 1usize;
    let max_size = k;
    if worst_at(max_size) > epsilon {
        return Err(Error::EpsilonUnreachable {
            epsilon,
            best: worst_at(max_size),
        });
    }
    // binary search the smallest admissible subspace size
    let (mut lo, mut hi) = (min_size, max_size);
    if worst_at(min_size) <= epsilon {
        hi = min_size;
    } else {
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if worst_at(mid) <= epsilon {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    // sup-norm tails are not a priori monotone: walk down while smaller
    // subspaces still meet the target, then re-verify
    let mut size = hi;
    while size > min_size && worst_at(size - 1) <= epsilon {
        size -= 1;
    }
    let max_residual = worst_at(size);
    if max_residual > epsilon + 1e-12 {
        return Err(Error::EpsilonUnreachable {
            epsilon,
            best: max_residual,
        });
    }
    let nu = size - 1 + origin;
    Ok(FitReport {
        n,
        pair_count: p,
        epsilon,
        mode: FitMode::Spectral,
        norm_kind,
        rank: size,
        max_residual,
        handle: FitHandle::Spectral { nu },
    })
}

/// Best-subspace compression: truncate the SVD of the product matrix at the
/// smallest rank where every column's Euclidean (= weighted L^2) residual
/// is at or below `epsilon`.
pub fn fit_optimal(pm: &ProductMatrix, epsilon: f64) -> Result<FitReport> {
    if !(epsilon > 0.0) {
        return Err(Error::MalformedReport("epsilon must be positive".into()));
    }
    let (u, svals, v) = linalg::thin_svd(pm.columns().view())?;
    let p = pm.pair_count();
    let kmax = svals.len();

    // residual^2 of column c at rank r is sum_{k >= r} s_k^2 V[c, k]^2,
    // accumulated from the smallest singular value upward
    let mut tails = Array2::<f64>::zeros((kmax + 1, p));
    for r in (0..kmax).rev() {
        let s2 = svals[r] * svals[r];
        for c in 0..p {
            tails[[r, c]] = tails[[r + 1, c]] + s2 * v[[c, r]] * v[[c, r]];
        }
    }
    let mut rank = kmax;
    for r in 0..=kmax {
        let worst = (0..p).map(|c| tails[[r, c]]).fold(0.0f64, f64::max);
        if worst.sqrt() <= epsilon {
            rank = r;
            break;
        }
    }

    // direct re-verification against the returned subspace
    let u_r = u.slice(s![.., ..rank]).to_owned();
    let proj = u_r.t().dot(pm.columns());
    let recon = u_r.dot(&proj);
    let mut max_residual = 0.0f64;
    for c in 0..p {
        let mut acc = 0.0;
        for r in 0..pm.columns().nrows() {
            let d = pm.columns()[[r, c]] - recon[[r, c]];
            acc += d * d;
        }
        max_residual = max_residual.max(acc.sqrt());
    }
    if max_residual > epsilon + 1e-12 {
        return Err(Error::EpsilonUnreachable {
            epsilon,
            best: max_residual,
        });
    }

    // store the subspace de-weighted, as nodal fields
    let sqrt_w: Vec<f64> = pm.basis().grid().weights().iter().map(|w| w.sqrt()).collect();
    let mut columns = u_r;
    for (mut row, &sw) in columns.rows_mut().into_iter().zip(&sqrt_w) {
        row /= sw;
    }
    Ok(FitReport {
        n: pm.n(),
        pair_count: p,
        epsilon,
        mode: FitMode::Optimal,
        norm_kind: NormKind::L2,
        rank,
        max_residual,
        handle: FitHandle::Optimal { columns },
    })
}

/// One row of a rank-growth study.
#[derive(Clone, Debug)]
pub struct RankRow {
    pub n: usize,
    pub epsilon: f64,
    pub rank: usize,
    pub max_residual: f64,
}

#[derive(Clone, Debug)]
pub struct RankStudy {
    pub mode: FitMode,
    pub rows: Vec<RankRow>,
    /// `(epsilon, slope of log rank vs log n)` per epsilon with >= 2 sizes.
    pub slope_vs_n: Vec<(f64, f64)>,
    /// `(n, slope of log rank vs log(1/epsilon))` per n with >= 2 epsilons.
    pub slope_vs_inv_eps: Vec<(usize, f64)>,
}

fn log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    sxy / sxx
}

/// FitReports over the grid `n_list x eps_list` plus fitted log-log slopes.
pub fn rank_growth_study(
    basis: &Arc<EigenBasis>,
    n_list: &[usize],
    eps_list: &[f64],
    mode: FitMode,
    override_limit: bool,
) -> Result<RankStudy> {
    let mut rows = Vec::with_capacity(n_list.len() * eps_list.len());
    for &n in n_list {
        let pm = match mode {
            FitMode::Optimal => Some(assemble_products(basis, n, override_limit, None)?),
            FitMode::Spectral => None,
        };
        for &eps in eps_list {
            let report = match mode {
                FitMode::Optimal => fit_optimal(pm.as_ref().unwrap(), eps)?,
                FitMode::Spectral => {
                    fit_spectral(basis, n, eps, NormKind::L2, override_limit)?
                }
            };
            rows.push(RankRow {
                n,
                epsilon: eps,
                rank: report.rank,
                max_residual: report.max_residual,
            });
        }
    }
    let mut slope_vs_n = Vec::new();
    for &eps in eps_list {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.epsilon == eps && r.rank > 0)
            .map(|r| ((r.n as f64).ln(), (r.rank as f64).ln()))
            .collect();
        if pts.len() >= 2 {
            slope_vs_n.push((eps, log_slope(&pts)));
        }
    }
    let mut slope_vs_inv_eps = Vec::new();
    for &n in n_list {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.n == n && r.rank > 0)
            .map(|r| ((1.0 / r.epsilon).ln(), (r.rank as f64).ln()))
            .collect();
        if pts.len() >= 2 {
            slope_vs_inv_eps.push((n, log_slope(&pts)));
        }
    }
    Ok(RankStudy {
        mode,
        rows,
        slope_vs_n,
        slope_vs_inv_eps,
    })
}

/// Exact and fitted four-center tables over pair indices.
#[derive(Clone, Debug)]
pub struct EriReport {
    pub n: usize,
    pub kernel: EriKernel,
    pub pairs: Vec<(usize, usize)>,
    /// Symmetric `P x P` table over pairs, `(ij|kl)` at `[pq, rs]`.
    pub exact: Option<Array2<f64>>,
    pub fitted: Option<Array2<f64>>,
    pub fitted_rank: Option<usize>,
    pub max_abs_error: Option<f64>,
    pub max_rel_error: Option<f64>,
    pub exact_seconds: f64,
    pub setup_seconds: f64,
    pub fitted_seconds: f64,
    pub exact_solves: u64,
    pub fitted_solves: u64,
}

impl EriReport {
    pub fn pair_index(&self, i: usize, j: usize) -> Option<usize> {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.pairs.iter().position(|&p| p == key)
    }
}

fn check_kernel(op: &SparseOperator, kernel: EriKernel) -> Result<()> {
    if kernel == EriKernel::Green0 && op.bc() == BoundaryKind::Periodic {
        return Err(Error::MalformedReport(
            "green0 kernel needs a Dirichlet operator; use resolvent1 on tori".into(),
        ));
    }
    Ok(())
}

/// Exact table: one shifted solve per pair, `(ij|kl) = <p_ij, K p_kl>`.
pub fn eri_exact(
    basis: &Arc<EigenBasis>,
    op: &SparseOperator,
    n: usize,
    kernel: EriKernel,
    override_limit: bool,
) -> Result<EriReport> {
    check_kernel(op, kernel)?;
    basis.check_index(n)?;
    let limit = resolution_limit(basis);
    if !override_limit && n > limit {
        return Err(Error::BeyondResolutionLimit { index: n, limit });
    }
    let pairs = pair_list(n);
    let p = pairs.len();
    let products = plain_products(basis, &pairs)?;
    let grid = basis.grid();

    let solves_before = op.solve_invocations();
    let start = Instant::now();
    let kernels: Vec<Vec<f64>> = (0..p)
        .into_par_iter()
        .map(|c| op.solve_shifted(products.column(c).to_vec().as_slice(), kernel.shift()))
        .collect::<Result<_>>()?;
    let mut table = Array2::zeros((p, p));
    for pq in 0..p {
        let col_pq = products.column(pq).to_vec();
        for rs in pq..p {
            let val = grid.inner(&col_pq, &kernels[rs])?;
            table[[pq, rs]] = val;
            table[[rs, pq]] = val;
        }
    }
    let exact_seconds = start.elapsed().as_secs_f64();
    let exact_solves = op.solve_invocations() - solves_before;

    for pq in 0..p {
        if table[[pq, pq]] < -1e-10 {
            return Err(Error::MalformedReport(format!(
                "kernel quadratic form went negative at pair {:?}: {}",
                pairs[pq],
                table[[pq, pq]]
            )));
        }
    }
    Ok(EriReport {
        n,
        kernel,
        pairs,
        exact: Some(table),
        fitted: None,
        fitted_rank: None,
        max_abs_error: None,
        max_rel_error: None,
        exact_seconds,
        setup_seconds: 0.0,
        fitted_seconds: 0.0,
        exact_solves,
        fitted_solves: 0,
    })
}

/// Density-fitted table through the subspace of `fit`: `r` solves for the
/// kernel core, then `(ij|kl) ~= c_ij^T M c_kl`.
pub fn eri_fitted(
    basis: &Arc<EigenBasis>,
    op: &SparseOperator,
    fit: &FitReport,
    n: usize,
    kernel: EriKernel,
    exact: Option<&EriReport>,
) -> Result<EriReport> {
    check_kernel(op, kernel)?;
    if fit.n < n {
        return Err(Error::MalformedReport(format!(
            "fit covers pairs up to n = {}, requested n = {}",
            fit.n, n
        )));
    }
    let pairs = pair_list(n);
    let p = pairs.len();
    let products = plain_products(basis, &pairs)?;
    let grid = basis.grid();
    let w = grid.weights();

    // subspace columns are mass-orthonormal nodal fields in both modes
    let cols = fit.subspace_columns(basis)?;
    let rank = cols.ncols();

    let setup_start = Instant::now();
    let solves_before = op.solve_invocations();
    let kernel_cols: Vec<Vec<f64>> = (0..rank)
        .into_par_iter()
        .map(|a| op.solve_shifted(cols.column(a).to_vec().as_slice(), kernel.shift()))
        .collect::<Result<_>>()?;
    let mut core = Array2::zeros((rank, rank));
    for a in 0..rank {
        let ca = cols.column(a).to_vec();
        for b in a..rank {
            let val = grid.inner(&ca, &kernel_cols[b])?;
            core[[a, b]] = val;
            core[[b, a]] = val;
        }
    }
    let setup_seconds = setup_start.elapsed().as_secs_f64();
    let fitted_solves = op.solve_invocations() - solves_before;

    let fit_start = Instant::now();
    // c_pair = cols^T W p_pair
    let mut weighted = products.clone();
    for (mut row, &wi) in weighted.rows_mut().into_iter().zip(w) {
        row *= wi;
    }
    let coeffs = cols.t().dot(&weighted); // rank x P
    let table = coeffs.t().dot(&core).dot(&coeffs); // P x P
    let fitted_seconds = fit_start.elapsed().as_secs_f64();

    let (max_abs_error, max_rel_error, exact_table) = match exact.and_then(|e| e.exact.as_ref()) {
        Some(exact_table) => {
            let scale = exact_table.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let mut abs_err = 0.0f64;
            let mut rel_err = 0.0f64;
            for pq in 0..p {
                for rs in 0..p {
                    let e = exact_table[[pq, rs]];
                    let f = table[[pq, rs]];
                    abs_err = abs_err.max((f - e).abs());
                    if e.abs() >= 1e-12 * scale.max(1e-300) {
                        rel_err = rel_err.max((f - e).abs() / e.abs());
                    }
                }
            }
            (
                Some(abs_err),
                Some(rel_err),
                Some(exact_table.clone()),
            )
        }
        None => (None, None, None),
    };

    Ok(EriReport {
        n,
        kernel,
        pairs,
        exact: exact_table,
        fitted: Some(table),
        fitted_rank: Some(rank),
        max_abs_error,
        max_rel_error,
        exact_seconds: exact.map(|e| e.exact_seconds).unwrap_or(0.0),
        setup_seconds,
        fitted_seconds,
        exact_solves: exact.map(|e| e.exact_solves).unwrap_or(0),
        fitted_solves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::{build_grid, DomainSpec};
    use crate::operators::assemble_laplacian;
    use crate::spectra::{analytic_basis, compute_basis, EigMethod};
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn torus1_analytic(res: usize, k: usize) -> Arc<EigenBasis> {
        let g = Arc::new(
            build_grid(&DomainSpec::Torus {
                periods: vec![2.0 * PI],
                resolution: vec![res],
            })
            .unwrap(),
        );
        Arc::new(analytic_basis(&g, k).unwrap())
    }

    fn torus2_analytic(res: usize, k: usize) -> Arc<EigenBasis> {
        let g = Arc::new(
            build_grid(&DomainSpec::Torus {
                periods: vec![2.0 * PI, 2.0 * PI],
                resolution: vec![res, res],
            })
            .unwrap(),
        );
        Arc::new(analytic_basis(&g, k).unwrap())
    }

    #[test]
    fn single_pair_column_norm_is_quartic_integral() {
        let basis = torus1_analytic(64, 4);
        let pm = assemble_products(&basis, 1, false, None).unwrap();
        assert_eq!(pm.pair_count(), 1);
        // column = sqrt(w) e_1^2 with e_1 = cos(x)/sqrt(pi):
        // norm^2 = int cos^4 / pi^2 = (3 pi / 4) / pi^2
        let norm2: f64 = pm.columns().column(0).dot(&pm.columns().column(0));
        assert_relative_eq!(norm2, 3.0 / (4.0 * PI), max_relative = 1e-12);
    }

    #[test]
    fn pair_count_and_order() {
        let basis = torus1_analytic(64, 24);
        let pm = assemble_products(&basis, 10, false, None).unwrap();
        assert_eq!(pm.pair_count(), 55);
        assert_eq!(pm.pairs()[0], (1, 1));
        assert_eq!(pm.pairs()[1], (1, 2));
        assert_eq!(pm.pairs()[10], (2, 2));
        assert_eq!(pm.pairs()[54], (10, 10));
    }

    #[test]
    fn gram_matches_symbolic_trig_overlaps() {
        // modes 1..3 on T^1: cos x, sin x, cos 2x, each scaled by 1/sqrt(pi).
        // each product expands in {1, cos kx, sin kx}; overlaps follow from
        // orthogonality of that dictionary on the circle.
        let basis = torus1_analytic(64, 12);
        let pm = assemble_products(&basis, 3, false, None).unwrap();
        let gram = pm.gram();
        // dictionary coefficients per product, as (const, [(freq, cos, sin)])
        let dict: Vec<(f64, Vec<(usize, f64, f64)>)> = vec![
            (0.5, vec![(2, 0.5, 0.0)]),              // cos^2
            (0.0, vec![(2, 0.0, 0.5)]),              // cos sin
            (0.0, vec![(1, 0.5, 0.0), (3, 0.5, 0.0)]), // cos x cos 2x
            (0.5, vec![(2, -0.5, 0.0)]),             // sin^2
            (0.0, vec![(1, 0.0, -0.5), (3, 0.0, 0.5)]), // sin x cos 2x = (sin3x - sinx)/2
            (0.5, vec![(4, 0.5, 0.0)]),              // cos^2 2x
        ];
        let overlap = |a: &(f64, Vec<(usize, f64, f64)>), b: &(f64, Vec<(usize, f64, f64)>)| {
            let mut total = 2.0 * PI * a.0 * b.0;
            for &(fa, ca, sa) in &a.1 {
                for &(fb, cb, sb) in &b.1 {
                    if fa == fb {
                        total += PI * (ca * cb + sa * sb);
                    }
                }
            }
            total / (PI * PI) // the two 1/sqrt(pi) normalizations
        };
        for p in 0..6 {
            for q in 0..6 {
                let want = overlap(&dict[p], &dict[q]);
                assert!(
                    (gram[[p, q]] - want).abs() <= 1e-12,
                    "gram[{p},{q}] = {} want {}",
                    gram[[p, q]],
                    want
                );
            }
        }
    }

    #[test]
    fn sin_x_cos_2x_dictionary_check() {
        // guard for the sign used in the symbolic table above
        let x = 0.7f64;
        assert_relative_eq!(
            x.sin() * (2.0 * x).cos(),
            0.5 * ((3.0 * x).sin() - x.sin()),
            max_relative = 1e-12
        );
    }

    #[test]
    fn memory_budget_guard() {
        let basis = torus1_analytic(64, 24);
        let err = assemble_products(&basis, 10, false, Some(100)).unwrap_err();
        assert!(matches!(err, Error::MemoryBudget { .. }));
    }

    #[test]
    fn spectral_fit_hits_torus_cutoff() {
        // n = 3 covers frequencies up to 2 (cos 2x); products reach
        // frequency 4, so the cutoff lands inside the |k| = 4 cluster
        // (sin 4x never appears in these products, so the minimal subspace
        // may stop one short of the cluster end)
        let basis = torus1_analytic(64, 24);
        let report = fit_spectral(&basis, 3, 1e-10, NormKind::L2, false).unwrap();
        let nu = match report.handle {
            FitHandle::Spectral { nu } => nu,
            _ => unreachable!(),
        };
        assert_eq!(basis.freq(nu).unwrap(), 4.0);
        assert!(report.rank <= 9);
        assert!(report.max_residual <= 1e-10);
    }

    #[test]
    fn vacuous_epsilon_gives_minimal_rank() {
        let basis = torus1_analytic(64, 24);
        let pm = assemble_products(&basis, 3, false, None).unwrap();
        let max_norm = (0..pm.pair_count())
            .map(|c| pm.columns().column(c).dot(&pm.columns().column(c)).sqrt())
            .fold(0.0f64, f64::max);
        let report =
            fit_spectral(&basis, 3, max_norm * 1.01, NormKind::L2, false).unwrap();
        assert_eq!(report.rank, 1, "vacuous target should keep one mode");
    }

    #[test]
    fn spectral_rank_monotone_in_epsilon() {
        let basis = torus1_analytic(64, 24);
        let loose = fit_spectral(&basis, 4, 1e-2, NormKind::L2, false).unwrap();
        let tight = fit_spectral(&basis, 4, 1e-6, NormKind::L2, false).unwrap();
        assert!(loose.rank <= tight.rank);
    }

    #[test]
    fn epsilon_unreachable_reports_best() {
        // interval products do not lie in any truncated sine span
        let g = Arc::new(
            build_grid(&DomainSpec::Interval {
                a: 0.0,
                b: PI,
                resolution: 64,
            })
            .unwrap(),
        );
        let basis = Arc::new(analytic_basis(&g, 12).unwrap());
        let err = fit_spectral(&basis, 3, 1e-12, NormKind::L2, false).unwrap_err();
        match err {
            Error::EpsilonUnreachable { best, .. } => assert!(best > 1e-12),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn optimal_rank_never_exceeds_spectral() {
        let basis = torus2_analytic(24, 40);
        for eps in [1e-2, 1e-4, 1e-8] {
            let spectral = fit_spectral(&basis, 4, eps, NormKind::L2, false).unwrap();
            let pm = assemble_products(&basis, 4, false, None).unwrap();
            let optimal = fit_optimal(&pm, eps).unwrap();
            assert!(
                optimal.rank <= spectral.rank,
                "eps {eps}: optimal {} vs spectral {}",
                optimal.rank,
                spectral.rank
            );
        }
    }

    #[test]
    fn optimal_rank_bounded_by_distinct_product_frequencies() {
        // torus n = 4: modes cos x, sin x, cos y, sin y; the products span
        // the lattice sums {0,2e1, 2e2, e1 +- e2} with cos/sin components:
        // a finite dictionary independent of epsilon
        let basis = torus2_analytic(24, 40);
        let pm = assemble_products(&basis, 4, false, None).unwrap();
        let tight = fit_optimal(&pm, 1e-9).unwrap();
        // dictionary: 1, cos2x, sin2x, cos2y, sin2y, cos(x±y), sin(x±y) = 9
        assert!(
            tight.rank <= 9,
            "rank {} exceeds the product dictionary",
            tight.rank
        );
        let loose = fit_optimal(&pm, 1e-3).unwrap();
        assert!(loose.rank <= tight.rank);
    }

    #[test]
    fn optimal_rank_saturates_at_numerical_rank() {
        let basis = torus1_analytic(64, 24);
        let pm = assemble_products(&basis, 3, false, None).unwrap();
        let eps_tiny = fit_optimal(&pm, 1e-13).unwrap();
        // the six products of {cos x, sin x, cos 2x} have disjoint or
        // independent trig content: full column rank
        assert_eq!(eps_tiny.rank, pm.pair_count());
    }

    #[test]
    fn rank_study_slopes_and_monotonicity() {
        let basis = torus2_analytic(24, 60);
        let study = rank_growth_study(
            &basis,
            &[2, 4, 6],
            &[1e-3, 1e-6],
            FitMode::Optimal,
            false,
        )
        .unwrap();
        assert_eq!(study.rows.len(), 6);
        // rank nonincreasing in epsilon at fixed n
        for &n in &[2usize, 4, 6] {
            let ranks: Vec<usize> = study
                .rows
                .iter()
                .filter(|r| r.n == n)
                .map(|r| r.rank)
                .collect();
            assert!(ranks[0] <= ranks[1], "rank must not drop as eps shrinks");
        }
        assert_eq!(study.slope_vs_n.len(), 2);
        // torus ranks are epsilon-independent lattice counts; slopes agree
        let s1 = study.slope_vs_n[0].1;
        let s2 = study.slope_vs_n[1].1;
        assert!((s1 - s2).abs() <= 1e-9, "slopes {s1} vs {s2}");
    }

    #[test]
    fn eri_exact_symmetry_and_positivity() {
        let basis = torus2_analytic(16, 12);
        let op = assemble_laplacian(basis.grid());
        let report = eri_exact(&basis, &op, 3, EriKernel::Resolvent1, false).unwrap();
        let table = report.exact.as_ref().unwrap();
        let p = report.pairs.len();
        assert_eq!(report.exact_solves, p as u64);
        for pq in 0..p {
            assert!(table[[pq, pq]] > 0.0, "(pp|pp) must be positive");
        }
        // independent transpose route on a few entries:
        // (ij|kl) via solve on p_kl vs solve on p_ij
        let products = plain_products(&basis, &report.pairs).unwrap();
        for (pq, rs) in [(0usize, 3usize), (1, 4), (2, 5)] {
            let u_pq = op
                .solve_shifted(products.column(pq).to_vec().as_slice(), 1.0)
                .unwrap();
            let direct = basis
                .grid()
                .inner(products.column(rs).to_vec().as_slice(), &u_pq)
                .unwrap();
            assert_relative_eq!(direct, table[[pq, rs]], max_relative = 1e-9);
        }
    }

    #[test]
    fn eri_green0_rejected_on_torus() {
        let basis = torus2_analytic(16, 12);
        let op = assemble_laplacian(basis.grid());
        assert!(eri_exact(&basis, &op, 2, EriKernel::Green0, false).is_err());
    }

    #[test]
    fn eri_exact_matches_spectral_resolvent_sum() {
        // independent oracle: (ij|kl) = sum_m c^ij_m c^kl_m / (1 + mu_m)
        // over the full numeric spectrum of the same pencil
        let g = Arc::new(
            build_grid(&DomainSpec::Torus {
                periods: vec![2.0 * PI],
                resolution: vec![48],
            })
            .unwrap(),
        );
        let op = assemble_laplacian(&g);
        let basis = Arc::new(compute_basis(&g, &op, g.n_unknowns(), EigMethod::Dense).unwrap());
        let report = eri_exact(&basis, &op, 3, EriKernel::Resolvent1, false).unwrap();
        let table = report.exact.as_ref().unwrap();
        let products = plain_products(&basis, &report.pairs).unwrap();
        let w = g.weights();
        let mut weighted = products.clone();
        for (mut row, &wi) in weighted.rows_mut().into_iter().zip(w) {
            row *= wi;
        }
        let coeffs = basis.modes().t().dot(&weighted); // K x P
        for pq in 0..report.pairs.len() {
            for rs in 0..report.pairs.len() {
                let mut oracle = 0.0;
                for m in 0..basis.k() {
                    let lam = basis.freqs()[m];
                    oracle += coeffs[[m, pq]] * coeffs[[m, rs]] / (1.0 + lam * lam);
                }
                assert_relative_eq!(oracle, table[[pq, rs]], max_relative = 1e-8, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fitted_at_exact_rank_reproduces_table() {
        let basis = torus2_analytic(16, 20);
        let op = assemble_laplacian(basis.grid());
        let exact = eri_exact(&basis, &op, 4, EriKernel::Resolvent1, false).unwrap();
        let pm = assemble_products(&basis, 4, false, None).unwrap();
        let fit = fit_optimal(&pm, 1e-12).unwrap();
        let fitted =
            eri_fitted(&basis, &op, &fit, 4, EriKernel::Resolvent1, Some(&exact)).unwrap();
        assert!(fitted.max_rel_error.unwrap() <= 1e-9, "rel err {:?}", fitted.max_rel_error);
        assert_eq!(fitted.fitted_solves, fit.rank as u64);
        assert_eq!(fitted.exact_solves, 10);
    }

    #[test]
    fn fitted_needs_covering_fit() {
        let basis = torus2_analytic(16, 20);
        let op = assemble_laplacian(basis.grid());
        let pm = assemble_products(&basis, 2, false, None).unwrap();
        let fit = fit_optimal(&pm, 1e-10).unwrap();
        assert!(eri_fitted(&basis, &op, &fit, 4, EriKernel::Resolvent1, None).is_err());
    }
}
