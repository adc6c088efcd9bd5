//! Eigenbasis construction and validation.
//!
//! Bases come from two routes: a dense symmetric eigendecomposition of the
//! mass-symmetrized stiffness (mandatory fallback up to 4096 unknowns, and
//! the only way to get full spectra for H^sigma work), and a blocked
//! LOBPCG-style iteration for the lowest modes of larger problems. Oracle
//! domains (interval, rectangle, torus) also have sampled continuum bases.
//!
//! Conventions: frequencies are `lambda_k = sqrt(mu_k)` for generalized
//! eigenvalues `mu_k` of `L e = mu M e`; periodic bases expose index 0 as
//! the constant mode with `lambda_0 = 0`, Dirichlet bases start at index 1.
//! Within a degenerate cluster (relative gap < 1e-8) modes are ordered
//! deterministically: analytic bases by lexicographic dominant lattice mode,
//! numeric bases by descending absolute nodal values after Gram-Schmidt in
//! solver output order. Every mode's largest-magnitude nodal value is made
//! positive.

use std::sync::Arc;

use ndarray::{s, Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::domains::{BoundaryKind, DomainSpec, Grid};
use crate::error::{Error, Result};
use crate::linalg;
use crate::operators::SparseOperator;

/// Dense-path size cap.
pub const DENSE_LIMIT: usize = 4096;
/// Iterative residual target.
pub const ITER_TOL: f64 = 1e-8;
/// Relative eigenvalue gap below which modes count as one cluster.
pub const CLUSTER_REL_GAP: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSource {
    Numeric,
    Analytic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EigMethod {
    Dense,
    Iterative,
}

/// Orthonormal eigenbasis over a grid.
#[derive(Debug, Clone)]
pub struct EigenBasis {
    grid: Arc<Grid>,
    /// Frequencies per stored column, nondecreasing.
    freqs: Vec<f64>,
    /// `n_unknowns x K`, columns orthonormal in the mass inner product.
    modes: Array2<f64>,
    residuals: Vec<f64>,
    source: BasisSource,
    full_spectrum: bool,
    index_origin: usize,
    tie_break: String,
}

impl EigenBasis {
    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn k(&self) -> usize {
        self.freqs.len()
    }

    pub fn n_unknowns(&self) -> usize {
        self.modes.nrows()
    }

    pub fn source(&self) -> BasisSource {
        self.source
    }

    pub fn full_spectrum(&self) -> bool {
        self.full_spectrum
    }

    /// First exposed index: 0 for periodic bases, 1 for Dirichlet.
    pub fn index_origin(&self) -> usize {
        self.index_origin
    }

    pub fn min_index(&self) -> usize {
        self.index_origin
    }

    pub fn max_index(&self) -> usize {
        self.index_origin + self.k() - 1
    }

    pub fn tie_break(&self) -> &str {
        &self.tie_break
    }

    pub fn check_index(&self, index: usize) -> Result<usize> {
        if index < self.min_index() || index > self.max_index() {
            return Err(Error::NuOutOfRange {
                nu: index,
                min: self.min_index(),
                max: self.max_index(),
            });
        }
        Ok(index - self.index_origin)
    }

    pub fn freq(&self, index: usize) -> Result<f64> {
        Ok(self.freqs[self.check_index(index)?])
    }

    pub fn mode(&self, index: usize) -> Result<Array1<f64>> {
        let col = self.check_index(index)?;
        Ok(self.modes.column(col).to_owned())
    }

    /// Column-ordered frequencies (position `c` holds index `c + origin`).
    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn modes(&self) -> &Array2<f64> {
        &self.modes
    }

    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Dimension of the span of indices `origin..=nu`.
    pub fn subspace_size(&self, nu: usize) -> Result<usize> {
        Ok(self.check_index(nu)? + 1)
    }

    /// Max absolute Gram defect of the modes under the mass weights.
    pub fn gram_defect(&self) -> f64 {
        let w = self.grid.weights();
        let k = self.k();
        let mut weighted = self.modes.clone();
        for (mut row, &wi) in weighted.rows_mut().into_iter().zip(w) {
            row *= wi;
        }
        let gram = weighted.t().dot(&self.modes);
        let mut defect = 0.0f64;
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                defect = defect.max((gram[[i, j]] - target).abs());
            }
        }
        defect
    }

    pub(crate) fn from_parts(
        grid: Arc<Grid>,
        freqs: Vec<f64>,
        modes: Array2<f64>,
        residuals: Vec<f64>,
        source: BasisSource,
        full_spectrum: bool,
        index_origin: usize,
        tie_break: String,
    ) -> Self {
        EigenBasis {
            grid,
            freqs,
            modes,
            residuals,
            source,
            full_spectrum,
            index_origin,
            tie_break,
        }
    }
}

fn index_origin_for(bc: BoundaryKind) -> usize {
    match bc {
        BoundaryKind::Periodic => 0,
        BoundaryKind::Dirichlet => 1,
    }
}

/// Lowest-K eigenbasis of the assembled operator.
pub fn compute_basis(
    grid: &Arc<Grid>,
    op: &SparseOperator,
    k: usize,
    method: EigMethod,
) -> Result<EigenBasis> {
    let n = op.n_unknowns();
    assert_eq!(n, grid.n_unknowns(), "operator and grid disagree");
    if k == 0 || k > n {
        return Err(Error::KTooLarge { k, n });
    }
    let (mut eigs, mut vecs) = match method {
        EigMethod::Dense => {
            if n > DENSE_LIMIT {
                return Err(Error::DenseTooLarge { n });
            }
            dense_pairs(op, k)?
        }
        EigMethod::Iterative => lobpcg_pairs(op, k)?,
    };
    finalize_numeric(grid, op, &mut eigs, &mut vecs)?;
    let residuals = residuals_of(op, &eigs, &vecs);
    if let Some((mode, &r)) = residuals
        .iter()
        .enumerate()
        .find(|(_, &r)| !(r <= ITER_TOL))
    {
        return Err(Error::EigNoConvergence { mode, residual: r });
    }
    let freqs = eigs.iter().map(|&m| m.max(0.0).sqrt()).collect();
    Ok(EigenBasis::from_parts(
        grid.clone(),
        freqs,
        vecs,
        residuals,
        BasisSource::Numeric,
        k == n,
        index_origin_for(grid.bc()),
        "numeric:gram-schmidt,abs-nodal-desc".into(),
    ))
}

/// Dense route: symmetrize with the diagonal mass and take the lowest `k`
/// pairs of `D^{-1/2} L D^{-1/2}`.
fn dense_pairs(op: &SparseOperator, k: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = op.n_unknowns();
    let inv_sqrt_m: Vec<f64> = op.mass().iter().map(|&m| 1.0 / m.sqrt()).collect();
    let mut b = faer::Mat::<f64>::zeros(n, n);
    let mut unit = vec![0.0; n];
    let mut col = vec![0.0; n];
    for j in 0..n {
        unit[j] = 1.0;
        op.apply_into(&unit, &mut col);
        unit[j] = 0.0;
        for i in 0..n {
            if col[i] != 0.0 {
                b[(i, j)] = col[i] * inv_sqrt_m[i] * inv_sqrt_m[j];
            }
        }
    }
    let (vals, vecs) = linalg::sym_eig(&b)?;
    let mut modes = Array2::zeros((n, k));
    for c in 0..k {
        for i in 0..n {
            modes[[i, c]] = vecs[(i, c)] * inv_sqrt_m[i];
        }
    }
    Ok((vals[..k].to_vec(), modes))
}

/// Shift-free blocked LOBPCG on the symmetrized operator with full
/// reorthogonalization of the trial subspace each sweep.
fn lobpcg_pairs(op: &SparseOperator, k: usize) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = op.n_unknowns();
    let block = (k + 4).min(n);
    let inv_sqrt_m: Vec<f64> = op.mass().iter().map(|&m| 1.0 / m.sqrt()).collect();
    let apply_b = |x: &Array2<f64>| -> Array2<f64> {
        let mut out = Array2::zeros((n, x.ncols()));
        let mut fin = vec![0.0; n];
        let mut fout = vec![0.0; n];
        for c in 0..x.ncols() {
            for i in 0..n {
                fin[i] = x[[i, c]] * inv_sqrt_m[i];
            }
            op.apply_into(&fin, &mut fout);
            for i in 0..n {
                out[[i, c]] = fout[i] * inv_sqrt_m[i];
            }
        }
        out
    };
    let inv_diag: Vec<f64> = (0..n)
        .map(|i| {
            let d = op.entry(i, i) * inv_sqrt_m[i] * inv_sqrt_m[i];
            if d > 0.0 {
                1.0 / d
            } else {
                1.0
            }
        })
        .collect();

    // deterministic pseudo-random start block
    let mut x = Array2::from_shape_fn((n, block), |(i, j)| {
        let t = (i as f64 + 1.0) * 0.754_877_666 + (j as f64 + 1.0) * 0.569_840_29;
        (t.sin() * 43758.5453).fract() - 0.5
    });
    orthonormalize(&mut x);
    let mut p: Option<Array2<f64>> = None;
    let max_sweeps = 600;

    for _sweep in 0..max_sweeps {
        let bx = apply_b(&x);
        let theta: Vec<f64> = (0..block)
            .map(|c| x.column(c).dot(&bx.column(c)))
            .collect();
        // residuals r = B x - theta x
        let mut r = bx.clone();
        for c in 0..block {
            let xc = x.column(c).to_owned();
            r.column_mut(c).scaled_add(-theta[c], &xc);
        }
        let res_ok = (0..k).all(|c| {
            let rn = r.column(c).dot(&r.column(c)).sqrt();
            rn <= ITER_TOL * theta[c].abs().max(1.0)
        });
        if res_ok {
            let mut eigs = theta[..k].to_vec();
            let mut modes = Array2::zeros((n, k));
            for c in 0..k {
                for i in 0..n {
                    modes[[i, c]] = x[[i, c]] * inv_sqrt_m[i];
                }
            }
            // sort ascending (Ritz order can drift inside clusters)
            let mut order: Vec<usize> = (0..k).collect();
            order.sort_by(|&a, &b| eigs[a].total_cmp(&eigs[b]));
            let modes = reorder_columns(&modes, &order);
            eigs = order.iter().map(|&i| eigs[i]).collect();
            return Ok((eigs, modes));
        }
        // preconditioned residual block
        let mut w = r;
        for c in 0..block {
            for i in 0..n {
                w[[i, c]] *= inv_diag[i];
            }
        }
        // trial space [X W P], reorthonormalized from scratch
        let mut cols: Vec<Array1<f64>> = Vec::new();
        for c in 0..block {
            cols.push(x.column(c).to_owned());
        }
        for c in 0..block {
            cols.push(w.column(c).to_owned());
        }
        if let Some(pm) = &p {
            for c in 0..pm.ncols() {
                cols.push(pm.column(c).to_owned());
            }
        }
        let s = orthonormal_from(cols, n);
        let bs = apply_b(&s);
        let g = s.t().dot(&bs);
        let gf = linalg::faer_from_ndarray(g.view());
        // symmetrize before the small eigensolve
        let m = g.ncols();
        let mut gs = faer::Mat::<f64>::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                gs[(i, j)] = 0.5 * (gf[(i, j)] + gf[(j, i)]);
            }
        }
        let (_vals, q) = linalg::sym_eig(&gs)?;
        let take = block.min(m);
        let qn = linalg::ndarray_from_faer(q.as_ref());
        let x_new = s.dot(&qn.slice(s![.., ..take]));
        p = Some(x.clone());
        x = x_new;
        orthonormalize(&mut x);
    }
    Err(Error::EigNoConvergence {
        mode: 0,
        residual: f64::NAN,
    })
}

/// Modified Gram-Schmidt with one reorthogonalization pass.
fn orthonormalize(x: &mut Array2<f64>) {
    let n = x.nrows();
    let m = x.ncols();
    for c in 0..m {
        for _pass in 0..2 {
            for prev in 0..c {
                let proj = x.column(prev).dot(&x.column(c));
                let pcol = x.column(prev).to_owned();
                x.column_mut(c).scaled_add(-proj, &pcol);
            }
        }
        let norm = x.column(c).dot(&x.column(c)).sqrt();
        if norm > 1e-12 {
            x.column_mut(c).mapv_inplace(|v| v / norm);
        } else {
            // degenerate direction: replace with a deterministic fresh vector
            for i in 0..n {
                let t = (i as f64 + 1.3) * (c as f64 + 2.7);
                x[[i, c]] = (t.sin() * 12543.77).fract() - 0.5;
            }
            for prev in 0..c {
                let proj = x.column(prev).dot(&x.column(c));
                let pcol = x.column(prev).to_owned();
                x.column_mut(c).scaled_add(-proj, &pcol);
            }
            let norm = x.column(c).dot(&x.column(c)).sqrt();
            x.column_mut(c).mapv_inplace(|v| v / norm);
        }
    }
}

fn orthonormal_from(cols: Vec<Array1<f64>>, n: usize) -> Array2<f64> {
    let mut kept: Vec<Array1<f64>> = Vec::with_capacity(cols.len());
    for mut c in cols {
        for _pass in 0..2 {
            for q in &kept {
                let proj = q.dot(&c);
                c.scaled_add(-proj, q);
            }
        }
        let norm = c.dot(&c).sqrt();
        if norm > 1e-10 {
            kept.push(c / norm);
        }
    }
    let mut out = Array2::zeros((n, kept.len()));
    for (j, c) in kept.iter().enumerate() {
        out.column_mut(j).assign(c);
    }
    out
}

fn reorder_columns(a: &Array2<f64>, order: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((a.nrows(), order.len()));
    for (dst, &src) in order.iter().enumerate() {
        out.column_mut(dst).assign(&a.column(src));
    }
    out
}

/// Shared numeric post-processing: zero-mode snapping, cluster
/// orthonormalization, deterministic intra-cluster order, sign fix.
fn finalize_numeric(
    grid: &Arc<Grid>,
    op: &SparseOperator,
    eigs: &mut Vec<f64>,
    vecs: &mut Array2<f64>,
) -> Result<()> {
    let k = eigs.len();
    let scale = eigs.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for e in eigs.iter_mut() {
        if e.abs() <= 1e-10 * scale {
            *e = 0.0;
        }
    }
    if grid.bc() == BoundaryKind::Dirichlet {
        if let Some(&e0) = eigs.first() {
            if e0 <= 0.0 {
                return Err(Error::EigNoConvergence {
                    mode: 0,
                    residual: e0,
                });
            }
        }
    }
    // cluster boundaries on relative gaps
    let w = grid.weights();
    let mut start = 0;
    while start < k {
        let mut end = start + 1;
        while end < k {
            let a = eigs[end - 1];
            let b = eigs[end];
            let rel = (b - a).abs() / b.abs().max(a.abs()).max(1e-300);
            if rel < CLUSTER_REL_GAP || (a == 0.0 && b == 0.0) {
                end += 1;
            } else {
                break;
            }
        }
        if end - start > 1 {
            // mass-weighted Gram-Schmidt in solver output order
            for c in start..end {
                for prev in start..c {
                    let num: f64 = (0..vecs.nrows())
                        .map(|i| w[i] * vecs[[i, prev]] * vecs[[i, c]])
                        .sum();
                    let pcol = vecs.column(prev).to_owned();
                    vecs.column_mut(c).scaled_add(-num, &pcol);
                }
                let nrm: f64 = (0..vecs.nrows())
                    .map(|i| w[i] * vecs[[i, c]] * vecs[[i, c]])
                    .sum::<f64>()
                    .sqrt();
                vecs.column_mut(c).mapv_inplace(|v| v / nrm);
            }
            // deterministic order: descending absolute nodal values
            let mut order: Vec<usize> = (start..end).collect();
            order.sort_by(|&a, &b| {
                for i in 0..vecs.nrows() {
                    let va = vecs[[i, a]].abs();
                    let vb = vecs[[i, b]].abs();
                    match vb.total_cmp(&va) {
                        std::cmp::Ordering::Equal => continue,
                        other => return other,
                    }
                }
                std::cmp::Ordering::Equal
            });
            let cluster = reorder_columns(&vecs.slice(s![.., start..end]).to_owned(),
                &order.iter().map(|&i| i - start).collect::<Vec<_>>());
            vecs.slice_mut(s![.., start..end]).assign(&cluster);
        } else {
            // normalize the singleton in the mass inner product
            let c = start;
            let nrm: f64 = (0..vecs.nrows())
                .map(|i| w[i] * vecs[[i, c]] * vecs[[i, c]])
                .sum::<f64>()
                .sqrt();
            vecs.column_mut(c).mapv_inplace(|v| v / nrm);
        }
        start = end;
    }
    fix_signs(vecs);
    let _ = op;
    Ok(())
}

/// Flip columns so the first largest-magnitude nodal value is positive.
fn fix_signs(vecs: &mut Array2<f64>) {
    for mut col in vecs.columns_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, &v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

fn residuals_of(op: &SparseOperator, eigs: &[f64], vecs: &Array2<f64>) -> Vec<f64> {
    let n = op.n_unknowns();
    let mut out = Vec::with_capacity(eigs.len());
    let mut le = vec![0.0; n];
    for (c, &mu) in eigs.iter().enumerate() {
        let e: Vec<f64> = vecs.column(c).to_vec();
        op.apply_into(&e, &mut le);
        let mut num = 0.0;
        for i in 0..n {
            let r = le[i] - mu * op.mass()[i] * e[i];
            num += r * r / op.mass()[i];
        }
        out.push(num.sqrt() / mu.abs().max(1.0));
    }
    out
}

// ---------------------------------------------------------------------------
// analytic bases
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
struct AnalyticMode {
    freq2: f64,
    /// lattice key for deterministic intra-cluster order
    key: Vec<i64>,
    /// 0 = cosine, 1 = sine (tori only)
    phase: u8,
    values: Vec<f64>,
}

/// Exact continuum eigenfunctions sampled at the nodes and
/// mass-orthonormalized. Supported kinds: interval, rectangle, torus.
pub fn analytic_basis(grid: &Arc<Grid>, k: usize) -> Result<EigenBasis> {
    let mut pool: Vec<AnalyticMode> = match grid.spec().clone() {
        DomainSpec::Interval { a, b, resolution } => {
            let len = b - a;
            let mut pool = Vec::new();
            for j in 1..resolution {
                let lam = j as f64 * std::f64::consts::PI / len;
                let norm = (2.0 / len).sqrt();
                let values = grid.sample(|x| norm * (lam * (x[0] - a)).sin());
                pool.push(AnalyticMode {
                    freq2: lam * lam,
                    key: vec![j as i64],
                    phase: 0,
                    values,
                });
            }
            pool
        }
        DomainSpec::Rectangle { lx, ly, resolution } => {
            let mut pool = Vec::new();
            for jx in 1..resolution[0] {
                for jy in 1..resolution[1] {
                    let lx_f = jx as f64 * std::f64::consts::PI / lx;
                    let ly_f = jy as f64 * std::f64::consts::PI / ly;
                    let norm = 2.0 / (lx * ly).sqrt();
                    let values =
                        grid.sample(|x| norm * (lx_f * x[0]).sin() * (ly_f * x[1]).sin());
                    pool.push(AnalyticMode {
                        freq2: lx_f * lx_f + ly_f * ly_f,
                        key: vec![jx as i64, jy as i64],
                        phase: 0,
                        values,
                    });
                }
            }
            pool
        }
        DomainSpec::Torus {
            periods,
            resolution,
        } => torus_modes(grid, &periods, &resolution),
        other => return Err(Error::UnsupportedKind(other.kind_name().into())),
    };

    if k > pool.len().min(grid.n_unknowns()) {
        return Err(Error::KTooLarge {
            k,
            n: pool.len().min(grid.n_unknowns()),
        });
    }
    pool.sort_by(|a, b| {
        a.freq2
            .total_cmp(&b.freq2)
            .then_with(|| a.key.cmp(&b.key))
            .then_with(|| a.phase.cmp(&b.phase))
    });
    pool.truncate(k);

    let n = grid.n_unknowns();
    let mut modes = Array2::zeros((n, k));
    let mut freqs = Vec::with_capacity(k);
    let w = grid.weights();
    for (c, m) in pool.iter().enumerate() {
        let nrm: f64 = m
            .values
            .iter()
            .zip(w)
            .map(|(v, wi)| wi * v * v)
            .sum::<f64>()
            .sqrt();
        for i in 0..n {
            modes[[i, c]] = m.values[i] / nrm;
        }
        freqs.push(m.freq2.max(0.0).sqrt());
    }
    fix_signs(&mut modes);
    Ok(EigenBasis::from_parts(
        grid.clone(),
        freqs,
        modes,
        vec![0.0; k],
        BasisSource::Analytic,
        k == n,
        index_origin_for(grid.bc()),
        "analytic:lattice-lex,cos-before-sin".into(),
    ))
}

fn torus_modes(grid: &Arc<Grid>, periods: &[f64], resolution: &[usize]) -> Vec<AnalyticMode> {
    let d = periods.len();
    // alias guard: per-axis |k| up to floor((res-1)/2) keeps sampled modes
    // distinct and exactly orthogonal on the lattice
    let caps: Vec<i64> = resolution.iter().map(|&r| ((r - 1) / 2) as i64).collect();
    let mut pool = Vec::new();
    let mut kvec = vec![0i64; d];
    enumerate_lattice(&caps, &mut kvec, 0, &mut |kv: &[i64]| {
        // canonical representative of {k, -k}: first nonzero component > 0
        match kv.iter().find(|&&c| c != 0) {
            None => {
                let values = vec![1.0; grid.n_unknowns()];
                pool.push(AnalyticMode {
                    freq2: 0.0,
                    key: kv.to_vec(),
                    phase: 0,
                    values,
                });
            }
            Some(&first) if first > 0 => {
                let omega: Vec<f64> = kv
                    .iter()
                    .zip(periods)
                    .map(|(&ki, &p)| 2.0 * std::f64::consts::PI * ki as f64 / p)
                    .collect();
                let freq2: f64 = omega.iter().map(|o| o * o).sum();
                let phase_arg = |x: &[f64]| -> f64 {
                    omega.iter().zip(x).map(|(o, xi)| o * xi).sum()
                };
                let cos_vals = grid.sample(|x| phase_arg(x).cos());
                let sin_vals = grid.sample(|x| phase_arg(x).sin());
                pool.push(AnalyticMode {
                    freq2,
                    key: kv.to_vec(),
                    phase: 0,
                    values: cos_vals,
                });
                pool.push(AnalyticMode {
                    freq2,
                    key: kv.to_vec(),
                    phase: 1,
                    values: sin_vals,
                });
            }
            _ => {}
        }
    });
    pool
}

fn enumerate_lattice(caps: &[i64], kvec: &mut Vec<i64>, axis: usize, f: &mut impl FnMut(&[i64])) {
    if axis == caps.len() {
        f(kvec);
        return;
    }
    for v in -caps[axis]..=caps[axis] {
        kvec[axis] = v;
        enumerate_lattice(caps, kvec, axis + 1, f);
    }
}

// ---------------------------------------------------------------------------
// diagnostics
// ---------------------------------------------------------------------------

/// Largest index whose wavelength the grid resolves (`lambda * max(h) <=
/// 0.5`); analytic bases are exempt and report their last index. Returns
/// `index_origin - 1` when no numeric mode qualifies.
pub fn resolution_limit(basis: &EigenBasis) -> usize {
    if basis.source() == BasisSource::Analytic {
        return basis.max_index();
    }
    let h = basis.grid().max_spacing();
    let mut limit = basis.index_origin().wrapping_sub(1);
    for (c, &lam) in basis.freqs().iter().enumerate() {
        if lam * h <= 0.5 {
            limit = c + basis.index_origin();
        } else {
            break;
        }
    }
    limit
}

/// Least-squares fit of `log n` against `log lambda_n` over the upper half
/// of the resolved range; returns `(scale, estimated dimension)`.
pub fn weyl_fit(basis: &EigenBasis) -> Result<(f64, f64)> {
    if basis.k() < 30 {
        return Err(Error::TooFewModes {
            needed: 30,
            got: basis.k(),
        });
    }
    let hi = resolution_limit(basis);
    let lo = basis.min_index();
    if hi <= lo + 3 {
        return Err(Error::TooFewModes {
            needed: 30,
            got: hi.saturating_sub(lo),
        });
    }
    let mid = lo + (hi - lo) / 2;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for index in mid..=hi {
        let lam = basis.freq(index)?;
        if lam <= 0.0 {
            continue;
        }
        let count = (index - basis.index_origin() + 1) as f64;
        xs.push(lam.ln());
        ys.push(count.ln());
    }
    if xs.len() < 2 {
        return Err(Error::TooFewModes {
            needed: 30,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    Ok((intercept.exp(), slope))
}

/// Largest principal angle (radians) between the spans of two
/// mass-orthonormal column blocks over the same grid.
pub fn subspace_angle(grid: &Grid, a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.nrows() != grid.n_unknowns() || b.nrows() != grid.n_unknowns() {
        return Err(Error::MismatchedGrids);
    }
    let w = grid.weights();
    let mut aw = a.clone();
    for (mut row, &wi) in aw.rows_mut().into_iter().zip(w) {
        row *= wi;
    }
    let overlap = aw.t().dot(b);
    let (_u, s, _v) = linalg::thin_svd(overlap.view())?;
    let smin = s
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
        .clamp(-1.0, 1.0);
    Ok(smin.acos())
}
