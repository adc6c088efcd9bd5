//! Pointwise eigenproducts and their spectral resolution.
//!
//! A [`SpectralField`] is a nodal field tied to a basis, with lazily cached
//! expansion coefficients `c_k = <f, e_k>`. Projections `E_nu` keep the
//! coefficients of indices up to `nu`, the remainder is `R_nu f = f - E_nu
//! f`, and the norms follow the spectral definitions: `L2` from the
//! quadrature inner product, `H^sigma` from the weights `(1 +
//! lambda_k^2)^sigma` (full spectra only for `sigma != 0`), and `H^{-1}` as
//! a lower/upper bracket whose tail term vanishes on full spectra.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use ndarray::{s, Array1};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::spectra::{resolution_limit, EigenBasis};

/// Norm selector for products and sweeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormKind {
    L2,
    Linf,
    /// Spectral Sobolev norm of the given order.
    Hs(f64),
    /// Bracketed `H^{-1}`; sweeps store the lower value and the upper bound.
    Hminus1,
}

impl NormKind {
    pub(crate) fn rank(&self) -> (u8, f64) {
        match self {
            NormKind::L2 => (0, 0.0),
            NormKind::Linf => (1, 0.0),
            NormKind::Hs(s) => (2, *s),
            NormKind::Hminus1 => (3, 0.0),
        }
    }
}

impl fmt::Display for NormKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NormKind::L2 => write!(f, "L2"),
            NormKind::Linf => write!(f, "Linf"),
            NormKind::Hs(sigma) => write!(f, "Hs({sigma})"),
            NormKind::Hminus1 => write!(f, "Hminus1"),
        }
    }
}

impl FromStr for NormKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "L2" => Ok(NormKind::L2),
            "Linf" => Ok(NormKind::Linf),
            "Hminus1" => Ok(NormKind::Hminus1),
            other => {
                if let Some(inner) = other.strip_prefix("Hs(").and_then(|r| r.strip_suffix(')')) {
                    let sigma: f64 = inner
                        .parse()
                        .map_err(|_| Error::MalformedReport(format!("bad norm kind `{other}`")))?;
                    Ok(NormKind::Hs(sigma))
                } else {
                    Err(Error::MalformedReport(format!("bad norm kind `{other}`")))
                }
            }
        }
    }
}

/// Nodal field over a basis with lazily computed expansion coefficients.
#[derive(Clone)]
pub struct SpectralField {
    basis: Arc<EigenBasis>,
    values: Array1<f64>,
    coeffs: OnceLock<Arc<Vec<f64>>>,
}

impl fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralField")
            .field("len", &self.values.len())
            .field("expanded", &self.coeffs.get().is_some())
            .finish()
    }
}

impl SpectralField {
    pub fn from_values(basis: Arc<EigenBasis>, values: Array1<f64>) -> Result<Self> {
        basis.grid().check_len(values.as_slice().unwrap())?;
        Ok(SpectralField {
            basis,
            values,
            coeffs: OnceLock::new(),
        })
    }

    /// The `index`-th basis mode as a field.
    pub fn mode(basis: &Arc<EigenBasis>, index: usize) -> Result<Self> {
        let values = basis.mode(index)?;
        Self::from_values(basis.clone(), values)
    }

    pub fn basis(&self) -> &Arc<EigenBasis> {
        &self.basis
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn values_slice(&self) -> &[f64] {
        self.values.as_slice().unwrap()
    }

    /// Expansion coefficients in stored-column order; computed once per
    /// field and cached (fields are immutable).
    pub fn coeffs(&self) -> &[f64] {
        self.coeffs.get_or_init(|| {
            let w = self.basis.grid().weights();
            let weighted: Array1<f64> =
                self.values.iter().zip(w).map(|(v, wi)| v * wi).collect();
            Arc::new(self.basis.modes().t().dot(&weighted).to_vec())
        })
    }

    /// Coefficient at a public mode index.
    pub fn coeff(&self, index: usize) -> Result<f64> {
        let col = self.basis.check_index(index)?;
        Ok(self.coeffs()[col])
    }

    fn same_basis(&self, other: &SpectralField) -> bool {
        Arc::ptr_eq(&self.basis, &other.basis)
    }

    /// Projection onto the span of indices `origin..=nu`.
    pub fn project_e(&self, nu: usize) -> Result<SpectralField> {
        let m = self.basis.subspace_size(nu)?;
        let coeffs = self.coeffs();
        let head = Array1::from(coeffs[..m].to_vec());
        let values = self.basis.modes().slice(s![.., ..m]).dot(&head);
        SpectralField::from_values(self.basis.clone(), values)
    }

    /// Remainder `f - E_nu f`.
    pub fn remainder_r(&self, nu: usize) -> Result<SpectralField> {
        let proj = self.project_e(nu)?;
        let values = &self.values - proj.values();
        SpectralField::from_values(self.basis.clone(), values)
    }

    /// Norm of the field; `Hminus1` is rejected here, use
    /// [`SpectralField::hminus1_bracket`].
    pub fn norm(&self, kind: NormKind) -> Result<f64> {
        let grid = self.basis.grid();
        match kind {
            NormKind::L2 => Ok(grid
                .inner(self.values_slice(), self.values_slice())?
                .sqrt()),
            NormKind::Linf => grid.sup_norm(self.values_slice()),
            NormKind::Hs(sigma) => {
                if sigma != 0.0 && !self.basis.full_spectrum() {
                    return Err(Error::TruncationUnsafe);
                }
                let freqs = self.basis.freqs();
                let total: f64 = self
                    .coeffs()
                    .iter()
                    .zip(freqs)
                    .map(|(c, l)| (1.0 + l * l).powf(sigma) * c * c)
                    .sum();
                Ok(total.sqrt())
            }
            NormKind::Hminus1 => Err(Error::MalformedReport(
                "Hminus1 is bracketed; call hminus1_bracket".into(),
            )),
        }
    }

    /// `H^{-1}` bracket of the tail beyond `nu`: the lower value sums the
    /// resolved tail, the upper bound charges the unresolved mass to the
    /// last resolved frequency. The two coincide on full-spectrum bases.
    pub fn hminus1_bracket(&self, nu: usize) -> Result<(f64, f64)> {
        let m = self.basis.subspace_size(nu)?;
        let coeffs = self.coeffs();
        let freqs = self.basis.freqs();
        let lower2: f64 = coeffs[m..]
            .iter()
            .zip(&freqs[m..])
            .map(|(c, l)| c * c / (1.0 + l * l))
            .sum();
        if self.basis.full_spectrum() {
            let v = lower2.sqrt();
            return Ok((v, v));
        }
        let total = self
            .basis
            .grid()
            .inner(self.values_slice(), self.values_slice())?;
        let captured: f64 = coeffs.iter().map(|c| c * c).sum();
        let lam_last = freqs.last().copied().unwrap_or(0.0);
        let upper2 = lower2 + (total - captured).max(0.0) / (1.0 + lam_last * lam_last);
        Ok((lower2.sqrt(), upper2.sqrt()))
    }
}

/// Nodewise product of two or more fields over one basis.
pub fn pointwise_product(fields: &[&SpectralField]) -> Result<SpectralField> {
    if fields.len() < 2 {
        return Err(Error::MalformedReport(
            "pointwise product needs at least two factors".into(),
        ));
    }
    let first = fields[0];
    for f in &fields[1..] {
        if !first.same_basis(f) {
            return Err(Error::MismatchedGrids);
        }
    }
    let mut values = first.values().clone();
    for f in &fields[1..] {
        values = &values * f.values();
    }
    SpectralField::from_values(first.basis.clone(), values)
}

/// Expansion coefficients of a field (stored-column order).
pub fn expand(field: &SpectralField) -> Vec<f64> {
    field.coeffs().to_vec()
}

/// One row of a remainder sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct RemainderReport {
    /// Sorted factor indices, length >= 2.
    pub tuple: Vec<usize>,
    pub nu: usize,
    /// Largest factor index.
    pub n: usize,
    pub kind: NormKind,
    pub value: f64,
    /// Upper bracket, present for `Hminus1` only.
    pub value_upper: Option<f64>,
    /// Identity of the basis the sweep ran on.
    pub basis_id: String,
}

/// Stable identity string for report provenance.
pub fn basis_identity(basis: &EigenBasis) -> String {
    let source = match basis.source() {
        crate::spectra::BasisSource::Numeric => "numeric",
        crate::spectra::BasisSource::Analytic => "analytic",
    };
    format!(
        "{source}:k{}:{}",
        basis.k(),
        &basis.grid().content_hash()[..16]
    )
}

/// Remainder values over the Cartesian product `tuples x nus x kinds`.
///
/// Each product is expanded once; reports come back sorted by
/// `(tuple, nu, kind)`. Tuple indices must stay within the basis resolution
/// limit unless `override_limit` is set.
pub fn remainder_sweep(
    basis: &Arc<EigenBasis>,
    tuples: &[Vec<usize>],
    nus: &[usize],
    kinds: &[NormKind],
    override_limit: bool,
) -> Result<Vec<RemainderReport>> {
    let limit = resolution_limit(basis);
    let mut prepared: Vec<Vec<usize>> = Vec::with_capacity(tuples.len());
    for t in tuples {
        if t.len() < 2 {
            return Err(Error::MalformedReport(format!(
                "tuple {t:?} has fewer than two factors"
            )));
        }
        let mut sorted = t.clone();
        sorted.sort_unstable();
        for &idx in &sorted {
            basis.check_index(idx)?;
            if !override_limit && idx > limit {
                return Err(Error::BeyondResolutionLimit { index: idx, limit });
            }
        }
        prepared.push(sorted);
    }
    for &nu in nus {
        basis.check_index(nu)?;
    }

    let id = basis_identity(basis);
    let mut sorted_nus: Vec<usize> = nus.to_vec();
    sorted_nus.sort_unstable();
    sorted_nus.dedup();

    let mut reports: Vec<RemainderReport> = prepared
        .par_iter()
        .map(|tuple| -> Result<Vec<RemainderReport>> {
            let fields: Vec<SpectralField> = tuple
                .iter()
                .map(|&idx| SpectralField::mode(basis, idx))
                .collect::<Result<_>>()?;
            let refs: Vec<&SpectralField> = fields.iter().collect();
            let product = pointwise_product(&refs)?;
            let coeffs = product.coeffs().to_vec();
            let n = *tuple.last().unwrap();

            // incremental reconstruction: extend the partial projection as
            // nu moves up, so a whole sweep costs one full reconstruction
            let mut rows = Vec::with_capacity(sorted_nus.len() * kinds.len());
            let mut partial = Array1::<f64>::zeros(product.values().len());
            let mut covered = 0usize;
            for &nu in &sorted_nus {
                let m = basis.subspace_size(nu)?;
                if m > covered {
                    let block = basis.modes().slice(s![.., covered..m]);
                    let head = Array1::from(coeffs[covered..m].to_vec());
                    partial = partial + block.dot(&head);
                    covered = m;
                }
                let rem_values = product.values() - &partial;
                let rem = SpectralField::from_values(basis.clone(), rem_values)?;
                for kind in kinds {
                    let (value, upper) = match kind {
                        NormKind::Hminus1 => {
                            let (lo, hi) = product.hminus1_bracket(nu)?;
                            (lo, Some(hi))
                        }
                        other => (rem.norm(*other)?, None),
                    };
                    rows.push(RemainderReport {
                        tuple: tuple.clone(),
                        nu,
                        n,
                        kind: *kind,
                        value,
                        value_upper: upper,
                        basis_id: id.clone(),
                    });
                }
            }
            Ok(rows)
        })
        .collect::<Result<Vec<Vec<RemainderReport>>>>()?
        .into_iter()
        .flatten()
        .collect();

    reports.sort_by(|a, b| {
        a.tuple
            .cmp(&b.tuple)
            .then(a.nu.cmp(&b.nu))
            .then(a.kind.rank().0.cmp(&b.kind.rank().0))
            .then(a.kind.rank().1.total_cmp(&b.kind.rank().1))
    });
    Ok(reports)
}
