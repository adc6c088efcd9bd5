//! Exact exponent tables and diagnostic ratio checks.
//!
//! Every exponent is carried as an exact rational end to end and converted
//! to floating point only inside the diagnostics, so the table entries can
//! be unit-tested with equality rather than tolerances.
//!
//! The shape checks divide measured remainders by the predicted envelope
//! `n^sigma (n/nu)^kappa` (indices) or `lambda_n^{2 sigma(4,d)} / lambda_nu`
//! (frequencies) and report the implied constant together with a halves
//! verdict: "bounded" when the constant's max over the upper half of the
//! nu-range does not exceed the max over the lower half.

use num_rational::Ratio;
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::products::{NormKind, RemainderReport};
use crate::spectra::EigenBasis;

pub type Rational = Ratio<i64>;

pub fn rational(num: i64, den: i64) -> Rational {
    Ratio::new(num, den)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setting {
    Boundaryless,
    Dirichlet,
}

/// Universal L^p growth exponent
/// `sigma(p, d) = max{ (d-1)/2 (1/2 - 1/p), d (1/2 - 1/p) - 1/2 }`.
///
/// `d = 1` is admitted for the oracle domains even though the growth bounds
/// are stated for `d >= 2`.
pub fn sigma_pd(p: Rational, d: u32) -> Result<Rational> {
    if p <= rational(2, 1) {
        return Err(Error::BadExponentArg(format!("need p > 2, got {p}")));
    }
    if d < 1 {
        return Err(Error::BadExponentArg("need d >= 1".into()));
    }
    let d = Rational::from_integer(d as i64);
    let half = rational(1, 2);
    let gap = half - p.recip();
    let branch_low = (d - Rational::from_integer(1)) / Rational::from_integer(2) * gap;
    let branch_high = d * gap - half;
    Ok(branch_low.max(branch_high))
}

/// Dirichlet-domain L^4 exponents: 1/6, 1/3, 1/2 for d = 2, 3, 4.
pub fn sigma_pd_dirichlet(d: u32) -> Result<Rational> {
    match d {
        2 => Ok(rational(1, 6)),
        3 => Ok(rational(1, 3)),
        4 => Ok(rational(1, 2)),
        other => Err(Error::BadExponentArg(format!(
            "dirichlet sigma(4, d) tabulated for d in 2..=4, got {other}"
        ))),
    }
}

/// The L^4 exponent in the requested setting.
pub fn sigma_4(d: u32, setting: Setting) -> Result<Rational> {
    match setting {
        Setting::Boundaryless => sigma_pd(rational(4, 1), d),
        Setting::Dirichlet => sigma_pd_dirichlet(d),
    }
}

/// Sup-norm pair exponent `sigma_inf = (2/d) sigma(4,d) + (d+1)/(2d)`.
pub fn sigma_inf(d: u32, setting: Setting) -> Result<Rational> {
    let s4 = sigma_4(d, setting)?;
    let d_r = Rational::from_integer(d as i64);
    Ok(rational(2, 1) / d_r * s4 + (d_r + 1) / (rational(2, 1) * d_r))
}

/// Length-`ell` product exponent
/// `sigma_{d,ell} = (ell/d) sigma(2 ell, d) + (d+1)/(2d)`.
///
/// In the Dirichlet setting only `ell = 2` has a tabulated ingredient.
pub fn sigma_dl(d: u32, ell: u32, setting: Setting) -> Result<Rational> {
    if ell < 2 {
        return Err(Error::BadExponentArg(format!("need ell >= 2, got {ell}")));
    }
    let s = match setting {
        Setting::Boundaryless => sigma_pd(Rational::from_integer(2 * ell as i64), d)?,
        Setting::Dirichlet => {
            if ell != 2 {
                return Err(Error::BadExponentArg(
                    "dirichlet sigma_{d,ell} only available for ell = 2".into(),
                ));
            }
            sigma_pd_dirichlet(d)?
        }
    };
    let d_r = Rational::from_integer(d as i64);
    Ok(Rational::from_integer(ell as i64) / d_r * s + (d_r + 1) / (rational(2, 1) * d_r))
}

/// Sublinear cutoff growth exponent for the H^{-1} results:
/// boundaryless 1/4, 1/2, 1 and Dirichlet 1/3, 2/3, 1 for d = 2, 3, 4.
pub fn mu_d(d: u32, setting: Setting) -> Result<Rational> {
    match (d, setting) {
        (2, Setting::Boundaryless) => Ok(rational(1, 4)),
        (3, Setting::Boundaryless) => Ok(rational(1, 2)),
        (4, Setting::Boundaryless) => Ok(rational(1, 1)),
        (2, Setting::Dirichlet) => Ok(rational(1, 3)),
        (3, Setting::Dirichlet) => Ok(rational(2, 3)),
        (4, Setting::Dirichlet) => Ok(rational(1, 1)),
        (other, _) => Err(Error::BadExponentArg(format!(
            "mu(d) tabulated for d in 2..=4, got {other}"
        ))),
    }
}

/// Full exponent table for one dimension and setting.
#[derive(Clone, Debug)]
pub struct ExponentTable {
    pub d: u32,
    pub setting: Setting,
    /// `(p, sigma(p, d))` for the requested p values.
    pub sigma_p: Vec<(Rational, Rational)>,
    pub sigma_inf: Rational,
    /// `(ell, sigma_{d, ell})` for the requested lengths.
    pub sigma_ell: Vec<(u32, Rational)>,
    /// Absent outside d = 2..=4.
    pub mu: Option<Rational>,
}

pub fn exponent_table(
    d: u32,
    setting: Setting,
    ps: &[Rational],
    ells: &[u32],
) -> Result<ExponentTable> {
    let mut sigma_p = Vec::with_capacity(ps.len());
    for &p in ps {
        let val = match setting {
            Setting::Dirichlet if p == rational(4, 1) => sigma_pd_dirichlet(d)?,
            Setting::Dirichlet => {
                return Err(Error::BadExponentArg(format!(
                    "dirichlet sigma(p, d) tabulated for p = 4 only, got p = {p}"
                )))
            }
            Setting::Boundaryless => sigma_pd(p, d)?,
        };
        sigma_p.push((p, val));
    }
    let mut sigma_ell = Vec::with_capacity(ells.len());
    for &ell in ells {
        sigma_ell.push((ell, sigma_dl(d, ell, setting)?));
    }
    Ok(ExponentTable {
        d,
        setting,
        sigma_p,
        sigma_inf: sigma_inf(d, setting)?,
        sigma_ell,
        mu: mu_d(d, setting).ok(),
    })
}

// ---------------------------------------------------------------------------
// theorem shape diagnostics
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    #[serde(rename = "T1_L2")]
    T1L2,
    #[serde(rename = "T1_Linf")]
    T1Linf,
    #[serde(rename = "T2")]
    T2,
    #[serde(rename = "T3_Hminus1")]
    T3Hminus1,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Bounded,
    Growing,
}

#[derive(Clone, Debug)]
pub struct ShapeRow {
    pub tuple: Vec<usize>,
    pub nu: usize,
    pub n: usize,
    pub value: f64,
    /// Implied constant `value / envelope`.
    pub c_hat: f64,
}

#[derive(Clone, Debug)]
pub struct ShapeCheck {
    pub theorem: Theorem,
    pub kappa: u32,
    /// Exponent fed into the envelope (for T3 this is `2 sigma(4, d)`).
    pub sigma: Rational,
    pub rows: Vec<ShapeRow>,
    pub max_c_hat: f64,
    pub verdict: Verdict,
}

fn expected_kind(theorem: Theorem) -> &'static str {
    match theorem {
        Theorem::T1L2 => "L2",
        Theorem::T1Linf | Theorem::T2 => "Linf",
        Theorem::T3Hminus1 => "Hminus1",
    }
}

fn kind_matches(theorem: Theorem, kind: &NormKind) -> bool {
    matches!(
        (theorem, kind),
        (Theorem::T1L2, NormKind::L2)
            | (Theorem::T1Linf, NormKind::Linf)
            | (Theorem::T2, NormKind::Linf)
            | (Theorem::T3Hminus1, NormKind::Hminus1)
    )
}

/// Divide each report by the theorem envelope and issue the halves verdict.
///
/// `basis` supplies the dimension and, for `T3`, the frequencies; pass the
/// basis the sweep ran on.
pub fn theorem_shape_check(
    reports: &[RemainderReport],
    theorem: Theorem,
    kappa: u32,
    setting: Setting,
    basis: &EigenBasis,
) -> Result<ShapeCheck> {
    if kappa < 1 {
        return Err(Error::BadKappa);
    }
    if reports.is_empty() {
        return Err(Error::MalformedReport("no reports to check".into()));
    }
    let id = &reports[0].basis_id;
    if reports.iter().any(|r| &r.basis_id != id) {
        return Err(Error::MixedBases);
    }
    let d = basis.grid().dim() as u32;
    for r in reports {
        if !kind_matches(theorem, &r.kind) {
            return Err(Error::MalformedReport(format!(
                "report kind {} does not match theorem kind {}",
                r.kind,
                expected_kind(theorem)
            )));
        }
        if r.nu <= r.n {
            return Err(Error::NuNotAboveN { nu: r.nu, n: r.n });
        }
        if theorem != Theorem::T2 && r.tuple.len() != 2 {
            return Err(Error::MalformedReport(format!(
                "pair theorem applied to a length-{} tuple",
                r.tuple.len()
            )));
        }
    }

    let sigma = match theorem {
        // proof exponent 2 sigma(4, d) / d
        Theorem::T1L2 => {
            rational(2, 1) / Rational::from_integer(d as i64) * sigma_4(d, setting)?
        }
        Theorem::T1Linf => sigma_inf(d, setting)?,
        Theorem::T2 => {
            let ell = reports[0].tuple.len() as u32;
            sigma_dl(d, ell, Setting::Boundaryless)?
        }
        Theorem::T3Hminus1 => rational(2, 1) * sigma_4(d, setting)?,
    };
    let sigma_f = sigma.to_f64().unwrap();

    let mut rows = Vec::with_capacity(reports.len());
    for r in reports {
        // remainders at machine zero (exact cutoffs) yield C-hat = 0 rather
        // than noise divided by a shrinking envelope
        let c_hat = if r.value <= 1e-12 {
            0.0
        } else {
            match theorem {
                Theorem::T3Hminus1 => {
                    let lam_nu = basis.freq(r.nu)?;
                    let lam_n = basis.freq(r.n)?;
                    r.value * lam_nu / lam_n.powf(sigma_f)
                }
                Theorem::T2 => {
                    let ell = r.tuple.len() as u32;
                    let s = sigma_dl(d, ell, Setting::Boundaryless)?.to_f64().unwrap();
                    let n = r.n as f64;
                    let nu = r.nu as f64;
                    r.value / (n.powf(s) * (n / nu).powi(kappa as i32))
                }
                _ => {
                    let n = r.n as f64;
                    let nu = r.nu as f64;
                    r.value / (n.powf(sigma_f) * (n / nu).powi(kappa as i32))
                }
            }
        };
        rows.push(ShapeRow {
            tuple: r.tuple.clone(),
            nu: r.nu,
            n: r.n,
            value: r.value,
            c_hat,
        });
    }

    let mut nus: Vec<usize> = rows.iter().map(|r| r.nu).collect();
    nus.sort_unstable();
    nus.dedup();
    let split = nus.len().div_ceil(2);
    let lower_max = rows
        .iter()
        .filter(|r| nus[..split].contains(&r.nu))
        .map(|r| r.c_hat)
        .fold(0.0f64, f64::max);
    let upper_max = rows
        .iter()
        .filter(|r| nus[split..].contains(&r.nu))
        .map(|r| r.c_hat)
        .fold(0.0f64, f64::max);
    let verdict = if upper_max <= lower_max {
        Verdict::Bounded
    } else {
        Verdict::Growing
    };
    let max_c_hat = rows.iter().map(|r| r.c_hat).fold(0.0f64, f64::max);
    Ok(ShapeCheck {
        theorem,
        kappa,
        sigma,
        rows,
        max_c_hat,
        verdict,
    })
}

// ---------------------------------------------------------------------------
// L^p growth of single eigenfunctions
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct LpGrowthRow {
    pub index: usize,
    pub lp_norm: f64,
    /// `||e_j||_p / lambda_j^{sigma(p, d)}`.
    pub ratio: f64,
}

#[derive(Clone, Debug)]
pub struct LpGrowth {
    pub p: Rational,
    pub sigma: Rational,
    pub rows: Vec<LpGrowthRow>,
    pub max_ratio: f64,
    /// Set when the upper half of the index range exceeds the lower half's
    /// max ratio by more than 25%.
    pub alarm: bool,
}

/// Ratios `||e_j||_{L^p} / lambda_j^{sigma(p,d)}` over an index range.
///
/// Dirichlet grids use the Dirichlet L^4 exponent when tabulated; zero
/// frequencies (the periodic constant) are excluded from the ratio.
pub fn lp_growth(basis: &EigenBasis, p: Rational, lo: usize, hi: usize) -> Result<LpGrowth> {
    let d = basis.grid().dim() as u32;
    let setting = match basis.grid().bc() {
        crate::domains::BoundaryKind::Dirichlet => Setting::Dirichlet,
        crate::domains::BoundaryKind::Periodic => Setting::Boundaryless,
    };
    let sigma = if setting == Setting::Dirichlet && p == rational(4, 1) && (2..=4).contains(&d) {
        sigma_pd_dirichlet(d)?
    } else {
        sigma_pd(p, d)?
    };
    let sigma_f = sigma.to_f64().unwrap();
    let p_f = p.to_f64().unwrap();
    let w = basis.grid().weights();

    let mut rows = Vec::new();
    for index in lo..=hi {
        let lam = basis.freq(index)?;
        if lam <= 0.0 {
            continue; // division guard: the constant mode carries no ratio
        }
        let mode = basis.mode(index)?;
        let lp: f64 = mode
            .iter()
            .zip(w)
            .map(|(v, wi)| wi * v.abs().powf(p_f))
            .sum::<f64>()
            .powf(1.0 / p_f);
        rows.push(LpGrowthRow {
            index,
            lp_norm: lp,
            ratio: lp / lam.powf(sigma_f),
        });
    }
    if rows.is_empty() {
        return Err(Error::TooFewModes { needed: 1, got: 0 });
    }
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0f64, f64::max);
    let split = rows.len().div_ceil(2);
    let lower = rows[..split].iter().map(|r| r.ratio).fold(0.0f64, f64::max);
    let upper = rows[split..].iter().map(|r| r.ratio).fold(0.0f64, f64::max);
    Ok(LpGrowth {
        p,
        sigma,
        rows,
        max_ratio,
        alarm: upper > 1.25 * lower,
    })
}
