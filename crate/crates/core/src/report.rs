//! Report emission and lossless read-back.
//!
//! CSV layouts are fixed per report type, values are written in Rust's
//! shortest round-trip float form, and `# key: value` preamble lines carry
//! provenance (basis hash, config hash) without disturbing the header row.
//! Parsers in this module read back exactly what the writers emit.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::fitting::{EriReport, FitMode, RankRow};
use crate::products::{NormKind, RemainderReport};

/// Write-then-rename so partial output never lands under the final name.
pub fn atomic_write(path: &Path, data: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    if !dir.as_os_str().is_empty() {
        std::fs::create_dir_all(dir)?;
    }
    let tmp = dir.join(format!(
        ".tmp-{}-{}",
        std::process::id(),
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "out".into())
    ));
    std::fs::write(&tmp, data)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

fn tuple_text(tuple: &[usize]) -> String {
    tuple
        .iter()
        .map(|i| i.to_string())
        .collect::<Vec<_>>()
        .join("-")
}

fn parse_tuple(text: &str) -> Result<Vec<usize>> {
    text.split('-')
        .map(|p| {
            p.parse::<usize>()
                .map_err(|_| Error::MalformedReport(format!("bad tuple component `{p}`")))
        })
        .collect()
}

fn preamble_text(preamble: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in preamble {
        let _ = writeln!(out, "# {k}: {v}");
    }
    out
}

fn split_preamble(text: &str) -> (Vec<(String, String)>, Vec<&str>) {
    let mut pre = Vec::new();
    let mut rows = Vec::new();
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix('#') {
            if let Some((k, v)) = rest.split_once(':') {
                pre.push((k.trim().to_string(), v.trim().to_string()));
            }
        } else if !line.trim().is_empty() {
            rows.push(line);
        }
    }
    (pre, rows)
}

// ---------------------------------------------------------------------------
// remainder reports: tuple,nu,n,kind,value,value_upper
// ---------------------------------------------------------------------------

pub const REMAINDER_HEADER: &str = "tuple,nu,n,kind,value,value_upper";

pub fn remainder_csv(reports: &[RemainderReport], preamble: &[(String, String)]) -> String {
    let mut out = preamble_text(preamble);
    out.push_str(REMAINDER_HEADER);
    out.push('\n');
    for r in reports {
        let upper = r.value_upper.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            tuple_text(&r.tuple),
            r.nu,
            r.n,
            r.kind,
            r.value,
            upper
        );
    }
    out
}

pub fn parse_remainder_csv(
    text: &str,
) -> Result<(Vec<(String, String)>, Vec<RemainderReport>)> {
    let (pre, rows) = split_preamble(text);
    let basis_id = pre
        .iter()
        .find(|(k, _)| k == "basis")
        .map(|(_, v)| v.clone())
        .unwrap_or_default();
    let mut iter = rows.into_iter();
    match iter.next() {
        Some(h) if h == REMAINDER_HEADER => {}
        other => {
            return Err(Error::MalformedReport(format!(
                "expected header `{REMAINDER_HEADER}`, got {other:?}"
            )))
        }
    }
    let mut reports = Vec::new();
    for line in iter {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(Error::MalformedReport(format!("bad row `{line}`")));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::MalformedReport(format!("bad float `{s}` in `{line}`")))
        };
        let parse_u = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::MalformedReport(format!("bad integer `{s}` in `{line}`")))
        };
        reports.push(RemainderReport {
            tuple: parse_tuple(cells[0])?,
            nu: parse_u(cells[1])?,
            n: parse_u(cells[2])?,
            kind: cells[3].parse::<NormKind>()?,
            value: parse_f(cells[4])?,
            value_upper: if cells[5].is_empty() {
                None
            } else {
                Some(parse_f(cells[5])?)
            },
            basis_id: basis_id.clone(),
        });
    }
    Ok((pre, reports))
}

// ---------------------------------------------------------------------------
// fit reports: n,epsilon,mode,rank,max_residual
// ---------------------------------------------------------------------------

pub const FIT_HEADER: &str = "n,epsilon,mode,rank,max_residual";

fn mode_text(mode: FitMode) -> &'static str {
    match mode {
        FitMode::Spectral => "spectral",
        FitMode::Optimal => "optimal",
    }
}

fn parse_mode(text: &str) -> Result<FitMode> {
    match text {
        "spectral" => Ok(FitMode::Spectral),
        "optimal" => Ok(FitMode::Optimal),
        other => Err(Error::MalformedReport(format!("bad fit mode `{other}`"))),
    }
}

pub fn fit_csv(mode: FitMode, rows: &[RankRow], preamble: &[(String, String)]) -> String {
    let mut out = preamble_text(preamble);
    out.push_str(FIT_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.n,
            r.epsilon,
            mode_text(mode),
            r.rank,
            r.max_residual
        );
    }
    out
}

pub fn parse_fit_csv(
    text: &str,
) -> Result<(Vec<(String, String)>, Vec<(FitMode, RankRow)>)> {
    let (pre, rows) = split_preamble(text);
    let mut iter = rows.into_iter();
    match iter.next() {
        Some(h) if h == FIT_HEADER => {}
        other => {
            return Err(Error::MalformedReport(format!(
                "expected header `{FIT_HEADER}`, got {other:?}"
            )))
        }
    }
    let mut parsed = Vec::new();
    for line in iter {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 5 {
            return Err(Error::MalformedReport(format!("bad row `{line}`")));
        }
        parsed.push((
            parse_mode(cells[2])?,
            RankRow {
                n: cells[0]
                    .parse()
                    .map_err(|_| Error::MalformedReport(format!("bad n in `{line}`")))?,
                epsilon: cells[1]
                    .parse()
                    .map_err(|_| Error::MalformedReport(format!("bad epsilon in `{line}`")))?,
                rank: cells[3]
                    .parse()
                    .map_err(|_| Error::MalformedReport(format!("bad rank in `{line}`")))?,
                max_residual: cells[4].parse().map_err(|_| {
                    Error::MalformedReport(format!("bad max_residual in `{line}`"))
                })?,
            },
        ));
    }
    Ok((pre, parsed))
}

// ---------------------------------------------------------------------------
// eri tables: i,j,k,l,exact,fitted  (rows for pair-major upper triangle)
// ---------------------------------------------------------------------------

pub const ERI_HEADER: &str = "i,j,k,l,exact,fitted";

pub fn eri_csv(report: &EriReport, preamble: &[(String, String)]) -> String {
    let mut out = preamble_text(preamble);
    out.push_str(ERI_HEADER);
    out.push('\n');
    let p = report.pairs.len();
    for pq in 0..p {
        for rs in pq..p {
            let (i, j) = report.pairs[pq];
            let (k, l) = report.pairs[rs];
            let exact = report
                .exact
                .as_ref()
                .map(|t| t[[pq, rs]].to_string())
                .unwrap_or_default();
            let fitted = report
                .fitted
                .as_ref()
                .map(|t| t[[pq, rs]].to_string())
                .unwrap_or_default();
            let _ = writeln!(out, "{i},{j},{k},{l},{exact},{fitted}");
        }
    }
    out
}

/// Parsed ERI row: pair indices plus whichever values were present.
#[derive(Clone, Debug, PartialEq)]
pub struct EriCsvRow {
    pub i: usize,
    pub j: usize,
    pub k: usize,
    pub l: usize,
    pub exact: Option<f64>,
    pub fitted: Option<f64>,
}

pub fn parse_eri_csv(text: &str) -> Result<(Vec<(String, String)>, Vec<EriCsvRow>)> {
    let (pre, rows) = split_preamble(text);
    let mut iter = rows.into_iter();
    match iter.next() {
        Some(h) if h == ERI_HEADER => {}
        other => {
            return Err(Error::MalformedReport(format!(
                "expected header `{ERI_HEADER}`, got {other:?}"
            )))
        }
    }
    let mut parsed = Vec::new();
    for line in iter {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 6 {
            return Err(Error::MalformedReport(format!("bad row `{line}`")));
        }
        let parse_u = |s: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::MalformedReport(format!("bad index `{s}` in `{line}`")))
        };
        let parse_opt = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| Error::MalformedReport(format!("bad float `{s}` in `{line}`")))
            }
        };
        parsed.push(EriCsvRow {
            i: parse_u(cells[0])?,
            j: parse_u(cells[1])?,
            k: parse_u(cells[2])?,
            l: parse_u(cells[3])?,
            exact: parse_opt(cells[4])?,
            fitted: parse_opt(cells[5])?,
        });
    }
    Ok((pre, parsed))
}
