//! Reading simulate output back and merging cells into combined tables.

use std::path::{Path, PathBuf};

use pacs_core::sim::summary::{ATE_HEADER, FREQUENCY_HEADER, RUNTIME_HEADER};
use pacs_core::sim::{AteRow, FrequencyRow, Method, RuntimeRow, PRESET_NAMES};
use serde::de::DeserializeOwned;

use crate::svg::frequency_chart;
use crate::CliError;

pub const FREQUENCY_FILE: &str = "selection_frequency.csv";
pub const ATE_FILE: &str = "ate_summary.csv";
pub const RUNTIME_FILE: &str = "runtime.csv";
pub const CHART_FILE: &str = "frequency.svg";
pub const CONFIG_FILE: &str = "config.txt";
pub const SUMMARY_FILE: &str = "summary.csv";

/// Columns repeated for each method in the combined summary.
const METHOD_COLUMNS: [&str; 6] = ["bias", "sd", "failed", "target_min", "nontarget_max", "seconds"];

#[derive(Debug, Clone, PartialEq)]
pub struct CellReport {
    pub name: String,
    pub dir: PathBuf,
    pub frequency: Vec<FrequencyRow>,
    pub ate: Vec<AteRow>,
    pub runtime: Vec<RuntimeRow>,
}

fn malformed(path: &Path, row: u64, msg: impl std::fmt::Display) -> CliError {
    CliError::Report(format!("{}: row {row}: {msg}", path.display()))
}

/// Rows of a report CSV; the header must match `header` exactly. Row numbers
/// in errors count the header as row 1.
pub fn read_rows<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>, CliError> {
    let file = std::fs::File::open(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut rdr = csv::Reader::from_reader(file);
    let found = rdr.headers().map_err(|e| malformed(path, 1, e))?.clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(malformed(
            path,
            1,
            format!("expected header `{}`, got `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.deserialize().enumerate() {
        let row = i as u64 + 2;
        rows.push(rec.map_err(|e: csv::Error| {
            malformed(path, e.position().map_or(row, |p| p.line()), e)
        })?);
    }
    Ok(rows)
}

pub fn read_cell(dir: &Path) -> Result<CellReport, CliError> {
    let name = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let frequency: Vec<FrequencyRow> = read_rows(&dir.join(FREQUENCY_FILE), &FREQUENCY_HEADER)?;
    let ate: Vec<AteRow> = read_rows(&dir.join(ATE_FILE), &ATE_HEADER)?;
    let runtime_path = dir.join(RUNTIME_FILE);
    let runtime: Vec<RuntimeRow> = read_rows(&runtime_path, &RUNTIME_HEADER)?;
    if runtime.is_empty() {
        return Err(malformed(&runtime_path, 2, "no rows"));
    }
    for (i, r) in frequency.iter().enumerate() {
        if r.method.parse::<Method>().is_err() {
            return Err(malformed(
                &dir.join(FREQUENCY_FILE),
                i as u64 + 2,
                format!("unknown method `{}`", r.method),
            ));
        }
    }
    Ok(CellReport {
        name,
        dir: dir.to_path_buf(),
        frequency,
        ate,
        runtime,
    })
}

/// Sort key: the built-in cells in their canonical order, then the rest by name.
fn cell_order(name: &str) -> (usize, String) {
    let idx = PRESET_NAMES
        .iter()
        .position(|p| *p == name)
        .unwrap_or(PRESET_NAMES.len());
    (idx, name.to_string())
}

/// Every subdirectory of `dir` holding a frequency table.
pub fn discover(dir: &Path) -> Result<Vec<CellReport>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_dir() && path.join(FREQUENCY_FILE).is_file() {
            dirs.push(path);
        }
    }
    if dirs.is_empty() {
        return Err(CliError::Report(format!("no reports found in {}", dir.display())));
    }
    let mut cells = dirs.iter().map(|d| read_cell(d)).collect::<Result<Vec<_>, _>>()?;
    cells.sort_by_key(|c| cell_order(&c.name));
    Ok(cells)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn is_target_role(role: &str) -> bool {
    matches!(role, "confounder" | "outcome_predictor")
}

/// One row per cell: `cell,n,p,m` then, for every method, bias, SD, failure
/// count, the smallest target-covariate frequency, the largest non-target
/// frequency and the total seconds. Methods absent from a cell leave their
/// columns empty.
pub fn summary_csv(cells: &[CellReport]) -> String {
    let mut header = vec!["cell".to_string(), "n".into(), "p".into(), "m".into()];
    for method in Method::ALL {
        for col in METHOD_COLUMNS {
            header.push(format!("{}_{col}", method.label()));
        }
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).expect("in-memory write");
    for cell in cells {
        let first = &cell.runtime[0];
        let mut rec = vec![
            cell.name.clone(),
            first.n.to_string(),
            first.p.to_string(),
            first.m.to_string(),
        ];
        for method in Method::ALL {
            let label = method.label();
            let ate = cell.ate.iter().find(|a| a.method == label);
            let freqs = cell.frequency.iter().filter(|f| f.method == label);
            let (mut target_min, mut other_max): (Option<f64>, Option<f64>) = (None, None);
            for f in freqs {
                let v = f.frequency;
                if is_target_role(&f.role) {
                    target_min = Some(target_min.map_or(v, |t| t.min(v)));
                } else {
                    other_max = Some(other_max.map_or(v, |o| o.max(v)));
                }
            }
            let seconds = cell.runtime.iter().find(|r| r.method == label).map(|r| r.seconds);
            rec.push(fmt_opt(ate.map(|a| a.bias)));
            rec.push(fmt_opt(ate.map(|a| a.sd)));
            rec.push(ate.map(|a| a.n_failed.to_string()).unwrap_or_default());
            rec.push(fmt_opt(target_min));
            rec.push(fmt_opt(other_max));
            rec.push(fmt_opt(seconds));
        }
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

/// Cell name without its last `-` component (`s2-weak-many` -> `s2-weak`).
pub fn group_of(name: &str) -> &str {
    name.rsplit_once('-').map_or(name, |(head, _)| head)
}

/// Runtime tables laid out as methods × cells, one per group of cells that
/// share a scenario and confounding strength. Columns run by increasing `n`,
/// then decreasing `p`, and are labelled `n=.. p=..` unless two cells of the
/// group share a size, in which case the cell name is used.
pub fn runtime_tables(cells: &[CellReport]) -> Vec<(String, String)> {
    let mut groups: Vec<(&str, Vec<&CellReport>)> = Vec::new();
    for c in cells {
        let g = group_of(&c.name);
        match groups.iter_mut().find(|(name, _)| *name == g) {
            Some((_, members)) => members.push(c),
            None => groups.push((g, vec![c])),
        }
    }
    let mut out = Vec::new();
    for (group, mut members) in groups {
        members.sort_by(|a, b| {
            let (ra, rb) = (&a.runtime[0], &b.runtime[0]);
            (ra.n, std::cmp::Reverse(ra.p), &a.name).cmp(&(rb.n, std::cmp::Reverse(rb.p), &b.name))
        });
        let sizes: Vec<(usize, usize)> = members.iter().map(|c| (c.runtime[0].n, c.runtime[0].p)).collect();
        let unique = (1..sizes.len()).all(|i| !sizes[..i].contains(&sizes[i]));
        let mut header = vec![format!("m={}", members[0].runtime[0].m)];
        for (c, (n, p)) in members.iter().zip(&sizes) {
            header.push(if unique { format!("n={n} p={p}") } else { c.name.clone() });
        }
        let mut methods: Vec<&str> = Vec::new();
        for c in &members {
            for r in &c.runtime {
                if !methods.contains(&r.method.as_str()) {
                    methods.push(&r.method);
                }
            }
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&header).expect("in-memory write");
        for m in methods {
            let mut rec = vec![m.to_string()];
            for c in &members {
                rec.push(fmt_opt(c.runtime.iter().find(|r| r.method == m).map(|r| r.seconds)));
            }
            w.write_record(&rec).expect("in-memory write");
        }
        let text = String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv");
        out.push((format!("runtime_table_{group}.csv"), text));
    }
    out
}

pub fn chart_for(cell: &CellReport) -> String {
    frequency_chart(&format!("{}: selection frequency", cell.name), &cell.frequency)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_drop_the_last_component() {
        assert_eq!(group_of("s2-weak-many"), "s2-weak");
        assert_eq!(group_of("s1-strong-3"), "s1-strong");
        assert_eq!(group_of("custom"), "custom");
    }

    #[test]
    fn canonical_cell_order() {
        let mut names = vec!["zeta", "s2-weak-small", "s1-weak-1", "s2-strong-large"];
        names.sort_by_key(|n| cell_order(n));
        assert_eq!(names, ["s1-weak-1", "s2-weak-small", "s2-strong-large", "zeta"]);
    }
}
