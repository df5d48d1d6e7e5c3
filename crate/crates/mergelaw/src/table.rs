//! Long-format measurement tables and CSV ingestion.
//!
//! The canonical trajectory CSV schema is `(model, domain, ce_loss)`
//! where `model` is a hyphen-joined donor list; `k` is always derived as
//! hyphen count + 1 and never trusted from an explicit column. A column
//! mapping adapts real-world files with different header names.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One measurement: a merged model's CE on one evaluation domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRow {
    pub method: String,
    /// Model size in billions of parameters.
    pub n: f64,
    pub k: u32,
    pub domain: String,
    /// Subset / merge-order identifier (the model string for ingested files).
    pub group_id: String,
    pub ce: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MeasurementTable {
    pub rows: Vec<MeasurementRow>,
}

impl MeasurementTable {
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for r in &self.rows {
            if !(r.ce > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "ce must be > 0, got {} (group {})",
                    r.ce, r.group_id
                )));
            }
            if r.k < 1 {
                return Err(Error::InvalidInput("k must be >= 1".into()));
            }
            if !(r.n > 0.0) {
                return Err(Error::InvalidInput(format!("N must be > 0, got {}", r.n)));
            }
            let key = (
                r.method.clone(),
                r.n.to_bits(),
                r.k,
                r.domain.clone(),
                r.group_id.clone(),
            );
            if !seen.insert(key) {
                return Err(Error::InvalidInput(format!(
                    "duplicate row: method={} N={} k={} domain={} group={}",
                    r.method, r.n, r.k, r.domain, r.group_id
                )));
            }
        }
        Ok(())
    }

    /// Mean CE per k, pooling every row (caller filters beforehand).
    pub fn mean_by_k(&self) -> Vec<(u32, f64)> {
        let mut acc: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = acc.entry(r.k).or_insert((0.0, 0));
            e.0 += r.ce;
            e.1 += 1;
        }
        acc.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
    }

    /// Mean CE per (N, k) cell.
    pub fn mean_by_nk(&self) -> Vec<(f64, u32, f64)> {
        let mut acc: BTreeMap<(u64, u32), (f64, f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = acc.entry((r.n.to_bits(), r.k)).or_insert((r.n, 0.0, 0));
            e.1 += r.ce;
            e.2 += 1;
        }
        acc.into_iter()
            .map(|((_, k), (n, s, c))| (n, k, s / c as f64))
            .collect()
    }

    /// Macro CE per group: unweighted mean over the domains present.
    pub fn macro_by_group(&self) -> BTreeMap<String, f64> {
        let mut acc: BTreeMap<String, (f64, usize)> = BTreeMap::new();
        for r in &self.rows {
            let e = acc.entry(r.group_id.clone()).or_insert((0.0, 0));
            e.0 += r.ce;
            e.1 += 1;
        }
        acc.into_iter().map(|(g, (s, n))| (g, s / n as f64)).collect()
    }

    pub fn filter(&self, pred: impl Fn(&MeasurementRow) -> bool) -> MeasurementTable {
        MeasurementTable {
            rows: self.rows.iter().filter(|r| pred(r)).cloned().collect(),
        }
    }
}

/// Column mapping for real-world CSV files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ColumnMap {
    pub model: String,
    pub domain: String,
    pub ce: String,
    /// Optional method column; `default_method` is used when absent.
    pub method: Option<String>,
    /// Optional model-size column (billions); `default_n` when absent.
    pub n: Option<String>,
    pub default_method: String,
    pub default_n: f64,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            model: "model".into(),
            domain: "domain".into(),
            ce: "ce_loss".into(),
            method: None,
            n: None,
            default_method: "unknown".into(),
            default_n: 1.0,
        }
    }
}

/// Number of donors encoded in a hyphen-joined model string.
pub fn k_from_model(model: &str) -> u32 {
    model.matches('-').count() as u32 + 1
}

/// A reconstructed incremental-merge trajectory: donor d_t appended at
/// step t, with per-domain CE after each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub donors: Vec<String>,
    /// ce[t] maps evaluation domain -> CE after merging donors[..=t].
    pub ce: Vec<BTreeMap<String, f64>>,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub table: MeasurementTable,
    pub trajectories: Vec<Trajectory>,
    pub warnings: Vec<String>,
}

pub fn ingest_csv(path: impl AsRef<Path>, map: &ColumnMap) -> Result<Ingested> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| {
        Error::InvalidInput(format!("cannot read CSV {}: {e}", path.display()))
    })?;
    let headers = reader
        .headers()
        .map_err(|e| Error::InvalidInput(format!("bad CSV header: {e}")))?
        .clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::InvalidInput(format!("missing mapped column '{name}'")))
    };
    let model_col = col(&map.model)?;
    let domain_col = col(&map.domain)?;
    let ce_col = col(&map.ce)?;
    let method_col = map.method.as_deref().map(col).transpose()?;
    let n_col = map.n.as_deref().map(col).transpose()?;

    let mut out = Ingested::default();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidInput(format!("bad CSV record: {e}")))?;
        let model = record.get(model_col).unwrap_or("").trim().to_string();
        let domain = record.get(domain_col).unwrap_or("").trim().to_string();
        let ce_str = record.get(ce_col).unwrap_or("").trim();
        let ce: f64 = ce_str.parse().map_err(|_| {
            Error::InvalidInput(format!("non-numeric CE '{ce_str}' at data row {}", line + 1))
        })?;
        let method = method_col
            .and_then(|c| record.get(c))
            .map(|s| s.trim().to_string())
            .unwrap_or_else(|| map.default_method.clone());
        let n = match n_col.and_then(|c| record.get(c)) {
            Some(s) => s.trim().parse().map_err(|_| {
                Error::InvalidInput(format!("non-numeric N '{s}' at data row {}", line + 1))
            })?,
            None => map.default_n,
        };
        out.table.rows.push(MeasurementRow {
            method,
            n,
            k: k_from_model(&model),
            domain,
            group_id: model,
            ce,
        });
    }
    out.table.validate()?;
    out.trajectories = reconstruct_trajectories(&out.table, &mut out.warnings);
    Ok(out)
}

/// Rebuilds trajectories from prefix rows: a model string "a-b-c" is a
/// trajectory endpoint if the table also contains "a" and "a-b" with the
/// same domain set.
fn reconstruct_trajectories(table: &MeasurementTable, warnings: &mut Vec<String>) -> Vec<Trajectory> {
    // group_id -> domain -> ce
    let mut by_group: BTreeMap<&str, BTreeMap<String, f64>> = BTreeMap::new();
    for r in &table.rows {
        by_group
            .entry(&r.group_id)
            .or_default()
            .insert(r.domain.clone(), r.ce);
    }
    let groups: BTreeSet<&str> = by_group.keys().copied().collect();

    let mut trajectories = Vec::new();
    for &g in &groups {
        let donors: Vec<&str> = g.split('-').collect();
        if donors.len() < 2 {
            continue;
        }
        // only maximal chains: skip if g is itself a proper prefix
        let extended = groups.iter().any(|&other| {
            other != g && other.starts_with(g) && other.as_bytes().get(g.len()) == Some(&b'-')
        });
        if extended {
            continue;
        }
        let mut steps = Vec::new();
        let mut complete = true;
        for t in 1..=donors.len() {
            let prefix = donors[..t].join("-");
            match by_group.get(prefix.as_str()) {
                Some(ce) => steps.push(ce.clone()),
                None => {
                    complete = false;
                    break;
                }
            }
        }
        if !complete {
            continue;
        }
        let domain_set: BTreeSet<&String> = steps[0].keys().collect();
        if steps.iter().any(|s| s.keys().collect::<BTreeSet<_>>() != domain_set) {
            warnings.push(format!("skipping trajectory '{g}': inconsistent domain sets"));
            continue;
        }
        trajectories.push(Trajectory {
            donors: donors.iter().map(|s| s.to_string()).collect(),
            ce: steps,
        });
    }
    trajectories
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn k_derivation_from_model_field() {
        assert_eq!(k_from_model("algebra"), 1);
        assert_eq!(k_from_model("algebra-code"), 2);
        assert_eq!(k_from_model("a-b-c-d"), 4);
    }

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn ingest_canonical_schema() {
        let f = write_csv("model,domain,ce_loss\nalgebra-code,physics,0.61\nalgebra,physics,0.7\n");
        let ing = ingest_csv(f.path(), &ColumnMap::default()).unwrap();
        let row = &ing.table.rows[0];
        assert_eq!(row.k, 2);
        assert_eq!(row.group_id, "algebra-code");
        assert_eq!(row.ce, 0.61);
    }

    #[test]
    fn ingest_with_column_mapping() {
        let f = write_csv("Model,Domain,CE Loss\na-b,physics,0.5\n");
        let map = ColumnMap {
            model: "Model".into(),
            domain: "Domain".into(),
            ce: "CE Loss".into(),
            ..ColumnMap::default()
        };
        let ing = ingest_csv(f.path(), &map).unwrap();
        assert_eq!(ing.table.rows[0].k, 2);
    }

    #[test]
    fn missing_column_is_an_error() {
        let f = write_csv("model,domain,loss\na,x,0.5\n");
        assert!(ingest_csv(f.path(), &ColumnMap::default()).is_err());
    }

    #[test]
    fn non_numeric_ce_is_an_error() {
        let f = write_csv("model,domain,ce_loss\na,x,oops\n");
        assert!(ingest_csv(f.path(), &ColumnMap::default()).is_err());
    }

    #[test]
    fn macro_ce_is_unweighted_domain_mean() {
        let f = write_csv("model,domain,ce_loss\na,x,0.4\na,y,0.6\na,z,0.8\n");
        let ing = ingest_csv(f.path(), &ColumnMap::default()).unwrap();
        let macros = ing.table.macro_by_group();
        assert!((macros["a"] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn trajectories_reconstructed_from_prefixes() {
        let f = write_csv(
            "model,domain,ce_loss\n\
             a,x,0.50\na,y,0.60\n\
             a-b,x,0.45\na-b,y,0.55\n\
             a-b-c,x,0.44\na-b-c,y,0.52\n",
        );
        let ing = ingest_csv(f.path(), &ColumnMap::default()).unwrap();
        assert_eq!(ing.trajectories.len(), 1);
        let t = &ing.trajectories[0];
        assert_eq!(t.donors, vec!["a", "b", "c"]);
        assert_eq!(t.ce[1]["x"], 0.45);
    }

    #[test]
    fn incomplete_prefix_chain_yields_no_trajectory() {
        let f = write_csv("model,domain,ce_loss\na-b-c,x,0.44\na,x,0.5\n");
        let ing = ingest_csv(f.path(), &ColumnMap::default()).unwrap();
        assert!(ing.trajectories.is_empty());
    }

    #[test]
    fn validation_rejects_duplicates_and_nonpositive_ce() {
        let mut t = MeasurementTable::default();
        let row = MeasurementRow {
            method: "average".into(),
            n: 0.5,
            k: 1,
            domain: "x".into(),
            group_id: "a".into(),
            ce: 0.5,
        };
        t.rows.push(row.clone());
        t.rows.push(row);
        assert!(t.validate().is_err());

        let mut t = MeasurementTable::default();
        t.rows.push(MeasurementRow {
            method: "average".into(),
            n: 0.5,
            k: 1,
            domain: "x".into(),
            group_id: "a".into(),
            ce: -0.1,
        });
        assert!(t.validate().is_err());
    }
}
