//! Serialization of analysis outputs: JSON reports, result CSVs, and
//! plot-ready long-format series. Numbers are printed with six
//! significant digits.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::FitReport;
use crate::plan::PlanReport;
use crate::sim::SimResult;
use crate::table::MeasurementTable;
use crate::traj::{DispersionRecord, SynergyMatrix};

/// Formats with 6 significant digits, trimming trailing zeros.
pub fn sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let formatted = format!("{x:.*e}", 5);
    // normalize "1.23000e-4" style back to plain decimal when reasonable
    let v: f64 = formatted.parse().unwrap_or(x);
    let exp = v.abs().log10().floor() as i32;
    if (-4..=8).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        let s = format!("{v:.*}", decimals);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        formatted
    }
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(contents.as_bytes())
        .map_err(|e| Error::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))
}

/// Writes a fit report as JSON (params, r_squared, residuals, notes).
pub fn write_fit_report(report: &FitReport, path: &Path) -> Result<()> {
    write_file(path, &(to_json(report)? + "\n"))
}

/// Writes a plan report as JSON, including the stopping-rule string.
pub fn write_plan_report(report: &PlanReport, path: &Path) -> Result<()> {
    write_file(path, &(to_json(report)? + "\n"))
}

/// Renders simulation records as CSV: k,mean,var,se_mean,se_var,trials.
pub fn sim_csv(result: &SimResult) -> String {
    let mut out = String::from("k,mean,var,se_mean,se_var,trials\n");
    for r in &result.records {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.k,
            sig6(r.mean_loss),
            sig6(r.variance),
            sig6(r.se_mean),
            sig6(r.se_var),
            r.trials
        ));
    }
    out
}

pub fn write_sim_result(result: &SimResult, path: &Path) -> Result<()> {
    write_file(path, &sim_csv(result))
}

/// One named curve for the long-format plot CSV.
pub struct PlotSeries {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Renders curves in long format: series,x,y — one row per point.
pub fn plot_csv(series: &[PlotSeries]) -> String {
    let mut out = String::from("series,x,y\n");
    for s in series {
        for &(x, y) in &s.points {
            out.push_str(&format!("{},{},{}\n", csv_field(&s.name), sig6(x), sig6(y)));
        }
    }
    out
}

pub fn write_plot_csv(series: &[PlotSeries], path: &Path) -> Result<()> {
    write_file(path, &plot_csv(series))
}

fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Renders a measurement table in the canonical column order.
pub fn table_csv(table: &MeasurementTable) -> String {
    let mut out = String::from("method,n,k,domain,group_id,ce\n");
    for r in &table.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            csv_field(&r.method),
            sig6(r.n),
            r.k,
            csv_field(&r.domain),
            csv_field(&r.group_id),
            sig6(r.ce)
        ));
    }
    out
}

pub fn write_table(table: &MeasurementTable, path: &Path) -> Result<()> {
    write_file(path, &table_csv(table))
}

/// Renders a synergy matrix in long format:
/// donor,domain,mean_gain,count — absent cells get an empty mean.
pub fn synergy_csv(m: &SynergyMatrix) -> String {
    let mut out = String::from("donor,domain,mean_gain,count\n");
    for (i, d) in m.donors.iter().enumerate() {
        for (j, e) in m.domains.iter().enumerate() {
            let mean = m.mean(i, j).map(sig6).unwrap_or_default();
            out.push_str(&format!(
                "{},{},{},{}\n",
                csv_field(d),
                csv_field(e),
                mean,
                m.counts[i][j]
            ));
        }
    }
    out
}

pub fn write_synergy(m: &SynergyMatrix, path: &Path) -> Result<()> {
    write_file(path, &synergy_csv(m))
}

/// Renders dispersion records: n,k,orders,mean,std,range,cv.
pub fn dispersion_csv(records: &[DispersionRecord]) -> String {
    let mut out = String::from("n,k,orders,mean,std,range,cv\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            sig6(r.n),
            r.k,
            r.orders,
            sig6(r.mean),
            sig6(r.std),
            sig6(r.range),
            sig6(r.cv)
        ));
    }
    out
}

pub fn write_dispersion(records: &[DispersionRecord], path: &Path) -> Result<()> {
    write_file(path, &dispersion_csv(records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::{ColumnMap, MeasurementRow};

    #[test]
    fn sig6_formatting() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(1.0), "1");
        assert_eq!(sig6(0.7599), "0.7599");
        assert_eq!(sig6(0.123456789), "0.123457");
        assert_eq!(sig6(123456789.0), "123457000");
        assert_eq!(sig6(-0.052334), "-0.052334");
        assert_eq!(sig6(1.5e-7), "1.50000e-7");
    }

    #[test]
    fn sim_csv_header_and_rows() {
        use crate::sim::{SimRecord, SimResult};
        let res = SimResult {
            records: vec![SimRecord {
                k: 2,
                mean_loss: 0.25,
                variance: 0.0101,
                se_mean: 0.001,
                se_var: 0.0002,
                trials: 100,
            }],
        };
        let csv = sim_csv(&res);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "k,mean,var,se_mean,se_var,trials");
        assert_eq!(lines.next().unwrap(), "2,0.25,0.0101,0.001,0.0002,100");
    }

    #[test]
    fn plot_csv_long_format() {
        let s = vec![PlotSeries {
            name: "ce_vs_k,N=32".into(),
            points: vec![(1.0, 0.5), (2.0, 0.4)],
        }];
        let csv = plot_csv(&s);
        assert!(csv.starts_with("series,x,y\n"));
        assert!(csv.contains("\"ce_vs_k,N=32\",1,0.5\n"));
    }

    #[test]
    fn table_round_trip_via_csv() {
        let mut table = MeasurementTable::default();
        table.rows.push(MeasurementRow {
            method: "average".into(),
            n: 32.0,
            k: 3,
            domain: "algebra".into(),
            group_id: "a-b-c".into(),
            ce: 0.41234567,
        });
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        write_table(&table, &path).unwrap();
        let map = ColumnMap {
            model: "group_id".into(),
            ce: "ce".into(),
            method: Some("method".into()),
            n: Some("n".into()),
            ..ColumnMap::default()
        };
        let back = crate::table::ingest_csv(&path, &map).unwrap();
        let r = &back.table.rows[0];
        assert_eq!(r.method, "average");
        assert_eq!(r.k, 3);
        assert!((r.ce - 0.41234567).abs() < 1e-6); // 6 significant digits
    }
}
