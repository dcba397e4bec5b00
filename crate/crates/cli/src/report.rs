//! CSV and JSON output.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::experiments::ResultRow;

pub const CSV_HEADER: [&str; 6] = ["instance", "criterion", "baseline", "perturbed", "delta", "verdict"];

/// Twelve significant digits in scientific notation.
pub fn format_value(v: f64) -> String {
    format!("{v:.11e}")
}

pub fn verdict(pass: bool) -> &'static str {
    if pass {
        "pass"
    } else {
        "fail"
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.instance.as_str(),
            r.criterion.as_str(),
            &format_value(r.baseline),
            &format_value(r.perturbed),
            &format_value(r.delta),
            verdict(r.pass),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Counts {
    pub pass: usize,
    pub fail: usize,
}

impl Counts {
    fn add(&mut self, pass: bool) {
        if pass {
            self.pass += 1;
        } else {
            self.fail += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Failure {
    pub instance: String,
    pub criterion: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub kind: String,
    pub seed: u64,
    pub rows: usize,
    pub verdicts: Counts,
    pub criteria: BTreeMap<String, Counts>,
    pub failures: Vec<Failure>,
}

impl Summary {
    pub fn new(kind: &str, seed: u64, rows: &[ResultRow]) -> Self {
        let mut verdicts = Counts::default();
        let mut criteria: BTreeMap<String, Counts> = BTreeMap::new();
        let mut failures = Vec::new();
        for r in rows {
            verdicts.add(r.pass);
            criteria.entry(r.criterion.clone()).or_default().add(r.pass);
            if !r.pass {
                failures.push(Failure { instance: r.instance.clone(), criterion: r.criterion.clone() });
            }
        }
        Self { kind: kind.to_string(), seed, rows: rows.len(), verdicts, criteria, failures }
    }

    pub fn all_pass(&self) -> bool {
        self.verdicts.fail == 0
    }
}

/// Writes `results.csv` and `summary.json` into `dir`, creating it if needed.
pub fn write_outputs(dir: &Path, rows: &[ResultRow], summary: &Summary) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let csv_file = std::fs::File::create(dir.join("results.csv"))?;
    write_csv(rows, std::io::BufWriter::new(csv_file)).map_err(std::io::Error::other)?;
    let mut json = serde_json::to_string_pretty(summary).map_err(std::io::Error::other)?;
    json.push('\n');
    std::fs::write(dir.join("summary.json"), json)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(pass: bool, criterion: &str) -> ResultRow {
        ResultRow {
            instance: "i0-s1".into(),
            criterion: criterion.into(),
            baseline: 1.0 / 3.0,
            perturbed: 0.25,
            delta: 0.25 - 1.0 / 3.0,
            pass,
        }
    }

    #[test]
    fn values_carry_twelve_significant_digits() {
        assert_eq!(format_value(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(format_value(-2.5e-7), "-2.50000000000e-7");
        assert_eq!(format_value(0.0), "0.00000000000e0");
    }

    #[test]
    fn csv_layout() {
        let mut buf = Vec::new();
        write_csv(&[row(true, "gap:peskun")], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "instance,criterion,baseline,perturbed,delta,verdict\n\
             i0-s1,gap:peskun,3.33333333333e-1,2.50000000000e-1,-8.33333333333e-2,pass\n"
        );
    }

    #[test]
    fn summary_counts() {
        let rows = [row(true, "a"), row(false, "a"), row(true, "b")];
        let s = Summary::new("chain-gap", 4, &rows);
        assert_eq!(s.verdicts, Counts { pass: 2, fail: 1 });
        assert_eq!(s.criteria["a"], Counts { pass: 1, fail: 1 });
        assert_eq!(s.failures.len(), 1);
        assert!(!s.all_pass());
        let json: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(json["verdicts"]["fail"], 1);
    }
}
