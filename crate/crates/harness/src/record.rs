//! Run artifacts: the per-snapshot row file, the key-value summary, and the
//! record handed back to callers.
//!
//! Rows are CSV with one line per stored snapshot and every number printed
//! in full-precision scientific notation (`{:.17e}` round-trips f64
//! exactly), so two runs of the same configuration produce byte-identical
//! row files. Nothing time- or path-dependent is ever written to a row.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dnls_core::IndexSet;
use dnls_core::seminorm::SeminormTable;

/// Outcome of one named post-run check.
#[derive(Clone, Debug)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// What a finished (or aborted) experiment leaves behind.
#[derive(Clone, Debug)]
pub struct RunRecord {
    /// Full content hash of the configuration.
    pub config_hash: String,
    /// Fresh directory this run created; never reused by later runs.
    pub run_dir: PathBuf,
    pub rows_path: PathBuf,
    pub summary_path: PathBuf,
    /// Outcomes of exactly the checks the configuration requested.
    pub checks: Vec<CheckOutcome>,
    /// The key-value pairs written to the summary file, in order.
    pub summary: Vec<(String, String)>,
    /// `Some` when the stepper aborted; the artifacts above still exist.
    pub failure: Option<String>,
}

impl RunRecord {
    /// True when the run completed and every requested check passed.
    pub fn all_checks_passed(&self) -> bool {
        self.failure.is_none() && self.checks.iter().all(|c| c.passed)
    }
}

/// One row of the per-snapshot table.
pub struct SnapshotRow<'a> {
    pub t: f64,
    pub one_minus_bt: f64,
    pub sup_norm: f64,
    pub l2_norm: f64,
    pub table: &'a SeminormTable,
    /// Instantaneous monitor contribution; NaN when monitors were skipped.
    pub psi_inst: f64,
    /// Mass-ledger residual at this snapshot.
    pub ledger_residual: f64,
    /// Magnitude-identity residual; NaN when the quadrature is untracked.
    pub magnitude_residual: f64,
}

/// Streaming CSV writer for [`SnapshotRow`]s.
pub struct RowWriter {
    out: BufWriter<File>,
    idx: IndexSet,
}

/// Column names for a given index set, in row order.
pub fn row_header(idx: &IndexSet) -> String {
    let mut cols: Vec<String> = vec![
        "t".into(),
        "one_minus_bt".into(),
        "sup_norm".into(),
        "l2_norm".into(),
        "x_norm".into(),
        "inf_weighted".into(),
        "tail_ratio".into(),
        "tail_ok".into(),
    ];
    for l in 0..=2 * idx.m {
        cols.push(format!("fam1_{l}"));
    }
    for l in 2 * idx.m + 1..=2 * idx.m + 2 + idx.k {
        cols.push(format!("fam2_{l}"));
    }
    for l in 2 * idx.m + 3 + idx.k..=idx.j {
        cols.push(format!("fam3_{l}"));
    }
    cols.push("psi_inst".into());
    cols.push("ledger_residual".into());
    cols.push("magnitude_residual".into());
    cols.join(",")
}

fn push_num(line: &mut String, v: f64) {
    use std::fmt::Write as _;
    let _ = write!(line, ",{v:.17e}");
}

impl RowWriter {
    pub fn create(path: &Path, idx: &IndexSet) -> std::io::Result<RowWriter> {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "{}", row_header(idx))?;
        Ok(RowWriter { out, idx: *idx })
    }

    pub fn write_row(&mut self, row: &SnapshotRow<'_>) -> std::io::Result<()> {
        let idx = &self.idx;
        let mut line = format!("{:.17e}", row.t);
        push_num(&mut line, row.one_minus_bt);
        push_num(&mut line, row.sup_norm);
        push_num(&mut line, row.l2_norm);
        push_num(&mut line, row.table.x_norm);
        push_num(&mut line, row.table.inf_weighted);
        push_num(&mut line, row.table.tail_ratio);
        line.push(',');
        line.push(if row.table.tail_ok { '1' } else { '0' });
        for l in 0..=2 * idx.m {
            push_num(&mut line, row.table.fam1(l));
        }
        for l in 2 * idx.m + 1..=2 * idx.m + 2 + idx.k {
            push_num(&mut line, row.table.fam2(l));
        }
        for l in 2 * idx.m + 3 + idx.k..=idx.j {
            push_num(&mut line, row.table.fam3(l));
        }
        push_num(&mut line, row.psi_inst);
        push_num(&mut line, row.ledger_residual);
        push_num(&mut line, row.magnitude_residual);
        writeln!(self.out, "{line}")
    }

    pub fn finish(mut self) -> std::io::Result<()> {
        self.out.flush()
    }
}

/// Write `key = value` lines; the order is the caller's.
pub fn write_summary(path: &Path, pairs: &[(String, String)]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for (k, v) in pairs {
        writeln!(out, "{k} = {v}")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use dnls_core::{C64, Field, Grid};
    use dnls_core::seminorm::seminorms;

    #[test]
    fn header_and_row_agree_on_the_column_count() {
        let idx = IndexSet::defaults(1).unwrap();
        let header = row_header(&idx);
        // 8 fixed + (2m+1) + (k+2) + (n) + 3 trailing = 8 + 5 + 3 + 2 + 3.
        let n_cols = header.split(',').count();
        assert_eq!(n_cols, 21);

        let grid = Grid::new(1, 10.0, 64).unwrap();
        let f = Field::from_fn(grid, 0.0, |x| C64::new((-x[0] * x[0]).exp(), 0.0));
        let table = seminorms(&f, &idx).unwrap();
        let dir = std::env::temp_dir();
        let path = dir.join(format!("dnls-rows-test-{}.csv", std::process::id()));
        let mut w = RowWriter::create(&path, &idx).unwrap();
        w.write_row(&SnapshotRow {
            t: 0.0,
            one_minus_bt: 1.0,
            sup_norm: 1.0,
            l2_norm: f.l2_norm(),
            table: &table,
            psi_inst: f64::NAN,
            ledger_residual: 0.0,
            magnitude_residual: f64::NAN,
        })
        .unwrap();
        w.finish().unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[0], header);
        let fields: Vec<&str> = lines[1].split(',').collect();
        assert_eq!(fields.len(), n_cols);
        // Full-precision round trip: the L2 norm survives parse -> format.
        let l2_col = header.split(',').position(|c| c == "l2_norm").unwrap();
        let parsed: f64 = fields[l2_col].parse().unwrap();
        assert_eq!(parsed.to_bits(), f.l2_norm().to_bits());
        // tail_ok is a bare 0/1, psi_inst column holds NaN literally.
        let ok_col = header.split(',').position(|c| c == "tail_ok").unwrap();
        assert!(fields[ok_col] == "0" || fields[ok_col] == "1");
        let psi_col = header.split(',').position(|c| c == "psi_inst").unwrap();
        assert!(fields[psi_col].parse::<f64>().unwrap().is_nan());
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn summary_writes_ordered_key_value_lines() {
        let dir = std::env::temp_dir();
        let path = dir.join(format!("dnls-summary-test-{}.txt", std::process::id()));
        write_summary(
            &path,
            &[
                ("status".into(), "completed".into()),
                ("steps".into(), "123".into()),
            ],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "status = completed\nsteps = 123\n");
        std::fs::remove_file(&path).ok();
    }
}
