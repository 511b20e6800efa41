use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::config::Algorithm;
use super::runner::{ResultRow, Split};
use crate::error::{Error, Result};
use crate::metrics::MeanStd;
use crate::nn::ModelKind;

pub const RESULTS_HEADER: &str = "algorithm,model,seed,round,split,f1,pr_auc,ce,cr,kd,reg";
pub const RESULTS_FILE: &str = "results.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const CURVES_FILE: &str = "curves.csv";

/// Paths written by [`write_results`].
#[derive(Clone, Debug)]
pub struct ResultFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub curves: PathBuf,
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// The results table as text: a `# generated_at=` metadata line, the header,
/// then one line per row. Floats are written losslessly.
pub fn format_results(rows: &[ResultRow]) -> String {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let mut out = format!("# generated_at={stamp}\n{RESULTS_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.algorithm.name(),
            r.model.name(),
            r.seed,
            r.round,
            r.split.name(),
            r.f1,
            r.pr_auc,
            r.ce,
            r.cr,
            r.kd,
            r.reg
        ));
    }
    out
}

/// The last round's test row of every (algorithm, model, seed).
pub fn final_test_rows(rows: &[ResultRow]) -> Vec<&ResultRow> {
    let mut last: BTreeMap<(Algorithm, ModelKind, u64), &ResultRow> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.split == Split::Test) {
        let e = last.entry((r.algorithm, r.model, r.seed)).or_insert(r);
        if r.round >= e.round {
            *e = r;
        }
    }
    last.into_values().collect()
}

/// Mean ± sample std of final test F1 and PR-AUC per (algorithm, model).
pub fn format_summary(rows: &[ResultRow]) -> Result<String> {
    let mut groups: BTreeMap<(Algorithm, ModelKind), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in final_test_rows(rows) {
        let g = groups.entry((r.algorithm, r.model)).or_default();
        g.0.push(r.f1);
        g.1.push(r.pr_auc);
    }
    let mut out = String::from("algorithm\tmodel\tseeds\tf1\tpr_auc\n");
    for ((a, m), (f1, auc)) in groups {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            a.name(),
            m.name(),
            f1.len(),
            MeanStd::of(&f1)?,
            MeanStd::of(&auc)?
        ));
    }
    Ok(out)
}

/// Mean test F1 per round for each (algorithm, model).
pub fn format_curves(rows: &[ResultRow]) -> String {
    let mut acc: BTreeMap<(Algorithm, ModelKind, usize), Vec<f64>> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.split == Split::Test) {
        acc.entry((r.algorithm, r.model, r.round)).or_default().push(r.f1);
    }
    let mut out = String::from("algorithm,model,round,mean_test_f1\n");
    for ((a, m, round), mut v) in acc {
        v.sort_by(f64::total_cmp);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        out.push_str(&format!("{},{},{round},{mean}\n", a.name(), m.name()));
    }
    out
}

/// Writes the results table, the summary and the curve data into `dir`.
pub fn write_results(rows: &[ResultRow], dir: &Path) -> Result<ResultFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ResultFiles {
        results: dir.join(RESULTS_FILE),
        summary: dir.join(SUMMARY_FILE),
        curves: dir.join(CURVES_FILE),
    };
    write_file(&files.results, &format_results(rows))?;
    let summary = if rows.is_empty() {
        String::from("algorithm\tmodel\tseeds\tf1\tpr_auc\n")
    } else {
        format_summary(rows)?
    };
    write_file(&files.summary, &summary)?;
    write_file(&files.curves, &format_curves(rows))?;
    Ok(files)
}

fn field<T: std::str::FromStr>(line: usize, name: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Input(format!("line {line}: bad {name} `{raw}`")))
}

/// Reads a results table, skipping `#` metadata lines.
pub fn read_results(path: &Path) -> Result<Vec<ResultRow>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !header_seen {
            if line != RESULTS_HEADER {
                return Err(Error::Input(format!("line {n}: unexpected header `{line}`")));
            }
            header_seen = true;
            continue;
        }
        let v: Vec<&str> = line.split(',').collect();
        if v.len() != 11 {
            return Err(Error::Input(format!("line {n}: expected 11 fields, found {}", v.len())));
        }
        rows.push(ResultRow {
            algorithm: field(n, "algorithm", v[0])?,
            model: field(n, "model", v[1])?,
            seed: field(n, "seed", v[2])?,
            round: field(n, "round", v[3])?,
            split: field(n, "split", v[4])?,
            f1: field(n, "f1", v[5])?,
            pr_auc: field(n, "pr_auc", v[6])?,
            ce: field(n, "ce", v[7])?,
            cr: field(n, "cr", v[8])?,
            kd: field(n, "kd", v[9])?,
            reg: field(n, "reg", v[10])?,
        });
    }
    if !header_seen {
        return Err(Error::Input(format!("{}: missing header", path.display())));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(algorithm: Algorithm, seed: u64, round: usize, split: Split, f1: f64) -> ResultRow {
        ResultRow {
            algorithm,
            model: ModelKind::Mlp,
            seed,
            round,
            split,
            f1,
            pr_auc: 0.5,
            ce: 0.1 + 0.2,
            cr: 1e-17,
            kd: 0.0,
            reg: 3.0e-5,
        }
    }

    #[test]
    fn empty_rows_give_header_only() {
        let text = format_results(&[]);
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines[0].starts_with("# generated_at="));
        assert_eq!(&lines[1..], &[RESULTS_HEADER]);
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rows = vec![
            row(Algorithm::FedMobile, 1, 1, Split::Train, 0.25),
            row(Algorithm::FedMobile, 1, 1, Split::Test, 1.0 / 3.0),
            row(Algorithm::FedAvg, 2, 7, Split::Val, 0.0),
        ];
        let files = write_results(&rows, dir.path()).unwrap();
        assert_eq!(read_results(&files.results).unwrap(), rows);
    }

    #[test]
    fn summary_uses_last_test_round() {
        let rows = vec![
            row(Algorithm::FedMobile, 0, 1, Split::Test, 0.1),
            row(Algorithm::FedMobile, 0, 2, Split::Test, 0.7),
            row(Algorithm::FedMobile, 1, 2, Split::Test, 0.9),
            row(Algorithm::FedMobile, 1, 2, Split::Val, 0.2),
        ];
        let s = format_summary(&rows).unwrap();
        assert!(s.contains("fedmobile\tmlp\t2\t0.800 ± 0.141"), "{s}");
        let c = format_curves(&rows);
        assert!(c.contains("fedmobile,mlp,1,0.1\n"));
        assert!(c.contains("fedmobile,mlp,2,0.8"));
    }

    #[test]
    fn bad_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        fs::write(&p, "wrong,header\n").unwrap();
        assert!(read_results(&p).is_err());
        fs::write(&p, format!("{RESULTS_HEADER}\nfedavg,mlp,x,1,test,0,0,0,0,0,0\n")).unwrap();
        assert!(read_results(&p).is_err());
        assert!(read_results(&dir.path().join("missing.csv")).is_err());
    }
}
