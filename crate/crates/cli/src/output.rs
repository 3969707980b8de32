//! Result envelopes and plot-ready CSV files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::CliResult;

pub const VERSION: &str = env!("JUMPLD_VERSION");

/// Metadata embedded in every JSON output.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub version: &'static str,
    pub config_hash: String,
    pub seed: u64,
    pub threads: usize,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    command: &'a str,
    #[serde(flatten)]
    provenance: &'a Provenance,
    result: &'a T,
}

pub struct Sink {
    pub dir: PathBuf,
    pub provenance: Provenance,
    pub written: Vec<PathBuf>,
}

impl Sink {
    pub fn new(dir: &Path, provenance: Provenance) -> CliResult<Self> {
        fs::create_dir_all(dir)?;
        Ok(Sink {
            dir: dir.to_path_buf(),
            provenance,
            written: Vec::new(),
        })
    }

    pub fn json<T: Serialize>(&mut self, name: &str, command: &str, result: &T) -> CliResult<()> {
        let env = Envelope {
            command,
            provenance: &self.provenance,
            result,
        };
        let mut text = serde_json::to_string_pretty(&env).expect("results serialize");
        text.push('\n');
        let path = self.dir.join(name);
        fs::write(&path, text)?;
        self.written.push(path);
        Ok(())
    }

    pub fn csv<I>(&mut self, name: &str, header: &[String], rows: I) -> CliResult<()>
    where
        I: IntoIterator<Item = Vec<f64>>,
    {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for row in rows {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        self.written.push(path);
        Ok(())
    }
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// `t, x_1, ..., x_d` (or `t, w_1, ...`).
pub fn indexed_header(first: &str, prefix: &str, d: usize) -> Vec<String> {
    std::iter::once(first.to_string())
        .chain((1..=d).map(|i| format!("{prefix}_{i}")))
        .collect()
}

/// `(n, gap, ci)` rows.
pub fn gap_vs_n(sink: &mut Sink, rows: &[(f64, f64, f64)]) -> CliResult<()> {
    sink.csv(
        "gap_vs_n.csv",
        &header(&["n", "gap", "ci"]),
        rows.iter().map(|&(n, g, c)| vec![n, g, c]),
    )
}

/// `(target, rate, exact)` rows.
pub fn rate_vs_target(sink: &mut Sink, rows: &[(f64, f64, f64)]) -> CliResult<()> {
    sink.csv(
        "rate_vs_target.csv",
        &header(&["target", "rate", "exact"]),
        rows.iter().map(|&(y, r, e)| vec![y, r, e]),
    )
}

/// Long-form `(t, x, residual)`; `x_1, x_2` in two dimensions.
pub fn residual_heatmap(sink: &mut Sink, points: &[(f64, Vec<f64>, f64)]) -> CliResult<()> {
    let d = points.first().map_or(1, |p| p.1.len());
    let mut head = vec!["t".to_string()];
    if d == 1 {
        head.push("x".into());
    } else {
        head.extend((1..=d).map(|i| format!("x_{i}")));
    }
    head.push("residual".into());
    sink.csv(
        "residual_heatmap.csv",
        &head,
        points.iter().map(|(t, x, r)| {
            let mut row = vec![*t];
            row.extend(x);
            row.push(*r);
            row
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sink(tag: &str) -> Sink {
        let dir = std::env::temp_dir().join(format!("jumpld-output-{tag}-{}", std::process::id()));
        Sink::new(
            &dir,
            Provenance {
                version: VERSION,
                config_hash: String::new(),
                seed: 0,
                threads: 1,
            },
        )
        .unwrap()
    }

    #[test]
    fn empty_tables_have_headers_only() {
        let mut s = sink("empty");
        gap_vs_n(&mut s, &[]).unwrap();
        residual_heatmap(&mut s, &[]).unwrap();
        assert_eq!(fs::read_to_string(s.dir.join("gap_vs_n.csv")).unwrap(), "n,gap,ci\n");
        assert_eq!(fs::read_to_string(s.dir.join("residual_heatmap.csv")).unwrap(), "t,x,residual\n");
        fs::remove_dir_all(&s.dir).unwrap();
    }

    #[test]
    fn gap_table_has_three_columns() {
        let mut s = sink("gap");
        gap_vs_n(&mut s, &[(2.0, 0.1, 0.01), (20.0, 0.02, 0.005)]).unwrap();
        let text = fs::read_to_string(s.dir.join("gap_vs_n.csv")).unwrap();
        assert_eq!(text, "n,gap,ci\n2,0.1,0.01\n20,0.02,0.005\n");
        fs::remove_dir_all(&s.dir).unwrap();
    }
}
