//! CSV tables with a `#` metadata header, gnuplot scripts, atomic writes.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use hetnet_core::Config;
use tempfile::NamedTempFile;

/// One output file, fully rendered before anything touches the disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub file_name: String,
    pub contents: String,
}

#[derive(Debug, Clone)]
pub struct Metadata {
    pub command: String,
    pub experiment: String,
    pub git_revision: String,
    pub seed: u64,
    pub drops: u64,
    pub fields: Vec<(String, String)>,
    pub config: Config,
}

#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(columns: impl IntoIterator<Item = S>) -> Self {
        Table { columns: columns.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// 1-based column index, as gnuplot counts.
    pub fn col(&self, name: &str) -> usize {
        1 + self.columns.iter().position(|c| c == name).unwrap_or_else(|| panic!("no column `{name}`"))
    }
}

pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        x.to_string()
    } else {
        String::new()
    }
}

pub fn render_csv(meta: &Metadata, table: &Table) -> Result<String> {
    let mut s = String::new();
    writeln!(s, "# hetnet {}", meta.command)?;
    writeln!(s, "# experiment = {}", meta.experiment)?;
    writeln!(s, "# git_revision = {}", meta.git_revision)?;
    writeln!(s, "# seed = {}", meta.seed)?;
    writeln!(s, "# drops = {}", meta.drops)?;
    for (k, v) in &meta.fields {
        writeln!(s, "# {k} = {v}")?;
    }
    for line in meta.config.serialize().lines() {
        writeln!(s, "# config {line}")?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&table.columns)?;
    for row in &table.rows {
        w.write_record(row)?;
    }
    s.push_str(&String::from_utf8(w.into_inner()?)?);
    Ok(s)
}

#[derive(Debug, Clone)]
pub struct Curve {
    pub x: usize,
    pub y: usize,
    /// `(column, value)` pairs a row must match.
    pub filters: Vec<(usize, String)>,
    /// Plot only rows whose column holds `1`.
    pub flag: Option<usize>,
    pub title: String,
    pub style: &'static str,
}

#[derive(Debug, Clone)]
pub struct Plot {
    pub xlabel: String,
    pub ylabel: String,
    pub logx: bool,
    pub curves: Vec<Curve>,
}

fn gp_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// A gnuplot script that reads `csv_name` from its own directory and nothing else.
pub fn render_gnuplot(csv_name: &str, plot: &Plot) -> String {
    let stem = csv_name.trim_end_matches(".csv");
    let mut s = String::new();
    let _ = writeln!(s, "# gnuplot script; regenerates {stem}.png from {csv_name}");
    let _ = writeln!(s, "set datafile separator ','");
    let _ = writeln!(s, "set datafile commentschars '#'");
    let _ = writeln!(s, "set terminal pngcairo size 960,640");
    let _ = writeln!(s, "set output {}", gp_quote(&format!("{stem}.png")));
    let _ = writeln!(s, "set xlabel {}", gp_quote(&plot.xlabel));
    let _ = writeln!(s, "set ylabel {}", gp_quote(&plot.ylabel));
    if plot.logx {
        let _ = writeln!(s, "set logscale x");
    }
    let _ = writeln!(s, "set key outside right");
    let _ = writeln!(s, "set grid");
    let parts: Vec<String> = plot
        .curves
        .iter()
        .map(|c| {
            let mut cond: Vec<String> =
                c.filters.iter().map(|(col, v)| format!("strcol({col}) eq {}", gp_quote(v))).collect();
            if let Some(f) = c.flag {
                cond.push(format!("column({f}) == 1"));
            }
            let y = if cond.is_empty() {
                format!("(column({}))", c.y)
            } else {
                format!("(({}) ? column({}) : NaN)", cond.join(" && "), c.y)
            };
            format!("{} every ::1 using {}:{y} with {} title {}", gp_quote(csv_name), c.x, c.style, gp_quote(&c.title))
        })
        .collect();
    let _ = writeln!(s, "plot \\\n    {}", parts.join(", \\\n    "));
    s
}

/// Stages every artifact in a temporary file inside `dir`, then renames them
/// into place. Nothing is written unless every artifact was staged.
pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut staged = Vec::with_capacity(artifacts.len());
    for a in artifacts {
        let mut tmp = NamedTempFile::new_in(dir).with_context(|| format!("cannot stage in {}", dir.display()))?;
        tmp.write_all(a.contents.as_bytes())?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, dir.join(&a.file_name)));
    }
    let mut out = Vec::with_capacity(staged.len());
    for (tmp, path) in staged {
        tmp.persist(&path).with_context(|| format!("cannot write {}", path.display()))?;
        out.push(path);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_header_and_quoting() {
        let meta = Metadata {
            command: "pmf".into(),
            experiment: "x".into(),
            git_revision: "r".into(),
            seed: 3,
            drops: 10,
            fields: vec![("axis".into(), "b".into())],
            config: Config::default(),
        };
        let mut t = Table::new(["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        let s = render_csv(&meta, &t).unwrap();
        assert!(s.starts_with("# hetnet pmf\n# experiment = x\n"));
        assert!(s.contains("# config lambda1 = 0.0001\n"));
        assert!(s.ends_with("a,b\n1,\"x,y\"\n"));
        assert_eq!(t.col("b"), 2);
    }

    #[test]
    fn script_mentions_only_its_csv() {
        let plot = Plot {
            xlabel: "x".into(),
            ylabel: "y".into(),
            logx: true,
            curves: vec![Curve {
                x: 1,
                y: 3,
                filters: vec![(2, "full".into())],
                flag: None,
                title: "t".into(),
                style: "lines",
            }],
        };
        let s = render_gnuplot("run.csv", &plot);
        assert!(s.contains("\"run.csv\" every ::1 using 1:((strcol(2) eq \"full\") ? column(3) : NaN)"));
        assert!(s.contains("set output \"run.png\""));
    }

    #[test]
    fn writes_into_fresh_directory() {
        let dir = tempfile::tempdir().unwrap();
        let target = dir.path().join("a/b");
        let arts = vec![Artifact { file_name: "f.csv".into(), contents: "1\n".into() }];
        let paths = write_all(&target, &arts).unwrap();
        assert_eq!(std::fs::read_to_string(&paths[0]).unwrap(), "1\n");
        assert_eq!(std::fs::read_dir(&target).unwrap().count(), 1);
    }
}
