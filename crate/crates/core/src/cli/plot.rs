use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::eval::CURVE_HEADER;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("{0}: file not found")]
    Missing(PathBuf),
    #[error("{0}: no data")]
    NoData(PathBuf),
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

struct Series {
    method: String,
    points: Vec<(usize, String, Option<String>)>,
}

fn read_curves(path: &Path) -> Result<Vec<Series>, PlotError> {
    if !path.is_file() {
        return Err(PlotError::Missing(path.to_path_buf()));
    }
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == CURVE_HEADER => {}
        Some(_) => {
            return Err(PlotError::Parse {
                path: path.to_path_buf(),
                line: 1,
                message: "unexpected header".into(),
            })
        }
        None => return Err(PlotError::NoData(path.to_path_buf())),
    }
    let mut series: Vec<Series> = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = |message: &str| PlotError::Parse {
            path: path.to_path_buf(),
            line: k + 2,
            message: message.into(),
        };
        if f.len() != 6 {
            return Err(bad("expected 6 fields"));
        }
        let n: usize = f[1].parse().map_err(|_| bad("bad n_labeled"))?;
        let dist = (!f[3].is_empty()).then(|| f[3].to_string());
        match series.iter_mut().find(|s| s.method == f[0]) {
            Some(s) => s.points.push((n, f[2].to_string(), dist)),
            None => series.push(Series {
                method: f[0].to_string(),
                points: vec![(n, f[2].to_string(), dist)],
            }),
        }
    }
    if series.is_empty() {
        return Err(PlotError::NoData(path.to_path_buf()));
    }
    Ok(series)
}

fn script(series: &[Series], title: &str, ylabel: &str, output: &str, pick: impl Fn(&(usize, String, Option<String>)) -> Option<String>) -> String {
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "set terminal pngcairo size 800,600").unwrap();
    writeln!(w, "set output '{output}'").unwrap();
    writeln!(w, "set title '{title}'").unwrap();
    writeln!(w, "set xlabel 'labeled points'").unwrap();
    writeln!(w, "set ylabel '{ylabel}'").unwrap();
    writeln!(w, "set key top right").unwrap();
    for (i, s) in series.iter().enumerate() {
        writeln!(w, "$d{i} << EOD").unwrap();
        for p in &s.points {
            if let Some(v) = pick(p) {
                writeln!(w, "{} {v}", p.0).unwrap();
            }
        }
        writeln!(w, "EOD").unwrap();
    }
    let plots: Vec<String> = series
        .iter()
        .enumerate()
        .map(|(i, s)| format!("$d{i} using 1:2 with linespoints title '{}'", s.method))
        .collect();
    writeln!(w, "plot {}", plots.join(", \\\n     ")).unwrap();
    out
}

/// Writes gnuplot scripts (`error.gp`, and `dist.gp` when distances are
/// present) with the curve data inlined. Returns the written paths.
pub fn emit_plots(curves: &Path, out_dir: &Path) -> Result<Vec<PathBuf>, PlotError> {
    let series = read_curves(curves)?;
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let error = out_dir.join("error.gp");
    fs::write(
        &error,
        script(&series, "misclassification error", "mean error", "error.png", |p| Some(p.1.clone())),
    )?;
    written.push(error);
    if series.iter().any(|s| s.points.iter().any(|p| p.2.is_some())) {
        let dist = out_dir.join("dist.gp");
        fs::write(
            &dist,
            script(&series, "boundary distance", "mean Dist", "dist.png", |p| p.2.clone()),
        )?;
        written.push(dist);
    }
    Ok(written)
}
