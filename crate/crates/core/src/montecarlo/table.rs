//! Tabular results and log-log slope fitting.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::designs::SchemeKind;
use crate::states::{LossKind, MeasureKind};

pub const CSV_HEADER: &str = "scheme,loss,measure,r,theta,phi,N,mean,stderr,n_samples";

/// Estimator behaviour counted across all solves of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EstimatorStats {
    pub solves: u64,
    pub left_ball: u64,
    pub fallback_steps: u64,
    pub not_converged: u64,
    pub newton_iterations: u64,
}

impl EstimatorStats {
    pub fn merge(&mut self, o: &EstimatorStats) {
        self.solves += o.solves;
        self.left_ball += o.left_ball;
        self.fallback_steps += o.fallback_steps;
        self.not_converged += o.not_converged;
        self.newton_iterations += o.newton_iterations;
    }
}

/// One `(scheme, loss, context, N)` aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    pub scheme: SchemeKind,
    pub loss: LossKind,
    /// State distribution for averaged runs.
    pub measure: Option<MeasureKind>,
    /// Bloch radius for pointwise and purity-sweep runs.
    pub r: Option<f64>,
    pub theta: Option<f64>,
    pub phi: Option<f64>,
    pub n: usize,
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl LossRow {
    fn key(&self) -> (SchemeKind, LossKind, Option<MeasureKind>, [Option<u64>; 3], usize) {
        (
            self.scheme,
            self.loss,
            self.measure,
            [self.r.map(f64::to_bits), self.theta.map(f64::to_bits), self.phi.map(f64::to_bits)],
            self.n,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunMeta {
    pub seed: u64,
    /// `key=value` echo of the run configuration.
    pub config: String,
    pub config_hash: u64,
    pub stats: EstimatorStats,
    pub wall_seconds: f64,
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("duplicate row for {0}")]
    DuplicateRow(String),
    #[error("malformed CSV at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossTable {
    pub rows: Vec<LossRow>,
    pub meta: RunMeta,
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

impl LossTable {
    pub fn push(&mut self, row: LossRow) -> Result<(), TableError> {
        if self.rows.iter().any(|r| r.key() == row.key()) {
            return Err(TableError::DuplicateRow(format!(
                "{}/{}/N={}",
                row.scheme, row.loss, row.n
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    /// Append another table's rows; metadata counters are merged.
    pub fn extend(&mut self, other: LossTable) -> Result<(), TableError> {
        for row in other.rows {
            self.push(row)?;
        }
        self.meta.stats.merge(&other.meta.stats);
        self.meta.wall_seconds += other.meta.wall_seconds;
        Ok(())
    }

    /// Rows for one series, ordered by `N`.
    pub fn series(&self, scheme: SchemeKind, loss: LossKind) -> Vec<&LossRow> {
        let mut out: Vec<_> = self
            .rows
            .iter()
            .filter(|r| r.scheme == scheme && r.loss == loss)
            .collect();
        out.sort_by_key(|r| r.n);
        out
    }

    pub fn at(&self, scheme: SchemeKind, loss: LossKind, n: usize) -> Option<&LossRow> {
        self.rows
            .iter()
            .find(|r| r.scheme == scheme && r.loss == loss && r.n == n)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.scheme,
                r.loss,
                r.measure.map(|m| m.as_str()).unwrap_or(""),
                opt(r.r),
                opt(r.theta),
                opt(r.phi),
                r.n,
                r.mean,
                r.stderr,
                r.n_samples
            );
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<LossTable, TableError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == CSV_HEADER => {}
            _ => {
                return Err(TableError::Parse {
                    line: 1,
                    msg: "missing header".into(),
                })
            }
        }
        let mut table = LossTable::default();
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let err = |msg: String| TableError::Parse { line: i + 1, msg };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 10 {
                return Err(err(format!("expected 10 fields, got {}", f.len())));
            }
            let optf = |s: &str| -> Result<Option<f64>, TableError> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|e| err(format!("{e}")))
                }
            };
            table.push(LossRow {
                scheme: f[0].parse().map_err(err)?,
                loss: f[1].parse().map_err(err)?,
                measure: if f[2].is_empty() {
                    None
                } else {
                    Some(f[2].parse().map_err(err)?)
                },
                r: optf(f[3])?,
                theta: optf(f[4])?,
                phi: optf(f[5])?,
                n: f[6].parse().map_err(|e| err(format!("{e}")))?,
                mean: f[7].parse().map_err(|e| err(format!("{e}")))?,
                stderr: f[8].parse().map_err(|e| err(format!("{e}")))?,
                n_samples: f[9].parse().map_err(|e| err(format!("{e}")))?,
            })?;
        }
        Ok(table)
    }

    pub fn meta_text(&self) -> String {
        let m = &self.meta;
        let s = &m.stats;
        format!(
            "seed={}\nconfig={}\nconfig_hash={:016x}\nversion={}\nwall_seconds={:.3}\n\
             mle_solves={}\nmle_left_ball={}\nmle_fallback_steps={}\nmle_not_converged={}\nmle_newton_iterations={}\n",
            m.seed,
            m.config,
            m.config_hash,
            env!("CARGO_PKG_VERSION"),
            m.wall_seconds,
            s.solves,
            s.left_ball,
            s.fallback_steps,
            s.not_converged,
            s.newton_iterations
        )
    }

    /// Write `path` and the sidecar `path.meta`.
    pub fn write(&self, path: &Path) -> Result<(), TableError> {
        fs::write(path, self.to_csv())?;
        fs::write(meta_path(path), self.meta_text())?;
        Ok(())
    }
}

/// `<out>.meta`
pub fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta");
    os.into()
}

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 3 points in the window, found {0}")]
    InsufficientPoints(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Weighted least squares of `ln y` on `ln N`.
///
/// Weights are `(mean/stderr)²`, the inverse variance of `ln mean`; if any
/// point has zero standard error all weights are equal. The reported slope
/// error uses the weighted residual scatter.
pub fn fit_points(points: &[(f64, f64, f64)]) -> Result<SlopeFit, FitError> {
    let pts: Vec<_> = points.iter().filter(|p| p.0 > 0.0 && p.1 > 0.0).collect();
    if pts.len() < 3 {
        return Err(FitError::InsufficientPoints(pts.len()));
    }
    let uniform = pts.iter().any(|p| !(p.2 > 0.0));
    let w: Vec<f64> = pts
        .iter()
        .map(|p| if uniform { 1.0 } else { (p.1 / p.2).powi(2) })
        .collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let sw: f64 = w.iter().sum();
    let xbar = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let ybar = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x - xbar).powi(2)).sum();
    let sxy: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&w)
        .map(|((x, y), w)| w * (x - xbar) * (y - ybar))
        .sum();
    let slope = sxy / sxx;
    let intercept = ybar - slope * xbar;
    let rss: f64 = xs
        .iter()
        .zip(&ys)
        .zip(&w)
        .map(|((x, y), w)| w * (y - intercept - slope * x).powi(2))
        .sum();
    let dof = (pts.len() - 2) as f64;
    let stderr = ((rss / dof) / sxx).sqrt();
    Ok(SlopeFit {
        slope,
        stderr,
        intercept,
        points: pts.len(),
    })
}

/// Slope of one series over checkpoints `lo ≤ N ≤ hi`.
pub fn fit_loglog_slope(
    table: &LossTable,
    scheme: SchemeKind,
    loss: LossKind,
    window: (usize, usize),
) -> Result<SlopeFit, FitError> {
    let pts: Vec<_> = table
        .series(scheme, loss)
        .into_iter()
        .filter(|r| r.n >= window.0 && r.n <= window.1)
        .map(|r| (r.n as f64, r.mean, r.stderr))
        .collect();
    fit_points(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scheme: SchemeKind, n: usize, mean: f64, stderr: f64) -> LossRow {
        LossRow {
            scheme,
            loss: LossKind::If,
            measure: Some(MeasureKind::Bures),
            r: None,
            theta: None,
            phi: None,
            n,
            mean,
            stderr,
            n_samples: 10,
        }
    }

    fn power_table(c: f64, exponent: f64, with_err: bool) -> LossTable {
        let mut t = LossTable::default();
        for n in [100, 200, 300, 500, 700, 1000] {
            let y = c * (n as f64).powf(exponent);
            t.push(row(SchemeKind::Aif, n, y, if with_err { 0.05 * y } else { 0.0 }))
                .unwrap();
        }
        t
    }

    #[test]
    fn exact_power_laws() {
        let fit = fit_loglog_slope(&power_table(3.0, -1.0, false), SchemeKind::Aif, LossKind::If, (1, 10_000)).unwrap();
        assert!((fit.slope + 1.0).abs() <= 1e-12);
        assert!(fit.stderr <= 1e-6);
        let fit = fit_loglog_slope(&power_table(0.2, -0.75, true), SchemeKind::Aif, LossKind::If, (1, 10_000)).unwrap();
        assert!((fit.slope + 0.75).abs() <= 1e-12);
    }

    #[test]
    fn window_and_insufficient_points() {
        let t = power_table(1.0, -1.0, true);
        assert_eq!(
            fit_loglog_slope(&t, SchemeKind::Aif, LossKind::If, (600, 1000)),
            Err(FitError::InsufficientPoints(2))
        );
        assert_eq!(
            fit_loglog_slope(&t, SchemeKind::Xyz, LossKind::If, (1, 1000)),
            Err(FitError::InsufficientPoints(0))
        );
    }

    #[test]
    fn duplicate_rows_rejected() {
        let mut t = LossTable::default();
        t.push(row(SchemeKind::Xyz, 10, 1.0, 0.1)).unwrap();
        assert!(matches!(t.push(row(SchemeKind::Xyz, 10, 2.0, 0.1)), Err(TableError::DuplicateRow(_))));
        t.push(row(SchemeKind::Urs, 10, 2.0, 0.1)).unwrap();
    }

    #[test]
    fn csv_round_trip() {
        let mut t = power_table(0.37, -0.8, true);
        t.push(LossRow {
            scheme: SchemeKind::Xyz,
            loss: LossKind::Hs,
            measure: None,
            r: Some(0.99),
            theta: Some(std::f64::consts::FRAC_PI_4),
            phi: Some(0.1),
            n: 3,
            mean: 1.0 / 3.0,
            stderr: 1e-17,
            n_samples: 200,
        })
        .unwrap();
        let text = t.to_csv();
        assert!(text.starts_with(CSV_HEADER));
        let back = LossTable::from_csv(&text).unwrap();
        assert_eq!(back.rows, t.rows);
        assert!(LossTable::from_csv("nope\n").is_err());
    }

    #[test]
    fn meta_path_appends_suffix() {
        assert_eq!(meta_path(Path::new("out/a.csv")), Path::new("out/a.csv.meta"));
    }
}
