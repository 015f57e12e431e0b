//! Multi-seed runs with per-seed CSV streams and a summary table.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::{max_deviation, metrics_row, weighted_average, AnalysisError, MetricsRow};
use crate::engine::{run, EngineError, MetricsSink, Simulator};
use crate::graph::{perron_left_eigenvector, GraphError, PERRON_TOL};

use super::config::{ConfigError, Experiment, RunConfig};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const SUMMARY_HEADER: &str =
    "seed,k,cons_err_x,cons_err_y,ne_err_x,ne_err_y,max_dev_x,max_dev_y,bound_violations";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("seed {seed}: {source}")]
    Engine {
        seed: u64,
        #[source]
        source: EngineError,
    },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("thread pool: {0}")]
    Pool(String),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Streams metrics rows as CSV lines.
pub struct CsvSink<W: Write> {
    out: W,
}

impl<W: Write> CsvSink<W> {
    /// Writes the header immediately.
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "{}", MetricsRow::CSV_HEADER)?;
        Ok(Self { out })
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

impl<W: Write> MetricsSink for CsvSink<W> {
    fn record(&mut self, row: &MetricsRow) -> Result<(), String> {
        writeln!(self.out, "{}", row.to_csv_line()).map_err(|e| e.to_string())
    }
}

/// Final state of one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub last: MetricsRow,
    pub max_dev_x: f64,
    pub max_dev_y: f64,
    pub bound_violations: usize,
}

impl SeedResult {
    fn csv_line(&self) -> String {
        format!(
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
            self.seed,
            self.last.k,
            self.last.cons_err_x,
            self.last.cons_err_y,
            self.last.ne_err_x,
            self.last.ne_err_y,
            self.max_dev_x,
            self.max_dev_y,
            self.bound_violations
        )
    }
}

/// Runs a single seed, streaming rows into `sink`.
pub fn run_seed(
    cfg: &RunConfig,
    exp: &Experiment,
    seed: u64,
    sink: &mut dyn MetricsSink,
) -> Result<SeedResult, ExperimentError> {
    let engine = |source| ExperimentError::Engine { seed, source };
    let sim = Simulator::new(&exp.game, &exp.topology, &exp.params, exp.schedule, seed)
        .map_err(engine)?;
    let out = run(&sim, &exp.init, cfg.rounds, cfg.metrics_every, sink).map_err(engine)?;

    let rho1 = perron_left_eigenvector(&exp.topology.a1, PERRON_TOL)?;
    let rho2 = perron_left_eigenvector(&exp.topology.a2, PERRON_TOL)?;
    let xs: Vec<Vec<f64>> = out.states1.into_iter().map(|s| s.z).collect();
    let ys: Vec<Vec<f64>> = out.states2.into_iter().map(|s| s.z).collect();
    let (x_star, y_star) = exp.game.equilibrium().ok_or(ExperimentError::Engine {
        seed,
        source: EngineError::MissingEquilibrium,
    })?;
    let last = metrics_row(
        out.rounds,
        exp.schedule.alpha(out.rounds - 1),
        &xs,
        &ys,
        &rho1,
        &rho2,
        x_star,
        y_star,
        out.max_residual,
    )?;
    let x_bar = weighted_average(&xs, &rho1)?;
    let y_bar = weighted_average(&ys, &rho2)?;
    Ok(SeedResult {
        seed,
        last,
        max_dev_x: max_deviation(&xs, &x_bar),
        max_dev_y: max_deviation(&ys, &y_bar),
        bound_violations: out.bound_violations,
    })
}

/// Results of every seed, in the configured seed order.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub seeds: Vec<SeedResult>,
}

fn order_stat(mut v: Vec<f64>, which: Stat) -> f64 {
    v.sort_by(f64::total_cmp);
    match which {
        Stat::Min => v[0],
        Stat::Max => v[v.len() - 1],
        Stat::Median => {
            let n = v.len();
            if n % 2 == 1 {
                v[n / 2]
            } else {
                0.5 * (v[n / 2 - 1] + v[n / 2])
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Stat {
    Median,
    Min,
    Max,
}

impl ExperimentSummary {
    fn column(&self, f: impl Fn(&SeedResult) -> f64) -> Vec<f64> {
        self.seeds.iter().map(f).collect()
    }

    /// Median over seeds of the final `ne_err_x + ne_err_y`.
    pub fn median_final_ne(&self) -> f64 {
        order_stat(
            self.column(|s| s.last.ne_err_x + s.last.ne_err_y),
            Stat::Median,
        )
    }

    /// Summary table: one line per seed, then median, min and max rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        s.push_str(SUMMARY_HEADER);
        s.push('\n');
        for r in &self.seeds {
            s.push_str(&r.csv_line());
            s.push('\n');
        }
        let cols: [fn(&SeedResult) -> f64; 7] = [
            |r| r.last.cons_err_x,
            |r| r.last.cons_err_y,
            |r| r.last.ne_err_x,
            |r| r.last.ne_err_y,
            |r| r.max_dev_x,
            |r| r.max_dev_y,
            |r| r.bound_violations as f64,
        ];
        let k = self.seeds.first().map_or(0, |r| r.last.k);
        for (name, stat) in [
            ("median", Stat::Median),
            ("min", Stat::Min),
            ("max", Stat::Max),
        ] {
            let vals: Vec<String> = cols
                .iter()
                .map(|c| format!("{:.16e}", order_stat(self.column(c), stat)))
                .collect();
            s.push_str(&format!("{name},{k},{}\n", vals.join(",")));
        }
        s
    }
}

/// File name of the metrics stream for `seed`.
pub fn seed_file_name(seed: u64) -> String {
    format!("seed_{seed}.csv")
}

/// Runs every seed of `cfg` and writes `seed_<s>.csv` plus [`SUMMARY_FILE`]
/// into `cfg.output_path`. `threads` caps the worker pool; `None` lets rayon
/// decide. Output bytes do not depend on the thread count.
pub fn run_experiment(
    cfg: &RunConfig,
    threads: Option<usize>,
) -> Result<ExperimentSummary, ExperimentError> {
    let exp = cfg.build()?;
    let dir = &cfg.output_path;
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    let results: Result<Vec<SeedResult>, ExperimentError> = pool.install(|| {
        cfg.seeds
            .par_iter()
            .map(|&seed| {
                let path = dir.join(seed_file_name(seed));
                let file = File::create(&path).map_err(io_err(&path))?;
                let mut sink = CsvSink::new(BufWriter::new(file)).map_err(io_err(&path))?;
                let result = run_seed(cfg, &exp, seed, &mut sink)?;
                sink.into_inner().flush().map_err(io_err(&path))?;
                Ok(result)
            })
            .collect()
    });
    let summary = ExperimentSummary { seeds: results? };
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, summary.to_csv()).map_err(io_err(&path))?;
    Ok(summary)
}
