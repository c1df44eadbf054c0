//! Experiment runners: the ten-cell line scenario and a synthetic grid
//! MAPE study.

use std::fmt::Write as _;

use cgmot::oracles::{analytic_wb_line, mape, WbLineSolution};
use cgmot::{
    build_grid_rate_matrix, expm_action, interpolate_path, CtmcModel, Histogram, PathInterpolationProblem, PathKernel,
    SolverOptions,
};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};
use rayon::prelude::*;

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticLineConfig {
    pub n: usize,
    pub mass: f64,
    /// Adjacent-cell transition rate of the CTMC.
    pub q: f64,
    pub times: Vec<f64>,
    /// Regularization of the soft barycenter column.
    pub epsilon: f64,
    pub options: SolverOptions,
}

impl Default for SyntheticLineConfig {
    fn default() -> Self {
        Self {
            n: 10,
            mass: 100.0,
            q: 1.0,
            times: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            epsilon: 1.0,
            options: SolverOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineRow {
    pub t: f64,
    pub proposed: Histogram,
    pub wb_hard: WbLineSolution,
    pub wb_soft: Histogram,
}

/// Interpolates between all mass in the first cell and all mass in the
/// last, next to the closed-form barycenters with and without entropy.
pub fn run_synthetic_line(cfg: &SyntheticLineConfig) -> CliResult<Vec<LineRow>> {
    if cfg.n < 2 {
        return Err(CliError::Config(format!("line needs at least 2 cells, got {}", cfg.n)));
    }
    let a = Histogram::point_mass(cfg.n, 0, cfg.mass)?;
    let b = Histogram::point_mass(cfg.n, cfg.n - 1, cfg.mass)?;
    let q = build_grid_rate_matrix(1, cfg.n, cfg.q)?;
    let mut rows = Vec::with_capacity(cfg.times.len());
    for &t in &cfg.times {
        let problem = PathInterpolationProblem::new(a.clone(), b.clone(), PathKernel::Ctmc { q: q.clone(), t }, cfg.options)?;
        let result = interpolate_path(&problem)?;
        if !result.report.converged {
            return Err(cgmot::Error::NotConverged { iterations: result.report.iterations, residual: result.report.residual }.into());
        }
        let wb_hard = analytic_wb_line(cfg.n, cfg.mass, t, 0.0)?;
        let wb_soft = match analytic_wb_line(cfg.n, cfg.mass, t, cfg.epsilon)? {
            WbLineSolution::Unique(h) => h,
            WbLineSolution::NonUnique => unreachable!("positive epsilon has a unique barycenter"),
        };
        rows.push(LineRow { t, proposed: result.c, wb_hard, wb_soft });
    }
    Ok(rows)
}

/// Long-format TSV: one line per `(t, cell)`. The hard-barycenter column
/// reads `nonunique` where every histogram is optimal.
pub fn line_table_tsv(rows: &[LineRow]) -> String {
    let mut out = String::from("t\tcell\tproposed\twb_eps0\twb_eps1\n");
    for r in rows {
        for i in 0..r.proposed.len() {
            let hard = match &r.wb_hard {
                WbLineSolution::Unique(h) => format!("{:.10}", h.values()[i]),
                WbLineSolution::NonUnique => "nonunique".to_string(),
            };
            writeln!(
                out,
                "{}\t{}\t{:.10}\t{}\t{:.10}",
                r.t,
                i + 1,
                r.proposed.values()[i],
                hard,
                r.wb_soft.values()[i]
            )
            .expect("writing to a String");
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    /// CTMC interpolation at `t = 0.5` with adjacency rate `q`.
    Ctmc { q: f64 },
    /// Cell-wise average of the neighbouring hours.
    Midpoint,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Ctmc { q } => format!("ctmc(q={q})"),
            Method::Midpoint => "midpoint".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMapeConfig {
    pub rows: usize,
    pub cols: usize,
    pub hours: usize,
    /// Rate of the generating chain per two-hour window; each hour advances
    /// it by half a unit of time.
    pub generator_q: f64,
    pub methods: Vec<Method>,
    pub population: f64,
    /// Log-scale standard deviation of the multiplicative hourly noise.
    pub noise_sigma: f64,
    pub seed: u64,
    pub options: SolverOptions,
    pub threads: Option<usize>,
    /// Replace every estimate with the truth (harness check).
    pub inject_truth: bool,
}

impl Default for GridMapeConfig {
    fn default() -> Self {
        Self {
            rows: 14,
            cols: 14,
            hours: 24,
            generator_q: 0.5,
            methods: vec![Method::Ctmc { q: 0.5 }, Method::Ctmc { q: 5.0 }, Method::Midpoint],
            population: 100_000.0,
            noise_sigma: 0.0,
            seed: 0,
            options: SolverOptions::default(),
            threads: None,
            inject_truth: false,
        }
    }
}

/// Hour ranges reported separately; hours outside `1..hours-1` are dropped.
pub const TIME_ZONES: [(&str, usize, usize); 6] =
    [("1-3", 1, 3), ("4-7", 4, 7), ("8-11", 8, 11), ("12-15", 12, 15), ("16-19", 16, 19), ("20-22", 20, 22)];

fn validate_grid(cfg: &GridMapeConfig) -> CliResult<()> {
    if cfg.rows == 0 || cfg.cols == 0 {
        return Err(CliError::Config("grid must have at least one row and column".into()));
    }
    if cfg.hours < 3 {
        return Err(CliError::Config(format!("need at least 3 hours for interior interpolation, got {}", cfg.hours)));
    }
    if !(cfg.population > 0.0) || !(cfg.noise_sigma >= 0.0) || !(cfg.generator_q > 0.0) {
        return Err(CliError::Config("population and generator q must be > 0, noise sigma >= 0".into()));
    }
    for m in &cfg.methods {
        if let Method::Ctmc { q } = m {
            if !(*q > 0.0) {
                return Err(CliError::Config(format!("interpolation q must be > 0, got {q}")));
            }
        }
    }
    Ok(())
}

/// One day of hourly histograms: a seeded population around a few hot
/// spots, diffused by the generating chain and optionally perturbed.
pub fn generate_day(cfg: &GridMapeConfig) -> CliResult<Vec<Histogram>> {
    validate_grid(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.rows * cfg.cols;
    let spots: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.random_range(0.0..cfg.rows as f64),
                rng.random_range(0.0..cfg.cols as f64),
                rng.random_range(1.0..3.0),
            )
        })
        .collect();
    let jitter = LogNormal::new(0.0, 0.5).expect("valid log-normal");
    let mut start = Array1::zeros(n);
    for r in 0..cfg.rows {
        for c in 0..cfg.cols {
            let heat: f64 = spots
                .iter()
                .map(|&(sr, sc, w)| {
                    let d2 = (r as f64 - sr).powi(2) + (c as f64 - sc).powi(2);
                    (-d2 / (2.0 * w * w)).exp()
                })
                .sum();
            start[r * cfg.cols + c] = (0.05 + heat) * jitter.sample(&mut rng);
        }
    }
    let scale = cfg.population / start.sum();
    start *= scale;
    let q = build_grid_rate_matrix(cfg.rows, cfg.cols, cfg.generator_q)?;
    let noise = LogNormal::new(0.0, cfg.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid log-normal");
    let mut day = Vec::with_capacity(cfg.hours);
    let mut current = start;
    for hour in 0..cfg.hours {
        if hour > 0 {
            current = expm_action(&q, 0.5, current.view(), true)?;
            if cfg.noise_sigma > 0.0 {
                current.mapv_inplace(|x| x * noise.sample(&mut rng));
                let s = cfg.population / current.sum();
                current *= s;
            }
        }
        day.push(Histogram::new(current.clone())?);
    }
    Ok(day)
}

fn estimate(method: Method, q: Option<&CtmcModel>, a: &Histogram, b: &Histogram, opts: SolverOptions) -> CliResult<Histogram> {
    match method {
        Method::Midpoint => Ok(Histogram::new((&a.values() + &b.values()) * 0.5)?),
        Method::Ctmc { .. } => {
            let q = q.expect("rate matrix built for CTMC methods").clone();
            // rounding can leave the hourly masses a few ulps apart
            let b = b.rescaled(a.mass())?;
            let problem = PathInterpolationProblem::new(a.clone(), b, PathKernel::Ctmc { q, t: 0.5 }, opts)?;
            let r = interpolate_path(&problem)?;
            if !r.report.converged {
                return Err(cgmot::Error::NotConverged { iterations: r.report.iterations, residual: r.report.residual }.into());
            }
            Ok(r.c)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HourScore {
    pub method: Method,
    pub hour: usize,
    pub mape: f64,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ZoneSummary {
    pub method: Method,
    pub zone: String,
    pub mean: f64,
    /// Population standard deviation over the hours in the zone.
    pub std: f64,
    pub hours: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMapeReport {
    pub scores: Vec<HourScore>,
    pub summary: Vec<ZoneSummary>,
}

impl GridMapeReport {
    /// Mean MAPE over every interior hour for `method`.
    pub fn overall(&self, method: Method) -> Option<f64> {
        self.summary.iter().find(|s| s.method == method && s.zone == "all").map(|s| s.mean)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Leaves out each interior hour, estimates it from its neighbours with
/// every configured method, and scores the estimate by MAPE.
pub fn run_grid_mape(cfg: &GridMapeConfig) -> CliResult<GridMapeReport> {
    validate_grid(cfg)?;
    let day = generate_day(cfg)?;
    let rates: Vec<Option<CtmcModel>> = cfg
        .methods
        .iter()
        .map(|m| match m {
            Method::Ctmc { q } => build_grid_rate_matrix(cfg.rows, cfg.cols, *q).map(Some),
            Method::Midpoint => Ok(None),
        })
        .collect::<Result<_, _>>()?;
    let tasks: Vec<(usize, usize)> =
        (0..cfg.methods.len()).flat_map(|m| (1..cfg.hours - 1).map(move |h| (m, h))).collect();
    let work = || -> Vec<CliResult<HourScore>> {
        tasks
            .par_iter()
            .map(|&(m, hour)| {
                let method = cfg.methods[m];
                let truth = &day[hour];
                let est = if cfg.inject_truth {
                    truth.clone()
                } else {
                    estimate(method, rates[m].as_ref(), &day[hour - 1], &day[hour + 1], cfg.options)?
                };
                let score = mape(est.values(), truth.values())?;
                Ok(HourScore { method, hour, mape: score.value, excluded: score.excluded })
            })
            .collect()
    };
    let results = match cfg.threads {
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t.max(1))
            .build()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    };
    let scores = results.into_iter().collect::<CliResult<Vec<_>>>()?;
    let mut summary = Vec::new();
    for &method in &cfg.methods {
        let mine: Vec<&HourScore> = scores.iter().filter(|s| s.method == method).collect();
        let zones = TIME_ZONES.iter().map(|&(name, lo, hi)| (name, lo, hi)).chain([("all", 1, cfg.hours - 2)]);
        for (name, lo, hi) in zones {
            let vals: Vec<f64> = mine.iter().filter(|s| s.hour >= lo && s.hour <= hi).map(|s| s.mape).collect();
            if vals.is_empty() {
                continue;
            }
            let (mean, std) = mean_std(&vals);
            summary.push(ZoneSummary { method, zone: name.to_string(), mean, std, hours: vals.len() });
        }
    }
    Ok(GridMapeReport { scores, summary })
}

pub fn mape_summary_tsv(report: &GridMapeReport) -> String {
    let mut out = String::from("method\tzone\thours\tmean_mape\tstd_mape\n");
    for s in &report.summary {
        writeln!(out, "{}\t{}\t{}\t{:.8}\t{:.8}", s.method.label(), s.zone, s.hours, s.mean, s.std)
            .expect("writing to a String");
    }
    out
}

pub fn mape_hourly_tsv(report: &GridMapeReport) -> String {
    let mut out = String::from("method\thour\tmape\texcluded_cells\n");
    for s in &report.scores {
        writeln!(out, "{}\t{}\t{:.8}\t{}", s.method.label(), s.hour, s.mape, s.excluded).expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_rows_follow_the_scenario() {
        let rows = run_synthetic_line(&SyntheticLineConfig::default()).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[2].wb_hard, WbLineSolution::NonUnique);
        let tsv = line_table_tsv(&rows);
        assert_eq!(tsv.lines().count(), 1 + 5 * 10);
        assert!(tsv.contains("nonunique"));
    }

    #[test]
    fn truth_injection_scores_zero() {
        let cfg = GridMapeConfig { rows: 4, cols: 4, hours: 6, inject_truth: true, ..Default::default() };
        let report = run_grid_mape(&cfg).unwrap();
        assert!(report.scores.iter().all(|s| s.mape == 0.0));
    }

    #[test]
    fn short_day_is_a_config_error() {
        let cfg = GridMapeConfig { hours: 2, ..Default::default() };
        assert!(matches!(run_grid_mape(&cfg), Err(CliError::Config(_))));
    }

    #[test]
    fn generated_hours_keep_the_population() {
        let cfg = GridMapeConfig { rows: 5, cols: 3, hours: 5, noise_sigma: 0.3, ..Default::default() };
        for h in generate_day(&cfg).unwrap() {
            assert!((h.mass() - cfg.population).abs() <= 1e-9 * cfg.population);
        }
    }
}
