//! Deterministic experiment harness: study plans, replicated training runs,
//! CSV and SVG artifacts.
//!
//! All replication fans out over a thread pool but aggregates strictly by
//! run index, and every per-run seed derives from the master seed through
//! [`crate::seeding`], so repeated invocations produce byte-identical
//! output files.

pub mod svg;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::attack_env::{parse_spec_file, AttackAction, ProblemKind, ProblemSpec, SpecError};
use crate::bundled::{self, Example};
use crate::netlang::{parse_network, NetworkDef, ParseError};
use crate::oracle::{self, ExactSolution, OracleError, DEFAULT_LAYER_CAP};
use crate::qlearn::{
    select_final_policy, train_dense, train_improved, Algo, FinalPolicy, LearnerConfig,
    PolicyKind, PolicyParseError, TrainError,
};
use crate::seeding;

/// A final policy counts as optimal when its exact expected return is within
/// this distance of the exact optimum.
pub const OPTIMALITY_TOLERANCE: f64 = 1e-6;

/// Harness failures.
#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Net(#[from] ParseError),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Policy(#[from] PolicyParseError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Reads and parses a network file.
pub fn load_network(path: &Path) -> Result<NetworkDef, BenchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(parse_network(&text)?)
}

/// Reads a problem file and the network it names (resolved relative to the
/// problem file), returning the validated pair.
pub fn load_problem(path: &Path) -> Result<(NetworkDef, ProblemSpec), BenchError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let file = parse_spec_file(&text)?;
    let net_path = match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => dir.join(&file.network),
        _ => PathBuf::from(&file.network),
    };
    let net = load_network(&net_path)?;
    let spec = file.resolve(&net)?;
    Ok((net, spec))
}

// ---------------------------------------------------------------------------
// Replicated studies

/// Mean per-episode return across independent runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardCurve {
    pub mean: Vec<f64>,
    pub std_err: Vec<f64>,
    pub runs: usize,
}

fn episode_returns(
    net: &NetworkDef,
    spec: &ProblemSpec,
    cfg: &LearnerConfig,
) -> Result<Vec<f64>, TrainError> {
    match cfg.algo {
        Algo::Dense => Ok(train_dense(net, spec, cfg)?.episode_returns),
        Algo::Improved => Ok(train_improved(net, spec, cfg)?.episode_returns),
    }
}

/// Trains `runs` independent learners and averages the return of episode `i`
/// across runs. Runs execute in parallel in fixed-size batches; sums are
/// folded in run order, so the result is deterministic.
pub fn reward_curve(
    net: &NetworkDef,
    spec: &ProblemSpec,
    cfg: &LearnerConfig,
    runs: usize,
    master_seed: u64,
) -> Result<RewardCurve, BenchError> {
    const BATCH: usize = 64;
    let episodes = cfg.episodes;
    let mut sum = vec![0.0f64; episodes];
    let mut sum_sq = vec![0.0f64; episodes];
    let mut start = 0usize;
    while start < runs {
        let batch: Vec<usize> = (start..(start + BATCH).min(runs)).collect();
        let series: Vec<Vec<f64>> = batch
            .par_iter()
            .map(|run| {
                let mut run_cfg = cfg.clone();
                run_cfg.seed =
                    seeding::run_seed(master_seed, seeding::REWARD_CURVE_STAGE, *run as u32);
                episode_returns(net, spec, &run_cfg)
            })
            .collect::<Result<_, _>>()?;
        for returns in &series {
            for (i, r) in returns.iter().enumerate() {
                sum[i] += r;
                sum_sq[i] += r * r;
            }
        }
        start += BATCH;
    }
    let k = runs as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / k).collect();
    let std_err = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| {
            if runs > 1 {
                (((sq - k * m * m) / (k - 1.0)).max(0.0) / k).sqrt()
            } else {
                0.0
            }
        })
        .collect();
    Ok(RewardCurve {
        mean,
        std_err,
        runs,
    })
}

/// Fraction of seeded runs whose final policy is exactly optimal, per
/// episode budget.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityCurve {
    pub budgets: Vec<usize>,
    pub prob_optimal: Vec<f64>,
    pub runs: usize,
}

/// Trains one seeded run and returns its final policy: the greedy policy for
/// the dense learner, the greedy-versus-best-sequence selection for the
/// sparse one. Both carry a Monte Carlo estimate of their expected return.
pub fn train_final_policy(
    net: &NetworkDef,
    spec: &ProblemSpec,
    cfg: &LearnerConfig,
) -> Result<FinalPolicy, TrainError> {
    match cfg.algo {
        Algo::Dense => {
            let outcome = train_dense(net, spec, cfg)?;
            let policy = FinalPolicy {
                kind: PolicyKind::GreedyFromQ(outcome.q.to_sparse_nonzero()),
                estimated_return: 0.0,
            };
            let estimate = crate::qlearn::evaluate_policy_mc(
                net,
                spec,
                &policy,
                cfg.eval_rollouts,
                seeding::eval_seed(cfg.seed),
            );
            Ok(FinalPolicy {
                kind: policy.kind,
                estimated_return: estimate.mean,
            })
        }
        Algo::Improved => {
            let outcome = train_improved(net, spec, cfg)?;
            Ok(select_final_policy(net, spec, cfg, &outcome))
        }
    }
}

/// For each budget in `grid`, trains `runs` seeded learners and counts how
/// many final policies score within [`OPTIMALITY_TOLERANCE`] of the exact
/// optimum.
pub fn probability_curve(
    net: &NetworkDef,
    spec: &ProblemSpec,
    cfg: &LearnerConfig,
    runs: usize,
    grid: &[usize],
    master_seed: u64,
    exact: &ExactSolution,
) -> Result<ProbabilityCurve, BenchError> {
    let v_star = exact.optimal_value();
    let mut prob_optimal = Vec::with_capacity(grid.len());
    for (budget_idx, budget) in grid.iter().enumerate() {
        let optimal: Vec<bool> = (0..runs)
            .into_par_iter()
            .map(|run| -> Result<bool, BenchError> {
                let mut run_cfg = cfg.clone();
                run_cfg.episodes = *budget;
                run_cfg.seed = seeding::run_seed(master_seed, budget_idx as u32, run as u32);
                let eval = match cfg.algo {
                    Algo::Dense => {
                        let outcome = train_dense(net, spec, &run_cfg)?;
                        oracle::evaluate_greedy_exact(net, spec, &outcome.q)
                    }
                    Algo::Improved => {
                        let outcome = train_improved(net, spec, &run_cfg)?;
                        let policy = select_final_policy(net, spec, &run_cfg, &outcome);
                        oracle::evaluate_policy_exact(net, spec, &policy)
                    }
                };
                Ok((eval.expected_return - v_star).abs() <= OPTIMALITY_TOLERANCE)
            })
            .collect::<Result<_, _>>()?;
        prob_optimal.push(optimal.iter().filter(|b| **b).count() as f64 / runs as f64);
    }
    Ok(ProbabilityCurve {
        budgets: grid.to_vec(),
        prob_optimal,
        runs,
    })
}

/// Default episode-budget grid: rising fractions of the full budget.
pub fn default_budget_grid(episodes: usize) -> Vec<usize> {
    let mut grid: Vec<usize> = [
        episodes / 20,
        episodes / 10,
        episodes / 5,
        episodes * 2 / 5,
        episodes,
    ]
    .iter()
    .map(|b| (*b).max(1))
    .collect();
    grid.dedup();
    grid
}

// ---------------------------------------------------------------------------
// Oracle report

/// Exact summary of one problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub problem: ProblemKind,
    pub v_star: f64,
    pub layer_sizes: Vec<usize>,
    /// One greedy optimal action sequence realization.
    pub realization: Vec<AttackAction>,
}

/// Solves the instance exactly and summarizes it.
pub fn oracle_report(
    net: &NetworkDef,
    spec: &ProblemSpec,
    layer_cap: usize,
) -> Result<(OracleReport, ExactSolution), BenchError> {
    let exact = oracle::exact_q(net, spec, layer_cap)?;
    let report = OracleReport {
        problem: spec.kind,
        v_star: exact.optimal_value(),
        layer_sizes: exact.layers.sizes(),
        realization: exact.realization(net, spec),
    };
    Ok((report, exact))
}

// ---------------------------------------------------------------------------
// CSV artifacts

/// `episode,mean_return,stderr`, episodes numbered from 1.
pub fn reward_curve_csv(curve: &RewardCurve) -> String {
    let mut out = String::from("episode,mean_return,stderr\n");
    for (i, (mean, se)) in curve.mean.iter().zip(&curve.std_err).enumerate() {
        let _ = writeln!(out, "{},{},{}", i + 1, mean, se);
    }
    out
}

/// `episode_budget,prob_optimal,runs`.
pub fn probability_curve_csv(curve: &ProbabilityCurve) -> String {
    let mut out = String::from("episode_budget,prob_optimal,runs\n");
    for (budget, prob) in curve.budgets.iter().zip(&curve.prob_optimal) {
        let _ = writeln!(out, "{},{},{}", budget, prob, curve.runs);
    }
    out
}

/// `problem,v_star,layer_0..layer_T`. All reports must share one horizon.
pub fn oracle_report_csv(reports: &[OracleReport]) -> String {
    let layers = reports.first().map_or(0, |r| r.layer_sizes.len());
    let mut out = String::from("problem,v_star");
    for t in 0..layers {
        let _ = write!(out, ",layer_{t}");
    }
    out.push('\n');
    for report in reports {
        let _ = write!(out, "{},{}", report.problem, report.v_star);
        for size in &report.layer_sizes {
            let _ = write!(out, ",{size}");
        }
        out.push('\n');
    }
    out
}

/// `episode,return` series of a single training run.
pub fn returns_csv(returns: &[f64]) -> String {
    let mut out = String::from("episode,return\n");
    for (i, r) in returns.iter().enumerate() {
        let _ = writeln!(out, "{},{}", i + 1, r);
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<(), BenchError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(io_err(path))?;
        }
    }
    fs::write(path, text).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Bundled studies

/// Options for running a bundled study.
#[derive(Debug, Clone)]
pub struct StudyOptions {
    /// Reward-curve replications. Desk scale 100, full scale 1000.
    pub runs: Option<usize>,
    /// Probability-curve replications per budget. Desk scale 10, full 100.
    pub prob_runs: Option<usize>,
    /// Episode budget of the study. Desk scale is a tenth of full scale.
    pub episodes: Option<usize>,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    /// Paper-scale replication counts and budgets.
    pub full_scale: bool,
    pub emit_svg: bool,
    /// Restrict to one learner; the 28-node study always skips the dense
    /// learner, whose table would be refused anyway.
    pub algo: Option<Algo>,
    pub epsilon: Option<f64>,
    pub alpha: Option<f64>,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            runs: None,
            prob_runs: None,
            episodes: None,
            master_seed: 1,
            out_dir: PathBuf::from("out"),
            full_scale: false,
            emit_svg: false,
            algo: None,
            epsilon: None,
            alpha: None,
        }
    }
}

/// Everything a bundled study produced.
#[derive(Debug, Clone)]
pub struct StudyOutput {
    pub label: String,
    pub report: OracleReport,
    pub files: Vec<PathBuf>,
    /// (algo, largest-budget probability of optimality)
    pub final_probs: Vec<(Algo, f64)>,
}

/// Runs one bundled study end to end: exact report, reward curves and
/// probability-of-optimality curves per learner, all written under
/// `options.out_dir`.
pub fn run_bundled_study(
    example: Example,
    problem: ProblemKind,
    options: &StudyOptions,
) -> Result<StudyOutput, BenchError> {
    let net = bundled::network(example);
    let spec = bundled::bundled_problem(example, problem);
    let label = format!("{example}_{problem}");

    let full_episodes = match example {
        Example::Lac10 => 50_000,
        Example::Tcr28 => 100_000,
    };
    let episodes = options
        .episodes
        .unwrap_or(if options.full_scale { full_episodes } else { full_episodes / 10 });
    let runs = options
        .runs
        .unwrap_or(if options.full_scale { 1000 } else { 100 });
    let prob_runs = options.prob_runs.unwrap_or_else(|| {
        if options.runs.is_some() {
            (runs / 10).max(1)
        } else if options.full_scale {
            100
        } else {
            10
        }
    });
    let grid = default_budget_grid(episodes);

    let mut cfg = LearnerConfig::for_spec(&spec);
    cfg.alpha = options.alpha.unwrap_or_else(|| bundled::bundled_alpha(example, problem));
    if let Some(eps) = options.epsilon {
        cfg.epsilon = eps;
    }
    cfg.episodes = episodes;

    let algos: Vec<Algo> = match (example, options.algo) {
        (Example::Tcr28, _) => vec![Algo::Improved],
        (Example::Lac10, Some(algo)) => vec![algo],
        (Example::Lac10, None) => vec![Algo::Dense, Algo::Improved],
    };

    let (report, exact) = oracle_report(&net, &spec, DEFAULT_LAYER_CAP)?;
    let mut files = Vec::new();
    let report_path = options.out_dir.join(format!("oracle_report_{label}.csv"));
    write_text(&report_path, &oracle_report_csv(std::slice::from_ref(&report)))?;
    files.push(report_path);

    let mut final_probs = Vec::new();
    for algo in algos {
        let mut algo_cfg = cfg.clone();
        algo_cfg.algo = algo;

        let curve = reward_curve(&net, &spec, &algo_cfg, runs, options.master_seed)?;
        let reward_path = options
            .out_dir
            .join(format!("reward_curve_{label}_{algo}.csv"));
        write_text(&reward_path, &reward_curve_csv(&curve))?;
        files.push(reward_path);
        if options.emit_svg {
            let path = options
                .out_dir
                .join(format!("reward_curve_{label}_{algo}.svg"));
            let points: Vec<(f64, f64)> = curve
                .mean
                .iter()
                .enumerate()
                .map(|(i, m)| ((i + 1) as f64, *m))
                .collect();
            write_text(
                &path,
                &svg::line_chart(
                    &format!("mean episode return, {label}, {algo}"),
                    "episode",
                    "mean return",
                    &[svg::Series::new("mean return", points)],
                ),
            )?;
            files.push(path);
        }

        let prob = probability_curve(
            &net,
            &spec,
            &algo_cfg,
            prob_runs,
            &grid,
            options.master_seed,
            &exact,
        )?;
        let prob_path = options
            .out_dir
            .join(format!("prob_optimal_{label}_{algo}.csv"));
        write_text(&prob_path, &probability_curve_csv(&prob))?;
        files.push(prob_path);
        if options.emit_svg {
            let path = options
                .out_dir
                .join(format!("prob_optimal_{label}_{algo}.svg"));
            let points: Vec<(f64, f64)> = prob
                .budgets
                .iter()
                .zip(&prob.prob_optimal)
                .map(|(b, p)| (*b as f64, *p))
                .collect();
            write_text(
                &path,
                &svg::line_chart(
                    &format!("probability of an optimal final policy, {label}, {algo}"),
                    "episode budget",
                    "probability optimal",
                    &[svg::Series::new("prob optimal", points)],
                ),
            )?;
            files.push(path);
        }
        final_probs.push((algo, *prob.prob_optimal.last().unwrap_or(&0.0)));
    }

    Ok(StudyOutput {
        label,
        report,
        files,
        final_probs,
    })
}

#[cfg(test)]
mod tests;
