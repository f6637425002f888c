//! Named verification suites driving the harness campaigns.

use serde::{Deserialize, Serialize};

use mom_core::harness::{
    self, adversarial_matrix_search, coverage_experiment, kmeans_interval_demo, moment_bound_check, mom_vs_mean,
    permutation_simulation, single_mean_concentration_check, CoverageReport, IndicatorMatrix, KMeansIntervalReport,
    MomentCheckReport, PermutationSimReport, RowCounts, TargetFunction, TrialConfig,
};
use mom_core::planner::single_mean_m;
use mom_core::DistributionSpec;

use crate::config::SuiteSection;
use crate::CliError;

pub const QUICK_NOTE: &str = "quick — not evidential";
const QUICK_FACTOR: u64 = 100;

pub const SUITES: [&str; 6] = [
    "moment_bound",
    "single_mean",
    "permutation",
    "coverage",
    "mom_vs_mean",
    "kmeans_interval",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "data", rename_all = "snake_case")]
pub enum SuiteReport {
    MomentBound(MomentCheckReport),
    SingleMean(Vec<CoverageReport>),
    Permutation(Vec<PermutationSimReport>),
    Coverage(CoverageReport),
    MomVsMean(CoverageReport),
    KmeansInterval(KMeansIntervalReport),
}

/// One suite's output file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub schema_version: u32,
    pub suite: String,
    pub quick: bool,
    pub note: Option<String>,
    /// Unix seconds; omitted under `--no-timestamp`.
    pub timestamp: Option<u64>,
    /// Fully resolved suite parameters.
    pub resolved: serde_json::Value,
    pub pass: bool,
    pub summary: String,
    pub report: SuiteReport,
}

pub struct SuiteRun {
    pub envelope: Envelope,
    /// Extra CSV artifact: file name and contents.
    pub extra_csv: Option<(String, String)>,
}

pub fn expand(name: &str) -> Result<Vec<&'static str>, CliError> {
    if name == "all" {
        return Ok(SUITES.to_vec());
    }
    SUITES
        .iter()
        .find(|s| **s == name)
        .map(|s| vec![*s])
        .ok_or_else(|| CliError::Usage(format!("unknown suite {name:?}; expected one of {} or all", SUITES.join(", "))))
}

fn scaled(full: u64, quick: bool, floor: u64) -> u64 {
    if quick {
        (full / QUICK_FACTOR).max(floor)
    } else {
        full
    }
}

pub fn run(name: &str, p: &SuiteSection, seed: u64) -> Result<SuiteRun, CliError> {
    let quick = p.quick.unwrap_or(false);
    let trials = |full: u64| p.trials.unwrap_or_else(|| scaled(full, quick, harness::MIN_TRIALS));
    let mut extra_csv = None;
    let (resolved, report, pass, summary) = match name {
        "moment_bound" => {
            let alpha = p.alpha.unwrap_or(1.8);
            let pw = p.p.unwrap_or(1.5);
            let m_list = p.m_list.clone().unwrap_or_else(|| vec![10, 100, 1000]);
            let trials = trials(100_000);
            let law = DistributionSpec::symmetric_pareto(alpha, 1.0, 0.0);
            let r = moment_bound_check(&law, pw, &m_list, trials, seed)?;
            let worst = r
                .rows
                .iter()
                .map(|row| format!("m={} empirical={:.4} bound={:.4}", row.m, row.empirical, row.bound))
                .collect::<Vec<_>>()
                .join("; ");
            let resolved = serde_json::json!({"alpha": alpha, "p": pw, "m_list": m_list, "trials": trials, "seed": seed});
            (resolved, SuiteReport::MomentBound(r.clone()), r.pass(), worst)
        }
        "single_mean" => {
            let (law, pw) = match p.alpha {
                Some(alpha) => (DistributionSpec::symmetric_pareto(alpha, 1.0, 0.0), p.p.unwrap_or(1.5)),
                None => (DistributionSpec::gaussian(0.0, 1.0), p.p.unwrap_or(2.0)),
            };
            let epsilon = p.epsilon.unwrap_or(1.0);
            let deltas = p.delta.map_or_else(|| vec![0.5, 0.02], |d| vec![d]);
            let trials = trials(100_000);
            let mut reports = Vec::new();
            let mut pass = true;
            let mut parts = Vec::new();
            for &delta in &deltas {
                let r = single_mean_concentration_check(&law, pw, epsilon, delta, trials, seed)?;
                pass &= r.within(delta);
                parts.push(format!("delta={delta} m={} empirical={:.5}", r.config.m, r.empirical_delta));
                reports.push(r);
            }
            let resolved = serde_json::json!({"distribution": law, "p": pw, "epsilon": epsilon, "deltas": deltas, "trials": trials, "seed": seed});
            (resolved, SuiteReport::SingleMean(reports), pass, parts.join("; "))
        }
        "permutation" => {
            let kappa = p.kappa.unwrap_or(200);
            let draws = p
                .draws
                .unwrap_or_else(|| scaled(1_000_000, quick, harness::MIN_PERMUTATION_DRAWS));
            let candidates = p.candidates.unwrap_or(if quick { 10 } else { 50 });
            let threshold = (4769 * kappa).div_ceil(10_000).min(kappa);
            let matrices = [
                adversarial_matrix_search(kappa, candidates, seed)?,
                IndicatorMatrix::structured(
                    kappa,
                    RowCounts {
                        ones_zero: threshold,
                        zero_ones: 0,
                        both: 0,
                    },
                )?,
            ];
            let reports = matrices
                .iter()
                .enumerate()
                .map(|(i, m)| permutation_simulation(m, draws, seed.wrapping_add(i as u64)))
                .collect::<Result<Vec<_>, _>>()?;
            let pass = reports.iter().all(PermutationSimReport::pass);
            let worst = reports.iter().map(|r| r.empirical_prob).fold(0.0, f64::max);
            let summary = format!(
                "kappa={kappa} empirical={worst:.3e} bound={:.4} ({} matrices, {draws} draws)",
                reports[0].bound,
                reports.len()
            );
            let resolved = serde_json::json!({"kappa": kappa, "draws": draws, "candidates": candidates, "seed": seed});
            (resolved, SuiteReport::Permutation(reports), pass, summary)
        }
        "coverage" => {
            let epsilon = p.epsilon.unwrap_or(0.5);
            let delta = p.delta.unwrap_or(0.1);
            let kappa = p.kappa.unwrap_or(1);
            let m = match p.m {
                Some(m) => m,
                None => single_mean_m(epsilon, delta, 2.0, 1.0)? as usize,
            };
            let law = DistributionSpec::gaussian(0.0, 1.0);
            let cfg = TrialConfig {
                trials: trials(10_000),
                base_seed: seed,
                m,
                kappa,
                epsilon,
                distribution: law.clone(),
                family: "identity".into(),
                comparator: true,
            };
            let r = coverage_experiment(&cfg, &[TargetFunction::coordinate(&law, 0)])?;
            let pass = r.within(delta);
            let summary = format!("empirical_delta={:.5} bound={delta} (m={m}, kappa={kappa})", r.empirical_delta);
            let resolved = serde_json::json!({"epsilon": epsilon, "delta": delta, "config": cfg});
            (resolved, SuiteReport::Coverage(r), pass, summary)
        }
        "mom_vs_mean" => {
            let alpha = p.alpha.unwrap_or(1.8);
            let n = p.n.unwrap_or(2000);
            let kappa = p.kappa.unwrap_or(40);
            let trials = trials(10_000);
            let r = mom_vs_mean(alpha, n, kappa, trials, seed)?;
            let cmp = r.comparator.clone().expect("comparator requested");
            let (a, b) = (r.sup_error_quantiles, cmp.sup_error_quantiles);
            extra_csv = Some((
                "mom_vs_mean_quantiles.csv".to_string(),
                format!(
                    "quantile,mom,mean\n0.5,{},{}\n0.9,{},{}\n0.99,{},{}\n",
                    a.p50, b.p50, a.p90, b.p90, a.p99, b.p99
                ),
            ));
            let summary = format!("p99 |error| mom={:.4} mean={:.4}", a.p99, b.p99);
            let resolved = serde_json::json!({"alpha": alpha, "n": n, "kappa": kappa, "trials": trials, "seed": seed});
            (resolved, SuiteReport::MomVsMean(r), a.p99 < b.p99, summary)
        }
        "kmeans_interval" => {
            let epsilon = p.epsilon.unwrap_or(0.3);
            let sets = p.sets.unwrap_or(50);
            let m = p.m.unwrap_or(500);
            let kappa = p.kappa.unwrap_or(39);
            let law = DistributionSpec::MixtureOfGaussians {
                weights: vec![0.5, 0.5],
                means: vec![vec![-2.0, 0.0], vec![2.0, 0.0]],
                sds: vec![1.0, 1.0],
            };
            let r = kmeans_interval_demo(&law, epsilon, sets, m, kappa, seed)?;
            let pass = r.containment_frequency >= 0.9;
            let summary = format!("containment={:.3} bound=0.90 ({sets} center sets)", r.containment_frequency);
            let resolved =
                serde_json::json!({"distribution": law, "epsilon": epsilon, "sets": sets, "m": m, "kappa": kappa, "seed": seed});
            (resolved, SuiteReport::KmeansInterval(r), pass, summary)
        }
        other => return Err(CliError::Usage(format!("unknown suite {other:?}"))),
    };
    Ok(SuiteRun {
        envelope: Envelope {
            schema_version: harness::SCHEMA_VERSION,
            suite: name.to_string(),
            quick,
            note: quick.then(|| QUICK_NOTE.to_string()),
            timestamp: None,
            resolved,
            pass,
            summary,
            report,
        },
        extra_csv,
    })
}
