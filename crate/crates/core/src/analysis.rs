//! Post-hoc metrics over trial logs and the comparison report.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DseError, Result};
use crate::objective::StudySpec;
use crate::optimizers::TrialRecord;
use crate::runner::load_study_logs;
use crate::space::{euclidean, AcceleratorConfig, SearchSpace};

/// Running maximum of reward, one point per trial.
pub fn best_so_far_curve(log: &[TrialRecord]) -> Vec<(usize, f64)> {
    let mut best = f64::NEG_INFINITY;
    log.iter()
        .enumerate()
        .map(|(i, r)| {
            best = best.max(r.reward);
            (i, best)
        })
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of nothing");
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Percentile bootstrap interval of the mean, resampling seeds with
/// replacement. Constant data gives a degenerate interval.
pub fn bootstrap_ci<R: Rng + ?Sized>(
    values: &[f64],
    level: f64,
    resamples: usize,
    rng: &mut R,
) -> (f64, f64) {
    assert!(!values.is_empty(), "bootstrap over no values");
    if values.iter().all(|v| *v == values[0]) {
        return (values[0], values[0]);
    }
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples.max(1))
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let pick = |q: f64| {
        let idx = (q * (means.len() - 1) as f64).round() as usize;
        means[idx.min(means.len() - 1)]
    };
    let m = mean(values);
    (pick(alpha).min(m), pick(1.0 - alpha).max(m))
}

pub fn feasibility_ratio(log: &[TrialRecord]) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    log.iter().filter(|r| r.feasible).count() as f64 / log.len() as f64
}

pub fn uniqueness_ratio(log: &[TrialRecord]) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    let distinct: HashSet<&AcceleratorConfig> = log.iter().map(|r| &r.config).collect();
    distinct.len() as f64 / log.len() as f64
}

/// Mean pairwise Euclidean distance, over the numeric encoding, of the
/// unique configs with reward ≥ `fraction` × the best reward. Zero when
/// fewer than two qualify.
pub fn diversity_score(space: &SearchSpace, log: &[TrialRecord], fraction: f64) -> f64 {
    let best = log.iter().map(|r| r.reward).fold(0.0, f64::max);
    if best <= 0.0 {
        return 0.0;
    }
    let mut configs: Vec<&AcceleratorConfig> = log
        .iter()
        .filter(|r| r.reward >= fraction * best)
        .map(|r| &r.config)
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    configs.sort();
    if configs.len() < 2 {
        return 0.0;
    }
    let enc: Vec<Vec<f64>> = configs.iter().map(|c| space.encode_numeric(c)).collect();
    let mut total = 0.0;
    let mut pairs = 0usize;
    for i in 0..enc.len() {
        for j in i + 1..enc.len() {
            total += euclidean(&enc[i], &enc[j]);
            pairs += 1;
        }
    }
    total / pairs as f64
}

/// 1-based number of trials until the reward first reaches `target`.
pub fn trials_to_reach(log: &[TrialRecord], target: f64) -> Option<usize> {
    log.iter().position(|r| r.reward >= target).map(|i| i + 1)
}

/// The `k` best unique trials, best first; ties keep log order.
pub fn top_k_unique(log: &[TrialRecord], k: usize) -> Vec<&TrialRecord> {
    let mut seen = HashSet::new();
    let mut unique: Vec<&TrialRecord> = log.iter().filter(|r| seen.insert(&r.config)).collect();
    unique.sort_by(|a, b| b.reward.total_cmp(&a.reward));
    unique.truncate(k);
    unique
}

fn top_k_header(space: &SearchSpace, with_strategy: bool) -> Vec<String> {
    let mut h = Vec::new();
    if with_strategy {
        h.push("strategy".to_string());
    }
    h.extend(["rank".to_string(), "reward".to_string()]);
    h.extend(space.params().iter().map(|p| p.name.clone()));
    h.extend(space.params().iter().map(|p| format!("idx_{}", p.name)));
    h.extend(space.params().iter().map(|p| format!("enc_{}", p.name)));
    h
}

fn top_k_rows(
    space: &SearchSpace,
    log: &[TrialRecord],
    k: usize,
    strategy: Option<&str>,
) -> Vec<Vec<String>> {
    top_k_unique(log, k)
        .into_iter()
        .enumerate()
        .map(|(rank, r)| {
            let mut row = Vec::new();
            if let Some(s) = strategy {
                row.push(s.to_string());
            }
            row.push((rank + 1).to_string());
            row.push(r.reward.to_string());
            row.extend(space.values(&r.config).iter().map(|v| v.to_string()));
            row.extend(r.config.genome().iter().map(|g| g.to_string()));
            row.extend(
                space
                    .encode_numeric(&r.config)
                    .iter()
                    .map(|v| v.to_string()),
            );
            row
        })
        .collect()
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| DseError::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> DseError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => DseError::io(path, io),
        other => DseError::parse(path.display().to_string(), format!("{other:?}")),
    }
}

/// Writes the `k` best unique trials of `log` as CSV.
pub fn top_k_export(space: &SearchSpace, log: &[TrialRecord], k: usize, path: &Path) -> Result<()> {
    write_csv(
        path,
        &top_k_header(space, false),
        &top_k_rows(space, log, k, None),
    )
}

/// Per-strategy row of the comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: String,
    pub study: String,
    pub n_seeds: usize,
    pub trials_per_seed: Vec<usize>,
    pub final_best: Vec<f64>,
    pub final_best_median: f64,
    pub final_best_ci: (f64, f64),
    pub feasibility_ratio: Vec<f64>,
    pub feasibility_ratio_median: f64,
    pub uniqueness_ratio: Vec<f64>,
    pub uniqueness_ratio_median: f64,
    pub diversity: Vec<f64>,
    pub diversity_median: f64,
    /// Median trials to reach each fraction of the report-wide best reward;
    /// `None` when fewer than half the seeds get there.
    pub trials_to_reach: Vec<(f64, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub best_reward: f64,
    pub strategies: Vec<StrategyReport>,
    pub warnings: Vec<String>,
}

pub const REACH_FRACTIONS: [f64; 3] = [0.9, 0.95, 0.99];

/// Curve bands per trial index: median and bootstrap CI over seeds. Seeds
/// with shorter logs hold their last value.
pub fn curve_bands<R: Rng + ?Sized>(
    logs: &[Vec<TrialRecord>],
    resamples: usize,
    rng: &mut R,
) -> Vec<(usize, f64, f64, f64)> {
    let curves: Vec<Vec<f64>> = logs
        .iter()
        .filter(|l| !l.is_empty())
        .map(|l| best_so_far_curve(l).into_iter().map(|(_, v)| v).collect())
        .collect();
    let len = curves.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|t| {
            let at: Vec<f64> = curves.iter().map(|c| c[t.min(c.len() - 1)]).collect();
            let (lo, hi) = bootstrap_ci(&at, 0.95, resamples, rng);
            (t, median(&at), lo, hi)
        })
        .collect()
}

fn spec_signature(s: &StudySpec) -> String {
    format!(
        "{:?}|{:?}|{:?}|{:?}",
        s.objective, s.workloads, s.area_budget_mm2, s.latency_budget_s
    )
}

/// Aggregates study directories into `report.json`, `curves.csv`,
/// `metrics.csv` and `top50.csv` under `out_dir`.
pub fn compare_report(
    space: &SearchSpace,
    study_dirs: &[PathBuf],
    out_dir: &Path,
) -> Result<Report> {
    if study_dirs.is_empty() {
        return Err(DseError::invalid("report", "no study directories given"));
    }
    let mut studies = Vec::new();
    for d in study_dirs {
        let (spec, logs) = load_study_logs(d)?;
        if logs.iter().all(|l| l.is_empty()) {
            return Err(DseError::invalid(
                "report",
                format!("{} holds no trials", d.display()),
            ));
        }
        studies.push((d.clone(), spec, logs));
    }
    let mut warnings = Vec::new();
    let sig0 = spec_signature(&studies[0].1);
    for (d, s, _) in &studies[1..] {
        if spec_signature(s) != sig0 {
            let w = format!(
                "{} differs in objective or constraints from {}",
                d.display(),
                studies[0].0.display()
            );
            log::warn!("{w}");
            warnings.push(w);
        }
    }
    let best_reward = studies
        .iter()
        .flat_map(|(_, _, logs)| logs.iter().flatten())
        .map(|r| r.reward)
        .fold(0.0, f64::max);

    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
    let mut strategies = Vec::new();
    let mut curve_rows = Vec::new();
    let mut top_rows = Vec::new();
    for (_, spec, logs) in &studies {
        let logs: Vec<Vec<TrialRecord>> = logs.iter().filter(|l| !l.is_empty()).cloned().collect();
        let strategy = spec.optimizer.kind.tag().to_string();
        let label = if studies
            .iter()
            .filter(|(_, s, _)| s.optimizer.kind == spec.optimizer.kind)
            .count()
            > 1
        {
            format!("{}:{}", strategy, spec.name)
        } else {
            strategy.clone()
        };
        let final_best: Vec<f64> = logs
            .iter()
            .map(|l| l.iter().map(|r| r.reward).fold(0.0, f64::max))
            .collect();
        let feas: Vec<f64> = logs.iter().map(|l| feasibility_ratio(l)).collect();
        let uniq: Vec<f64> = logs.iter().map(|l| uniqueness_ratio(l)).collect();
        let div: Vec<f64> = logs
            .iter()
            .map(|l| diversity_score(space, l, 0.75))
            .collect();
        let reach = REACH_FRACTIONS
            .iter()
            .map(|&f| {
                let hits: Vec<f64> = logs
                    .iter()
                    .filter_map(|l| trials_to_reach(l, f * best_reward).map(|t| t as f64))
                    .collect();
                let med = (hits.len() * 2 > logs.len()).then(|| {
                    // Seeds that never reach count as +inf in the median.
                    let mut all = hits.clone();
                    all.resize(logs.len(), f64::INFINITY);
                    median(&all)
                });
                (f, med)
            })
            .collect();
        for (t, m, lo, hi) in curve_bands(&logs, 1000, &mut rng) {
            curve_rows.push(vec![
                label.clone(),
                t.to_string(),
                m.to_string(),
                lo.to_string(),
                hi.to_string(),
            ]);
        }
        let pooled: Vec<TrialRecord> = logs.iter().flatten().cloned().collect();
        top_rows.extend(top_k_rows(space, &pooled, 50, Some(&label)));
        strategies.push(StrategyReport {
            strategy: label,
            study: spec.name.clone(),
            n_seeds: logs.len(),
            trials_per_seed: logs.iter().map(Vec::len).collect(),
            final_best_median: median(&final_best),
            final_best_ci: bootstrap_ci(&final_best, 0.95, 1000, &mut rng),
            final_best,
            feasibility_ratio_median: median(&feas),
            feasibility_ratio: feas,
            uniqueness_ratio_median: median(&uniq),
            uniqueness_ratio: uniq,
            diversity_median: median(&div),
            diversity: div,
            trials_to_reach: reach,
        });
    }

    fs::create_dir_all(out_dir).map_err(|e| DseError::io(out_dir, e))?;
    let report = Report {
        best_reward,
        strategies,
        warnings,
    };
    let path = out_dir.join("report.json");
    let mut f = fs::File::create(&path).map_err(|e| DseError::io(&path, e))?;
    f.write_all(
        serde_json::to_string_pretty(&report)
            .expect("report serializes")
            .as_bytes(),
    )
    .map_err(|e| DseError::io(&path, e))?;

    let header = |cols: &[&str]| cols.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    write_csv(
        &out_dir.join("curves.csv"),
        &header(&["strategy", "trial_index", "median", "ci_lo", "ci_hi"]),
        &curve_rows,
    )?;
    let metric_rows: Vec<Vec<String>> = report
        .strategies
        .iter()
        .map(|s| {
            vec![
                s.strategy.clone(),
                s.n_seeds.to_string(),
                s.final_best_median.to_string(),
                s.final_best_ci.0.to_string(),
                s.final_best_ci.1.to_string(),
                s.feasibility_ratio_median.to_string(),
                s.uniqueness_ratio_median.to_string(),
                s.diversity_median.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out_dir.join("metrics.csv"),
        &header(&[
            "strategy",
            "n_seeds",
            "final_best_median",
            "final_best_ci_lo",
            "final_best_ci_hi",
            "feasibility_ratio",
            "uniqueness_ratio",
            "diversity",
        ]),
        &metric_rows,
    )?;
    write_csv(
        &out_dir.join("top50.csv"),
        &top_k_header(space, true),
        &top_rows,
    )?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn log_of(rewards: &[f64]) -> Vec<TrialRecord> {
        rewards
            .iter()
            .enumerate()
            .map(|(i, r)| {
                TrialRecord::synthetic(AcceleratorConfig::from_genome(vec![i % 10; 10]), *r, i)
            })
            .collect()
    }

    #[test]
    fn curve_examples() {
        let c: Vec<f64> = best_so_far_curve(&log_of(&[0.0, 3.0, 1.0, 5.0]))
            .into_iter()
            .map(|p| p.1)
            .collect();
        assert_eq!(c, vec![0.0, 3.0, 3.0, 5.0]);
        let z: Vec<f64> = best_so_far_curve(&log_of(&[0.0; 4]))
            .into_iter()
            .map(|p| p.1)
            .collect();
        assert_eq!(z, vec![0.0; 4]);
        assert_eq!(best_so_far_curve(&log_of(&[2.0])), vec![(0, 2.0)]);
    }

    #[test]
    fn bootstrap_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(bootstrap_ci(&[0.1; 5], 0.95, 1000, &mut rng), (0.1, 0.1));
        assert_eq!(bootstrap_ci(&[7.0], 0.95, 1000, &mut rng), (7.0, 7.0));
        let (lo, hi) = bootstrap_ci(&[0.0, 10.0], 0.95, 10_000, &mut rng);
        assert!(lo < 5.0 && 5.0 < hi);
    }

    #[test]
    fn ratios() {
        let mut log = log_of(&[1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0]);
        assert_eq!(feasibility_ratio(&log), 0.3);
        assert_eq!(uniqueness_ratio(&log), 1.0);
        for r in &mut log[..4] {
            r.config = AcceleratorConfig::from_genome(vec![0; 10]);
        }
        assert_eq!(uniqueness_ratio(&log[..4]), 0.25);
    }

    #[test]
    fn diversity_examples() {
        let space = SearchSpace::default_space();
        assert_eq!(diversity_score(&space, &log_of(&[1.0, 0.1]), 0.75), 0.0);
        let log = log_of(&[1.0, 0.9]);
        let d = euclidean(
            &space.encode_numeric(&log[0].config),
            &space.encode_numeric(&log[1].config),
        );
        assert_eq!(diversity_score(&space, &log, 0.75), d);
        let mut dup = log.clone();
        dup.push(log[0].clone());
        dup.reverse();
        assert_eq!(diversity_score(&space, &dup, 0.75), d);
    }

    #[test]
    fn top_k_csv() {
        let space = SearchSpace::default_space();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("top.csv");
        let mut log = log_of(&[1.0, 3.0, 2.0]);
        log.push(log[1].clone());
        top_k_export(&space, &log, 50, &path).unwrap();
        let mut rdr = csv::Reader::from_path(&path).unwrap();
        let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
        let names: Vec<String> = space.params().iter().map(|p| p.name.clone()).collect();
        assert_eq!(&header[2..12], names.as_slice());
        let rewards: Vec<f64> = rdr
            .records()
            .map(|r| r.unwrap()[1].parse().unwrap())
            .collect();
        assert_eq!(rewards, vec![3.0, 2.0, 1.0]);
    }
}
