//! Evaluation protocol: global and per-skill AUC, the scaled gap between
//! models, the recency-weighted autoregressive baseline, and the
//! prior-skill-accuracy correlation analysis.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StudentId};
use crate::error::{Error, Result};
use crate::math::{pearson, PROB_FLOOR};

/// One model prediction paired with the observed outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub student: StudentId,
    /// Absolute trial index within the student's history.
    pub t: usize,
    /// Grouping key for per-skill metrics: the expert skill when the trial
    /// has one, the exercise label otherwise.
    pub group: String,
    pub predicted: f64,
    pub observed: bool,
}

/// Grouping key for the trial at `(student, t)` in `dataset`: expert skill
/// name if tagged, exercise label name otherwise.
pub fn group_name(dataset: &Dataset, student: StudentId, t: usize) -> String {
    let seq = dataset
        .students
        .iter()
        .find(|s| s.student == student)
        .expect("student present in dataset");
    let trial = &seq.trials[t];
    match trial.expert_skill {
        Some(sk) => dataset.skill_vocab.name(sk).to_owned(),
        None => dataset.label_vocab.name(trial.label).to_owned(),
    }
}

/// Area under the ROC curve over the pooled set of records, computed as the
/// Mann-Whitney rank statistic with ties credited 0.5. `None` when only one
/// outcome class is present.
pub fn auc_global(records: &[PredictionRecord]) -> Option<f64> {
    auc_from_pairs(records.iter().map(|r| (r.predicted, r.observed)))
}

/// Rank-statistic AUC over (score, outcome) pairs.
pub fn auc_from_pairs(pairs: impl IntoIterator<Item = (f64, bool)>) -> Option<f64> {
    let mut scored: Vec<(f64, bool)> = pairs.into_iter().collect();
    let n = scored.len();
    let n_pos = scored.iter().filter(|(_, y)| *y).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("scores must not be NaN"));

    // Sum of (tie-averaged) ranks of the positive examples. Ranks are
    // half-integers, so the sum is exact in f64 well past any realistic n.
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scored[j + 1].0 == scored[i].0 {
            j += 1;
        }
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for item in &scored[i..=j] {
            if item.1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

/// AUC of one skill group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillAuc {
    pub group: String,
    pub n_trials: usize,
    /// `None` when the group has a single outcome class.
    pub auc: Option<f64>,
}

/// Per-skill AUC table plus their unweighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerSkillAuc {
    /// Unweighted mean over skills with both classes present.
    pub mean: Option<f64>,
    pub table: Vec<SkillAuc>,
    /// Skills excluded from the mean for having a single class.
    pub n_excluded: usize,
}

/// Computes one AUC per skill group and their unweighted mean. Groups with a
/// single outcome class are excluded from the mean and counted.
pub fn auc_per_skill(records: &[PredictionRecord]) -> PerSkillAuc {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<&str, Vec<(f64, bool)>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.group).or_default().push((r.predicted, r.observed));
    }
    let mut table = Vec::with_capacity(groups.len());
    let mut sum = 0.0;
    let mut n_defined = 0usize;
    let mut n_excluded = 0usize;
    for (group, pairs) in groups {
        let n_trials = pairs.len();
        let auc = auc_from_pairs(pairs);
        match auc {
            Some(a) => {
                sum += a;
                n_defined += 1;
            }
            None => n_excluded += 1,
        }
        table.push(SkillAuc { group: group.to_owned(), n_trials, auc });
    }
    let mean = if n_defined > 0 { Some(sum / n_defined as f64) } else { None };
    PerSkillAuc { mean, table, n_excluded }
}

/// Convenience wrapper returning just the per-skill mean.
pub fn auc_per_skill_mean(records: &[PredictionRecord]) -> Option<f64> {
    auc_per_skill(records).mean
}

/// Difference between a reference model's AUC and model `a`'s AUC, scaled by
/// the reference's discriminability above chance. Negative when model `a`
/// outperforms the reference.
pub fn scaled_gap(auc_a: f64, auc_dkt: f64) -> Result<f64> {
    if auc_dkt.partial_cmp(&0.5) != Some(std::cmp::Ordering::Greater) {
        return Err(Error::InvalidArgument(format!(
            "reference AUC must exceed 0.5, got {auc_dkt}"
        )));
    }
    Ok((auc_dkt - auc_a) / (auc_dkt - 0.5))
}

/// Half-life choice for the recency baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HalfLife {
    /// Fixed half-life in trials.
    Fixed(f64),
    /// Choose the half-life by maximizing training log-likelihood on a grid.
    Fit,
}

/// Output of [`recency_baseline`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecencyResult {
    pub half_life: f64,
    pub lambda: f64,
    pub records: Vec<PredictionRecord>,
    pub auc: Option<f64>,
}

/// Autoregressive baseline: the prediction for a trial is the exponentially
/// weighted average of the student's past outcomes across all skills, with
/// decay `lambda = 2^(-1/half_life)` per trial. First trials fall back to the
/// training-set mean.
pub fn recency_baseline(
    train: &Dataset,
    test: &Dataset,
    half_life: HalfLife,
) -> Result<RecencyResult> {
    let hl = match half_life {
        HalfLife::Fixed(h) => {
            if h <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "half-life must be positive, got {h}"
                )));
            }
            h
        }
        HalfLife::Fit => fit_half_life(train),
    };
    let lambda = lambda_for_half_life(hl);
    let fallback = train.mean_correct();
    let records = recency_records(test, lambda, fallback);
    let auc = auc_global(&records);
    Ok(RecencyResult { half_life: hl, lambda, records, auc })
}

pub fn lambda_for_half_life(half_life: f64) -> f64 {
    2.0f64.powf(-1.0 / half_life)
}

fn recency_records(dataset: &Dataset, lambda: f64, fallback: f64) -> Vec<PredictionRecord> {
    let mut records = Vec::with_capacity(dataset.n_trials());
    for seq in &dataset.students {
        // Running weighted sums: num = sum(lambda^(t-u) x_u), den likewise.
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        for trial in &seq.trials {
            let predicted = if den > 0.0 { num / den } else { fallback };
            records.push(PredictionRecord {
                student: seq.student,
                t: trial.t,
                group: group_name_from(dataset, trial),
                predicted,
                observed: trial.correct,
            });
            let x = if trial.correct { 1.0 } else { 0.0 };
            num = lambda * (num + x);
            den = lambda * (den + 1.0);
        }
    }
    records
}

fn group_name_from(dataset: &Dataset, trial: &crate::data::Trial) -> String {
    match trial.expert_skill {
        Some(sk) => dataset.skill_vocab.name(sk).to_owned(),
        None => dataset.label_vocab.name(trial.label).to_owned(),
    }
}

fn fit_half_life(train: &Dataset) -> f64 {
    let fallback = train.mean_correct();
    let mut best = (f64::NEG_INFINITY, 5.0);
    // Log-spaced grid from sub-trial to very slow decay.
    for k in 0..=40 {
        let hl = 0.5 * (200.0f64 / 0.5).powf(k as f64 / 40.0);
        let lambda = lambda_for_half_life(hl);
        let ll: f64 = recency_records(train, lambda, fallback)
            .iter()
            .map(|r| {
                let p = r.predicted.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                if r.observed { p.ln() } else { (1.0 - p).ln() }
            })
            .sum();
        if ll > best.0 {
            best = (ll, hl);
        }
    }
    best.1
}

/// Pearson correlation, pooled over all (student, n) pairs, between a
/// student's mean accuracy on their first `n` study blocks and their accuracy
/// on block `n + 1`. Blocks are maximal runs of consecutive same-skill trials
/// (students are expected to study skills contiguously). `None` when fewer
/// than two pairs exist or either side has no variance.
pub fn ability_correlation(dataset: &Dataset) -> Option<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for seq in &dataset.students {
        // Split the trial stream into runs of equal skill tag (fall back to
        // the label when untagged).
        let key = |tr: &crate::data::Trial| tr.expert_skill.map(|s| (0usize, s)).unwrap_or((1, tr.label));
        let mut blocks: Vec<(usize, usize)> = Vec::new(); // (n_correct, n_total)
        let mut current_key = None;
        for tr in &seq.trials {
            let k = key(tr);
            if current_key != Some(k) {
                blocks.push((0, 0));
                current_key = Some(k);
            }
            let last = blocks.last_mut().unwrap();
            last.0 += tr.correct as usize;
            last.1 += 1;
        }
        if blocks.len() < 2 {
            continue;
        }
        let mut cum_correct = 0usize;
        let mut cum_total = 0usize;
        for n in 0..blocks.len() - 1 {
            cum_correct += blocks[n].0;
            cum_total += blocks[n].1;
            let (next_c, next_t) = blocks[n + 1];
            xs.push(cum_correct as f64 / cum_total as f64);
            ys.push(next_c as f64 / next_t as f64);
        }
    }
    pearson(&xs, &ys)
}

/// Evaluation summary for one model on one dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub dataset: String,
    pub n_trials: usize,
    pub auc_global: Option<f64>,
    pub auc_per_skill_mean: Option<f64>,
    pub per_skill: Vec<SkillAuc>,
    pub n_skills_excluded: usize,
    /// Gap to a reference model, scaled by its discriminability above chance.
    pub scaled_gap_vs_dkt: Option<f64>,
}

impl MetricsReport {
    pub fn from_records(model: &str, dataset_name: &str, records: &[PredictionRecord]) -> Self {
        let per_skill = auc_per_skill(records);
        MetricsReport {
            model: model.to_owned(),
            dataset: dataset_name.to_owned(),
            n_trials: records.len(),
            auc_global: auc_global(records),
            auc_per_skill_mean: per_skill.mean,
            per_skill: per_skill.table,
            n_skills_excluded: per_skill.n_excluded,
            scaled_gap_vs_dkt: None,
        }
    }

    /// Flat CSV row matching the header from [`MetricsReport::csv_header`].
    pub fn csv_row(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x:.6}")).unwrap_or_else(|| "undefined".into())
        }
        format!(
            "{},{},{},{},{}",
            self.model,
            self.dataset,
            opt(self.auc_global),
            opt(self.auc_per_skill_mean),
            self.n_trials
        )
    }

    pub fn csv_header() -> &'static str {
        "model,dataset,auc_global,auc_per_skill_mean,n_trials"
    }
}
