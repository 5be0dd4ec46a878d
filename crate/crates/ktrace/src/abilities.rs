//! Per-student latent ability extension.
//!
//! A single ability value per student shifts every skill's guess probability
//! up and slip probability down on the logit scale. Ability lives on a
//! discrete grid (Gauss-Hermite nodes of a standard normal by default), which
//! keeps both the EM fit and the online posterior exact. For a new student
//! the grid prior is used until their responses shrink the posterior.

use serde::{Deserialize, Serialize};

use crate::bkt::{self, BktParams, FitConfig, KnowledgeBelief};
use crate::data::{Dataset, Partition, SkillId, SkillSubsequence, StudentId};
use crate::error::{Error, Result};
use crate::eval::PredictionRecord;
use crate::math::{golden_section_max, logit, logsumexp, sigmoid, PROB_FLOOR};

/// Discrete grid over ability values with prior weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityGrid {
    /// Ability values in logit units, strictly increasing.
    pub levels: Vec<f64>,
    /// Prior probability of each level; sums to 1.
    pub prior_weights: Vec<f64>,
}

impl AbilityGrid {
    /// Gauss-Hermite quadrature grid for a standard normal ability prior.
    pub fn standard_normal(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("grid size must be positive".into()));
        }
        let (nodes, weights) = gauss_hermite(n);
        let levels: Vec<f64> = nodes.iter().map(|x| x * std::f64::consts::SQRT_2).collect();
        let total: f64 = weights.iter().sum();
        let prior_weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        Ok(AbilityGrid { levels, prior_weights })
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.len() != self.prior_weights.len() || self.levels.is_empty() {
            return Err(Error::InvalidArgument("grid levels/weights mismatch".into()));
        }
        if !self.levels.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument(
                "grid levels must be strictly increasing".into(),
            ));
        }
        let sum: f64 = self.prior_weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("grid weights sum to {sum}, not 1")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

impl Default for AbilityGrid {
    fn default() -> Self {
        AbilityGrid::standard_normal(7).expect("default grid")
    }
}

/// Physicists' Hermite polynomial H_n(x).
fn hermite(n: usize, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut h_prev = 1.0f64;
    let mut h = 2.0 * x;
    for k in 1..n {
        let h_next = 2.0 * x * h - 2.0 * (k as f64) * h_prev;
        h_prev = h;
        h = h_next;
    }
    h
}

/// Nodes and weights of n-point Gauss-Hermite quadrature (weight e^{-x^2}).
/// Roots are found by bisection, using the interlacing of successive Hermite
/// polynomials to bracket each one.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut roots: Vec<f64> = vec![0.0]; // roots of H_1
    for m in 2..=n {
        let bound = (2.0 * m as f64 + 1.0).sqrt();
        let mut brackets = Vec::with_capacity(m + 1);
        brackets.push(-bound);
        brackets.extend(roots.iter().copied());
        brackets.push(bound);
        let mut next = Vec::with_capacity(m);
        for w in brackets.windows(2) {
            next.push(bisect_root(|x| hermite(m, x), w[0], w[1]));
        }
        roots = next;
    }
    let factorial: f64 = (1..=n).map(|v| v as f64).product();
    let lead = 2.0f64.powi(n as i32 - 1) * factorial * std::f64::consts::PI.sqrt()
        / (n as f64 * n as f64);
    let weights: Vec<f64> = roots
        .iter()
        .map(|&x| {
            let h = hermite(n - 1, x);
            lead / (h * h)
        })
        .collect();
    (roots, weights)
}

fn bisect_root(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fmid = f(mid);
        if fmid == 0.0 {
            return mid;
        }
        if (flo < 0.0) == (fmid < 0.0) {
            lo = mid;
            flo = fmid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Posterior over one student's ability level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbilityPosterior {
    pub student: StudentId,
    /// Probability per grid level; sums to 1.
    pub weights: Vec<f64>,
}

impl AbilityPosterior {
    pub fn mean(&self, grid: &AbilityGrid) -> f64 {
        self.weights.iter().zip(&grid.levels).map(|(w, a)| w * a).sum()
    }
}

/// Shifts guess up and slip down by `a` on the logit scale.
pub fn ability_adjusted_params(params: &BktParams, a: f64) -> Result<(f64, f64)> {
    if !a.is_finite() {
        return Err(Error::InvalidArgument(format!("ability must be finite, got {a}")));
    }
    for (name, v) in [("guess", params.guess), ("slip", params.slip)] {
        if v <= 0.0 || v >= 1.0 {
            return Err(Error::InvalidArgument(format!(
                "{name} must be strictly inside (0,1) for the logit link, got {v}"
            )));
        }
    }
    let guess_a = sigmoid(logit(params.guess) + a);
    let slip_a = sigmoid(logit(params.slip) - a);
    Ok((guess_a, slip_a))
}

fn with_ability(params: &BktParams, a: f64) -> Result<BktParams> {
    let (guess, slip) = ability_adjusted_params(params, a)?;
    Ok(BktParams { guess, slip, ..*params })
}

/// Total log-likelihood of one student's subsequences given an ability value:
/// the sum over skills with ability-adjusted emission probabilities.
pub fn student_loglik_given_ability(
    subseqs: &[&SkillSubsequence],
    skill_params: &[BktParams],
    a: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for sub in subseqs {
        let adjusted = with_ability(&skill_params[sub.skill], a)?;
        total += bkt::sequence_loglik(sub, &adjusted)?;
    }
    Ok(total)
}

/// Ability posterior for one student: grid prior reweighted by the data
/// likelihood at each level. Returns the prior when there is no data.
pub fn ability_posterior(
    student: StudentId,
    subseqs: &[&SkillSubsequence],
    skill_params: &[BktParams],
    grid: &AbilityGrid,
) -> Result<AbilityPosterior> {
    grid.validate()?;
    let mut log_w = Vec::with_capacity(grid.len());
    for (&a, &prior) in grid.levels.iter().zip(&grid.prior_weights) {
        let ll = student_loglik_given_ability(subseqs, skill_params, a)?;
        log_w.push(prior.max(PROB_FLOOR).ln() + ll);
    }
    let norm = logsumexp(&log_w);
    if !norm.is_finite() {
        return Err(Error::Numerical("ability posterior weights are non-finite".into()));
    }
    let weights: Vec<f64> = log_w.iter().map(|lw| (lw - norm).exp()).collect();
    Ok(AbilityPosterior { student, weights })
}

/// Strictly causal per-trial predictions for one student: each trial is
/// predicted by mixing the per-level forward predictions under the current
/// ability posterior, after which the posterior and the per-skill beliefs
/// absorb the observed outcome.
pub fn predict_online(
    student: &crate::data::StudentSequence,
    partition: &Partition,
    skill_params: &[BktParams],
    grid: &AbilityGrid,
) -> Result<Vec<f64>> {
    grid.validate()?;
    let n_levels = grid.len();
    let adjusted: Vec<Vec<BktParams>> = grid
        .levels
        .iter()
        .map(|&a| skill_params.iter().map(|p| with_ability(p, a)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;

    let mut log_w: Vec<f64> =
        grid.prior_weights.iter().map(|w| w.max(PROB_FLOOR).ln()).collect();
    let mut beliefs: Vec<Vec<KnowledgeBelief>> = adjusted
        .iter()
        .map(|per_skill| per_skill.iter().map(KnowledgeBelief::from_prior).collect())
        .collect();
    let mut last_t: Vec<Option<usize>> = vec![None; partition.n_skills()];

    let mut preds = Vec::with_capacity(student.trials.len());
    for tr in &student.trials {
        let skill = partition.skill_of(tr.label);
        // Apply the decay interval since the last same-skill practice.
        if let Some(prev_t) = last_t[skill] {
            let gap = tr.t - prev_t;
            for (level, belief_row) in beliefs.iter_mut().enumerate() {
                belief_row[skill] =
                    bkt::transition(belief_row[skill], &adjusted[level][skill], gap)?;
            }
        }
        let norm = logsumexp(&log_w);
        let mut mixture = 0.0;
        let mut per_level = Vec::with_capacity(n_levels);
        for level in 0..n_levels {
            let w = (log_w[level] - norm).exp();
            let p = bkt::emit_predict(beliefs[level][skill], &adjusted[level][skill]);
            per_level.push(p);
            mixture += w * p;
        }
        preds.push(mixture);

        for level in 0..n_levels {
            let p = per_level[level];
            let p_obs = if tr.correct { p } else { 1.0 - p };
            log_w[level] += p_obs.max(PROB_FLOOR).ln();
            beliefs[level][skill] =
                bkt::posterior_update(beliefs[level][skill], tr.correct, &adjusted[level][skill])?;
        }
        last_t[skill] = Some(tr.t);
    }
    Ok(preds)
}

/// Settings for [`fit_em_abilities`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AbilityFitConfig {
    pub base: FitConfig,
    /// Iterations of the joint ability EM after per-skill initialization.
    pub max_iters: usize,
    pub rel_tol: f64,
}

impl Default for AbilityFitConfig {
    fn default() -> Self {
        AbilityFitConfig { base: FitConfig::default(), max_iters: 50, rel_tol: 1e-6 }
    }
}

/// Result of [`fit_em_abilities`].
#[derive(Debug, Clone)]
pub struct AbilityFit {
    pub skill_params: Vec<BktParams>,
    /// Input grid with its prior weights re-estimated from the data; use
    /// this grid, not the input one, for prediction.
    pub grid: AbilityGrid,
    pub posteriors: Vec<AbilityPosterior>,
    /// Per-iteration total marginal log-likelihood.
    pub trace: Vec<f64>,
}

/// Joint EM over per-skill parameters and per-student discrete abilities.
///
/// The E-step computes each student's ability posterior jointly across their
/// skills together with the expected HMM statistics at every grid level; the
/// M-step re-estimates each skill's parameters under the ability weighting
/// and re-estimates the grid's prior weights from the average posterior, so
/// the ability mixture collapses on populations without real spread. The
/// marginal log-likelihood is non-decreasing across iterations.
pub fn fit_em_abilities(
    train: &Dataset,
    partition: &Partition,
    grid: &AbilityGrid,
    config: &AbilityFitConfig,
) -> Result<AbilityFit> {
    use rayon::prelude::*;
    grid.validate()?;
    let subseqs = crate::data::parse_into_skill_sequences(train, partition)?;
    let n_skills = partition.n_skills();

    // Per-skill initialization from the plain fit.
    let plain_config = FitConfig { restarts: 2, ..config.base };
    let mut skill_params = bkt::fit_skills(&subseqs, n_skills, &plain_config)?;
    for p in &mut skill_params {
        // The logit link needs strictly interior emission rates.
        p.guess = p.guess.clamp(1e-4, 1.0 - 1e-4);
        p.slip = p.slip.clamp(1e-4, 1.0 - 1e-4);
    }

    let mut per_student: std::collections::BTreeMap<StudentId, Vec<&SkillSubsequence>> =
        Default::default();
    for sub in &subseqs {
        per_student.entry(sub.student).or_default().push(sub);
    }
    let students: Vec<(&StudentId, &Vec<&SkillSubsequence>)> = per_student.iter().collect();

    let mut working_grid = grid.clone();
    let mut trace = Vec::new();
    let mut posteriors = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..config.max_iters {
        let params_now = skill_params.clone();
        let grid_now = working_grid.clone();
        let results: Vec<(f64, AbilityPosterior, Vec<LevelSkillStats>)> = students
            .par_iter()
            .map(|(sid, subs)| e_step_student(**sid, subs, &params_now, &grid_now))
            .collect::<Result<Vec<_>>>()?;

        let total_ll: f64 = results.iter().map(|(ll, _, _)| ll).sum();
        trace.push(total_ll);

        let n_levels = working_grid.len();
        let mut pooled: Vec<Vec<SkillStats>> =
            vec![vec![SkillStats::default(); n_levels]; n_skills];
        let mut weight_sums = vec![0.0f64; n_levels];
        for (_, posterior, stats) in &results {
            for (sum, w) in weight_sums.iter_mut().zip(&posterior.weights) {
                *sum += w;
            }
            for entry in stats {
                let w = posterior.weights[entry.level];
                pooled[entry.skill][entry.level].add_scaled(&entry.stats, w);
            }
        }
        posteriors = results.into_iter().map(|(_, p, _)| p).collect();

        for (skill, params) in skill_params.iter_mut().enumerate() {
            *params = m_step_ability(&pooled[skill], params, &working_grid, &config.base);
        }
        // Mixture-weight update: average posterior responsibility per level.
        let n_students = posteriors.len() as f64;
        if n_students > 0.0 {
            let total: f64 = weight_sums.iter().sum();
            for (w, sum) in working_grid.prior_weights.iter_mut().zip(&weight_sums) {
                *w = sum / total;
            }
        }

        if prev_ll.is_finite() {
            let rel = (total_ll - prev_ll).abs() / total_ll.abs().max(1.0);
            if rel < config.rel_tol {
                break;
            }
        }
        prev_ll = total_ll;
    }
    Ok(AbilityFit { skill_params, grid: working_grid, posteriors, trace })
}

/// Expected HMM statistics for one skill at one ability level.
#[derive(Debug, Clone, Default)]
struct SkillStats {
    prior_num: f64,
    prior_den: f64,
    /// State-0 occupancy and correct count (guess side).
    n0: f64,
    c0: f64,
    /// State-1 occupancy and incorrect count (slip side).
    n1: f64,
    w1: f64,
    /// gap -> [00, 01, 10, 11] expected transition counts.
    trans: std::collections::BTreeMap<usize, [f64; 4]>,
}

impl SkillStats {
    fn add_scaled(&mut self, other: &SkillStats, w: f64) {
        self.prior_num += w * other.prior_num;
        self.prior_den += w * other.prior_den;
        self.n0 += w * other.n0;
        self.c0 += w * other.c0;
        self.n1 += w * other.n1;
        self.w1 += w * other.w1;
        for (&gap, counts) in &other.trans {
            let e = self.trans.entry(gap).or_insert([0.0; 4]);
            for k in 0..4 {
                e[k] += w * counts[k];
            }
        }
    }
}

struct LevelSkillStats {
    level: usize,
    skill: SkillId,
    stats: SkillStats,
}

fn e_step_student(
    student: StudentId,
    subs: &[&SkillSubsequence],
    skill_params: &[BktParams],
    grid: &AbilityGrid,
) -> Result<(f64, AbilityPosterior, Vec<LevelSkillStats>)> {
    let mut log_w: Vec<f64> =
        grid.prior_weights.iter().map(|w| w.max(PROB_FLOOR).ln()).collect();
    let mut all_stats = Vec::with_capacity(grid.len() * subs.len());
    for (level, &a) in grid.levels.iter().enumerate() {
        for sub in subs {
            let adjusted = with_ability(&skill_params[sub.skill], a)?;
            let (ll, stats) = forward_backward_stats(sub, &adjusted);
            log_w[level] += ll;
            all_stats.push(LevelSkillStats { level, skill: sub.skill, stats });
        }
    }
    let norm = logsumexp(&log_w);
    if !norm.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite ability posterior for student {student}"
        )));
    }
    let weights: Vec<f64> = log_w.iter().map(|lw| (lw - norm).exp()).collect();
    Ok((norm, AbilityPosterior { student, weights }, all_stats))
}

/// Scaled forward-backward over one subsequence under the given (already
/// ability-adjusted) parameters, returning the loglik and expected stats.
fn forward_backward_stats(sub: &SkillSubsequence, params: &BktParams) -> (f64, SkillStats) {
    let items = &sub.items;
    let n = items.len();
    let mut stats = SkillStats::default();
    if n == 0 {
        return (0.0, stats);
    }
    let emission = |state: usize, correct: bool| -> f64 {
        match (state, correct) {
            (0, true) => params.guess,
            (0, false) => 1.0 - params.guess,
            (1, true) => 1.0 - params.slip,
            (1, false) => params.slip,
            _ => unreachable!(),
        }
    };
    let matrix = |gap: usize| -> [[f64; 2]; 2] {
        let survive = (1.0 - params.forget).powi(gap as i32);
        let up = params.learn * survive;
        [[1.0 - up, up], [1.0 - survive, survive]]
    };

    let pi = [1.0 - params.prior, params.prior];
    let mut alpha = vec![[0.0f64; 2]; n];
    let mut scale = vec![0.0f64; n];
    for s in 0..2 {
        alpha[0][s] = pi[s] * emission(s, items[0].correct);
    }
    scale[0] = (alpha[0][0] + alpha[0][1]).max(PROB_FLOOR);
    alpha[0][0] /= scale[0];
    alpha[0][1] /= scale[0];
    let mats: Vec<[[f64; 2]; 2]> = std::iter::once([[0.0; 2]; 2])
        .chain(items[1..].iter().map(|it| matrix(it.gap)))
        .collect();
    for j in 1..n {
        for s in 0..2 {
            let pred = alpha[j - 1][0] * mats[j][0][s] + alpha[j - 1][1] * mats[j][1][s];
            alpha[j][s] = pred * emission(s, items[j].correct);
        }
        scale[j] = (alpha[j][0] + alpha[j][1]).max(PROB_FLOOR);
        alpha[j][0] /= scale[j];
        alpha[j][1] /= scale[j];
    }
    let mut beta = vec![[0.0f64; 2]; n];
    beta[n - 1] = [1.0, 1.0];
    for j in (0..n - 1).rev() {
        for s in 0..2 {
            let mut acc = 0.0;
            for s2 in 0..2 {
                acc += mats[j + 1][s][s2] * emission(s2, items[j + 1].correct) * beta[j + 1][s2];
            }
            beta[j][s] = acc / scale[j + 1];
        }
    }
    for j in 0..n {
        let g0 = alpha[j][0] * beta[j][0];
        let g1 = alpha[j][1] * beta[j][1];
        let x = items[j].correct as u8 as f64;
        stats.n0 += g0;
        stats.c0 += g0 * x;
        stats.n1 += g1;
        stats.w1 += g1 * (1.0 - x);
        if j == 0 {
            stats.prior_num += g1;
            stats.prior_den += 1.0;
        }
        if j + 1 < n {
            let entry = stats.trans.entry(items[j + 1].gap).or_insert([0.0; 4]);
            for s in 0..2 {
                for s2 in 0..2 {
                    entry[s * 2 + s2] += alpha[j][s]
                        * mats[j + 1][s][s2]
                        * emission(s2, items[j + 1].correct)
                        * beta[j + 1][s2]
                        / scale[j + 1];
                }
            }
        }
    }
    (scale.iter().map(|c| c.ln()).sum(), stats)
}

/// M-step under ability weighting. Prior, learn and forget do not depend on
/// the ability, so their expected counts pool across levels and the classic
/// updates apply. Guess and slip are shifted per level by the logit link, so
/// their base rates are found by 1-D search on the pooled per-level counts,
/// never accepting a value worse than the current one.
fn m_step_ability(
    per_level: &[SkillStats],
    current: &BktParams,
    grid: &AbilityGrid,
    config: &FitConfig,
) -> BktParams {
    const LO: f64 = 1e-4;
    const HI: f64 = 1.0 - 1e-4;
    let mut next = *current;

    let prior_num: f64 = per_level.iter().map(|s| s.prior_num).sum();
    let prior_den: f64 = per_level.iter().map(|s| s.prior_den).sum();
    if prior_den > 0.0 {
        next.prior = (prior_num / prior_den).clamp(LO, HI);
    }

    let gs_hi = config.guess_slip_max - LO;
    let q_guess = |g: f64| -> f64 {
        let b = logit(g);
        per_level
            .iter()
            .zip(&grid.levels)
            .map(|(s, &a)| {
                let p = sigmoid(b + a).clamp(1e-12, 1.0 - 1e-12);
                s.c0 * p.ln() + (s.n0 - s.c0) * (1.0 - p).ln()
            })
            .sum()
    };
    let cand = golden_section_max(&q_guess, LO, gs_hi, 60);
    if q_guess(cand) >= q_guess(next.guess.clamp(LO, gs_hi)) {
        next.guess = cand;
    } else {
        next.guess = next.guess.clamp(LO, gs_hi);
    }
    let q_slip = |s_rate: f64| -> f64 {
        let b = logit(s_rate);
        per_level
            .iter()
            .zip(&grid.levels)
            .map(|(s, &a)| {
                let p = sigmoid(b - a).clamp(1e-12, 1.0 - 1e-12);
                s.w1 * p.ln() + (s.n1 - s.w1) * (1.0 - p).ln()
            })
            .sum()
    };
    let cand = golden_section_max(&q_slip, LO, gs_hi, 60);
    if q_slip(cand) >= q_slip(next.slip.clamp(LO, gs_hi)) {
        next.slip = cand;
    } else {
        next.slip = next.slip.clamp(LO, gs_hi);
    }

    let mut trans: std::collections::BTreeMap<usize, [f64; 4]> = Default::default();
    for s in per_level {
        for (&gap, counts) in &s.trans {
            let e = trans.entry(gap).or_insert([0.0; 4]);
            for k in 0..4 {
                e[k] += counts[k];
            }
        }
    }
    let q_trans = |learn: f64, forget: f64| -> f64 {
        trans
            .iter()
            .map(|(&gap, c)| {
                let survive = (1.0 - forget).powi(gap as i32);
                let up = (learn * survive).clamp(1e-12, 1.0 - 1e-12);
                let stay = survive.clamp(1e-12, 1.0 - 1e-12);
                c[0] * (1.0 - up).ln()
                    + c[1] * up.ln()
                    + c[2] * (1.0 - stay).ln()
                    + c[3] * stay.ln()
            })
            .sum()
    };
    let total_from_un: f64 = trans.values().map(|c| c[0] + c[1]).sum();
    if !config.forgetting {
        if total_from_un > 0.0 {
            let up: f64 = trans.values().map(|c| c[1]).sum();
            next.learn = (up / total_from_un).clamp(LO, HI);
        }
        next.forget = 0.0;
    } else if !trans.is_empty() {
        let mut learn = next.learn;
        let mut forget = next.forget.clamp(1e-6, HI);
        for _ in 0..3 {
            let f_now = forget;
            let cand = golden_section_max(|l| q_trans(l, f_now), LO, HI, 48);
            if q_trans(cand, f_now) >= q_trans(learn, f_now) {
                learn = cand;
            }
            let l_now = learn;
            let cand = golden_section_max(|f| q_trans(l_now, f), 1e-6, HI, 48);
            if q_trans(l_now, cand) >= q_trans(l_now, forget) {
                forget = cand;
            }
        }
        next.learn = learn;
        next.forget = forget;
    }
    next
}

/// Online predictions for every student of a dataset, flattened into
/// evaluation records.
pub fn predict_dataset(
    dataset: &Dataset,
    partition: &Partition,
    skill_params: &[BktParams],
    grid: &AbilityGrid,
) -> Result<Vec<PredictionRecord>> {
    let mut records = Vec::with_capacity(dataset.n_trials());
    for seq in &dataset.students {
        let preds = predict_online(seq, partition, skill_params, grid)?;
        for (tr, p) in seq.trials.iter().zip(preds) {
            records.push(PredictionRecord {
                student: seq.student,
                t: tr.t,
                group: crate::eval::group_name(dataset, seq.student, tr.t),
                predicted: p,
                observed: tr.correct,
            });
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{SkillItem, StudentSequence, Trial, Vocab};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(prior: f64, learn: f64, forget: f64, guess: f64, slip: f64) -> BktParams {
        BktParams::new(prior, learn, forget, guess, slip).unwrap()
    }

    #[test]
    fn gauss_hermite_seven_matches_tabulated_nodes() {
        let (nodes, weights) = gauss_hermite(7);
        let expected = [
            -2.651961356835233,
            -1.673551628767471,
            -0.816287882858965,
            0.0,
            0.816287882858965,
            1.673551628767471,
            2.651961356835233,
        ];
        for (a, b) in nodes.iter().zip(expected) {
            assert_relative_eq!(a, &b, epsilon = 1e-9);
        }
        let total: f64 = weights.iter().sum();
        assert_relative_eq!(total, std::f64::consts::PI.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn grid_is_symmetric_normalized_and_unit_variance() {
        for n in [3usize, 5, 7, 9, 11] {
            let grid = AbilityGrid::standard_normal(n).unwrap();
            grid.validate().unwrap();
            let sum: f64 = grid.prior_weights.iter().sum();
            assert_relative_eq!(sum, 1.0, epsilon = 1e-10);
            for i in 0..n {
                assert_relative_eq!(grid.levels[i], -grid.levels[n - 1 - i], epsilon = 1e-8);
            }
            // Second moment of a standard normal, integrated exactly.
            let var: f64 =
                grid.levels.iter().zip(&grid.prior_weights).map(|(a, w)| w * a * a).sum();
            assert_relative_eq!(var, 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn adjusted_params_identity_and_hand_value() {
        let p = params(0.5, 0.2, 0.0, 0.2, 0.1);
        let (g, s) = ability_adjusted_params(&p, 0.0).unwrap();
        assert_relative_eq!(g, 0.2, epsilon = 1e-12);
        assert_relative_eq!(s, 0.1, epsilon = 1e-12);

        let (g, _) = ability_adjusted_params(&p, 1.0).unwrap();
        assert_relative_eq!(g, sigmoid(logit(0.2) + 1.0), epsilon = 1e-12);
        assert!((g - 0.4046).abs() < 1e-4);
    }

    #[test]
    fn adjusted_params_monotone_in_ability() {
        let p = params(0.5, 0.2, 0.0, 0.3, 0.2);
        let levels = [-2.0, -1.0, 0.0, 1.0, 2.0];
        let out: Vec<(f64, f64)> =
            levels.iter().map(|&a| ability_adjusted_params(&p, a).unwrap()).collect();
        for w in out.windows(2) {
            assert!(w[1].0 > w[0].0, "guess must increase with ability");
            assert!(w[1].1 < w[0].1, "slip must decrease with ability");
        }
        for (g, s) in out {
            assert!(g > 0.0 && g < 1.0 && s > 0.0 && s < 1.0);
        }
    }

    #[test]
    fn adjusted_params_reject_degenerate_rates() {
        let p = params(0.5, 0.2, 0.0, 0.0, 0.1);
        assert!(ability_adjusted_params(&p, 0.5).is_err());
        let p = params(0.5, 0.2, 0.0, 0.2, 1.0);
        assert!(ability_adjusted_params(&p, 0.5).is_err());
    }

    fn subseq(skill: SkillId, correct: &[bool]) -> SkillSubsequence {
        let items = correct
            .iter()
            .enumerate()
            .map(|(i, &c)| SkillItem { i, t: i, correct: c, gap: if i == 0 { 0 } else { 1 } })
            .collect();
        SkillSubsequence { student: 0, skill, items }
    }

    #[test]
    fn zero_ability_collapses_to_plain_bkt() {
        let sp = vec![params(0.4, 0.2, 0.0, 0.2, 0.1), params(0.6, 0.3, 0.1, 0.25, 0.15)];
        let s0 = subseq(0, &[true, false, true]);
        let s1 = subseq(1, &[false, false, true, true]);
        let subs = vec![&s0, &s1];
        let joint = student_loglik_given_ability(&subs, &sp, 0.0).unwrap();
        let separate = bkt::sequence_loglik(&s0, &sp[0]).unwrap()
            + bkt::sequence_loglik(&s1, &sp[1]).unwrap();
        assert_relative_eq!(joint, separate, epsilon = 1e-12);
    }

    #[test]
    fn single_skill_matches_adjusted_oracle() {
        let sp = vec![params(0.4, 0.2, 0.05, 0.2, 0.1)];
        let s0 = subseq(0, &[true, true, false]);
        let a = 0.7;
        let direct = student_loglik_given_ability(&[&s0], &sp, a).unwrap();
        let adjusted = with_ability(&sp[0], a).unwrap();
        assert_relative_eq!(
            direct,
            bkt::sequence_loglik(&s0, &adjusted).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn all_correct_prefers_higher_ability() {
        let sp = vec![params(0.3, 0.1, 0.0, 0.2, 0.2)];
        let s0 = subseq(0, &[true; 12]);
        let low = student_loglik_given_ability(&[&s0], &sp, -1.0).unwrap();
        let high = student_loglik_given_ability(&[&s0], &sp, 1.0).unwrap();
        assert!(high >= low);
    }

    #[test]
    fn posterior_with_no_data_is_the_prior() {
        let grid = AbilityGrid::default();
        let sp = vec![params(0.4, 0.2, 0.0, 0.2, 0.1)];
        let post = ability_posterior(0, &[], &sp, &grid).unwrap();
        for (w, p) in post.weights.iter().zip(&grid.prior_weights) {
            assert_relative_eq!(w, p, epsilon = 1e-12);
        }
    }

    #[test]
    fn posterior_concentrates_on_long_all_correct_history() {
        let grid = AbilityGrid::default();
        let sp = vec![params(0.3, 0.05, 0.0, 0.2, 0.3)];
        let s0 = subseq(0, &[true; 60]);
        let post = ability_posterior(0, &[&s0], &sp, &grid).unwrap();
        let sum: f64 = post.weights.iter().sum();
        assert_relative_eq!(sum, 1.0, epsilon = 1e-9);
        let top_mass: f64 = post.weights[grid.len() - 2..].iter().sum();
        assert!(top_mass > 0.5, "top-level mass {top_mass}");
    }

    fn sequence(student: StudentId, labels: &[usize], correct: &[bool]) -> StudentSequence {
        let trials = labels
            .iter()
            .zip(correct)
            .enumerate()
            .map(|(t, (&label, &c))| Trial { t, label, correct: c, expert_skill: None })
            .collect();
        StudentSequence { student, trials }
    }

    #[test]
    fn online_first_trial_is_the_prior_mixture() {
        let grid = AbilityGrid::default();
        let sp = vec![params(0.4, 0.2, 0.0, 0.2, 0.1)];
        let partition = Partition::per_label(1);
        let seq = sequence(0, &[0, 0], &[true, false]);
        let preds = predict_online(&seq, &partition, &sp, &grid).unwrap();
        let expected: f64 = grid
            .levels
            .iter()
            .zip(&grid.prior_weights)
            .map(|(&a, &w)| {
                let adj = with_ability(&sp[0], a).unwrap();
                w * bkt::emit_predict(KnowledgeBelief::from_prior(&adj), &adj)
            })
            .sum();
        assert_relative_eq!(preds[0], expected, epsilon = 1e-12);
    }

    #[test]
    fn online_predictions_are_causal() {
        let grid = AbilityGrid::default();
        let sp = vec![
            params(0.4, 0.2, 0.05, 0.2, 0.1),
            params(0.3, 0.3, 0.0, 0.25, 0.2),
        ];
        let partition = Partition::from_assignment(&[0, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let labels: Vec<usize> = (0..20).map(|_| rng.random_range(0..2)).collect();
        let correct: Vec<bool> = (0..20).map(|_| rng.random_bool(0.6)).collect();
        let seq = sequence(0, &labels, &correct);
        let full = predict_online(&seq, &partition, &sp, &grid).unwrap();
        for cut in 1..labels.len() {
            let prefix = sequence(0, &labels[..cut], &correct[..cut]);
            let partial = predict_online(&prefix, &partition, &sp, &grid).unwrap();
            for (a, b) in partial.iter().zip(&full[..cut]) {
                assert_relative_eq!(a, b, epsilon = 1e-12);
            }
        }
    }

    /// Interleaved multi-skill data where each student's ability shifts
    /// guess/slip through the logit link, mirroring the model.
    fn simulate_ability_dataset(
        skill_params: &[BktParams],
        abilities: &[f64],
        n_students: usize,
        trials_per_skill: usize,
        seed: u64,
    ) -> Dataset {
        let n_skills = skill_params.len();
        let mut student_vocab = Vocab::new();
        let mut label_vocab = Vocab::new();
        for k in 0..n_skills {
            label_vocab.intern(&format!("k{k}"));
        }
        let mut students = Vec::with_capacity(n_students);
        for s in 0..n_students {
            let sid = student_vocab.intern(&format!("s{s:04}"));
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let a = abilities[s % abilities.len()];
            let mut mastered: Vec<bool> =
                skill_params.iter().map(|p| rng.random_bool(p.prior)).collect();
            let mut trials = Vec::new();
            for t in 0..n_skills * trials_per_skill {
                let skill = t % n_skills;
                let p = &skill_params[skill];
                let (guess_a, slip_a) = ability_adjusted_params(p, a).unwrap();
                let p_correct = if mastered[skill] { 1.0 - slip_a } else { guess_a };
                let correct = rng.random_bool(p_correct);
                trials.push(Trial { t, label: skill, correct, expert_skill: None });
                if mastered[skill] {
                    mastered[skill] = !rng.random_bool(p.forget);
                } else {
                    mastered[skill] = rng.random_bool(p.learn);
                }
            }
            students.push(StudentSequence { student: sid, trials });
        }
        Dataset { students, student_vocab, label_vocab, skill_vocab: Vocab::new() }
    }

    #[test]
    fn em_separates_ability_groups_with_monotone_trace() {
        let truth = vec![
            params(0.2, 0.15, 0.0, 0.25, 0.2),
            params(0.3, 0.2, 0.0, 0.3, 0.25),
        ];
        let ds = simulate_ability_dataset(&truth, &[-1.0, 1.0], 200, 12, 31);
        let partition = Partition::per_label(2);
        let grid = AbilityGrid::default();
        let config = AbilityFitConfig {
            base: FitConfig { restarts: 1, seed: 2, ..FitConfig::default() },
            max_iters: 30,
            ..AbilityFitConfig::default()
        };
        let fit = fit_em_abilities(&ds, &partition, &grid, &config).unwrap();
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8, "marginal loglik decreased: {w:?}");
        }
        // Posterior means should separate the alternating ability groups.
        let mut hits = 0usize;
        for post in &fit.posteriors {
            let mean = post.mean(&fit.grid);
            let truth_sign = if post.student % 2 == 0 { -1.0 } else { 1.0 };
            if mean * truth_sign > 0.0 {
                hits += 1;
            }
        }
        let accuracy = hits as f64 / fit.posteriors.len() as f64;
        assert!(accuracy >= 0.8, "group recovery accuracy {accuracy}");
    }
}
