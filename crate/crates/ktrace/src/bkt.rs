//! The two-state knowledge-tracing hidden Markov model.
//!
//! A skill is either mastered or not. Observed correctness is emitted through
//! guess/slip noise; mastery is gained with a per-practice learning
//! probability and, when forgetting is enabled, lost with a per-trial decay
//! that compounds over the absolute-trial distance between consecutive
//! practices of the skill. Parameters are fit by expectation-maximization
//! with gap-dependent transition matrices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{SkillItem, SkillSubsequence, StudentId};
use crate::error::{Error, Result};
use crate::math::{golden_section_max, PROB_FLOOR};

/// The five model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BktParams {
    /// Probability the skill is mastered before the first practice.
    pub prior: f64,
    /// Probability of transitioning to mastery at a practice opportunity.
    pub learn: f64,
    /// Per-trial probability of losing mastery; 0 recovers the classic model.
    pub forget: f64,
    /// Probability of a correct response without mastery.
    pub guess: f64,
    /// Probability of an incorrect response despite mastery.
    pub slip: f64,
}

impl BktParams {
    pub fn new(prior: f64, learn: f64, forget: f64, guess: f64, slip: f64) -> Result<Self> {
        let p = BktParams { prior, learn, forget, guess, slip };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("prior", self.prior),
            ("learn", self.learn),
            ("forget", self.forget),
            ("guess", self.guess),
            ("slip", self.slip),
        ] {
            if v.is_nan() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be a probability, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Filtered belief that the skill is in the mastered state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeBelief {
    pub mastery: f64,
}

impl KnowledgeBelief {
    pub fn from_prior(params: &BktParams) -> Self {
        KnowledgeBelief { mastery: params.prior }
    }
}

/// Predictive probability of a correct response under the current belief.
pub fn emit_predict(belief: KnowledgeBelief, params: &BktParams) -> f64 {
    belief.mastery * (1.0 - params.slip) + (1.0 - belief.mastery) * params.guess
}

/// Bayes correction of the belief after observing one outcome.
pub fn posterior_update(
    belief: KnowledgeBelief,
    observed: bool,
    params: &BktParams,
) -> Result<KnowledgeBelief> {
    let m = belief.mastery;
    let (lik_mastered, lik_unmastered) = if observed {
        (1.0 - params.slip, params.guess)
    } else {
        (params.slip, 1.0 - params.guess)
    };
    let denom = m * lik_mastered + (1.0 - m) * lik_unmastered;
    if denom <= 0.0 {
        return Err(Error::Numerical(
            "observation has zero probability under the current parameters".into(),
        ));
    }
    Ok(KnowledgeBelief { mastery: (m * lik_mastered / denom).clamp(0.0, 1.0) })
}

/// Advances the belief across the interval to the next same-skill practice:
/// one learning step attributed to the trial just practiced, then forgetting
/// decay compounded once per intervening absolute trial.
pub fn transition(
    belief: KnowledgeBelief,
    params: &BktParams,
    gap: usize,
) -> Result<KnowledgeBelief> {
    if gap < 1 {
        return Err(Error::InvalidArgument(format!("gap must be >= 1, got {gap}")));
    }
    let learned = belief.mastery + (1.0 - belief.mastery) * params.learn;
    let survive = (1.0 - params.forget).powi(gap as i32);
    Ok(KnowledgeBelief { mastery: (learned * survive).clamp(0.0, 1.0) })
}

/// Per-trial predictive probabilities of a correct response, strictly causal:
/// the prediction for item `i` conditions only on items `0..i`.
pub fn sequence_predictions(subseq: &SkillSubsequence, params: &BktParams) -> Result<Vec<f64>> {
    let mut preds = Vec::with_capacity(subseq.items.len());
    let mut belief = KnowledgeBelief::from_prior(params);
    for (j, item) in subseq.items.iter().enumerate() {
        preds.push(emit_predict(belief, params));
        belief = posterior_update(belief, item.correct, params)?;
        if let Some(next) = subseq.items.get(j + 1) {
            belief = transition(belief, params, next.gap)?;
        }
    }
    Ok(preds)
}

/// Log-likelihood (nats) of the observed outcomes: the sum over trials of the
/// log predictive probability assigned to what actually happened.
pub fn sequence_loglik(subseq: &SkillSubsequence, params: &BktParams) -> Result<f64> {
    let mut ll = 0.0;
    let mut belief = KnowledgeBelief::from_prior(params);
    for (j, item) in subseq.items.iter().enumerate() {
        let p = emit_predict(belief, params);
        let p_obs = if item.correct { p } else { 1.0 - p };
        ll += p_obs.max(PROB_FLOOR).ln();
        belief = posterior_update_floored(belief, item.correct, params);
        if let Some(next) = subseq.items.get(j + 1) {
            belief = transition(belief, params, next.gap)?;
        }
    }
    Ok(ll)
}

// Like posterior_update but with the predictive probability floored, so that
// likelihood evaluation never aborts mid-sequence on degenerate parameters.
fn posterior_update_floored(
    belief: KnowledgeBelief,
    observed: bool,
    params: &BktParams,
) -> KnowledgeBelief {
    let m = belief.mastery;
    let (lik_mastered, lik_unmastered) = if observed {
        (1.0 - params.slip, params.guess)
    } else {
        (params.slip, 1.0 - params.guess)
    };
    let denom = (m * lik_mastered + (1.0 - m) * lik_unmastered).max(PROB_FLOOR);
    KnowledgeBelief { mastery: (m * lik_mastered / denom).clamp(0.0, 1.0) }
}

/// 2x2 transition matrix for a given gap; rows index the source state
/// (0 = unmastered, 1 = mastered), columns the destination.
fn transition_matrix(params: &BktParams, gap: usize) -> [[f64; 2]; 2] {
    let survive = (1.0 - params.forget).powi(gap as i32);
    let to_mastered_from_un = params.learn * survive;
    [
        [1.0 - to_mastered_from_un, to_mastered_from_un],
        [1.0 - survive, survive],
    ]
}

fn emission(params: &BktParams, state: usize, correct: bool) -> f64 {
    match (state, correct) {
        (0, true) => params.guess,
        (0, false) => 1.0 - params.guess,
        (1, true) => 1.0 - params.slip,
        (1, false) => params.slip,
        _ => unreachable!(),
    }
}

/// Expected sufficient statistics pooled over subsequences.
#[derive(Debug, Clone, Default)]
struct EStats {
    /// Expected mastered-at-start count and number of sequences.
    prior_num: f64,
    prior_den: f64,
    /// Emission stats: expected (state-0 correct, state-0 total,
    /// state-1 incorrect, state-1 total).
    guess_num: f64,
    guess_den: f64,
    slip_num: f64,
    slip_den: f64,
    /// Expected transition counts bucketed by gap: gap -> 2x2 counts.
    trans: std::collections::BTreeMap<usize, [[f64; 4]; 1]>,
    loglik: f64,
}

impl EStats {
    fn trans_entry(&mut self, gap: usize) -> &mut [f64; 4] {
        &mut self.trans.entry(gap).or_insert([[0.0; 4]])[0]
    }
}

/// Forward-backward pass over one subsequence, accumulating expected
/// statistics into `stats`, optionally downweighted by `weight`.
fn accumulate_forward_backward(
    items: &[SkillItem],
    params: &BktParams,
    weight: f64,
    stats: &mut EStats,
) {
    let n = items.len();
    if n == 0 {
        return;
    }
    let pi = [1.0 - params.prior, params.prior];
    let mut alpha = vec![[0.0f64; 2]; n];
    let mut scale = vec![0.0f64; n];
    let mut mats = Vec::with_capacity(n);
    mats.push([[0.0; 2]; 2]); // placeholder for index 0
    for item in &items[1..] {
        mats.push(transition_matrix(params, item.gap));
    }

    // Scaled forward pass.
    for s in 0..2 {
        alpha[0][s] = pi[s] * emission(params, s, items[0].correct);
    }
    scale[0] = (alpha[0][0] + alpha[0][1]).max(PROB_FLOOR);
    alpha[0][0] /= scale[0];
    alpha[0][1] /= scale[0];
    for j in 1..n {
        let a = &mats[j];
        for s in 0..2 {
            let pred = alpha[j - 1][0] * a[0][s] + alpha[j - 1][1] * a[1][s];
            alpha[j][s] = pred * emission(params, s, items[j].correct);
        }
        scale[j] = (alpha[j][0] + alpha[j][1]).max(PROB_FLOOR);
        alpha[j][0] /= scale[j];
        alpha[j][1] /= scale[j];
    }

    // Scaled backward pass.
    let mut beta = vec![[0.0f64; 2]; n];
    beta[n - 1] = [1.0, 1.0];
    for j in (0..n - 1).rev() {
        let a = &mats[j + 1];
        for s in 0..2 {
            let mut acc = 0.0;
            for (s2, beta_next) in beta[j + 1].iter().enumerate() {
                acc += a[s][s2] * emission(params, s2, items[j + 1].correct) * beta_next;
            }
            beta[j][s] = acc / scale[j + 1];
        }
    }

    // Posterior state marginals and pairwise transition marginals.
    for j in 0..n {
        let g0 = alpha[j][0] * beta[j][0];
        let g1 = alpha[j][1] * beta[j][1];
        let x = if items[j].correct { 1.0 } else { 0.0 };
        stats.guess_den += weight * g0;
        stats.guess_num += weight * g0 * x;
        stats.slip_den += weight * g1;
        stats.slip_num += weight * g1 * (1.0 - x);
        if j == 0 {
            stats.prior_num += weight * g1;
            stats.prior_den += weight;
        }
        if j + 1 < n {
            let a = &mats[j + 1];
            let entry = stats.trans_entry(items[j + 1].gap);
            for s in 0..2 {
                for s2 in 0..2 {
                    let xi = alpha[j][s]
                        * a[s][s2]
                        * emission(params, s2, items[j + 1].correct)
                        * beta[j + 1][s2]
                        / scale[j + 1];
                    entry[s * 2 + s2] += weight * xi;
                }
            }
        }
    }

    stats.loglik += weight * scale.iter().map(|c| c.ln()).sum::<f64>();
}

/// Fit settings for [`fit_em`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitConfig {
    /// Fit the forgetting rate; when false it is pinned at 0.
    pub forgetting: bool,
    pub max_iters: usize,
    /// Relative log-likelihood improvement below which iteration stops.
    pub rel_tol: f64,
    /// Number of jittered restarts; the best final likelihood wins.
    pub restarts: usize,
    /// Upper bound on guess and slip, keeping the model identifiable.
    pub guess_slip_max: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            forgetting: false,
            max_iters: 200,
            rel_tol: 1e-6,
            restarts: 5,
            guess_slip_max: 0.5,
            seed: 0,
        }
    }
}

impl FitConfig {
    fn initial_params(&self) -> BktParams {
        BktParams {
            prior: 0.5,
            learn: 0.2,
            forget: if self.forgetting { 0.05 } else { 0.0 },
            guess: 0.2,
            slip: 0.1,
        }
    }
}

const PARAM_LO: f64 = 1e-4;
const PARAM_HI: f64 = 1.0 - 1e-4;

/// Result of one EM fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: BktParams,
    pub loglik: f64,
    /// Per-iteration total log-likelihood of the winning restart.
    pub trace: Vec<f64>,
    /// Traces of every restart, in restart order.
    pub all_traces: Vec<Vec<f64>>,
}

/// Fits the model to a collection of subsequences by EM with gap-dependent
/// transition matrices. The per-iteration log-likelihood is non-decreasing.
pub fn fit_em(subseqs: &[&SkillSubsequence], config: &FitConfig) -> Result<FitResult> {
    if subseqs.iter().all(|s| s.items.is_empty()) {
        return Err(Error::InvalidArgument(
            "cannot fit on empty subsequences".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut best: Option<FitResult> = None;
    let mut all_traces = Vec::new();
    for restart in 0..config.restarts.max(1) {
        let mut init = config.initial_params();
        if restart > 0 {
            let mut jitter = |v: f64, lo: f64, hi: f64| {
                (v + rng.random_range(-0.15..0.15)).clamp(lo, hi)
            };
            init.prior = jitter(init.prior, PARAM_LO, PARAM_HI);
            init.learn = jitter(init.learn, PARAM_LO, PARAM_HI);
            init.guess = jitter(init.guess, PARAM_LO, config.guess_slip_max - PARAM_LO);
            init.slip = jitter(init.slip, PARAM_LO, config.guess_slip_max - PARAM_LO);
            if config.forgetting {
                init.forget = jitter(init.forget, PARAM_LO, 0.5);
            }
        }
        let (params, trace) = em_run(subseqs, init, config);
        let loglik = *trace.last().unwrap();
        all_traces.push(trace.clone());
        if best.as_ref().map_or(true, |b| loglik > b.loglik) {
            best = Some(FitResult { params, loglik, trace, all_traces: Vec::new() });
        }
    }
    let mut result = best.unwrap();
    result.all_traces = all_traces;
    Ok(result)
}

fn em_run(
    subseqs: &[&SkillSubsequence],
    init: BktParams,
    config: &FitConfig,
) -> (BktParams, Vec<f64>) {
    let mut params = init;
    let mut trace = Vec::new();
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..config.max_iters {
        let mut stats = EStats::default();
        for sub in subseqs {
            accumulate_forward_backward(&sub.items, &params, 1.0, &mut stats);
        }
        trace.push(stats.loglik);
        params = m_step(&stats, params, config);
        if prev_ll.is_finite() {
            let rel = (stats.loglik - prev_ll).abs() / stats.loglik.abs().max(1.0);
            if rel < config.rel_tol {
                break;
            }
        }
        prev_ll = stats.loglik;
    }
    (params, trace)
}

/// Maximizes the expected complete-data log-likelihood. Prior, guess, and
/// slip have closed forms (clamped to the identifiability box, which is the
/// box-constrained maximizer of their concave objectives). Learn and forget
/// are maximized by coordinate golden-section search, never accepting a value
/// worse than the current one.
fn m_step(stats: &EStats, current: BktParams, config: &FitConfig) -> BktParams {
    let mut next = current;
    if stats.prior_den > 0.0 {
        next.prior = (stats.prior_num / stats.prior_den).clamp(PARAM_LO, PARAM_HI);
    }
    let gs_hi = config.guess_slip_max - PARAM_LO;
    if stats.guess_den > 0.0 {
        next.guess = (stats.guess_num / stats.guess_den).clamp(PARAM_LO, gs_hi);
    }
    if stats.slip_den > 0.0 {
        next.slip = (stats.slip_num / stats.slip_den).clamp(PARAM_LO, gs_hi);
    }

    let q_trans = |learn: f64, forget: f64| -> f64 {
        let mut q = 0.0;
        for (&gap, counts) in &stats.trans {
            let survive = (1.0 - forget).powi(gap as i32);
            let up = (learn * survive).clamp(1e-12, 1.0 - 1e-12);
            let stay = survive.clamp(1e-12, 1.0 - 1e-12);
            let c = &counts[0];
            q += c[0] * (1.0 - up).ln()
                + c[1] * up.ln()
                + c[2] * (1.0 - stay).ln()
                + c[3] * stay.ln();
        }
        q
    };

    let total_from_un: f64 = stats.trans.values().map(|c| c[0][0] + c[0][1]).sum();
    if total_from_un > 0.0 || config.forgetting {
        if !config.forgetting {
            // Gap-independent closed form: forget = 0 makes the gap irrelevant.
            let to_mastered: f64 = stats.trans.values().map(|c| c[0][1]).sum();
            if total_from_un > 0.0 {
                next.learn = (to_mastered / total_from_un).clamp(PARAM_LO, PARAM_HI);
            }
            next.forget = 0.0;
        } else {
            let mut learn = next.learn;
            let mut forget = next.forget.clamp(1e-6, PARAM_HI);
            for _ in 0..3 {
                let f_now = forget;
                let cand = golden_section_max(|l| q_trans(l, f_now), PARAM_LO, PARAM_HI, 48);
                if q_trans(cand, f_now) >= q_trans(learn, f_now) {
                    learn = cand;
                }
                let l_now = learn;
                let cand = golden_section_max(|f| q_trans(l_now, f), 1e-6, PARAM_HI, 48);
                if q_trans(l_now, cand) >= q_trans(l_now, forget) {
                    forget = cand;
                }
            }
            next.learn = learn;
            next.forget = forget;
        }
    }
    next
}

/// Samples subsequences from known parameters: one skill, consecutive
/// practices (all gaps 1). Useful for parameter-recovery experiments.
pub fn simulate_subsequences(
    params: &BktParams,
    n_students: usize,
    n_trials: usize,
    seed: u64,
) -> Vec<SkillSubsequence> {
    let mut out = Vec::with_capacity(n_students);
    for s in 0..n_students {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let mut mastered = rng.random_bool(params.prior);
        let mut items = Vec::with_capacity(n_trials);
        for t in 0..n_trials {
            let p_correct = if mastered { 1.0 - params.slip } else { params.guess };
            let correct = rng.random_bool(p_correct);
            items.push(SkillItem { i: t, t, correct, gap: if t == 0 { 0 } else { 1 } });
            if mastered {
                mastered = !rng.random_bool(params.forget);
            } else {
                mastered = rng.random_bool(params.learn);
            }
        }
        out.push(SkillSubsequence { student: s as StudentId, skill: 0, items });
    }
    out
}

/// Fits one model per skill over a parsed dataset. Skills without any
/// training items fall back to the initialization defaults.
pub fn fit_skills(
    subseqs: &[SkillSubsequence],
    n_skills: usize,
    config: &FitConfig,
) -> Result<Vec<BktParams>> {
    use rayon::prelude::*;
    let groups = crate::data::group_by_skill(subseqs, n_skills);
    groups
        .par_iter()
        .map(|group| {
            if group.is_empty() {
                return Ok(config.initial_params());
            }
            fit_em(group, config).map(|r| r.params)
        })
        .collect()
}

/// Forward predictions for every trial of a dataset under a partition and
/// per-skill parameters, flattened into evaluation records.
pub fn predict_dataset(
    dataset: &crate::data::Dataset,
    partition: &crate::data::Partition,
    skill_params: &[BktParams],
) -> Result<Vec<crate::eval::PredictionRecord>> {
    if skill_params.len() != partition.n_skills() {
        return Err(Error::InvalidArgument(format!(
            "expected {} per-skill parameter sets, got {}",
            partition.n_skills(),
            skill_params.len()
        )));
    }
    let subseqs = crate::data::parse_into_skill_sequences(dataset, partition)?;
    let mut records = Vec::with_capacity(dataset.n_trials());
    for sub in &subseqs {
        let preds = sequence_predictions(sub, &skill_params[sub.skill])?;
        for (item, p) in sub.items.iter().zip(preds) {
            records.push(crate::eval::PredictionRecord {
                student: sub.student,
                t: item.t,
                group: crate::eval::group_name(dataset, sub.student, item.t),
                predicted: p,
                observed: item.correct,
            });
        }
    }
    records.sort_by_key(|r| (r.student, r.t));
    Ok(records)
}
