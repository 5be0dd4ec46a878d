//! Nonparametric skill discovery.
//!
//! MCMC over partitions of the exercise labels into latent skills. The prior
//! over partitions is a Chinese restaurant process whose seating weights are
//! multiplied by an affinity term favoring labels that share an
//! expert-provided skill tag. Each label is Gibbs-resampled against the
//! knowledge-tracing likelihood of the skills it could join, with one
//! auxiliary parameter draw for opening a new skill; per-skill parameters are
//! refreshed by Metropolis-Hastings under a uniform prior.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bkt::BktParams;
use crate::data::{Dataset, LabelId, Partition, StudentId};
use crate::error::{Error, Result};
use crate::eval::PredictionRecord;
use crate::math::{logit, logsumexp, sigmoid, PROB_FLOOR};

/// One state of the sampler: a partition plus the parameters of its skills.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcrpState {
    pub partition: Partition,
    /// Parameters indexed by the partition's skill ids.
    pub skill_params: Vec<BktParams>,
    /// Concentration of the seating process.
    pub alpha: f64,
    /// Expert-affinity strength (log-scale weight; 0 recovers the plain CRP).
    pub gamma: f64,
}

impl WcrpState {
    pub fn validate(&self) -> Result<()> {
        if self.skill_params.len() != self.partition.n_skills() {
            return Err(Error::InvalidArgument(format!(
                "{} parameter sets for {} skills",
                self.skill_params.len(),
                self.partition.n_skills()
            )));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return Err(Error::InvalidArgument("alpha must be positive".into()));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidArgument("gamma must be non-negative".into()));
        }
        Ok(())
    }
}

/// Sampler settings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct WcrpConfig {
    pub alpha: f64,
    pub gamma: f64,
    /// Sample a forgetting rate per skill; pinned at 0 when false.
    pub forgetting: bool,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thin: usize,
    /// Metropolis-Hastings passes over each skill's parameters per sweep.
    pub mh_passes: usize,
    /// Half-width of the reflected random-walk proposal.
    pub mh_scale: f64,
    pub seed: u64,
}

impl Default for WcrpConfig {
    fn default() -> Self {
        WcrpConfig {
            alpha: 1.0,
            gamma: 4.0f64.ln(),
            forgetting: false,
            sweeps: 500,
            burn_in: 200,
            thin: 5,
            mh_passes: 3,
            mh_scale: 0.15,
            seed: 0,
        }
    }
}

const GUESS_SLIP_MAX: f64 = 0.5;
const DETACHED: usize = usize::MAX;

#[derive(Debug, Clone, Copy)]
struct TrialView {
    t: usize,
    label: usize,
    correct: bool,
}

/// Gibbs sampler over (partition, skill parameters).
pub struct WcrpSampler {
    students: Vec<Vec<TrialView>>,
    /// Students (by internal index) that practice each label.
    label_students: Vec<Vec<usize>>,
    /// Majority expert tag per label, if the dataset carries tags.
    label_expert: Vec<Option<usize>>,
    /// Fixed per-student emission offset on the logit scale (used by the
    /// combined model, where abilities come from a prior fit). Zero otherwise.
    ability: Vec<f64>,
    student_ids: Vec<StudentId>,

    assignment: Vec<usize>,
    members: Vec<Vec<usize>>,
    params: Vec<BktParams>,

    config: WcrpConfig,
    rng: ChaCha8Rng,
}

impl WcrpSampler {
    /// Builds a sampler over the dataset. The initial partition groups labels
    /// by expert tag when tags exist and gives every label its own skill
    /// otherwise; initial parameters are drawn from the prior.
    pub fn new(dataset: &Dataset, config: &WcrpConfig) -> Result<Self> {
        Self::with_abilities(dataset, config, None)
    }

    /// Like [`WcrpSampler::new`] with fixed per-student ability offsets that
    /// shift guess up and slip down inside every likelihood evaluation.
    pub fn with_abilities(
        dataset: &Dataset,
        config: &WcrpConfig,
        abilities: Option<&HashMap<StudentId, f64>>,
    ) -> Result<Self> {
        let n_labels = dataset.label_vocab.len();
        if n_labels == 0 {
            return Err(Error::EmptyDataset);
        }
        if config.alpha.is_nan() || config.alpha <= 0.0 || config.gamma < 0.0 {
            return Err(Error::InvalidArgument("need alpha > 0 and gamma >= 0".into()));
        }
        let mut students = Vec::with_capacity(dataset.n_students());
        let mut student_ids = Vec::with_capacity(dataset.n_students());
        let mut label_students: Vec<Vec<usize>> = vec![Vec::new(); n_labels];
        let mut ability = Vec::with_capacity(dataset.n_students());
        for (idx, seq) in dataset.students.iter().enumerate() {
            let trials: Vec<TrialView> = seq
                .trials
                .iter()
                .map(|tr| TrialView { t: tr.t, label: tr.label, correct: tr.correct })
                .collect();
            let mut seen = vec![false; n_labels];
            for tr in &trials {
                if !seen[tr.label] {
                    seen[tr.label] = true;
                    label_students[tr.label].push(idx);
                }
            }
            students.push(trials);
            student_ids.push(seq.student);
            ability.push(abilities.and_then(|m| m.get(&seq.student).copied()).unwrap_or(0.0));
        }

        // Majority expert tag per label.
        let mut tag_counts: Vec<HashMap<usize, usize>> = vec![HashMap::new(); n_labels];
        for seq in &dataset.students {
            for tr in &seq.trials {
                if let Some(sk) = tr.expert_skill {
                    *tag_counts[tr.label].entry(sk).or_insert(0) += 1;
                }
            }
        }
        let label_expert: Vec<Option<usize>> = tag_counts
            .iter()
            .map(|c| c.iter().max_by_key(|(_, &n)| n).map(|(&sk, _)| sk))
            .collect();

        let initial = if label_expert.iter().any(Option::is_some) {
            Partition::from_expert_tags(dataset)
        } else {
            Partition::per_label(n_labels)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let params = (0..initial.n_skills())
            .map(|_| draw_prior_params(&mut rng, config.forgetting))
            .collect();
        Ok(WcrpSampler {
            students,
            label_students,
            label_expert,
            ability,
            student_ids,
            assignment: initial.assignment().to_vec(),
            members: initial.members(),
            params,
            config: *config,
            rng,
        })
    }

    pub fn state(&self) -> WcrpState {
        WcrpState {
            partition: Partition::from_assignment(&self.assignment),
            skill_params: reorder_params_like_partition(&self.assignment, &self.params),
            alpha: self.config.alpha,
            gamma: self.config.gamma,
        }
    }

    /// Replaces the sampler state (partition and parameters).
    pub fn set_state(&mut self, state: &WcrpState) -> Result<()> {
        state.validate()?;
        if state.partition.n_labels() != self.assignment.len() {
            return Err(Error::InvalidArgument("partition label count mismatch".into()));
        }
        self.assignment = state.partition.assignment().to_vec();
        self.members = state.partition.members();
        self.params = state.skill_params.clone();
        self.config.alpha = state.alpha;
        self.config.gamma = state.gamma;
        Ok(())
    }

    pub fn n_skills(&self) -> usize {
        self.members.len()
    }

    /// Total data log-likelihood under the current state.
    pub fn total_loglik(&self) -> f64 {
        (0..self.members.len()).map(|k| self.skill_loglik(k, &self.params[k])).sum()
    }

    /// One full sweep: every label reseated once, then every skill's
    /// parameters refreshed by Metropolis-Hastings.
    pub fn sweep(&mut self) {
        for label in 0..self.assignment.len() {
            self.resample_label(label);
        }
        self.resample_params();
    }

    /// Log seating weights for a label: one entry per existing skill (with
    /// the label detached) plus the new-skill entry, and the parameters the
    /// new skill would take. Restores the state before returning.
    pub fn assignment_log_weights(&mut self, label: LabelId) -> (Vec<f64>, f64, BktParams) {
        let (outcome, aux) = self.detach(label);
        let (weights, new_w) = self.seating_log_weights(label, &aux);
        match outcome {
            Reattach::Existing(k) => self.attach(label, k),
            Reattach::Emptied => self.attach_new(label, aux),
        }
        (weights, new_w, aux)
    }

    fn seating_log_weights(&self, label: LabelId, aux: &BktParams) -> (Vec<f64>, f64) {
        let students = &self.label_students[label];
        let n_skills = self.members.len();

        // Data terms: for each candidate skill, the change in its likelihood
        // from absorbing the label's trials; for the auxiliary option, the
        // likelihood of the label's trials alone. Per-student terms are
        // summed in index order so the result is thread-count independent.
        let deltas: Vec<(Vec<f64>, f64)> = if students.len() >= 64 {
            students
                .par_iter()
                .map(|&s| self.student_deltas(s, label, aux, n_skills))
                .collect()
        } else {
            students.iter().map(|&s| self.student_deltas(s, label, aux, n_skills)).collect()
        };

        let mut weights = Vec::with_capacity(n_skills);
        for k in 0..n_skills {
            let aff: f64 =
                self.members[k].iter().map(|&other| self.affinity(label, other)).sum();
            let data: f64 = deltas.iter().map(|(per_skill, _)| per_skill[k]).sum();
            weights.push(aff.ln() + data);
        }
        let new_data: f64 = deltas.iter().map(|(_, fresh)| fresh).sum();
        let new_weight = self.config.alpha.ln() + new_data;
        (weights, new_weight)
    }

    fn student_deltas(
        &self,
        student: usize,
        label: LabelId,
        aux: &BktParams,
        n_skills: usize,
    ) -> (Vec<f64>, f64) {
        let mut per_skill = Vec::with_capacity(n_skills);
        for k in 0..n_skills {
            let (with, without) = self.student_loglik_pair(student, k, label, &self.params[k]);
            per_skill.push(with - without);
        }
        let fresh = self.student_label_only_loglik(student, label, aux);
        (per_skill, fresh)
    }

    fn affinity(&self, a: LabelId, b: LabelId) -> f64 {
        match (self.label_expert[a], self.label_expert[b]) {
            (Some(x), Some(y)) if x == y => self.config.gamma.exp(),
            _ => 1.0,
        }
    }

    fn resample_label(&mut self, label: LabelId) {
        let (_, aux) = self.detach(label);
        let (mut weights, new_weight) = self.seating_log_weights(label, &aux);
        weights.push(new_weight);
        let norm = logsumexp(&weights);
        let u: f64 = self.rng.random();
        let mut cum = 0.0;
        let mut choice = weights.len() - 1;
        for (k, w) in weights.iter().enumerate() {
            cum += (w - norm).exp();
            if u < cum {
                choice = k;
                break;
            }
        }
        if choice == weights.len() - 1 {
            self.attach_new(label, aux);
        } else {
            self.attach(label, choice);
        }
    }

    /// Removes the label from its skill. When this empties the skill, the
    /// skill is deleted and its parameters become the auxiliary draw for the
    /// new-skill option; otherwise a fresh prior draw is used.
    fn detach(&mut self, label: LabelId) -> (Reattach, BktParams) {
        let k = self.assignment[label];
        debug_assert_ne!(k, DETACHED);
        self.assignment[label] = DETACHED;
        let pos = self.members[k].iter().position(|&l| l == label).expect("member");
        self.members[k].swap_remove(pos);
        if self.members[k].is_empty() {
            let aux = self.params[k];
            self.remove_skill(k);
            (Reattach::Emptied, aux)
        } else {
            let aux = draw_prior_params(&mut self.rng, self.config.forgetting);
            (Reattach::Existing(k), aux)
        }
    }

    fn remove_skill(&mut self, k: usize) {
        self.members.swap_remove(k);
        self.params.swap_remove(k);
        if k < self.members.len() {
            // The former last skill now sits at k; repoint its labels.
            for &l in &self.members[k] {
                self.assignment[l] = k;
            }
        }
    }

    fn attach(&mut self, label: LabelId, skill: usize) {
        self.assignment[label] = skill;
        self.members[skill].push(label);
    }

    fn attach_new(&mut self, label: LabelId, params: BktParams) {
        let k = self.members.len();
        self.members.push(vec![label]);
        self.params.push(params);
        self.assignment[label] = k;
    }

    /// Metropolis-Hastings refresh of every skill's parameters under a
    /// uniform prior (guess and slip bounded below 0.5). The proposal mixes a
    /// reflected random walk with occasional independent redraws; both are
    /// symmetric, so the acceptance ratio is the likelihood ratio.
    fn resample_params(&mut self) {
        for _ in 0..self.config.mh_passes {
            for k in 0..self.members.len() {
                let mut current = self.params[k];
                let mut current_ll = self.skill_loglik(k, &current);
                for field in 0..5 {
                    if field == 2 && !self.config.forgetting {
                        continue;
                    }
                    let (lo, hi) = match field {
                        3 | 4 => (0.0, GUESS_SLIP_MAX),
                        _ => (0.0, 1.0),
                    };
                    let mut proposal = current;
                    let value = param_field(&current, field);
                    let new_value = if self.rng.random::<f64>() < 0.2 {
                        self.rng.random_range(lo..hi)
                    } else {
                        reflect(
                            value
                                + self
                                    .rng
                                    .random_range(-self.config.mh_scale..self.config.mh_scale),
                            lo,
                            hi,
                        )
                    };
                    set_param_field(&mut proposal, field, new_value);
                    let proposal_ll = self.skill_loglik(k, &proposal);
                    if proposal_ll - current_ll >= self.rng.random::<f64>().max(1e-300).ln() {
                        current = proposal;
                        current_ll = proposal_ll;
                    }
                }
                self.params[k] = current;
            }
        }
    }

    fn skill_loglik(&self, skill: usize, params: &BktParams) -> f64 {
        let mut seen = vec![false; self.students.len()];
        let mut total = 0.0;
        for &label in &self.members[skill] {
            for &s in &self.label_students[label] {
                if !seen[s] {
                    seen[s] = true;
                    total += self.student_skill_loglik(s, skill, params);
                }
            }
        }
        total
    }

    fn adjusted(&self, student: usize, params: &BktParams) -> (f64, f64) {
        let a = self.ability[student];
        if a == 0.0 {
            (params.guess, params.slip)
        } else {
            let g = sigmoid(logit(params.guess.clamp(1e-9, 1.0 - 1e-9)) + a);
            let s = sigmoid(logit(params.slip.clamp(1e-9, 1.0 - 1e-9)) - a);
            (g, s)
        }
    }

    fn student_skill_loglik(&self, student: usize, skill: usize, params: &BktParams) -> f64 {
        let (guess, slip) = self.adjusted(student, params);
        let mut walk = BeliefWalk::new(params, guess, slip);
        for tr in &self.students[student] {
            if self.assignment[tr.label] == skill {
                walk.observe(tr.t, tr.correct);
            }
        }
        walk.loglik
    }

    /// Logliks of one student's subsequence for a skill with and without the
    /// trials of `extra_label`, in a single pass over the trial stream.
    fn student_loglik_pair(
        &self,
        student: usize,
        skill: usize,
        extra_label: LabelId,
        params: &BktParams,
    ) -> (f64, f64) {
        let (guess, slip) = self.adjusted(student, params);
        let mut with_walk = BeliefWalk::new(params, guess, slip);
        let mut without_walk = BeliefWalk::new(params, guess, slip);
        for tr in &self.students[student] {
            let in_skill = self.assignment[tr.label] == skill;
            if in_skill || tr.label == extra_label {
                with_walk.observe(tr.t, tr.correct);
            }
            if in_skill {
                without_walk.observe(tr.t, tr.correct);
            }
        }
        (with_walk.loglik, without_walk.loglik)
    }

    fn student_label_only_loglik(
        &self,
        student: usize,
        label: LabelId,
        params: &BktParams,
    ) -> f64 {
        let (guess, slip) = self.adjusted(student, params);
        let mut walk = BeliefWalk::new(params, guess, slip);
        for tr in &self.students[student] {
            if tr.label == label {
                walk.observe(tr.t, tr.correct);
            }
        }
        walk.loglik
    }

    pub fn student_ids(&self) -> &[StudentId] {
        &self.student_ids
    }
}

/// Parameters reindexed to match `Partition::from_assignment`'s compaction,
/// which numbers skills by first label appearance.
fn reorder_params_like_partition(assignment: &[usize], params: &[BktParams]) -> Vec<BktParams> {
    let mut order: Vec<usize> = Vec::new();
    for &s in assignment {
        if !order.contains(&s) {
            order.push(s);
        }
    }
    order.iter().map(|&s| params[s]).collect()
}

enum Reattach {
    Existing(usize),
    Emptied,
}

/// Incremental forward filter over one skill subsequence.
struct BeliefWalk {
    prior: f64,
    learn: f64,
    forget: f64,
    guess: f64,
    slip: f64,
    mastery: f64,
    last_t: Option<usize>,
    loglik: f64,
}

impl BeliefWalk {
    fn new(params: &BktParams, guess: f64, slip: f64) -> Self {
        BeliefWalk {
            prior: params.prior,
            learn: params.learn,
            forget: params.forget,
            guess,
            slip,
            mastery: params.prior,
            last_t: None,
            loglik: 0.0,
        }
    }

    /// Mastery belief and correctness probability the walk assigns to a
    /// practice at absolute trial `t`, before observing its outcome.
    #[inline]
    fn predict_at(&self, t: usize) -> (f64, f64) {
        let mastery = match self.last_t {
            Some(prev) => {
                let gap = (t - prev) as i32;
                let learned = self.mastery + (1.0 - self.mastery) * self.learn;
                learned * (1.0 - self.forget).powi(gap)
            }
            None => self.prior,
        };
        (mastery, mastery * (1.0 - self.slip) + (1.0 - mastery) * self.guess)
    }

    #[inline]
    fn observe(&mut self, t: usize, correct: bool) {
        let (mastery, p) = self.predict_at(t);
        let (p_obs, lik_mastered) =
            if correct { (p, 1.0 - self.slip) } else { (1.0 - p, self.slip) };
        self.loglik += p_obs.max(PROB_FLOOR).ln();
        self.mastery = (mastery * lik_mastered / p_obs.max(PROB_FLOOR)).clamp(0.0, 1.0);
        self.last_t = Some(t);
    }
}

fn draw_prior_params(rng: &mut ChaCha8Rng, forgetting: bool) -> BktParams {
    BktParams {
        prior: rng.random_range(0.0..1.0),
        learn: rng.random_range(0.0..1.0),
        forget: if forgetting { rng.random_range(0.0..1.0) } else { 0.0 },
        guess: rng.random_range(0.0..GUESS_SLIP_MAX),
        slip: rng.random_range(0.0..GUESS_SLIP_MAX),
    }
}

fn param_field(p: &BktParams, field: usize) -> f64 {
    match field {
        0 => p.prior,
        1 => p.learn,
        2 => p.forget,
        3 => p.guess,
        _ => p.slip,
    }
}

fn set_param_field(p: &mut BktParams, field: usize, value: f64) {
    match field {
        0 => p.prior = value,
        1 => p.learn = value,
        2 => p.forget = value,
        3 => p.guess = value,
        _ => p.slip = value,
    }
}

fn reflect(mut x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    if width <= 0.0 {
        return lo;
    }
    for _ in 0..64 {
        if x < lo {
            x = 2.0 * lo - x;
        } else if x > hi {
            x = 2.0 * hi - x;
        } else {
            return x;
        }
    }
    x.clamp(lo, hi)
}

/// One retained posterior sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WcrpSample {
    pub partition: Partition,
    pub skill_params: Vec<BktParams>,
    pub loglik: f64,
}

/// Result of a full chain run.
#[derive(Debug, Clone)]
pub struct ChainResult {
    pub samples: Vec<WcrpSample>,
    /// The retained sample with the highest posterior score (data likelihood
    /// plus seating prior).
    pub map_sample: WcrpSample,
    /// Index of `map_sample` within `samples`.
    pub map_index: usize,
    /// Per-sweep total log-likelihood, for diagnostics.
    pub trace: Vec<f64>,
}

/// Log prior probability of a partition under the weighted seating process,
/// evaluated by seating labels in index order. With gamma = 0 this is the
/// exchangeable CRP prior.
pub fn wcrp_log_prior(
    partition: &Partition,
    alpha: f64,
    gamma: f64,
    label_expert: &[Option<usize>],
) -> f64 {
    let affinity = |a: usize, b: usize| -> f64 {
        match (label_expert.get(a).copied().flatten(), label_expert.get(b).copied().flatten()) {
            (Some(x), Some(y)) if x == y => gamma.exp(),
            _ => 1.0,
        }
    };
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); partition.n_skills()];
    let mut log_p = 0.0;
    for label in 0..partition.n_labels() {
        let k = partition.skill_of(label);
        let mut total = alpha;
        for seated in members.iter().filter(|m| !m.is_empty()) {
            total += seated.iter().map(|&other| affinity(label, other)).sum::<f64>();
        }
        let numer = if members[k].is_empty() {
            alpha
        } else {
            members[k].iter().map(|&other| affinity(label, other)).sum::<f64>()
        };
        log_p += (numer / total).ln();
        members[k].push(label);
    }
    log_p
}

/// Index of the maximum-a-posteriori sample: data likelihood plus the
/// partition's seating prior.
pub fn map_sample_index(
    samples: &[WcrpSample],
    alpha: f64,
    gamma: f64,
    label_expert: &[Option<usize>],
) -> usize {
    samples
        .iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| {
            let score_a = a.loglik + wcrp_log_prior(&a.partition, alpha, gamma, label_expert);
            let score_b = b.loglik + wcrp_log_prior(&b.partition, alpha, gamma, label_expert);
            score_a.partial_cmp(&score_b).unwrap()
        })
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// Runs a chain: burn-in sweeps, then thinned sample collection.
pub fn run_chain(
    dataset: &Dataset,
    config: &WcrpConfig,
    abilities: Option<&HashMap<StudentId, f64>>,
) -> Result<ChainResult> {
    let mut sampler = WcrpSampler::with_abilities(dataset, config, abilities)?;
    let mut samples = Vec::new();
    let mut trace = Vec::with_capacity(config.sweeps);
    for sweep in 0..config.sweeps {
        sampler.sweep();
        let ll = sampler.total_loglik();
        trace.push(ll);
        if sweep >= config.burn_in && (sweep - config.burn_in) % config.thin.max(1) == 0 {
            let state = sampler.state();
            samples.push(WcrpSample {
                partition: state.partition,
                skill_params: state.skill_params,
                loglik: ll,
            });
        }
    }
    if samples.is_empty() {
        return Err(Error::InvalidArgument(
            "chain retained no samples; increase sweeps or lower burn-in".into(),
        ));
    }
    let map_index =
        map_sample_index(&samples, config.alpha, config.gamma, &sampler.label_expert);
    let map_sample = samples[map_index].clone();
    Ok(ChainResult { samples, map_sample, map_index, trace })
}

/// One spec-level Gibbs sweep over a standalone state. Prefer [`WcrpSampler`]
/// for chains; this rebuilds the dataset caches each call.
pub fn gibbs_sweep(
    state: &WcrpState,
    dataset: &Dataset,
    config: &WcrpConfig,
    sweep_seed: u64,
) -> Result<WcrpState> {
    let mut cfg = *config;
    cfg.alpha = state.alpha;
    cfg.gamma = state.gamma;
    cfg.seed = sweep_seed;
    let mut sampler = WcrpSampler::new(dataset, &cfg)?;
    sampler.set_state(state)?;
    sampler.sweep();
    Ok(sampler.state())
}

/// Posterior-averaged per-trial predictions on a test set: the mean over
/// retained samples of the causal forward prediction under that sample's
/// partition and parameters.
pub fn posterior_predict(samples: &[WcrpSample], test: &Dataset) -> Result<Vec<PredictionRecord>> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no retained samples to predict with".into()));
    }
    for sample in samples {
        if sample.partition.n_labels() < test.label_vocab.len() {
            return Err(Error::VocabMismatch(format!(
                "sample partition covers {} labels, test set has {}",
                sample.partition.n_labels(),
                test.label_vocab.len()
            )));
        }
    }
    let mut sums: Vec<Vec<f64>> =
        test.students.iter().map(|s| vec![0.0; s.trials.len()]).collect();
    for sample in samples {
        for (si, seq) in test.students.iter().enumerate() {
            let preds = forward_predict_sequence(seq, &sample.partition, &sample.skill_params);
            for (t, p) in preds.into_iter().enumerate() {
                sums[si][t] += p;
            }
        }
    }
    let n = samples.len() as f64;
    let mut records = Vec::with_capacity(test.n_trials());
    for (si, seq) in test.students.iter().enumerate() {
        for tr in &seq.trials {
            records.push(PredictionRecord {
                student: seq.student,
                t: tr.t,
                group: crate::eval::group_name(test, seq.student, tr.t),
                predicted: sums[si][tr.t] / n,
                observed: tr.correct,
            });
        }
    }
    Ok(records)
}

/// Causal forward predictions for one student's full trial stream under a
/// partition, one belief walk per skill.
fn forward_predict_sequence(
    seq: &crate::data::StudentSequence,
    partition: &Partition,
    skill_params: &[BktParams],
) -> Vec<f64> {
    let mut walks: Vec<Option<BeliefWalk>> = (0..partition.n_skills()).map(|_| None).collect();
    let mut preds = Vec::with_capacity(seq.trials.len());
    for tr in &seq.trials {
        let skill = partition.skill_of(tr.label);
        let params = &skill_params[skill];
        let walk =
            walks[skill].get_or_insert_with(|| BeliefWalk::new(params, params.guess, params.slip));
        let (_, p) = walk.predict_at(tr.t);
        preds.push(p);
        walk.observe(tr.t, tr.correct);
    }
    preds
}

/// Adjusted Rand index between two flat cluster assignments.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n == 0 {
        return 1.0;
    }
    let ka = a.iter().max().map(|m| m + 1).unwrap_or(0);
    let kb = b.iter().max().map(|m| m + 1).unwrap_or(0);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1;
    }
    let choose2 = |v: usize| (v * v.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&v| choose2(v)).sum();
    let sum_a: f64 = table.iter().map(|row| choose2(row.iter().sum())).sum();
    let sum_b: f64 = (0..kb).map(|j| choose2(table.iter().map(|row| row[j]).sum())).sum();
    let total = choose2(n);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-12 {
        return 1.0;
    }
    (sum_ij - expected) / (max_index - expected)
}
