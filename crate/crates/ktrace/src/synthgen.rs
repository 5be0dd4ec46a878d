//! Synthetic student generator.
//!
//! Virtual students answer one shared, fixed sequence of exercises. Each
//! exercise has a hidden skill and a difficulty; a student's ability evolves
//! by a drift-diffusion walk (generally increasing with practice), and
//! response correctness is a Bernoulli draw under guessing-corrected
//! item-response theory. Labels are exercise-indexed; the exercise-to-skill
//! map is emitted separately so models must infer it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, StudentSequence, Trial, Vocab};
use crate::error::{Error, Result};
use crate::math::sigmoid;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_students: usize,
    pub n_exercises: usize,
    pub n_skills: usize,
    /// Guess floor `c` of the response model `c + (1-c) * sigmoid(a - d)`.
    pub guess_floor: f64,
    /// Exercise difficulties are drawn Normal(difficulty_mean, difficulty_spread).
    pub difficulty_mean: f64,
    pub difficulty_spread: f64,
    /// Starting ability draw, shared across a student's skills.
    pub ability_mean: f64,
    pub ability_spread: f64,
    /// Deterministic ability gain applied after each practice (logit units).
    pub drift: f64,
    /// Standard deviation of the zero-mean diffusion noise per practice.
    pub diffusion: f64,
    /// Advance a per-skill ability track on trials of that skill; when false
    /// a single global track advances on every trial.
    pub per_skill_ability: bool,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_students: 1000,
            n_exercises: 50,
            n_skills: 5,
            guess_floor: 0.25,
            difficulty_mean: 0.0,
            difficulty_spread: 1.0,
            ability_mean: 0.0,
            ability_spread: 1.0,
            drift: 0.05,
            diffusion: 0.1,
            per_skill_ability: true,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_students == 0 || self.n_exercises == 0 || self.n_skills == 0 {
            return Err(Error::InvalidArgument(
                "student, exercise and skill counts must be positive".into(),
            ));
        }
        if self.n_skills > self.n_exercises {
            return Err(Error::InvalidArgument(format!(
                "cannot spread {} skills over {} exercises",
                self.n_skills, self.n_exercises
            )));
        }
        if !(0.0..1.0).contains(&self.guess_floor) {
            return Err(Error::InvalidArgument(format!(
                "guess floor must be in [0,1), got {}",
                self.guess_floor
            )));
        }
        if self.difficulty_spread < 0.0 || self.ability_spread < 0.0 || self.diffusion < 0.0 {
            return Err(Error::InvalidArgument("spreads must be non-negative".into()));
        }
        Ok(())
    }
}

/// The hidden quantities behind a generated dataset, emitted separately so
/// that models cannot see them.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    /// Hidden skill of each exercise, indexed by exercise.
    pub exercise_skill: Vec<usize>,
    /// Difficulty of each exercise, indexed by exercise.
    pub difficulty: Vec<f64>,
    /// Shared exercise order presented to every student.
    pub exercise_order: Vec<usize>,
    /// Ability in force at each trial, per student, in trial order.
    pub ability: Vec<Vec<f64>>,
}

/// Generates a dataset and its hidden ground truth. Fully deterministic given
/// the config; student trajectories use independent per-student RNG streams,
/// so the output does not depend on scheduling.
pub fn generate(config: &SyntheticConfig) -> Result<(Dataset, GroundTruth)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    // Hidden exercise -> skill map with every skill nonempty.
    let mut exercise_skill: Vec<usize> = (0..config.n_exercises)
        .map(|e| {
            if e < config.n_skills {
                e
            } else {
                rng.random_range(0..config.n_skills)
            }
        })
        .collect();
    use rand::seq::SliceRandom;
    exercise_skill.shuffle(&mut rng);

    let difficulty_dist = Normal::new(config.difficulty_mean, config.difficulty_spread)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let difficulty: Vec<f64> =
        (0..config.n_exercises).map(|_| difficulty_dist.sample(&mut rng)).collect();

    // One fixed exercise order shared by all students.
    let mut exercise_order: Vec<usize> = (0..config.n_exercises).collect();
    exercise_order.shuffle(&mut rng);

    let label_width = (config.n_exercises as f64).log10().ceil().max(1.0) as usize;
    let mut label_vocab = Vocab::new();
    for e in 0..config.n_exercises {
        label_vocab.intern(&format!("e{e:0label_width$}"));
    }
    let student_width = (config.n_students as f64).log10().ceil().max(1.0) as usize;
    let mut student_vocab = Vocab::new();
    for s in 0..config.n_students {
        student_vocab.intern(&format!("s{s:0student_width$}"));
    }

    let per_student: Vec<(Vec<Trial>, Vec<f64>)> = (0..config.n_students)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(1 + s as u64);
            let start =
                config.ability_mean + config.ability_spread * sample_standard_normal(&mut rng);
            let mut tracks = vec![start; config.n_skills];
            let mut global = start;
            let mut trials = Vec::with_capacity(config.n_exercises);
            let mut abilities = Vec::with_capacity(config.n_exercises);
            for (t, &exercise) in exercise_order.iter().enumerate() {
                let skill = exercise_skill[exercise];
                let ability = if config.per_skill_ability { tracks[skill] } else { global };
                abilities.push(ability);
                let p = config.guess_floor
                    + (1.0 - config.guess_floor) * sigmoid(ability - difficulty[exercise]);
                let correct = rng.random_bool(p);
                trials.push(Trial { t, label: exercise, correct, expert_skill: None });
                let step = config.drift + config.diffusion * sample_standard_normal(&mut rng);
                if config.per_skill_ability {
                    tracks[skill] += step;
                } else {
                    global += step;
                }
            }
            (trials, abilities)
        })
        .collect();

    let mut students = Vec::with_capacity(config.n_students);
    let mut ability = Vec::with_capacity(config.n_students);
    for (s, (trials, abilities)) in per_student.into_iter().enumerate() {
        students.push(StudentSequence { student: s, trials });
        ability.push(abilities);
    }

    let dataset = Dataset {
        students,
        student_vocab,
        label_vocab,
        skill_vocab: Vocab::new(),
    };
    let truth = GroundTruth { exercise_skill, difficulty, exercise_order, ability };
    Ok((dataset, truth))
}

fn sample_standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    <rand_distr::StandardNormal as Distribution<f64>>::sample(&rand_distr::StandardNormal, rng)
}

/// Writes the dataset in the generic CSV interchange layout.
pub fn write_generic_csv(dataset: &Dataset, path: impl AsRef<std::path::Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from("student_id,exercise_id,correct\n");
    for seq in &dataset.students {
        for tr in &seq.trials {
            out.push_str(&format!(
                "{},{},{}\n",
                dataset.student_vocab.name(seq.student),
                dataset.label_vocab.name(tr.label),
                tr.correct as u8
            ));
        }
    }
    std::fs::write(path, out).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })
}
