//! Domain data model: trials, student sequences, datasets, label partitions,
//! CSV ingestion and train/test splitting.
//!
//! A dataset is a set of per-student trial sequences. Each trial carries an
//! exercise label; labels may index individual exercises or expert-provided
//! skills. All types are immutable after construction and cheap to share
//! across worker threads.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into a [`Dataset`]'s label vocabulary.
pub type LabelId = usize;
/// Index into a [`Dataset`]'s expert-skill vocabulary.
pub type ExpertSkillId = usize;
/// Index into a [`Dataset`]'s student vocabulary.
pub type StudentId = usize;
/// Index of a latent skill under a [`Partition`].
pub type SkillId = usize;

/// An interned, insertion-ordered set of opaque string identifiers.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.index.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_owned());
        self.index.insert(name.to_owned(), id);
        id
    }

    pub fn get(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Rebuilds the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.clone(), i))
            .collect();
    }

    pub fn from_names(names: Vec<String>) -> Self {
        let mut v = Vocab { names, index: HashMap::new() };
        v.reindex();
        v
    }
}

/// One observed exercise attempt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    /// Absolute trial index within the student's history, 0-based.
    pub t: usize,
    /// Exercise label (exercise-indexed or skill-indexed).
    pub label: LabelId,
    /// Binary outcome.
    pub correct: bool,
    /// Expert-provided skill tag, if the source data has one.
    pub expert_skill: Option<ExpertSkillId>,
}

/// A student's complete ordered trial history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudentSequence {
    pub student: StudentId,
    pub trials: Vec<Trial>,
}

/// A collection of student sequences over a shared label vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub students: Vec<StudentSequence>,
    pub student_vocab: Vocab,
    pub label_vocab: Vocab,
    pub skill_vocab: Vocab,
}

impl Dataset {
    pub fn n_students(&self) -> usize {
        self.students.len()
    }

    pub fn n_trials(&self) -> usize {
        self.students.iter().map(|s| s.trials.len()).sum()
    }

    /// Fraction of correct outcomes over all trials.
    pub fn mean_correct(&self) -> f64 {
        let n = self.n_trials();
        if n == 0 {
            return 0.0;
        }
        let c: usize = self
            .students
            .iter()
            .flat_map(|s| &s.trials)
            .filter(|t| t.correct)
            .count();
        c as f64 / n as f64
    }
}

/// Assignment of every exercise label to exactly one latent skill.
///
/// Skill ids are kept dense: `0..n_skills` with no empty skill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    assignment: Vec<SkillId>,
    n_skills: usize,
}

impl Partition {
    /// Builds a partition from a raw label -> skill map, compacting skill ids.
    pub fn from_assignment(raw: &[usize]) -> Self {
        let mut remap: HashMap<usize, usize> = HashMap::new();
        let mut assignment = Vec::with_capacity(raw.len());
        for &s in raw {
            let next = remap.len();
            let id = *remap.entry(s).or_insert(next);
            assignment.push(id);
        }
        Partition { assignment, n_skills: remap.len() }
    }

    /// Every label is its own skill (classic BKT on exercise-indexed data).
    pub fn per_label(n_labels: usize) -> Self {
        Partition { assignment: (0..n_labels).collect(), n_skills: n_labels }
    }

    /// All labels collapsed into a single skill.
    pub fn single(n_labels: usize) -> Self {
        Partition { assignment: vec![0; n_labels], n_skills: if n_labels == 0 { 0 } else { 1 } }
    }

    /// Groups labels by their expert skill tag. Labels without a tag each get
    /// their own skill. Tags are resolved by majority over the label's trials.
    pub fn from_expert_tags(dataset: &Dataset) -> Self {
        let n_labels = dataset.label_vocab.len();
        // Majority expert tag per label.
        let mut counts: Vec<HashMap<usize, usize>> = vec![HashMap::new(); n_labels];
        for st in &dataset.students {
            for tr in &st.trials {
                if let Some(sk) = tr.expert_skill {
                    *counts[tr.label].entry(sk).or_insert(0) += 1;
                }
            }
        }
        let mut raw = Vec::with_capacity(n_labels);
        let mut next_untagged = dataset.skill_vocab.len();
        for c in &counts {
            match c.iter().max_by_key(|(_, &n)| n) {
                Some((&sk, _)) => raw.push(sk),
                None => {
                    raw.push(next_untagged);
                    next_untagged += 1;
                }
            }
        }
        Partition::from_assignment(&raw)
    }

    pub fn n_labels(&self) -> usize {
        self.assignment.len()
    }

    pub fn n_skills(&self) -> usize {
        self.n_skills
    }

    pub fn skill_of(&self, label: LabelId) -> SkillId {
        self.assignment[label]
    }

    pub fn assignment(&self) -> &[SkillId] {
        &self.assignment
    }

    /// Member labels of each skill.
    pub fn members(&self) -> Vec<Vec<LabelId>> {
        let mut m = vec![Vec::new(); self.n_skills];
        for (label, &s) in self.assignment.iter().enumerate() {
            m[s].push(label);
        }
        m
    }

    /// Member count of each skill.
    pub fn counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.n_skills];
        for &s in &self.assignment {
            c[s] += 1;
        }
        c
    }
}

/// One item of a skill-specific subsequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkillItem {
    /// Relative within-skill index, 0-based.
    pub i: usize,
    /// Absolute trial index in the student's history.
    pub t: usize,
    pub correct: bool,
    /// Absolute-trial distance to the previous same-skill trial; 0 for the
    /// first item of the subsequence (no decay interval precedes it).
    pub gap: usize,
}

/// A student's trials for one skill, in relative order, with the absolute
/// trial distances between consecutive practices preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillSubsequence {
    pub student: StudentId,
    pub skill: SkillId,
    pub items: Vec<SkillItem>,
}

/// Source file layout accepted by [`load_csv`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsvFormat {
    /// Header `student_id,exercise_id,correct[,skill_id][,order]`.
    Generic,
    /// The public Assistments skill-builder layout: `user_id`,
    /// `skill_id`/`skill_name`, `correct`, `order_id`.
    Assistments,
}

impl std::str::FromStr for CsvFormat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generic" => Ok(CsvFormat::Generic),
            "assistments" => Ok(CsvFormat::Assistments),
            other => Err(Error::UnknownFormat(other.to_owned())),
        }
    }
}

/// Options for [`load_csv_with`].
#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub format: CsvFormat,
    /// Drop students that end up with a single trial (on by default).
    pub drop_single_trial_students: bool,
}

impl LoadOptions {
    pub fn new(format: CsvFormat) -> Self {
        LoadOptions { format, drop_single_trial_students: true }
    }
}

struct RawRow {
    student: String,
    label: String,
    correct: bool,
    expert_skill: Option<String>,
    order: Option<i64>,
    file_pos: usize,
}

/// Loads a dataset from a CSV file with default options.
pub fn load_csv(path: impl AsRef<Path>, format: CsvFormat) -> Result<Dataset> {
    load_csv_with(path, LoadOptions::new(format))
}

/// Loads a dataset from a CSV file.
///
/// Within each student, trials are ordered by the order column when present
/// (ties broken by file order) and by file order otherwise. Students left
/// with a single trial are dropped unless disabled in `options`.
pub fn load_csv_with(path: impl AsRef<Path>, options: LoadOptions) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e.to_string()),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::MalformedRow { row: 0, msg: e.to_string() })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);

    let (c_student, c_label, c_correct, c_skill, c_order) = match options.format {
        CsvFormat::Generic => {
            let s = col("student_id").ok_or_else(|| missing_column("student_id"))?;
            let l = col("exercise_id").ok_or_else(|| missing_column("exercise_id"))?;
            let c = col("correct").ok_or_else(|| missing_column("correct"))?;
            (s, l, c, col("skill_id"), col("order"))
        }
        CsvFormat::Assistments => {
            let s = col("user_id").ok_or_else(|| missing_column("user_id"))?;
            // Prefer the numeric skill id; fall back to the skill name.
            let l = col("skill_id")
                .or_else(|| col("skill_name"))
                .ok_or_else(|| missing_column("skill_id/skill_name"))?;
            let c = col("correct").ok_or_else(|| missing_column("correct"))?;
            (s, l, c, None, col("order_id"))
        }
    };

    let mut rows: Vec<RawRow> = Vec::new();
    for (idx, rec) in reader.records().enumerate() {
        let row_no = idx + 2; // 1-based, after the header line
        let rec = rec.map_err(|e| Error::MalformedRow { row: row_no, msg: e.to_string() })?;
        let field = |i: usize| rec.get(i).map(str::trim).unwrap_or("");

        let student = field(c_student).to_owned();
        if student.is_empty() {
            return Err(Error::MalformedRow { row: row_no, msg: "empty student id".into() });
        }
        let label = field(c_label).to_owned();
        if label.is_empty() {
            // Assistments rows without a skill tag carry no usable label.
            if options.format == CsvFormat::Assistments {
                continue;
            }
            return Err(Error::MalformedRow { row: row_no, msg: "empty exercise id".into() });
        }
        let correct = match field(c_correct) {
            "0" => false,
            "1" => true,
            other => {
                return Err(Error::MalformedRow {
                    row: row_no,
                    msg: format!("correct must be 0 or 1, got `{other}`"),
                })
            }
        };
        let expert_skill = match options.format {
            CsvFormat::Generic => c_skill
                .map(|i| field(i).to_owned())
                .filter(|s| !s.is_empty()),
            // Assistments labels are skill-indexed; the label is the tag.
            CsvFormat::Assistments => Some(label.clone()),
        };
        let order = match c_order {
            None => None,
            Some(i) => {
                let raw = field(i);
                if raw.is_empty() {
                    None
                } else {
                    Some(raw.parse::<i64>().map_err(|_| Error::MalformedRow {
                        row: row_no,
                        msg: format!("order key must be an integer, got `{raw}`"),
                    })?)
                }
            }
        };
        rows.push(RawRow { student, label, correct, expert_skill, order, file_pos: idx });
    }

    let mut student_vocab = Vocab::new();
    let mut label_vocab = Vocab::new();
    let mut skill_vocab = Vocab::new();
    let mut per_student: Vec<Vec<(Option<i64>, usize, Trial)>> = Vec::new();

    for row in &rows {
        let sid = student_vocab.intern(&row.student);
        if sid == per_student.len() {
            per_student.push(Vec::new());
        }
        let label = label_vocab.intern(&row.label);
        let expert_skill = row.expert_skill.as_deref().map(|s| skill_vocab.intern(s));
        per_student[sid].push((
            row.order,
            row.file_pos,
            Trial { t: 0, label, correct: row.correct, expert_skill },
        ));
    }

    let mut students = Vec::new();
    for (sid, mut trials) in per_student.into_iter().enumerate() {
        // Stable order-key sort; file order breaks ties and is the fallback.
        trials.sort_by_key(|(order, pos, _)| (order.unwrap_or(i64::MIN), *pos));
        if options.drop_single_trial_students && trials.len() < 2 {
            continue;
        }
        let trials = trials
            .into_iter()
            .enumerate()
            .map(|(t, (_, _, mut trial))| {
                trial.t = t;
                trial
            })
            .collect();
        students.push(StudentSequence { student: sid, trials });
    }

    if students.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(Dataset { students, student_vocab, label_vocab, skill_vocab })
}

fn missing_column(name: &str) -> Error {
    Error::MalformedRow { row: 1, msg: format!("missing required column `{name}`") }
}

/// Splits a dataset into disjoint train/test student sets.
///
/// The assignment depends only on the set of student names and the seed, not
/// on the order students appear in the file. Both halves keep the full label
/// and skill vocabularies.
pub fn split_by_student(
    dataset: &Dataset,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if dataset.n_students() < 2 {
        return Err(Error::InvalidArgument("need at least 2 students to split".into()));
    }
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test_fraction must be in (0,1), got {test_fraction}"
        )));
    }
    let n = dataset.n_students();
    let n_test = (test_fraction * n as f64).round() as usize;
    if n_test == 0 || n_test == n {
        return Err(Error::InvalidArgument(format!(
            "test_fraction {test_fraction} leaves an empty side for {n} students"
        )));
    }

    let mut names: Vec<&str> = dataset
        .students
        .iter()
        .map(|s| dataset.student_vocab.name(s.student))
        .collect();
    names.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    names.shuffle(&mut rng);
    let test_names: std::collections::HashSet<&str> = names[..n_test].iter().copied().collect();

    let mut train_students = Vec::new();
    let mut test_students = Vec::new();
    for st in &dataset.students {
        if test_names.contains(dataset.student_vocab.name(st.student)) {
            test_students.push(st.clone());
        } else {
            train_students.push(st.clone());
        }
    }
    let make = |students| Dataset {
        students,
        student_vocab: dataset.student_vocab.clone(),
        label_vocab: dataset.label_vocab.clone(),
        skill_vocab: dataset.skill_vocab.clone(),
    };
    Ok((make(train_students), make(test_students)))
}

/// Parses every student's trial stream into per-skill subsequences under the
/// given partition, preserving relative order and recording the absolute-trial
/// gap between consecutive practices of the same skill.
pub fn parse_into_skill_sequences(
    dataset: &Dataset,
    partition: &Partition,
) -> Result<Vec<SkillSubsequence>> {
    if partition.n_labels() < dataset.label_vocab.len() {
        let name = dataset.label_vocab.name(partition.n_labels());
        return Err(Error::UnassignedLabel(name.to_owned()));
    }
    let mut out = Vec::new();
    for st in &dataset.students {
        let mut per_skill: HashMap<SkillId, SkillSubsequence> = HashMap::new();
        for tr in &st.trials {
            let skill = partition.skill_of(tr.label);
            let sub = per_skill.entry(skill).or_insert_with(|| SkillSubsequence {
                student: st.student,
                skill,
                items: Vec::new(),
            });
            let gap = match sub.items.last() {
                Some(prev) => tr.t - prev.t,
                None => 0,
            };
            sub.items.push(SkillItem { i: sub.items.len(), t: tr.t, correct: tr.correct, gap });
        }
        let mut subs: Vec<SkillSubsequence> = per_skill.into_values().collect();
        subs.sort_by_key(|s| s.skill);
        out.extend(subs);
    }
    Ok(out)
}

/// Groups subsequences by skill id; index k holds every student's
/// subsequence for skill k.
pub fn group_by_skill(
    subseqs: &[SkillSubsequence],
    n_skills: usize,
) -> Vec<Vec<&SkillSubsequence>> {
    let mut groups: Vec<Vec<&SkillSubsequence>> = vec![Vec::new(); n_skills];
    for sub in subseqs {
        groups[sub.skill].push(sub);
    }
    groups
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn generic_csv_identity_ordering() {
        let f = write_csv("student_id,exercise_id,correct\ns1,a,1\ns1,b,0\ns1,a,1\n");
        let ds = load_csv(f.path(), CsvFormat::Generic).unwrap();
        assert_eq!(ds.n_students(), 1);
        let trials = &ds.students[0].trials;
        assert_eq!(trials.iter().map(|t| t.t).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(ds.label_vocab.len(), 2);
    }

    #[test]
    fn single_trial_students_dropped() {
        let f = write_csv("student_id,exercise_id,correct\ns1,a,1\ns1,b,0\nlonely,a,1\n");
        let ds = load_csv(f.path(), CsvFormat::Generic).unwrap();
        assert_eq!(ds.n_students(), 1);
        assert!(ds
            .students
            .iter()
            .all(|s| ds.student_vocab.name(s.student) != "lonely"));

        let mut opts = LoadOptions::new(CsvFormat::Generic);
        opts.drop_single_trial_students = false;
        let ds = load_csv_with(f.path(), opts).unwrap();
        assert_eq!(ds.n_students(), 2);
    }

    #[test]
    fn shuffled_rows_sorted_by_order_key() {
        let shuffled = write_csv(
            "student_id,exercise_id,correct,order\ns1,c,1,30\ns1,a,0,10\ns1,b,1,20\n",
        );
        let sorted = write_csv(
            "student_id,exercise_id,correct,order\ns1,a,0,10\ns1,b,1,20\ns1,c,1,30\n",
        );
        let ds1 = load_csv(shuffled.path(), CsvFormat::Generic).unwrap();
        let ds2 = load_csv(sorted.path(), CsvFormat::Generic).unwrap();
        let seq1: Vec<(bool, &str)> = ds1.students[0]
            .trials
            .iter()
            .map(|t| (t.correct, ds1.label_vocab.name(t.label)))
            .collect();
        let seq2: Vec<(bool, &str)> = ds2.students[0]
            .trials
            .iter()
            .map(|t| (t.correct, ds2.label_vocab.name(t.label)))
            .collect();
        assert_eq!(seq1, seq2);
    }

    #[test]
    fn malformed_row_names_row_number() {
        let f = write_csv("student_id,exercise_id,correct\ns1,a,1\ns1,b,yes\n");
        let err = load_csv(f.path(), CsvFormat::Generic).unwrap_err();
        match err {
            Error::MalformedRow { row, .. } => assert_eq!(row, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn empty_after_filtering_is_an_error() {
        let f = write_csv("student_id,exercise_id,correct\nlonely,a,1\n");
        assert!(matches!(
            load_csv(f.path(), CsvFormat::Generic),
            Err(Error::EmptyDataset)
        ));
    }

    #[test]
    fn assistments_adapter_maps_columns() {
        let f = write_csv(
            "order_id,user_id,skill_id,skill_name,correct\n\
             5,u1,12,Fractions,1\n3,u1,12,Fractions,0\n4,u1,,Decimals,1\n7,u2,9,Area,0\n8,u2,9,Area,1\n",
        );
        let ds = load_csv(f.path(), CsvFormat::Assistments).unwrap();
        assert_eq!(ds.n_students(), 2);
        // Row with empty skill_id is skipped; remaining u1 trials sorted by order_id.
        let u1 = ds
            .students
            .iter()
            .find(|s| ds.student_vocab.name(s.student) == "u1")
            .unwrap();
        assert_eq!(u1.trials.len(), 2);
        assert!(!u1.trials[0].correct && u1.trials[1].correct);
        // Labels are skill-indexed and double as expert tags.
        assert!(u1.trials.iter().all(|t| t.expert_skill.is_some()));
    }

    #[test]
    fn loading_is_idempotent() {
        let f = write_csv(
            "student_id,exercise_id,correct,skill_id\ns1,a,1,k1\ns1,b,0,k2\ns2,a,0,k1\ns2,b,1,k2\n",
        );
        let d1 = load_csv(f.path(), CsvFormat::Generic).unwrap();
        let d2 = load_csv(f.path(), CsvFormat::Generic).unwrap();
        assert_eq!(d1, d2);
    }

    fn toy_dataset(n_students: usize, n_trials: usize, n_labels: usize) -> Dataset {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut student_vocab = Vocab::new();
        let mut label_vocab = Vocab::new();
        for l in 0..n_labels {
            label_vocab.intern(&format!("e{l}"));
        }
        let students = (0..n_students)
            .map(|s| {
                let sid = student_vocab.intern(&format!("s{s}"));
                let trials = (0..n_trials)
                    .map(|t| Trial {
                        t,
                        label: rng.random_range(0..n_labels),
                        correct: rng.random_bool(0.6),
                        expert_skill: None,
                    })
                    .collect();
                StudentSequence { student: sid, trials }
            })
            .collect();
        Dataset { students, student_vocab, label_vocab, skill_vocab: Vocab::new() }
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let ds = toy_dataset(10, 3, 4);
        let (tr1, te1) = split_by_student(&ds, 0.2, 7).unwrap();
        let (tr2, te2) = split_by_student(&ds, 0.2, 7).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        assert_eq!(tr1.n_students(), 8);
        assert_eq!(te1.n_students(), 2);
        let train_ids: std::collections::HashSet<_> =
            tr1.students.iter().map(|s| s.student).collect();
        assert!(te1.students.iter().all(|s| !train_ids.contains(&s.student)));
        assert_eq!(tr1.n_students() + te1.n_students(), ds.n_students());
    }

    #[test]
    fn split_two_students_half() {
        let ds = toy_dataset(2, 3, 2);
        let (tr, te) = split_by_student(&ds, 0.5, 1).unwrap();
        assert_eq!((tr.n_students(), te.n_students()), (1, 1));
    }

    #[test]
    fn split_seeds_disagree_somewhere() {
        let ds = toy_dataset(10, 2, 3);
        let (_, base) = split_by_student(&ds, 0.3, 0).unwrap();
        let base_ids: Vec<_> = base.students.iter().map(|s| s.student).collect();
        let differs = (1..=20u64).any(|seed| {
            let (_, te) = split_by_student(&ds, 0.3, seed).unwrap();
            te.students.iter().map(|s| s.student).collect::<Vec<_>>() != base_ids
        });
        assert!(differs, "20 different seeds all produced the same split");
    }

    #[test]
    fn split_empty_side_is_an_error() {
        let ds = toy_dataset(3, 2, 2);
        assert!(split_by_student(&ds, 0.01, 0).is_err());
        assert!(split_by_student(&ds, 0.99, 0).is_err());
    }

    #[test]
    fn gap_semantics_match_interleaving_example() {
        // A1-A2-B1-A3 with partition {A->s0, B->s1}: gaps (-,1,2) for A, one item for B.
        let mut label_vocab = Vocab::new();
        let a = label_vocab.intern("A");
        let b = label_vocab.intern("B");
        let mut student_vocab = Vocab::new();
        let sid = student_vocab.intern("s");
        let trials = vec![
            Trial { t: 0, label: a, correct: true, expert_skill: None },
            Trial { t: 1, label: a, correct: false, expert_skill: None },
            Trial { t: 2, label: b, correct: true, expert_skill: None },
            Trial { t: 3, label: a, correct: true, expert_skill: None },
        ];
        let ds = Dataset {
            students: vec![StudentSequence { student: sid, trials }],
            student_vocab,
            label_vocab,
            skill_vocab: Vocab::new(),
        };
        let part = Partition::from_assignment(&[0, 1]);
        let subs = parse_into_skill_sequences(&ds, &part).unwrap();
        assert_eq!(subs.len(), 2);
        let s0 = subs.iter().find(|s| s.skill == 0).unwrap();
        assert_eq!(s0.items.iter().map(|i| i.gap).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert_eq!(s0.items.iter().map(|i| i.i).collect::<Vec<_>>(), vec![0, 1, 2]);
        let s1 = subs.iter().find(|s| s.skill == 1).unwrap();
        assert_eq!(s1.items.len(), 1);
        assert_eq!(s1.items[0].gap, 0);
    }

    #[test]
    fn single_skill_partition_has_unit_gaps() {
        let ds = toy_dataset(3, 8, 4);
        let part = Partition::single(ds.label_vocab.len());
        let subs = parse_into_skill_sequences(&ds, &part).unwrap();
        for sub in subs {
            assert!(sub.items.iter().skip(1).all(|it| it.gap == 1));
        }
    }

    #[test]
    fn parse_then_reassemble_is_identity() {
        let ds = toy_dataset(5, 100, 7);
        let part = Partition::from_assignment(&[0, 1, 2, 0, 1, 2, 0]);
        let subs = parse_into_skill_sequences(&ds, &part).unwrap();
        for st in &ds.students {
            let mut items: Vec<(usize, bool)> = subs
                .iter()
                .filter(|s| s.student == st.student)
                .flat_map(|s| s.items.iter().map(|it| (it.t, it.correct)))
                .collect();
            items.sort_by_key(|&(t, _)| t);
            let original: Vec<(usize, bool)> =
                st.trials.iter().map(|t| (t.t, t.correct)).collect();
            assert_eq!(items, original);
        }
    }

    #[test]
    fn unassigned_label_is_an_error() {
        let ds = toy_dataset(2, 4, 3);
        let part = Partition::from_assignment(&[0, 0]); // third label missing
        assert!(matches!(
            parse_into_skill_sequences(&ds, &part),
            Err(Error::UnassignedLabel(_))
        ));
    }

    #[test]
    fn partition_compacts_skill_ids() {
        let p = Partition::from_assignment(&[5, 9, 5, 2]);
        assert_eq!(p.n_skills(), 3);
        assert_eq!(p.assignment(), &[0, 1, 0, 2]);
        assert_eq!(p.counts(), vec![2, 1, 1]);
        assert_eq!(p.members()[0], vec![0, 2]);
    }
}
