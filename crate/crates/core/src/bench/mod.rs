//! The LLM benchmark: natural-language formulations of the retrieval
//! problem, a reference solver, grading with resampling, and accuracy
//! reports against random-guess baselines.
//!
//! Five formulations are supported. Equations and Lives-with take the
//! chain depth D as a knob; Kingdoms, Functions, and Relatives have
//! fixed prompt shapes. Offline runs use mock clients; live runs go
//! through a chat-completions-style HTTP endpoint.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::seeds::{derive_seed, DOM_BENCH};

mod gen;
mod http;
pub mod pools;
mod solve;

pub use gen::gen_prompt;
pub use http::{HttpClient, ProviderConfig};
pub use solve::solve_case;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Formulation {
    Equations,
    LivesWith,
    Kingdoms,
    Functions,
    Relatives,
}

impl Formulation {
    pub const ALL: [Formulation; 5] = [
        Formulation::Equations,
        Formulation::LivesWith,
        Formulation::Kingdoms,
        Formulation::Functions,
        Formulation::Relatives,
    ];

    /// Depth fixed by the prompt shape, where the formulation has one.
    pub fn fixed_d(&self) -> Option<usize> {
        match self {
            Formulation::Kingdoms => Some(5),
            Formulation::Functions => Some(3),
            Formulation::Relatives => Some(4),
            _ => None,
        }
    }

    pub fn default_d(&self) -> usize {
        self.fixed_d().unwrap_or(5)
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Formulation::Equations => "equations",
            Formulation::LivesWith => "lives-with",
            Formulation::Kingdoms => "kingdoms",
            Formulation::Functions => "functions",
            Formulation::Relatives => "relatives",
        };
        f.write_str(s)
    }
}

impl FromStr for Formulation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "equations" => Ok(Formulation::Equations),
            "lives-with" | "lives_with" | "liveswith" => Ok(Formulation::LivesWith),
            "kingdoms" => Ok(Formulation::Kingdoms),
            "functions" => Ok(Formulation::Functions),
            "relatives" => Ok(Formulation::Relatives),
            other => Err(format!(
                "unknown formulation {other:?} (expected equations, lives-with, kingdoms, functions, or relatives)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("pool {pool} exhausted: need {need} entries, have {have}")]
    PoolExhausted {
        pool: &'static str,
        need: usize,
        have: usize,
    },
    #[error("{formulation} has a fixed shape with D={expected}; got D={got}")]
    FixedShape {
        formulation: Formulation,
        expected: usize,
        got: usize,
    },
    #[error("invalid benchmark request: {0}")]
    Invalid(String),
    #[error("cannot solve case: {0}")]
    Unsolvable(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("provider response: {0}")]
    Protocol(String),
    #[error("io: {0}")]
    Io(String),
}

/// One benchmark question: prompt text, its single correct answer, and
/// the closed set of coherent answers used for resampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptCase {
    pub formulation: Formulation,
    pub d: usize,
    pub prompt: String,
    pub correct: String,
    pub acceptable: Vec<String>,
}

impl PromptCase {
    pub fn check(&self) -> Result<(), BenchError> {
        if self.acceptable.len() < 2 {
            return Err(BenchError::Invalid(format!(
                "only {} acceptable answers",
                self.acceptable.len()
            )));
        }
        if !self.acceptable.contains(&self.correct) {
            return Err(BenchError::Invalid(format!(
                "correct answer {:?} not in the acceptable set",
                self.correct
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grade {
    Correct,
    AcceptableWrong,
    Unacceptable,
}

/// Conservative answer normalization: trim, case-fold, strip trailing
/// punctuation.
pub fn normalize(answer: &str) -> String {
    let mut s = answer.trim();
    while let Some(last) = s.chars().last() {
        if last.is_ascii_punctuation() {
            s = s[..s.len() - last.len_utf8()].trim_end();
        } else {
            break;
        }
    }
    s.to_lowercase()
}

pub fn grade(case: &PromptCase, answer: &str) -> Grade {
    let norm = normalize(answer);
    if norm == normalize(&case.correct) {
        return Grade::Correct;
    }
    if case.acceptable.iter().any(|a| normalize(a) == norm) {
        return Grade::AcceptableWrong;
    }
    Grade::Unacceptable
}

/// A client answering one prompt. Mock clients may inspect the whole
/// case; a real client must look only at `case.prompt`.
pub trait ChatClient {
    fn complete(&mut self, case: &PromptCase, attempt: usize) -> Result<String, BenchError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MockBehavior {
    /// Uniform draw from the case's acceptable set (the chance baseline).
    Uniform,
    /// Always the correct answer.
    Correct,
    /// Never an acceptable answer.
    Garbage,
}

impl FromStr for MockBehavior {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(MockBehavior::Uniform),
            "correct" => Ok(MockBehavior::Correct),
            "garbage" => Ok(MockBehavior::Garbage),
            other => Err(format!("unknown mock {other:?} (uniform|correct|garbage)")),
        }
    }
}

pub struct MockClient {
    behavior: MockBehavior,
    rng: ChaCha8Rng,
}

impl MockClient {
    pub fn new(behavior: MockBehavior, seed: u64) -> Self {
        MockClient {
            behavior,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl ChatClient for MockClient {
    fn complete(&mut self, case: &PromptCase, _attempt: usize) -> Result<String, BenchError> {
        Ok(match self.behavior {
            MockBehavior::Uniform => {
                let i = self.rng.gen_range(0..case.acceptable.len());
                case.acceptable[i].clone()
            }
            MockBehavior::Correct => case.correct.clone(),
            MockBehavior::Garbage => format!("unintelligible-{:08x}", self.rng.gen::<u32>()),
        })
    }
}

/// Everything that happened for one case; persisted as one JSONL line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub case: PromptCase,
    /// Raw answers, one per attempt, in order.
    pub answers: Vec<String>,
    pub grade: Grade,
    pub attempts: usize,
    /// True when transport failed for good and the case was not graded.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormulationReport {
    pub formulation: Formulation,
    pub n_cases: usize,
    /// Cases that produced a grade (skipped ones excluded).
    pub graded: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub mean_attempts: f64,
    /// Random-guess accuracy: mean of 1/|acceptable| over cases.
    pub baseline: f64,
    pub skipped: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BenchReport {
    pub formulations: Vec<FormulationReport>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("formulation,n_cases,graded,correct,accuracy,baseline,mean_attempts,skipped\n");
        for r in &self.formulations {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.formulation,
                r.n_cases,
                r.graded,
                r.correct,
                r.accuracy,
                r.baseline,
                r.mean_attempts,
                r.skipped
            ));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRun {
    pub formulation: Formulation,
    pub n_cases: usize,
    #[serde(default = "default_chains")]
    pub n_chains: usize,
    /// None picks the formulation's fixed/default depth.
    #[serde(default)]
    pub d: Option<usize>,
    #[serde(default = "default_attempts")]
    pub max_attempts: usize,
}

fn default_chains() -> usize {
    4
}

pub(crate) fn default_attempts() -> usize {
    8
}

/// Generate, query, and grade `n_cases` prompts. Each attempt resamples
/// until the answer is acceptable (up to `max_attempts`; a case that
/// never produces an acceptable answer counts as wrong). Per-case
/// transcripts go to `transcript` as JSON Lines when given.
pub fn run_cases(
    client: &mut dyn ChatClient,
    run: &BenchRun,
    seed: u64,
    mut transcript: Option<&mut dyn Write>,
) -> Result<(FormulationReport, Vec<CaseRecord>), BenchError> {
    if run.n_cases == 0 {
        return Err(BenchError::Invalid("n_cases must be positive".into()));
    }
    if run.max_attempts == 0 {
        return Err(BenchError::Invalid("max_attempts must be positive".into()));
    }
    let d = run.d.unwrap_or_else(|| run.formulation.default_d());
    let mut records = Vec::with_capacity(run.n_cases);
    let mut baseline_sum = 0.0f64;
    for i in 0..run.n_cases {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, DOM_BENCH, i as u64));
        let case = gen_prompt(run.formulation, d, run.n_chains, &mut rng)?;
        baseline_sum += 1.0 / case.acceptable.len() as f64;
        let mut answers = Vec::new();
        let mut final_grade = Grade::Unacceptable;
        let mut skipped = false;
        for attempt in 1..=run.max_attempts {
            match client.complete(&case, attempt) {
                Ok(ans) => {
                    let g = grade(&case, &ans);
                    answers.push(ans);
                    if g != Grade::Unacceptable {
                        final_grade = g;
                        break;
                    }
                }
                Err(BenchError::Transport(_)) => {
                    skipped = true;
                    break;
                }
                Err(other) => return Err(other),
            }
        }
        let record = CaseRecord {
            attempts: answers.len(),
            case,
            answers,
            grade: final_grade,
            skipped,
        };
        if let Some(w) = transcript.as_deref_mut() {
            let line = serde_json::to_string(&record)
                .map_err(|e| BenchError::Io(format!("transcript: {e}")))?;
            writeln!(w, "{line}").map_err(|e| BenchError::Io(format!("transcript: {e}")))?;
        }
        records.push(record);
    }

    let graded: Vec<&CaseRecord> = records.iter().filter(|r| !r.skipped).collect();
    let correct = graded.iter().filter(|r| r.grade == Grade::Correct).count();
    let report = FormulationReport {
        formulation: run.formulation,
        n_cases: run.n_cases,
        graded: graded.len(),
        correct,
        accuracy: if graded.is_empty() {
            0.0
        } else {
            correct as f64 / graded.len() as f64
        },
        mean_attempts: if graded.is_empty() {
            0.0
        } else {
            graded.iter().map(|r| r.attempts as f64).sum::<f64>() / graded.len() as f64
        },
        baseline: baseline_sum / run.n_cases as f64,
        skipped: records.len() - graded.len(),
    };
    Ok((report, records))
}

/// Parse a case written in the transcript layout: prompt lines, a blank
/// line, then `Correct:` and `Acceptable:` lines.
pub fn parse_fixture(formulation: Formulation, text: &str) -> Result<PromptCase, BenchError> {
    let mut prompt_lines = Vec::new();
    let mut correct = None;
    let mut acceptable = None;
    for line in text.lines() {
        if let Some(rest) = line.strip_prefix("Correct:") {
            correct = Some(rest.trim().to_string());
        } else if let Some(rest) = line.strip_prefix("Acceptable:") {
            acceptable = Some(
                rest.split(',')
                    .map(|a| a.trim().to_string())
                    .filter(|a| !a.is_empty())
                    .collect::<Vec<_>>(),
            );
        } else if !line.trim().is_empty() {
            prompt_lines.push(line.trim_end());
        }
    }
    let case = PromptCase {
        formulation,
        d: formulation.default_d(),
        prompt: prompt_lines.join("\n"),
        correct: correct.ok_or_else(|| BenchError::Invalid("fixture lacks Correct:".into()))?,
        acceptable: acceptable
            .ok_or_else(|| BenchError::Invalid("fixture lacks Acceptable:".into()))?,
    };
    case.check()?;
    Ok(case)
}
