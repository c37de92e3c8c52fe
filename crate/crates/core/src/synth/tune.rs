use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::generate::Generator;
use super::prompt::PromptTemplate;
use super::SynthError;
use crate::corpus::{Document, QueryMode, SyntheticQuerySet};
use crate::qd_metrics::{ce_ratio, self_bleu_corpus, ScorerBackend};
use crate::tokenize::TokenizerSpec;

pub const DEFAULT_SAMPLE_SIZE: usize = 100;
pub const DIVERSITY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    InDomain,
    Ood,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::InDomain => "in_domain",
            Target::Ood => "ood",
        })
    }
}

impl FromStr for Target {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "in_domain" | "in-domain" => Ok(Target::InDomain),
            "ood" => Ok(Target::Ood),
            other => Err(format!("unknown target {other:?}")),
        }
    }
}

impl Target {
    /// In-domain wants both metrics above the threshold, OOD both below.
    /// Exactly 0.5 satisfies neither.
    pub fn accepts(self, ce: f64, self_bleu: f64) -> bool {
        match self {
            Target::InDomain => ce > DIVERSITY_THRESHOLD && self_bleu > DIVERSITY_THRESHOLD,
            Target::Ood => ce < DIVERSITY_THRESHOLD && self_bleu < DIVERSITY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateMeasurement {
    pub mode: QueryMode,
    pub prompt_hash: String,
    pub ce: f64,
    pub self_bleu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptSelection {
    pub chosen_mode: QueryMode,
    pub prompt_hash: String,
    pub sample_ce: f64,
    pub sample_self_bleu: f64,
    pub target: Target,
    pub measurements: Vec<CandidateMeasurement>,
}

fn describe(ms: &[CandidateMeasurement]) -> String {
    ms.iter()
        .map(|m| format!("{}: CE={:.3} Self-BLEU={:.3}", m.mode, m.ce, m.self_bleu))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Picks the first candidate whose measurements satisfy `target`.
pub fn select_prompt(measurements: &[CandidateMeasurement], target: Target) -> Result<PromptSelection, SynthError> {
    let chosen = measurements
        .iter()
        .find(|m| target.accepts(m.ce, m.self_bleu))
        .ok_or_else(|| SynthError::NoCandidate {
            target,
            measurements: describe(measurements),
        })?;
    Ok(PromptSelection {
        chosen_mode: chosen.mode,
        prompt_hash: chosen.prompt_hash.clone(),
        sample_ce: chosen.ce,
        sample_self_bleu: chosen.self_bleu,
        target,
        measurements: measurements.to_vec(),
    })
}

/// Measures `(CE, Self-BLEU)` of generated sample sets.
pub trait DiversityProbe {
    fn probe(&self, sets: &[SyntheticQuerySet]) -> Result<(f64, f64), SynthError>;
}

/// CE from a scorer backend, Self-BLEU from tokenized text.
pub struct QdProbe<'a> {
    pub backend: &'a dyn ScorerBackend,
    pub tokenizer: &'a TokenizerSpec,
    pub ce_threshold: f64,
}

impl DiversityProbe for QdProbe<'_> {
    fn probe(&self, sets: &[SyntheticQuerySet]) -> Result<(f64, f64), SynthError> {
        let ce = ce_ratio(sets, self.ce_threshold, self.backend)?;
        let sb = self_bleu_corpus(sets, self.tokenizer)?;
        Ok((ce.value, sb))
    }
}

/// Generates with every candidate on the sample, measures each, and selects
/// by the target rule. Any generation failure on the sample is fatal.
pub fn tune_prompt(
    sample: &[Document],
    candidates: &[PromptTemplate],
    target: Target,
    generator: &Generator,
    probe: &dyn DiversityProbe,
) -> Result<PromptSelection, SynthError> {
    if candidates.is_empty() {
        return Err(SynthError::Config("no candidate prompts".into()));
    }
    if sample.len() < 2 {
        return Err(SynthError::Config(format!(
            "prompt tuning needs at least 2 sample documents, got {}",
            sample.len()
        )));
    }
    if generator.config().m < 2 {
        return Err(SynthError::Config("prompt tuning needs M >= 2 to measure diversity".into()));
    }
    let mut measurements = Vec::with_capacity(candidates.len());
    for cand in candidates {
        let sets = generator
            .generate_many(sample, cand)
            .into_iter()
            .collect::<Result<Vec<_>, _>>()?;
        let (ce, self_bleu) = probe.probe(&sets)?;
        log::info!("{} prompt: CE={ce:.3} Self-BLEU={self_bleu:.3}", cand.mode);
        measurements.push(CandidateMeasurement {
            mode: cand.mode,
            prompt_hash: cand.prompt_hash(),
            ce,
            self_bleu,
        });
    }
    select_prompt(&measurements, target)
}
