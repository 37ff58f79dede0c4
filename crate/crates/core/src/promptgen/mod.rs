//! Synthetic sentence generation from a combinatorial prompt matrix.
//!
//! Every combination of speaker factors is rendered through a text template
//! into one generation request. Responses are parsed into burnout and
//! neutral sentences, and a seeded sample of the pooled sentences joins the
//! training corpus.

mod client;
mod parse;
mod sample;

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use client::{generate, GenerateError, GenerationBatch, LlmEndpoint, API_KEY_ENV};
pub use parse::{parse_generation, ParseError};
pub use sample::{sample_synthetic, synthetic_pool, SampleError};

pub const DEFAULT_TEMPLATE: &str = include_str!("../../assets/prompt_template_v1.txt");
pub const DEFAULT_TEMPLATE_VERSION: &str = "v1";
const DEFAULT_SPHERES: &str = include_str!("../../assets/professional_spheres.txt");
pub const DEFAULT_SENTENCES_PER_LABEL: usize = 10;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PromptgenError {
    #[error("factor {0} has no values")]
    EmptyFactor(Factor),
    #[error("factor {factor} lists {value:?} more than once")]
    DuplicateValue { factor: Factor, value: String },
    #[error("factor {0} has a blank value")]
    BlankValue(Factor),
    #[error("sentences_per_label must be at least 1")]
    ZeroSentences,
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("prompts {first} and {second} render to the same text")]
    DuplicatePrompt { first: String, second: String },
    #[error("cannot read factor config {path}: {reason}")]
    Load { path: String, reason: String },
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TemplateError {
    #[error("template uses unknown placeholder {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("template never uses placeholder {{{0}}}")]
    MissingPlaceholder(String),
}

/// One dimension of the speaker description.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Factor {
    Gender,
    Age,
    JobExperience,
    JobPosition,
    CommunicationMethod,
    CommunicationType,
    ProfessionalSphere,
}

impl Factor {
    /// Enumeration order; the last factor varies fastest.
    pub const ALL: [Factor; 7] = [
        Factor::Gender,
        Factor::Age,
        Factor::JobExperience,
        Factor::JobPosition,
        Factor::CommunicationMethod,
        Factor::CommunicationType,
        Factor::ProfessionalSphere,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Factor::Gender => "gender",
            Factor::Age => "age",
            Factor::JobExperience => "job_experience",
            Factor::JobPosition => "job_position",
            Factor::CommunicationMethod => "communication_method",
            Factor::CommunicationType => "communication_type",
            Factor::ProfessionalSphere => "professional_sphere",
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}

/// Parses a one-value-per-line list, skipping blanks and `#` comments.
pub fn parse_value_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorConfig {
    pub gender: Vec<String>,
    pub age: Vec<String>,
    pub job_experience: Vec<String>,
    pub job_position: Vec<String>,
    pub communication_method: Vec<String>,
    pub communication_type: Vec<String>,
    pub professional_sphere: Vec<String>,
}

impl Default for FactorConfig {
    fn default() -> Self {
        FactorConfig {
            gender: strings(&["male", "female"]),
            age: strings(&["young", "middle-aged", "old"]),
            job_experience: strings(&["with", "without"]),
            job_position: strings(&["executive", "subordinate"]),
            communication_method: strings(&["verbal", "written"]),
            communication_type: strings(&["professional", "casual"]),
            professional_sphere: parse_value_list(DEFAULT_SPHERES),
        }
    }
}

impl FactorConfig {
    pub fn values(&self, factor: Factor) -> &[String] {
        match factor {
            Factor::Gender => &self.gender,
            Factor::Age => &self.age,
            Factor::JobExperience => &self.job_experience,
            Factor::JobPosition => &self.job_position,
            Factor::CommunicationMethod => &self.communication_method,
            Factor::CommunicationType => &self.communication_type,
            Factor::ProfessionalSphere => &self.professional_sphere,
        }
    }

    pub fn validate(&self) -> Result<(), PromptgenError> {
        for factor in Factor::ALL {
            let values = self.values(factor);
            if values.is_empty() {
                return Err(PromptgenError::EmptyFactor(factor));
            }
            let mut seen = HashSet::new();
            for v in values {
                if v.trim().is_empty() {
                    return Err(PromptgenError::BlankValue(factor));
                }
                if !seen.insert(v) {
                    return Err(PromptgenError::DuplicateValue {
                        factor,
                        value: v.clone(),
                    });
                }
            }
        }
        Ok(())
    }

    /// Number of prompts the matrix expands to.
    pub fn cardinality(&self) -> usize {
        Factor::ALL.iter().map(|f| self.values(*f).len()).product()
    }

    /// Loads a TOML file; factors it omits keep their defaults.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PromptgenError> {
        let path = path.as_ref();
        let err = |reason: String| PromptgenError::Load {
            path: path.display().to_string(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let config: FactorConfig = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }
}

/// One value per factor.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    pub gender: String,
    pub age: String,
    pub job_experience: String,
    pub job_position: String,
    pub communication_method: String,
    pub communication_type: String,
    pub professional_sphere: String,
}

impl Assignment {
    pub fn get(&self, factor: Factor) -> &str {
        match factor {
            Factor::Gender => &self.gender,
            Factor::Age => &self.age,
            Factor::JobExperience => &self.job_experience,
            Factor::JobPosition => &self.job_position,
            Factor::CommunicationMethod => &self.communication_method,
            Factor::CommunicationType => &self.communication_type,
            Factor::ProfessionalSphere => &self.professional_sphere,
        }
    }

    fn from_indices(config: &FactorConfig, idx: &[usize; 7]) -> Self {
        let v = |k: usize| config.values(Factor::ALL[k])[idx[k]].clone();
        Assignment {
            gender: v(0),
            age: v(1),
            job_experience: v(2),
            job_position: v(3),
            communication_method: v(4),
            communication_type: v(5),
            professional_sphere: v(6),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub id: String,
    pub assignment: Assignment,
    pub rendered_text: String,
    pub sentences_per_label: usize,
}

/// Cartesian product of the factor lists, last factor fastest.
pub fn enumerate_assignments(config: &FactorConfig) -> Result<Vec<Assignment>, PromptgenError> {
    config.validate()?;
    let sizes: Vec<usize> = Factor::ALL.iter().map(|f| config.values(*f).len()).collect();
    let mut idx = [0usize; 7];
    let mut out = Vec::with_capacity(config.cardinality());
    'outer: loop {
        out.push(Assignment::from_indices(config, &idx));
        for k in (0..7).rev() {
            idx[k] += 1;
            if idx[k] < sizes[k] {
                continue 'outer;
            }
            idx[k] = 0;
        }
        break;
    }
    Ok(out)
}

const SENTENCES_PLACEHOLDER: &str = "sentences_per_label";

enum Piece<'a> {
    Literal(&'a str),
    Placeholder(&'a str),
}

/// Splits on `{name}` where `name` is `[A-Za-z0-9_]+`; other braces are literal.
fn pieces(template: &str) -> Vec<Piece<'_>> {
    let mut out = Vec::new();
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            out.push(Piece::Literal(&rest[..open]));
            out.push(Piece::Placeholder(&after[..name_len]));
            rest = &after[name_len + 1..];
        } else {
            out.push(Piece::Literal(&rest[..=open]));
            rest = after;
        }
    }
    out.push(Piece::Literal(rest));
    out
}

fn lookup(name: &str) -> Option<Option<Factor>> {
    if name == SENTENCES_PLACEHOLDER {
        return Some(None);
    }
    Factor::ALL.iter().find(|f| f.name() == name).map(|f| Some(*f))
}

/// A prompt template known to reference every factor and the sentence count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    text: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, TemplateError> {
        let text = text.into();
        let mut used = HashSet::new();
        for p in pieces(&text) {
            if let Piece::Placeholder(name) = p {
                lookup(name).ok_or_else(|| TemplateError::UnknownPlaceholder(name.to_string()))?;
                used.insert(name);
            }
        }
        let required = Factor::ALL.iter().map(|f| f.name()).chain([SENTENCES_PLACEHOLDER]);
        for name in required {
            if !used.contains(name) {
                return Err(TemplateError::MissingPlaceholder(name.to_string()));
            }
        }
        Ok(PromptTemplate { text })
    }

    pub fn default_v1() -> Self {
        Self::new(DEFAULT_TEMPLATE).expect("bundled template is complete")
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

/// Substitutes `{factor}` and `{sentences_per_label}` placeholders.
pub fn render_prompt(
    assignment: &Assignment,
    sentences_per_label: usize,
    template: &str,
) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(template.len() + 64);
    for p in pieces(template) {
        match p {
            Piece::Literal(s) => out.push_str(s),
            Piece::Placeholder(name) => match lookup(name) {
                Some(Some(factor)) => out.push_str(assignment.get(factor)),
                Some(None) => out.push_str(&sentences_per_label.to_string()),
                None => return Err(TemplateError::UnknownPlaceholder(name.to_string())),
            },
        }
    }
    Ok(out)
}

/// Every cell of the factor matrix rendered through `template`, in
/// enumeration order. Ids are `p{index}` zero-padded to five digits.
pub fn enumerate_prompts(
    config: &FactorConfig,
    template: &PromptTemplate,
    sentences_per_label: usize,
) -> Result<Vec<PromptSpec>, PromptgenError> {
    if sentences_per_label == 0 {
        return Err(PromptgenError::ZeroSentences);
    }
    let assignments = enumerate_assignments(config)?;
    let mut specs = Vec::with_capacity(assignments.len());
    let mut seen = std::collections::HashMap::new();
    for (i, assignment) in assignments.into_iter().enumerate() {
        let id = format!("p{i:05}");
        let rendered_text = render_prompt(&assignment, sentences_per_label, template.text())?;
        if let Some(first) = seen.insert(rendered_text.clone(), id.clone()) {
            return Err(PromptgenError::DuplicatePrompt { first, second: id });
        }
        specs.push(PromptSpec {
            id,
            assignment,
            rendered_text,
            sentences_per_label,
        });
    }
    Ok(specs)
}
