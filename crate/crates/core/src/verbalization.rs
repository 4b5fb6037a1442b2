//! Prompt rendering and answer postprocessing.
//!
//! Templates hold a body with `{field}` placeholders; the style decides how
//! the body is framed (`Answer:` cue or `### Human:` / `### Assistant:`
//! turns). Lexicons map generated text back to classes.

use crate::data::{required_fields, Instance};
use crate::labels::{ClassId, LabelSpace, TaskKind};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

const BUILTIN_LEXICONS: &str = include_str!("../data/lexicons.v1.json");
const BUILTIN_TEMPLATES: &str = include_str!("../data/templates.v1.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptType {
    /// Option Selection: answer with the class name.
    #[serde(rename = "os")]
    OptionSelection,
    /// Number Selection: answer with the class number.
    #[serde(rename = "ns")]
    NumberSelection,
}

impl PromptType {
    pub fn tag(self) -> &'static str {
        match self {
            Self::OptionSelection => "OS",
            Self::NumberSelection => "NS",
        }
    }
}

impl fmt::Display for PromptType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PromptType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "os" => Ok(Self::OptionSelection),
            "ns" => Ok(Self::NumberSelection),
            _ => Err(format!("unknown prompt type `{s}` (expected os or ns)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateStyle {
    #[default]
    Plain,
    ChatHumanAssistant,
}

#[derive(Debug, Error, PartialEq)]
pub enum VerbalizationError {
    #[error("instance is missing text field `{0}`")]
    MissingField(String),
    #[error("template is for {template:?} but instance is {instance:?}")]
    TaskMismatch {
        template: TaskKind,
        instance: TaskKind,
    },
    #[error("template placeholders {found:?} do not match required fields {expected:?}")]
    PlaceholderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("unterminated placeholder in template body")]
    UnterminatedPlaceholder,
    #[error("template options line is malformed: {0}")]
    OptionsLine(String),
    #[error("lexicon class `{0}` is not in the label space")]
    UnknownClass(String),
    #[error("lexicon class `{0}` has no surface forms")]
    EmptyClass(String),
    #[error("surface form `{form}` is claimed by both `{first}` and `{second}`")]
    Overlap {
        form: String,
        first: String,
        second: String,
    },
    #[error("surface form `{0}` is empty after normalization")]
    EmptyForm(String),
    #[error("number-selection surface form `{0}` is not a single digit")]
    NotSingleDigit(String),
    #[error("no {what} for {task_kind:?}/{prompt_type}")]
    NotFound {
        what: &'static str,
        task_kind: TaskKind,
        prompt_type: PromptType,
    },
    #[error("malformed data file: {0}")]
    DataFile(String),
}

enum Segment {
    Literal(String),
    Field(String),
}

fn parse_body(body: &str) -> Result<Vec<Segment>, VerbalizationError> {
    let mut segments = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        if open > 0 {
            segments.push(Segment::Literal(rest[..open].to_string()));
        }
        let close = rest[open..]
            .find('}')
            .ok_or(VerbalizationError::UnterminatedPlaceholder)?;
        segments.push(Segment::Field(rest[open + 1..open + close].to_string()));
        rest = &rest[open + close + 1..];
    }
    if !rest.is_empty() {
        segments.push(Segment::Literal(rest.to_string()));
    }
    Ok(segments)
}

/// A zero-shot prompt: body with `{field}` placeholders plus framing style.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    style: TemplateStyle,
    prompt_type: PromptType,
    task_kind: TaskKind,
    body: String,
}

impl PromptTemplate {
    pub fn new(
        style: TemplateStyle,
        prompt_type: PromptType,
        task_kind: TaskKind,
        body: impl Into<String>,
    ) -> Result<Self, VerbalizationError> {
        let body = body.into();
        let mut found: Vec<String> = parse_body(&body)?
            .into_iter()
            .filter_map(|s| match s {
                Segment::Field(f) => Some(f),
                Segment::Literal(_) => None,
            })
            .collect();
        found.sort();
        found.dedup();
        let mut expected: Vec<String> = required_fields(task_kind)
            .iter()
            .map(|s| s.to_string())
            .collect();
        expected.sort();
        if found != expected {
            return Err(VerbalizationError::PlaceholderMismatch { expected, found });
        }
        check_options_line(&body, prompt_type, LabelSpace::new(task_kind))?;
        Ok(Self {
            style,
            prompt_type,
            task_kind,
            body,
        })
    }

    pub fn builtin(
        style: TemplateStyle,
        prompt_type: PromptType,
        task_kind: TaskKind,
    ) -> Result<Self, VerbalizationError> {
        TemplateSet::builtin().get(style, prompt_type, task_kind)
    }

    pub fn style(&self) -> TemplateStyle {
        self.style
    }

    pub fn prompt_type(&self) -> PromptType {
        self.prompt_type
    }

    pub fn task_kind(&self) -> TaskKind {
        self.task_kind
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn render(&self, instance: &Instance) -> Result<String, VerbalizationError> {
        if instance.task_kind != self.task_kind {
            return Err(VerbalizationError::TaskMismatch {
                template: self.task_kind,
                instance: instance.task_kind,
            });
        }
        let mut filled = String::with_capacity(self.body.len() + 256);
        for segment in parse_body(&self.body)? {
            match segment {
                Segment::Literal(s) => filled.push_str(&s),
                Segment::Field(f) => {
                    let text = instance
                        .text(&f)
                        .ok_or_else(|| VerbalizationError::MissingField(f.clone()))?;
                    filled.push_str(text.trim());
                }
            }
        }
        Ok(match self.style {
            TemplateStyle::Plain => format!("{filled}\n\nAnswer:"),
            TemplateStyle::ChatHumanAssistant => {
                format!("### Human: {filled}\n\n### Assistant:")
            }
        })
    }
}

/// The last `Options:` line must number the options for NS and must not for OS.
fn check_options_line(
    body: &str,
    prompt_type: PromptType,
    space: LabelSpace,
) -> Result<(), VerbalizationError> {
    let line = body
        .lines()
        .rev()
        .find_map(|l| l.trim().strip_prefix("Options:"))
        .ok_or_else(|| VerbalizationError::OptionsLine("no `Options:` line".into()))?;
    let options: Vec<&str> = line.split(',').map(str::trim).collect();
    if options.len() != space.len() {
        return Err(VerbalizationError::OptionsLine(format!(
            "{} options listed for {} classes",
            options.len(),
            space.len()
        )));
    }
    for (i, option) in options.iter().enumerate() {
        let numbered = option.starts_with(&format!("{}:", i + 1));
        match prompt_type {
            PromptType::NumberSelection if !numbered => {
                return Err(VerbalizationError::OptionsLine(format!(
                    "option `{option}` lacks its number"
                )))
            }
            PromptType::OptionSelection if option.contains(':') => {
                return Err(VerbalizationError::OptionsLine(format!(
                    "option `{option}` is numbered"
                )))
            }
            _ => {}
        }
    }
    Ok(())
}

pub fn render_prompt(
    instance: &Instance,
    template: &PromptTemplate,
) -> Result<String, VerbalizationError> {
    template.render(instance)
}

#[derive(Debug, Deserialize)]
struct TemplateFile {
    version: String,
    templates: Vec<TemplateEntry>,
}

#[derive(Debug, Deserialize)]
struct TemplateEntry {
    task_kind: TaskKind,
    prompt_type: PromptType,
    body: String,
}

/// Versioned set of template bodies, one per (task kind, prompt type).
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub version: String,
    bodies: BTreeMap<(TaskKind, PromptType), String>,
}

impl TemplateSet {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_TEMPLATES).expect("built-in templates are valid")
    }

    pub fn from_json(json: &str) -> Result<Self, VerbalizationError> {
        let file: TemplateFile =
            serde_json::from_str(json).map_err(|e| VerbalizationError::DataFile(e.to_string()))?;
        let mut bodies = BTreeMap::new();
        for entry in file.templates {
            // validate eagerly
            PromptTemplate::new(
                TemplateStyle::Plain,
                entry.prompt_type,
                entry.task_kind,
                entry.body.clone(),
            )?;
            bodies.insert((entry.task_kind, entry.prompt_type), entry.body);
        }
        Ok(Self {
            version: file.version,
            bodies,
        })
    }

    pub fn get(
        &self,
        style: TemplateStyle,
        prompt_type: PromptType,
        task_kind: TaskKind,
    ) -> Result<PromptTemplate, VerbalizationError> {
        let body =
            self.bodies
                .get(&(task_kind, prompt_type))
                .ok_or(VerbalizationError::NotFound {
                    what: "template",
                    task_kind,
                    prompt_type,
                })?;
        PromptTemplate::new(style, prompt_type, task_kind, body.clone())
    }
}

const TRAILING_PUNCT: [char; 5] = ['.', ',', ':', ';', '!'];

/// Case-folds, trims whitespace, and strips trailing `.,:;!`.
pub fn normalize_output(text: &str) -> String {
    text.trim()
        .trim_end_matches(|c: char| c.is_whitespace() || TRAILING_PUNCT.contains(&c))
        .to_lowercase()
}

/// Outcome of mapping one generation onto the label space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatchOutcome {
    Class(ClassId),
    Unmatched,
}

impl MatchOutcome {
    pub fn class(self) -> Option<ClassId> {
        match self {
            Self::Class(c) => Some(c),
            Self::Unmatched => None,
        }
    }
}

/// Per-class sets of accepted answer strings (the valid options of each class).
#[derive(Debug, Clone, PartialEq)]
pub struct OptionLexicon {
    space: LabelSpace,
    prompt_type: PromptType,
    /// Normalized forms per class, canonical class order.
    forms: Vec<Vec<String>>,
    exact: BTreeMap<String, ClassId>,
}

impl OptionLexicon {
    /// Builds a lexicon from class code (or display name) to surface forms.
    /// Forms are normalized; overlapping or empty classes are rejected.
    pub fn new(
        space: LabelSpace,
        prompt_type: PromptType,
        surface_forms: &BTreeMap<String, Vec<String>>,
    ) -> Result<Self, VerbalizationError> {
        let mut forms: Vec<Vec<String>> = vec![Vec::new(); space.len()];
        let mut exact: BTreeMap<String, ClassId> = BTreeMap::new();
        for (label, raw_forms) in surface_forms {
            let class = space
                .parse_class(label)
                .ok_or_else(|| VerbalizationError::UnknownClass(label.clone()))?;
            for raw in raw_forms {
                let form = normalize_output(raw);
                if form.is_empty() {
                    return Err(VerbalizationError::EmptyForm(raw.clone()));
                }
                if prompt_type == PromptType::NumberSelection
                    && !(form.len() == 1 && form.chars().all(|c| c.is_ascii_digit()))
                {
                    return Err(VerbalizationError::NotSingleDigit(raw.clone()));
                }
                match exact.get(&form) {
                    Some(&owner) if owner != class => {
                        return Err(VerbalizationError::Overlap {
                            form,
                            first: space.code(owner).to_string(),
                            second: space.code(class).to_string(),
                        })
                    }
                    Some(_) => {}
                    None => {
                        exact.insert(form.clone(), class);
                        forms[class.0].push(form);
                    }
                }
            }
        }
        if let Some(empty) = space.classes().find(|c| forms[c.0].is_empty()) {
            return Err(VerbalizationError::EmptyClass(
                space.code(empty).to_string(),
            ));
        }
        Ok(Self {
            space,
            prompt_type,
            forms,
            exact,
        })
    }

    pub fn space(&self) -> LabelSpace {
        self.space
    }

    pub fn prompt_type(&self) -> PromptType {
        self.prompt_type
    }

    pub fn forms(&self, class: ClassId) -> &[String] {
        &self.forms[class.0]
    }

    /// Exact lookup of an already-normalized string.
    pub fn lookup_exact(&self, normalized: &str) -> Option<ClassId> {
        self.exact.get(normalized).copied()
    }

    pub fn map_output(&self, text: &str) -> MatchOutcome {
        let norm = normalize_output(text);
        if let Some(class) = self.lookup_exact(&norm) {
            return MatchOutcome::Class(class);
        }
        let mut hit = None;
        for class in self.space.classes() {
            if self.forms[class.0]
                .iter()
                .any(|form| contains_whole_word(&norm, form))
            {
                if hit.is_some() {
                    return MatchOutcome::Unmatched;
                }
                hit = Some(class);
            }
        }
        hit.map_or(MatchOutcome::Unmatched, MatchOutcome::Class)
    }
}

/// True when `needle` occurs in `haystack` bounded by non-alphanumerics or
/// the string ends, so `"1"` does not match inside `"21"`.
fn contains_whole_word(haystack: &str, needle: &str) -> bool {
    let is_word = |c: char| c.is_alphanumeric();
    haystack.match_indices(needle).any(|(start, _)| {
        let end = start + needle.len();
        let before_ok = haystack[..start]
            .chars()
            .next_back()
            .is_none_or(|c| !is_word(c));
        let after_ok = haystack[end..].chars().next().is_none_or(|c| !is_word(c));
        before_ok && after_ok
    })
}

pub fn map_output(text: &str, lexicon: &OptionLexicon) -> MatchOutcome {
    lexicon.map_output(text)
}

#[derive(Debug, Deserialize)]
struct LexiconFile {
    version: String,
    lexicons: Vec<LexiconEntry>,
}

#[derive(Debug, Deserialize)]
struct LexiconEntry {
    task_kind: TaskKind,
    prompt_type: PromptType,
    surface_forms: BTreeMap<String, Vec<String>>,
}

/// Versioned collection of lexicons keyed by (task kind, prompt type).
#[derive(Debug, Clone)]
pub struct LexiconSet {
    pub version: String,
    lexicons: BTreeMap<(TaskKind, PromptType), OptionLexicon>,
}

impl LexiconSet {
    pub fn builtin() -> Self {
        Self::from_json(BUILTIN_LEXICONS).expect("built-in lexicons are valid")
    }

    pub fn from_json(json: &str) -> Result<Self, VerbalizationError> {
        let file: LexiconFile =
            serde_json::from_str(json).map_err(|e| VerbalizationError::DataFile(e.to_string()))?;
        let mut lexicons = BTreeMap::new();
        for entry in file.lexicons {
            let lex = OptionLexicon::new(
                LabelSpace::new(entry.task_kind),
                entry.prompt_type,
                &entry.surface_forms,
            )?;
            lexicons.insert((entry.task_kind, entry.prompt_type), lex);
        }
        Ok(Self {
            version: file.version,
            lexicons,
        })
    }

    pub fn get(
        &self,
        task_kind: TaskKind,
        prompt_type: PromptType,
    ) -> Result<&OptionLexicon, VerbalizationError> {
        self.lexicons
            .get(&(task_kind, prompt_type))
            .ok_or(VerbalizationError::NotFound {
                what: "lexicon",
                task_kind,
                prompt_type,
            })
    }

    pub fn iter(&self) -> impl Iterator<Item = &OptionLexicon> {
        self.lexicons.values()
    }
}

pub fn default_lexicon(task_kind: TaskKind, prompt_type: PromptType) -> OptionLexicon {
    LexiconSet::builtin()
        .get(task_kind, prompt_type)
        .expect("built-in set covers every task kind and prompt type")
        .clone()
}
