//! Pluggable annotators: polarity, quality-attribute mapping, topic and
//! intent-term extraction, plus majority voting across annotators.
//!
//! `BaselineAnnotator` is lexicon and keyword-table driven and fully
//! deterministic. `ExternalAnnotator` talks a line protocol to a subprocess:
//!
//! ```text
//! request:  <op>\t<escaped text>\n      op = polarity | quality | topics | intent
//! response: polarity -> positive | neutral | negative
//!           quality  -> comma-separated attribute names (may be empty)
//!           topics / intent -> `;`-separated `term` or `term|weight` entries
//! ```
//!
//! Text escaping replaces `\` with `\\`, tab with `\t` and newline with `\n`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::data;
use crate::graph::{normalize_term, QualityAttribute};

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum AnnotateError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("no intent terms could be extracted")]
    EmptyIntent,
    #[error("annotator {annotator} does not provide {capability}")]
    Capability {
        annotator: String,
        capability: Capability,
    },
    #[error("annotator failure: {0}")]
    Annotator(String),
    #[error("no unique majority label")]
    Tie,
    #[error("no labels to vote on")]
    NoLabels,
    #[error("duplicate annotator id {0}")]
    DuplicateAnnotator(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Capability {
    Polarity,
    QualityMapping,
    Topics,
    Intent,
}

impl fmt::Display for Capability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Capability::Polarity => "polarity",
            Capability::QualityMapping => "quality_mapping",
            Capability::Topics => "topics",
            Capability::Intent => "intent",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarityLabel {
    Positive,
    Neutral,
    Negative,
}

impl PolarityLabel {
    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "positive" => Some(PolarityLabel::Positive),
            "neutral" => Some(PolarityLabel::Neutral),
            "negative" => Some(PolarityLabel::Negative),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedTerm {
    pub term: String,
    pub weight: f64,
}

impl WeightedTerm {
    pub fn new(term: &str) -> Self {
        WeightedTerm {
            term: term.to_string(),
            weight: 1.0,
        }
    }

    pub fn weighted(term: &str, weight: f64) -> Self {
        WeightedTerm {
            term: term.to_string(),
            weight,
        }
    }
}

/// An annotation backend. Callers go through the free functions in this
/// module, which enforce the declared capabilities and input contracts; the
/// default method bodies only run for undeclared capabilities.
pub trait Annotator: Send + Sync {
    fn id(&self) -> &str;
    fn capabilities(&self) -> BTreeSet<Capability>;

    fn polarity(&self, _text: &str) -> Result<PolarityLabel, AnnotateError> {
        Err(self.missing(Capability::Polarity))
    }
    fn quality_attributes(&self, _text: &str) -> Result<BTreeSet<QualityAttribute>, AnnotateError> {
        Err(self.missing(Capability::QualityMapping))
    }
    fn topics(&self, _text: &str) -> Result<Vec<WeightedTerm>, AnnotateError> {
        Err(self.missing(Capability::Topics))
    }
    fn intent_terms(&self, _story: &str) -> Result<Vec<WeightedTerm>, AnnotateError> {
        Err(self.missing(Capability::Intent))
    }

    fn missing(&self, capability: Capability) -> AnnotateError {
        AnnotateError::Capability {
            annotator: self.id().to_string(),
            capability,
        }
    }
}

fn require(annotator: &dyn Annotator, capability: Capability, text: &str) -> Result<(), AnnotateError> {
    if !annotator.capabilities().contains(&capability) {
        return Err(annotator.missing(capability));
    }
    if text.trim().is_empty() {
        return Err(AnnotateError::InvalidInput("empty text".into()));
    }
    Ok(())
}

pub fn classify_polarity(annotator: &dyn Annotator, text: &str) -> Result<PolarityLabel, AnnotateError> {
    require(annotator, Capability::Polarity, text)?;
    annotator.polarity(text)
}

pub fn map_quality_attributes(
    annotator: &dyn Annotator,
    text: &str,
) -> Result<BTreeSet<QualityAttribute>, AnnotateError> {
    require(annotator, Capability::QualityMapping, text)?;
    annotator.quality_attributes(text)
}

pub fn extract_topics(annotator: &dyn Annotator, text: &str) -> Result<Vec<WeightedTerm>, AnnotateError> {
    require(annotator, Capability::Topics, text)?;
    annotator.topics(text)
}

/// Lowercase, deduplicated intent terms; `EmptyIntent` when nothing survives.
pub fn extract_intent_terms(
    annotator: &dyn Annotator,
    story: &str,
) -> Result<Vec<WeightedTerm>, AnnotateError> {
    require(annotator, Capability::Intent, story)?;
    let raw = annotator.intent_terms(story)?;
    let mut seen = BTreeSet::new();
    let terms: Vec<WeightedTerm> = raw
        .into_iter()
        .map(|t| WeightedTerm {
            term: normalize_term(&t.term),
            weight: t.weight,
        })
        .filter(|t| !t.term.is_empty() && seen.insert(t.term.clone()))
        .collect();
    if terms.is_empty() {
        return Err(AnnotateError::EmptyIntent);
    }
    Ok(terms)
}

/// Registry of annotators keyed by unique id.
#[derive(Default)]
pub struct AnnotatorRegistry {
    annotators: BTreeMap<String, Box<dyn Annotator>>,
}

impl AnnotatorRegistry {
    pub fn register(&mut self, annotator: Box<dyn Annotator>) -> Result<(), AnnotateError> {
        let id = annotator.id().to_string();
        if self.annotators.contains_key(&id) {
            return Err(AnnotateError::DuplicateAnnotator(id));
        }
        self.annotators.insert(id, annotator);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&dyn Annotator> {
        self.annotators.get(id).map(|b| b.as_ref())
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.annotators.keys().map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TiePolicy {
    Abstain,
    FirstAnnotator,
}

/// Modal label and its share of the vote. With `FirstAnnotator`, ties go to
/// whichever tied label appears earliest in `labels`.
pub fn majority_vote<L: Ord + Clone>(labels: &[L], tie: TiePolicy) -> Result<(L, f64), AnnotateError> {
    if labels.is_empty() {
        return Err(AnnotateError::NoLabels);
    }
    let mut counts: BTreeMap<&L, (usize, usize)> = BTreeMap::new();
    for (idx, label) in labels.iter().enumerate() {
        counts.entry(label).or_insert((0, idx)).0 += 1;
    }
    let best = counts.values().map(|(c, _)| *c).max().unwrap_or(0);
    let mut modal: Vec<(&L, usize)> = counts
        .iter()
        .filter(|(_, (c, _))| *c == best)
        .map(|(l, (_, first))| (*l, *first))
        .collect();
    if modal.len() > 1 && tie == TiePolicy::Abstain {
        return Err(AnnotateError::Tie);
    }
    modal.sort_by_key(|(_, first)| *first);
    let winner = modal[0].0.clone();
    Ok((winner, best as f64 / labels.len() as f64))
}

/// Lowercased word tokens grouped into segments split at punctuation.
fn segments(text: &str) -> Vec<Vec<String>> {
    let mut out = Vec::new();
    let mut seg = Vec::new();
    let mut word = String::new();
    let flush_word = |word: &mut String, seg: &mut Vec<String>| {
        let w = word.trim_matches(|c| c == '-' || c == '\'').to_string();
        if !w.is_empty() {
            seg.push(w);
        }
        word.clear();
    };
    for ch in text.chars() {
        if ch.is_alphanumeric() || ch == '-' || ch == '\'' || ch == '_' {
            word.extend(ch.to_lowercase());
        } else {
            flush_word(&mut word, &mut seg);
            if !ch.is_whitespace() && !seg.is_empty() {
                out.push(std::mem::take(&mut seg));
            }
        }
    }
    flush_word(&mut word, &mut seg);
    if !seg.is_empty() {
        out.push(seg);
    }
    out
}

const NEGATORS: &[&str] = &[
    "not", "no", "never", "isn't", "doesn't", "don't", "didn't", "wasn't", "aren't", "won't",
    "can't", "cannot", "hardly",
];

/// Term -> value table loaded from `term<TAB>value` rows.
#[derive(Debug, Clone, Default)]
pub struct KeywordTable<V> {
    single: BTreeMap<String, V>,
    phrases: Vec<(Vec<String>, V)>,
}

impl<V: Clone> KeywordTable<V> {
    pub fn from_rows<I>(rows: I) -> Self
    where
        I: IntoIterator<Item = (String, V)>,
    {
        let mut table = KeywordTable {
            single: BTreeMap::new(),
            phrases: Vec::new(),
        };
        for (key, value) in rows {
            let words: Vec<String> = key.split_whitespace().map(str::to_lowercase).collect();
            match words.len() {
                0 => {}
                1 => {
                    table.single.insert(words[0].clone(), value);
                }
                _ => table.phrases.push((words, value)),
            }
        }
        table
    }

    /// Exact token match, then a few inflection strips.
    pub fn lookup_token(&self, token: &str) -> Option<&V> {
        if let Some(v) = self.single.get(token) {
            return Some(v);
        }
        for suffix in ["s", "es", "ed", "ing", "ly"] {
            if let Some(stem) = token.strip_suffix(suffix) {
                if stem.len() >= 3 {
                    if let Some(v) = self.single.get(stem) {
                        return Some(v);
                    }
                }
            }
        }
        None
    }

    /// Longest entry matching at the start of `tokens`, with its token length.
    pub fn prefix_match(&self, tokens: &[String]) -> Option<(usize, &V)> {
        let phrase = self
            .phrases
            .iter()
            .filter(|(p, _)| tokens.len() >= p.len() && tokens[..p.len()] == p[..])
            .max_by_key(|(p, _)| p.len())
            .map(|(p, v)| (p.len(), v));
        phrase.or_else(|| tokens.first().and_then(|t| self.lookup_token(t)).map(|v| (1, v)))
    }

    /// Every value hit in a token sequence, single tokens and phrases.
    pub fn hits<'a>(&'a self, tokens: &[String]) -> Vec<(usize, &'a V)> {
        let mut out: Vec<(usize, &V)> = tokens
            .iter()
            .enumerate()
            .filter_map(|(i, t)| self.lookup_token(t).map(|v| (i, v)))
            .collect();
        for (phrase, v) in &self.phrases {
            if phrase.len() <= tokens.len() {
                for start in 0..=tokens.len() - phrase.len() {
                    if tokens[start..start + phrase.len()] == phrase[..] {
                        out.push((start, v));
                    }
                }
            }
        }
        out
    }
}

/// Deterministic lexicon-based annotator with every capability.
#[derive(Debug, Clone)]
pub struct BaselineAnnotator {
    id: String,
    lexicon: KeywordTable<PolarityLabel>,
    quality: KeywordTable<QualityAttribute>,
    function_words: BTreeSet<String>,
}

impl Default for BaselineAnnotator {
    fn default() -> Self {
        BaselineAnnotator::from_tables(data::LEXICON, data::QUALITY_KEYWORDS, data::FUNCTION_WORDS)
    }
}

impl BaselineAnnotator {
    pub fn from_tables(lexicon: &str, quality: &str, function_words: &str) -> Self {
        let lexicon = KeywordTable::from_rows(
            data::data_pairs(lexicon)
                .filter_map(|(k, v)| Some((k.to_string(), PolarityLabel::parse(v)?))),
        );
        let quality = KeywordTable::from_rows(
            data::data_pairs(quality).filter_map(|(k, v)| Some((k.to_string(), v.parse().ok()?))),
        );
        let function_words = data::data_lines(function_words).map(str::to_lowercase).collect();
        BaselineAnnotator {
            id: "baseline".into(),
            lexicon,
            quality,
            function_words,
        }
    }

    pub fn quality_table(&self) -> &KeywordTable<QualityAttribute> {
        &self.quality
    }

    fn is_function_word(&self, token: &str) -> bool {
        self.function_words.contains(token)
    }

    /// Maximal runs of content words; function words and punctuation break runs.
    fn chunks(&self, text: &str) -> Vec<Vec<String>> {
        let mut out = Vec::new();
        for seg in segments(text) {
            let mut run: Vec<String> = Vec::new();
            for tok in seg {
                let content = !self.is_function_word(&tok)
                    && !NEGATORS.contains(&tok.as_str())
                    && tok.chars().any(char::is_alphabetic);
                if content {
                    run.push(tok);
                } else if !run.is_empty() {
                    out.push(std::mem::take(&mut run));
                }
            }
            if !run.is_empty() {
                out.push(run);
            }
        }
        out
    }
}

impl Annotator for BaselineAnnotator {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        [
            Capability::Polarity,
            Capability::QualityMapping,
            Capability::Topics,
            Capability::Intent,
        ]
        .into()
    }

    fn polarity(&self, text: &str) -> Result<PolarityLabel, AnnotateError> {
        let mut balance: i64 = 0;
        for seg in segments(text) {
            for (i, label) in self.lexicon.hits(&seg) {
                let negated = seg[i.saturating_sub(2)..i]
                    .iter()
                    .any(|t| NEGATORS.contains(&t.as_str()));
                let sign = match label {
                    PolarityLabel::Positive => 1,
                    PolarityLabel::Negative => -1,
                    PolarityLabel::Neutral => 0,
                };
                balance += if negated { -sign } else { sign };
            }
        }
        Ok(match balance.cmp(&0) {
            std::cmp::Ordering::Greater => PolarityLabel::Positive,
            std::cmp::Ordering::Less => PolarityLabel::Negative,
            std::cmp::Ordering::Equal => PolarityLabel::Neutral,
        })
    }

    fn quality_attributes(&self, text: &str) -> Result<BTreeSet<QualityAttribute>, AnnotateError> {
        Ok(segments(text)
            .iter()
            .flat_map(|seg| self.quality.hits(seg).into_iter().map(|(_, a)| *a))
            .collect())
    }

    /// Multi-word noun-phrase candidates (2 to 3 words) from prose.
    fn topics(&self, text: &str) -> Result<Vec<WeightedTerm>, AnnotateError> {
        let mut seen = BTreeSet::new();
        Ok(self
            .chunks(text)
            .into_iter()
            .filter(|c| (2..=3).contains(&c.len()) && c.iter().all(|w| w.len() >= 3))
            .map(|c| c.join(" "))
            .filter(|t| seen.insert(t.clone()))
            .map(|t| WeightedTerm::new(&t))
            .collect())
    }

    fn intent_terms(&self, story: &str) -> Result<Vec<WeightedTerm>, AnnotateError> {
        Ok(self
            .chunks(story)
            .into_iter()
            .map(|c| WeightedTerm::new(&c.join(" ")))
            .collect())
    }
}

fn escape_line(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn parse_terms(line: &str) -> Result<Vec<WeightedTerm>, AnnotateError> {
    let mut out = Vec::new();
    for entry in line.split(';').map(str::trim).filter(|e| !e.is_empty()) {
        let (term, weight) = match entry.split_once('|') {
            Some((t, w)) => {
                let w: f64 = w
                    .trim()
                    .parse()
                    .map_err(|_| AnnotateError::Annotator(format!("bad weight in {entry:?}")))?;
                (t.trim(), w)
            }
            None => (entry, 1.0),
        };
        if !(weight > 0.0 && weight <= 1.0) || term.is_empty() {
            return Err(AnnotateError::Annotator(format!("bad term entry {entry:?}")));
        }
        out.push(WeightedTerm::weighted(term, weight));
    }
    Ok(out)
}

struct Pipe {
    _child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// Subprocess adapter. One request is in flight at a time.
pub struct ExternalAnnotator {
    id: String,
    capabilities: BTreeSet<Capability>,
    pipe: Mutex<Pipe>,
}

impl ExternalAnnotator {
    pub fn spawn(
        id: &str,
        program: &str,
        args: &[String],
        capabilities: BTreeSet<Capability>,
    ) -> Result<Self, AnnotateError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AnnotateError::Annotator(format!("spawn {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ExternalAnnotator {
            id: id.to_string(),
            capabilities,
            pipe: Mutex::new(Pipe {
                _child: child,
                stdin,
                stdout,
            }),
        })
    }

    fn call(&self, op: &str, text: &str) -> Result<String, AnnotateError> {
        let mut pipe = self
            .pipe
            .lock()
            .map_err(|_| AnnotateError::Annotator("adapter pipe poisoned".into()))?;
        let request = format!("{op}\t{}\n", escape_line(text));
        pipe.stdin
            .write_all(request.as_bytes())
            .and_then(|_| pipe.stdin.flush())
            .map_err(|e| AnnotateError::Annotator(format!("write to {}: {e}", self.id)))?;
        let mut line = String::new();
        let n = pipe
            .stdout
            .read_line(&mut line)
            .map_err(|e| AnnotateError::Annotator(format!("read from {}: {e}", self.id)))?;
        if n == 0 {
            return Err(AnnotateError::Annotator(format!("{} closed its output", self.id)));
        }
        Ok(line.trim_end_matches(['\n', '\r']).to_string())
    }
}

impl Annotator for ExternalAnnotator {
    fn id(&self) -> &str {
        &self.id
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        self.capabilities.clone()
    }

    fn polarity(&self, text: &str) -> Result<PolarityLabel, AnnotateError> {
        let line = self.call("polarity", text)?;
        PolarityLabel::parse(&line)
            .ok_or_else(|| AnnotateError::Annotator(format!("malformed polarity response {line:?}")))
    }

    fn quality_attributes(&self, text: &str) -> Result<BTreeSet<QualityAttribute>, AnnotateError> {
        let line = self.call("quality", text)?;
        line.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| AnnotateError::Annotator(format!("malformed attribute {s:?}")))
            })
            .collect()
    }

    fn topics(&self, text: &str) -> Result<Vec<WeightedTerm>, AnnotateError> {
        parse_terms(&self.call("topics", text)?)
    }

    fn intent_terms(&self, story: &str) -> Result<Vec<WeightedTerm>, AnnotateError> {
        parse_terms(&self.call("intent", story)?)
    }
}

/// Uses `primary` and falls back to `fallback` when the primary fails with
/// an adapter error.
pub struct FallbackAnnotator<P, F> {
    pub primary: P,
    pub fallback: F,
}

impl<P: Annotator, F: Annotator> FallbackAnnotator<P, F> {
    fn pick<T>(
        &self,
        primary: Result<T, AnnotateError>,
        fallback: impl FnOnce() -> Result<T, AnnotateError>,
    ) -> Result<T, AnnotateError> {
        match primary {
            Err(AnnotateError::Annotator(msg)) => {
                tracing::warn!(annotator = self.primary.id(), error = %msg, "falling back");
                fallback()
            }
            other => other,
        }
    }
}

impl<P: Annotator, F: Annotator> Annotator for FallbackAnnotator<P, F> {
    fn id(&self) -> &str {
        self.primary.id()
    }

    fn capabilities(&self) -> BTreeSet<Capability> {
        self.primary
            .capabilities()
            .intersection(&self.fallback.capabilities())
            .copied()
            .collect()
    }

    fn polarity(&self, text: &str) -> Result<PolarityLabel, AnnotateError> {
        self.pick(self.primary.polarity(text), || self.fallback.polarity(text))
    }

    fn quality_attributes(&self, text: &str) -> Result<BTreeSet<QualityAttribute>, AnnotateError> {
        self.pick(self.primary.quality_attributes(text), || {
            self.fallback.quality_attributes(text)
        })
    }

    fn topics(&self, text: &str) -> Result<Vec<WeightedTerm>, AnnotateError> {
        self.pick(self.primary.topics(text), || self.fallback.topics(text))
    }

    fn intent_terms(&self, story: &str) -> Result<Vec<WeightedTerm>, AnnotateError> {
        self.pick(self.primary.intent_terms(story), || self.fallback.intent_terms(story))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use PolarityLabel::*;

    fn base() -> BaselineAnnotator {
        BaselineAnnotator::default()
    }

    #[test]
    fn polarity_examples() {
        let b = base();
        assert_eq!(classify_polarity(&b, "this library is excellent and fast").unwrap(), Positive);
        assert_eq!(classify_polarity(&b, "it crashes constantly, terrible").unwrap(), Negative);
        assert_eq!(classify_polarity(&b, "released in 2020").unwrap(), Neutral);
        assert_eq!(classify_polarity(&b, "not good at all").unwrap(), Negative);
        assert!(matches!(classify_polarity(&b, "  "), Err(AnnotateError::InvalidInput(_))));
    }

    #[test]
    fn quality_mapping_examples() {
        let b = base();
        let attrs = map_quality_attributes(&b, "training is fast but it crashes on exit").unwrap();
        assert_eq!(
            attrs,
            [QualityAttribute::PerformanceEfficiency, QualityAttribute::Reliability].into()
        );
        assert!(map_quality_attributes(&b, "hello world").unwrap().is_empty());
        assert!(matches!(map_quality_attributes(&b, ""), Err(AnnotateError::InvalidInput(_))));
        let phrase = map_quality_attributes(&b, "steep Learning Curve").unwrap();
        assert_eq!(phrase, [QualityAttribute::Usability].into());
    }

    #[test]
    fn intent_examples() {
        let b = base();
        let story = "I need a web framework for a REST API with good documentation";
        let terms: Vec<String> = extract_intent_terms(&b, story)
            .unwrap()
            .into_iter()
            .map(|t| t.term)
            .collect();
        assert_eq!(terms, ["web framework", "rest api", "good documentation"]);
        assert_eq!(
            extract_intent_terms(&b, "I need a the for with"),
            Err(AnnotateError::EmptyIntent)
        );
        assert_eq!(
            extract_intent_terms(&b, story).unwrap(),
            extract_intent_terms(&b, story).unwrap()
        );
    }

    #[test]
    fn topics_are_multiword() {
        let b = base();
        let t: Vec<_> = extract_topics(&b, "helpers for web scraping and data cleaning. Misc")
            .unwrap()
            .into_iter()
            .map(|t| t.term)
            .collect();
        assert_eq!(t, ["web scraping", "data cleaning"]);
    }

    #[test]
    fn vote_examples() {
        assert_eq!(
            majority_vote(&[Positive, Positive, Negative], TiePolicy::Abstain).unwrap(),
            (Positive, 2.0 / 3.0)
        );
        assert_eq!(
            majority_vote(&[Positive, Negative], TiePolicy::Abstain),
            Err(AnnotateError::Tie)
        );
        assert_eq!(
            majority_vote(&[Negative, Positive], TiePolicy::FirstAnnotator).unwrap(),
            (Negative, 0.5)
        );
        assert_eq!(majority_vote(&["a"; 4], TiePolicy::Abstain).unwrap(), ("a", 1.0));
        assert_eq!(
            majority_vote::<u8>(&[], TiePolicy::Abstain),
            Err(AnnotateError::NoLabels)
        );
    }

    struct PolarityOnly;
    impl Annotator for PolarityOnly {
        fn id(&self) -> &str {
            "polarity-only"
        }
        fn capabilities(&self) -> BTreeSet<Capability> {
            [Capability::Polarity].into()
        }
        fn polarity(&self, _: &str) -> Result<PolarityLabel, AnnotateError> {
            Ok(Neutral)
        }
        // implemented but not declared: must still be refused
        fn topics(&self, _: &str) -> Result<Vec<WeightedTerm>, AnnotateError> {
            Ok(vec![WeightedTerm::new("x")])
        }
    }

    #[test]
    fn undeclared_capability_is_refused() {
        let a = PolarityOnly;
        assert_eq!(classify_polarity(&a, "x").unwrap(), Neutral);
        assert!(matches!(
            extract_topics(&a, "some text"),
            Err(AnnotateError::Capability { capability: Capability::Topics, .. })
        ));
        assert!(matches!(
            extract_intent_terms(&a, "web framework"),
            Err(AnnotateError::Capability { .. })
        ));
    }

    #[test]
    fn registry_rejects_duplicates() {
        let mut reg = AnnotatorRegistry::default();
        reg.register(Box::new(base())).unwrap();
        assert!(matches!(
            reg.register(Box::new(base())),
            Err(AnnotateError::DuplicateAnnotator(_))
        ));
        assert!(reg.get("baseline").is_some());
    }

    fn sh(script: &str, caps: &[Capability]) -> ExternalAnnotator {
        ExternalAnnotator::spawn(
            "ext",
            "sh",
            &["-c".to_string(), script.to_string()],
            caps.iter().copied().collect(),
        )
        .unwrap()
    }

    #[test]
    fn external_protocol() {
        let ext = sh(
            r#"while IFS= read -r line; do
                 case "$line" in
                   polarity*) echo positive ;;
                   quality*) echo "security, reliability" ;;
                   intent*) echo "web framework|0.9;rest api" ;;
                   *) echo "???" ;;
                 esac
               done"#,
            &[Capability::Polarity, Capability::QualityMapping, Capability::Intent],
        );
        assert_eq!(classify_polarity(&ext, "a\tb\nc").unwrap(), Positive);
        assert_eq!(
            map_quality_attributes(&ext, "x").unwrap(),
            [QualityAttribute::Security, QualityAttribute::Reliability].into()
        );
        let terms = extract_intent_terms(&ext, "story").unwrap();
        assert_eq!(terms[0], WeightedTerm::weighted("web framework", 0.9));
        assert_eq!(terms[1], WeightedTerm::new("rest api"));
    }

    #[test]
    fn malformed_external_response() {
        let ext = sh("while read -r l; do echo maybe; done", &[Capability::Polarity]);
        assert!(matches!(classify_polarity(&ext, "x"), Err(AnnotateError::Annotator(_))));
        let dead = sh("exit 0", &[Capability::Polarity]);
        assert!(matches!(classify_polarity(&dead, "x"), Err(AnnotateError::Annotator(_))));
        let fb = FallbackAnnotator {
            primary: dead,
            fallback: base(),
        };
        assert_eq!(classify_polarity(&fb, "excellent").unwrap(), Positive);
    }

    fn brute_mode(labels: &[u8]) -> (Vec<u8>, usize) {
        let mut best = 0;
        let mut modes = Vec::new();
        for cand in 0u8..4 {
            let c = labels.iter().filter(|l| **l == cand).count();
            if c > best {
                best = c;
                modes = vec![cand];
            } else if c == best && c > 0 {
                modes.push(cand);
            }
        }
        (modes, best)
    }

    proptest! {
        #[test]
        fn vote_matches_brute_force(labels in proptest::collection::vec(0u8..4, 1..40)) {
            let (modes, best) = brute_mode(&labels);
            let expected_share = best as f64 / labels.len() as f64;
            match majority_vote(&labels, TiePolicy::Abstain) {
                Ok((w, share)) => {
                    prop_assert_eq!(modes.len(), 1);
                    prop_assert_eq!(w, modes[0]);
                    prop_assert!((share - expected_share).abs() < 1e-12);
                }
                Err(AnnotateError::Tie) => prop_assert!(modes.len() > 1),
                Err(e) => prop_assert!(false, "unexpected {e}"),
            }
            let (w, _) = majority_vote(&labels, TiePolicy::FirstAnnotator).unwrap();
            prop_assert!(modes.contains(&w));
            let first = labels.iter().find(|l| modes.contains(l)).unwrap();
            prop_assert_eq!(w, *first);
        }

        #[test]
        fn baseline_is_deterministic(text in "[a-zA-Z ,.!]{1,80}") {
            let b = base();
            prop_assume!(!text.trim().is_empty());
            prop_assert_eq!(b.polarity(&text).unwrap(), b.polarity(&text).unwrap());
            prop_assert_eq!(b.quality_attributes(&text).unwrap(), b.quality_attributes(&text).unwrap());
            prop_assert_eq!(b.intent_terms(&text).unwrap(), b.intent_terms(&text).unwrap());
        }
    }
}
