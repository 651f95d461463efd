//! Rule-based monolingual corpus cleaning.
//!
//! Lines are checked in order against: minimum length, the share of
//! punctuation and digits, the dominant Unicode script, and exact
//! duplicates. A line is charged to the first rule it fails.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use unicode_general_category::{get_general_category, GeneralCategory};
use unicode_script::{Script, UnicodeScript};

pub const RULE_LENGTH: &str = "length";
pub const RULE_RATIO: &str = "ratio";
pub const RULE_SCRIPT: &str = "script";
pub const RULE_DEDUP: &str = "dedup";

/// Default sentence terminators: Latin, Ethiopic, Arabic, Devanagari, CJK.
pub const DEFAULT_TERMINATORS: &[char] = &['.', '!', '?', '።', '፧', '؟', '।', '॥', '。', '！', '？'];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    pub max_punct_num_ratio: f64,
    /// ISO 15924 codes (`Latn`, `Ethi`, ...). Empty allows every script.
    pub allowed_scripts: Vec<String>,
    pub min_chars: usize,
    pub dedup: bool,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            max_punct_num_ratio: 0.20,
            allowed_scripts: Vec::new(),
            min_chars: 1,
            dedup: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("ratio {0} is outside [0, 1]")]
    RatioOutOfRange(String),
    #[error("min_chars must be at least 1")]
    ZeroMinChars,
    #[error("unknown script {0:?}")]
    UnknownScript(String),
}

impl PreprocessConfig {
    fn resolve_scripts(&self) -> Result<Vec<Script>, ConfigError> {
        self.allowed_scripts
            .iter()
            .map(|name| parse_script(name).ok_or_else(|| ConfigError::UnknownScript(name.clone())))
            .collect()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&self.max_punct_num_ratio) {
            return Err(ConfigError::RatioOutOfRange(self.max_punct_num_ratio.to_string()));
        }
        if self.min_chars == 0 {
            return Err(ConfigError::ZeroMinChars);
        }
        self.resolve_scripts().map(|_| ())
    }
}

/// Accepts ISO 15924 codes or full Unicode script names, case-insensitively.
pub fn parse_script(name: &str) -> Option<Script> {
    let name = name.trim();
    let mut chars = name.chars();
    let titled: String = {
        let first = chars.next()?;
        first.to_uppercase().chain(chars.flat_map(char::to_lowercase)).collect()
    };
    Script::from_short_name(&titled)
        .or_else(|| Script::from_full_name(name))
        .or_else(|| Script::from_full_name(&titled))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    pub input_count: usize,
    pub kept_count: usize,
    pub rejected_by_rule: BTreeMap<String, usize>,
}

impl FilterReport {
    pub fn rejected_total(&self) -> usize {
        self.rejected_by_rule.values().sum()
    }

    pub fn reconciles(&self) -> bool {
        self.kept_count + self.rejected_total() == self.input_count
    }

    /// Associative merge of counters from independently processed chunks.
    pub fn merge(&mut self, other: &FilterReport) {
        self.input_count += other.input_count;
        self.kept_count += other.kept_count;
        for (rule, n) in &other.rejected_by_rule {
            *self.rejected_by_rule.entry(rule.clone()).or_default() += n;
        }
    }

    fn reject(&mut self, rule: &str) {
        *self.rejected_by_rule.entry(rule.to_string()).or_default() += 1;
    }
}

/// Splits text after a terminator followed by whitespace, unless the next
/// word starts with a lowercase letter. Line breaks always split.
pub fn split_sentences(text: &str) -> Vec<String> {
    split_sentences_with(text, DEFAULT_TERMINATORS)
}

pub fn split_sentences_with(text: &str, terminators: &[char]) -> Vec<String> {
    let mut out = Vec::new();
    for line in text.lines() {
        let chars: Vec<(usize, char)> = line.char_indices().collect();
        let mut start = 0;
        for (pos, &(byte, c)) in chars.iter().enumerate() {
            if !terminators.contains(&c) {
                continue;
            }
            let Some(&(_, after)) = chars.get(pos + 1) else {
                continue;
            };
            if !after.is_whitespace() {
                continue;
            }
            let next_word = chars[pos + 1..].iter().map(|&(_, ch)| ch).find(|ch| !ch.is_whitespace());
            if matches!(next_word, Some(ch) if ch.is_lowercase()) {
                continue;
            }
            let end = byte + c.len_utf8();
            push_trimmed(&mut out, &line[start..end]);
            start = end;
        }
        push_trimmed(&mut out, &line[start..]);
    }
    out
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

fn is_punct_or_digit(c: char) -> bool {
    use GeneralCategory::*;
    matches!(
        get_general_category(c),
        ConnectorPunctuation
            | DashPunctuation
            | OpenPunctuation
            | ClosePunctuation
            | InitialPunctuation
            | FinalPunctuation
            | OtherPunctuation
            | DecimalNumber
    )
}

/// Share of punctuation (`P*`) and decimal digits (`Nd`) among the
/// non-whitespace characters; zero when there are none.
pub fn punct_num_ratio(s: &str) -> f64 {
    let (mut hits, mut total) = (0usize, 0usize);
    for c in s.chars().filter(|c| !c.is_whitespace()) {
        total += 1;
        if is_punct_or_digit(c) {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Script held by a strict majority of the script-bearing characters.
/// `Common`, `Inherited` and `Unknown` characters do not vote. Returns
/// `None` on a tie or when no character votes.
pub fn dominant_script(s: &str) -> Option<Script> {
    let mut votes: BTreeMap<u32, (Script, usize)> = BTreeMap::new();
    for c in s.chars() {
        let script = c.script();
        if matches!(script, Script::Common | Script::Inherited | Script::Unknown) {
            continue;
        }
        votes.entry(script.as_iso15924_tag()).or_insert((script, 0)).1 += 1;
    }
    let mut ranked: Vec<(Script, usize)> = votes.into_values().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    match ranked.as_slice() {
        [] => None,
        [(s, _)] => Some(*s),
        [(s, a), (_, b), ..] if a > b => Some(*s),
        _ => None,
    }
}

/// Streaming filter; feed lines with [`Pipeline::push`].
pub struct Pipeline {
    cfg: PreprocessConfig,
    scripts: Vec<Script>,
    seen: HashSet<String>,
    report: FilterReport,
}

impl Pipeline {
    pub fn new(cfg: PreprocessConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let scripts = cfg.resolve_scripts()?;
        Ok(Self {
            cfg,
            scripts,
            seen: HashSet::new(),
            report: FilterReport::default(),
        })
    }

    /// Returns the trimmed line if it is kept.
    pub fn push(&mut self, line: &str) -> Option<String> {
        self.report.input_count += 1;
        let line = line.trim();
        let rule = if line.chars().count() < self.cfg.min_chars {
            Some(RULE_LENGTH)
        } else if punct_num_ratio(line) > self.cfg.max_punct_num_ratio {
            Some(RULE_RATIO)
        } else if !self.scripts.is_empty() && !dominant_script(line).is_some_and(|s| self.scripts.contains(&s)) {
            Some(RULE_SCRIPT)
        } else if self.cfg.dedup && !self.seen.insert(line.to_string()) {
            Some(RULE_DEDUP)
        } else {
            None
        };
        match rule {
            Some(rule) => {
                self.report.reject(rule);
                None
            }
            None => {
                self.report.kept_count += 1;
                Some(line.to_string())
            }
        }
    }

    pub fn report(&self) -> &FilterReport {
        &self.report
    }

    pub fn finish(self) -> FilterReport {
        self.report
    }
}

pub fn run_pipeline<I, S>(lines: I, cfg: &PreprocessConfig) -> Result<(Vec<String>, FilterReport), ConfigError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut p = Pipeline::new(cfg.clone())?;
    let kept = lines.into_iter().filter_map(|l| p.push(l.as_ref())).collect();
    Ok((kept, p.finish()))
}
