//! Rule-based command parsing: object phrase, holding part and holder.

mod lexicon;

pub use lexicon::{Lexicon, LEXICON_FORMAT_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ParseError {
    #[error("empty utterance")]
    Empty,
    #[error("no known object in {0:?}")]
    NoObject(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Holder {
    Robot,
    Human,
    None,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedCommand {
    pub object_phrase: String,
    pub part: Option<String>,
    pub holder: Holder,
    /// No holder rule fired and the robot default was used.
    #[serde(default)]
    pub low_confidence: bool,
    /// Further object phrases mentioned after the first.
    #[serde(default)]
    pub other_objects: Vec<String>,
}

/// Lowercases, strips punctuation and splits a trailing `'s` into its own token.
pub fn tokenize(utterance: &str) -> Vec<String> {
    let mut out = Vec::new();
    for raw in utterance.split_whitespace() {
        let word: String = raw
            .chars()
            .map(|c| if c == '’' { '\'' } else { c })
            .filter(|c| c.is_alphanumeric() || *c == '\'' || *c == '-')
            .collect::<String>()
            .to_lowercase();
        let word = word.trim_matches(|c| c == '\'' || c == '-');
        if word.is_empty() {
            continue;
        }
        match word.strip_suffix("'s") {
            Some(stem) if !stem.is_empty() => {
                out.push(stem.to_string());
                out.push("'s".to_string());
            }
            _ => out.push(word.to_string()),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tag {
    Object,
    Part,
    SelfRef,
    Pronoun,
    Verb { gerund: bool },
    Determiner,
    Possessive,
    Preposition,
    Connective,
    Function,
    Unknown,
}

struct Tagged {
    tokens: Vec<String>,
    tags: Vec<Tag>,
    /// (start, end) token spans of object phrases, in sentence order.
    objects: Vec<(usize, usize)>,
}

fn tag(tokens: Vec<String>, lex: &Lexicon) -> Tagged {
    let phrases = lex.object_phrases();
    let n = tokens.len();
    let mut tags = vec![Tag::Unknown; n];
    let mut objects = Vec::new();
    let mut i = 0;
    while i < n {
        let longest = phrases
            .iter()
            .filter(|p| i + p.len() <= n && tokens[i..i + p.len()] == p[..])
            .map(|p| p.len())
            .max();
        match longest {
            Some(len) => {
                objects.push((i, i + len));
                for t in &mut tags[i..i + len] {
                    *t = Tag::Object;
                }
                i += len;
            }
            None => i += 1,
        }
    }
    for (k, tok) in tokens.iter().enumerate() {
        if tags[k] == Tag::Object {
            continue;
        }
        let t = tok.as_str();
        tags[k] = if lex.self_referents.contains(t) {
            Tag::SelfRef
        } else if lex.possessives.contains(t) {
            Tag::Possessive
        } else if lex.pronouns.contains(t) {
            Tag::Pronoun
        } else if lex.connectives.contains(t) {
            Tag::Connective
        } else if let Some((_, gerund)) = lex.verb(t) {
            Tag::Verb { gerund }
        } else if lex.part_lemma(t).is_some() {
            Tag::Part
        } else if lex.determiners.contains(t) {
            Tag::Determiner
        } else if lex.prepositions.contains(t) {
            Tag::Preposition
        } else if lex.function_words.contains(t) {
            Tag::Function
        } else {
            Tag::Unknown
        };
    }
    // "by" is both a connective and a preposition; either way it splits clauses.
    Tagged { tokens, tags, objects }
}

impl Tagged {
    /// Object phrase span widened over adjacent object nouns (right) and
    /// unknown modifier words (left).
    fn object_span(&self, first: (usize, usize)) -> (usize, usize) {
        let (mut s, mut e) = first;
        while let Some(next) = self.objects.iter().find(|o| o.0 == e) {
            e = next.1;
        }
        while s > 0 && self.tags[s - 1] == Tag::Unknown {
            s -= 1;
        }
        (s, e)
    }

    fn clause_bounds(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for (k, t) in self.tags.iter().enumerate() {
            if *t == Tag::Connective {
                if k > start {
                    out.push((start, k));
                }
                start = k + 1;
            }
        }
        if start < self.tags.len() {
            out.push((start, self.tags.len()));
        }
        out
    }
}

fn phrase(tokens: &[String]) -> String {
    tokens.join(" ")
}

fn tagged(utterance: &str, lex: &Lexicon) -> Result<Tagged, ParseError> {
    let tokens = tokenize(utterance);
    if tokens.is_empty() {
        return Err(ParseError::Empty);
    }
    Ok(tag(tokens, lex))
}

fn object_span(t: &Tagged, utterance: &str) -> Result<(usize, usize), ParseError> {
    let first = *t.objects.first().ok_or_else(|| ParseError::NoObject(utterance.trim().to_string()))?;
    Ok(t.object_span(first))
}

/// First object phrase with its modifiers.
pub fn extract_object(utterance: &str, lex: &Lexicon) -> Result<String, ParseError> {
    let t = tagged(utterance, lex)?;
    let (s, e) = object_span(&t, utterance)?;
    Ok(phrase(&t.tokens[s..e]))
}

fn part_index(t: &Tagged, span: (usize, usize)) -> Option<usize> {
    (0..t.tokens.len()).find(|k| (*k < span.0 || *k >= span.1) && t.tags[*k] == Tag::Part)
}

/// First part noun outside the object phrase (singular form).
pub fn extract_part(utterance: &str, object_phrase: &str, lex: &Lexicon) -> Option<String> {
    let t = tagged(utterance, lex).ok()?;
    let target = tokenize(object_phrase);
    let span = (0..t.tokens.len())
        .find(|s| t.tokens[*s..].starts_with(&target))
        .map(|s| (s, s + target.len()))
        .unwrap_or((0, 0));
    part_index(&t, span).and_then(|k| lex.part_lemma(&t.tokens[k]))
}

/// Holder of the part at token `ip`, with a flag set when no rule fired.
fn holder_for(t: &Tagged, ip: usize, lex: &Lexicon) -> (Holder, bool) {
    let clauses = t.clause_bounds();
    let ci = clauses.iter().position(|(s, e)| ip >= *s && ip < *e).unwrap_or(0);
    let (cs, _) = clauses[ci];
    let verb_in_clause = (cs..ip).rev().find(|k| matches!(t.tags[*k], Tag::Verb { .. }));

    // (a) gerund governing the part: the robot acts on it
    if let Some(v) = verb_in_clause {
        if t.tags[v] == (Tag::Verb { gerund: true }) {
            return (Holder::Robot, false);
        }
    }

    // governing verb: in the part's clause, else the last verb of an earlier clause
    let governing = verb_in_clause.or_else(|| {
        clauses[..ci].iter().rev().find_map(|(s, e)| (*s..*e).rev().find(|k| matches!(t.tags[*k], Tag::Verb { .. })))
    });

    if let Some(g) = governing {
        let gc = clauses.iter().find(|(s, e)| g >= *s && g < *e).copied().unwrap_or((0, g));
        let subject_before = |pred: &dyn Fn(usize) -> bool| (gc.0..g).any(pred);
        // (b) the user is the subject of the governing verb
        if subject_before(&|k| t.tokens[k] == "i") {
            return (Holder::Human, false);
        }
        // (c) imperative verb taking the part as its direct object
        let imperative = !subject_before(&|k| matches!(t.tags[k], Tag::Pronoun) || t.tokens[k] == "i");
        if verb_in_clause == Some(g) && imperative {
            let direct = (g + 1..ip).all(|k| {
                matches!(t.tags[k], Tag::Determiner | Tag::Possessive | Tag::Object | Tag::Unknown | Tag::SelfRef)
            });
            if direct {
                return (Holder::Robot, false);
            }
        }
    }

    // (d) recipient construction with a possessive on the part
    let recipient = (0..t.tokens.len()).any(|k| {
        lex.verb(&t.tokens[k]).is_some_and(|(base, gerund)| !gerund && lex.transfer_verbs.contains(&base))
            && matches!(t.tokens.get(k + 1).map(String::as_str), Some("me" | "myself"))
    });
    let possessive = ip > 0 && t.tags[ip - 1] == Tag::Possessive;
    if recipient && possessive {
        return (Holder::Human, false);
    }
    (Holder::Robot, true)
}

/// Holder for `part` in `utterance`; robot with the low-confidence flag when no rule applies.
pub fn infer_holder(utterance: &str, part: &str, lex: &Lexicon) -> (Holder, bool) {
    let Ok(t) = tagged(utterance, lex) else { return (Holder::Robot, true) };
    match (0..t.tokens.len()).find(|k| t.tags[*k] == Tag::Part && lex.part_lemma(&t.tokens[*k]).as_deref() == Some(part)) {
        Some(ip) => holder_for(&t, ip, lex),
        None => (Holder::Robot, true),
    }
}

pub fn parse(utterance: &str, lex: &Lexicon) -> Result<ParsedCommand, ParseError> {
    let t = tagged(utterance, lex)?;
    let span = object_span(&t, utterance)?;
    let object_phrase = phrase(&t.tokens[span.0..span.1]);
    let other_objects = t
        .objects
        .iter()
        .filter(|o| o.0 >= span.1)
        .map(|o| phrase(&t.tokens[o.0..o.1]))
        .collect();
    let (part, holder, low_confidence) = match part_index(&t, span) {
        Some(ip) => {
            let (holder, low) = holder_for(&t, ip, lex);
            (lex.part_lemma(&t.tokens[ip]), holder, low)
        }
        None => (None, Holder::None, false),
    };
    Ok(ParsedCommand { object_phrase, part, holder, low_confidence, other_objects })
}
