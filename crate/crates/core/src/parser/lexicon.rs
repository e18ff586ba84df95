use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub const LEXICON_FORMAT_VERSION: u32 = 1;

/// Word lists driving the rule-based parser.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub format_version: u32,
    /// Canonical object phrase → synonyms. Both are recognized.
    pub object_nouns: BTreeMap<String, Vec<String>>,
    pub part_nouns: BTreeSet<String>,
    pub self_referents: BTreeSet<String>,
    pub action_verbs: BTreeSet<String>,
    /// Verbs that take a recipient ("give me …").
    pub transfer_verbs: BTreeSet<String>,
    pub determiners: BTreeSet<String>,
    pub possessives: BTreeSet<String>,
    pub pronouns: BTreeSet<String>,
    pub prepositions: BTreeSet<String>,
    pub function_words: BTreeSet<String>,
    pub connectives: BTreeSet<String>,
}

fn set(words: &[&str]) -> BTreeSet<String> {
    words.iter().map(|w| w.to_string()).collect()
}

impl Default for Lexicon {
    fn default() -> Self {
        let objects: &[(&str, &[&str])] = &[
            ("apple", &[]),
            ("ball", &["tennis ball"]),
            ("banana", &[]),
            ("book", &[]),
            ("bottle", &["water bottle"]),
            ("bowl", &[]),
            ("chef can", &["coffee can", "master chef can"]),
            ("clamp", &[]),
            ("cup", &[]),
            ("drill", &["power drill"]),
            ("eraser", &[]),
            ("fish can", &["tuna can", "tuna"]),
            ("flashlight", &["torch"]),
            ("fork", &[]),
            ("frying pan", &["pan", "skillet"]),
            ("hammer", &[]),
            ("knife", &[]),
            ("large clamp", &[]),
            ("lemon", &[]),
            ("marker", &["pen"]),
            ("medium clamp", &[]),
            ("mug", &["coffee mug"]),
            ("mustard bottle", &["mustard"]),
            ("orange", &[]),
            ("pear", &[]),
            ("phone", &[]),
            ("plate", &[]),
            ("pliers", &[]),
            ("scissors", &[]),
            ("screwdriver", &[]),
            ("small clamp", &[]),
            ("spatula", &[]),
            ("sponge", &[]),
            ("spoon", &[]),
            ("spray bottle", &["windex"]),
            ("strawberry", &[]),
            ("tape", &[]),
            ("toy plane", &["plane", "airplane"]),
            ("wrench", &["spanner"]),
        ];
        Lexicon {
            format_version: LEXICON_FORMAT_VERSION,
            object_nouns: objects
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
                .collect(),
            part_nouns: set(&[
                "barrel", "base", "battery", "blade", "body", "bottom", "cap", "chuck", "edge", "end", "grip",
                "handle", "head", "jaw", "leaf", "lid", "loop", "middle", "neck", "rim", "shaft", "side", "spout",
                "stem", "tip", "top", "trigger",
            ]),
            self_referents: set(&["i", "me", "myself", "my"]),
            action_verbs: set(&[
                "bring", "carry", "deliver", "fetch", "get", "give", "grab", "grasp", "hand", "have", "hold", "need",
                "pass", "pick", "take", "want", "like", "keep", "touch", "use",
            ]),
            transfer_verbs: set(&["bring", "deliver", "fetch", "get", "give", "hand", "pass"]),
            determiners: set(&["a", "an", "the", "this", "that", "these", "those", "some", "any", "one", "another"]),
            possessives: set(&["its", "his", "her", "their", "your", "our", "my", "'s"]),
            pronouns: set(&["i", "me", "myself", "you", "we", "us", "he", "she", "it", "they", "them", "him"]),
            prepositions: set(&[
                "by", "to", "over", "on", "at", "from", "with", "in", "into", "of", "for", "near", "up", "out",
            ]),
            function_words: set(&[
                "please", "can", "could", "will", "would", "shall", "should", "may", "might", "must", "do", "does",
                "let", "just", "kindly", "not", "then", "now", "here", "there", "is", "are", "am", "be",
            ]),
            connectives: set(&["so", "by", "and", "while", "because", "but", "then"]),
        }
    }
}

impl Lexicon {
    /// Every recognized object phrase (canonical names and synonyms) as token lists.
    pub fn object_phrases(&self) -> Vec<Vec<String>> {
        let mut out: Vec<Vec<String>> = self
            .object_nouns
            .iter()
            .flat_map(|(k, syn)| std::iter::once(k).chain(syn.iter()))
            .map(|p| p.split_whitespace().map(str::to_string).collect())
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// Adds catalog names and synonyms that are not already known.
    pub fn with_objects<'a>(mut self, names: impl IntoIterator<Item = (&'a str, &'a [String])>) -> Self {
        for (name, synonyms) in names {
            let entry = self.object_nouns.entry(name.to_string()).or_default();
            for s in synonyms {
                if !entry.contains(s) {
                    entry.push(s.clone());
                }
            }
        }
        self
    }

    /// Part noun lemma for a token: the token itself or its singular.
    pub fn part_lemma(&self, token: &str) -> Option<String> {
        if self.part_nouns.contains(token) {
            return Some(token.to_string());
        }
        let singular = token.strip_suffix("es").filter(|s| self.part_nouns.contains(*s)).or_else(|| token.strip_suffix('s'));
        singular.filter(|s| self.part_nouns.contains(*s)).map(str::to_string)
    }

    /// Gerund spelling of a base verb.
    pub fn gerund(verb: &str) -> String {
        let chars: Vec<char> = verb.chars().collect();
        let n = chars.len();
        let vowel = |c: char| "aeiou".contains(c);
        if let Some(stem) = verb.strip_suffix("ie") {
            format!("{stem}ying")
        } else if verb.ends_with('e') && !verb.ends_with("ee") && n > 2 {
            format!("{}ing", &verb[..verb.len() - 1])
        } else if n >= 3 && !vowel(chars[n - 1]) && !"wxy".contains(chars[n - 1]) && vowel(chars[n - 2]) && !vowel(chars[n - 3]) && n <= 4 {
            format!("{verb}{}ing", chars[n - 1])
        } else {
            format!("{verb}ing")
        }
    }

    /// Base form when `token` is an action verb or its gerund, with a gerund flag.
    pub fn verb(&self, token: &str) -> Option<(String, bool)> {
        if self.action_verbs.contains(token) {
            return Some((token.to_string(), false));
        }
        self.action_verbs.iter().find(|v| Self::gerund(v) == token).map(|v| (v.clone(), true))
    }

    pub fn validate(&self) -> Result<(), String> {
        if let Some(w) = self.self_referents.intersection(&self.part_nouns).next() {
            return Err(format!("{w:?} is both a self-referent and a part noun"));
        }
        if self.object_nouns.is_empty() {
            return Err("no object nouns".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gerunds() {
        assert_eq!(Lexicon::gerund("grab"), "grabbing");
        assert_eq!(Lexicon::gerund("give"), "giving");
        assert_eq!(Lexicon::gerund("hold"), "holding");
        assert_eq!(Lexicon::gerund("get"), "getting");
        assert_eq!(Lexicon::gerund("deliver"), "delivering");
        assert_eq!(Lexicon::gerund("take"), "taking");
    }

    #[test]
    fn default_is_valid_and_round_trips() {
        let lex = Lexicon::default();
        lex.validate().unwrap();
        let text = serde_json::to_string(&lex).unwrap();
        let back: Lexicon = serde_json::from_str(&text).unwrap();
        assert_eq!(back, lex);
    }

    #[test]
    fn plural_parts() {
        let lex = Lexicon::default();
        assert_eq!(lex.part_lemma("blades").as_deref(), Some("blade"));
        assert_eq!(lex.part_lemma("tips").as_deref(), Some("tip"));
        assert_eq!(lex.part_lemma("handle").as_deref(), Some("handle"));
        assert_eq!(lex.part_lemma("apple"), None);
    }
}
