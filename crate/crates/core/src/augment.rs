//! Related-word lookup and recombination of a title into new candidate titles.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::BufRead;
use std::sync::OnceLock;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::wndb::{Lexicon, RelationKind};

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("title has no tokens")]
    EmptyTitle,
    #[error("number of titles must be at least 1")]
    ZeroCount,
    #[error("cannot read vocabulary source: {0}")]
    Ingest(#[from] std::io::Error),
    #[error("malformed vocabulary file: {0}")]
    Format(#[from] serde_json::Error),
}

/// Where a replacement word came from, or `Original` for an untouched token.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Original,
    Synonym,
    Hyponym,
    Hypernym,
    CoHyponym,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Provenance::Original => "original",
            Provenance::Synonym => "synonym",
            Provenance::Hyponym => "hyponym",
            Provenance::Hypernym => "hypernym",
            Provenance::CoHyponym => "co-hyponym",
        })
    }
}

/// Words seen in the training titles, with occurrence counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    counts: BTreeMap<String, u64>,
}

impl Vocabulary {
    /// Case-folded alphabetic tokens of every line, split on non-letters.
    pub fn build<R: BufRead>(titles: R) -> Result<Self, AugmentError> {
        let mut vocab = Vocabulary::default();
        for line in titles.lines() {
            vocab.add_title(&line?);
        }
        Ok(vocab)
    }

    pub fn from_titles<'a>(titles: impl IntoIterator<Item = &'a str>) -> Self {
        let mut vocab = Vocabulary::default();
        for t in titles {
            vocab.add_title(t);
        }
        vocab
    }

    pub fn add_title(&mut self, title: &str) {
        for token in title.split(|c: char| !c.is_alphabetic()).filter(|t| !t.is_empty()) {
            *self.counts.entry(token.to_lowercase()).or_insert(0) += 1;
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.counts.contains_key(word)
    }

    pub fn count(&self, word: &str) -> u64 {
        self.counts.get(word).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.counts.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("vocabulary serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, AugmentError> {
        let mut vocab: Vocabulary = serde_json::from_str(text)?;
        vocab.counts.retain(|_, c| *c >= 1);
        Ok(vocab)
    }
}

static CLOSED_CLASS: OnceLock<HashSet<String>> = OnceLock::new();

/// Parses a closed-class word list: one word per line, `#` starts a comment.
pub fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_lowercase)
        .collect()
}

fn closed_class_words() -> &'static HashSet<String> {
    CLOSED_CLASS.get_or_init(|| parse_word_list(include_str!("../data/closed_class.txt")))
}

/// Prepositions, pronouns, articles, conjunctions and auxiliaries are never replaced.
/// The empty string counts as closed-class.
pub fn is_closed_class(word: &str) -> bool {
    let w = word.trim().to_lowercase();
    w.is_empty() || closed_class_words().contains(&w)
}

/// Related words of `word` with the relation that first produced each.
///
/// Collection order: synonyms, then per synset its hyponyms, hypernyms and
/// co-hyponyms. Duplicates keep their first occurrence; words outside the
/// vocabulary, multiword lemmas and `word` itself are dropped.
pub fn get_related_words(word: &str, lexicon: &Lexicon, vocab: &Vocabulary) -> Vec<(String, Provenance)> {
    let word = word.trim().to_lowercase();
    let mut collected: Vec<(String, Provenance)> = lexicon
        .synonyms(&word)
        .into_iter()
        .map(|w| (w, Provenance::Synonym))
        .collect();
    for synset in lexicon.synsets_of(&word, None) {
        let groups = [
            (lexicon.relation(synset.id, RelationKind::Hyponym), Provenance::Hyponym),
            (lexicon.relation(synset.id, RelationKind::Hypernym), Provenance::Hypernym),
            (lexicon.co_hyponyms(synset.id), Provenance::CoHyponym),
        ];
        for (related, label) in groups {
            // ids come from the lexicon itself, so lookups cannot fail
            for s in related.unwrap_or_default() {
                collected.extend(s.words().map(|w| (w, label)));
            }
        }
    }

    let mut seen = HashSet::new();
    collected
        .into_iter()
        .filter(|(w, _)| seen.insert(w.clone()))
        .filter(|(w, _)| *w != word && !w.contains(' ') && vocab.contains(w))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TitleToken {
    pub surface: String,
    pub replaceable: bool,
    pub replacements: Vec<(String, Provenance)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CandidateTitle {
    pub tokens: Vec<String>,
    pub provenance: Vec<Provenance>,
    pub is_original: bool,
}

impl CandidateTitle {
    pub fn original(tokens: &[TitleToken]) -> Self {
        Self {
            tokens: tokens.iter().map(|t| t.surface.clone()).collect(),
            provenance: vec![Provenance::Original; tokens.len()],
            is_original: true,
        }
    }

    pub fn text(&self) -> String {
        self.tokens.join(" ")
    }
}

impl fmt::Display for CandidateTitle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text())
    }
}

/// How candidate combinations are picked from the per-token option sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Seeded uniform sampling without replacement over the product space.
    #[default]
    Random,
    /// The i-th title takes option `i mod |options|` at every token.
    RoundRobin,
}

fn lookup_key(surface: &str) -> String {
    surface
        .trim_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

/// Splits a title on whitespace and attaches the replacement options of each token.
pub fn analyze_title(title: &str, lexicon: &Lexicon, vocab: &Vocabulary) -> Vec<TitleToken> {
    title
        .split_whitespace()
        .map(|surface| {
            let key = lookup_key(surface);
            let replaceable = !is_closed_class(&key);
            let replacements = if replaceable {
                get_related_words(&key, lexicon, vocab)
            } else {
                Vec::new()
            };
            TitleToken {
                surface: surface.to_string(),
                replaceable,
                replacements,
            }
        })
        .collect()
}

/// Carries the capitalization of the original token over to its replacement.
fn match_case(original: &str, replacement: &str) -> String {
    let first_upper = original.chars().find(|c| c.is_alphabetic()).is_some_and(char::is_uppercase);
    if !first_upper {
        return replacement.to_string();
    }
    let mut chars = replacement.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

fn build_candidate(tokens: &[TitleToken], choice: &[Option<usize>]) -> CandidateTitle {
    let mut out = Vec::with_capacity(tokens.len());
    let mut provenance = Vec::with_capacity(tokens.len());
    for (tok, pick) in tokens.iter().zip(choice) {
        match pick {
            Some(i) => {
                let (word, label) = &tok.replacements[*i];
                out.push(match_case(&tok.surface, word));
                provenance.push(*label);
            }
            None => {
                out.push(tok.surface.clone());
                provenance.push(Provenance::Original);
            }
        }
    }
    CandidateTitle {
        tokens: out,
        provenance,
        is_original: false,
    }
}

/// Produces up to `number` distinct candidate titles from `title`.
///
/// Every token with related words is swapped for one of them; closed-class
/// tokens and tokens without options keep their surface form. When fewer
/// than `number` combinations exist, all of them are returned.
pub fn generate_new_titles(
    title: &str,
    number: usize,
    lexicon: &Lexicon,
    vocab: &Vocabulary,
    seed: u64,
    sampling: Sampling,
) -> Result<Vec<CandidateTitle>, AugmentError> {
    if number == 0 {
        return Err(AugmentError::ZeroCount);
    }
    let tokens = analyze_title(title, lexicon, vocab);
    if tokens.is_empty() {
        return Err(AugmentError::EmptyTitle);
    }
    Ok(combine(&tokens, number, seed, sampling))
}

/// Sampling step of [`generate_new_titles`] over pre-analyzed tokens.
pub fn combine(tokens: &[TitleToken], number: usize, seed: u64, sampling: Sampling) -> Vec<CandidateTitle> {
    let slots: Vec<usize> = tokens
        .iter()
        .enumerate()
        .filter(|(_, t)| !t.replacements.is_empty())
        .map(|(i, _)| i)
        .collect();
    if slots.is_empty() || number == 0 {
        return Vec::new();
    }
    let radices: Vec<u128> = slots.iter().map(|&i| tokens[i].replacements.len() as u128).collect();
    let total = radices.iter().try_fold(1u128, |acc, &r| acc.checked_mul(r));

    let to_choice = |digits: &[usize]| -> Vec<Option<usize>> {
        let mut choice = vec![None; tokens.len()];
        for (&slot, &d) in slots.iter().zip(digits) {
            choice[slot] = Some(d);
        }
        choice
    };

    let picks: Vec<Vec<usize>> = match sampling {
        Sampling::RoundRobin => round_robin(&radices, number),
        Sampling::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            match total {
                // small spaces: enumerate everything and draw without replacement
                Some(t) if t <= (4 * number as u128).max(4096) => {
                    let all: Vec<u128> = (0..t).collect();
                    all.choose_multiple(&mut rng, number)
                        .map(|&k| decode(k, &radices))
                        .collect()
                }
                _ => {
                    let mut seen = HashSet::new();
                    let mut out = Vec::with_capacity(number);
                    while out.len() < number {
                        let digits: Vec<usize> = radices.iter().map(|&r| rng.random_range(0..r as usize)).collect();
                        if seen.insert(digits.clone()) {
                            out.push(digits);
                        }
                    }
                    out
                }
            }
        }
    };
    picks.iter().map(|d| build_candidate(tokens, &to_choice(d))).collect()
}

fn decode(mut k: u128, radices: &[u128]) -> Vec<usize> {
    radices
        .iter()
        .map(|&r| {
            let d = (k % r) as usize;
            k /= r;
            d
        })
        .collect()
}

fn round_robin(radices: &[u128], number: usize) -> Vec<Vec<usize>> {
    // the sequence repeats with period lcm(radices)
    let period = radices
        .iter()
        .try_fold(1u128, |acc, &r| acc.checked_mul(r / gcd(acc, r)))
        .unwrap_or(u128::MAX);
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    let mut i = 0u128;
    while out.len() < number && i < period {
        let digits: Vec<usize> = radices.iter().map(|&r| (i % r) as usize).collect();
        if seen.insert(digits.clone()) {
            out.push(digits);
        }
        i += 1;
    }
    out
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Every title reachable by [`combine`], by explicit Cartesian product.
/// Test oracle; exponential in the number of replaceable tokens.
pub fn enumerate_reachable(tokens: &[TitleToken]) -> BTreeSet<String> {
    let mut acc: Vec<Vec<String>> = vec![Vec::new()];
    for tok in tokens {
        let options: Vec<String> = if tok.replacements.is_empty() {
            vec![tok.surface.clone()]
        } else {
            tok.replacements.iter().map(|(w, _)| match_case(&tok.surface, w)).collect()
        };
        acc = acc
            .into_iter()
            .flat_map(|prefix| {
                options.iter().map(move |o| {
                    let mut p = prefix.clone();
                    p.push(o.clone());
                    p
                })
            })
            .collect();
    }
    let original: String = tokens.iter().map(|t| t.surface.as_str()).collect::<Vec<_>>().join(" ");
    acc.into_iter().map(|t| t.join(" ")).filter(|t| *t != original).collect()
}

/// The bundled sample title corpus, useful as a default vocabulary.
pub fn sample_vocabulary() -> Vocabulary {
    Vocabulary::from_titles(include_str!("../data/sample_titles.txt").lines())
}
