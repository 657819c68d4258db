//! WordNet database (WNDB 3.x text format) loader and relation queries.
//!
//! Only hypernym (`@`, `@i`) and hyponym (`~`, `~i`) pointers become graph
//! edges. Every other pointer symbol is parsed for field alignment and then
//! dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
}

impl Pos {
    pub const ALL: [Pos; 4] = [Pos::Noun, Pos::Verb, Pos::Adj, Pos::Adv];

    /// File suffix used by WNDB (`index.noun`, `data.adj`, ...).
    pub fn file_suffix(self) -> &'static str {
        match self {
            Pos::Noun => "noun",
            Pos::Verb => "verb",
            Pos::Adj => "adj",
            Pos::Adv => "adv",
        }
    }

    /// Parses a WNDB pos / ss_type character. Adjective satellites fold into `Adj`.
    pub fn from_wndb(s: &str) -> Option<Pos> {
        match s {
            "n" => Some(Pos::Noun),
            "v" => Some(Pos::Verb),
            "a" | "s" => Some(Pos::Adj),
            "r" => Some(Pos::Adv),
            _ => None,
        }
    }

    fn wndb_char(self) -> char {
        match self {
            Pos::Noun => 'n',
            Pos::Verb => 'v',
            Pos::Adj => 'a',
            Pos::Adv => 'r',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SynsetId {
    pub offset: u64,
    pub pos: Pos,
}

impl SynsetId {
    pub fn new(offset: u64, pos: Pos) -> Self {
        Self { offset, pos }
    }
}

impl fmt::Display for SynsetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:08}-{}", self.offset, self.pos.wndb_char())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Synset {
    pub id: SynsetId,
    /// Lowercase lemmas; multiword lemmas keep WNDB underscores internally.
    pub lemmas: Vec<String>,
    pub hypernyms: Vec<SynsetId>,
    pub hyponyms: Vec<SynsetId>,
    pub gloss: String,
}

impl Synset {
    /// Lemmas in surface form (underscores become spaces).
    pub fn words(&self) -> impl Iterator<Item = String> + '_ {
        self.lemmas.iter().map(|l| l.replace('_', " "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// Asymmetric, dangling or self-referencing edges are load errors.
    Strict,
    /// Missing inverse edges are inserted, dangling and self edges dropped.
    #[default]
    Lenient,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RelationKind {
    Hypernym,
    Hyponym,
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("no index/data file pair found in {0}")]
    NoFiles(PathBuf),
    #[error("missing companion file {0}")]
    MissingFile(PathBuf),
    #[error("integrity violation ({reason}): {}", format_ids(.ids))]
    Integrity { reason: String, ids: Vec<SynsetId> },
    #[error("unknown synset {0}")]
    UnknownSynset(SynsetId),
    #[error("malformed lexicon dump: {0}")]
    Dump(#[from] serde_json::Error),
}

fn format_ids(ids: &[SynsetId]) -> String {
    ids.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
}

/// Raw text of one `(index.pos, data.pos)` pair, with names used in error messages.
#[derive(Debug, Clone)]
pub struct WndbSource<'a> {
    pub pos: Pos,
    pub index_name: String,
    pub index_text: &'a str,
    pub data_name: String,
    pub data_text: &'a str,
}

/// Immutable lexical graph loaded from WNDB files.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Lexicon {
    synsets: BTreeMap<SynsetId, Synset>,
    index: BTreeMap<(String, Pos), Vec<SynsetId>>,
}

#[derive(Serialize, Deserialize)]
struct LexiconDump {
    synsets: Vec<Synset>,
    index: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    lemma: String,
    pos: Pos,
    synsets: Vec<SynsetId>,
}

struct RawPointer {
    symbol: String,
    target: SynsetId,
}

/// Reads every `index.<pos>`/`data.<pos>` pair present in `dir`.
pub fn load_lexicon(dir: &Path, mode: LoadMode) -> Result<Lexicon, LexiconError> {
    let mut texts = Vec::new();
    for pos in Pos::ALL {
        let index_path = dir.join(format!("index.{}", pos.file_suffix()));
        let data_path = dir.join(format!("data.{}", pos.file_suffix()));
        match (index_path.exists(), data_path.exists()) {
            (false, false) => continue,
            (true, false) => return Err(LexiconError::MissingFile(data_path)),
            (false, true) => return Err(LexiconError::MissingFile(index_path)),
            (true, true) => {}
        }
        let read = |p: &Path| {
            fs::read_to_string(p).map_err(|source| LexiconError::Io {
                path: p.to_path_buf(),
                source,
            })
        };
        texts.push((pos, index_path.clone(), read(&index_path)?, data_path.clone(), read(&data_path)?));
    }
    if texts.is_empty() {
        return Err(LexiconError::NoFiles(dir.to_path_buf()));
    }
    let sources: Vec<WndbSource<'_>> = texts
        .iter()
        .map(|(pos, ip, it, dp, dt)| WndbSource {
            pos: *pos,
            index_name: ip.display().to_string(),
            index_text: it,
            data_name: dp.display().to_string(),
            data_text: dt,
        })
        .collect();
    Lexicon::from_sources(&sources, mode)
}

fn is_header(line: &str) -> bool {
    line.starts_with("  ")
}

fn parse_err(file: &str, line: usize, message: impl Into<String>) -> LexiconError {
    LexiconError::Parse {
        file: file.to_string(),
        line,
        message: message.into(),
    }
}

/// Strips adjective syntactic markers such as `(p)`, `(a)` or `(ip)`.
fn clean_lemma(raw: &str) -> String {
    let base = match raw.find('(') {
        Some(i) if raw.ends_with(')') => &raw[..i],
        _ => raw,
    };
    base.to_lowercase()
}

impl Lexicon {
    pub fn from_sources(sources: &[WndbSource<'_>], mode: LoadMode) -> Result<Self, LexiconError> {
        let mut synsets = BTreeMap::new();
        let mut pointers: Vec<(SynsetId, RawPointer)> = Vec::new();
        for src in sources {
            parse_data(src, &mut synsets, &mut pointers)?;
        }
        let mut index: BTreeMap<(String, Pos), Vec<SynsetId>> = BTreeMap::new();
        for src in sources {
            parse_index(src, &mut index)?;
        }

        let mut lexicon = Lexicon { synsets, index };
        lexicon.link(pointers, mode)?;
        lexicon.check_index(mode)?;
        Ok(lexicon)
    }

    fn link(&mut self, pointers: Vec<(SynsetId, RawPointer)>, mode: LoadMode) -> Result<(), LexiconError> {
        let mut dangling = BTreeSet::new();
        let mut self_refs = BTreeSet::new();
        let mut edges: Vec<(SynsetId, SynsetId, RelationKind)> = Vec::new();
        for (src, ptr) in pointers {
            let kind = match ptr.symbol.as_str() {
                "@" | "@i" => RelationKind::Hypernym,
                "~" | "~i" => RelationKind::Hyponym,
                _ => continue,
            };
            if !self.synsets.contains_key(&ptr.target) {
                dangling.insert(ptr.target);
                continue;
            }
            if ptr.target == src {
                self_refs.insert(src);
                continue;
            }
            edges.push((src, ptr.target, kind));
        }
        if mode == LoadMode::Strict {
            if !dangling.is_empty() {
                return Err(LexiconError::Integrity {
                    reason: "pointer to synset absent from data file".into(),
                    ids: dangling.into_iter().collect(),
                });
            }
            if !self_refs.is_empty() {
                return Err(LexiconError::Integrity {
                    reason: "synset lists itself as hypernym or hyponym".into(),
                    ids: self_refs.into_iter().collect(),
                });
            }
        }

        for &(src, tgt, kind) in &edges {
            let s = self.synsets.get_mut(&src).expect("edge source exists");
            let list = match kind {
                RelationKind::Hypernym => &mut s.hypernyms,
                RelationKind::Hyponym => &mut s.hyponyms,
            };
            if !list.contains(&tgt) {
                list.push(tgt);
            }
        }

        let mut missing_inverse = Vec::new();
        for &(src, tgt, kind) in &edges {
            let t = &self.synsets[&tgt];
            let inverse = match kind {
                RelationKind::Hypernym => &t.hyponyms,
                RelationKind::Hyponym => &t.hypernyms,
            };
            if !inverse.contains(&src) {
                missing_inverse.push((tgt, src, kind));
            }
        }
        if missing_inverse.is_empty() {
            return Ok(());
        }
        if mode == LoadMode::Strict {
            let mut ids: Vec<SynsetId> = missing_inverse.iter().flat_map(|&(a, b, _)| [b, a]).collect();
            ids.dedup();
            return Err(LexiconError::Integrity {
                reason: "hypernym/hyponym edges are not mutually inverse".into(),
                ids,
            });
        }
        for (holder, other, kind) in missing_inverse {
            let s = self.synsets.get_mut(&holder).expect("edge target exists");
            let list = match kind {
                RelationKind::Hypernym => &mut s.hyponyms,
                RelationKind::Hyponym => &mut s.hypernyms,
            };
            if !list.contains(&other) {
                list.push(other);
            }
        }
        Ok(())
    }

    fn check_index(&mut self, mode: LoadMode) -> Result<(), LexiconError> {
        let unresolved: BTreeSet<SynsetId> = self
            .index
            .values()
            .flatten()
            .filter(|id| !self.synsets.contains_key(id))
            .copied()
            .collect();
        if unresolved.is_empty() {
            return Ok(());
        }
        if mode == LoadMode::Strict {
            return Err(LexiconError::Integrity {
                reason: "index entry points to synset absent from data file".into(),
                ids: unresolved.into_iter().collect(),
            });
        }
        for ids in self.index.values_mut() {
            ids.retain(|id| !unresolved.contains(id));
        }
        self.index.retain(|_, ids| !ids.is_empty());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.synsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.synsets.is_empty()
    }

    pub fn synsets(&self) -> impl Iterator<Item = &Synset> {
        self.synsets.values()
    }

    pub fn get(&self, id: SynsetId) -> Result<&Synset, LexiconError> {
        self.synsets.get(&id).ok_or(LexiconError::UnknownSynset(id))
    }

    /// Synsets listing `word` as a lemma, in index order, optionally restricted to one pos.
    /// Spaces in `word` are looked up as underscores; unknown words yield an empty list.
    pub fn synsets_of(&self, word: &str, pos: Option<Pos>) -> Vec<&Synset> {
        let key = word.trim().to_lowercase().replace(' ', "_");
        if key.is_empty() {
            return Vec::new();
        }
        let poses: Vec<Pos> = match pos {
            Some(p) => vec![p],
            None => Pos::ALL.to_vec(),
        };
        poses
            .into_iter()
            .filter_map(|p| self.index.get(&(key.clone(), p)))
            .flatten()
            .filter_map(|id| self.synsets.get(id))
            .collect()
    }

    /// Other lemmas sharing a synset with `word`, in synset order then lemma order.
    pub fn synonyms(&self, word: &str) -> Vec<String> {
        let me = word.trim().to_lowercase().replace('_', " ");
        let mut out: Vec<String> = Vec::new();
        for synset in self.synsets_of(word, None) {
            for w in synset.words() {
                if w != me && !out.contains(&w) {
                    out.push(w);
                }
            }
        }
        out
    }

    pub fn relation(&self, id: SynsetId, kind: RelationKind) -> Result<Vec<&Synset>, LexiconError> {
        let s = self.get(id)?;
        let targets = match kind {
            RelationKind::Hypernym => &s.hypernyms,
            RelationKind::Hyponym => &s.hyponyms,
        };
        targets.iter().map(|t| self.get(*t)).collect()
    }

    /// Hyponyms of every hypernym of `id`, excluding `id` itself.
    pub fn co_hyponyms(&self, id: SynsetId) -> Result<Vec<&Synset>, LexiconError> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for hyper in self.relation(id, RelationKind::Hypernym)? {
            for sibling in self.relation(hyper.id, RelationKind::Hyponym)? {
                if sibling.id != id && seen.insert(sibling.id) {
                    out.push(sibling);
                }
            }
        }
        Ok(out)
    }

    /// JSON debug dump of the whole graph; [`Lexicon::from_dump`] reverses it.
    pub fn to_dump(&self) -> String {
        let dump = LexiconDump {
            synsets: self.synsets.values().cloned().collect(),
            index: self
                .index
                .iter()
                .map(|((lemma, pos), ids)| IndexEntry {
                    lemma: lemma.clone(),
                    pos: *pos,
                    synsets: ids.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&dump).expect("lexicon dump serializes")
    }

    pub fn from_dump(text: &str) -> Result<Self, LexiconError> {
        let dump: LexiconDump = serde_json::from_str(text)?;
        let synsets = dump.synsets.into_iter().map(|s| (s.id, s)).collect();
        let index = dump
            .index
            .into_iter()
            .map(|e| ((e.lemma, e.pos), e.synsets))
            .collect();
        Ok(Lexicon { synsets, index })
    }
}

fn parse_data(
    src: &WndbSource<'_>,
    synsets: &mut BTreeMap<SynsetId, Synset>,
    pointers: &mut Vec<(SynsetId, RawPointer)>,
) -> Result<(), LexiconError> {
    let file = src.data_name.as_str();
    for (i, line) in src.data_text.lines().enumerate() {
        let lineno = i + 1;
        if is_header(line) || line.trim().is_empty() {
            continue;
        }
        let (fields_part, gloss) = match line.split_once(" | ") {
            Some((f, g)) => (f, g.trim()),
            None => (line.trim_end_matches(" |").trim_end_matches('|'), ""),
        };
        let fields: Vec<&str> = fields_part.split_whitespace().collect();
        let mut cur = 0usize;
        let mut next = |what: &str| -> Result<&str, LexiconError> {
            let f = fields
                .get(cur)
                .copied()
                .ok_or_else(|| parse_err(file, lineno, format!("truncated line: missing {what}")))?;
            cur += 1;
            Ok(f)
        };

        let offset: u64 = next("synset_offset")?
            .parse()
            .map_err(|_| parse_err(file, lineno, "synset_offset is not a decimal integer"))?;
        next("lex_filenum")?;
        let ss_type = next("ss_type")?;
        let pos = Pos::from_wndb(ss_type)
            .ok_or_else(|| parse_err(file, lineno, format!("unknown ss_type {ss_type:?}")))?;
        if pos != src.pos {
            return Err(parse_err(file, lineno, format!("ss_type {ss_type:?} does not belong in this file")));
        }
        let w_cnt = usize::from_str_radix(next("w_cnt")?, 16)
            .map_err(|_| parse_err(file, lineno, "w_cnt is not hexadecimal"))?;
        if w_cnt == 0 {
            return Err(parse_err(file, lineno, "synset has no lemmas"));
        }
        let mut lemmas = Vec::with_capacity(w_cnt);
        for _ in 0..w_cnt {
            let lemma = clean_lemma(next("lemma")?);
            next("lex_id")?;
            if !lemmas.contains(&lemma) {
                lemmas.push(lemma);
            }
        }
        let p_cnt: usize = next("p_cnt")?
            .parse()
            .map_err(|_| parse_err(file, lineno, "p_cnt is not a decimal integer"))?;
        let id = SynsetId::new(offset, pos);
        for _ in 0..p_cnt {
            let symbol = next("pointer_symbol")?.to_string();
            let target_offset: u64 = next("pointer offset")?
                .parse()
                .map_err(|_| parse_err(file, lineno, "pointer offset is not a decimal integer"))?;
            let tpos = next("pointer pos")?;
            let target_pos = Pos::from_wndb(tpos)
                .ok_or_else(|| parse_err(file, lineno, format!("unknown pointer pos {tpos:?}")))?;
            next("source/target")?;
            pointers.push((
                id,
                RawPointer {
                    symbol,
                    target: SynsetId::new(target_offset, target_pos),
                },
            ));
        }
        // verb frames and anything else before the gloss are not needed
        if synsets
            .insert(
                id,
                Synset {
                    id,
                    lemmas,
                    hypernyms: Vec::new(),
                    hyponyms: Vec::new(),
                    gloss: gloss.to_string(),
                },
            )
            .is_some()
        {
            return Err(parse_err(file, lineno, format!("duplicate synset offset {offset}")));
        }
    }
    Ok(())
}

fn parse_index(src: &WndbSource<'_>, index: &mut BTreeMap<(String, Pos), Vec<SynsetId>>) -> Result<(), LexiconError> {
    let file = src.index_name.as_str();
    for (i, line) in src.index_text.lines().enumerate() {
        let lineno = i + 1;
        if is_header(line) || line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let truncated = || parse_err(file, lineno, "truncated index line");
        if fields.len() < 4 {
            return Err(truncated());
        }
        let lemma = fields[0].to_lowercase();
        let synset_cnt: usize = fields[2]
            .parse()
            .map_err(|_| parse_err(file, lineno, "synset_cnt is not a decimal integer"))?;
        let p_cnt: usize = fields[3]
            .parse()
            .map_err(|_| parse_err(file, lineno, "p_cnt is not a decimal integer"))?;
        // lemma pos synset_cnt p_cnt [ptr_symbol]{p_cnt} sense_cnt tagsense_cnt offset{synset_cnt}
        let first_offset = 4 + p_cnt + 2;
        if fields.len() < first_offset + synset_cnt {
            return Err(truncated());
        }
        let ids = index.entry((lemma, src.pos)).or_default();
        for f in &fields[first_offset..first_offset + synset_cnt] {
            let offset: u64 = f
                .parse()
                .map_err(|_| parse_err(file, lineno, format!("bad synset offset {f:?}")))?;
            let id = SynsetId::new(offset, src.pos);
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }
    Ok(())
}

const FIXTURE_SOURCES: [(Pos, &str, &str); 3] = [
    (
        Pos::Noun,
        include_str!("../data/fixture/index.noun"),
        include_str!("../data/fixture/data.noun"),
    ),
    (
        Pos::Verb,
        include_str!("../data/fixture/index.verb"),
        include_str!("../data/fixture/data.verb"),
    ),
    (
        Pos::Adj,
        include_str!("../data/fixture/index.adj"),
        include_str!("../data/fixture/data.adj"),
    ),
];

/// The small bundled lexicon (7 noun, 1 verb, 2 adjective synsets), loaded strictly.
pub fn fixture_lexicon() -> Lexicon {
    let sources: Vec<WndbSource<'_>> = FIXTURE_SOURCES
        .iter()
        .map(|&(pos, index_text, data_text)| WndbSource {
            pos,
            index_name: format!("fixture/index.{}", pos.file_suffix()),
            index_text,
            data_name: format!("fixture/data.{}", pos.file_suffix()),
            data_text,
        })
        .collect();
    Lexicon::from_sources(&sources, LoadMode::Strict).expect("bundled fixture lexicon is valid")
}
