//! Label canonicalization, relation-phrase normalization, and stable 64-bit keying.
//!
//! Everything in this module is a pure function of its inputs: the same strings
//! produce the same canonical forms and the same identifiers on every platform
//! and in every process. Node and edge identifiers are FNV-1a hashes of
//! canonical key strings, which makes tables mergeable across independently
//! built atlases.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{AtlasError, Result};

/// Controlled vocabulary of normalized causal relation types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RelType {
    Causes,
    Influences,
    Increases,
    Reduces,
    Affects,
    LeadsTo,
}

impl RelType {
    pub const ALL: [RelType; 6] = [
        RelType::Causes,
        RelType::Influences,
        RelType::Increases,
        RelType::Reduces,
        RelType::Affects,
        RelType::LeadsTo,
    ];

    /// Uppercase name used in edge keys, table files, and SQL output.
    pub fn name(self) -> &'static str {
        match self {
            RelType::Causes => "CAUSES",
            RelType::Influences => "INFLUENCES",
            RelType::Increases => "INCREASES",
            RelType::Reduces => "REDUCES",
            RelType::Affects => "AFFECTS",
            RelType::LeadsTo => "LEADS_TO",
        }
    }

    pub fn from_name(name: &str) -> Option<RelType> {
        match name {
            "CAUSES" => Some(RelType::Causes),
            "INFLUENCES" => Some(RelType::Influences),
            "INCREASES" => Some(RelType::Increases),
            "REDUCES" => Some(RelType::Reduces),
            "AFFECTS" => Some(RelType::Affects),
            "LEADS_TO" => Some(RelType::LeadsTo),
            _ => None,
        }
    }
}

impl fmt::Display for RelType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Coarse effect direction of a causal claim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Inc,
    Dec,
    Unk,
}

impl Polarity {
    pub fn as_str(self) -> &'static str {
        match self {
            Polarity::Inc => "inc",
            Polarity::Dec => "dec",
            Polarity::Unk => "unk",
        }
    }

    pub fn from_str_opt(s: &str) -> Option<Polarity> {
        match s {
            "inc" => Some(Polarity::Inc),
            "dec" => Some(Polarity::Dec),
            "unk" => Some(Polarity::Unk),
            _ => None,
        }
    }

    /// Negation flips inc and dec; unknown stays unknown.
    fn negate(self) -> Polarity {
        match self {
            Polarity::Inc => Polarity::Dec,
            Polarity::Dec => Polarity::Inc,
            Polarity::Unk => Polarity::Unk,
        }
    }
}

impl fmt::Display for Polarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Stable identifier of a canonical concept node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u64);

/// Stable identifier of a canonical (src, rel, dst) edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

const FNV_OFFSET_BASIS: u64 = 0xcbf29ce484222325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01B3;

/// FNV-1a over the UTF-8 bytes of `key`.
pub fn hash64(key: &str) -> u64 {
    let mut h = FNV_OFFSET_BASIS;
    for &b in key.as_bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Identifier of a canonical node label. The label must already be canonical.
pub fn node_id(label_canon: &str) -> NodeId {
    NodeId(hash64(label_canon))
}

/// Identifier of a canonical edge. The key string is unambiguous across
/// languages: decimal ids joined with `|` around the uppercase relation name.
pub fn edge_key(src: NodeId, rel: RelType, dst: NodeId) -> EdgeId {
    EdgeId(hash64(&format!("{}|{}|{}", src.0, rel.name(), dst.0)))
}

/// Dash variants unified to ASCII `-`: hyphen, non-breaking hyphen, figure,
/// en and em dash, horizontal bar, minus sign.
fn is_dash(c: char) -> bool {
    matches!(c, '\u{2010}'..='\u{2015}' | '\u{2212}')
}

/// Canonicalize a raw node or relation string.
///
/// The chain is fixed: NFC, lowercase, dash unification, whitespace collapse,
/// trim, then strip trailing sentence punctuation (`.`, `,`, `;`, `:`, `!`)
/// together with any whitespace it leaves behind.
pub fn canon_label(raw: &str) -> Result<String> {
    let mut out = String::with_capacity(raw.len());
    let mut pending_space = false;
    for c in raw.nfc().flat_map(char::to_lowercase) {
        let c = if is_dash(c) { '-' } else { c };
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.push(c);
        }
    }
    while out.ends_with(['.', ',', ';', ':', '!', ' ']) {
        out.pop();
    }
    if out.is_empty() {
        return Err(AtlasError::Canon { raw: raw.to_string() });
    }
    Ok(out)
}

/// Maps canonical relation phrases to the controlled vocabulary.
///
/// The built-in table can be replaced from a config file of
/// `phrase,RELTYPE,polarity` lines (see [`RelLexicon::from_file`]). Unmatched
/// phrases map to `(INFLUENCES, unk)`. Polarity cues in the raw phrase
/// ("positively"/"negatively", leading "not"/"does not") override the
/// polarity of the matched entry without changing its relation type.
#[derive(Debug, Clone)]
pub struct RelLexicon {
    entries: BTreeMap<String, (RelType, Polarity)>,
}

impl Default for RelLexicon {
    fn default() -> Self {
        RelLexicon::builtin()
    }
}

impl RelLexicon {
    pub fn builtin() -> Self {
        let table: &[(&str, RelType, Polarity)] = &[
            ("cause", RelType::Causes, Polarity::Unk),
            ("causes", RelType::Causes, Polarity::Unk),
            ("influence", RelType::Influences, Polarity::Unk),
            ("influences", RelType::Influences, Polarity::Unk),
            ("increase", RelType::Increases, Polarity::Inc),
            ("increases", RelType::Increases, Polarity::Inc),
            ("raises", RelType::Increases, Polarity::Inc),
            ("boosts", RelType::Increases, Polarity::Inc),
            ("reduce", RelType::Reduces, Polarity::Dec),
            ("reduces", RelType::Reduces, Polarity::Dec),
            ("decreases", RelType::Reduces, Polarity::Dec),
            ("lowers", RelType::Reduces, Polarity::Dec),
            ("affect", RelType::Affects, Polarity::Unk),
            ("affects", RelType::Affects, Polarity::Unk),
            ("leads to", RelType::LeadsTo, Polarity::Unk),
            ("led to", RelType::LeadsTo, Polarity::Unk),
            ("results in", RelType::LeadsTo, Polarity::Unk),
        ];
        let entries = table
            .iter()
            .map(|&(p, r, pol)| (p.to_string(), (r, pol)))
            .collect();
        RelLexicon { entries }
    }

    /// Load a replacement lexicon: one `phrase,RELTYPE,polarity` triple per
    /// line. Blank lines and lines starting with `#` are skipped.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AtlasError::io(path.display().to_string(), e))?;
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, ',');
            let (phrase, rel, pol) = match (parts.next(), parts.next(), parts.next()) {
                (Some(p), Some(r), Some(pol)) => (p.trim(), r.trim(), pol.trim()),
                _ => {
                    return Err(AtlasError::Csv(format!(
                        "{}:{}: expected phrase,RELTYPE,polarity",
                        path.display(),
                        lineno + 1
                    )))
                }
            };
            let rel = RelType::from_name(rel).ok_or_else(|| {
                AtlasError::Csv(format!(
                    "{}:{}: unknown relation type {rel:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            let pol = Polarity::from_str_opt(pol).ok_or_else(|| {
                AtlasError::Csv(format!(
                    "{}:{}: unknown polarity {pol:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
            entries.insert(canon_label(phrase)?, (rel, pol));
        }
        if entries.is_empty() {
            return Err(AtlasError::Csv(format!(
                "{}: lexicon file has no entries",
                path.display()
            )));
        }
        Ok(RelLexicon { entries })
    }

    /// Normalize a raw relation phrase to `(RelType, Polarity)`. Total: never
    /// fails, empty or unknown phrases fall back to `(INFLUENCES, unk)`.
    pub fn classify(&self, raw: &str) -> (RelType, Polarity) {
        let canon = match canon_label(raw) {
            Ok(c) => c,
            Err(_) => return (RelType::Influences, Polarity::Unk),
        };

        let mut phrase = canon.as_str();
        let mut negated = false;
        for prefix in ["does not ", "not "] {
            if let Some(rest) = phrase.strip_prefix(prefix) {
                phrase = rest;
                negated = true;
                break;
            }
        }

        let mut cue = None;
        let mut stripped = String::new();
        for token in phrase.split(' ') {
            match token {
                "positively" => cue = Some(Polarity::Inc),
                "negatively" => cue = Some(Polarity::Dec),
                _ => {
                    if !stripped.is_empty() {
                        stripped.push(' ');
                    }
                    stripped.push_str(token);
                }
            }
        }

        let (rel, base_pol) = self
            .entries
            .get(stripped.as_str())
            .copied()
            .unwrap_or((RelType::Influences, Polarity::Unk));

        let mut pol = cue.unwrap_or(base_pol);
        if negated {
            pol = pol.negate();
        }
        (rel, pol)
    }
}

/// Normalize with the built-in lexicon.
pub fn rel_type(raw: &str) -> (RelType, Polarity) {
    RelLexicon::builtin().classify(raw)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canon_lowercases_and_trims() {
        assert_eq!(canon_label("  Bipedalism ").unwrap(), "bipedalism");
    }

    #[test]
    fn canon_applies_full_chain() {
        // en dash, whitespace run, trailing period
        assert_eq!(
            canon_label("long\u{2013}distance   travel.").unwrap(),
            "long-distance travel"
        );
    }

    #[test]
    fn canon_is_idempotent_on_canonical_input() {
        let c = canon_label("Selection  Pressure,").unwrap();
        assert_eq!(canon_label(&c).unwrap(), c);
    }

    #[test]
    fn canon_strips_punctuation_runs() {
        assert_eq!(canon_label("a.b.;, ").unwrap(), "a.b");
        assert!(canon_label("...").is_err());
        assert!(canon_label("   ").is_err());
    }

    #[test]
    fn fnv_golden_constants() {
        // Frozen from an independent FNV-1a(64) reference implementation.
        assert_eq!(hash64(""), 0xcbf29ce484222325);
        assert_eq!(hash64("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(hash64("bipedalism"), 0x0b7c0af53c8eb127);
        assert_eq!(
            hash64("metabolic efficiency during long-distance travel"),
            2100014199625317075
        );
    }

    #[test]
    fn node_id_is_hash_of_canonical_label() {
        assert_eq!(node_id("bipedalism").0, hash64("bipedalism"));
        let via_canon = canon_label("Bipedalism").unwrap();
        assert_eq!(node_id(&via_canon), node_id("bipedalism"));
    }

    #[test]
    fn edge_key_matches_definition_and_is_directed() {
        let key = edge_key(NodeId(1), RelType::Increases, NodeId(2));
        assert_eq!(key.0, hash64("1|INCREASES|2"));
        assert_eq!(key.0, 14758018344498855183);
        assert_ne!(key, edge_key(NodeId(2), RelType::Increases, NodeId(1)));
    }

    #[test]
    fn lexicon_base_entries() {
        assert_eq!(rel_type("increases"), (RelType::Increases, Polarity::Inc));
        assert_eq!(rel_type("leads to"), (RelType::LeadsTo, Polarity::Unk));
        assert_eq!(rel_type("Reduces"), (RelType::Reduces, Polarity::Dec));
        assert_eq!(rel_type(""), (RelType::Influences, Polarity::Unk));
        assert_eq!(rel_type("correlates with"), (RelType::Influences, Polarity::Unk));
    }

    #[test]
    fn polarity_cues_override_independently_of_rel_type() {
        assert_eq!(
            rel_type("negatively influences"),
            (RelType::Influences, Polarity::Dec)
        );
        assert_eq!(
            rel_type("positively affects"),
            (RelType::Affects, Polarity::Inc)
        );
        assert_eq!(rel_type("not increases"), (RelType::Increases, Polarity::Dec));
        assert_eq!(
            rel_type("does not reduce"),
            (RelType::Reduces, Polarity::Inc)
        );
        assert_eq!(rel_type("not influences"), (RelType::Influences, Polarity::Unk));
    }

    #[test]
    fn lexicon_file_replaces_builtin() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("lex.csv");
        std::fs::write(&path, "# custom\ndrives,CAUSES,inc\n").unwrap();
        let lex = RelLexicon::from_file(&path).unwrap();
        assert_eq!(lex.classify("drives"), (RelType::Causes, Polarity::Inc));
        // builtin entry gone: falls back to the default bucket
        assert_eq!(lex.classify("increases"), (RelType::Influences, Polarity::Unk));
    }
}
