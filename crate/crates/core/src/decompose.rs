//! Splitting an answer into atomic semantic-role units.
//!
//! Two routes produce the same [`AtomicUnit`]s: frames from an SRL backend,
//! or a dependency parse turned into frames by a fixed rule table. Either way
//! every unit is anchored to a character span of the answer and linked to
//! the generator tokens it overlaps.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::{BackendError, RoleFrame};
use crate::corpus::{CharSpan, Lang};
use crate::spans::{align_tokens, TokenAlignment};
use crate::text::{char_slice, nfc_chars, NormalizedText};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Role {
    Verb,
    Arg0,
    Arg1,
    Arg2,
    ArgmTmp,
    ArgmLoc,
    ArgmMisc,
}

impl Role {
    pub fn label(self) -> &'static str {
        match self {
            Role::Verb => "VERB",
            Role::Arg0 => "ARG0",
            Role::Arg1 => "ARG1",
            Role::Arg2 => "ARG2",
            Role::ArgmTmp => "ARGM-TMP",
            Role::ArgmLoc => "ARGM-LOC",
            Role::ArgmMisc => "ARGM-MISC",
        }
    }

    /// Map a backend role label onto the supported inventory. Anything
    /// unknown (ARG3, ARGM-MNR, R-ARG0, ...) becomes ARGM-MISC.
    pub fn from_label(label: &str) -> Role {
        match label.trim().to_ascii_uppercase().as_str() {
            "V" | "VERB" => Role::Verb,
            "ARG0" | "A0" => Role::Arg0,
            "ARG1" | "A1" => Role::Arg1,
            "ARG2" | "A2" => Role::Arg2,
            "ARGM-TMP" | "AM-TMP" => Role::ArgmTmp,
            "ARGM-LOC" | "AM-LOC" => Role::ArgmLoc,
            _ => Role::ArgmMisc,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl Serialize for Role {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.label())
    }
}

impl<'de> Deserialize<'de> for Role {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(Role::from_label(&String::deserialize(d)?))
    }
}

/// One predicate or argument of the answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomicUnit {
    pub role: Role,
    /// Exactly the answer text under `span`.
    pub text: String,
    pub span: CharSpan,
    /// Aligned generator tokens overlapping `span`.
    pub token_indices: Vec<usize>,
    pub frame_id: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepNode {
    /// 1-based position in the sentence.
    pub index: usize,
    pub form: String,
    pub pos: String,
    /// Index of the governing node, 0 for the root.
    pub head: usize,
    pub rel: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct DependencyTree {
    pub nodes: Vec<DepNode>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecomposeError {
    #[error("unit {0:?} not found in answer")]
    UnitNotFound(String),
    #[error("malformed dependency tree: {0}")]
    MalformedTree(String),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Units of one answer plus what was lost on the way.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Decomposition {
    pub units: Vec<AtomicUnit>,
    pub frames: usize,
    /// Units the backend produced that could not be anchored in the answer.
    pub dropped_units: usize,
    /// Dependency subtrees that were not contiguous and got widened.
    pub clipped_units: usize,
    /// The parse had no verbal node at all.
    pub nominal_sentence: bool,
}

/// Find `unit_text` in `answer` at or after character `search_from`.
///
/// Matching is on NFC-normalized text. If there is no exact match, a
/// whitespace-insensitive match is tried, which covers SRL output that was
/// detokenized differently ("Beijing , China").
pub fn locate_unit(answer: &str, unit_text: &str, search_from: usize) -> Result<CharSpan, DecomposeError> {
    let norm = NormalizedText::new(answer);
    let needle = nfc_chars(unit_text.trim());
    let from = norm.index_at_or_after(search_from);
    if needle.is_empty() {
        return Err(DecomposeError::UnitNotFound(unit_text.to_string()));
    }
    if let Some(at) = norm.find(&needle, from) {
        return Ok(norm.original_span(at, at + needle.len()));
    }
    norm.find_ignoring_whitespace(&needle, from)
        .ok_or_else(|| DecomposeError::UnitNotFound(unit_text.to_string()))
}

fn make_unit(answer: &str, role: Role, span: CharSpan, alignment: &TokenAlignment, frame_id: usize) -> AtomicUnit {
    AtomicUnit {
        role,
        text: char_slice(answer, span).to_string(),
        span,
        token_indices: alignment.tokens_overlapping(span),
        frame_id,
    }
}

/// Anything that can produce role frames for a text.
pub trait SrlSource {
    fn srl_frames(&self, text: &str, lang: Lang) -> Result<Vec<RoleFrame>, BackendError>;
}

/// Anything that can produce a dependency parse for a text.
pub trait DependencySource {
    fn dependency_tree(&self, text: &str, lang: Lang) -> Result<DependencyTree, BackendError>;
}

// Second occurrence of a core role within a frame is demoted.
fn dedupe_role(role: Role, seen: &mut HashSet<Role>) -> Role {
    if role == Role::ArgmMisc || seen.insert(role) {
        role
    } else {
        Role::ArgmMisc
    }
}

/// Decompose through an SRL backend.
///
/// Arguments are located left to right with a moving cursor per frame. The
/// predicate is searched after ARG0 when ARG0 is present and must not
/// overlap any argument; frames whose predicate cannot be anchored are
/// dropped whole.
pub fn decompose_srl(
    answer: &str,
    lang: Lang,
    alignment: &TokenAlignment,
    backend: &dyn SrlSource,
) -> Result<Decomposition, DecomposeError> {
    let mut out = Decomposition::default();
    if answer.trim().is_empty() {
        return Ok(out);
    }
    let frames = backend.srl_frames(answer, lang)?;
    out.frames = frames.len();
    for frame in &frames {
        let mut cursor = 0;
        let mut args: Vec<(Role, CharSpan)> = Vec::new();
        let mut verb_text = frame.predicate.as_str();
        for arg in &frame.arguments {
            let role = Role::from_label(&arg.role);
            if role == Role::Verb {
                verb_text = arg.text.as_str();
                continue;
            }
            match locate_unit(answer, &arg.text, cursor) {
                Ok(span) => {
                    cursor = span.end;
                    args.push((role, span));
                }
                Err(_) => out.dropped_units += 1,
            }
        }
        let verb_from = args.iter().find(|(r, _)| *r == Role::Arg0).map_or(0, |(_, s)| s.end);
        let verb_span = [verb_from, 0]
            .into_iter()
            .find_map(|from| locate_clear_of(answer, verb_text, from, &args));
        let Some(verb_span) = verb_span else {
            out.dropped_units += 1 + args.len();
            continue;
        };
        let frame_id = out.units.iter().map(|u| u.frame_id + 1).max().unwrap_or(0);
        let mut seen = HashSet::new();
        out.units.push(make_unit(answer, Role::Verb, verb_span, alignment, frame_id));
        for (role, span) in args {
            let role = dedupe_role(role, &mut seen);
            out.units.push(make_unit(answer, role, span, alignment, frame_id));
        }
    }
    Ok(out)
}

fn locate_clear_of(answer: &str, text: &str, mut from: usize, taken: &[(Role, CharSpan)]) -> Option<CharSpan> {
    loop {
        let span = locate_unit(answer, text, from).ok()?;
        if !taken.iter().any(|(_, s)| s.overlaps(&span)) {
            return Some(span);
        }
        from = span.start + 1;
    }
}

const TEMPORAL_CUES: &[&str] = &[
    "yesterday", "today", "tomorrow", "tonight", "year", "years", "month", "months", "week", "weeks", "day",
    "days", "decade", "decades", "century", "centuries", "era", "season", "morning", "evening", "night", "time",
    "when", "during", "before", "after", "since", "until", "ago", "january", "february", "march", "april", "may",
    "june", "july", "august", "september", "october", "november", "december", "monday", "tuesday", "wednesday",
    "thursday", "friday", "saturday", "sunday", "عام", "العام", "سنة", "السنة", "أعوام", "سنوات", "يوم", "اليوم",
    "أمس", "غدا", "شهر", "الشهر", "أسبوع", "قرن", "القرن", "عقد", "خلال", "منذ", "قبل", "بعد", "عندما", "حين",
    "أثناء",
];

const LOCATIVE_CUES: &[&str] = &[
    "in", "at", "on", "near", "inside", "outside", "within", "across", "where", "there", "here", "في", "عند",
    "قرب", "داخل", "خارج", "فوق", "تحت", "أمام", "حيث", "هنا", "هناك",
];

fn normalize_word(form: &str) -> String {
    form.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase()
}

fn is_year(word: &str) -> bool {
    // ASCII or Arabic-Indic digits, four of them, 1000-2099
    let digits: String = word
        .chars()
        .map(|c| match c {
            '\u{660}'..='\u{669}' => char::from(b'0' + (c as u32 - 0x660) as u8),
            _ => c,
        })
        .collect();
    digits.len() == 4 && digits.parse::<u32>().is_ok_and(|y| (1000..2100).contains(&y))
}

fn is_verbal(pos: &str) -> bool {
    let pos = pos.trim().to_ascii_uppercase();
    pos == "VERB" || pos.starts_with("VRB") || pos.starts_with("VB")
}

/// How a dependent of a verb maps to a role; `None` means skip it.
fn relation_role(rel: &str) -> Option<RelationClass> {
    let rel = rel.trim().to_ascii_lowercase();
    let base = rel.split(':').next().unwrap_or("");
    Some(match rel.as_str() {
        "punct" | "pnx" => return None,
        "nsubj:pass" | "csubj:pass" => RelationClass::Fixed(Role::Arg1),
        "obl:tmod" | "nmod:tmod" | "advmod:tmod" => RelationClass::Fixed(Role::ArgmTmp),
        "obl:lmod" | "nmod:lmod" => RelationClass::Fixed(Role::ArgmLoc),
        _ => match base {
            "nsubj" | "csubj" | "sbj" | "subj" => RelationClass::Fixed(Role::Arg0),
            "obj" | "dobj" => RelationClass::Fixed(Role::Arg1),
            "iobj" => RelationClass::Fixed(Role::Arg2),
            "obl" | "nmod" | "advmod" | "advcl" | "mod" | "tmod" => RelationClass::Modifier,
            _ => RelationClass::Fixed(Role::ArgmMisc),
        },
    })
}

enum RelationClass {
    Fixed(Role),
    /// Temporal or locative depending on the words in the subtree.
    Modifier,
}

/// Validated, index-ordered view of a dependency tree.
struct Tree<'a> {
    nodes: Vec<&'a DepNode>,
    children: BTreeMap<usize, Vec<usize>>,
}

impl<'a> Tree<'a> {
    fn new(tree: &'a DependencyTree) -> Result<Self, DecomposeError> {
        let mut nodes: Vec<&DepNode> = tree.nodes.iter().collect();
        nodes.sort_by_key(|n| n.index);
        let n = nodes.len();
        for (i, node) in nodes.iter().enumerate() {
            if node.index != i + 1 {
                return Err(DecomposeError::MalformedTree(format!(
                    "node indices must be 1..={n} without gaps or repeats"
                )));
            }
            if node.head > n {
                return Err(DecomposeError::MalformedTree(format!("node {} has head {} out of range", node.index, node.head)));
            }
            if node.head == node.index {
                return Err(DecomposeError::MalformedTree(format!("node {} heads itself", node.index)));
            }
        }
        let roots = nodes.iter().filter(|n| n.head == 0).count();
        if n > 0 && roots != 1 {
            return Err(DecomposeError::MalformedTree(format!("expected exactly one root, found {roots}")));
        }
        for node in &nodes {
            let mut at = node.head;
            for _ in 0..=n {
                if at == 0 {
                    break;
                }
                at = nodes[at - 1].head;
            }
            if at != 0 {
                return Err(DecomposeError::MalformedTree(format!("cycle through node {}", node.index)));
            }
        }
        let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for node in &nodes {
            children.entry(node.head).or_default().push(node.index);
        }
        Ok(Self { nodes, children })
    }

    fn node(&self, index: usize) -> &DepNode {
        self.nodes[index - 1]
    }

    fn dependents(&self, index: usize) -> &[usize] {
        self.children.get(&index).map_or(&[], Vec::as_slice)
    }

    fn subtree(&self, index: usize) -> Vec<usize> {
        let mut out = vec![index];
        let mut i = 0;
        while i < out.len() {
            out.extend_from_slice(self.dependents(out[i]));
            i += 1;
        }
        out.sort_unstable();
        out
    }

    fn modifier_role(&self, dependent: usize) -> Role {
        let words: Vec<String> = self.subtree(dependent).iter().map(|&i| normalize_word(&self.node(i).form)).collect();
        if words.iter().any(|w| TEMPORAL_CUES.contains(&w.as_str()) || is_year(w)) {
            return Role::ArgmTmp;
        }
        let head = normalize_word(&self.node(dependent).form);
        let markers = self
            .dependents(dependent)
            .iter()
            .map(|&i| self.node(i))
            .filter(|n| n.rel.eq_ignore_ascii_case("case") || n.pos.eq_ignore_ascii_case("ADP"))
            .map(|n| normalize_word(&n.form));
        if std::iter::once(head).chain(markers).any(|w| LOCATIVE_CUES.contains(&w.as_str())) {
            Role::ArgmLoc
        } else {
            Role::ArgmMisc
        }
    }
}

/// Build role frames from a dependency parse.
///
/// Every verbal node opens a frame. Its dependents map to roles by relation:
/// subjects to ARG0 (passive subjects to ARG1), objects to ARG1, indirect
/// objects to ARG2, oblique and adverbial modifiers to ARGM-TMP or
/// ARGM-LOC when their words carry a temporal or locative cue, everything
/// else to ARGM-MISC. Punctuation is skipped. A dependent's unit covers the
/// characters of its whole subtree; a subtree with index gaps is widened to
/// its covering span and counted in `clipped_units`.
pub fn srl_from_dependencies(
    tree: &DependencyTree,
    answer: &str,
    alignment: &TokenAlignment,
) -> Result<Decomposition, DecomposeError> {
    let tree_view = Tree::new(tree)?;
    let forms: Vec<String> = tree_view.nodes.iter().map(|n| n.form.clone()).collect();
    let word_spans = align_tokens(answer, &forms).spans;
    let span_of = |indices: &[usize]| -> Option<CharSpan> {
        let spans: Vec<CharSpan> = indices.iter().filter_map(|&i| word_spans[i - 1]).collect();
        let start = spans.iter().map(|s| s.start).min()?;
        let end = spans.iter().map(|s| s.end).max()?;
        Some(CharSpan::new(start, end))
    };

    let mut out = Decomposition::default();
    let verbs: Vec<usize> = tree_view.nodes.iter().filter(|n| is_verbal(&n.pos)).map(|n| n.index).collect();
    if verbs.is_empty() {
        out.nominal_sentence = !tree_view.nodes.is_empty();
        return Ok(out);
    }
    out.frames = verbs.len();
    for verb in verbs {
        let Some(verb_span) = span_of(&[verb]) else {
            out.dropped_units += 1;
            continue;
        };
        let frame_id = out.units.iter().map(|u| u.frame_id + 1).max().unwrap_or(0);
        out.units.push(make_unit(answer, Role::Verb, verb_span, alignment, frame_id));
        let mut seen = HashSet::new();
        for &dep in tree_view.dependents(verb) {
            let role = match relation_role(&tree_view.node(dep).rel) {
                None => continue,
                Some(RelationClass::Fixed(role)) => role,
                Some(RelationClass::Modifier) => tree_view.modifier_role(dep),
            };
            let members = tree_view.subtree(dep);
            let Some(span) = span_of(&members) else {
                out.dropped_units += 1;
                continue;
            };
            if members.last().unwrap() - members[0] + 1 != members.len() {
                out.clipped_units += 1;
            }
            let role = dedupe_role(role, &mut seen);
            out.units.push(make_unit(answer, role, span, alignment, frame_id));
        }
    }
    Ok(out)
}

/// Decompose through a dependency parser and the rule table.
pub fn decompose_dependencies(
    answer: &str,
    lang: Lang,
    alignment: &TokenAlignment,
    backend: &dyn DependencySource,
) -> Result<Decomposition, DecomposeError> {
    if answer.trim().is_empty() {
        return Ok(Decomposition::default());
    }
    let tree = backend.dependency_tree(answer, lang)?;
    srl_from_dependencies(&tree, answer, alignment)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::RoleArgument;

    struct Frames(Vec<RoleFrame>);

    impl SrlSource for Frames {
        fn srl_frames(&self, _: &str, _: Lang) -> Result<Vec<RoleFrame>, BackendError> {
            Ok(self.0.clone())
        }
    }

    fn frame(predicate: &str, args: &[(&str, &str)]) -> RoleFrame {
        RoleFrame {
            predicate: predicate.into(),
            arguments: args.iter().map(|(r, t)| RoleArgument { role: r.to_string(), text: t.to_string() }).collect(),
        }
    }

    fn node(index: usize, form: &str, pos: &str, head: usize, rel: &str) -> DepNode {
        DepNode { index, form: form.into(), pos: pos.into(), head, rel: rel.into() }
    }

    fn no_tokens(answer: &str) -> TokenAlignment {
        align_tokens(answer, &[])
    }

    const PETRA: &str = "Petra van Staveren won a silver medal in the men's 10 km walk at the 2008 Summer Olympics";

    #[test]
    fn locate_examples() {
        assert_eq!(locate_unit("a b a", "a", 0).unwrap(), CharSpan::new(0, 1));
        assert_eq!(locate_unit("a b a", "a", 1).unwrap(), CharSpan::new(4, 5));
        assert!(matches!(locate_unit("a b a", "z", 0), Err(DecomposeError::UnitNotFound(_))));
        assert!(matches!(locate_unit("a b a", "  ", 0), Err(DecomposeError::UnitNotFound(_))));
    }

    #[test]
    fn locate_handles_detokenization_and_nfc() {
        let s = locate_unit("in Beijing, China.", "in Beijing , China", 0).unwrap();
        assert_eq!(s, CharSpan::new(0, 17));
        // decomposed é in the answer, precomposed in the unit
        let s = locate_unit("cafe\u{301} noir", "caf\u{e9}", 0).unwrap();
        assert_eq!(s, CharSpan::new(0, 5));
    }

    #[test]
    fn petra_frame_from_srl() {
        let backend = Frames(vec![frame(
            "won",
            &[
                ("ARG0", "Petra van Staveren"),
                ("V", "won"),
                ("ARG1", "a silver medal in the men's 10 km walk"),
                ("ARGM-TMP", "at the 2008 Summer Olympics"),
            ],
        )]);
        let d = decompose_srl(PETRA, Lang::En, &no_tokens(PETRA), &backend).unwrap();
        let got: Vec<(Role, &str)> = d.units.iter().map(|u| (u.role, u.text.as_str())).collect();
        assert_eq!(
            got,
            vec![
                (Role::Verb, "won"),
                (Role::Arg0, "Petra van Staveren"),
                (Role::Arg1, "a silver medal in the men's 10 km walk"),
                (Role::ArgmTmp, "at the 2008 Summer Olympics"),
            ]
        );
        assert!(d.units.iter().all(|u| u.frame_id == 0));
        assert_eq!(d.dropped_units, 0);
    }

    #[test]
    fn empty_answer_yields_nothing() {
        let backend = Frames(vec![frame("x", &[])]);
        let d = decompose_srl("  ", Lang::En, &no_tokens(""), &backend).unwrap();
        assert!(d.units.is_empty());
    }

    #[test]
    fn two_predicates_two_frames() {
        let answer = "She wrote the book and sold it in Paris.";
        let backend = Frames(vec![
            frame("wrote", &[("ARG0", "She"), ("ARG1", "the book")]),
            frame("sold", &[("ARG0", "She"), ("ARG1", "it"), ("ARGM-LOC", "in Paris")]),
        ]);
        let d = decompose_srl(answer, Lang::En, &no_tokens(answer), &backend).unwrap();
        let frames: HashSet<usize> = d.units.iter().map(|u| u.frame_id).collect();
        assert_eq!(frames.len(), 2);
        for f in frames {
            assert_eq!(d.units.iter().filter(|u| u.frame_id == f && u.role == Role::Verb).count(), 1);
        }
    }

    #[test]
    fn unanchored_units_are_dropped_and_counted() {
        let answer = "Mars has two moons.";
        let backend = Frames(vec![
            frame("has", &[("ARG0", "Mars"), ("ARG1", "three moons"), ("ARGM-XYZ", "two")]),
            frame("orbits", &[("ARG0", "Phobos")]),
        ]);
        let d = decompose_srl(answer, Lang::En, &no_tokens(answer), &backend).unwrap();
        // "three moons" lost in frame 0, whole second frame lost
        assert_eq!(d.dropped_units, 1 + 2);
        assert_eq!(d.units.iter().map(|u| u.role).collect::<Vec<_>>(), vec![Role::Verb, Role::Arg0, Role::ArgmMisc]);
    }

    #[test]
    fn duplicate_core_roles_are_demoted() {
        let answer = "Ann and Bob met.";
        let backend = Frames(vec![frame("met", &[("ARG0", "Ann"), ("ARG0", "Bob")])]);
        let d = decompose_srl(answer, Lang::En, &no_tokens(answer), &backend).unwrap();
        assert_eq!(d.units[2].role, Role::ArgmMisc);
    }

    #[test]
    fn predicate_skips_argument_occurrences() {
        // "run" occurs inside ARG0 first
        let answer = "The run organizers run the event.";
        let backend = Frames(vec![frame("run", &[("ARG0", "The run organizers"), ("ARG1", "the event")])]);
        let d = decompose_srl(answer, Lang::En, &no_tokens(answer), &backend).unwrap();
        assert_eq!(d.units[0].span, CharSpan::new(19, 22));
    }

    #[test]
    fn token_indices_follow_alignment() {
        let answer = "won a silver medal";
        let tokens: Vec<String> = ["won", " a", " sil", "ver", " medal"].iter().map(|s| s.to_string()).collect();
        let alignment = align_tokens(answer, &tokens);
        let backend = Frames(vec![frame("won", &[("ARG1", "a silver medal")])]);
        let d = decompose_srl(answer, Lang::En, &alignment, &backend).unwrap();
        assert_eq!(d.units[0].token_indices, vec![0]);
        assert_eq!(d.units[1].token_indices, vec![1, 2, 3, 4]);
    }

    #[test]
    fn single_verb_tree() {
        let tree = DependencyTree { nodes: vec![node(1, "ran", "VERB", 0, "root")] };
        let d = srl_from_dependencies(&tree, "ran", &no_tokens("ran")).unwrap();
        assert_eq!(d.units.len(), 1);
        assert_eq!(d.units[0].role, Role::Verb);
    }

    #[test]
    fn subject_object_tree() {
        let answer = "Orwell wrote novels";
        let tree = DependencyTree {
            nodes: vec![
                node(1, "Orwell", "PROPN", 2, "nsubj"),
                node(2, "wrote", "VERB", 0, "root"),
                node(3, "novels", "NOUN", 2, "obj"),
            ],
        };
        let d = srl_from_dependencies(&tree, answer, &no_tokens(answer)).unwrap();
        let got: Vec<(Role, &str, usize)> = d.units.iter().map(|u| (u.role, u.text.as_str(), u.frame_id)).collect();
        assert_eq!(got, vec![(Role::Verb, "wrote", 0), (Role::Arg0, "Orwell", 0), (Role::Arg1, "novels", 0)]);
    }

    #[test]
    fn nominal_sentence_has_no_units() {
        let answer = "عاصمة فرنسا هي باريس";
        let tree = DependencyTree {
            nodes: vec![
                node(1, "عاصمة", "NOUN", 0, "root"),
                node(2, "فرنسا", "PROPN", 1, "nmod"),
                node(3, "هي", "PRON", 4, "cop"),
                node(4, "باريس", "PROPN", 1, "nsubj"),
            ],
        };
        let d = srl_from_dependencies(&tree, answer, &no_tokens(answer)).unwrap();
        assert!(d.units.is_empty());
        assert!(d.nominal_sentence);
    }

    #[test]
    fn temporal_and_locative_modifiers() {
        let answer = "تأسست جامعة القاهرة في عام 1908 في القاهرة.";
        let tree = DependencyTree {
            nodes: vec![
                node(1, "تأسست", "VERB", 0, "root"),
                node(2, "جامعة", "NOUN", 1, "nsubj"),
                node(3, "القاهرة", "PROPN", 2, "nmod"),
                node(4, "في", "ADP", 5, "case"),
                node(5, "عام", "NOUN", 1, "obl"),
                node(6, "1908", "NUM", 5, "nummod"),
                node(7, "في", "ADP", 8, "case"),
                node(8, "القاهرة", "PROPN", 1, "obl"),
                node(9, ".", "PUNCT", 1, "punct"),
            ],
        };
        let d = srl_from_dependencies(&tree, answer, &no_tokens(answer)).unwrap();
        let got: Vec<(Role, &str)> = d.units.iter().map(|u| (u.role, u.text.as_str())).collect();
        assert_eq!(
            got,
            vec![
                (Role::Verb, "تأسست"),
                (Role::Arg0, "جامعة القاهرة"),
                (Role::ArgmTmp, "في عام 1908"),
                (Role::ArgmLoc, "في القاهرة"),
            ]
        );
    }

    #[test]
    fn english_year_modifier_is_temporal() {
        let answer = "won at the 2008 Olympics";
        let tree = DependencyTree {
            nodes: vec![
                node(1, "won", "VBD", 0, "root"),
                node(2, "at", "ADP", 5, "case"),
                node(3, "the", "DET", 5, "det"),
                node(4, "2008", "NUM", 5, "nummod"),
                node(5, "Olympics", "PROPN", 1, "obl"),
            ],
        };
        let d = srl_from_dependencies(&tree, answer, &no_tokens(answer)).unwrap();
        assert_eq!(d.units[1].role, Role::ArgmTmp);
        assert_eq!(d.units[1].text, "at the 2008 Olympics");
    }

    #[test]
    fn discontiguous_subtree_is_widened() {
        let answer = "A B C D";
        // subtree of B = {B, D}; C hangs off the verb A
        let tree = DependencyTree {
            nodes: vec![
                node(1, "A", "VERB", 0, "root"),
                node(2, "B", "NOUN", 1, "obj"),
                node(3, "C", "ADV", 1, "advmod"),
                node(4, "D", "ADJ", 2, "amod"),
            ],
        };
        let d = srl_from_dependencies(&tree, answer, &no_tokens(answer)).unwrap();
        assert_eq!(d.clipped_units, 1);
        assert_eq!(d.units[1].text, "B C D");
    }

    #[test]
    fn malformed_trees() {
        let two_roots = DependencyTree { nodes: vec![node(1, "a", "VERB", 0, "root"), node(2, "b", "VERB", 0, "root")] };
        assert!(matches!(srl_from_dependencies(&two_roots, "a b", &no_tokens("a b")), Err(DecomposeError::MalformedTree(_))));
        let cycle = DependencyTree {
            nodes: vec![node(1, "a", "VERB", 0, "root"), node(2, "b", "NOUN", 3, "obj"), node(3, "c", "NOUN", 2, "obj")],
        };
        assert!(matches!(srl_from_dependencies(&cycle, "a b c", &no_tokens("a b c")), Err(DecomposeError::MalformedTree(_))));
        let bad_head = DependencyTree { nodes: vec![node(1, "a", "VERB", 4, "root")] };
        assert!(srl_from_dependencies(&bad_head, "a", &no_tokens("a")).is_err());
    }

    #[test]
    fn node_order_does_not_matter() {
        let answer = "Orwell wrote novels in 1949";
        let mut nodes = vec![
            node(1, "Orwell", "PROPN", 2, "nsubj"),
            node(2, "wrote", "VERB", 0, "root"),
            node(3, "novels", "NOUN", 2, "obj"),
            node(4, "in", "ADP", 5, "case"),
            node(5, "1949", "NUM", 2, "obl"),
        ];
        let a = srl_from_dependencies(&DependencyTree { nodes: nodes.clone() }, answer, &no_tokens(answer)).unwrap();
        nodes.reverse();
        nodes.swap(0, 2);
        let b = srl_from_dependencies(&DependencyTree { nodes }, answer, &no_tokens(answer)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn role_labels_round_trip() {
        assert_eq!(Role::from_label("ARGM-TMP"), Role::ArgmTmp);
        assert_eq!(Role::from_label("ARGM-MNR"), Role::ArgmMisc);
        assert_eq!(Role::from_label("R-ARG0"), Role::ArgmMisc);
        assert_eq!(Role::from_label(Role::ArgmLoc.label()), Role::ArgmLoc);
    }
}
