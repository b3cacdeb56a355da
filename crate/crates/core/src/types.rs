//! Domain types: sentences, role-labeled predicate frames, per-predicate
//! span partitions and dependency trees.
//!
//! Positions are 1-based throughout; position 0 is the dummy root.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reserved label of the root arc of a predicate.
pub const PRD: &str = "PRD";

/// Reserved label of arcs that do not introduce an argument.
pub const NULL: &str = "NULL";

/// Errors raised when validating sentences, frames and trees.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum FrameError {
    #[error("sentence must contain at least one token")]
    EmptySentence,

    #[error("lemma count {lemmas} does not match token count {tokens}")]
    LemmaCount { tokens: usize, lemmas: usize },

    #[error("position or span [{start}, {end}] is outside the sentence of length {n}")]
    OutOfBounds { start: usize, end: usize, n: usize },

    #[error("argument spans [{}, {}] and [{}, {}] overlap", .first.0, .first.1, .second.0, .second.1)]
    OverlappingArguments {
        first: (usize, usize),
        second: (usize, usize),
    },

    #[error("argument span [{start}, {end}] contains the predicate {predicate}")]
    PredicateInsideArgument {
        predicate: usize,
        start: usize,
        end: usize,
    },

    #[error("role `{0}` is reserved or empty")]
    ReservedRole(String),

    #[error("predicate {0} has more than one frame")]
    DuplicatePredicate(usize),
}

/// Errors raised by tree construction.
#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum TreeError {
    #[error("head vector must have length n + 1 with n >= 1, got {0}")]
    Length(usize),

    #[error("token {modifier} has invalid head {head}")]
    InvalidHead { modifier: usize, head: usize },

    #[error("token {0} is not connected to the root")]
    Cycle(usize),

    #[error("arc {head} -> {modifier} is not projective")]
    NonProjective { head: usize, modifier: usize },

    #[error("label vector length {labels} does not match head vector length {heads}")]
    LabelLength { heads: usize, labels: usize },
}

/// A tokenized sentence. Tokens are addressed by 1-based positions.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sentence {
    tokens: Vec<String>,
    lemmas: Option<Vec<String>>,
}

impl Sentence {
    pub fn new(tokens: Vec<String>) -> Result<Self, FrameError> {
        if tokens.is_empty() {
            return Err(FrameError::EmptySentence);
        }
        Ok(Sentence {
            tokens,
            lemmas: None,
        })
    }

    pub fn with_lemmas(tokens: Vec<String>, lemmas: Vec<String>) -> Result<Self, FrameError> {
        if lemmas.len() != tokens.len() {
            return Err(FrameError::LemmaCount {
                tokens: tokens.len(),
                lemmas: lemmas.len(),
            });
        }
        let mut sentence = Sentence::new(tokens)?;
        sentence.lemmas = Some(lemmas);
        Ok(sentence)
    }

    /// Convenience constructor from whitespace-separated text.
    pub fn from_text(text: &str) -> Result<Self, FrameError> {
        Sentence::new(text.split_whitespace().map(str::to_owned).collect())
    }

    /// Number of tokens, excluding the root.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn lemmas(&self) -> Option<&[String]> {
        self.lemmas.as_deref()
    }

    /// Token at 1-based position `pos`.
    pub fn token(&self, pos: usize) -> &str {
        &self.tokens[pos - 1]
    }
}

/// Inclusive token interval `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.start <= pos && pos <= self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

/// A role-labeled argument span.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Argument {
    pub span: Span,
    pub role: String,
}

impl Argument {
    pub fn new(start: usize, end: usize, role: impl Into<String>) -> Self {
        Argument {
            span: Span::new(start, end),
            role: role.into(),
        }
    }
}

/// One predicate with its argument spans. Arguments are kept sorted by span.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PredicateFrame {
    pub predicate: usize,
    arguments: Vec<Argument>,
}

impl PredicateFrame {
    pub fn new(predicate: usize, mut arguments: Vec<Argument>) -> Self {
        arguments.sort();
        PredicateFrame {
            predicate,
            arguments,
        }
    }

    pub fn arguments(&self) -> &[Argument] {
        &self.arguments
    }

    /// Check the frame against a sentence of length `n`.
    pub fn check(&self, n: usize) -> Result<(), FrameError> {
        let p = self.predicate;
        if p == 0 || p > n {
            return Err(FrameError::OutOfBounds {
                start: p,
                end: p,
                n,
            });
        }
        for arg in &self.arguments {
            let Span { start, end } = arg.span;
            if start == 0 || start > end || end > n {
                return Err(FrameError::OutOfBounds { start, end, n });
            }
        }
        for arg in &self.arguments {
            if arg.span.contains(p) {
                return Err(FrameError::PredicateInsideArgument {
                    predicate: p,
                    start: arg.span.start,
                    end: arg.span.end,
                });
            }
            if is_reserved_role(&arg.role) {
                return Err(FrameError::ReservedRole(arg.role.clone()));
            }
        }
        // Sorted by start, so overlap can only happen between neighbours.
        for pair in self.arguments.windows(2) {
            if pair[0].span.overlaps(&pair[1].span) {
                return Err(FrameError::OverlappingArguments {
                    first: (pair[0].span.start, pair[0].span.end),
                    second: (pair[1].span.start, pair[1].span.end),
                });
            }
        }
        Ok(())
    }
}

pub(crate) fn is_reserved_role(role: &str) -> bool {
    role.is_empty() || role == PRD || role == NULL || role.chars().any(char::is_whitespace)
}

/// Validate a frame against a sentence, returning it unchanged on success.
pub fn validate_frame(
    sentence: &Sentence,
    frame: PredicateFrame,
) -> Result<PredicateFrame, FrameError> {
    frame.check(sentence.len())?;
    Ok(frame)
}

/// A sentence with all of its predicate frames.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SrlAnnotation {
    pub sentence: Sentence,
    frames: Vec<PredicateFrame>,
}

impl SrlAnnotation {
    /// Build a validated annotation. Frames are ordered by predicate position.
    pub fn new(sentence: Sentence, mut frames: Vec<PredicateFrame>) -> Result<Self, FrameError> {
        frames.sort_by_key(|f| f.predicate);
        for frame in &frames {
            frame.check(sentence.len())?;
        }
        for pair in frames.windows(2) {
            if pair[0].predicate == pair[1].predicate {
                return Err(FrameError::DuplicatePredicate(pair[0].predicate));
            }
        }
        Ok(SrlAnnotation { sentence, frames })
    }

    pub fn frames(&self) -> &[PredicateFrame] {
        &self.frames
    }

    pub fn frame(&self, predicate: usize) -> Option<&PredicateFrame> {
        self.frames.iter().find(|f| f.predicate == predicate)
    }

    pub fn predicates(&self) -> Vec<usize> {
        self.frames.iter().map(|f| f.predicate).collect()
    }
}

/// Role inventory `R`. The reserved labels PRD and NULL are never members.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct RoleInventory {
    names: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl RoleInventory {
    pub fn new<I, S>(names: I) -> Result<Self, FrameError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut inventory = RoleInventory::default();
        for name in names {
            let name = name.into();
            if is_reserved_role(&name) {
                return Err(FrameError::ReservedRole(name));
            }
            inventory.insert(name);
        }
        Ok(inventory)
    }

    /// Collect the roles used in a corpus, in sorted order.
    pub fn from_corpus<'a>(corpus: impl IntoIterator<Item = &'a SrlAnnotation>) -> Self {
        let mut names: Vec<String> = corpus
            .into_iter()
            .flat_map(|a| a.frames())
            .flat_map(|f| f.arguments())
            .map(|a| a.role.clone())
            .collect();
        names.sort();
        names.dedup();
        let mut inventory = RoleInventory::default();
        for name in names {
            inventory.insert(name);
        }
        inventory
    }

    fn insert(&mut self, name: String) {
        if !self.index.contains_key(&name) {
            self.index.insert(name.clone(), self.names.len());
            self.names.push(name);
        }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Zero-based role id.
    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl TryFrom<Vec<String>> for RoleInventory {
    type Error = FrameError;

    fn try_from(names: Vec<String>) -> Result<Self, Self::Error> {
        RoleInventory::new(names)
    }
}

impl From<RoleInventory> for Vec<String> {
    fn from(inventory: RoleInventory) -> Self {
        inventory.names
    }
}

/// Kind of a segment of a span partition.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    Argument(String),
    NonArgument,
    Predicate,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Segment {
    pub span: Span,
    pub kind: SegmentKind,
}

impl Segment {
    pub fn role(&self) -> Option<&str> {
        match &self.kind {
            SegmentKind::Argument(role) => Some(role),
            _ => None,
        }
    }

    pub fn is_argument(&self) -> bool {
        matches!(self.kind, SegmentKind::Argument(_))
    }
}

/// Tiling of `[1, n]` relative to one predicate into argument spans,
/// maximal non-argument spans and the predicate itself.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpanPartition {
    pub predicate: usize,
    segments: Vec<Segment>,
    /// Segment index of every position; entry 0 is unused.
    segment_of: Vec<usize>,
}

impl SpanPartition {
    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Sentence length covered by the partition.
    pub fn len(&self) -> usize {
        self.segment_of.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Segment containing position `pos` (1-based).
    pub fn segment_at(&self, pos: usize) -> &Segment {
        &self.segments[self.segment_of[pos]]
    }

    pub fn segment_index(&self, pos: usize) -> usize {
        self.segment_of[pos]
    }
}

/// Partition a sentence with respect to a frame.
pub fn partition(sentence: &Sentence, frame: &PredicateFrame) -> Result<SpanPartition, FrameError> {
    let n = sentence.len();
    frame.check(n)?;

    let mut segments = Vec::new();
    let mut pending_start: Option<usize> = None;
    let mut args = frame.arguments().iter().peekable();
    let mut pos = 1;
    let flush = |segments: &mut Vec<Segment>, pending: &mut Option<usize>, end: usize| {
        if let Some(start) = pending.take() {
            segments.push(Segment {
                span: Span::new(start, end),
                kind: SegmentKind::NonArgument,
            });
        }
    };
    while pos <= n {
        if pos == frame.predicate {
            flush(&mut segments, &mut pending_start, pos - 1);
            segments.push(Segment {
                span: Span::new(pos, pos),
                kind: SegmentKind::Predicate,
            });
            pos += 1;
        } else if let Some(arg) = args.next_if(|a| a.span.start == pos) {
            flush(&mut segments, &mut pending_start, pos - 1);
            segments.push(Segment {
                span: arg.span,
                kind: SegmentKind::Argument(arg.role.clone()),
            });
            pos = arg.span.end + 1;
        } else {
            pending_start.get_or_insert(pos);
            pos += 1;
        }
    }
    flush(&mut segments, &mut pending_start, n);

    let mut segment_of = vec![0; n + 1];
    for (idx, segment) in segments.iter().enumerate() {
        for p in segment.span.start..=segment.span.end {
            segment_of[p] = idx;
        }
    }
    Ok(SpanPartition {
        predicate: frame.predicate,
        segments,
        segment_of,
    })
}

/// Arc label of a dependency tree.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ArcLabel {
    Prd,
    Null,
    Role(String),
}

impl ArcLabel {
    pub fn as_str(&self) -> &str {
        match self {
            ArcLabel::Prd => PRD,
            ArcLabel::Null => NULL,
            ArcLabel::Role(role) => role,
        }
    }

    pub fn parse(label: &str) -> Self {
        match label {
            PRD => ArcLabel::Prd,
            NULL => ArcLabel::Null,
            role => ArcLabel::Role(role.to_owned()),
        }
    }
}

impl fmt::Display for ArcLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A projective dependency tree over positions `0..=n`, rooted at 0.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DepTree {
    heads: Vec<usize>,
    labels: Option<Vec<Option<ArcLabel>>>,
}

impl DepTree {
    /// Build a tree from a head vector of length `n + 1`. `heads[0]` is ignored.
    pub fn new(mut heads: Vec<usize>) -> Result<Self, TreeError> {
        if heads.len() < 2 {
            return Err(TreeError::Length(heads.len()));
        }
        heads[0] = 0;
        check_heads(&heads)?;
        Ok(DepTree {
            heads,
            labels: None,
        })
    }

    /// Build a tree without validation. Callers guarantee the invariants.
    pub(crate) fn from_heads_unchecked(heads: Vec<usize>) -> Self {
        debug_assert!(check_heads(&heads).is_ok(), "invalid heads {heads:?}");
        DepTree {
            heads,
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Vec<Option<ArcLabel>>) -> Result<Self, TreeError> {
        if labels.len() != self.heads.len() {
            return Err(TreeError::LabelLength {
                heads: self.heads.len(),
                labels: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    /// Number of tokens.
    pub fn len(&self) -> usize {
        self.heads.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn head(&self, modifier: usize) -> usize {
        self.heads[modifier]
    }

    /// Head vector including the unused entry for the root.
    pub fn heads(&self) -> &[usize] {
        &self.heads
    }

    pub fn labels(&self) -> Option<&[Option<ArcLabel>]> {
        self.labels.as_deref()
    }

    pub fn label(&self, modifier: usize) -> Option<&ArcLabel> {
        self.labels.as_ref().and_then(|l| l[modifier].as_ref())
    }

    /// Children of `head`, in increasing order.
    pub fn children(&self, head: usize) -> Vec<usize> {
        (1..self.heads.len())
            .filter(|&m| self.heads[m] == head)
            .collect()
    }

    /// Smallest interval covering `node` and all of its descendants.
    /// For a projective tree this interval is exactly the subtree yield.
    pub fn yield_span(&self, node: usize) -> Span {
        let mut lo = node;
        let mut hi = node;
        for m in 1..self.heads.len() {
            if self.dominates(node, m) {
                lo = lo.min(m);
                hi = hi.max(m);
            }
        }
        Span::new(lo, hi)
    }

    /// True iff `ancestor` is `node` or one of its ancestors.
    pub fn dominates(&self, ancestor: usize, mut node: usize) -> bool {
        loop {
            if node == ancestor {
                return true;
            }
            if node == 0 {
                return false;
            }
            node = self.heads[node];
        }
    }
}

fn check_heads(heads: &[usize]) -> Result<(), TreeError> {
    let len = heads.len();
    for (m, &h) in heads.iter().enumerate().skip(1) {
        if h >= len || h == m {
            return Err(TreeError::InvalidHead {
                modifier: m,
                head: h,
            });
        }
    }
    // Every token must reach the root within n steps.
    for start in 1..len {
        let mut node = start;
        let mut steps = 0;
        while node != 0 {
            node = heads[node];
            steps += 1;
            if steps > len {
                return Err(TreeError::Cycle(start));
            }
        }
    }
    // Projectivity: every token strictly between h and m descends from h.
    for (m, &h) in heads.iter().enumerate().skip(1) {
        let (lo, hi) = if h < m { (h, m) } else { (m, h) };
        for k in lo + 1..hi {
            let mut node = k;
            while node != h && node != 0 {
                node = heads[node];
            }
            if node != h {
                return Err(TreeError::NonProjective {
                    head: h,
                    modifier: m,
                });
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_example() -> Sentence {
        Sentence::from_text("They want to do more .").unwrap()
    }

    #[test]
    fn validate_accepts_want_to_frame() {
        let frame = PredicateFrame::new(
            2,
            vec![Argument::new(1, 1, "A0"), Argument::new(3, 5, "A1")],
        );
        assert_eq!(validate_frame(&worked_example(), frame.clone()), Ok(frame));
    }

    #[test]
    fn validate_single_token_without_arguments() {
        let s = Sentence::from_text("Go").unwrap();
        assert!(validate_frame(&s, PredicateFrame::new(1, vec![])).is_ok());
    }

    #[test]
    fn validate_rejects_predicate_inside_argument() {
        let frame = PredicateFrame::new(2, vec![Argument::new(1, 3, "A0")]);
        assert!(matches!(
            validate_frame(&worked_example(), frame),
            Err(FrameError::PredicateInsideArgument { predicate: 2, .. })
        ));
    }

    #[test]
    fn validate_rejects_overlap_and_bounds() {
        let overlap = PredicateFrame::new(
            1,
            vec![Argument::new(2, 4, "A0"), Argument::new(4, 5, "A1")],
        );
        assert!(matches!(
            validate_frame(&worked_example(), overlap),
            Err(FrameError::OverlappingArguments { .. })
        ));
        let oob = PredicateFrame::new(1, vec![Argument::new(5, 7, "A0")]);
        assert!(matches!(
            validate_frame(&worked_example(), oob),
            Err(FrameError::OutOfBounds { .. })
        ));
        let bad_pred = PredicateFrame::new(7, vec![]);
        assert!(matches!(
            validate_frame(&worked_example(), bad_pred),
            Err(FrameError::OutOfBounds { .. })
        ));
        let reserved = PredicateFrame::new(1, vec![Argument::new(2, 2, "PRD")]);
        assert!(matches!(
            validate_frame(&worked_example(), reserved),
            Err(FrameError::ReservedRole(_))
        ));
    }

    #[test]
    fn argument_abutting_predicate_is_legal() {
        let frame = PredicateFrame::new(
            2,
            vec![Argument::new(3, 6, "A1"), Argument::new(1, 1, "A0")],
        );
        assert!(validate_frame(&worked_example(), frame).is_ok());
    }

    #[test]
    fn partition_want_to() {
        let frame = PredicateFrame::new(
            2,
            vec![Argument::new(1, 1, "A0"), Argument::new(3, 5, "A1")],
        );
        let part = partition(&worked_example(), &frame).unwrap();
        let expected = vec![
            Segment {
                span: Span::new(1, 1),
                kind: SegmentKind::Argument("A0".into()),
            },
            Segment {
                span: Span::new(2, 2),
                kind: SegmentKind::Predicate,
            },
            Segment {
                span: Span::new(3, 5),
                kind: SegmentKind::Argument("A1".into()),
            },
            Segment {
                span: Span::new(6, 6),
                kind: SegmentKind::NonArgument,
            },
        ];
        assert_eq!(part.segments(), expected.as_slice());
        assert_eq!(part.segment_index(4), 2);
    }

    #[test]
    fn partition_without_arguments() {
        let s = Sentence::from_text("a b c").unwrap();
        let part = partition(&s, &PredicateFrame::new(2, vec![])).unwrap();
        let kinds: Vec<_> = part
            .segments()
            .iter()
            .map(|s| (s.span, s.kind.clone()))
            .collect();
        assert_eq!(
            kinds,
            vec![
                (Span::new(1, 1), SegmentKind::NonArgument),
                (Span::new(2, 2), SegmentKind::Predicate),
                (Span::new(3, 3), SegmentKind::NonArgument),
            ]
        );
    }

    #[test]
    fn partition_interleaved() {
        let s = Sentence::from_text("a b c d e f g h").unwrap();
        let frame = PredicateFrame::new(
            4,
            vec![Argument::new(1, 2, "A0"), Argument::new(6, 7, "A1")],
        );
        let spans: Vec<_> = partition(&s, &frame)
            .unwrap()
            .segments()
            .iter()
            .map(|s| (s.span.start, s.span.end, s.is_argument()))
            .collect();
        assert_eq!(
            spans,
            vec![
                (1, 2, true),
                (3, 3, false),
                (4, 4, false),
                (5, 5, false),
                (6, 7, true),
                (8, 8, false)
            ]
        );
    }

    #[test]
    fn tree_validation() {
        // Worked example tree.
        let tree = DepTree::new(vec![0, 2, 0, 4, 2, 4, 2]).unwrap();
        assert_eq!(tree.children(2), vec![1, 4, 6]);
        assert_eq!(tree.yield_span(4), Span::new(3, 5));
        assert!(matches!(
            DepTree::new(vec![0, 2, 1]),
            Err(TreeError::Cycle(_))
        ));
        assert!(matches!(
            DepTree::new(vec![0, 0, 4, 1, 0]),
            Err(TreeError::NonProjective { .. })
        ));
        assert!(matches!(
            DepTree::new(vec![0, 1]),
            Err(TreeError::InvalidHead { .. })
        ));
        assert!(matches!(DepTree::new(vec![0]), Err(TreeError::Length(1))));
    }

    #[test]
    fn annotation_rejects_duplicate_predicates() {
        let s = worked_example();
        let frames = vec![
            PredicateFrame::new(2, vec![]),
            PredicateFrame::new(2, vec![]),
        ];
        assert_eq!(
            SrlAnnotation::new(s, frames),
            Err(FrameError::DuplicatePredicate(2))
        );
    }

    #[test]
    fn role_inventory_rejects_reserved() {
        assert!(RoleInventory::new(["A0", "NULL"]).is_err());
        let inv = RoleInventory::new(["A0", "A1", "A0"]).unwrap();
        assert_eq!(inv.len(), 2);
        assert_eq!(inv.id("A1"), Some(1));
    }
}
