//! Shared domain types: class vocabulary with DESED/MAESTRO cross-mapping,
//! events, posteriorgrams and clip metadata.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{invalid, shape, Error, EventError, Result};

/// Default class list: 10 DESED classes, 11 evaluated MAESTRO classes and
/// the DESED super-class mapping.
pub const DEFAULT_CLASSES: &str = include_str!("../data/classes.tsv");

/// Which dataset family a class (or a clip) belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Origin {
    Desed,
    Maestro,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::Desed => f.write_str("desed"),
            Origin::Maestro => f.write_str("maestro"),
        }
    }
}

/// Source subset of a training or evaluation clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dataset {
    DesedStrong,
    DesedSynth,
    DesedWeak,
    DesedUnlabeled,
    Maestro,
}

impl Dataset {
    pub fn family(self) -> Origin {
        match self {
            Dataset::Maestro => Origin::Maestro,
            _ => Origin::Desed,
        }
    }
}

/// Loss masking convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMode {
    /// MAESTRO clips also train the DESED super-classes they are mapped to.
    Baseline,
    /// Only classes of the clip's own dataset family are trained.
    Independent,
}

/// Ordered class vocabulary. DESED classes come first (alphabetical), then
/// MAESTRO classes (alphabetical).
#[derive(Debug, Clone, PartialEq)]
pub struct ClassVocabulary {
    classes: Vec<String>,
    origins: Vec<Origin>,
    // DESED index -> MAESTRO indices
    cross_map: BTreeMap<usize, Vec<usize>>,
}

impl ClassVocabulary {
    /// Builds the vocabulary. Every mapping must go from a DESED class to a
    /// MAESTRO class, and every name it references must exist.
    pub fn build<S: AsRef<str>>(
        desed: &[S],
        maestro: &[S],
        cross_map: &[(S, S)],
    ) -> Result<Self> {
        Self::build_inner(desed, maestro, cross_map, false)
    }

    /// Like [`ClassVocabulary::build`] but silently drops mappings whose
    /// MAESTRO side is not part of the vocabulary (e.g. `Dog -> dog_bark`
    /// when `dog_bark` is not an evaluated class).
    pub fn build_lenient<S: AsRef<str>>(
        desed: &[S],
        maestro: &[S],
        cross_map: &[(S, S)],
    ) -> Result<Self> {
        Self::build_inner(desed, maestro, cross_map, true)
    }

    fn build_inner<S: AsRef<str>>(
        desed: &[S],
        maestro: &[S],
        cross_map: &[(S, S)],
        skip_unknown_targets: bool,
    ) -> Result<Self> {
        let mut d: Vec<&str> = desed.iter().map(AsRef::as_ref).collect();
        let mut m: Vec<&str> = maestro.iter().map(AsRef::as_ref).collect();
        d.sort_unstable();
        m.sort_unstable();

        let mut classes = Vec::with_capacity(d.len() + m.len());
        let mut origins = Vec::with_capacity(d.len() + m.len());
        let mut index: BTreeMap<&str, usize> = BTreeMap::new();
        for (name, origin) in d
            .iter()
            .map(|n| (*n, Origin::Desed))
            .chain(m.iter().map(|n| (*n, Origin::Maestro)))
        {
            if name.is_empty() {
                return Err(Error::EmptyClassName);
            }
            if index.insert(name, classes.len()).is_some() {
                return Err(Error::DuplicateClass(name.to_string()));
            }
            classes.push(name.to_string());
            origins.push(origin);
        }

        let mut map: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (from, to) in cross_map {
            let (from, to) = (from.as_ref(), to.as_ref());
            let fi = *index
                .get(from)
                .ok_or_else(|| Error::UnknownClass(from.to_string()))?;
            let ti = match index.get(to) {
                Some(&i) => i,
                None if skip_unknown_targets && origins[fi] == Origin::Desed => continue,
                None => return Err(Error::UnknownClass(to.to_string())),
            };
            if origins[fi] != Origin::Desed || origins[ti] != Origin::Maestro {
                return Err(Error::MappingDirection {
                    from: from.to_string(),
                    to: to.to_string(),
                });
            }
            let targets = map.entry(fi).or_default();
            if let Err(pos) = targets.binary_search(&ti) {
                targets.insert(pos, ti);
            }
        }

        Ok(Self {
            classes,
            origins,
            cross_map: map,
        })
    }

    /// The 21-class DESED + MAESTRO vocabulary.
    pub fn dcase_default() -> Self {
        ClassList::parse(DEFAULT_CLASSES)
            .and_then(|l| l.to_vocabulary())
            .expect("bundled class list is valid")
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.classes
    }

    pub fn name(&self, idx: usize) -> Option<&str> {
        self.classes.get(idx).map(String::as_str)
    }

    pub fn origin(&self, idx: usize) -> Option<Origin> {
        self.origins.get(idx).copied()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Indices of the classes with the given origin, in vocabulary order.
    pub fn indices_of(&self, origin: Origin) -> impl Iterator<Item = usize> + '_ {
        self.origins
            .iter()
            .enumerate()
            .filter(move |(_, o)| **o == origin)
            .map(|(i, _)| i)
    }

    /// DESED super-class index -> mapped MAESTRO class indices.
    pub fn cross_map(&self) -> &BTreeMap<usize, Vec<usize>> {
        &self.cross_map
    }

    /// Classes that contribute to the loss of a clip from `dataset`.
    pub fn class_mask(&self, dataset: Dataset, mode: MaskMode) -> Vec<bool> {
        let family = dataset.family();
        let mut mask: Vec<bool> = self.origins.iter().map(|o| *o == family).collect();
        if mode == MaskMode::Baseline && family == Origin::Maestro {
            for (&desed, targets) in &self.cross_map {
                if !targets.is_empty() {
                    mask[desed] = true;
                }
            }
        }
        mask
    }
}

/// Free-standing helper mirroring [`ClassVocabulary::class_mask`].
pub fn class_mask(meta: &ClipMetadata, vocab: &ClassVocabulary, mode: MaskMode) -> Vec<bool> {
    vocab.class_mask(meta.dataset, mode)
}

/// Parsed class-list file. Lines are `desed<TAB>name[<TAB>a,b,...]` or
/// `maestro<TAB>name`; `#` starts a comment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClassList {
    pub desed: Vec<String>,
    pub maestro: Vec<String>,
    pub cross_map: Vec<(String, String)>,
}

impl ClassList {
    pub fn parse(text: &str) -> Result<Self> {
        let mut list = ClassList::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let mut fields = line.split('\t');
            let kind = fields.next().unwrap_or("").trim();
            let name = fields.next().unwrap_or("").trim();
            if name.is_empty() {
                return Err(invalid(alloc::format!("line {}: missing class name", lineno + 1)));
            }
            match kind {
                "desed" => {
                    list.desed.push(name.to_owned());
                    if let Some(targets) = fields.next() {
                        for t in targets.split(',').map(str::trim).filter(|t| !t.is_empty()) {
                            list.cross_map.push((name.to_owned(), t.to_owned()));
                        }
                    }
                }
                "maestro" => list.maestro.push(name.to_owned()),
                other => {
                    return Err(invalid(alloc::format!(
                        "line {}: unknown dataset `{other}`",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(list)
    }

    pub fn to_vocabulary(&self) -> Result<ClassVocabulary> {
        ClassVocabulary::build_lenient(&self.desed, &self.maestro, &self.cross_map)
    }
}

/// A labelled or detected sound event.
#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub clip_id: String,
    pub class_idx: usize,
    pub onset: f64,
    pub offset: f64,
    /// `None` is a hard label; `Some(0.0)` is a zero-confidence label.
    pub confidence: Option<f64>,
}

impl Event {
    pub fn new(clip_id: impl Into<String>, class_idx: usize, onset: f64, offset: f64) -> Self {
        Self {
            clip_id: clip_id.into(),
            class_idx,
            onset,
            offset,
            confidence: None,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = Some(confidence);
        self
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    pub fn validate(&self, n_classes: Option<usize>) -> Result<(), EventError> {
        if !(self.onset >= 0.0) {
            return Err(EventError::NegativeOnset(self.onset));
        }
        if !(self.offset > self.onset) {
            return Err(EventError::DegenerateInterval {
                onset: self.onset,
                offset: self.offset,
            });
        }
        if let Some(n) = n_classes {
            if self.class_idx >= n {
                return Err(EventError::UnknownClassIndex(self.class_idx));
            }
        }
        if let Some(c) = self.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(EventError::Confidence(c));
            }
        }
        Ok(())
    }

    fn sort_key_cmp(&self, other: &Self) -> Ordering {
        self.clip_id
            .cmp(&other.clip_id)
            .then(self.class_idx.cmp(&other.class_idx))
            .then(self.onset.total_cmp(&other.onset))
            .then(self.offset.total_cmp(&other.offset))
    }
}

/// Events sorted by `(clip_id, class_idx, onset)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventList(Vec<Event>);

impl EventList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn as_slice(&self) -> &[Event] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<Event> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> core::slice::Iter<'_, Event> {
        self.0.iter()
    }

    /// Distinct clip ids in sorted order.
    pub fn clip_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.0.iter().map(|e| e.clip_id.as_str()).collect();
        ids.dedup();
        ids
    }
}

impl<'a> IntoIterator for &'a EventList {
    type Item = &'a Event;
    type IntoIter = core::slice::Iter<'a, Event>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Validates and sorts events. All validation failures are reported
/// together with their input index.
pub fn canonicalize_events(events: Vec<Event>) -> Result<EventList> {
    canonicalize_events_in(events, None)
}

/// [`canonicalize_events`] that additionally checks class indices against
/// a vocabulary size.
pub fn canonicalize_events_in(mut events: Vec<Event>, n_classes: Option<usize>) -> Result<EventList> {
    let errors: Vec<(usize, EventError)> = events
        .iter()
        .enumerate()
        .filter_map(|(i, e)| e.validate(n_classes).err().map(|err| (i, err)))
        .collect();
    if !errors.is_empty() {
        return Err(Error::InvalidEvents(errors));
    }
    events.sort_by(Event::sort_key_cmp);
    Ok(EventList(events))
}

/// Frame-by-class matrix of sound presence scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Posteriorgram {
    clip_id: String,
    frame_period: f64,
    scores: Array2<f64>,
}

impl Posteriorgram {
    pub fn new(clip_id: impl Into<String>, frame_period: f64, scores: Array2<f64>) -> Result<Self> {
        if scores.nrows() == 0 {
            return Err(shape("posteriorgram needs at least one frame"));
        }
        if !(frame_period > 0.0) || !frame_period.is_finite() {
            return Err(invalid(alloc::format!("frame period {frame_period} must be positive")));
        }
        if let Some(v) = scores.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(alloc::format!("posterior score {v} outside [0, 1]")));
        }
        Ok(Self {
            clip_id: clip_id.into(),
            frame_period,
            scores,
        })
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn frame_period(&self) -> f64 {
        self.frame_period
    }

    pub fn scores(&self) -> ArrayView2<'_, f64> {
        self.scores.view()
    }

    pub fn class_track(&self, class_idx: usize) -> ArrayView1<'_, f64> {
        self.scores.column(class_idx)
    }

    pub fn n_frames(&self) -> usize {
        self.scores.nrows()
    }

    pub fn n_classes(&self) -> usize {
        self.scores.ncols()
    }

    pub fn duration(&self) -> f64 {
        self.n_frames() as f64 * self.frame_period
    }

    pub fn into_scores(self) -> Array2<f64> {
        self.scores
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipMetadata {
    pub clip_id: String,
    pub dataset: Dataset,
    pub duration: f64,
}

impl ClipMetadata {
    pub fn new(clip_id: impl Into<String>, dataset: Dataset, duration: f64) -> Result<Self> {
        if !(duration > 0.0) {
            return Err(invalid(alloc::format!("clip duration {duration} must be positive")));
        }
        Ok(Self {
            clip_id: clip_id.into(),
            dataset,
            duration,
        })
    }
}
