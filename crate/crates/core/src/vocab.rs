//! Class identifiers, the silence label, and the target-class vocabulary.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of target classes in the default vocabulary.
pub const DEFAULT_NUM_CLASSES: usize = 18;

/// Index of a target class in a [`ClassVocabulary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassId(pub usize);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Single-label outcome: a target class or silence.
///
/// Serialized as the class index, or `null` for silence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Option<ClassId>", into = "Option<ClassId>")]
pub enum Label {
    Class(ClassId),
    Silence,
}

impl Label {
    pub fn class(self) -> Option<ClassId> {
        match self {
            Label::Class(c) => Some(c),
            Label::Silence => None,
        }
    }

    pub fn is_silence(self) -> bool {
        matches!(self, Label::Silence)
    }
}

impl From<Option<ClassId>> for Label {
    fn from(v: Option<ClassId>) -> Self {
        v.map_or(Label::Silence, Label::Class)
    }
}

impl From<Label> for Option<ClassId> {
    fn from(l: Label) -> Self {
        l.class()
    }
}

/// Set of classes present in (or predicted for) one mixture.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet(pub BTreeSet<ClassId>);

impl LabelSet {
    pub fn contains(&self, c: ClassId) -> bool {
        self.0.contains(&c)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ClassId> + '_ {
        self.0.iter().copied()
    }

    pub fn union(&self, other: &LabelSet) -> LabelSet {
        self.0.union(&other.0).copied().collect()
    }

    pub fn intersection(&self, other: &LabelSet) -> LabelSet {
        self.0.intersection(&other.0).copied().collect()
    }
}

impl FromIterator<ClassId> for LabelSet {
    fn from_iter<I: IntoIterator<Item = ClassId>>(iter: I) -> Self {
        LabelSet(iter.into_iter().collect())
    }
}

/// Ordered, unique class names. `C >= 2`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassVocabulary {
    names: Vec<String>,
    index: HashMap<String, ClassId>,
}

impl ClassVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "vocabulary needs at least 2 classes, got {}",
                names.len()
            )));
        }
        let mut index = HashMap::with_capacity(names.len());
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() {
                return Err(Error::InvalidArgument(format!("class {i} has an empty name")));
            }
            if index.insert(n.clone(), ClassId(i)).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate class name {n:?}")));
            }
        }
        Ok(Self { names, index })
    }

    /// Placeholder vocabulary `class_00 .. class_{n-1}`.
    pub fn placeholder(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| format!("class_{i:02}")).collect())
    }

    /// One class name per line; blank lines are skipped.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty())
                .map(String::from)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: ClassId) -> Option<&str> {
        self.names.get(id.0).map(String::as_str)
    }

    pub fn id(&self, name: &str) -> Option<ClassId> {
        self.index.get(name).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = ClassId> {
        (0..self.names.len()).map(ClassId)
    }

    pub fn check(&self, id: ClassId) -> Result<()> {
        if id.0 < self.len() {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "class id {id} outside vocabulary of {}",
                self.len()
            )))
        }
    }
}

impl Default for ClassVocabulary {
    fn default() -> Self {
        Self::placeholder(DEFAULT_NUM_CLASSES).expect("placeholder vocabulary is valid")
    }
}
