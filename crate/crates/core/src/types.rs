//! Domain types shared by every pipeline stage.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while validating or ingesting relation data.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("invalid entity type {0:?} (expected Person, Location or Organization)")]
    InvalidEntityType(String),
    #[error("tuple {id}: field `{field}` is empty")]
    EmptyField { id: String, field: &'static str },
    #[error("relation key {0} is not in the registry")]
    UnknownRelation(BucketKey),
    #[error("bucket {key} has {available} tuples, {required} required for the test split")]
    InsufficientBucket {
        key: BucketKey,
        available: usize,
        required: usize,
    },
    #[error("invalid split spec: {0}")]
    InvalidSplitSpec(String),
    #[error("sampling quota must be at least 1")]
    ZeroQuota,
    #[error("malformed registry line {line}: {reason}")]
    MalformedRegistry { line: usize, reason: String },
}

/// The three named-entity types admitted in a relation tuple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum EntityType {
    Location,
    Organization,
    Person,
}

impl EntityType {
    pub const ALL: [EntityType; 3] = [
        EntityType::Location,
        EntityType::Organization,
        EntityType::Person,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EntityType::Location => "Location",
            EntityType::Organization => "Organization",
            EntityType::Person => "Person",
        }
    }
}

impl fmt::Display for EntityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EntityType {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "Location" => Ok(EntityType::Location),
            "Organization" => Ok(EntityType::Organization),
            "Person" => Ok(EntityType::Person),
            other => Err(DataError::InvalidEntityType(other.to_string())),
        }
    }
}

impl TryFrom<String> for EntityType {
    type Error = DataError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<EntityType> for String {
    fn from(value: EntityType) -> Self {
        value.as_str().to_string()
    }
}

/// A relation tuple `(e1, t1, r, e2, t2)` with a stable identifier.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RelationTuple {
    pub id: String,
    pub e1: String,
    pub t1: EntityType,
    pub r: String,
    pub e2: String,
    pub t2: EntityType,
}

impl RelationTuple {
    pub fn new(
        id: impl Into<String>,
        e1: impl Into<String>,
        t1: EntityType,
        r: impl Into<String>,
        e2: impl Into<String>,
        t2: EntityType,
    ) -> Result<Self, DataError> {
        let tuple = Self {
            id: id.into(),
            e1: e1.into(),
            t1,
            r: r.into(),
            e2: e2.into(),
            t2,
        };
        tuple.validate()?;
        Ok(tuple)
    }

    /// Checks the non-empty invariants on `id`, `e1`, `r` and `e2`.
    pub fn validate(&self) -> Result<(), DataError> {
        for (field, value) in [
            ("id", &self.id),
            ("e1", &self.e1),
            ("r", &self.r),
            ("e2", &self.e2),
        ] {
            if value.trim().is_empty() {
                return Err(DataError::EmptyField {
                    id: self.id.clone(),
                    field,
                });
            }
        }
        Ok(())
    }

    pub fn key(&self) -> BucketKey {
        BucketKey {
            t1: self.t1,
            r: self.r.clone(),
            t2: self.t2,
        }
    }

    /// True when `text` contains both entity surfaces verbatim (case-sensitive).
    pub fn entities_in(&self, text: &str) -> bool {
        text.contains(&self.e1) && text.contains(&self.e2)
    }

    /// Renders `(E1, E1_TYPE, RELATION, E2, E2_TYPE)`.
    pub fn display_tuple(&self) -> String {
        format!(
            "({}, {}, {}, {}, {})",
            self.e1, self.t1, self.r, self.e2, self.t2
        )
    }
}

/// The `(t1, r, t2)` signature shared by all tuples of one relation bucket.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BucketKey {
    pub t1: EntityType,
    pub r: String,
    pub t2: EntityType,
}

impl BucketKey {
    pub fn new(t1: EntityType, r: impl Into<String>, t2: EntityType) -> Self {
        Self {
            t1,
            r: r.into(),
            t2,
        }
    }
}

impl fmt::Display for BucketKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.t1, self.r, self.t2)
    }
}

/// All tuples sharing one [`BucketKey`], in insertion order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationBucket {
    pub key: BucketKey,
    pub members: Vec<RelationTuple>,
}

/// One generated sentence for a tuple, tagged with the generator that produced it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSentence {
    pub tuple_id: String,
    pub generator_id: String,
    pub text: String,
}

impl CandidateSentence {
    /// Builds a candidate, collapsing the text onto a single trimmed line.
    /// Returns `None` when nothing is left.
    pub fn new(
        tuple_id: impl Into<String>,
        generator_id: impl Into<String>,
        text: &str,
    ) -> Option<Self> {
        let text = single_line(text)?;
        Some(Self {
            tuple_id: tuple_id.into(),
            generator_id: generator_id.into(),
            text,
        })
    }
}

/// Joins the lines of `text` with single spaces; `None` if the result is empty.
pub fn single_line(text: &str) -> Option<String> {
    let joined = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join(" ");
    if joined.is_empty() {
        None
    } else {
        Some(joined)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A final dataset record: a sentence, the tuple it expresses, and where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetInstance {
    #[serde(flatten)]
    pub tuple: RelationTuple,
    pub sentence: String,
    pub split: Split,
    pub provenance: Vec<String>,
}

impl DatasetInstance {
    /// Validates entity containment and the single-line rule.
    pub fn new(
        tuple: RelationTuple,
        sentence: String,
        split: Split,
        provenance: Vec<String>,
    ) -> Option<Self> {
        if sentence.contains('\n') || !tuple.entities_in(&sentence) {
            return None;
        }
        Some(Self {
            tuple,
            sentence,
            split,
            provenance,
        })
    }
}

/// Controls the train/dev/test partition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_per_bucket: usize,
    pub dev_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(test_per_bucket: usize, dev_fraction: f64, seed: u64) -> Result<Self, DataError> {
        let spec = Self {
            test_per_bucket,
            dev_fraction,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.test_per_bucket < 1 {
            return Err(DataError::InvalidSplitSpec(
                "test_per_bucket must be at least 1".into(),
            ));
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(DataError::InvalidSplitSpec(format!(
                "dev_fraction must lie strictly between 0 and 1, got {}",
                self.dev_fraction
            )));
        }
        Ok(())
    }
}
