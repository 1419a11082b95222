//! The fixed relation label space: one `(t1, r, t2)` key per line.

use std::collections::BTreeSet;

use crate::types::{BucketKey, DataError, EntityType, RelationTuple};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Registry {
    keys: BTreeSet<BucketKey>,
}

impl Registry {
    pub fn from_keys(keys: impl IntoIterator<Item = BucketKey>) -> Self {
        Self {
            keys: keys.into_iter().collect(),
        }
    }

    /// Parses the tab-separated registry format. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, DataError> {
        let mut keys = BTreeSet::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.trim_start().starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split('\t').collect();
            if fields.len() != 3 {
                return Err(DataError::MalformedRegistry {
                    line: line_no,
                    reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
                });
            }
            let t1: EntityType = fields[0].parse()?;
            let t2: EntityType = fields[2].parse()?;
            let r = fields[1].trim();
            if r.is_empty() {
                return Err(DataError::MalformedRegistry {
                    line: line_no,
                    reason: "empty relation".into(),
                });
            }
            if !keys.insert(BucketKey::new(t1, r, t2)) {
                return Err(DataError::MalformedRegistry {
                    line: line_no,
                    reason: format!("duplicate key ({}, {}, {})", t1, r, t2),
                });
            }
        }
        Ok(Self { keys })
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for k in &self.keys {
            out.push_str(&format!("{}\t{}\t{}\n", k.t1, k.r, k.t2));
        }
        out
    }

    pub fn contains(&self, key: &BucketKey) -> bool {
        self.keys.contains(key)
    }

    /// Validates a tuple and checks that its key is registered.
    pub fn admit(&self, tuple: &RelationTuple) -> Result<(), DataError> {
        tuple.validate()?;
        let key = tuple.key();
        if self.contains(&key) {
            Ok(())
        } else {
            Err(DataError::UnknownRelation(key))
        }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Keys in sorted order.
    pub fn iter(&self) -> impl Iterator<Item = &BucketKey> {
        self.keys.iter()
    }

    /// Restricts the registry to `keys` (used for desk-scale classification runs).
    pub fn subset<'a>(&self, keys: impl IntoIterator<Item = &'a BucketKey>) -> Self {
        Self {
            keys: keys
                .into_iter()
                .filter(|k| self.keys.contains(*k))
                .cloned()
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_round_trips() {
        let text =
            "# label space\nLocation\tadministrativeDistrict\tLocation\nPerson\tspouse\tPerson\n\n";
        let reg = Registry::parse(text).unwrap();
        assert_eq!(reg.len(), 2);
        assert!(reg.contains(&BucketKey::new(
            EntityType::Person,
            "spouse",
            EntityType::Person
        )));
        assert_eq!(Registry::parse(&reg.to_tsv()).unwrap(), reg);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(
            Registry::parse("Location\tx"),
            Err(DataError::MalformedRegistry { line: 1, .. })
        ));
        assert!(matches!(
            Registry::parse("Location\tx\tCity"),
            Err(DataError::InvalidEntityType(_))
        ));
        assert!(Registry::parse("Person\tx\tPerson\nPerson\tx\tPerson").is_err());
    }

    #[test]
    fn admit_checks_membership() {
        let reg = Registry::parse("Person\tspouse\tPerson").unwrap();
        let ok = RelationTuple::new(
            "1",
            "A",
            EntityType::Person,
            "spouse",
            "B",
            EntityType::Person,
        )
        .unwrap();
        let unknown = RelationTuple::new(
            "2",
            "A",
            EntityType::Person,
            "child",
            "B",
            EntityType::Person,
        )
        .unwrap();
        assert!(reg.admit(&ok).is_ok());
        assert!(matches!(
            reg.admit(&unknown),
            Err(DataError::UnknownRelation(_))
        ));
    }
}
