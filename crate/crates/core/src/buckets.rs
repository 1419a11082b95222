//! Bucket construction and balanced per-bucket sampling.

use std::collections::{BTreeMap, HashSet};

use rand::seq::index;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::types::{BucketKey, DataError, RelationBucket, RelationTuple};
use crate::util::stable_hash;

pub type BucketMap = BTreeMap<BucketKey, RelationBucket>;

#[derive(Debug, Clone, PartialEq)]
pub struct BucketBuild {
    pub buckets: BucketMap,
    /// Tuples dropped because their `(e1, e2)` pair was already present in the bucket.
    pub duplicates_dropped: usize,
}

/// Groups tuples by `(t1, r, t2)`, keeping the first occurrence of each `(e1, e2)` pair.
pub fn build_buckets(tuples: &[RelationTuple]) -> Result<BucketBuild, DataError> {
    let mut buckets = BucketMap::new();
    let mut seen: HashSet<(BucketKey, &str, &str)> = HashSet::new();
    let mut duplicates_dropped = 0;
    for tuple in tuples {
        tuple.validate()?;
        let key = tuple.key();
        if !seen.insert((key.clone(), tuple.e1.as_str(), tuple.e2.as_str())) {
            duplicates_dropped += 1;
            continue;
        }
        buckets
            .entry(key.clone())
            .or_insert_with(|| RelationBucket {
                key,
                members: Vec::new(),
            })
            .members
            .push(tuple.clone());
    }
    Ok(BucketBuild {
        buckets,
        duplicates_dropped,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleReport {
    pub buckets: usize,
    pub selected: usize,
    /// Buckets holding fewer tuples than the quota, with their sizes.
    pub underfilled: Vec<(String, usize)>,
}

/// Draws `min(quota, size)` tuples from every bucket without replacement.
///
/// Each bucket gets its own generator derived from `seed` and the bucket key, so the
/// draw for one bucket does not depend on which other buckets are present. Selected
/// members keep their original relative order; buckets are emitted in key order.
pub fn sample_balanced(
    buckets: &BucketMap,
    quota_per_bucket: usize,
    seed: u64,
) -> Result<(Vec<RelationTuple>, SampleReport), DataError> {
    if quota_per_bucket == 0 {
        return Err(DataError::ZeroQuota);
    }
    let mut out = Vec::new();
    let mut report = SampleReport {
        buckets: buckets.len(),
        ..Default::default()
    };
    for (key, bucket) in buckets {
        let size = bucket.members.len();
        if size <= quota_per_bucket {
            if size < quota_per_bucket {
                report.underfilled.push((key.to_string(), size));
            }
            out.extend(bucket.members.iter().cloned());
            continue;
        }
        let mut rng = bucket_rng(seed, key);
        let mut picked = index::sample(&mut rng, size, quota_per_bucket).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| bucket.members[i].clone()));
    }
    report.selected = out.len();
    Ok((out, report))
}

pub(crate) fn bucket_rng(seed: u64, key: &BucketKey) -> ChaCha8Rng {
    let salt = stable_hash(&[key.t1.as_str(), &key.r, key.t2.as_str()]);
    ChaCha8Rng::seed_from_u64(seed ^ salt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::EntityType::*;

    fn tuple(id: &str, e1: &str, r: &str, e2: &str) -> RelationTuple {
        RelationTuple::new(id, e1, Location, r, e2, Location).unwrap()
    }

    #[test]
    fn single_tuple_single_bucket() {
        let t = tuple("1", "Blankenese", "administrativeDistrict", "Hamburg");
        let build = build_buckets(&[t]).unwrap();
        assert_eq!(build.buckets.len(), 1);
        let key = BucketKey::new(Location, "administrativeDistrict", Location);
        assert_eq!(build.buckets[&key].members.len(), 1);
        assert_eq!(build.duplicates_dropped, 0);
    }

    #[test]
    fn empty_input() {
        let build = build_buckets(&[]).unwrap();
        assert!(build.buckets.is_empty());
    }

    #[test]
    fn duplicate_pairs_keep_first() {
        let a = tuple("1", "A", "country", "B");
        let b = tuple("2", "A", "country", "B");
        let build = build_buckets(&[a, b]).unwrap();
        let bucket = build.buckets.values().next().unwrap();
        assert_eq!(bucket.members.len(), 1);
        assert_eq!(bucket.members[0].id, "1");
        assert_eq!(build.duplicates_dropped, 1);
    }

    #[test]
    fn same_pair_in_different_buckets_is_kept() {
        let a = tuple("1", "A", "country", "B");
        let b = tuple("2", "A", "capital", "B");
        let build = build_buckets(&[a, b]).unwrap();
        assert_eq!(build.buckets.len(), 2);
        assert_eq!(build.duplicates_dropped, 0);
    }

    #[test]
    fn invalid_tuple_is_rejected() {
        let mut t = tuple("1", "A", "country", "B");
        t.e2 = " ".into();
        assert!(build_buckets(&[t]).is_err());
    }

    #[test]
    fn quota_exceeding_size_returns_all() {
        let ts: Vec<_> = (0..3)
            .map(|i| tuple(&i.to_string(), &format!("A{i}"), "country", "B"))
            .collect();
        let build = build_buckets(&ts).unwrap();
        let (out, report) = sample_balanced(&build.buckets, 10, 1).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(report.underfilled.len(), 1);
    }

    #[test]
    fn sampling_is_deterministic_and_bounded() {
        let mut ts = Vec::new();
        for r in ["country", "capital", "locatedIn"] {
            for i in 0..50 {
                ts.push(tuple(&format!("{r}{i}"), &format!("E{i}"), r, "Z"));
            }
        }
        let build = build_buckets(&ts).unwrap();
        let (a, _) = sample_balanced(&build.buckets, 7, 42).unwrap();
        let (b, _) = sample_balanced(&build.buckets, 7, 42).unwrap();
        let (c, _) = sample_balanced(&build.buckets, 7, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.len(), 21);
        // bucket order follows key order
        let keys: Vec<_> = a.iter().map(|t| t.r.clone()).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn zero_quota_rejected() {
        assert_eq!(
            sample_balanced(&BucketMap::new(), 0, 1),
            Err(DataError::ZeroQuota)
        );
    }
}
