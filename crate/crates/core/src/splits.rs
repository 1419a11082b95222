//! Seeded train/dev/test partitioning.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::buckets::bucket_rng;
use crate::types::{BucketKey, DataError, RelationTuple, Split, SplitSpec};

/// Anything that carries the tuple it was generated for.
pub trait HasTuple {
    fn tuple(&self) -> &RelationTuple;
}

impl HasTuple for RelationTuple {
    fn tuple(&self) -> &RelationTuple {
        self
    }
}

impl<T: HasTuple> HasTuple for &T {
    fn tuple(&self) -> &RelationTuple {
        (*self).tuple()
    }
}

/// Assigns every item to exactly one split.
///
/// Each bucket contributes exactly `test_per_bucket` items to test. The remaining
/// items form one global pool from which `round(dev_fraction * pool)` go to dev and
/// the rest to train. The result depends only on the item set and the seed: members
/// are ordered by `(bucket key, tuple id)` before any shuffling. Output preserves
/// input order.
pub fn assign_splits<T: HasTuple>(
    items: Vec<T>,
    spec: &SplitSpec,
) -> Result<Vec<(T, Split)>, DataError> {
    spec.validate()?;
    let mut by_bucket: BTreeMap<BucketKey, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        by_bucket.entry(item.tuple().key()).or_default().push(i);
    }

    let mut splits = vec![Split::Train; items.len()];
    let mut pool: Vec<(BucketKey, usize)> = Vec::new();
    for (key, mut members) in by_bucket {
        if members.len() < spec.test_per_bucket {
            return Err(DataError::InsufficientBucket {
                key,
                available: members.len(),
                required: spec.test_per_bucket,
            });
        }
        members.sort_by(|a, b| items[*a].tuple().id.cmp(&items[*b].tuple().id));
        let mut rng = bucket_rng(spec.seed ^ 0x7e57_5e1e_c7ed_u64, &key);
        members.shuffle(&mut rng);
        for &i in &members[..spec.test_per_bucket] {
            splits[i] = Split::Test;
        }
        pool.extend(
            members[spec.test_per_bucket..]
                .iter()
                .map(|&i| (key.clone(), i)),
        );
    }

    pool.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then_with(|| items[a.1].tuple().id.cmp(&items[b.1].tuple().id))
    });
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    pool.shuffle(&mut rng);
    let dev_count = (spec.dev_fraction * pool.len() as f64).round() as usize;
    for (_, i) in pool.iter().take(dev_count) {
        splits[*i] = Split::Dev;
    }

    Ok(items.into_iter().zip(splits).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::EntityType::*;

    fn corpus(buckets: usize, per: usize) -> Vec<RelationTuple> {
        let mut v = Vec::new();
        for b in 0..buckets {
            for i in 0..per {
                v.push(
                    RelationTuple::new(
                        format!("b{b}-{i:03}"),
                        format!("E{b}x{i}"),
                        Person,
                        format!("rel{b}"),
                        format!("F{b}x{i}"),
                        Location,
                    )
                    .unwrap(),
                );
            }
        }
        v
    }

    fn counts(out: &[(RelationTuple, Split)]) -> (usize, usize, usize) {
        let c = |s| out.iter().filter(|(_, x)| *x == s).count();
        (c(Split::Train), c(Split::Dev), c(Split::Test))
    }

    #[test]
    fn two_buckets_hand_count() {
        // 20 tuples; 2 test per bucket -> 4 test; pool 16 at 0.5 -> 8 dev, 8 train.
        let spec = SplitSpec::new(2, 0.5, 3).unwrap();
        let out = assign_splits(corpus(2, 10), &spec).unwrap();
        assert_eq!(counts(&out), (8, 8, 4));
        for b in 0..2 {
            let tests = out
                .iter()
                .filter(|(t, s)| *s == Split::Test && t.r == format!("rel{b}"))
                .count();
            assert_eq!(tests, 2);
        }
    }

    #[test]
    fn insufficient_bucket() {
        let spec = SplitSpec::new(11, 0.5, 3).unwrap();
        assert!(matches!(
            assign_splits(corpus(1, 10), &spec),
            Err(DataError::InsufficientBucket {
                available: 10,
                required: 11,
                ..
            })
        ));
    }

    #[test]
    fn independent_of_input_order() {
        let spec = SplitSpec::new(3, 0.2, 99).unwrap();
        let items = corpus(4, 12);
        let mut reversed = items.clone();
        reversed.reverse();
        let a: BTreeMap<String, Split> = assign_splits(items, &spec)
            .unwrap()
            .into_iter()
            .map(|(t, s)| (t.id, s))
            .collect();
        let b: BTreeMap<String, Split> = assign_splits(reversed, &spec)
            .unwrap()
            .into_iter()
            .map(|(t, s)| (t.id, s))
            .collect();
        assert_eq!(a, b);
    }

    #[test]
    fn paper_scale_proportions() {
        // 255 buckets; ~59 test per bucket gives ~15k test, with 0.1 of the rest to dev.
        let spec = SplitSpec::new(59, 0.1, 5).unwrap();
        let out = assign_splits(corpus(255, 80), &spec).unwrap();
        let (train, dev, test) = counts(&out);
        assert_eq!(test, 255 * 59);
        let pool = 255 * (80 - 59);
        assert_eq!(dev, (pool as f64 * 0.1).round() as usize);
        assert_eq!(train + dev + test, 255 * 80);
    }
}
