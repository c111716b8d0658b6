//! Deterministic train/val/test assignment.
//!
//! Indices `0..n` are shuffled with a ChaCha8 generator seeded by `seed` (rand's
//! Fisher-Yates `shuffle`), then sliced contiguously: the first `n_train` shuffled
//! indices are train, the next `n_val` are val, the rest are test. Counts use
//! largest-remainder rounding of `fractions * n`, so each is within one of its target.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fmx::{FmxMatrix, Payload};

pub const DEFAULT_FRACTIONS: [f64; 3] = [0.6, 0.2, 0.2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    fn code(self) -> u8 {
        self as u8
    }

    fn from_code(code: u32) -> Option<Split> {
        match code {
            0 => Some(Split::Train),
            1 => Some(Split::Val),
            2 => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitAssignment {
    tags: Vec<Split>,
    seed: Option<u64>,
    fractions: [f64; 3],
}

impl SplitAssignment {
    /// An explicit assignment, e.g. read from a tag file.
    pub fn from_tags(tags: Vec<Split>) -> Self {
        let n = tags.len().max(1) as f64;
        let frac = |s| tags.iter().filter(|&&t| t == s).count() as f64 / n;
        let fractions = [frac(Split::Train), frac(Split::Val), frac(Split::Test)];
        SplitAssignment {
            tags,
            seed: None,
            fractions,
        }
    }

    /// Tag file: FMX vector of u8/u32 codes, 0 = train, 1 = val, 2 = test.
    pub fn from_fmx(m: FmxMatrix) -> Result<Self> {
        if m.cols != 1 && m.rows != 1 {
            return Err(Error::Shape(format!("split tags must be a vector, got {}x{}", m.rows, m.cols)));
        }
        let codes: Vec<u32> = match m.payload {
            Payload::U8(v) => v.into_iter().map(u32::from).collect(),
            Payload::U32(v) => v,
            Payload::F32(_) => {
                return Err(Error::DtypeMismatch {
                    expected: "u8",
                    found: "f32",
                })
            }
        };
        let tags = codes
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                Split::from_code(c).ok_or_else(|| Error::Shape(format!("invalid split tag {c} at row {i}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self::from_tags(tags))
    }

    pub fn to_fmx(&self) -> FmxMatrix {
        FmxMatrix {
            rows: self.tags.len(),
            cols: 1,
            payload: Payload::U8(self.tags.iter().map(|t| t.code()).collect()),
        }
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn tags(&self) -> &[Split] {
        &self.tags
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn fractions(&self) -> [f64; 3] {
        self.fractions
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.tags
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.tags.iter().filter(|&&t| t == split).count()
    }
}

/// Largest-remainder apportionment of `n` into three parts, ties to the earlier part.
fn apportion(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let targets = fractions.map(|f| f * n as f64);
    let mut counts = targets.map(|t| (t + 1e-9).floor() as usize);
    let mut remaining = n - counts.iter().sum::<usize>().min(n);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let ra = targets[a] - counts[a] as f64;
        let rb = targets[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        counts[i] += 1;
        remaining -= 1;
    }
    counts
}

pub fn make_splits(n: usize, fractions: [f64; 3], seed: u64) -> Result<SplitAssignment> {
    if n < 3 {
        return Err(Error::TooFewSamples(n));
    }
    if fractions.iter().any(|&f| !(f > 0.0) || !f.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be positive, got {fractions:?}"
        )));
    }
    if (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must sum to 1, got {fractions:?}"
        )));
    }
    let counts = apportion(n, fractions);
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut tags = vec![Split::Train; n];
    for (pos, &i) in order.iter().enumerate() {
        tags[i] = if pos < counts[0] {
            Split::Train
        } else if pos < counts[0] + counts[1] {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(SplitAssignment {
        tags,
        seed: Some(seed),
        fractions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn counts(s: &SplitAssignment) -> [usize; 3] {
        Split::ALL.map(|t| s.count(t))
    }

    #[test]
    fn exact_multiples() {
        let s = make_splits(10, DEFAULT_FRACTIONS, 0).unwrap();
        assert_eq!(counts(&s), [6, 2, 2]);
    }

    #[test]
    fn deterministic() {
        let a = make_splits(10, DEFAULT_FRACTIONS, 0).unwrap();
        let b = make_splits(10, DEFAULT_FRACTIONS, 0).unwrap();
        assert_eq!(a.tags(), b.tags());
        let c = make_splits(10, DEFAULT_FRACTIONS, 1).unwrap();
        assert_ne!(a.tags(), c.tags());
    }

    #[test]
    fn large_counts_within_one() {
        let s = make_splits(10007, DEFAULT_FRACTIONS, 7).unwrap();
        let c = counts(&s);
        for (got, want) in c.iter().zip([6004.2, 2001.4, 2001.4]) {
            assert!((*got as f64 - want).abs() <= 1.0, "{c:?}");
        }
        assert_eq!(c.iter().sum::<usize>(), 10007);
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(make_splits(2, DEFAULT_FRACTIONS, 0), Err(Error::TooFewSamples(2))));
        let s = make_splits(3, DEFAULT_FRACTIONS, 0).unwrap();
        assert_eq!(counts(&s), [2, 1, 0]);
    }

    #[test]
    fn bad_fractions() {
        assert!(make_splits(10, [0.5, 0.5, 0.5], 0).is_err());
        assert!(make_splits(10, [1.0, 0.0, 0.0], 0).is_err());
    }

    #[test]
    fn tag_file_round_trip() {
        let s = make_splits(17, DEFAULT_FRACTIONS, 3).unwrap();
        let back = SplitAssignment::from_fmx(s.to_fmx()).unwrap();
        assert_eq!(back.tags(), s.tags());
    }

    proptest! {
        #[test]
        fn counts_partition_and_stay_within_one(n in 3usize..5000, seed in any::<u64>(),
                                                a in 0.05f64..0.9, b in 0.05f64..0.9) {
            let total = a + b + 0.1;
            let fr = [a / total, b / total, 0.1 / total];
            let s = make_splits(n, fr, seed).unwrap();
            let c = counts(&s);
            prop_assert_eq!(c.iter().sum::<usize>(), n);
            for i in 0..3 {
                prop_assert!((c[i] as f64 - fr[i] * n as f64).abs() <= 1.0 + 1e-9,
                    "n={} fr={:?} counts={:?}", n, fr, c);
            }
        }
    }
}
