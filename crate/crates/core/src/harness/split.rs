//! Train/tune/validate partitions grouped by command name.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::schema::FieldRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub tune: f64,
    pub validate: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            tune: 0.1,
            validate: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn as_array(&self) -> [f64; 3] {
        [self.train, self.tune, self.validate]
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let r = self.as_array();
        if r.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(HarnessError::Split(format!("ratios must be non-negative: {r:?}")));
        }
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(HarnessError::Split(format!("ratios must sum to 1, got {sum}")));
        }
        if self.train == 0.0 {
            return Err(HarnessError::Split("the train ratio must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Tune,
    Validate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: BTreeSet<String>,
    pub tune: BTreeSet<String>,
    pub validate: BTreeSet<String>,
    pub ratios: SplitRatios,
    pub seed: u64,
}

/// Record indices of each partition, in corpus order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub tune: Vec<usize>,
    pub validate: Vec<usize>,
}

impl SplitPlan {
    pub fn partition_of(&self, command: &str) -> Option<Partition> {
        if self.train.contains(command) {
            Some(Partition::Train)
        } else if self.tune.contains(command) {
            Some(Partition::Tune)
        } else if self.validate.contains(command) {
            Some(Partition::Validate)
        } else {
            None
        }
    }

    /// Assigns every record to its command's partition; records of unknown
    /// commands are skipped.
    pub fn indices(&self, records: &[FieldRecord]) -> SplitIndices {
        let mut out = SplitIndices::default();
        for (i, r) in records.iter().enumerate() {
            match self.partition_of(&r.command) {
                Some(Partition::Train) => out.train.push(i),
                Some(Partition::Tune) => out.tune.push(i),
                Some(Partition::Validate) => out.validate.push(i),
                None => {}
            }
        }
        out
    }
}

/// Command counts per partition by largest remainder, moving commands from
/// the largest partition so every partition with a positive ratio gets one.
pub fn partition_sizes(commands: usize, ratios: &SplitRatios) -> Result<[usize; 3], HarnessError> {
    ratios.validate()?;
    let r = ratios.as_array();
    let needed = r.iter().filter(|x| **x > 0.0).count();
    if commands < needed {
        return Err(HarnessError::Split(format!(
            "{commands} distinct commands cannot fill {needed} partitions"
        )));
    }
    let ideal: Vec<f64> = r.iter().map(|x| x * commands as f64).collect();
    let mut sizes = [0usize; 3];
    for k in 0..3 {
        sizes[k] = ideal[k].floor() as usize;
    }
    let mut order = [0, 1, 2];
    order.sort_by(|&a, &b| (ideal[b] - ideal[b].floor()).total_cmp(&(ideal[a] - ideal[a].floor())).then(a.cmp(&b)));
    let mut left = commands - sizes.iter().sum::<usize>();
    for &k in order.iter().cycle() {
        if left == 0 {
            break;
        }
        if r[k] > 0.0 {
            sizes[k] += 1;
            left -= 1;
        }
    }
    for k in 0..3 {
        if r[k] > 0.0 && sizes[k] == 0 {
            let donor = (0..3).max_by_key(|&j| (sizes[j], std::cmp::Reverse(j))).unwrap();
            sizes[donor] -= 1;
            sizes[k] = 1;
        }
    }
    Ok(sizes)
}

pub fn split_by_command(records: &[FieldRecord], ratios: &SplitRatios, seed: u64) -> Result<SplitPlan, HarnessError> {
    let commands: BTreeSet<&str> = records.iter().map(|r| r.command.as_str()).collect();
    let mut commands: Vec<&str> = commands.into_iter().collect();
    let sizes = partition_sizes(commands.len(), ratios)?;
    commands.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |range: std::ops::Range<usize>| commands[range].iter().map(|c| c.to_string()).collect();
    Ok(SplitPlan {
        train: take(0..sizes[0]),
        tune: take(sizes[0]..sizes[0] + sizes[1]),
        validate: take(sizes[0] + sizes[1]..commands.len()),
        ratios: *ratios,
        seed,
    })
}
