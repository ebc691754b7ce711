//! Iterative multi-label stratified train/test split.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use super::Utterance;
use crate::emotion::NUM_EMOTIONS;
use crate::error::{Error, Result};

pub const DEFAULT_TRAIN_FRAC: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub seed: u64,
    pub tags: BTreeMap<String, Split>,
}

impl SplitAssignment {
    pub fn get(&self, id: &str) -> Option<Split> {
        self.tags.get(id).copied()
    }

    pub fn count(&self, split: Split) -> usize {
        self.tags.values().filter(|&&s| s == split).count()
    }

    /// Splits `data` into (train, test), keeping input order within each.
    /// Ids missing from the assignment are an input error.
    pub fn partition(&self, data: &[Utterance]) -> Result<(Vec<Utterance>, Vec<Utterance>)> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for u in data {
            match self.get(&u.id) {
                Some(Split::Train) => train.push(u.clone()),
                Some(Split::Test) => test.push(u.clone()),
                None => {
                    return Err(Error::Input(format!(
                        "utterance `{}` has no split assignment",
                        u.id
                    )))
                }
            }
        }
        Ok((train, test))
    }
}

/// Rarest label first: each label's not-yet-placed utterances are shuffled
/// and enough of them go to test to bring that label's test count to
/// `round(count · (1 − train_frac))`, within the remaining capacity of both
/// sides. Neutral utterances fill whatever capacity is left.
///
/// Input is sorted by id first, so the result depends only on the id set,
/// labels and seed. The train size is `round(train_frac · n)`, half rounding
/// up, so a single utterance goes to train.
pub fn stratified_split(data: &[Utterance], train_frac: f64, seed: u64) -> Result<SplitAssignment> {
    if data.is_empty() {
        return Err(Error::Input("cannot split an empty dataset".into()));
    }
    if !(0.0..=1.0).contains(&train_frac) {
        return Err(Error::Config(format!(
            "train_frac {train_frac} must lie in [0, 1]"
        )));
    }
    let mut order: Vec<&Utterance> = data.iter().collect();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    let n = order.len();
    let n_train = ((train_frac * n as f64).round() as usize).min(n);
    let n_test = n - n_train;
    let test_frac = 1.0 - train_frac;

    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut assigned: Vec<Option<Split>> = vec![None; n];
    let (mut in_train, mut in_test) = (0usize, 0usize);

    let mut counts = [0usize; NUM_EMOTIONS];
    for u in &order {
        for (c, &l) in counts.iter_mut().zip(&u.labels) {
            *c += usize::from(l);
        }
    }
    let mut labels: Vec<usize> = (0..NUM_EMOTIONS).filter(|&l| counts[l] > 0).collect();
    labels.sort_by_key(|&l| (counts[l], l));

    let place = |pool: Vec<usize>,
                 target_test: usize,
                 assigned: &mut Vec<Option<Split>>,
                 in_train: &mut usize,
                 in_test: &mut usize| {
        let test_room = n_test - *in_test;
        let train_room = n_train - *in_train;
        let k = target_test
            .min(test_room)
            .min(pool.len())
            .max(pool.len().saturating_sub(train_room));
        for (j, &i) in pool.iter().enumerate() {
            assigned[i] = Some(if j < k { Split::Test } else { Split::Train });
        }
        *in_test += k;
        *in_train += pool.len() - k;
    };

    for l in labels {
        let members: Vec<usize> = (0..n).filter(|&i| order[i].labels[l]).collect();
        let already_test = members
            .iter()
            .filter(|&&i| assigned[i] == Some(Split::Test))
            .count();
        let mut pool: Vec<usize> = members
            .into_iter()
            .filter(|&i| assigned[i].is_none())
            .collect();
        pool.shuffle(&mut rng);
        let desired = (counts[l] as f64 * test_frac).round() as usize;
        place(
            pool,
            desired.saturating_sub(already_test),
            &mut assigned,
            &mut in_train,
            &mut in_test,
        );
    }

    let mut rest: Vec<usize> = (0..n).filter(|&i| assigned[i].is_none()).collect();
    rest.shuffle(&mut rng);
    let room = n_test - in_test;
    place(rest, room, &mut assigned, &mut in_train, &mut in_test);

    let tags = order
        .iter()
        .zip(assigned)
        .map(|(u, s)| (u.id.clone(), s.expect("every utterance placed")))
        .collect();
    Ok(SplitAssignment { seed, tags })
}
