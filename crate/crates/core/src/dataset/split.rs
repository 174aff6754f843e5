use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{Action, Dataset};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Person-independent split: every video of `fencer` is the test set.
pub fn split_pi(dataset: &Dataset, fencer: u32) -> Result<(Dataset, Dataset)> {
    if !dataset.iter().any(|s| s.fencer_id == fencer) {
        return Err(Error::Argument(format!("no videos for fencer {fencer}")));
    }
    let (test, train) = dataset
        .sequences
        .iter()
        .cloned()
        .partition(|s| s.fencer_id == fencer);
    Ok((Dataset::new(train), Dataset::new(test)))
}

/// Hold out `round(fraction * n)` videos of every (fencer, action) group.
/// Splitting happens at video level, so all windows of a video stay together.
pub fn split_random(dataset: &Dataset, fraction: f64, rng: &mut Rng) -> (Dataset, Dataset) {
    let mut groups: BTreeMap<(u32, Action), Vec<usize>> = BTreeMap::new();
    for (i, s) in dataset.iter().enumerate() {
        groups.entry((s.fencer_id, s.action)).or_default().push(i);
    }
    let mut in_test = vec![false; dataset.len()];
    for members in groups.values_mut() {
        let take = (fraction.clamp(0.0, 1.0) * members.len() as f64).round() as usize;
        members.shuffle(rng);
        for &i in &members[..take] {
            in_test[i] = true;
        }
    }
    let (test, train): (Vec<_>, Vec<_>) = dataset
        .sequences
        .iter()
        .cloned()
        .zip(in_test)
        .partition(|(_, t)| *t);
    (
        Dataset::new(train.into_iter().map(|(s, _)| s).collect()),
        Dataset::new(test.into_iter().map(|(s, _)| s).collect()),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::PoseSequence;
    use crate::rng::rng_from_seed;
    use std::collections::HashSet;

    fn toy(fencers: u32, reps: usize) -> Dataset {
        let mut seqs = Vec::new();
        for f in 1..=fencers {
            for a in Action::ALL {
                for r in 0..reps {
                    seqs.push(PoseSequence {
                        video_id: format!("f{f}-{a}-{r}"),
                        fencer_id: f,
                        action: a,
                        fps: 30.0,
                        frames: vec![vec![Some([0.0, 0.0]); 13]],
                        front_side: None,
                    });
                }
            }
        }
        Dataset::new(seqs)
    }

    #[test]
    fn pi_split_partitions_by_fencer() {
        let ds = toy(10, 2);
        let (train, test) = split_pi(&ds, 5).unwrap();
        assert_eq!(train.fencers().len(), 9);
        assert!(test.iter().all(|s| s.fencer_id == 5));
        assert_eq!(train.len() + test.len(), ds.len());
        assert!(matches!(split_pi(&ds, 11), Err(Error::Argument(_))));

        let mut union: Vec<String> = Vec::new();
        for f in ds.fencers() {
            union.extend(split_pi(&ds, f).unwrap().1.iter().map(|s| s.video_id.clone()));
        }
        union.sort();
        let mut all: Vec<String> = ds.iter().map(|s| s.video_id.clone()).collect();
        all.sort();
        assert_eq!(union, all);
    }

    #[test]
    fn random_split_takes_a_fifth_of_each_group() {
        let ds = toy(3, 10);
        let (train, test) = split_random(&ds, 0.2, &mut rng_from_seed(1));
        assert_eq!(test.len(), 3 * 6 * 2);
        for f in 1..=3 {
            for a in Action::ALL {
                let n = test.iter().filter(|s| s.fencer_id == f && s.action == a).count();
                assert_eq!(n, 2);
            }
        }
        let train_ids: HashSet<_> = train.iter().map(|s| &s.video_id).collect();
        assert!(test.iter().all(|s| !train_ids.contains(&s.video_id)));

        let (_, again) = split_random(&ds, 0.2, &mut rng_from_seed(1));
        assert_eq!(again, test);
    }
}
