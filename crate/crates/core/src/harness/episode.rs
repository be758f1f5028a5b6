use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

use super::ClassTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpisodeItem {
    /// Index into the dataset's sample list.
    pub sample: usize,
    /// Episode-local label in `0..way`.
    pub label: usize,
}

/// One N-way K-shot task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Episode {
    pub way: usize,
    pub shot: usize,
    pub query_per_class: usize,
    /// Dataset class id of each episode label.
    pub classes: Vec<usize>,
    pub support: Vec<EpisodeItem>,
    pub query: Vec<EpisodeItem>,
}

/// Independent RNG stream for episode `index` under a master seed.
pub fn episode_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Classes that can supply `shot + query` distinct samples, and those that cannot.
pub fn eligible_classes(table: &ClassTable, shot: usize, query: usize) -> (Vec<usize>, Vec<usize>) {
    (0..table.len()).partition(|&c| table.members[c].len() >= shot + query)
}

/// Draw `way` eligible classes uniformly without replacement, then `shot`
/// support and `query` query samples per class, all distinct.
pub fn sample_episode<R: Rng + ?Sized>(
    table: &ClassTable,
    way: usize,
    shot: usize,
    query: usize,
    rng: &mut R,
) -> Result<Episode> {
    if way == 0 || shot == 0 {
        return Err(Error::arg("way and shot must be at least 1"));
    }
    if way > table.len() {
        return Err(Error::arg(format!(
            "{way}-way episode requested but only {} classes exist",
            table.len()
        )));
    }
    let (eligible, short) = eligible_classes(table, shot, query);
    if eligible.len() < way {
        let names: Vec<String> = short
            .iter()
            .map(|&c| format!("{} ({} samples)", table.names[c], table.members[c].len()))
            .collect();
        return Err(Error::arg(format!(
            "{way}-way episode needs {} samples per class; too few in: {}",
            shot + query,
            names.join(", ")
        )));
    }
    let picked = index::sample(rng, eligible.len(), way);
    let mut episode = Episode {
        way,
        shot,
        query_per_class: query,
        classes: Vec::with_capacity(way),
        support: Vec::with_capacity(way * shot),
        query: Vec::with_capacity(way * query),
    };
    for (label, e) in picked.iter().enumerate() {
        let class = eligible[e];
        let members = &table.members[class];
        let draw = index::sample(rng, members.len(), shot + query);
        for (k, m) in draw.iter().enumerate() {
            let item = EpisodeItem {
                sample: members[m],
                label,
            };
            if k < shot {
                episode.support.push(item);
            } else {
                episode.query.push(item);
            }
        }
        episode.classes.push(class);
    }
    Ok(episode)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn table(sizes: &[usize]) -> ClassTable {
        let mut next = 0;
        ClassTable {
            names: (0..sizes.len()).map(|i| format!("c{i}")).collect(),
            members: sizes
                .iter()
                .map(|&n| {
                    let m: Vec<usize> = (next..next + n).collect();
                    next += n;
                    m
                })
                .collect(),
        }
    }

    #[test]
    fn two_way_one_shot_shape() {
        let t = table(&[20, 25, 30]);
        let e = sample_episode(&t, 2, 1, 19, &mut episode_rng(1, 0)).unwrap();
        assert_eq!((e.support.len(), e.query.len()), (2, 38));
    }

    #[test]
    fn five_way_five_shot_shape() {
        let t = table(&[20; 6]);
        let e = sample_episode(&t, 5, 5, 15, &mut episode_rng(1, 0)).unwrap();
        assert_eq!((e.support.len(), e.query.len()), (25, 75));
        let labels: HashSet<usize> = e.support.iter().map(|i| i.label).collect();
        assert_eq!(labels, (0..5).collect());
    }

    #[test]
    fn fixed_rng_gives_identical_episode() {
        let t = table(&[30; 8]);
        let a = sample_episode(&t, 5, 1, 19, &mut episode_rng(42, 3)).unwrap();
        let b = sample_episode(&t, 5, 1, 19, &mut episode_rng(42, 3)).unwrap();
        let c = sample_episode(&t, 5, 1, 19, &mut episode_rng(42, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn support_and_query_are_disjoint_and_within_class() {
        let t = table(&[21, 40, 22, 30]);
        for i in 0..200 {
            let e = sample_episode(&t, 3, 2, 19, &mut episode_rng(7, i)).unwrap();
            let s: HashSet<usize> = e.support.iter().map(|x| x.sample).collect();
            let q: HashSet<usize> = e.query.iter().map(|x| x.sample).collect();
            assert!(s.is_disjoint(&q));
            assert_eq!(s.len() + q.len(), 3 * 21);
            for item in e.support.iter().chain(&e.query) {
                assert!(t.members[e.classes[item.label]].contains(&item.sample));
            }
        }
    }

    #[test]
    fn insufficient_class_is_named() {
        let t = table(&[20, 3]);
        let err = sample_episode(&t, 2, 1, 19, &mut episode_rng(0, 0)).unwrap_err();
        assert!(err.to_string().contains("c1 (3 samples)"), "{err}");
        assert!(sample_episode(&t, 3, 1, 1, &mut episode_rng(0, 0)).is_err());
    }

    #[test]
    fn small_classes_are_skipped_when_enough_others_exist() {
        let t = table(&[20, 3, 20]);
        for i in 0..50 {
            let e = sample_episode(&t, 2, 1, 19, &mut episode_rng(0, i)).unwrap();
            assert!(!e.classes.contains(&1));
        }
    }
}
