use std::collections::BTreeSet;

use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use triage_core::harness::{episode_rng, sample_episode, ClassTable};

fn table(sizes: &[usize]) -> ClassTable {
    let mut next = 0;
    let members = sizes
        .iter()
        .map(|&n| {
            let m: Vec<usize> = (next..next + n).collect();
            next += n;
            m
        })
        .collect();
    ClassTable {
        names: (0..sizes.len()).map(|c| format!("c{c}")).collect(),
        members,
    }
}

fn chi_square_p(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    let stat: f64 = counts.iter().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
    let dist = ChiSquared::new((counts.len() - 1) as f64).unwrap();
    1.0 - dist.cdf(stat)
}

#[test]
fn classes_are_drawn_uniformly() {
    // 12 classes, one of them too small to ever be eligible
    let t = table(&[25, 25, 25, 25, 25, 25, 25, 25, 25, 25, 25, 10]);
    let mut counts = [0u64; 11];
    for i in 0..10_000 {
        let e = sample_episode(&t, 5, 1, 19, &mut episode_rng(99, i)).unwrap();
        for &c in &e.classes {
            assert!(c < 11, "short class drawn");
            counts[c] += 1;
        }
    }
    let p = chi_square_p(&counts);
    assert!(p > 0.01, "p = {p}, counts {counts:?}");
}

#[test]
fn samples_within_a_class_are_drawn_uniformly() {
    let t = table(&[30, 30]);
    let mut counts = [0u64; 30];
    for i in 0..10_000 {
        let e = sample_episode(&t, 2, 1, 4, &mut episode_rng(7, i)).unwrap();
        for item in e.support.iter().chain(&e.query) {
            if e.classes[item.label] == 0 {
                counts[item.sample] += 1;
            }
        }
    }
    let p = chi_square_p(&counts);
    assert!(p > 0.01, "p = {p}");
}

#[test]
fn episode_streams_are_reproducible_and_distinct() {
    let t = table(&[20; 8]);
    let a = sample_episode(&t, 5, 1, 5, &mut episode_rng(3, 17)).unwrap();
    let b = sample_episode(&t, 5, 1, 5, &mut episode_rng(3, 17)).unwrap();
    assert_eq!(a, b);
    let distinct = (0..20)
        .map(|i| sample_episode(&t, 5, 1, 5, &mut episode_rng(3, i)).unwrap())
        .collect::<Vec<_>>();
    assert!(distinct.windows(2).any(|w| w[0] != w[1]));
}

proptest! {
    #[test]
    fn support_and_query_are_disjoint(
        sizes in proptest::collection::vec(2usize..12, 2..8),
        seed in any::<u64>(),
        shot in 1usize..3,
    ) {
        let t = table(&sizes);
        let query = 1;
        let eligible = sizes.iter().filter(|&&n| n >= shot + query).count();
        prop_assume!(eligible >= 2);
        let way = 2 + (seed as usize) % (eligible - 1);
        let e = sample_episode(&t, way, shot, query, &mut episode_rng(seed, 0)).unwrap();
        prop_assert_eq!(e.support.len(), way * shot);
        prop_assert_eq!(e.query.len(), way * query);
        let support: BTreeSet<usize> = e.support.iter().map(|i| i.sample).collect();
        let queries: BTreeSet<usize> = e.query.iter().map(|i| i.sample).collect();
        prop_assert_eq!(support.len(), e.support.len());
        prop_assert_eq!(queries.len(), e.query.len());
        prop_assert!(support.is_disjoint(&queries));
        for item in e.support.iter().chain(&e.query) {
            prop_assert!(t.members[e.classes[item.label]].contains(&item.sample));
        }
        let classes: BTreeSet<usize> = e.classes.iter().copied().collect();
        prop_assert_eq!(classes.len(), way);
    }
}
