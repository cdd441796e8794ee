mod support;

use gapcf::forest::{fit, ForestParams};
use gapcf::tally::{PartitionSet, TallyMode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn analytic_tallies_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut pairs = 0;
    let (mut crossings, mut restricted_away) = (0, 0);
    for case in 0..25 {
        let d = rng.random_range(2..=5);
        let data = support::grid_data(&mut rng, 60, d, 6, 2);
        let params = ForestParams {
            n_trees: rng.random_range(1..=20),
            max_depth: rng.random_range(1..=3),
            seed: case,
            ..ForestParams::default()
        };
        let forest = fit(&data, &params).unwrap();
        let set = PartitionSet::new(&forest);
        for _ in 0..8 {
            let from: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..6.0)).collect();
            let mut to: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..6.0)).collect();
            // hold some coordinates fixed along the segment
            for f in 0..d {
                if rng.random_bool(0.25) {
                    to[f] = from[f];
                }
            }
            let analytic = set.tally_segment(&from, &to, TallyMode::RegionRestricted).unwrap();
            assert_eq!(
                analytic.counts,
                support::brute_force_tally(&forest, &from, &to),
                "{from:?} -> {to:?}"
            );
            let global = set.tally_segment(&from, &to, TallyMode::GlobalThresholds).unwrap();
            assert_eq!(global.counts, support::brute_force_global(&forest, &from, &to));
            let reversed = set.tally_segment(&to, &from, TallyMode::RegionRestricted).unwrap();
            assert!(reversed.counts.iter().zip(&analytic.counts).all(|(a, b)| *a == -b));
            for f in 0..d {
                if from[f] == to[f] {
                    assert_eq!(analytic.counts[f], 0);
                }
            }
            crossings += analytic.counts.iter().map(|c| c.abs()).sum::<i64>();
            restricted_away += global
                .counts
                .iter()
                .zip(&analytic.counts)
                .filter(|(g, a)| g != a)
                .count();
            pairs += 1;
        }
    }
    assert!(pairs >= 100);
    // the comparison must exercise real crossings, including partitions that
    // lie outside their cell along the segment
    println!("{pairs} pairs, {crossings} crossings, {restricted_away} restricted components");
    assert!(crossings > 200 && restricted_away > 10);
}

#[test]
fn collinear_path_is_additive_in_global_mode() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = support::grid_data(&mut rng, 80, 3, 5, 2);
    let forest = fit(
        &data,
        &ForestParams {
            n_trees: 15,
            max_depth: 3,
            ..ForestParams::default()
        },
    )
    .unwrap();
    let set = PartitionSet::new(&forest);
    for _ in 0..50 {
        let a: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..5.0)).collect();
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..5.0)).collect();
        let s = rng.random_range(0.05..0.95);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + s * (y - x)).collect();
        let pts: [&[f64]; 3] = [&a, &mid, &b];
        let path = set.tally_trajectory(&pts, TallyMode::GlobalThresholds).unwrap();
        let direct = set.tally_segment(&b, &a, TallyMode::GlobalThresholds).unwrap();
        assert_eq!(path.counts, direct.counts);
    }
}

#[test]
fn unused_features_never_tally_and_null_mean_vanish() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = support::grid_data(&mut rng, 80, 4, 5, 2);
    let forest = fit(
        &data,
        &ForestParams {
            n_trees: 10,
            max_depth: 2,
            ..ForestParams::default()
        },
    )
    .unwrap();
    let set = PartitionSet::new(&forest);
    let unused: Vec<usize> = set
        .per_feature()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c == 0)
        .map(|(f, _)| f)
        .collect();
    for _ in 0..30 {
        let a: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..5.0)).collect();
        let b: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..5.0)).collect();
        let t = set.tally_segment(&a, &b, TallyMode::RegionRestricted).unwrap();
        assert!(unused.iter().all(|&f| t.counts[f] == 0));
    }
    let (null, _) = set
        .null_and_mean_tallies(&[0.0; 4], &data, TallyMode::RegionRestricted)
        .unwrap();
    assert_eq!(null.nonzero(), 0);
    let (_, mean) = set
        .null_and_mean_tallies(&data.feature_means(), &data, TallyMode::RegionRestricted)
        .unwrap();
    assert_eq!(mean.nonzero(), 0);
}
