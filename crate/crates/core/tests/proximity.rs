use gapcf::data::{Dataset, FeatureSchema};
use gapcf::forest::{fit, ForestParams};
use gapcf::proximity::{euclidean_distance, ReferenceWeights, RfGap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn blobs(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..n {
        let c = i % 3;
        rows.push(
            (0..4)
                .map(|f| rng.random_range(-1.0..1.0) + if f == c { 1.5 } else { 0.0 })
                .collect(),
        );
        labels.push(c);
    }
    let names = (0..4).map(|f| format!("f{f}")).collect();
    Dataset::from_rows(
        &rows,
        labels,
        vec!["a".into(), "b".into(), "c".into()],
        FeatureSchema::numeric(names),
    )
    .unwrap()
}

fn params() -> ForestParams {
    ForestParams {
        n_trees: 60,
        max_depth: 4,
        seed: 11,
        ..ForestParams::default()
    }
}

#[test]
fn rows_are_stochastic_and_match_oob_votes() {
    let train = blobs(150, 1);
    let forest = fit(&train, &params()).unwrap();
    let gap = RfGap::new(&forest, &train, ReferenceWeights::Bootstrap).unwrap();
    let mut checked = 0;
    for i in 0..train.n_rows() {
        let Ok(row) = gap.row(i) else { continue };
        checked += 1;
        assert_eq!(row[i], 0.0);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9, "row {i}");
        let oob = forest.oob_predict_proba(i, train.row(i)).unwrap();
        for (c, &p_oob) in oob.iter().enumerate() {
            let vote: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| train.label(j) == c)
                .map(|(_, p)| p)
                .sum();
            assert!((vote - p_oob).abs() < 1e-9, "row {i} class {c}: {vote} vs {p_oob}");
        }
    }
    // 60 trees: every row is out-of-bag somewhere with overwhelming probability
    assert_eq!(checked, train.n_rows());
}

#[test]
fn query_rows_average_over_all_trees() {
    let train = blobs(90, 2);
    let forest = fit(&train, &params()).unwrap();
    let gap = RfGap::new(&forest, &train, ReferenceWeights::Bootstrap).unwrap();
    let test = blobs(20, 3);
    for x in test.rows() {
        let row = gap.query_row(x).unwrap();
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        // class votes equal the full-forest probability vector
        let proba = forest.predict_proba(x).unwrap();
        for (c, &p) in proba.iter().enumerate() {
            let vote: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| train.label(j) == c)
                .map(|(_, p)| p)
                .sum();
            assert!((vote - p).abs() < 1e-9);
        }
        let d = gap.distances_from_query(x).unwrap();
        for (p, d) in row.iter().zip(&d) {
            match d.value() {
                Some(v) => assert!((v - 2.0 / p).abs() <= 1e-9 * v),
                None => assert_eq!(*p, 0.0),
            }
        }
    }
}

#[test]
fn unit_weighted_rows_over_a_test_reference() {
    let train = blobs(90, 4);
    let forest = fit(&train, &params()).unwrap();
    let test = blobs(40, 5);
    let gap = RfGap::new(&forest, &test, ReferenceWeights::Unit).unwrap();
    let m = gap.matrix(4096).unwrap();
    for i in 0..test.n_rows() {
        if m.no_oob.contains(&i) {
            continue;
        }
        assert_eq!(m.get(i, i), 0.0);
        assert!((m.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        let col = gap.column(i).unwrap();
        for j in 0..test.n_rows() {
            if !m.no_oob.contains(&j) {
                assert!((col[j] - m.get(j, i)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn euclidean_matches_hand_computation() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: Vec<Vec<f64>> = (0..3)
        .map(|_| (0..3).map(|_| rng.random_range(-5.0..5.0)).collect())
        .collect();
    let ds = Dataset::from_rows(
        &rows,
        vec![0; 3],
        vec!["k".into()],
        FeatureSchema::numeric(vec!["a".into(), "b".into(), "c".into()]),
    )
    .unwrap();
    let d = euclidean_distance(&ds).unwrap();
    for i in 0..3 {
        for j in 0..3 {
            let (a, b) = (&rows[i], &rows[j]);
            let hand = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
            assert!((d.get(i, j).as_f64() - hand).abs() < 1e-12);
        }
    }
}
