mod support;

use gapcf::counterfactual::{CounterfactualSearch, Query, StopRule, UtilitySpec};
use gapcf::forest::{fit, ForestParams};
use gapcf::proximity::{ReferenceWeights, RfGapBackend};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn random_toy_trajectories_obey_hill_climbing() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for case in 0..1000 {
        if let Err(e) = support::random_trajectory_case(&mut rng) {
            panic!("case {case}: {e}");
        }
    }
}

#[test]
fn rf_gap_trajectory_reaches_target_class() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let data = support::grid_data(&mut rng, 200, 4, 8, 3);
    let forest = fit(
        &data,
        &ForestParams {
            n_trees: 100,
            max_depth: 4,
            ..ForestParams::default()
        },
    )
    .unwrap();
    let backend = RfGapBackend::new(&forest, &data, ReferenceWeights::Bootstrap).unwrap();
    let search = CounterfactualSearch::new(&forest, &data, &backend).unwrap();
    for i in 0..20 {
        let spec = UtilitySpec::class_probability((search.predicted(i) + 1) % 3, 0.0);
        let t = search
            .trajectory(&Query::Reference(i), &spec, StopRule::Convergence)
            .unwrap();
        assert!(t.utilities.windows(2).all(|w| w[1] > w[0]));
        // converged: no reference point has higher target probability
        let last = *t.indices.last().unwrap();
        let target = match spec.kind {
            gapcf::counterfactual::UtilityKind::ClassProbability { target } => target,
            _ => unreachable!(),
        };
        let best = (0..data.n_rows()).map(|j| search.proba(j)[target]).fold(0.0, f64::max);
        assert_eq!(search.proba(last)[target], best);
    }
}
