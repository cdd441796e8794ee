use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::Context;
use gapcf::counterfactual::{CounterfactualSearch, Query, UtilityKind, UtilitySpec};
use gapcf::data::Dataset;
use gapcf::embedding::{mds_embed, write_coords};
use gapcf::evaluation::{
    explanation_sets, import_attributions, rankers, run_flip_experiment, sparsity_study, AttributionSet, FlipOptions,
    Strategy,
};
use gapcf::forest::{argmax, fit, Forest};
use gapcf::proximity::{metrics, write_dsv, BackendContext, Distance, DistanceBackend, DistanceMatrix, MatrixBackend};
use gapcf::tally::{write_grid, write_records, PartitionSet, PartitionTally};
use serde_json::{json, Value};

use crate::config::{config_err, ReferenceChoice, RunConfig};
use crate::manifest::Manifest;
use crate::pipeline::{check_instance, json, load_forest, utility_spec, weights_for, write_output, Data};

fn start(command: &str, cfg: &RunConfig) -> anyhow::Result<(Manifest, Data)> {
    let mut manifest = Manifest::new(command, cfg);
    for p in cfg.dataset.input_files() {
        manifest.input(p)?;
    }
    let data = Data::load(cfg)?;
    if let Some(w) = cfg.tally.grid_width {
        let d = data.train.n_features();
        if w == 0 || !d.is_multiple_of(w) {
            return Err(config_err(format!(
                "tally.grid_width = {w} does not divide the {d} features"
            )));
        }
    }
    Ok((manifest, data))
}

fn forest_path(cfg: &RunConfig, forest: Option<PathBuf>) -> PathBuf {
    forest.unwrap_or_else(|| cfg.forest_path())
}

fn dist_json(d: Distance) -> Value {
    match d.value() {
        Some(v) => json!(v),
        None => json!("inf"),
    }
}

fn backend<'a>(
    cfg: &RunConfig,
    forest: &'a Forest,
    reference: &'a Dataset,
) -> anyhow::Result<Box<dyn DistanceBackend + 'a>> {
    let ctx = BackendContext {
        forest,
        reference,
        weights: weights_for(cfg.search.reference),
        standardize: cfg.search.standardize,
    };
    Ok((metrics().get(&cfg.search.metric)?)(&ctx)?)
}

fn utility_json(spec: &UtilitySpec, forest: &Forest) -> Value {
    match spec.kind {
        UtilityKind::ClassProbability { target } => {
            json!({ "kind": "class_probability", "target": forest.classes()[target], "delta": spec.delta })
        }
        UtilityKind::ClassFlip => json!({ "kind": "class_flip", "delta": spec.delta }),
    }
}

fn tally_outputs(
    cfg: &RunConfig,
    manifest: &mut Manifest,
    stem: &str,
    tally: &PartitionTally,
    names: &[String],
) -> anyhow::Result<()> {
    let mut csv = Vec::new();
    write_records(tally, names, cfg.tally.top, &mut csv)?;
    write_output(cfg, manifest, &format!("{stem}.csv"), &csv)?;
    if let Some(w) = cfg.tally.grid_width {
        let mut grid = Vec::new();
        write_grid(tally, w, &mut grid)?;
        write_output(cfg, manifest, &format!("{stem}_grid.txt"), &grid)?;
    }
    Ok(())
}

fn accuracy(forest: &Forest, data: &Dataset) -> anyhow::Result<Option<f64>> {
    if data.is_empty() {
        return Ok(None);
    }
    let mut hits = 0;
    for (i, x) in data.rows().enumerate() {
        hits += usize::from(forest.predict(x)? == data.label(i));
    }
    Ok(Some(hits as f64 / data.n_rows() as f64))
}

fn fmt_acc(a: Option<f64>) -> String {
    a.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

pub fn train(cfg: &RunConfig, forest_out: Option<PathBuf>) -> anyhow::Result<()> {
    let (mut manifest, data) = start("train", cfg)?;
    let params = cfg.forest_params();
    let forest = fit(&data.train, &params)?;

    let path = forest_path(cfg, forest_out);
    let text = forest.to_json()?;
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
    let key = path
        .file_name()
        .map_or_else(|| path.display().to_string(), |f| f.to_string_lossy().into_owned());
    manifest.output(&key, text.as_bytes());

    let mut oob_hits = 0;
    let mut oob_n = 0;
    for (i, x) in data.train.rows().enumerate() {
        if forest.oob_trees(i).next().is_some() {
            oob_n += 1;
            oob_hits += usize::from(argmax(&forest.oob_predict_proba(i, x)?) == data.train.label(i));
        }
    }
    let train_acc = accuracy(&forest, &data.train)?;
    let test_acc = accuracy(&forest, &data.test)?;

    let mut r = String::new();
    writeln!(r, "train rows: {}", data.train.n_rows())?;
    writeln!(r, "test rows: {}", data.test.n_rows())?;
    writeln!(r, "features: {}", data.train.n_features())?;
    writeln!(r, "classes: {}", forest.classes().join(", "))?;
    writeln!(r, "trees: {}", params.n_trees)?;
    writeln!(r, "max depth: {}", params.max_depth)?;
    writeln!(
        r,
        "features per split: {}",
        params.features_per_split.resolve(data.train.n_features())
    )?;
    writeln!(r, "train accuracy: {}", fmt_acc(train_acc))?;
    writeln!(
        r,
        "oob accuracy: {}",
        fmt_acc((oob_n > 0).then(|| oob_hits as f64 / oob_n as f64))
    )?;
    writeln!(r, "test accuracy: {}", fmt_acc(test_acc))?;
    if forest.is_degenerate() {
        writeln!(r, "note: degenerate forest (every tree is a single leaf)")?;
    }
    write_output(cfg, &mut manifest, "train_report.txt", r.as_bytes())?;
    print!("{r}");
    manifest.finish()
}

pub fn explain(cfg: &RunConfig, forest: Option<PathBuf>, instance: usize) -> anyhow::Result<()> {
    let (mut manifest, data) = start("explain", cfg)?;
    manifest.argument("instance", instance);
    let forest = load_forest(&forest_path(cfg, forest), &mut manifest)?;
    check_instance(&data.test, instance)?;
    let x = data.test.row(instance);
    let reference = data.reference(cfg.search.reference);
    let b = backend(cfg, &forest, reference)?;
    let search = CounterfactualSearch::new(&forest, reference, b.as_ref())?;
    let spec = utility_spec(cfg, &forest)?;
    let query = match cfg.search.reference {
        ReferenceChoice::Test => Query::Reference(instance),
        ReferenceChoice::Train => Query::point(&forest, x)?,
    };
    let result = search.find(&query, &spec)?;
    let cf = reference.row(result.counterfactual_index);
    let tally = PartitionSet::new(&forest).tally_segment(cf, x, cfg.tally.mode)?;

    let classes = forest.classes();
    let record = json!({
        "instance": instance,
        "instance_label": classes[data.test.label(instance)],
        "instance_proba": forest.predict_proba(x)?,
        "reference": cfg.search.reference.name(),
        "metric": result.metric,
        "utility": utility_json(&spec, &forest),
        "counterfactual_index": result.counterfactual_index,
        "counterfactual_label": classes[reference.label(result.counterfactual_index)],
        "counterfactual_proba": forest.predict_proba(cf)?,
        "distance": dist_json(result.distance),
        "utility_gain": result.utility_gain,
        "tally_mode": cfg.tally.mode.name(),
        "tally_nonzero": tally.nonzero(),
        "n_features": tally.len(),
    });
    let stem = format!("explain_{instance}");
    write_output(cfg, &mut manifest, &format!("{stem}.json"), &json(&record)?)?;
    tally_outputs(
        cfg,
        &mut manifest,
        &format!("{stem}_tally"),
        &tally,
        data.test.schema().feature_names(),
    )?;
    println!(
        "instance {instance}: counterfactual {} at distance {} (gain {:.4}), {} features crossed",
        result.counterfactual_index,
        result.distance,
        result.utility_gain,
        tally.nonzero()
    );
    manifest.finish()
}

pub fn trajectory(cfg: &RunConfig, forest: Option<PathBuf>, instance: usize) -> anyhow::Result<()> {
    let (mut manifest, data) = start("trajectory", cfg)?;
    manifest.argument("instance", instance);
    manifest.argument(
        "stop",
        serde_json::to_value(cfg.search.stop)?.as_str().unwrap_or_default(),
    );
    let forest = load_forest(&forest_path(cfg, forest), &mut manifest)?;
    check_instance(&data.test, instance)?;
    let x = data.test.row(instance);
    let reference = data.reference(cfg.search.reference);
    let b = backend(cfg, &forest, reference)?;
    let search = CounterfactualSearch::new(&forest, reference, b.as_ref())?;
    let spec = utility_spec(cfg, &forest)?;
    let query = match cfg.search.reference {
        ReferenceChoice::Test => Query::Reference(instance),
        ReferenceChoice::Train => Query::point(&forest, x)?,
    };
    let t = search.trajectory(&query, &spec, cfg.search.stop)?;

    let partitions = PartitionSet::new(&forest);
    let mut points: Vec<&[f64]> = vec![x];
    let skip = usize::from(t.start.is_some());
    points.extend(t.indices[skip..].iter().map(|&j| reference.row(j)));
    let tally = if points.len() > 1 {
        partitions.tally_trajectory(&points, cfg.tally.mode)?
    } else {
        PartitionTally::zeros(x.len(), cfg.tally.mode)
    };
    let (from_null, from_mean) = partitions.null_and_mean_tallies(x, &data.train, cfg.tally.mode)?;

    let record = json!({
        "instance": instance,
        "reference": cfg.search.reference.name(),
        "metric": t.metric,
        "utility": utility_json(&spec, &forest),
        "stop_rule": cfg.search.stop,
        "stop_reason": t.stop,
        "start_utility": t.start_utility,
        "indices": t.indices,
        "utilities": t.utilities,
        "steps": t.steps(),
        "end": t.end(),
        "end_proba": t.end().map(|e| forest.predict_proba(reference.row(e))).transpose()?,
        "tally_mode": cfg.tally.mode.name(),
        "tally_nonzero": tally.nonzero(),
        "null_tally_nonzero": from_null.nonzero(),
        "mean_tally_nonzero": from_mean.nonzero(),
    });
    let stem = format!("trajectory_{instance}");
    write_output(cfg, &mut manifest, &format!("{stem}.json"), &json(&record)?)?;
    let names = data.test.schema().feature_names();
    tally_outputs(cfg, &mut manifest, &format!("{stem}_tally"), &tally, names)?;
    tally_outputs(cfg, &mut manifest, &format!("{stem}_null_tally"), &from_null, names)?;
    tally_outputs(cfg, &mut manifest, &format!("{stem}_mean_tally"), &from_mean, names)?;
    println!(
        "instance {instance}: {} steps, utility {:.4} -> {:.4}, {:?}",
        t.steps(),
        t.start_utility,
        t.utilities.last().copied().unwrap_or(t.start_utility),
        t.stop
    );
    manifest.finish()
}

fn restrict(set: &AttributionSet, ids: &[usize]) -> anyhow::Result<AttributionSet> {
    let rows = ids
        .iter()
        .map(|&id| {
            set.row_for(id)
                .map(<[f64]>::to_vec)
                .ok_or_else(|| anyhow::anyhow!("imported attributions have no row for instance {id}"))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(AttributionSet::new(
        set.source,
        set.feature_names.clone(),
        Some(ids.to_vec()),
        rows,
    )?)
}

pub fn evaluate(cfg: &RunConfig, forest: Option<PathBuf>) -> anyhow::Result<()> {
    let (mut manifest, mut data) = start("evaluate", cfg)?;
    let forest = load_forest(&forest_path(cfg, forest), &mut manifest)?;
    if let Some(n) = cfg.evaluate.test_limit {
        data.test = data.test.subset(&(0..data.test.n_rows().min(n)).collect::<Vec<_>>());
    }
    let test = &data.test;
    let imported = match &cfg.evaluate.attributions {
        Some(p) => {
            manifest.input(p)?;
            Some(import_attributions(p, test.schema(), None).with_context(|| format!("importing {}", p.display()))?)
        }
        None => None,
    };
    let reference = data.reference(cfg.search.reference);
    let opts = FlipOptions {
        weights: weights_for(cfg.search.reference),
        standardize: cfg.search.standardize,
        mode: cfg.tally.mode,
        group_mode: cfg.evaluate.group_mode,
    };
    let report = run_flip_experiment(
        &forest,
        test,
        reference,
        &cfg.evaluate.strategies,
        &metrics(),
        &rankers(),
        imported.as_ref(),
        &opts,
    )?;
    let mut table = Vec::new();
    report.write_table(&mut table)?;
    write_output(cfg, &mut manifest, "flip_curves.csv", &table)?;

    let lead = Strategy::new("rf_gap", "partitions");
    let mut dominance = serde_json::Map::new();
    if report.curve(&lead).is_some() {
        for s in cfg.evaluate.strategies.iter().filter(|s| **s != lead) {
            if let Some(f) = report.dominance(&lead, s) {
                dominance.insert(s.to_string(), json!(f));
            }
        }
    }
    let curves: Vec<Value> = report
        .curves
        .iter()
        .map(|c| {
            json!({
                "strategy": c.strategy,
                "n_evaluated": c.n_evaluated,
                "n_excluded": c.n_excluded,
                "flip_rate_k0": c.flip_rate.first(),
                "flip_rate_all": c.flip_rate.last(),
            })
        })
        .collect();
    let summary = json!({
        "n_test": test.n_rows(),
        "reference": cfg.search.reference.name(),
        "tally_mode": cfg.tally.mode.name(),
        "group_mode": cfg.evaluate.group_mode,
        "curves": curves,
        "dominance_of": lead,
        "dominance": dominance,
        "excluded": report.excluded,
    });
    write_output(cfg, &mut manifest, "flip_summary.json", &json(&summary)?)?;
    println!("flip curves over {} test rows:", test.n_rows());
    for c in &report.curves {
        println!(
            "  {}: evaluated {}, excluded {}",
            c.strategy, c.n_evaluated, c.n_excluded
        );
    }
    for (s, f) in &dominance {
        println!("  {lead} >= {s} at {:.1}% of k", 100.0 * f.as_f64().unwrap_or(0.0));
    }

    let n_sparse = cfg.evaluate.sparsity_instances.min(test.n_rows());
    if n_sparse > 0 {
        let ids: Vec<usize> = (0..n_sparse).collect();
        let queries = test.subset(&ids);
        let b = backend(cfg, &forest, reference)?;
        let search = CounterfactualSearch::new(&forest, reference, b.as_ref())?;
        let partitions = PartitionSet::new(&forest);
        let sets = explanation_sets(
            &forest,
            &partitions,
            &search,
            reference,
            &queries,
            &ids,
            cfg.evaluate.target,
            cfg.search.stop,
            cfg.tally.mode,
        )?;
        if sets.tallies.is_empty() {
            return Err(gapcf::Error::NoCounterfactual).context("no sparsity instance moved along its trajectory");
        }
        let study = sparsity_study(&sets.tallies, &sets.baseline)?;
        let kept = sets.tallies.instance_ids();
        let versus_imported = match &imported {
            Some(set) => Some(sparsity_study(&sets.tallies, &restrict(set, &kept)?)?),
            None => None,
        };
        let mean_steps =
            sets.trajectories.iter().map(|t| t.steps() as f64).sum::<f64>() / sets.trajectories.len() as f64;
        let record = json!({
            "metric": cfg.search.metric,
            "reference": cfg.search.reference.name(),
            "target": cfg.evaluate.target,
            "stop_rule": cfg.search.stop,
            "tally_mode": cfg.tally.mode.name(),
            "n_requested": n_sparse,
            "n_explained": kept.len(),
            "excluded": sets.excluded,
            "mean_steps": mean_steps,
            "versus_baseline": study,
            "versus_imported": versus_imported,
        });
        write_output(cfg, &mut manifest, "sparsity.json", &json(&record)?)?;
        for (name, set) in [
            ("sparsity_tallies.csv", &sets.tallies),
            ("sparsity_baseline.csv", &sets.baseline),
        ] {
            let mut out = Vec::new();
            set.write(&mut out)?;
            write_output(cfg, &mut manifest, name, &out)?;
        }
        println!(
            "sparsity over {} instances: tally {:.4}, baseline {:.4}, p = {:.3}",
            kept.len(),
            study.tally.mean,
            study.baseline.mean,
            study.p_value
        );
    }
    manifest.finish()
}

pub fn embed(cfg: &RunConfig, forest: Option<PathBuf>) -> anyhow::Result<()> {
    let (mut manifest, data) = start("embed", cfg)?;
    let forest = load_forest(&forest_path(cfg, forest), &mut manifest)?;
    let pool = data.reference(cfg.embed.points);
    let n = cfg.embed.limit.map_or(pool.n_rows(), |l| l.min(pool.n_rows()));
    if n > cfg.search.matrix_cap {
        return Err(config_err(format!(
            "{n} points exceed search.matrix_cap = {}; set embed.limit to subsample",
            cfg.search.matrix_cap
        )));
    }
    let idx: Vec<usize> = (0..n).collect();
    let points = pool.subset(&idx);
    // Training points keep their bootstrap weights by measuring against the
    // whole training set; test points form their own unit-weight reference.
    let source = match cfg.embed.points {
        ReferenceChoice::Train => &data.train,
        ReferenceChoice::Test => &points,
    };
    let ctx = BackendContext {
        forest: &forest,
        reference: source,
        weights: weights_for(cfg.embed.points),
        standardize: cfg.search.standardize,
    };
    let b = (metrics().get(&cfg.search.metric)?)(&ctx)?;
    let rows = idx
        .iter()
        .map(|&i| b.reference_distances(i))
        .collect::<gapcf::Result<Vec<_>>>()?;
    let dm = DistanceMatrix::from_fn(n, |a, c| if a == c { Distance::ZERO } else { rows[a][c] })?;
    let emb = mds_embed(&dm, cfg.embed.inf_cap_factor)?;

    let mut flags = vec![false; n];
    let mut traj = Value::Null;
    if let Some(s) = cfg.embed.trajectory_start {
        if s >= n {
            return Err(config_err(format!(
                "embed.trajectory_start {s} is out of range for {n} points"
            )));
        }
        let mb = MatrixBackend::new(cfg.search.metric.clone(), dm.clone());
        let search = CounterfactualSearch::new(&forest, &points, &mb)?;
        let t = search.trajectory(&Query::Reference(s), &utility_spec(cfg, &forest)?, cfg.search.stop)?;
        for &i in &t.indices {
            flags[i] = true;
        }
        traj = json!({ "indices": t.indices, "utilities": t.utilities, "stop_reason": t.stop });
    }

    let labels: Vec<String> = (0..n).map(|i| forest.classes()[points.label(i)].clone()).collect();
    let mut coords = Vec::new();
    write_coords(&emb, &idx, &labels, &flags, &mut coords)?;
    write_output(cfg, &mut manifest, "coords.csv", &coords)?;
    let mut dist = Vec::new();
    write_dsv(&dm, ',', &mut dist)?;
    write_output(cfg, &mut manifest, "distances.csv", &dist)?;
    let summary = json!({
        "points": cfg.embed.points.name(),
        "n": n,
        "metric": cfg.search.metric,
        "inf_cap_factor": cfg.embed.inf_cap_factor,
        "infinite_pairs": (0..n).map(|a| (a + 1..n).filter(|&c| dm.get(a, c).is_infinite()).count()).sum::<usize>(),
        "eigenvalues": emb.eigenvalues,
        "stress": emb.stress,
        "discarded_mass": emb.discarded_mass,
        "trajectory": traj,
    });
    write_output(cfg, &mut manifest, "embed_summary.json", &json(&summary)?)?;
    println!(
        "embedded {n} points, stress {:.4}, discarded mass {:.4}",
        emb.stress, emb.discarded_mass
    );
    manifest.finish()
}
