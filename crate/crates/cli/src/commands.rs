use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};
use simtrace::calibration::{confidence_from_logits, ece, BinningSpec};
use simtrace::correlate::{correlate, project_metric, CorrelateOptions, OutlierRule, PairedObservations};
use simtrace::knn::{knn_evaluate, KnnConfig, Weighting};
use simtrace::similarity::{cka_report, CkaOptions, Estimator, Kernel};
use simtrace::simspace::{space_filter, LayerSelector, ModelSnapshot, SpaceSpec};
use simtrace::tensor_io::{
    load_manifest, npy, pooled, read_labels, Pooling, read_labels_csv, read_logits, CheckpointEntry, PredictionSet,
    RunManifest,
};
use simtrace::trajectory::{
    compute_trajectory, final_distribution, histogram, parse_records_csv, summarize, write_records_csv,
    SimilarityRecord,
};
use simtrace::{Error, Result};

use crate::output::{num, value, Envelope, Table};
use crate::{
    CkaArgs, Cli, Command, CorrArgs, EceArgs, EstimatorArg, KernelArg, KnnArgs, OutlierArg, SimilarityArgs,
    SpaceArgs, TrajArgs, ValidateArgs,
};

pub struct Output {
    pub envelope: Envelope,
    pub table: Table,
}

pub fn run(cli: &Cli) -> Result<Output> {
    match &cli.command {
        Command::Cka(a) => cmd_cka(cli, a),
        Command::Ece(a) => cmd_ece(a),
        Command::Knn(a) => cmd_knn(a),
        Command::Space(a) => cmd_space(cli, a),
        Command::Traj(a) => cmd_traj(cli, a),
        Command::Corr(a) => cmd_corr(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn resolved(p: &Path) -> String {
    std::fs::canonicalize(p)
        .unwrap_or_else(|_| p.to_path_buf())
        .display()
        .to_string()
}

fn pick(m: &RunManifest, epoch: Option<u64>) -> Result<&CheckpointEntry> {
    match epoch {
        Some(e) => m.checkpoint(e),
        None => Ok(m.last_checkpoint()),
    }
}

fn describe(m: &RunManifest, ck: &CheckpointEntry) -> Value {
    json!({ "run_id": m.run_id, "dataset_id": m.dataset_id, "checkpoint": ck.id, "epoch": ck.epoch })
}

fn cka_options(sim: &SimilarityArgs, seed: u64, n: usize, warnings: &mut Vec<String>) -> Result<CkaOptions> {
    let kernel = match (sim.kernel, sim.bandwidth) {
        (KernelArg::Linear, None) => Kernel::Linear,
        (KernelArg::Linear, Some(_)) => {
            return Err(Error::InvalidArgument("--bandwidth applies only to --kernel rbf".into()))
        }
        (KernelArg::Rbf, bandwidth) => Kernel::Rbf { bandwidth },
    };
    let estimator = match sim.estimator {
        EstimatorArg::Biased => Estimator::Biased,
        EstimatorArg::Unbiased => Estimator::Unbiased,
    };
    let opts = CkaOptions {
        kernel,
        estimator,
        minibatch: sim.batch,
        seed,
    };
    let (opts, warning) = opts.for_samples(n);
    warnings.extend(warning);
    Ok(opts)
}

fn sim_inputs(sim: &SimilarityArgs, seed: u64) -> Value {
    json!({
        "layer": sim.layer.to_string(),
        "kernel": format!("{:?}", sim.kernel).to_lowercase(),
        "bandwidth": sim.bandwidth,
        "estimator": format!("{:?}", sim.estimator).to_lowercase(),
        "batch": sim.batch,
        "pooling": sim.pooling.to_string(),
        "seed": seed,
    })
}

fn dataset_warning(reference: &RunManifest, other: &RunManifest, warnings: &mut Vec<String>) {
    if reference.dataset_id != other.dataset_id {
        warnings.push(format!(
            "run {} uses dataset {:?}, reference uses {:?}",
            other.run_id, other.dataset_id, reference.dataset_id
        ));
    }
}

fn cmd_cka(cli: &Cli, a: &CkaArgs) -> Result<Output> {
    let rm = load_manifest(&a.reference)?;
    let cm = load_manifest(&a.cand)?;
    let rck = pick(&rm, a.ref_epoch)?;
    let cck = pick(&cm, a.cand_epoch)?;
    let rs = ModelSnapshot::load(&rm, rck, a.sim.pooling)?;
    let cs = ModelSnapshot::load(&cm, cck, a.sim.pooling)?;
    if rs.sample_ids() != cs.sample_ids() {
        return Err(Error::SampleMismatch);
    }
    let mut warnings = Vec::new();
    dataset_warning(&rm, &cm, &mut warnings);
    let opts = cka_options(&a.sim, cli.seed, rs.sample_ids().len(), &mut warnings)?;

    let mut layers = Vec::new();
    let mut table = Table::new(&["layer_id", "cka", "raw", "batches", "clamped"]);
    let mut values = Vec::new();
    for layer in a.sim.layer.resolve(&rs)? {
        let r = cka_report(rs.layer(&layer)?, cs.layer(&layer)?, &opts)?;
        if r.clamped {
            warnings.push(format!(
                "layer {layer}: unbiased estimate {} clamped to {}",
                num(r.raw),
                num(r.value)
            ));
        }
        table.push(vec![
            layer.clone(),
            num(r.value),
            num(r.raw),
            r.batches.to_string(),
            r.clamped.to_string(),
        ]);
        layers.push(json!({
            "layer_id": layer,
            "cka": r.value,
            "raw": r.raw,
            "batches": r.batches,
            "clamped": r.clamped,
        }));
        values.push(r.value);
    }
    let aggregate = values.iter().sum::<f64>() / values.len() as f64;
    let inputs = json!({
        "ref": resolved(&a.reference),
        "ref_epoch": a.ref_epoch,
        "cand": resolved(&a.cand),
        "cand_epoch": a.cand_epoch,
        "similarity": sim_inputs(&a.sim, cli.seed),
    });
    let result = json!({
        "reference": describe(&rm, rck),
        "candidate": describe(&cm, cck),
        "options": value(&opts),
        "layers": layers,
        "value": aggregate,
    });
    Ok(Output {
        envelope: Envelope::new("cka", inputs, result, warnings),
        table,
    })
}

fn read_label_file(path: &Path) -> Result<Vec<usize>> {
    if path.extension().and_then(|e| e.to_str()) == Some("csv") {
        Ok(read_labels_csv(path)?.into_iter().map(|(_, l)| l).collect())
    } else {
        read_labels(path)
    }
}

fn predictions_from_knn_output(path: &Path) -> Result<PredictionSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let p = doc
        .pointer("/result/predictions")
        .ok_or_else(|| Error::Parse(format!("{}: no result.predictions field", path.display())))?;
    let raw: PredictionSet =
        serde_json::from_value(p.clone()).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    // re-run the constructor checks on untrusted input
    PredictionSet::new(
        raw.confidence().to_vec(),
        raw.predicted().to_vec(),
        raw.label().to_vec(),
        raw.n_classes(),
    )
}

fn cmd_ece(a: &EceArgs) -> Result<Output> {
    let (predictions, source) = if let Some(path) = &a.manifest {
        let m = load_manifest(path)?;
        let ck = pick(&m, a.epoch)?;
        let p = m
            .load_predictions(ck)?
            .ok_or_else(|| Error::MissingPredictions(ck.id.clone()))?;
        (p, json!({ "manifest": resolved(path), "epoch": ck.epoch, "checkpoint": ck.id }))
    } else if let (Some(logits), Some(labels)) = (&a.logits, &a.labels) {
        let l = read_logits(logits)?;
        let y = read_label_file(labels)?;
        (
            confidence_from_logits(l.view(), &y)?,
            json!({ "logits": resolved(logits), "labels": resolved(labels) }),
        )
    } else {
        let path = a.knn_result.as_ref().expect("clap enforces one source");
        (predictions_from_knn_output(path)?, json!({ "knn_result": resolved(path) }))
    };
    let spec = BinningSpec {
        k_bins: a.bins,
        scheme: a.scheme,
        ..BinningSpec::default()
    };
    let report = ece(&predictions, &spec)?;
    let mut table = Table::new(&["bin", "lower", "upper", "count", "accuracy", "confidence"]);
    for (i, b) in report.bins.iter().enumerate() {
        table.push(vec![
            i.to_string(),
            num(b.lower),
            num(b.upper),
            b.count.to_string(),
            num(b.accuracy),
            num(b.confidence),
        ]);
    }
    let mut result = value(&report);
    if let Value::Object(map) = &mut result {
        map.insert("accuracy".into(), json!(predictions.accuracy()));
        map.insert("max_gap".into(), json!(report.max_gap()));
    }
    let inputs = json!({ "source": source, "bins": a.bins, "scheme": value(&a.scheme) });
    Ok(Output {
        envelope: Envelope::new("ece", inputs, result, Vec::new()),
        table,
    })
}

fn single_layer(selector: &LayerSelector, ck: &CheckpointEntry) -> Result<String> {
    match selector {
        LayerSelector::Final => Ok(ck.layers.keys().last().expect("manifests have layers").clone()),
        LayerSelector::Named(n) => Ok(n.clone()),
        other => Err(Error::InvalidArgument(format!(
            "k-NN needs a single layer, got selector {other}"
        ))),
    }
}

fn cmd_knn(a: &KnnArgs) -> Result<Output> {
    let gm = load_manifest(&a.gallery)?;
    let qm = load_manifest(&a.query)?;
    let gck = pick(&gm, a.gallery_epoch)?;
    let qck = pick(&qm, a.query_epoch)?;
    let layer = single_layer(&a.layer, gck)?;
    let g_raw = gm.load_layer(gck, &layer)?;
    let q_raw = qm.load_layer(qck, &layer)?;
    let gallery = pooled(&g_raw, a.pooling)?;
    let query = pooled(&q_raw, a.pooling)?;
    let labels_of = |m: &RunManifest| -> Result<Vec<usize>> {
        m.load_labels()?
            .ok_or_else(|| Error::InvalidArgument(format!("manifest {} has no labels", m.run_id)))
    };
    let gl = labels_of(&gm)?;
    let ql = labels_of(&qm)?;
    let cfg = KnnConfig {
        k: a.k,
        metric: a.metric,
        weighting: if a.uniform {
            Weighting::Uniform
        } else {
            Weighting::SoftmaxTemperature { tau: a.tau }
        },
    };
    let eval = knn_evaluate(&gallery, &gl, &query, &ql, &cfg)?;
    let calib = ece(&eval.predictions, &BinningSpec::default())?;

    // token layers: score both reductions so they can be compared
    let mut by_pooling = Vec::new();
    if g_raw.pooling() == Pooling::RawTokens && q_raw.pooling() == Pooling::RawTokens {
        for pooling in [Pooling::Cls, Pooling::PatchMean] {
            let (acc, e) = if pooling == a.pooling {
                (eval.accuracy, calib.ece)
            } else {
                let other = knn_evaluate(&pooled(&g_raw, pooling)?, &gl, &pooled(&q_raw, pooling)?, &ql, &cfg)?;
                (other.accuracy, ece(&other.predictions, &BinningSpec::default())?.ece)
            };
            by_pooling.push(json!({ "pooling": pooling.as_str(), "accuracy": acc, "ece": e }));
        }
    }

    let mut table = Table::new(&["query", "sample_id", "predicted", "label", "confidence"]);
    let p = &eval.predictions;
    for i in 0..p.len() {
        table.push(vec![
            i.to_string(),
            query.sample_ids()[i].clone(),
            p.predicted()[i].to_string(),
            p.label()[i].to_string(),
            num(p.confidence()[i]),
        ]);
    }
    let inputs = json!({
        "gallery": resolved(&a.gallery),
        "gallery_epoch": a.gallery_epoch,
        "query": resolved(&a.query),
        "query_epoch": a.query_epoch,
        "layer": a.layer.to_string(),
        "pooling": a.pooling.to_string(),
    });
    let result = json!({
        "gallery": describe(&gm, gck),
        "query": describe(&qm, qck),
        "layer_id": layer,
        "config": value(&cfg),
        "accuracy": eval.accuracy,
        "n_queries": eval.n_queries,
        "ece": calib.ece,
        "by_pooling": by_pooling,
        "predictions": value(&eval.predictions),
    });
    Ok(Output {
        envelope: Envelope::new("knn", inputs, result, eval.warnings),
        table,
    })
}

fn cmd_space(cli: &Cli, a: &SpaceArgs) -> Result<Output> {
    let rm = load_manifest(&a.reference)?;
    let rck = pick(&rm, a.ref_epoch)?;
    let reference = ModelSnapshot::load(&rm, rck, a.sim.pooling)?;
    let spec = SpaceSpec {
        eta: a.eta,
        epsilon: a.epsilon,
        dataset_id: rm.dataset_id.clone(),
        layer_selector: a.sim.layer.clone(),
        loss_source: a.loss,
    };
    spec.validate()?;
    let mut warnings = Vec::new();
    let opts = cka_options(&a.sim, cli.seed, reference.sample_ids().len(), &mut warnings)?;

    // (description, loaded snapshot or the reason it could not be used)
    let mut entries: Vec<(Value, Result<ModelSnapshot>)> = Vec::new();
    for path in &a.candidates {
        let m = load_manifest(path)?;
        let cks: Vec<&CheckpointEntry> = if a.all_checkpoints {
            m.checkpoints.iter().collect()
        } else {
            vec![m.last_checkpoint()]
        };
        for ck in cks {
            let snap = if m.dataset_id != spec.dataset_id {
                Err(Error::InvalidArgument(format!(
                    "dataset {:?} differs from the reference dataset {:?}",
                    m.dataset_id, spec.dataset_id
                )))
            } else {
                ModelSnapshot::load(&m, ck, a.sim.pooling)
            };
            entries.push((describe(&m, ck), snap));
        }
    }
    let loaded: Vec<ModelSnapshot> = entries.iter().filter_map(|(_, s)| s.as_ref().ok().cloned()).collect();
    let mut verdicts = space_filter(&reference, &loaded, &spec, &opts).into_iter();

    let mut rows = Vec::new();
    let mut members = 0;
    let mut table = Table::new(&["run_id", "checkpoint", "epoch", "m_value", "a_value", "member", "error"]);
    for (desc, snap) in &entries {
        let outcome = match snap {
            Ok(_) => verdicts
                .next()
                .expect("one verdict per loaded candidate")
                .map_err(|e| (e.name(), e.to_string())),
            Err(e) => Err((e.name(), e.to_string())),
        };
        let mut row = desc.as_object().cloned().unwrap_or_default();
        let cells = |row: &Map<String, Value>| -> Vec<String> {
            vec![
                row["run_id"].as_str().unwrap_or_default().to_owned(),
                row["checkpoint"].as_str().unwrap_or_default().to_owned(),
                row["epoch"].to_string(),
            ]
        };
        match outcome {
            Ok(v) => {
                members += usize::from(v.member);
                let mut c = cells(&row);
                c.extend([num(v.m_value), num(v.a_value), v.member.to_string(), String::new()]);
                table.push(c);
                row.insert("m_value".into(), json!(v.m_value));
                row.insert("a_value".into(), json!(v.a_value));
                row.insert("member".into(), json!(v.member));
            }
            Err((kind, message)) => {
                warnings.push(format!(
                    "candidate {}/{}: {message}",
                    row["run_id"].as_str().unwrap_or_default(),
                    row["checkpoint"].as_str().unwrap_or_default()
                ));
                let mut c = cells(&row);
                c.extend([String::new(), String::new(), String::new(), kind.to_owned()]);
                table.push(c);
                row.insert("error".into(), json!({ "kind": kind, "message": message }));
            }
        }
        rows.push(Value::Object(row));
    }
    let inputs = json!({
        "ref": resolved(&a.reference),
        "ref_epoch": a.ref_epoch,
        "candidates": a.candidates.iter().map(|p| resolved(p)).collect::<Vec<_>>(),
        "all_checkpoints": a.all_checkpoints,
        "eta": a.eta,
        "epsilon": a.epsilon,
        "loss": value(&a.loss),
        "similarity": sim_inputs(&a.sim, cli.seed),
    });
    let result = json!({
        "reference": describe(&rm, rck),
        "spec": value(&spec),
        "options": value(&opts),
        "candidates": rows,
        "n_members": members,
    });
    Ok(Output {
        envelope: Envelope::new("space", inputs, result, warnings),
        table,
    })
}

fn cmd_traj(cli: &Cli, a: &TrajArgs) -> Result<Output> {
    let rm = load_manifest(&a.reference)?;
    let rck = pick(&rm, a.ref_epoch)?;
    let reference = ModelSnapshot::load(&rm, rck, a.sim.pooling)?;
    let mut warnings = Vec::new();
    let opts = cka_options(&a.sim, cli.seed, reference.sample_ids().len(), &mut warnings)?;

    let mut records: Vec<SimilarityRecord> = Vec::new();
    for path in &a.runs {
        let m = load_manifest(path)?;
        dataset_warning(&rm, &m, &mut warnings);
        records.extend(compute_trajectory(&reference, &m, &a.sim.layer, &opts, a.sim.pooling)?);
    }
    let summary = summarize(&records, a.spread)?;
    let finals = final_distribution(&records)?;
    let mut by_layer: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for f in &finals {
        by_layer.entry(&f.layer_id).or_default().push(f.cka);
    }
    let hist: Vec<Value> = by_layer
        .iter()
        .map(|(layer, v)| json!({ "layer_id": layer, "bins": value(&histogram(v, a.hist_bins)) }))
        .collect();

    let mut csv = Vec::new();
    write_records_csv(&records, &mut csv)?;
    let inputs = json!({
        "ref": resolved(&a.reference),
        "ref_epoch": a.ref_epoch,
        "runs": a.runs.iter().map(|p| resolved(p)).collect::<Vec<_>>(),
        "spread": value(&a.spread),
        "hist_bins": a.hist_bins,
        "similarity": sim_inputs(&a.sim, cli.seed),
    });
    let result = json!({
        "reference": describe(&rm, rck),
        "options": value(&opts),
        "records": value(&records),
        "summary": value(&summary),
        "final": value(&finals),
        "histogram": hist,
    });
    Ok(Output {
        envelope: Envelope::new("traj", inputs, result, warnings),
        table: Table::raw(csv),
    })
}

fn cmd_corr(a: &CorrArgs) -> Result<Output> {
    let mut records = Vec::new();
    for path in &a.records {
        let bytes = std::fs::read(path).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                Error::MissingFile(path.clone())
            } else {
                Error::Io {
                    path: path.clone(),
                    source: e,
                }
            }
        })?;
        records.extend(parse_records_csv(&bytes)?);
    }
    let mut seen = BTreeSet::new();
    for r in &records {
        if !seen.insert((r.run_id.as_str(), r.epoch, r.layer_id.as_str())) {
            return Err(Error::DuplicateRecord {
                run_id: r.run_id.clone(),
                epoch: r.epoch,
                layer_id: r.layer_id.clone(),
            });
        }
    }
    if let Some(layer) = &a.layer {
        records.retain(|r| &r.layer_id == layer);
    }
    let layers: BTreeSet<&str> = records.iter().map(|r| r.layer_id.as_str()).collect();
    if layers.is_empty() {
        return Err(Error::EmptyRecords);
    }
    if layers.len() > 1 {
        return Err(Error::InvalidArgument(format!(
            "records hold layers {layers:?}; choose one with --layer"
        )));
    }
    let layer = layers.into_iter().next().unwrap().to_owned();
    if a.final_only {
        let mut last: BTreeMap<String, u64> = BTreeMap::new();
        for r in &records {
            let e = last.entry(r.run_id.clone()).or_insert(r.epoch);
            *e = (*e).max(r.epoch);
        }
        records.retain(|r| last[&r.run_id] == r.epoch);
    }

    let group_of: BTreeMap<String, String> = match &a.group_by {
        None => BTreeMap::new(),
        Some(key) => {
            let mut map = BTreeMap::new();
            for path in &a.manifests {
                let m = load_manifest(path)?;
                let v = m.metadata.get(key).ok_or_else(|| {
                    Error::InvalidArgument(format!("manifest {} has no metadata key {key:?}", m.run_id))
                })?;
                map.insert(m.run_id.clone(), v.clone());
            }
            map
        }
    };
    let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    let mut skipped = 0;
    for r in &records {
        let Some(m) = r.metric(&a.metric) else {
            skipped += 1;
            continue;
        };
        let g = if a.group_by.is_some() {
            group_of
                .get(&r.run_id)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("no manifest given for run {:?}", r.run_id)))?
        } else {
            "all".to_owned()
        };
        groups.entry(g).or_default().push((r.cka, m));
    }
    let mut warnings = Vec::new();
    if skipped > 0 {
        warnings.push(format!("{skipped} records have no {:?} value and were skipped", a.metric));
    }
    if groups.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let opts = CorrelateOptions {
        width: a.width,
        outliers: match a.outliers {
            OutlierArg::Iqr => OutlierRule::Iqr { k: a.iqr_k },
            OutlierArg::None => OutlierRule::None,
        },
        fit_on: a.fit_on.into(),
        weighted: a.weighted,
    };
    let mut out_groups = Vec::new();
    let mut table = Table::new(&["group", "center", "mean", "count"]);
    for (name, points) in groups {
        let obs = PairedObservations::new(points, a.metric.clone())?;
        let fit = correlate(&obs, &opts)?;
        warnings.extend(fit.warnings.iter().map(|w| format!("group {name}: {w}")));
        let projections: Vec<Value> = a
            .project
            .iter()
            .map(|&s| {
                let p = project_metric(&fit, s);
                if p.extrapolated {
                    warnings.push(format!("group {name}: similarity {} lies outside the fitted range", num(s)));
                }
                value(&p)
            })
            .collect();
        for iv in &fit.interval_means {
            table.push(vec![name.clone(), num(iv.center), num(iv.mean), iv.count.to_string()]);
        }
        out_groups.push(json!({ "group": name, "fit": value(&fit), "projections": projections }));
    }
    let inputs = json!({
        "records": a.records.iter().map(|p| resolved(p)).collect::<Vec<_>>(),
        "metric": a.metric,
        "layer": a.layer,
        "final_only": a.final_only,
        "group_by": a.group_by,
        "manifests": a.manifests.iter().map(|p| resolved(p)).collect::<Vec<_>>(),
        "options": value(&opts),
        "project": a.project,
    });
    let result = json!({ "metric": a.metric, "layer_id": layer, "groups": out_groups });
    Ok(Output {
        envelope: Envelope::new("corr", inputs, result, warnings),
        table,
    })
}

fn cmd_validate(a: &ValidateArgs) -> Result<Output> {
    let path: &PathBuf = &a.path;
    let mut table = Table::new(&["key", "value"]);
    let result = if path.extension().and_then(|e| e.to_str()) == Some("npy") {
        let arr = npy::read(path)?;
        table.push(vec!["kind".into(), "array".into()]);
        table.push(vec!["shape".into(), format!("{:?}", arr.shape)]);
        table.push(vec!["dtype".into(), arr.dtype.descr().into()]);
        json!({ "kind": "array", "shape": arr.shape, "dtype": arr.dtype.descr() })
    } else {
        let m = load_manifest(path)?;
        let s = m.validate_contents()?;
        table.push(vec!["kind".into(), "manifest".into()]);
        table.push(vec!["run_id".into(), m.run_id.clone()]);
        table.push(vec!["dataset_id".into(), m.dataset_id.clone()]);
        table.push(vec!["n_samples".into(), s.n_samples.to_string()]);
        table.push(vec!["n_checkpoints".into(), s.n_checkpoints.to_string()]);
        for (layer, d) in &s.layer_dims {
            table.push(vec![format!("dim.{layer}"), d.to_string()]);
        }
        json!({
            "kind": "manifest",
            "run_id": m.run_id,
            "dataset_id": m.dataset_id,
            "epochs": m.checkpoints.iter().map(|c| c.epoch).collect::<Vec<_>>(),
            "has_labels": m.labels.is_some(),
            "has_predictions": m.checkpoints.iter().any(|c| c.predictions.is_some()),
            "summary": value(&s),
        })
    };
    Ok(Output {
        envelope: Envelope::new("validate", json!({ "path": resolved(path) }), result, Vec::new()),
        table,
    })
}
