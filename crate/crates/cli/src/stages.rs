//! The pipeline stages. Each one reads its predecessors' artifacts from the
//! workspace, writes its own, and refreshes `config.toml` and the manifest.

use std::collections::HashMap;
use std::fs;

use fedwind_core::autosplit::{auto_split, leaf_labels, silhouette, AutoSplitConfig};
use fedwind_core::data::{
    generate_synthetic_fleet, load_fleet, nearest_neighbour_subsample, read_meta, write_fleet, write_truth, Fleet,
    FleetSpec, SplitSpec,
};
use fedwind_core::eval::{
    emit_report, flat_fed_kmeans_grouping, forecast_csv, geo_grouping, history_csv, pca_csv, pca_project,
    profile_csv, regression_metrics, trajectory_svg, ComparisonRow, GroupingResult, MetricsReport, PerClientRow,
    Report,
};
use fedwind_core::features::{cluster_profile, fingerprint, standardise, StandardiseOptions, ZERO_RATIO};
use fedwind_core::fedcluster::{federated_kmeans, AuditLog, FedKMeansConfig, InitStrategy};
use fedwind_core::forecast::{
    evaluate_set, filter_uninformative_clients, rolling_forecast, train_cluster_fl, ClientDataset, FlOptions,
    ModelArtifact, TrainHyper, WindowSet,
};
use fedwind_core::rng::derive_seed;
use serde::Serialize;

use crate::artifacts::{
    fingerprints_csv, portable_config, read_fingerprints, read_json, read_text, write, write_json, write_manifest,
    ExcludedClient, GroupingArtifact, Manifest, TrainedGroup, TrainingArtifact, Workspace,
};
use crate::config::{DataSource, Method, RunConfig};
use crate::{CliError, StageResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Generate,
    Features,
    Cluster,
    Train,
    Forecast,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Generate,
        Stage::Features,
        Stage::Cluster,
        Stage::Train,
        Stage::Forecast,
        Stage::Evaluate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::Features => "features",
            Stage::Cluster => "cluster",
            Stage::Train => "train",
            Stage::Forecast => "forecast",
            Stage::Evaluate => "evaluate",
        }
    }

    pub fn run(&self, cfg: &RunConfig, ws: &Workspace) -> Result<Manifest, CliError> {
        match self {
            Stage::Generate => generate(cfg, ws),
            Stage::Features => features(cfg, ws),
            Stage::Cluster => cluster(cfg, ws),
            Stage::Train => train(cfg, ws),
            Stage::Forecast => forecast(cfg, ws),
            Stage::Evaluate => evaluate(cfg, ws),
        }
    }
}

fn finish(cfg: &RunConfig, ws: &Workspace, stage: &'static str) -> Result<Manifest, CliError> {
    write(&ws.config(), &portable_config(cfg), stage)?;
    write_manifest(ws, cfg, stage)
}

fn load_workspace_fleet(ws: &Workspace, stage: &'static str) -> Result<Fleet, CliError> {
    let series = ws.require(ws.series(), stage, "generate")?;
    let meta = ws.require(ws.meta(), stage, "generate")?;
    load_fleet(&series, &meta).at(stage)
}

fn series_of<'a>(fleet: &'a Fleet, id: &str, stage: &'static str) -> Result<&'a fedwind_core::TurbineSeries, CliError> {
    fleet
        .get(id)
        .ok_or_else(|| CliError::Stage {
            stage,
            source: format!("turbine `{id}` is not in the fleet").into(),
        })
}

/// Materialises the fleet under the workspace data directory.
pub fn generate(cfg: &RunConfig, ws: &Workspace) -> Result<Manifest, CliError> {
    const S: &str = "generate";
    let fleet = match &cfg.data {
        DataSource::Synthetic { spec: Some(p), .. } => {
            let spec = FleetSpec::from_json(&read_text(p, S)?).at(S)?;
            generate_synthetic_fleet(&spec).at(S)?
        }
        DataSource::Synthetic { spec: None, turbines, steps } => {
            generate_synthetic_fleet(&FleetSpec::three_archetypes(*turbines, *steps, cfg.seed)).at(S)?
        }
        DataSource::Files { series, meta } => load_fleet(series, meta).at(S)?,
    };
    let fleet = match cfg.subsample {
        Some(n) => nearest_neighbour_subsample(&fleet, n).at(S)?,
        None => fleet,
    };
    fs::create_dir_all(&ws.data).at(S)?;
    write_fleet(&fleet, &ws.series(), &ws.meta()).at(S)?;
    if fleet.turbines().iter().any(|t| t.meta.archetype.is_some()) {
        write_truth(&fleet, &ws.truth()).at(S)?;
    }
    finish(cfg, ws, S)
}

/// Writes the raw behaviour fingerprint of every turbine.
pub fn features(cfg: &RunConfig, ws: &Workspace) -> Result<Manifest, CliError> {
    const S: &str = "features";
    let fleet = load_workspace_fleet(ws, S)?;
    let mut ids = Vec::with_capacity(fleet.len());
    let mut fps = Vec::with_capacity(fleet.len());
    for t in fleet.turbines() {
        ids.push(t.meta.id.clone());
        fps.push(fingerprint(t).at(S)?);
    }
    write(&ws.fingerprints(), &fingerprints_csv(&ids, &fps), S)?;
    finish(cfg, ws, S)
}

#[derive(Serialize)]
struct CentroidsArtifact<'a> {
    config: FedKMeansConfig,
    inertia: f64,
    init: &'a fedwind_core::Matrix,
    centres: &'a fedwind_core::Matrix,
}

/// Groups the turbines with the configured method.
pub fn cluster(cfg: &RunConfig, ws: &Workspace) -> Result<Manifest, CliError> {
    const S: &str = "cluster";
    let fp_path = ws.require(ws.fingerprints(), S, "features")?;
    let meta_path = ws.require(ws.meta(), S, "generate")?;
    let (ids, fps) = read_fingerprints(&fp_path, S)?;
    let opts = StandardiseOptions {
        standardise_zero_ratio: cfg.clustering.standardise_zero_ratio,
    };
    let fm = standardise(&fps, opts).at(S)?;
    let n = ids.len();
    let c = &cfg.clustering;

    let grouping = match cfg.method {
        Method::DrsAuto | Method::KppAuto | Method::Centralized => {
            let init = if cfg.method == Method::KppAuto {
                InitStrategy::KMeansPlusPlus
            } else {
                InitStrategy::Drs
            };
            let split = AutoSplitConfig {
                grid: c.grid,
                thresholds: c.thresholds,
                init,
                seed: cfg.seed,
            };
            let tree = auto_split(&fm.data, &split).at(S)?;
            write(&ws.tree(), &tree.to_json(), S)?;
            let ll = leaf_labels(&tree);
            let k = ll.n_leaves();
            let non_outlier: Vec<usize> = (0..k).filter(|&g| !ll.leaf_outlier[g]).collect();
            let (forecast_groups, pooled) = if cfg.method == Method::Centralized {
                let g = match c.centralized_group {
                    Some(g) if g < k => g,
                    Some(g) => return Err(CliError::Config(format!("centralized_group {g} but only {k} leaves"))),
                    None => largest_group(&ll.labels, if non_outlier.is_empty() { (0..k).collect() } else { non_outlier }),
                };
                (vec![g], true)
            } else if c.exclude_outliers && !non_outlier.is_empty() {
                (non_outlier, false)
            } else {
                // Every leaf is an outlier leaf: nothing would be forecast, so keep them all.
                ((0..k).collect(), false)
            };
            GroupingArtifact {
                method: cfg.method,
                k,
                quality: silhouette(&fm.data, &ll.labels).ok(),
                ids: ids.clone(),
                labels: ll.labels,
                outlier_groups: ll.leaf_outlier,
                forecast_groups,
                pooled,
            }
        }
        method => {
            let result = match method {
                Method::FlatFedK => flat_grouping(cfg, ws, &fm.data)?,
                Method::GeoAuto | Method::GeoFixed => {
                    let metas = read_meta(&meta_path).at(S)?;
                    let by_id: HashMap<&str, usize> = metas.iter().enumerate().map(|(i, m)| (m.id.as_str(), i)).collect();
                    let aligned = ids
                        .iter()
                        .map(|id| by_id.get(id.as_str()).map(|&i| metas[i].clone()))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| CliError::MalformedArtifact {
                            stage: S,
                            path: meta_path.clone(),
                            reason: "fingerprinted turbine missing from meta".into(),
                        })?;
                    let k = if method == Method::GeoFixed { c.geo_k } else { None };
                    geo_grouping(&aligned, k, cfg.seed).at(S)?
                }
                _ => GroupingResult::single(method.as_str(), n),
            };
            GroupingArtifact {
                method,
                k: result.k,
                quality: result.quality,
                ids: ids.clone(),
                labels: result.labels,
                outlier_groups: vec![false; result.k],
                forecast_groups: (0..result.k).collect(),
                pooled: false,
            }
        }
    };

    write_json(&ws.grouping(), &grouping, S)?;
    write(&ws.labels(), &grouping.labels_csv(), S)?;
    let zero_ratios: Vec<f64> = fps.iter().map(|f| f.to_array()[ZERO_RATIO]).collect();
    let profile = cluster_profile(&fm, &grouping.labels, &zero_ratios).at(S)?;
    write(&ws.out.join("profile.csv"), &profile_csv(&profile), S)?;
    let pca = pca_project(&fm.data, 3.min(fm.data.cols())).at(S)?;
    write(&ws.pca(), &pca_csv(&ids, &pca, &grouping.labels), S)?;
    finish(cfg, ws, S)
}

/// Largest group among `candidates`; ties keep the lower id.
fn largest_group(labels: &[usize], candidates: Vec<usize>) -> usize {
    let size = |g: usize| labels.iter().filter(|&&l| l == g).count();
    candidates
        .into_iter()
        .fold(None::<(usize, usize)>, |best, g| match best {
            Some((_, s)) if size(g) <= s => best,
            _ => Some((g, size(g))),
        })
        .map(|(g, _)| g)
        .expect("at least one leaf")
}

fn flat_grouping(cfg: &RunConfig, ws: &Workspace, data: &fedwind_core::Matrix) -> Result<GroupingResult, CliError> {
    const S: &str = "cluster";
    let f = cfg.clustering.flat;
    let config = FedKMeansConfig {
        n_clients: f.n_clients,
        k_global: f.k,
        c_rounds: f.c_rounds,
        seed: cfg.seed,
    };
    if f.k == 1 {
        return flat_fed_kmeans_grouping(data, &config).at(S);
    }
    let mut audit = AuditLog::enabled();
    let result = federated_kmeans(data, &config, InitStrategy::Drs, &mut audit).at(S)?;
    let doc = CentroidsArtifact {
        config,
        inertia: result.inertia,
        init: &result.init.centres,
        centres: &result.centres.centres,
    };
    write_json(&ws.centroids(), &doc, S)?;
    write(&ws.audit(), &audit.to_jsonl(), S)?;
    Ok(GroupingResult::from_labels(Method::FlatFedK.as_str(), &result.labels, data))
}

/// Hyperparameters of one group: the run's, reseeded per group.
pub fn group_hyper(cfg: &RunConfig, group: usize) -> TrainHyper {
    TrainHyper {
        seed: derive_seed(cfg.seed, &[group as u64]),
        ..cfg.hyper
    }
}

/// Trains one model per forecast group.
pub fn train(cfg: &RunConfig, ws: &Workspace) -> Result<Manifest, CliError> {
    const S: &str = "train";
    let grouping: GroupingArtifact = read_json(&ws.require(ws.grouping(), S, "cluster")?, S)?;
    let fleet = load_workspace_fleet(ws, S)?;
    let _ = fs::remove_dir_all(ws.out.join("models"));
    let mut groups = Vec::new();
    for &group in &grouping.forecast_groups {
        let clients = grouping
            .members(group)
            .into_iter()
            .map(|id| ClientDataset::from_series(series_of(&fleet, id, S)?, cfg.train_fraction, &cfg.norm).at(S))
            .collect::<Result<Vec<_>, _>>()?;
        let (kept, excluded) = if cfg.filter.enabled {
            filter_uninformative_clients(clients, &cfg.filter.thresholds())
        } else {
            (clients, Vec::new())
        };
        let excluded: Vec<ExcludedClient> = excluded.into_iter().map(|(id, reason)| ExcludedClient { id, reason }).collect();
        let ids: Vec<String> = kept.iter().map(|c| c.id.clone()).collect();
        if kept.is_empty() {
            groups.push(TrainedGroup {
                group,
                model: None,
                clients: ids,
                excluded,
                pooled: grouping.pooled,
            });
            continue;
        }
        let federation = if grouping.pooled {
            vec![ClientDataset::new(
                format!("pooled_{group}"),
                WindowSet::pooled(kept.iter().map(|c| &c.train)),
                WindowSet::pooled(kept.iter().map(|c| &c.validation)),
            )]
        } else {
            kept
        };
        let hyper = group_hyper(cfg, group);
        let outcome = train_cluster_fl(&federation, &hyper, FlOptions::default()).at(S)?;
        let dir = ws.model_dir(group);
        write(&dir.join("model.json"), &ModelArtifact::new(outcome.params, cfg.norm, hyper).to_json(), S)?;
        write(&dir.join("history.csv"), &history_csv(&outcome.history), S)?;
        groups.push(TrainedGroup {
            group,
            model: Some(format!("models/cluster_{group}/model.json")),
            clients: ids,
            excluded,
            pooled: grouping.pooled,
        });
    }
    let training = TrainingArtifact {
        method: grouping.method,
        n_groups: grouping.k,
        groups,
    };
    write_json(&ws.training(), &training, S)?;
    finish(cfg, ws, S)
}

fn load_model(ws: &Workspace, rel: &str, stage: &'static str) -> Result<ModelArtifact, CliError> {
    let path = ws.require(ws.out.join(rel), stage, "train")?;
    ModelArtifact::from_json(&read_text(&path, stage)?).map_err(|e| CliError::MalformedArtifact {
        stage,
        path,
        reason: e.to_string(),
    })
}

/// Rolling forecasts from the start of each turbine's test period.
pub fn forecast(cfg: &RunConfig, ws: &Workspace) -> Result<Manifest, CliError> {
    const S: &str = "forecast";
    let training: TrainingArtifact = read_json(&ws.require(ws.training(), S, "train")?, S)?;
    let fleet = load_workspace_fleet(ws, S)?;
    let model_of: HashMap<&str, &str> = training
        .groups
        .iter()
        .filter_map(|g| g.model.as_deref().map(|m| (g, m)))
        .flat_map(|(g, m)| g.clients.iter().map(move |id| (id.as_str(), m)))
        .collect();
    let targets: Vec<String> = match &cfg.forecast.ids {
        Some(ids) => ids.clone(),
        None => training
            .groups
            .iter()
            .filter(|g| g.model.is_some())
            .filter_map(|g| g.clients.first().cloned())
            .collect(),
    };
    let mut trajectories = Vec::with_capacity(targets.len());
    for id in &targets {
        let rel = model_of
            .get(id.as_str())
            .ok_or_else(|| CliError::Config(format!("turbine `{id}` has no trained model")))?;
        let model = load_model(ws, rel, S)?;
        let series = series_of(&fleet, id, S)?;
        let start = SplitSpec::new(cfg.train_fraction, series.len()).boundary;
        let t = rolling_forecast(&model.params, series, &model.norm, start, cfg.forecast.horizon, cfg.forecast.mode)
            .at(S)?;
        trajectories.push(t);
    }
    let _ = fs::remove_dir_all(ws.out.join("plots"));
    write(&ws.out.join("forecast.csv"), &forecast_csv(&trajectories), S)?;
    for t in &trajectories {
        let name = format!("{}_{}.svg", t.id, t.mode.as_str());
        write(&ws.out.join("plots").join(name), &trajectory_svg(t), S)?;
    }
    finish(cfg, ws, S)
}

/// Mean of per-client metrics. R² is averaged over clients with a
/// non-degenerate target only.
fn client_mean(rows: &[&MetricsReport]) -> Option<MetricsReport> {
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| rows.iter().map(|m| f(m)).sum::<f64>() / n;
    let r2: Vec<f64> = rows.iter().filter(|m| !m.r2_degenerate).map(|m| m.r2).collect();
    Some(MetricsReport {
        mse: mean(|m| m.mse),
        rmse: mean(|m| m.rmse),
        mae: mean(|m| m.mae),
        r2: if r2.is_empty() { f64::NAN } else { r2.iter().sum::<f64>() / r2.len() as f64 },
        n_points: rows.iter().map(|m| m.n_points).sum(),
        r2_degenerate: r2.is_empty(),
    })
}

/// Scores every trained model on its clients' train and test windows.
pub fn evaluate(cfg: &RunConfig, ws: &Workspace) -> Result<Manifest, CliError> {
    const S: &str = "evaluate";
    let training: TrainingArtifact = read_json(&ws.require(ws.training(), S, "train")?, S)?;
    let fleet = load_workspace_fleet(ws, S)?;
    let method = training.method.as_str().to_string();
    let mut pooled: [(Vec<f64>, Vec<f64>); 2] = Default::default();
    let mut per_client = Vec::new();
    for g in &training.groups {
        let Some(rel) = &g.model else { continue };
        let model = load_model(ws, rel, S)?;
        for id in &g.clients {
            let client = ClientDataset::from_series(series_of(&fleet, id, S)?, cfg.train_fraction, &model.norm).at(S)?;
            for (slot, (split, set)) in [("train", &client.train), ("test", &client.validation)].into_iter().enumerate() {
                let (y_true, y_pred) = evaluate_set(&model.params, set).at(S)?;
                let metrics = regression_metrics(&y_true, &y_pred).at(S)?;
                pooled[slot].0.extend(y_true);
                pooled[slot].1.extend(y_pred);
                per_client.push(PerClientRow {
                    method: method.clone(),
                    group: g.group,
                    id: id.clone(),
                    split: split.into(),
                    metrics,
                });
            }
        }
    }
    if per_client.is_empty() {
        return Err(CliError::Stage {
            stage: S,
            source: "no trained model to evaluate".into(),
        });
    }
    let mut comparison = Vec::new();
    for (slot, split) in ["train", "test"].into_iter().enumerate() {
        comparison.push(ComparisonRow {
            method: method.clone(),
            n_groups: training.n_groups,
            split: split.into(),
            metrics: regression_metrics(&pooled[slot].0, &pooled[slot].1).at(S)?,
        });
    }
    let test_rows: Vec<&MetricsReport> = per_client.iter().filter(|r| r.split == "test").map(|r| &r.metrics).collect();
    if let Some(metrics) = client_mean(&test_rows) {
        comparison.push(ComparisonRow {
            method: method.clone(),
            n_groups: training.n_groups,
            split: "test_client_mean".into(),
            metrics,
        });
    }
    let report = Report {
        comparison,
        per_client,
        ..Default::default()
    };
    emit_report(&report, &ws.out).at(S)?;
    finish(cfg, ws, S)
}

/// All stages in order.
pub fn run_pipeline(cfg: &RunConfig, ws: &Workspace) -> Result<Manifest, CliError> {
    let mut manifest = None;
    for stage in Stage::ALL {
        manifest = Some(stage.run(cfg, ws)?);
    }
    Ok(manifest.expect("at least one stage"))
}

/// Runs several methods on one shared fleet. Each method gets its own
/// subdirectory; the combined `comparison.csv` lands in the root. A
/// `geo_fixed` run without `geo_k` takes the leaf count of `drs_auto`, which
/// therefore runs first.
pub fn compare(cfg: &RunConfig, methods: &[Method]) -> Result<Vec<ComparisonRow>, CliError> {
    let root = Workspace::new(&cfg.out);
    let mut methods = methods.to_vec();
    methods.sort();
    methods.dedup();
    if methods.contains(&Method::GeoFixed) && cfg.clustering.geo_k.is_none() && !methods.contains(&Method::DrsAuto) {
        methods.insert(0, Method::DrsAuto);
    }
    generate(cfg, &root)?;
    let mut rows = Vec::new();
    let mut drs_k = None;
    for m in methods {
        let mut sub = cfg.clone();
        sub.method = m;
        sub.out = cfg.out.join(m.as_str());
        if m == Method::GeoFixed && sub.clustering.geo_k.is_none() {
            sub.clustering.geo_k = drs_k;
        }
        let sub = sub.resolve()?;
        let ws = Workspace::with_data(&sub.out, &root.data);
        for stage in &Stage::ALL[1..] {
            stage.run(&sub, &ws)?;
        }
        if m == Method::DrsAuto {
            let g: GroupingArtifact = read_json(&ws.grouping(), "compare")?;
            drs_k = Some(g.k);
        }
        rows.extend(read_comparison(&ws)?);
    }
    let report = Report {
        comparison: rows.clone(),
        ..Default::default()
    };
    emit_report(&report, &root.out).at("compare")?;
    finish(cfg, &root, "compare")?;
    Ok(rows)
}

/// Parses a `comparison.csv` written by [`evaluate`].
pub fn read_comparison(ws: &Workspace) -> Result<Vec<ComparisonRow>, CliError> {
    const S: &str = "compare";
    let path = ws.require(ws.out.join("comparison.csv"), S, "evaluate")?;
    let bad = |reason: String| CliError::MalformedArtifact {
        stage: S,
        path: path.clone(),
        reason,
    };
    let mut reader = csv::Reader::from_path(&path).map_err(|e| bad(e.to_string()))?;
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("{}: {e}", &rec[i])));
        let (mse, rmse, mae, r2) = (num(3)?, num(4)?, num(5)?, num(6)?);
        rows.push(ComparisonRow {
            method: rec[0].to_string(),
            n_groups: rec[1].parse().map_err(|e| bad(format!("{e}")))?,
            split: rec[2].to_string(),
            metrics: MetricsReport {
                mse,
                rmse,
                mae,
                r2,
                n_points: 0,
                r2_degenerate: false,
            },
        });
    }
    Ok(rows)
}
