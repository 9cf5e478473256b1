use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::JobConfig;
use super::manifest::{format_manifest, Manifest, Record, Role};
use crate::error::{Error, Result};
use crate::image_io::{from_tensor, read_image, to_tensor, write_image};
use crate::nst::{run_transfer, write_loss_trace, LossReport};
use crate::retrieval::{evaluate, load_descriptors, render_report, save_descriptors, DescriptorEntry, DescriptorSet, EvalReport};
use crate::rng::sub_seed;
use crate::tensor::Tensor;
use crate::vgg::{extract_descriptor, fine_tune, load_weights, save_weights, LabeledImage, NetworkSpec, TrainConfig, TrainReport, WeightStore};

/// Manifest written by `transfer` next to the generated images.
pub const TRANSFERRED_MANIFEST: &str = "transferred.csv";
pub const WEIGHTS_FILE: &str = "weights.nstw";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const REPORT_FILE: &str = "report.txt";
pub const CMC_FILE: &str = "cmc.csv";

/// Runs `f` on a pool with `jobs` workers, or on the global pool.
pub fn with_jobs<R: Send>(jobs: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match jobs {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::config(Some("jobs"), e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_input(path: &Path, cfg: &JobConfig) -> Result<Tensor<f32>> {
    to_tensor(&read_image(path)?, &cfg.norm)
}

/// Class count of the head stored in a weight file.
fn stored_classes(spec_head: &str, store: &WeightStore<f32>) -> Result<usize> {
    store
        .out_features(spec_head)
        .ok_or_else(|| Error::Validation(format!("weight file has no `{spec_head}` layer")))
}

/// Network and weights for jobs that only read activations: the configured
/// weight file when given, otherwise a seeded random network.
fn feature_network(cfg: &JobConfig, seed: Option<u64>) -> Result<(NetworkSpec, WeightStore<f32>)> {
    match &cfg.weights {
        Some(path) => {
            let store = load_weights::<f32>(path)?;
            let head = cfg.network(1)?.head_name().expect("vgg has a head").to_string();
            let spec = cfg.network(stored_classes(&head, &store)?)?;
            store.validate(&spec)?;
            Ok((spec, store))
        }
        None => {
            let seed = seed.ok_or_else(|| Error::config(Some("weights"), "a weight file is required"))?;
            let spec = cfg.network(cfg.class_count.unwrap_or(1))?;
            let store = WeightStore::random(&spec, sub_seed(seed, "weights", 0))?;
            Ok((spec, store))
        }
    }
}

fn output_stem(index: usize, rec: &Record) -> String {
    let stem = rec.path.file_stem().and_then(|s| s.to_str()).unwrap_or("image");
    format!("{index:04}_{stem}")
}

#[derive(Clone, Debug)]
pub struct TransferItem {
    pub content: String,
    pub image: PathBuf,
    pub trace: PathBuf,
    pub final_loss: LossReport,
}

/// Style-transfers every `content` record onto its `pair_hint` style image.
///
/// Writes `NNNN_<stem>.ppm` and `NNNN_<stem>_trace.csv` per record plus a
/// manifest listing the generated images as `train` records under the
/// content record's identity.
pub fn cmd_transfer(manifest: &Manifest, cfg: &JobConfig) -> Result<Vec<TransferItem>> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let out = cfg.require_out()?;
    let jobs: Vec<(&Record, &Path)> = manifest
        .with_role(Role::Content)
        .map(|r| {
            let style = r.pair_hint.as_deref().ok_or_else(|| {
                Error::config(Some("pair_hint"), format!("content record `{}` has no style image", r.item_id))
            })?;
            Ok((r, style))
        })
        .collect::<Result<_>>()?;
    if jobs.is_empty() {
        return Err(Error::Validation("manifest has no content records".into()));
    }
    let (spec, store) = feature_network(cfg, Some(seed))?;
    create_dir(out)?;

    let items = jobs
        .par_iter()
        .enumerate()
        .map(|(i, (rec, style))| {
            let content = load_input(&rec.path, cfg)?;
            let style = load_input(style, cfg)?;
            let nst = cfg.nst_config(sub_seed(seed, "transfer", i as u64));
            let outcome = run_transfer(&content, &style, &spec, &store, &nst)?;
            let stem = output_stem(i, rec);
            let image = out.join(format!("{stem}.ppm"));
            let trace = out.join(format!("{stem}_trace.csv"));
            write_image(&from_tensor(&outcome.image, &cfg.norm)?, &image)?;
            let mut full = outcome.trace;
            full.push(outcome.final_loss.clone());
            write_loss_trace(&full, &trace)?;
            Ok(TransferItem {
                content: rec.item_id.clone(),
                image,
                trace,
                final_loss: outcome.final_loss,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let names: Vec<String> = items
        .iter()
        .map(|it| it.image.file_name().unwrap().to_string_lossy().into_owned())
        .collect();
    let rows = names.iter().zip(&jobs).map(|(n, (rec, _))| (n.as_str(), rec.person_id, Role::Train));
    let path = out.join(TRANSFERRED_MANIFEST);
    fs::write(&path, format_manifest(rows)?).map_err(|e| Error::io(&path, e))?;
    Ok(items)
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub weights: PathBuf,
    pub report: TrainReport,
    /// Person id behind each class index.
    pub classes: Vec<i32>,
}

/// Fine-tunes on the `train` records and writes `weights.nstw`.
///
/// Person ids are mapped to class indices in ascending order. When the
/// starting weights were trained for a different number of classes their
/// head is replaced by a fresh one.
pub fn cmd_train(manifest: &Manifest, cfg: &JobConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    let seed = cfg.require_seed()?;
    let out = cfg.require_out()?;
    let records: Vec<&Record> = manifest.with_role(Role::Train).collect();
    if records.is_empty() {
        return Err(Error::Validation("manifest has no train records".into()));
    }
    let labels: BTreeMap<i32, usize> = records
        .iter()
        .map(|r| r.person_id)
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .enumerate()
        .map(|(i, p)| (p, i))
        .collect();
    let class_count = cfg.class_count.unwrap_or(labels.len());
    if class_count < labels.len() {
        return Err(Error::config(
            Some("class_count"),
            format!("{class_count} classes for {} identities", labels.len()),
        ));
    }
    let spec = cfg.network(class_count)?;
    let store = match &cfg.weights {
        Some(path) => {
            let mut store = load_weights::<f32>(path)?;
            let head = spec.head_name().expect("vgg has a head");
            if store.out_features(head) != Some(class_count) {
                store.reset_head(&spec, sub_seed(seed, "head", 0))?;
            }
            store.validate(&spec)?;
            store
        }
        None => WeightStore::random(&spec, sub_seed(seed, "weights", 0))?,
    };
    let dataset = records
        .par_iter()
        .map(|r| {
            Ok(LabeledImage {
                image: load_input(&r.path, cfg)?,
                label: labels[&r.person_id],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let train_cfg = TrainConfig {
        seed: sub_seed(seed, "train", 0),
        ..cfg.train.clone()
    };
    let (trained, report) = fine_tune(&spec, &store, &dataset, &train_cfg)?;

    create_dir(out)?;
    let weights = out.join(WEIGHTS_FILE);
    save_weights(&trained, &weights)?;
    let mut log = String::from("epoch,loss\n");
    log.push_str(&format!("0,{}\n", report.initial_loss));
    for (e, l) in report.epoch_losses.iter().enumerate() {
        log.push_str(&format!("{},{l}\n", e + 1));
    }
    let log_path = out.join(TRAIN_LOG);
    fs::write(&log_path, log).map_err(|e| Error::io(&log_path, e))?;
    Ok(TrainSummary {
        weights,
        report,
        classes: labels.into_keys().collect(),
    })
}

/// Descriptors of the `role` records in manifest order.
pub fn describe_records(records: &[&Record], spec: &NetworkSpec, store: &WeightStore<f32>, cfg: &JobConfig) -> Result<DescriptorSet<f32>> {
    let entries = records
        .par_iter()
        .map(|r| {
            let image = load_input(&r.path, cfg)?;
            Ok(DescriptorEntry {
                item_id: r.item_id.clone(),
                person_id: r.person_id,
                vector: extract_descriptor(spec, store, &image)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DescriptorSet::new(entries)
}

/// Writes `query.nstd` and/or `gallery.nstd` for the `query` and `gallery`
/// records, using the weight file from the config. Returns the files written.
pub fn cmd_extract(manifest: &Manifest, cfg: &JobConfig) -> Result<Vec<PathBuf>> {
    cfg.validate()?;
    let out = cfg.require_out()?;
    if cfg.weights.is_none() {
        return Err(Error::config(Some("weights"), "extract needs a weight file"));
    }
    let (spec, store) = feature_network(cfg, None)?;
    let groups: Vec<(Role, Vec<&Record>)> = [Role::Query, Role::Gallery]
        .into_iter()
        .map(|role| (role, manifest.with_role(role).collect::<Vec<_>>()))
        .filter(|(_, recs)| !recs.is_empty())
        .collect();
    if groups.is_empty() {
        return Err(Error::Validation("manifest has no query or gallery records".into()));
    }
    create_dir(out)?;
    let mut written = Vec::new();
    for (role, recs) in groups {
        let set = describe_records(&recs, &spec, &store, cfg)?;
        let path = out.join(format!("{role}.nstd"));
        save_descriptors(&set, &path)?;
        written.push(path);
    }
    Ok(written)
}

/// Evaluates one descriptor file against itself (each query's own entry is
/// skipped) or a query file against a gallery file, and writes `report.txt`
/// and `cmc.csv`.
pub fn cmd_eval(files: &[PathBuf], cfg: &JobConfig) -> Result<EvalReport> {
    let out = cfg.require_out()?;
    let (queries, gallery) = match files {
        [one] => {
            let set = load_descriptors::<f32>(one)?;
            (set.clone(), set)
        }
        [q, g] => (load_descriptors::<f32>(q)?, load_descriptors::<f32>(g)?),
        _ => {
            return Err(Error::InvalidArgument(format!(
                "eval takes one or two descriptor files, got {}",
                files.len()
            )))
        }
    };
    let report = evaluate(&queries, &gallery, cfg.max_rank)?;
    let rendered = render_report(&report)?;
    create_dir(out)?;
    for (name, text) in [(REPORT_FILE, &rendered.text), (CMC_FILE, &rendered.csv)] {
        let path = out.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }
    Ok(report)
}
