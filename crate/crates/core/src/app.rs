//! Command implementations behind the `micrec` binary: every command reads a
//! validated [`RunConfig`], writes its artifacts and a reproducibility
//! manifest.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{require_path, Precision, RunConfig};
use crate::dataset::{parse_overlap_keys, prepare_domain, resolve_overlap, DomainStats, PreparedDomain};
use crate::encoder::{Checkpoint, ModelParams};
use crate::error::{Error, Result};
use crate::eval::{EvalReport, Slice};
use crate::features::{load_features, FeatureMatrix, Modality};
use crate::graph::{parse_records, read_split_manifest, write_split_manifest, DomainTag, IdMap, OverlapMap, SplitHeader};
use crate::pipeline::{inference_alpha, DomainData, InferenceModel, TrainingSetup};
use crate::scalar::Scalar;
use crate::trainer::{HistoryRecord, TrainState};

pub const CHECKPOINT_FILE: &str = "checkpoint.ckpt";
pub const HISTORY_FILE: &str = "history.tsv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const OVERLAP_FILE: &str = "overlap.tsv";
pub const STATS_FILE: &str = "stats.tsv";
pub const DIVERGENCE_FILE: &str = "divergence.txt";
pub const REPORT_TABLE_FILE: &str = "report.txt";
pub const REPORT_LINES_FILE: &str = "report.tsv";

pub fn split_file(tag: DomainTag) -> String {
    format!("{tag}.split.tsv")
}

pub fn users_file(tag: DomainTag) -> String {
    format!("{tag}.users.txt")
}

pub fn items_file(tag: DomainTag) -> String {
    format!("{tag}.items.txt")
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Hex SHA-256 of a file's bytes.
pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Serialize)]
struct Manifest {
    command: String,
    version: String,
    config_hash: String,
    seed: u64,
    config: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, inputs: &[PathBuf], outputs: &[PathBuf]) -> Result<()> {
    let digests = |paths: &[PathBuf]| -> Result<BTreeMap<String, String>> {
        paths
            .iter()
            .map(|p| Ok((p.display().to_string(), file_digest(p)?)))
            .collect()
    };
    let m = Manifest {
        command: command.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        config: cfg.canonical_entries(),
        inputs: digests(inputs)?,
        outputs: digests(outputs)?,
    };
    let json = serde_json::to_string_pretty(&m).expect("manifest serializes");
    write_text(&dir.join(MANIFEST_FILE), &(json + "\n"))
}

fn data_dir(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.data_dir
        .clone()
        .ok_or_else(|| Error::Config("data_dir is not set".into()))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.out_dir
        .clone()
        .ok_or_else(|| Error::Config("out_dir is not set".into()))
}

fn write_keys(path: &Path, ids: &IdMap) -> Result<()> {
    let mut w = create(path)?;
    for k in ids.keys() {
        writeln!(w, "{k}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_keys(path: &Path) -> Result<IdMap> {
    let keys = open(path)?
        .lines()
        .collect::<std::io::Result<Vec<String>>>()
        .map_err(|e| Error::io(path, e))?;
    IdMap::from_keys(keys)
}

fn read_raw(path: &Path) -> Result<Vec<crate::graph::RawRecord>> {
    parse_records(open(path)?, &path.display().to_string())
}

/// Filters and splits both raw domains and writes split manifests, id maps,
/// the resolved overlap, a statistics table and a manifest into `data_dir`.
pub fn prepare(cfg: &RunConfig) -> Result<[DomainStats; 2]> {
    cfg.validate()?;
    let raw = [require_path(&cfg.raw_a, "raw_a")?, require_path(&cfg.raw_b, "raw_b")?];
    let overlap_path = require_path(&cfg.overlap, "overlap")?;
    let dir = data_dir(cfg)?;
    ensure_dir(&dir)?;

    let split = cfg.split_config();
    let mut prepared: Vec<PreparedDomain> = Vec::with_capacity(2);
    for tag in DomainTag::BOTH {
        let records = read_raw(&raw[tag.index()])?;
        prepared.push(prepare_domain(tag, &records, cfg.filter, &split)?);
    }
    let keys = parse_overlap_keys(open(&overlap_path)?, &overlap_path.display().to_string())?;
    let overlap = resolve_overlap(&keys, &prepared[0], &prepared[1])?;

    let mut outputs = Vec::new();
    for p in &prepared {
        let path = dir.join(split_file(p.tag));
        let header = SplitHeader::new(&p.tag.to_string(), crate::dataset::domain_seed(split.seed, p.tag), p.population, &p.bundle);
        let mut w = create(&path)?;
        write_split_manifest(&mut w, &header, &p.bundle)?;
        w.flush().map_err(|e| Error::io(&path, e))?;
        outputs.push(path);
        for (name, ids) in [(users_file(p.tag), &p.users), (items_file(p.tag), &p.items)] {
            let path = dir.join(name);
            write_keys(&path, ids)?;
            outputs.push(path);
        }
    }
    let overlap_out = dir.join(OVERLAP_FILE);
    let text: String = overlap.pairs().iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
    write_text(&overlap_out, &text)?;
    outputs.push(overlap_out);

    let stats = [prepared[0].stats(), prepared[1].stats()];
    let stats_path = dir.join(STATS_FILE);
    let mut table = format!("{}\toverlap\n", DomainStats::HEADER);
    for s in &stats {
        table.push_str(&format!("{}\t{}\n", s.to_line(), overlap.len()));
    }
    write_text(&stats_path, &table)?;
    outputs.push(stats_path);

    let mut inputs = raw.to_vec();
    inputs.push(overlap_path);
    write_manifest(&dir, "prepare", cfg, &inputs, &outputs)?;
    log::info!("prepared {} and {} interactions, {} overlapping users", stats[0].train, stats[1].train, overlap.len());
    Ok(stats)
}

/// Split data, id maps and features read back from a prepared directory.
pub struct Dataset {
    pub domains: [DomainData; 2],
    pub users: [IdMap; 2],
    pub items: [IdMap; 2],
    pub overlap: OverlapMap,
    /// Every file read, for manifests.
    pub inputs: Vec<PathBuf>,
}

impl Dataset {
    /// Loads `data_dir`. Feature files are required unless aggregation is
    /// disabled, in which case missing files are replaced by empty features.
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let dir = data_dir(cfg)?;
        if !dir.is_dir() {
            return Err(Error::Config(format!("data_dir {} does not exist", dir.display())));
        }
        let need_features = cfg.model.variant.mm;
        let mut inputs = Vec::new();
        let mut domains = Vec::with_capacity(2);
        let mut users = Vec::with_capacity(2);
        let mut items = Vec::with_capacity(2);
        for tag in DomainTag::BOTH {
            let split_path = dir.join(split_file(tag));
            let (header, bundle) = read_split_manifest(open(&split_path)?, &split_path.display().to_string())?;
            let pop = header.population();
            let u = read_keys(&dir.join(users_file(tag)))?;
            let i = read_keys(&dir.join(items_file(tag)))?;
            if u.len() != pop.users || i.len() != pop.items {
                return Err(Error::Population(format!(
                    "domain {tag}: id maps hold {} users / {} items, split header {} / {}",
                    u.len(),
                    i.len(),
                    pop.users,
                    pop.items
                )));
            }
            inputs.extend([split_path, dir.join(users_file(tag)), dir.join(items_file(tag))]);
            let mut load = |text: bool, modality: Modality| -> Result<FeatureMatrix> {
                let path = cfg
                    .feature_path(tag, text)
                    .ok_or_else(|| Error::Config(format!("no feature path for domain {tag}")))?;
                if !need_features && !path.exists() {
                    return Ok(FeatureMatrix::zeros(modality, pop.items, 1));
                }
                if !path.exists() {
                    return Err(Error::Config(format!(
                        "feature file {} does not exist (run the feature extractor on {})",
                        path.display(),
                        items_file(tag)
                    )));
                }
                let m = load_features(&path, pop.items)?;
                inputs.push(path);
                Ok(m)
            };
            let text = load(true, Modality::Text)?;
            let visual = load(false, Modality::Visual)?;
            domains.push(DomainData::new(tag, pop, bundle, text, visual)?);
            users.push(u);
            items.push(i);
        }
        let overlap_path = dir.join(OVERLAP_FILE);
        let mut pairs = Vec::new();
        for (n, line) in open(&overlap_path)?.lines().enumerate() {
            let line = line.map_err(|e| Error::io(&overlap_path, e))?;
            let parsed = line
                .split_once('\t')
                .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)));
            let (a, b) = parsed.ok_or_else(|| Error::Parse {
                path: overlap_path.display().to_string(),
                line: n + 1,
                msg: "expected `userA<TAB>userB` ids".into(),
            })?;
            if a >= domains[0].population.users || b >= domains[1].population.users {
                return Err(Error::Population(format!("overlap pair ({a}, {b}) outside the user ranges")));
            }
            pairs.push((a, b));
        }
        inputs.push(overlap_path);
        let [da, db]: [DomainData; 2] = domains.try_into().map_err(|_| Error::EmptyBatch)?;
        let [ua, ub]: [IdMap; 2] = users.try_into().map_err(|_| Error::EmptyBatch)?;
        let [ia, ib]: [IdMap; 2] = items.try_into().map_err(|_| Error::EmptyBatch)?;
        Ok(Self {
            domains: [da, db],
            users: [ua, ub],
            items: [ia, ib],
            overlap: OverlapMap::new(pairs)?,
            inputs,
        })
    }

    pub fn domain_refs(&self) -> [&DomainData; 2] {
        [&self.domains[0], &self.domains[1]]
    }

    fn idmaps(&self) -> BTreeMap<String, Vec<String>> {
        let mut m = BTreeMap::new();
        for tag in DomainTag::BOTH {
            m.insert(format!("{tag}.users"), self.users[tag.index()].keys().to_vec());
            m.insert(format!("{tag}.items"), self.items[tag.index()].keys().to_vec());
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub best_val: f64,
    pub checkpoint: PathBuf,
}

/// Trains on a prepared directory, writing the checkpoint, history and a
/// manifest into `out_dir`. A diverging run leaves `divergence.txt` behind.
pub fn train(cfg: &RunConfig) -> Result<TrainSummary> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F64 => train_as::<f64>(cfg),
        Precision::F32 => train_as::<f32>(cfg),
    }
}

fn build_checkpoint<T: Scalar>(cfg: &RunConfig, data: &Dataset, state: &TrainState<T>) -> Checkpoint<T> {
    let mut ck = state.to_checkpoint();
    for (k, v) in cfg.canonical_entries() {
        ck.config.insert(format!("run.{k}"), v);
    }
    let alpha = inference_alpha(&cfg.model_config().train, state.best_epoch);
    ck.config.insert("model.alpha".into(), alpha.to_string());
    ck.idmaps = data.idmaps();
    ck
}

fn train_as<T: Scalar>(cfg: &RunConfig) -> Result<TrainSummary> {
    let data = Dataset::load(cfg)?;
    let out = out_dir(cfg)?;
    ensure_dir(&out)?;
    let model = cfg.model_config();
    let setup = TrainingSetup::<T>::new(data.domain_refs(), data.overlap.pairs(), &model)?;
    log::info!(
        "training variant {} ({} overlap pairs usable, precision {})",
        model.variant.name(),
        setup.overlap.len(),
        T::TAG
    );
    let mut trainer = setup.trainer(None)?;
    while !trainer.is_finished() {
        if let Err(e) = trainer.run_epoch() {
            if let Error::Divergence { epoch, batch, dump } = &e {
                write_text(
                    &out.join(DIVERGENCE_FILE),
                    &format!("epoch {epoch}\nbatch {batch}\n{dump}\n"),
                )?;
            }
            return Err(e);
        }
    }
    let state = trainer.into_state();

    let history_path = out.join(HISTORY_FILE);
    let text: String = state.history.iter().map(|h| h.to_line() + "\n").collect();
    write_text(&history_path, &text)?;
    let ck_path = out.join(CHECKPOINT_FILE);
    let mut w = create(&ck_path)?;
    build_checkpoint(cfg, &data, &state).write(&mut w)?;
    w.flush().map_err(|e| Error::io(&ck_path, e))?;
    write_manifest(&out, "train", cfg, &data.inputs, &[ck_path.clone(), history_path])?;
    Ok(TrainSummary {
        epochs: state.history.len(),
        best_epoch: state.best_epoch,
        best_val: state.best_val,
        checkpoint: ck_path,
    })
}

/// Scalar precision recorded in a checkpoint's config block.
pub fn checkpoint_precision(path: &Path) -> Result<Precision> {
    for line in open(path)?.lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if let Some(v) = line.strip_prefix("precision=") {
            return v.parse();
        }
        if line.starts_with("idmap ") || line.starts_with("tensor ") {
            break;
        }
    }
    Err(Error::Version(format!("{} does not record its precision", path.display())))
}

/// Model restored from a checkpoint together with its run configuration.
pub struct LoadedModel<T> {
    pub cfg: RunConfig,
    pub params: ModelParams<T>,
    pub alpha: f64,
    pub history: Vec<HistoryRecord>,
}

/// Reads a checkpoint and checks that it was trained on `data`.
pub fn load_model<T: Scalar>(path: &Path, data: &Dataset) -> Result<LoadedModel<T>> {
    let ck = Checkpoint::<T>::read(open(path)?, &path.display().to_string())?;
    if ck.idmaps != data.idmaps() {
        return Err(Error::Version(format!(
            "{} was trained on a different population than the prepared data",
            path.display()
        )));
    }
    let cfg = RunConfig::from_entries(
        ck.config
            .iter()
            .filter_map(|(k, v)| Some((k.strip_prefix("run.")?, v.as_str()))),
    )?;
    let alpha = ck
        .config_value("model.alpha")?
        .parse()
        .map_err(|_| Error::Version("bad model.alpha".into()))?;
    let state = TrainState::from_checkpoint(&ck)?;
    Ok(LoadedModel {
        cfg,
        params: state.best_params,
        alpha,
        history: state.history,
    })
}

/// Loads the dataset with the model's variant so feature requirements match
/// training.
fn dataset_for_checkpoint(cfg: &RunConfig, ck: &Path) -> Result<(Dataset, Precision)> {
    let precision = checkpoint_precision(ck)?;
    let mut probe = cfg.clone();
    let stored = {
        let f = open(ck)?;
        let mut mm = true;
        for line in f.lines() {
            let line = line.map_err(|e| Error::io(ck, e))?;
            if let Some(v) = line.strip_prefix("run.no_mm=") {
                mm = v != "true";
                break;
            }
            if line.starts_with("idmap ") || line.starts_with("tensor ") {
                break;
            }
        }
        mm
    };
    probe.model.variant.mm = stored;
    Ok((Dataset::load(&probe)?, precision))
}

/// Test-set reports for every domain, `N` and slice. Writes `report.txt`,
/// `report.tsv` and a manifest into `out_dir` when it is set.
pub fn eval(cfg: &RunConfig, checkpoint: &Path, ns: &[usize], slices: &[Slice]) -> Result<EvalReport> {
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::Config("N-list must be non-empty with every N >= 1".into()));
    }
    if slices.is_empty() {
        return Err(Error::Config("at least one slice is required".into()));
    }
    let ck = require_path(&Some(checkpoint.to_path_buf()), "checkpoint")?;
    let (data, precision) = dataset_for_checkpoint(cfg, &ck)?;
    let report = match precision {
        Precision::F64 => eval_as::<f64>(&ck, &data, ns, slices)?,
        Precision::F32 => eval_as::<f32>(&ck, &data, ns, slices)?,
    };
    if let Some(out) = &cfg.out_dir {
        ensure_dir(out)?;
        let table = out.join(REPORT_TABLE_FILE);
        let lines = out.join(REPORT_LINES_FILE);
        write_text(&table, &report.to_table())?;
        write_text(&lines, &report.to_lines())?;
        let mut inputs = data.inputs.clone();
        inputs.push(ck);
        write_manifest(out, "eval", cfg, &inputs, &[table, lines])?;
    }
    Ok(report)
}

fn eval_as<T: Scalar>(ck: &Path, data: &Dataset, ns: &[usize], slices: &[Slice]) -> Result<EvalReport> {
    let model = load_model::<T>(ck, data)?;
    let inf = InferenceModel::new(data.domain_refs(), &model.params, model.alpha, &model.cfg.model_config())?;
    let mut report = EvalReport::default();
    for d in &data.domains {
        report.rows.extend(inf.evaluate(d, ns, slices)?.rows);
    }
    Ok(report)
}

/// Keys sharing the longest prefix with `key`, at most `limit`.
pub fn nearest_keys(ids: &IdMap, key: &str, limit: usize) -> Vec<String> {
    let common = |k: &str| k.chars().zip(key.chars()).take_while(|(a, b)| a == b).count();
    let mut scored: Vec<(usize, &String)> = ids.keys().iter().map(|k| (common(k), k)).collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(b.1)));
    scored.into_iter().take(limit).map(|(_, k)| k.clone()).collect()
}

/// Top `n` item keys with scores for `user_key` in `domain`.
pub fn recommend(cfg: &RunConfig, checkpoint: &Path, domain: DomainTag, user_key: &str, n: usize) -> Result<Vec<(String, f64)>> {
    if n == 0 {
        return Err(Error::Config("top_n must be at least 1".into()));
    }
    let ck = require_path(&Some(checkpoint.to_path_buf()), "checkpoint")?;
    let (data, precision) = dataset_for_checkpoint(cfg, &ck)?;
    let users = &data.users[domain.index()];
    let user = users.get(user_key).ok_or_else(|| Error::UnknownUser {
        key: user_key.to_string(),
        suggestions: nearest_keys(users, user_key, 5),
    })?;
    let ranked = match precision {
        Precision::F64 => recommend_as::<f64>(&ck, &data, domain, user, n)?,
        Precision::F32 => recommend_as::<f32>(&ck, &data, domain, user, n)?,
    };
    let items = &data.items[domain.index()];
    Ok(ranked.into_iter().map(|(i, s)| (items.key(i).to_string(), s)).collect())
}

fn recommend_as<T: Scalar>(ck: &Path, data: &Dataset, domain: DomainTag, user: usize, n: usize) -> Result<Vec<(usize, f64)>> {
    let model = load_model::<T>(ck, data)?;
    let inf = InferenceModel::new(data.domain_refs(), &model.params, model.alpha, &model.cfg.model_config())?;
    inf.recommend(&data.domains[domain.index()], user, n)
}

/// Writes a planted synthetic dataset under `dir`: raw files and overlap
/// keys in `dir`, prepared data with feature files in `dir/data`. Returns
/// `base` with the raw, overlap and data paths filled in.
pub fn write_synthetic(dir: &Path, synth: &crate::synth::SynthConfig, base: &RunConfig) -> Result<RunConfig> {
    ensure_dir(dir)?;
    let ds = crate::synth::generate(synth)?;
    let mut cfg = base.clone();
    for tag in DomainTag::BOTH {
        let path = dir.join(format!("raw_{tag}.tsv"));
        let mut w = create(&path)?;
        crate::synth::write_records(&mut w, &ds.records[tag.index()])
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
        match tag {
            DomainTag::A => cfg.raw_a = Some(path),
            DomainTag::B => cfg.raw_b = Some(path),
        }
    }
    let overlap = dir.join("overlap_keys.txt");
    write_text(&overlap, &ds.overlap.iter().map(|k| format!("{k}\n")).collect::<String>())?;
    cfg.overlap = Some(overlap);
    let data = dir.join("data");
    cfg.data_dir = Some(data.clone());
    prepare(&cfg)?;
    for tag in DomainTag::BOTH {
        let items = read_keys(&data.join(items_file(tag)))?;
        let (text, visual) = ds.features(tag, &items)?;
        for (m, name) in [(&text, "text"), (&visual, "visual")] {
            let path = data.join(format!("{tag}.{name}.feat"));
            let mut w = create(&path)?;
            crate::features::write_features(&mut w, m)?;
            w.flush().map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(cfg)
}
