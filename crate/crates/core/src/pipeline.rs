//! End-to-end driver behind the `gesture` binary: dataset generation,
//! descriptor extraction, training, prediction, evaluation and reports.
//!
//! Directory layout under the configured paths:
//!
//! ```text
//! <data>/manifest.txt              split membership, `GMANIFEST 1`
//! <data>/<id>.gskel                skeleton + ground-truth labels
//! <data>/descriptors/<id>.gdesc    standardized descriptors (extract)
//! <models>/<method>/*.gmodel       trained networks
//! <models>/<method>/trace.txt      training loss traces
//! <reports>/<method>/<split>/      predictions and evaluation reports
//! ```

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::descriptor::{write_descriptor_dump, FeatureStats};
use crate::error::{Error, Result};
use crate::evaluation::{evaluate, frame_accuracy, timeline, Evaluation, LabelPair};
use crate::nn::NetworkModel;
use crate::recurrent::{extract_train_windows, label_sequence, train_rnn, RnnConfig};
use crate::rng::SplitMix64;
use crate::segmenter::{build_binary_training_set, segment, train_segmenter, periods_to_activity, ActivityPeriod, SegmenterConfig};
use crate::skeleton::{load_sequence, save_sequence, FrameLabels, GestureAnnotation, SkeletonSequence};
use crate::synth::{generate_synthetic, SynthConfig};
use crate::window::{
    build_window_training_set, classify_period_method_a, classify_period_method_b, train_window_classifier, MethodAConfig, MethodBConfig,
    WindowConfig,
};

// ---------------------------------------------------------------------------
// configuration

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    A,
    B,
    C,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::A => "a",
            Method::B => "b",
            Method::C => "c",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(Method::A),
            "b" => Ok(Method::B),
            "c" => Ok(Method::C),
            _ => Err(Error::invalid(format!("unknown method {s:?} (expected a, b or c)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split {s:?} (expected train, val or test)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub data_dir: PathBuf,
    pub model_dir: PathBuf,
    pub report_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            data_dir: "data".into(),
            model_dir: "models".into(),
            report_dir: "reports".into(),
        }
    }
}

/// Fractions of the sequences assigned to train and validation; the rest
/// is the test split.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub val: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios { train: 0.6, val: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seeds dataset generation and the split assignment.
    pub seed: u64,
    pub method: Method,
    pub paths: Paths,
    pub split: SplitRatios,
    pub synth: SynthConfig,
    pub segmenter: SegmenterConfig,
    pub window: WindowConfig,
    pub method_a: MethodAConfig,
    pub method_b: MethodBConfig,
    pub rnn: RnnConfig,
}

impl Default for PipelineConfig {
    /// The desk-scale profile.
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            method: Method::C,
            paths: Paths::default(),
            split: SplitRatios::default(),
            synth: SynthConfig::default(),
            segmenter: SegmenterConfig::default(),
            window: WindowConfig::default(),
            method_a: MethodAConfig::default(),
            method_b: MethodBConfig::default(),
            rnn: desk_rnn(),
        }
    }
}

fn desk_rnn() -> RnnConfig {
    let mut rnn = RnnConfig::desk();
    rnn.sgdm.max_epochs = 60;
    rnn
}

impl PipelineConfig {
    /// Full-sized networks and a 20-class vocabulary.
    pub fn paper_scale() -> Self {
        PipelineConfig {
            synth: SynthConfig {
                n_classes: 20,
                n_sequences: 700,
                gestures_per_sequence: 10,
                ..SynthConfig::default()
            },
            rnn: RnnConfig::default(),
            ..Self::default()
        }
    }

    /// Profile defaults overlaid with the keys of a TOML document.
    pub fn from_toml(text: &str, paper_scale: bool) -> Result<Self> {
        let base = if paper_scale { Self::paper_scale() } else { Self::default() };
        let mut value = toml::Value::try_from(&base).map_err(|e| Error::invalid(e.to_string()))?;
        let overlay: toml::Value = toml::from_str(text).map_err(|e| config_error(&e))?;
        merge(&mut value, overlay);
        let cfg: PipelineConfig = value.try_into().map_err(|e: toml::de::Error| config_error(&e))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, paper_scale: bool) -> Result<Self> {
        match path {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_toml(&text, paper_scale).map_err(|e| e.with_file(p))
            }
            None => {
                let cfg = if paper_scale { Self::paper_scale() } else { Self::default() };
                cfg.validate()?;
                Ok(cfg)
            }
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.split;
        if !(r.train > 0.0 && r.val >= 0.0 && r.train + r.val < 1.0) {
            return Err(Error::invalid("split ratios must satisfy train > 0, val >= 0, train + val < 1"));
        }
        self.synth.validate()?;
        self.segmenter.validate()?;
        self.window.validate()?;
        self.method_a.thresholds.validate()?;
        self.method_b.validate()?;
        self.rnn.validate()
    }

    fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    fn method_dir(&self, method: Method) -> PathBuf {
        self.paths.model_dir.join(method.name())
    }

    fn prediction_dir(&self, method: Method, split: Split) -> PathBuf {
        self.paths.report_dir.join(method.name()).join(split.name())
    }
}

fn config_error(e: &dyn fmt::Display) -> Error {
    Error::parse(0, format!("config: {}", e.to_string().trim()))
}

fn merge(base: &mut toml::Value, overlay: toml::Value) {
    match (base, overlay) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

// ---------------------------------------------------------------------------
// file helpers

fn create_dir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_file(p: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(p, contents).map_err(|e| Error::io(p, e))
}

fn read_file(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(|e| Error::io(p, e))
}

// ---------------------------------------------------------------------------
// manifest

pub const MANIFEST: &str = "manifest.txt";

/// Sequence ids per split, in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Manifest {
    pub splits: BTreeMap<Split, Vec<String>>,
}

impl Manifest {
    pub fn ids(&self, split: Split) -> &[String] {
        self.splits.get(&split).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("GMANIFEST 1\n");
        for (split, ids) in &self.splits {
            for id in ids {
                let _ = writeln!(s, "{split} {id}");
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        match lines.next() {
            Some((_, "GMANIFEST 1")) => {}
            _ => return Err(Error::parse(1, "expected `GMANIFEST 1`")),
        }
        let mut m = Manifest::default();
        let mut seen = std::collections::BTreeSet::new();
        for (ln, line) in lines.filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 2 {
                return Err(Error::parse(ln, "expected `<split> <sequence_id>`"));
            }
            let split: Split = f[0].parse().map_err(|e: Error| Error::parse(ln, e.to_string()))?;
            if !seen.insert(f[1].to_string()) {
                return Err(Error::parse(ln, format!("sequence {} listed twice", f[1])));
            }
            m.splits.entry(split).or_default().push(f[1].to_string());
        }
        Ok(m)
    }

    pub fn load(data_dir: &Path) -> Result<Self> {
        let p = data_dir.join(MANIFEST);
        Self::parse(&read_file(&p)?).map_err(|e| e.with_file(p))
    }
}

/// Keeps the split shuffle independent of the generator stream.
const SPLIT_STREAM: u64 = 0x5EED_0000_0000_0001;

/// Assigns `ids` to splits after a seeded shuffle; each split keeps the
/// original id order.
pub fn assign_splits(ids: &[String], ratios: SplitRatios, seed: u64) -> Manifest {
    let n = ids.len();
    let n_train = ((n as f64 * ratios.train).round() as usize).min(n);
    let n_val = ((n as f64 * ratios.val).round() as usize).min(n - n_train);
    let mut order: Vec<usize> = (0..n).collect();
    SplitMix64::new(seed ^ SPLIT_STREAM).shuffle(&mut order);
    let mut which = vec![Split::Test; n];
    for (k, &i) in order.iter().enumerate() {
        if k < n_train {
            which[i] = Split::Train;
        } else if k < n_train + n_val {
            which[i] = Split::Val;
        }
    }
    let mut m = Manifest::default();
    for split in Split::ALL {
        m.splits.insert(split, (0..n).filter(|&i| which[i] == split).map(|i| ids[i].clone()).collect());
    }
    m
}

// ---------------------------------------------------------------------------
// dataset

fn sequence_path(data_dir: &Path, id: &str) -> PathBuf {
    data_dir.join(format!("{id}.gskel"))
}

/// Writes the synthetic sequences and the split manifest.
pub fn cmd_generate(cfg: &PipelineConfig) -> Result<Manifest> {
    let data = &cfg.paths.data_dir;
    create_dir(data)?;
    let seqs = generate_synthetic(&cfg.synth_config())?;
    let mut ids = Vec::with_capacity(seqs.len());
    for s in &seqs {
        save_sequence(sequence_path(data, &s.sequence.sequence_id), &s.sequence, Some(&s.labels))?;
        ids.push(s.sequence.sequence_id.clone());
    }
    let manifest = assign_splits(&ids, cfg.split, cfg.seed);
    write_file(&data.join(MANIFEST), manifest.to_text())?;
    Ok(manifest)
}

/// A sequence with its ground truth.
#[derive(Debug, Clone)]
pub struct Labelled {
    pub sequence: SkeletonSequence,
    pub labels: FrameLabels,
}

pub fn load_split(cfg: &PipelineConfig, split: Split) -> Result<Vec<Labelled>> {
    let manifest = Manifest::load(&cfg.paths.data_dir)?;
    let ids = manifest.ids(split);
    if ids.is_empty() {
        return Err(Error::Missing(format!("split {split} lists no sequences")));
    }
    ids.iter()
        .map(|id| {
            let path = sequence_path(&cfg.paths.data_dir, id);
            if !path.exists() {
                return Err(Error::Missing(format!("sequence {id} from the {split} manifest has no file {}", path.display())));
            }
            let (sequence, labels) = load_sequence(&path)?;
            if sequence.sequence_id != *id {
                return Err(Error::invalid(format!("{} holds sequence {}, expected {id}", path.display(), sequence.sequence_id)));
            }
            Ok(Labelled { sequence, labels })
        })
        .collect()
}

fn fit_stats(train: &[Labelled]) -> Result<FeatureStats> {
    let refs: Vec<&SkeletonSequence> = train.iter().map(|l| &l.sequence).collect();
    FeatureStats::fit(&refs)
}

fn descriptors_of(stats: &FeatureStats, seqs: &[Labelled]) -> Result<Vec<Array2<f64>>> {
    seqs.iter().map(|l| stats.descriptors(&l.sequence)).collect()
}

/// Fits feature statistics on the training split and dumps standardized
/// descriptors of every split.
pub fn cmd_extract(cfg: &PipelineConfig) -> Result<usize> {
    let stats = fit_stats(&load_split(cfg, Split::Train)?)?;
    let dir = cfg.paths.data_dir.join("descriptors");
    create_dir(&dir)?;
    let mut count = 0;
    for split in Split::ALL {
        let seqs = match load_split(cfg, split) {
            Ok(s) => s,
            Err(Error::Missing(_)) => continue,
            Err(e) => return Err(e),
        };
        for l in &seqs {
            let d = stats.descriptors(&l.sequence)?;
            write_descriptor_dump(dir.join(format!("{}.gdesc", l.sequence.sequence_id)), d.view())?;
            count += 1;
        }
    }
    Ok(count)
}

// ---------------------------------------------------------------------------
// training

pub const SEGMENTER_FILE: &str = "segmenter.gmodel";
pub const RNN_FILE: &str = "rnn.gmodel";
pub const TRACE_FILE: &str = "trace.txt";

pub fn classifier_file(scale_step: usize) -> String {
    format!("classifier_s{scale_step}.gmodel")
}

fn push_trace(trace: &mut String, name: &str, losses: &[f64]) {
    for (i, l) in losses.iter().enumerate() {
        let _ = writeln!(trace, "{name} {i} {l}");
    }
}

fn train_segmenter_on(cfg: &PipelineConfig, stats: &FeatureStats, train: &[Labelled], desc: &[Array2<f64>]) -> Result<(NetworkModel, Vec<f64>)> {
    let pairs: Vec<_> = desc.iter().zip(train).map(|(d, l)| (d.view(), &l.labels)).collect();
    let mut rng = SplitMix64::new(cfg.segmenter.seed);
    let (x, t) = build_binary_training_set(&pairs, &cfg.segmenter, &mut rng)?;
    let (model, out) = train_segmenter(x.view(), t.view(), Some(stats.clone()), &cfg.segmenter)?;
    Ok((model, out.trace))
}

fn train_classifier_on(cfg: &PipelineConfig, stats: &FeatureStats, train: &[Labelled], desc: &[Array2<f64>], s: usize) -> Result<(NetworkModel, Vec<f64>)> {
    let annotations: Vec<Vec<GestureAnnotation>> = train.iter().map(|l| l.labels.to_annotations()).collect();
    let pairs: Vec<_> = desc.iter().zip(&annotations).map(|(d, a)| (d.view(), a.as_slice())).collect();
    let (x, classes) = build_window_training_set(&pairs, s, &cfg.window)?;
    let (model, out) = train_window_classifier(x.view(), &classes, s, Some(stats.clone()), &cfg.window)?;
    Ok((model, out.trace))
}

/// Trains every network of `method` on the training split. Returns the
/// files written.
pub fn cmd_train(cfg: &PipelineConfig, method: Method, mut log: impl FnMut(&str)) -> Result<Vec<PathBuf>> {
    let train = load_split(cfg, Split::Train)?;
    let stats = fit_stats(&train)?;
    let desc = descriptors_of(&stats, &train)?;
    let dir = cfg.method_dir(method);
    create_dir(&dir)?;
    let mut written = Vec::new();
    let mut trace = String::new();
    let save = |model: NetworkModel, name: &str, written: &mut Vec<PathBuf>| -> Result<()> {
        let p = dir.join(name);
        model.save(&p)?;
        written.push(p);
        Ok(())
    };

    match method {
        Method::A | Method::B => {
            log("training segmenter");
            let (seg, losses) = train_segmenter_on(cfg, &stats, &train, &desc)?;
            push_trace(&mut trace, "segmenter", &losses);
            save(seg, SEGMENTER_FILE, &mut written)?;
            let scales: Vec<usize> = if method == Method::A {
                vec![cfg.method_a.scale_step]
            } else {
                cfg.method_b.scale_steps.to_vec()
            };
            for s in scales {
                log(&format!("training window classifier, scale step {s}"));
                let (m, losses) = train_classifier_on(cfg, &stats, &train, &desc, s)?;
                push_trace(&mut trace, &format!("classifier_s{s}"), &losses);
                save(m, &classifier_file(s), &mut written)?;
            }
        }
        Method::C => {
            let mut windows = Vec::new();
            for (d, l) in desc.iter().zip(&train) {
                windows.extend(extract_train_windows(d.view(), &l.labels, &cfg.rnn)?);
            }
            log(&format!("training recurrent labeler on {} windows", windows.len()));
            let (m, out) = train_rnn(&windows, Some(stats.clone()), &cfg.rnn, |e, l| log(&format!("epoch {e} loss {l:.6}")))?;
            push_trace(&mut trace, "rnn", &out.epoch_losses);
            save(m, RNN_FILE, &mut written)?;
        }
    }
    let tp = dir.join(TRACE_FILE);
    write_file(&tp, trace)?;
    written.push(tp);
    Ok(written)
}

// ---------------------------------------------------------------------------
// prediction

pub const LABELS_FILE: &str = "labels.txt";
pub const INTERVALS_FILE: &str = "intervals.txt";
pub const PERIODS_FILE: &str = "periods.txt";

fn load_model(path: &Path) -> Result<NetworkModel> {
    if !path.exists() {
        return Err(Error::Missing(format!("model {} not found; run `train` first", path.display())));
    }
    NetworkModel::load(path)
}

fn paint(labels: &mut [u8], annotations: &[GestureAnnotation]) {
    for a in annotations {
        labels[a.start_frame..=a.end_frame].fill(a.class_id);
    }
}

/// Predictions for one split.
#[derive(Debug, Clone, Default)]
pub struct Predictions {
    pub labels: Vec<(String, FrameLabels)>,
    /// Activity periods, methods A and B only.
    pub periods: Option<Vec<(String, Vec<ActivityPeriod>)>>,
}

pub fn predict_split(cfg: &PipelineConfig, method: Method, split: Split) -> Result<Predictions> {
    let seqs = load_split(cfg, split)?;
    let dir = cfg.method_dir(method);
    let mut out = Predictions::default();
    match method {
        Method::A | Method::B => {
            let seg = load_model(&dir.join(SEGMENTER_FILE))?;
            let stats = seg.stats()?.clone();
            let classifiers: Vec<NetworkModel> = match method {
                Method::A => vec![load_model(&dir.join(classifier_file(cfg.method_a.scale_step)))?],
                _ => cfg
                    .method_b
                    .scale_steps
                    .iter()
                    .map(|&s| load_model(&dir.join(classifier_file(s))))
                    .collect::<Result<_>>()?,
            };
            for c in &classifiers {
                if c.stats()? != &stats {
                    return Err(Error::ModelMismatch("classifier and segmenter were fitted on different feature statistics".into()));
                }
            }
            let mut all_periods = Vec::new();
            for l in &seqs {
                let d = stats.descriptors(&l.sequence)?;
                let periods = segment(&seg, d.view(), &cfg.segmenter)?;
                let mut labels = vec![0u8; l.sequence.len()];
                for &p in &periods {
                    let ann = match method {
                        Method::A => classify_period_method_a(&classifiers[0], d.view(), p, &cfg.method_a, &cfg.window)?,
                        _ => {
                            let models: &[NetworkModel; 3] = classifiers.as_slice().try_into().expect("three scales");
                            classify_period_method_b(models, d.view(), p, &cfg.method_b, &cfg.window)?
                        }
                    };
                    paint(&mut labels, &ann);
                }
                out.labels.push((l.sequence.sequence_id.clone(), FrameLabels::new(labels)?));
                all_periods.push((l.sequence.sequence_id.clone(), periods));
            }
            out.periods = Some(all_periods);
        }
        Method::C => {
            // Method C never touches the segmenter.
            let rnn = load_model(&dir.join(RNN_FILE))?;
            let stats = rnn.stats()?.clone();
            for l in &seqs {
                let d = stats.descriptors(&l.sequence)?;
                out.labels.push((l.sequence.sequence_id.clone(), label_sequence(&rnn, d.view(), &cfg.rnn)?));
            }
        }
    }
    Ok(out)
}

pub fn format_labels(preds: &[(String, FrameLabels)]) -> String {
    let mut s = String::new();
    for (id, l) in preds {
        let vals: Vec<String> = l.as_slice().iter().map(u8::to_string).collect();
        let _ = writeln!(s, "{id} {}", vals.join(" "));
    }
    s
}

pub fn parse_labels(text: &str) -> Result<BTreeMap<String, FrameLabels>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let mut toks = line.split_whitespace();
        let id = toks.next().expect("non-empty line").to_string();
        let vals = toks
            .map(|t| t.parse::<u8>().map_err(|_| Error::parse(i + 1, format!("malformed label {t:?}"))))
            .collect::<Result<Vec<u8>>>()?;
        let labels = FrameLabels::new(vals).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if out.insert(id.clone(), labels).is_some() {
            return Err(Error::parse(i + 1, format!("sequence {id} listed twice")));
        }
    }
    Ok(out)
}

/// Writes labels, intervals and (A/B) periods for the split.
pub fn cmd_predict(cfg: &PipelineConfig, method: Method, split: Split) -> Result<PathBuf> {
    let preds = predict_split(cfg, method, split)?;
    let dir = cfg.prediction_dir(method, split);
    create_dir(&dir)?;
    write_file(&dir.join(LABELS_FILE), format_labels(&preds.labels))?;
    let mut intervals = String::new();
    for (id, l) in &preds.labels {
        for a in l.to_annotations() {
            let _ = writeln!(intervals, "{id} {} {} {}", a.class_id, a.start_frame, a.end_frame);
        }
    }
    write_file(&dir.join(INTERVALS_FILE), intervals)?;
    if let Some(periods) = &preds.periods {
        let mut s = String::new();
        for (id, ps) in periods {
            for p in ps {
                let _ = writeln!(s, "{id} {} {}", p.start, p.end);
            }
        }
        write_file(&dir.join(PERIODS_FILE), s)?;
    }
    Ok(dir)
}

fn parse_periods(text: &str) -> Result<BTreeMap<String, Vec<ActivityPeriod>>> {
    let mut out: BTreeMap<String, Vec<ActivityPeriod>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        let num = |t: &str| t.parse::<usize>().map_err(|_| Error::parse(i + 1, format!("bad frame {t:?}")));
        if f.len() != 3 {
            return Err(Error::parse(i + 1, "expected `<sequence_id> <start> <end>`"));
        }
        out.entry(f[0].to_string()).or_default().push(ActivityPeriod {
            start: num(f[1])?,
            end: num(f[2])?,
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// evaluation

pub const REPORT_TABLE: &str = "report.txt";
pub const REPORT_KV: &str = "report.kv";
pub const CONFUSION_FILE: &str = "confusion.txt";
pub const CONFUSION_LOG_FILE: &str = "confusion_log10.txt";
pub const TIMELINES_FILE: &str = "timelines.txt";

#[derive(Debug, Clone)]
pub struct SplitReport {
    pub evaluation: Evaluation,
    /// Frame accuracy of the segmenter's activity periods (methods A and B).
    pub segmenter_accuracy: Option<f64>,
}

pub fn cmd_evaluate(cfg: &PipelineConfig, method: Method, split: Split) -> Result<SplitReport> {
    let seqs = load_split(cfg, split)?;
    let dir = cfg.prediction_dir(method, split);
    let lp = dir.join(LABELS_FILE);
    if !lp.exists() {
        return Err(Error::Missing(format!("no predictions at {}; run `predict` first", lp.display())));
    }
    let preds = parse_labels(&read_file(&lp)?).map_err(|e| e.with_file(&lp))?;
    let mut pairs = Vec::with_capacity(seqs.len());
    for l in &seqs {
        let id = &l.sequence.sequence_id;
        let p = preds
            .get(id)
            .ok_or_else(|| Error::Missing(format!("no prediction for sequence {id}")))?;
        pairs.push(LabelPair {
            sequence_id: id,
            truth: &l.labels,
            predicted: p,
        });
    }
    let evaluation = evaluate(&pairs)?;

    let pp = dir.join(PERIODS_FILE);
    let segmenter_accuracy = if method != Method::C && pp.exists() {
        let periods = parse_periods(&read_file(&pp)?).map_err(|e| e.with_file(&pp))?;
        let mut truth = Vec::new();
        let mut pred = Vec::new();
        for l in &seqs {
            truth.extend(l.labels.activity());
            let ps = periods.get(&l.sequence.sequence_id).map(Vec::as_slice).unwrap_or(&[]);
            pred.extend(periods_to_activity(ps, l.sequence.len()));
        }
        Some(frame_accuracy(&truth, &pred)?)
    } else {
        None
    };

    let mut kv = format!("method = {method}\nsplit = {split}\n");
    if let Some(a) = segmenter_accuracy {
        let _ = writeln!(kv, "segmenter_frame_accuracy = {a:.6}");
    }
    kv.push_str(&evaluation.to_kv());
    let mut table = format!("method {method}, split {split}\n\n");
    if let Some(a) = segmenter_accuracy {
        let _ = writeln!(table, "segmenter frame accuracy  {a:.4}");
    }
    table.push_str(&evaluation.to_table());
    let timelines: String = pairs
        .iter()
        .map(|p| timeline(p.sequence_id, p.truth, p.predicted))
        .collect::<Vec<_>>()
        .join("\n");

    write_file(&dir.join(REPORT_KV), kv)?;
    write_file(&dir.join(REPORT_TABLE), table)?;
    write_file(&dir.join(CONFUSION_FILE), evaluation.confusion.to_grid())?;
    write_file(&dir.join(CONFUSION_LOG_FILE), evaluation.confusion.to_log_grid())?;
    write_file(&dir.join(TIMELINES_FILE), timelines)?;
    Ok(SplitReport {
        evaluation,
        segmenter_accuracy,
    })
}

/// Collects the headline numbers of every evaluated method and split into
/// `<reports>/summary.txt` and returns its text.
pub fn cmd_report(cfg: &PipelineConfig) -> Result<String> {
    let mut s = String::from("method split mean_jaccard frame_accuracy segmenter_frame_accuracy\n");
    let mut found = false;
    for method in [Method::A, Method::B, Method::C] {
        for split in Split::ALL {
            let p = cfg.prediction_dir(method, split).join(REPORT_KV);
            if !p.exists() {
                continue;
            }
            found = true;
            let kv: BTreeMap<String, String> = read_file(&p)?
                .lines()
                .filter_map(|l| l.split_once(" = "))
                .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
                .collect();
            let get = |k: &str| kv.get(k).cloned().unwrap_or_else(|| "-".into());
            let _ = writeln!(
                s,
                "{method} {split} {} {} {}",
                get("mean_jaccard"),
                get("frame_accuracy"),
                get("segmenter_frame_accuracy")
            );
        }
    }
    if !found {
        return Err(Error::Missing("no evaluation reports found; run `evaluate` first".into()));
    }
    create_dir(&cfg.paths.report_dir)?;
    write_file(&cfg.paths.report_dir.join("summary.txt"), &s)?;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_overlay_and_profiles() {
        let c = PipelineConfig::from_toml("seed = 9\n[rnn]\nmin_run = 20\n[rnn.sgdm]\nmax_epochs = 3\n", false).unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.rnn.min_run, 20);
        assert_eq!(c.rnn.sgdm.max_epochs, 3);
        assert_eq!(c.rnn.hidden, vec![64, 64, 32]);
        assert_eq!(c.rnn.sgdm.momentum, 0.9);
        let p = PipelineConfig::from_toml("", true).unwrap();
        assert_eq!(p.rnn.hidden, vec![1024, 1024, 512]);
        assert!(PipelineConfig::from_toml("bogus = 1\n", false).is_err());
        assert!(PipelineConfig::from_toml("[segmenter]\nthreshold = 1.5\n", false).is_err());
        let round = PipelineConfig::from_toml(&c.to_toml(), false).unwrap();
        assert_eq!(round, c);
    }

    #[test]
    fn splits_are_disjoint_and_proportional() {
        let ids: Vec<String> = (0..24).map(|i| format!("seq_{i:04}")).collect();
        let m = assign_splits(&ids, SplitRatios::default(), 42);
        let (a, b, c) = (m.ids(Split::Train), m.ids(Split::Val), m.ids(Split::Test));
        assert_eq!((a.len(), b.len(), c.len()), (14, 5, 5));
        let mut all: Vec<&String> = a.iter().chain(b).chain(c).collect();
        all.sort();
        all.dedup();
        assert_eq!(all.len(), 24);
        assert_eq!(Manifest::parse(&m.to_text()).unwrap(), m);
        assert_eq!(assign_splits(&ids, SplitRatios::default(), 42), m);
        assert!(Manifest::parse("GMANIFEST 1\ntrain x\ntest x\n").is_err());
    }

    #[test]
    fn labels_round_trip() {
        let preds = vec![
            ("a".to_string(), FrameLabels::new(vec![0, 3, 3]).unwrap()),
            ("b".to_string(), FrameLabels::new(vec![1]).unwrap()),
        ];
        let parsed = parse_labels(&format_labels(&preds)).unwrap();
        assert_eq!(parsed["a"], preds[0].1);
        assert_eq!(parsed["b"], preds[1].1);
        assert!(parse_labels("a 0 99\n").is_err());
    }
}
