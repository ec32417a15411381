//! Command-line front end. [`run`] returns the process exit code: 0 on
//! success, 1 on I/O failure, 2 on usage or validation errors.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hetsed_core::eval::{self, PsdsConfig, SegmentPooling};
use hetsed_core::postprocess::{self, CsebbParams, Sebb};
use hetsed_core::ssl::{self, ClipLabels, ClipOutputs, TrainConfig};
use hetsed_core::synth::{self, GroundTruthConfig, RenderConfig};
use hetsed_core::{ClassList, ClassVocabulary, ClipMetadata, Dataset, EventList, MaskMode, Posteriorgram};
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config;
use crate::error::{invalid, Error, Result};
use crate::features::{read_wav, Extractor, FeatureConfig};
use crate::formats::{self, ClassParams, ParamsFile, Report};

#[derive(Debug, Parser)]
#[command(name = "hetsed", version, about = "Sound event detection toolkit for heterogeneous datasets", args_override_self = true)]
struct Cli {
    /// TOML file with default flag values, one table per subcommand
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Worker threads (0 uses every core)
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Log-mel features for every WAV file of a directory
    Features(FeaturesArgs),
    /// Synthetic references and corrupted posteriorgrams
    Synth(SynthArgs),
    /// Turn posteriorgrams into events
    Postprocess(PostprocessArgs),
    /// Per-class cSEBB grid search on validation data
    TuneCsebb(TuneArgs),
    /// Average posteriorgrams of several systems
    Ensemble(EnsembleArgs),
    /// Scores
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Masked training loss of one prediction file
    Loss(LossArgs),
}

#[derive(Debug, Args)]
struct FeaturesArgs {
    #[arg(long, value_name = "DIR")]
    input: PathBuf,
    #[arg(long, default_value_t = 256)]
    hop: usize,
    #[arg(long, default_value_t = 2048)]
    window: usize,
    #[arg(long, default_value_t = 128)]
    n_mels: usize,
    #[arg(long, default_value_t = 0.0)]
    f_min: f64,
    #[arg(long, default_value_t = 8000.0)]
    f_max: f64,
    #[arg(long, default_value_t = 10.0)]
    clip_seconds: f64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    clips: usize,
    /// Class list file (`desed|maestro<TAB>name[<TAB>mapped,...]`); defaults
    /// to the ten DESED classes
    #[arg(long, value_name = "FILE")]
    classes: Option<PathBuf>,
    #[arg(long, default_value_t = 3.0)]
    mean_events: f64,
    #[arg(long, default_value_t = 10.0)]
    clip_len: f64,
    #[arg(long, default_value_t = 0.016)]
    frame_period: f64,
    /// Moving-average width in frames
    #[arg(long, default_value_t = 3)]
    blur: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 1.0)]
    dip_prob: f64,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// Median filter, then per-class thresholds
    Median,
    /// Per-class thresholds on the raw frames
    Frame,
    /// Change-point bounding boxes, optionally thresholded
    Csebb,
}

#[derive(Debug, Args)]
struct PostprocessArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// TOML with `[default]` and `[class.<name>]` tables
    #[arg(long, value_name = "FILE")]
    params: Option<PathBuf>,
    /// A `.sedp` file or a directory of them
    #[arg(long = "in", value_name = "PATH")]
    input: PathBuf,
    #[arg(long, value_name = "TSV")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PsdsFlags {
    #[arg(long, default_value_t = 0.7)]
    dtc: f64,
    #[arg(long, default_value_t = 0.7)]
    gtc: f64,
    #[arg(long, default_value_t = 0.3)]
    cttc: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha_ct: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha_st: f64,
    #[arg(long, default_value_t = 100.0)]
    emax: f64,
}

impl PsdsFlags {
    fn config(&self) -> Result<PsdsConfig> {
        let cfg = PsdsConfig {
            rho_dtc: self.dtc,
            rho_gtc: self.gtc,
            rho_cttc: self.cttc,
            alpha_ct: self.alpha_ct,
            alpha_st: self.alpha_st,
            e_max: self.emax,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct TuneArgs {
    #[arg(long, value_name = "DIR")]
    val_posteriors: PathBuf,
    #[arg(long, value_name = "TSV")]
    val_refs: PathBuf,
    /// TOML of candidate lists; the built-in grid when absent
    #[arg(long, value_name = "FILE")]
    grid: Option<PathBuf>,
    #[command(flatten)]
    psds: PsdsFlags,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EnsembleArgs {
    /// Posteriorgram files, or directories holding one file per clip
    #[arg(long = "in", value_name = "PATH", num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    #[arg(long, value_name = "PATH")]
    out: PathBuf,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Intersection-based PSDS of detections
    Psds(PsdsArgs),
    /// Segment-based macro partial AUC of posteriorgrams
    Mpauc(MpaucArgs),
    /// Sum of a PSDS and an mPAUC report
    Joint(JointArgs),
}

#[derive(Debug, Args)]
struct PsdsArgs {
    /// Events TSV; a confidence column turns it into a threshold sweep
    #[arg(long, value_name = "TSV")]
    dets: PathBuf,
    #[arg(long, value_name = "TSV")]
    refs: PathBuf,
    #[arg(long, value_name = "TSV")]
    durations: PathBuf,
    #[command(flatten)]
    psds: PsdsFlags,
    #[arg(long, value_name = "TSV")]
    report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Pooling {
    Max,
    Mean,
}

#[derive(Debug, Args)]
struct MpaucArgs {
    #[arg(long, value_name = "PATH")]
    posteriors: PathBuf,
    #[arg(long, value_name = "TSV")]
    refs: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    segment: f64,
    #[arg(long, default_value_t = 0.1)]
    max_fpr: f64,
    #[arg(long, default_value_t = 0.5)]
    hard_threshold: f64,
    #[arg(long, value_enum, default_value_t = Pooling::Max)]
    pooling: Pooling,
    #[arg(long, value_name = "TSV")]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct JointArgs {
    #[arg(long, value_name = "TSV")]
    psds: PathBuf,
    #[arg(long, value_name = "TSV")]
    mpauc: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OriginArg {
    Desed,
    Maestro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Independent,
    Baseline,
}

#[derive(Debug, Args)]
struct LossArgs {
    /// Frame probabilities of one clip (`.sedp`)
    #[arg(long, value_name = "FILE")]
    pred: PathBuf,
    /// Events TSV; a confidence column gives soft targets
    #[arg(long, value_name = "TSV")]
    target: PathBuf,
    #[arg(long, value_enum)]
    origin: OriginArg,
    #[arg(long, value_enum, default_value_t = ModeArg::Independent)]
    mode: ModeArg,
    /// Class list file; the 21-class default vocabulary when absent
    #[arg(long, value_name = "FILE")]
    classes: Option<PathBuf>,
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Errors are reported on stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match config::expand_args(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Features(a) => features(a),
        Command::Synth(a) => synth(a),
        Command::Postprocess(a) => postprocess(a),
        Command::TuneCsebb(a) => tune(a),
        Command::Ensemble(a) => ensemble(a),
        Command::Eval(EvalCommand::Psds(a)) => eval_psds(a),
        Command::Eval(EvalCommand::Mpauc(a)) => eval_mpauc(a),
        Command::Eval(EvalCommand::Joint(a)) => eval_joint(a),
        Command::Loss(a) => loss(a),
    })
}

/// Writes to stdout; a closed pipe is not an error.
fn emit(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn features(a: FeaturesArgs) -> Result<()> {
    let extractor = Extractor::new(FeatureConfig {
        window: a.window,
        hop: a.hop,
        n_mels: a.n_mels,
        f_min: a.f_min,
        f_max: a.f_max,
        clip_seconds: a.clip_seconds,
        ..FeatureConfig::default()
    })?;
    let wavs = formats::list_files(&a.input, "wav")?;
    if wavs.is_empty() {
        log::warn!("no WAV files in {}", a.input.display());
    }
    wavs.par_iter()
        .map(|p| {
            let clip = read_wav(p)?;
            let mel = extractor.extract(&clip)?;
            formats::write_features(&a.out.join(format!("{}.{}", clip.clip_id, formats::FEATURE_EXT)), &mel)
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(())
}

fn synth_classes(path: Option<&Path>) -> Result<Vec<String>> {
    match path {
        Some(p) => {
            let list = ClassList::parse(&formats::read_text(p)?).map_err(|e| Error::format(p, e.to_string()))?;
            Ok(list.to_vocabulary().map_err(|e| Error::format(p, e.to_string()))?.names().to_vec())
        }
        None => {
            let vocab = ClassVocabulary::dcase_default();
            Ok(vocab.indices_of(hetsed_core::Origin::Desed).map(|i| vocab.names()[i].clone()).collect())
        }
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let classes = synth_classes(a.classes.as_deref())?;
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let gt = GroundTruthConfig {
        n_clips: a.clips,
        n_classes: classes.len(),
        mean_events_per_clip: a.mean_events,
        clip_len: a.clip_len,
        frame_period: a.frame_period,
        dataset: Dataset::DesedStrong,
    };
    let (refs, metas) = synth::gen_ground_truth(&gt, &mut rng)?;
    let render = RenderConfig { frame_period: a.frame_period, blur: a.blur, noise_sd: a.noise, dip_prob: a.dip_prob };
    let rendered = synth::render_posteriors(&refs, &metas, classes.len(), &render, &mut rng)?;
    formats::write_events(&a.out.join("refs.tsv"), &refs, &classes)?;
    let durations: BTreeMap<String, f64> = metas.iter().map(|m| (m.clip_id.clone(), m.duration)).collect();
    formats::write_durations(&a.out.join("durations.tsv"), &durations)?;
    let dir = a.out.join("posteriors");
    rendered
        .par_iter()
        .map(|r| formats::write_posterior(&formats::posterior_path(&dir, r.post.clip_id()), &r.post, &classes))
        .collect::<Result<Vec<()>>>()?;
    Ok(())
}

fn load_params(path: Option<&Path>, classes: &[String]) -> Result<Vec<ClassParams>> {
    match path {
        Some(p) => formats::read_params(p)?.resolve(p, classes),
        None => Ok(vec![ClassParams::default(); classes.len()]),
    }
}

fn events_of_clip(method: Method, post: &Posteriorgram, params: &[ClassParams]) -> Result<EventList> {
    let medians = |default: usize| -> Vec<usize> { params.iter().map(|p| p.median_window.unwrap_or(default)).collect() };
    let thresholds: Vec<f64> = params.iter().map(|p| p.threshold.unwrap_or(0.5)).collect();
    Ok(match method {
        Method::Frame => postprocess::frame_threshold_merge(post, &thresholds)?,
        Method::Median => {
            let filtered = postprocess::median_filter_post(post, &medians(7))?;
            postprocess::frame_threshold_merge(&filtered, &thresholds)?
        }
        Method::Csebb => {
            let filtered;
            let post = if params.iter().any(|p| p.median_window.is_some()) {
                filtered = postprocess::median_filter_post(post, &medians(1))?;
                &filtered
            } else {
                post
            };
            let csebb: Vec<CsebbParams> = params.iter().map(ClassParams::csebb).collect();
            let boxes = postprocess::csebb_detect(post, &csebb)?;
            if params.iter().all(|p| p.threshold.is_some()) {
                postprocess::event_threshold(&boxes, &thresholds)?
            } else {
                // Without thresholds every box is kept with its confidence so
                // that evaluation can sweep it.
                hetsed_core::canonicalize_events(boxes.iter().map(Sebb::to_event).collect())?
            }
        }
    })
}

fn postprocess(a: PostprocessArgs) -> Result<()> {
    let (classes, posts) = formats::read_posteriors(&a.input)?;
    let params = load_params(a.params.as_deref(), &classes)?;
    let per_clip = posts
        .par_iter()
        .map(|p| events_of_clip(a.method, p, &params))
        .collect::<Result<Vec<EventList>>>()?;
    let all = hetsed_core::canonicalize_events(per_clip.into_iter().flat_map(EventList::into_vec).collect())?;
    formats::write_events(&a.out, &all, &classes)
}

fn read_refs(path: &Path, classes: &[String]) -> Result<EventList> {
    formats::resolve_events(path, &formats::read_events(path)?, classes)
}

fn total_hours(posts: &[Posteriorgram]) -> f64 {
    posts.iter().map(Posteriorgram::duration).sum::<f64>() / 3600.0
}

fn tune(a: TuneArgs) -> Result<()> {
    let cfg = a.psds.config()?;
    let (classes, posts) = formats::read_posteriors(&a.val_posteriors)?;
    let refs = read_refs(&a.val_refs, &classes)?;
    let grid = match &a.grid {
        Some(p) => formats::read_grid(p)?,
        None => CsebbParams::default_grid(),
    };
    let hours = total_hours(&posts);
    let n_classes = classes.len();
    let chosen = postprocess::tune_csebb(&posts, &refs, &grid, |c, boxes, refs| {
        let dets: Vec<hetsed_core::Event> = boxes.iter().map(Sebb::to_event).collect();
        let dets: Vec<&hetsed_core::Event> = dets.iter().collect();
        let pts = eval::class_roc_points(&dets, refs, c, n_classes, hours, &cfg);
        eval::class_psds(&pts, cfg.e_max)
    })?;
    for (c, name) in classes.iter().enumerate() {
        if !refs.iter().any(|e| e.class_idx == c) {
            log::warn!("class {name} has no validation references; its parameters are arbitrary");
        }
    }
    let file = ParamsFile {
        default: ClassParams::default(),
        class: classes.iter().cloned().zip(chosen.iter().map(ClassParams::from_csebb)).collect(),
    };
    formats::write_params(&a.out, &file)
}

fn ensemble(a: EnsembleArgs) -> Result<()> {
    let all_dirs = a.input.iter().all(|p| p.is_dir());
    if !all_dirs && a.input.iter().any(|p| p.is_dir()) {
        return Err(invalid("ensemble inputs must be all files or all directories"));
    }
    let sets = a
        .input
        .iter()
        .map(|p| formats::read_posteriors(p))
        .collect::<Result<Vec<_>>>()?;
    let classes = sets[0].0.clone();
    if let Some((i, _)) = sets.iter().enumerate().find(|(_, s)| s.0 != classes) {
        return Err(Error::format(&a.input[i], "class table differs from the first input"));
    }
    if !all_dirs {
        let posts: Vec<Posteriorgram> = sets.into_iter().map(|s| s.1.into_iter().next().expect("one file")).collect();
        // Files of one clip may carry different names; the first one wins.
        let id = posts[0].clip_id().to_owned();
        let posts = posts
            .into_iter()
            .map(|p| Posteriorgram::new(id.clone(), p.frame_period(), p.into_scores()))
            .collect::<hetsed_core::Result<Vec<_>>>()?;
        return formats::write_posterior(&a.out, &postprocess::ensemble_average(&posts)?, &classes);
    }
    let mut by_clip: BTreeMap<String, Vec<Posteriorgram>> = BTreeMap::new();
    for (_, posts) in sets {
        for p in posts {
            by_clip.entry(p.clip_id().to_owned()).or_default().push(p);
        }
    }
    let n = a.input.len();
    if let Some((clip, _)) = by_clip.iter().find(|(_, v)| v.len() != n) {
        return Err(invalid(format!("clip {clip} is missing from some inputs")));
    }
    let clips: Vec<(String, Vec<Posteriorgram>)> = by_clip.into_iter().collect();
    clips
        .par_iter()
        .map(|(clip, posts)| {
            let avg = postprocess::ensemble_average(posts)?;
            formats::write_posterior(&formats::posterior_path(&a.out, clip), &avg, &classes)
        })
        .collect::<Result<Vec<()>>>()?;
    Ok(())
}

fn eval_psds(a: PsdsArgs) -> Result<()> {
    let cfg = a.psds.config()?;
    let det_rows = formats::read_events(&a.dets)?;
    let ref_rows = formats::read_events(&a.refs)?;
    let classes = formats::labels_of(ref_rows.iter().chain(&det_rows));
    let refs = formats::resolve_events(&a.refs, &ref_rows, &classes)?;
    let dets = formats::resolve_events(&a.dets, &det_rows, &classes)?;
    let durations = formats::read_durations(&a.durations)?;
    for clip in refs.clip_ids().into_iter().chain(dets.clip_ids()) {
        if !durations.contains_key(clip) {
            return Err(Error::format(&a.durations, format!("no duration for clip {clip}")));
        }
    }
    let hours = durations.values().sum::<f64>() / 3600.0;
    let curve = eval::roc_from_confidences(&dets, &refs, classes.len(), hours, &cfg)?;
    for &c in &curve.excluded {
        log::warn!("class {} has no reference events and is excluded", classes[c]);
    }
    let value = eval::psds(&curve, &cfg);
    let last = curve.points.iter().take_while(|p| p.efpr <= cfg.e_max).last();
    let mut report = Report::default();
    report.push("psds", format!("{value:.6}"));
    let mut summary = format!(
        "PSDS {value:.6} (dtc {}, gtc {}, alpha_st {}, alpha_ct {}, e_max {})\n{:<32} TPR at e_max\n",
        cfg.rho_dtc, cfg.rho_gtc, cfg.alpha_st, cfg.alpha_ct, cfg.e_max, "class"
    );
    for (slot, &c) in curve.classes.iter().enumerate() {
        let tpr = last.map_or(0.0, |p| p.tpr_per_class[slot]);
        report.push(format!("tpr:{}", classes[c]), format!("{tpr:.6}"));
        summary.push_str(&format!("{:<32} {tpr:.6}\n", classes[c]));
    }
    emit(&summary);
    if let Some(path) = &a.report {
        formats::write_report(path, &report)?;
    }
    Ok(())
}

fn eval_mpauc(a: MpaucArgs) -> Result<()> {
    if !(a.segment > 0.0) {
        return Err(invalid("segment length must be positive"));
    }
    if !(a.max_fpr > 0.0 && a.max_fpr <= 1.0) {
        return Err(invalid("max FPR must lie in (0, 1]"));
    }
    let (classes, posts) = formats::read_posteriors(&a.posteriors)?;
    let refs = read_refs(&a.refs, &classes)?;
    let pooling = match a.pooling {
        Pooling::Max => SegmentPooling::Max,
        Pooling::Mean => SegmentPooling::Mean,
    };
    let blocks = posts
        .par_iter()
        .map(|p| {
            let scores = eval::segment_scores(p, a.segment, pooling)?;
            let events: Vec<hetsed_core::Event> = refs.iter().filter(|e| e.clip_id == p.clip_id()).cloned().collect();
            let soft = eval::segmentize(&events, p.clip_id(), classes.len(), p.duration(), a.segment)?;
            Ok((scores, eval::harden(soft.view(), a.hard_threshold)))
        })
        .collect::<Result<Vec<_>>>()?;
    let known: std::collections::BTreeSet<&str> = posts.iter().map(Posteriorgram::clip_id).collect();
    if let Some(e) = refs.iter().find(|e| !known.contains(e.clip_id.as_str())) {
        log::warn!("references for clip {} have no posteriorgram", e.clip_id);
    }
    let rows: usize = blocks.iter().map(|b| b.0.nrows()).sum();
    let mut scores = Array2::zeros((rows, classes.len()));
    let mut labels = Array2::from_elem((rows, classes.len()), false);
    let mut r = 0;
    for (s, l) in &blocks {
        scores.slice_mut(ndarray::s![r..r + s.nrows(), ..]).assign(s);
        labels.slice_mut(ndarray::s![r..r + s.nrows(), ..]).assign(l);
        r += s.nrows();
    }
    let result = eval::mpauc(scores.view(), labels.view(), a.max_fpr)?;
    for c in result.excluded() {
        log::warn!("class {} lacks positive or negative segments and is excluded", classes[c]);
    }
    let mut report = Report::default();
    report.push("mpauc", format!("{:.6}", result.value));
    let mut summary = format!("mPAUC {:.6} (max FPR {}, segment {} s)\n", result.value, a.max_fpr, a.segment);
    for (c, v) in result.per_class.iter().enumerate() {
        let shown = v.map_or_else(|| "excluded".to_owned(), |v| format!("{v:.6}"));
        summary.push_str(&format!("{:<32} {shown}\n", classes[c]));
        report.push(format!("pauc:{}", classes[c]), shown);
    }
    emit(&summary);
    if let Some(path) = &a.report {
        formats::write_report(path, &report)?;
    }
    Ok(())
}

fn eval_joint(a: JointArgs) -> Result<()> {
    let p = formats::read_report(&a.psds)?.value(&a.psds, "psds")?;
    let m = formats::read_report(&a.mpauc)?.value(&a.mpauc, "mpauc")?;
    emit(&format!("joint_score\t{:.3}\n", eval::joint_score(p, m)));
    Ok(())
}

fn frame_targets(events: &EventList, clip: &str, n_frames: usize, n_classes: usize, frame_period: f64) -> Array2<f64> {
    let mut y = Array2::zeros((n_frames, n_classes));
    for e in events.iter().filter(|e| e.clip_id == clip) {
        let v = e.confidence.unwrap_or(1.0);
        for t in 0..n_frames {
            let centre = (t as f64 + 0.5) * frame_period;
            if centre >= e.onset && centre < e.offset {
                y[[t, e.class_idx]] = f64::max(y[[t, e.class_idx]], v);
            }
        }
    }
    y
}

fn loss(a: LossArgs) -> Result<()> {
    let vocab = match &a.classes {
        Some(p) => ClassList::parse(&formats::read_text(p)?)
            .and_then(|l| l.to_vocabulary())
            .map_err(|e| Error::format(p, e.to_string()))?,
        None => ClassVocabulary::dcase_default(),
    };
    let pf = formats::read_posterior(&a.pred)?;
    if pf.classes != vocab.names() {
        return Err(Error::format(&a.pred, "class table does not match the vocabulary"));
    }
    let post = pf.post;
    let target = read_refs(&a.target, vocab.names())?;
    let y = frame_targets(&target, post.clip_id(), post.n_frames(), vocab.len(), post.frame_period());
    let (dataset, labels) = match a.origin {
        OriginArg::Desed => (Dataset::DesedStrong, ClipLabels::Strong(y)),
        OriginArg::Maestro => (Dataset::Maestro, ClipLabels::Soft(y)),
    };
    let mode = match a.mode {
        ModeArg::Independent => MaskMode::Independent,
        ModeArg::Baseline => MaskMode::Baseline,
    };
    let meta = ClipMetadata::new(post.clip_id(), dataset, post.duration())?;
    let outputs = ClipOutputs {
        frame_logits: post.scores().mapv(|p| {
            let p = p.clamp(ssl::PRED_CLAMP, 1.0 - ssl::PRED_CLAMP);
            (p / (1.0 - p)).ln()
        }),
        attn_logits: Array2::zeros((post.n_frames(), vocab.len())),
    };
    let cfg = TrainConfig { loss_mode: mode, ..TrainConfig::default() };
    let parts = ssl::clip_loss(&outputs, None, &labels, &meta, &vocab, &cfg)?;
    let mask = vocab.class_mask(dataset, mode);
    let trained: Vec<&str> = vocab.names().iter().zip(&mask).filter(|(_, m)| **m).map(|(n, _)| n.as_str()).collect();
    emit(&format!(
        "strong_bce\t{:.9}\nsoft_bce\t{:.9}\ntotal\t{:.9}\ntrained_classes\t{}\n",
        parts.strong_bce,
        parts.soft_bce,
        parts.strong_bce + parts.soft_bce,
        trained.join(",")
    ));
    Ok(())
}
