use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use coae::analysis::{
    content_similarity_study, distortion_separability, embed_2d, export_features, render_svg, Coloring, ProbeConfig,
};
use coae::checkpoint::Checkpoint;
use coae::corpus::{build_corpus, pristine_corpus, read_mos_manifest, CorpusManifest, MosRecord, MANIFEST_FILE};
use coae::distortion::DistortionType;
use coae::eval::{cross_dataset_eval, render_table, visor_sessions, write_reports, EvalReport, FeatureTable};
use coae::image::load_image;
use coae::loss::PyramidDistance;
use coae::profile::NetProfile;
use coae::synth::synth_pristine;
use coae::train::{load_cae, load_dae, train_cae_manifest, train_dae, Ablation, PairedData, Stage, TrainConfig};
use coae::visor::{train_visor, Encoders, FeatureSet, VisorConfig};
use coae::{Error, Result};

/// Collaborative content/distortion autoencoders and the VISOR blind
/// image quality predictor.
#[derive(Parser)]
#[command(name = "coae", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate procedural pristine images and their manifest.
    Synth(SynthArgs),
    /// Apply the distortion bank to a pristine corpus.
    Distort(DistortArgs),
    /// Train the content autoencoder (stage 1).
    TrainCae(TrainCaeArgs),
    /// Train the distortion autoencoder against a frozen CAE (stage 2).
    TrainDae(TrainDaeArgs),
    /// Train the VISOR quality regressor on frozen encoders.
    TrainVisor(TrainVisorArgs),
    /// Repeated reference-disjoint train/test sessions on one dataset.
    Eval(EvalArgs),
    /// Train on one dataset, test on others.
    CrossEval(CrossEvalArgs),
    /// Train and evaluate one ablation setting end to end.
    Ablate(AblateArgs),
    /// Export features and run the content and distortion analyses.
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct Common {
    /// TOML config with optional [cae], [dae] and [visor] tables.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Network profile: canonical, tiny or scale-<x>.
    #[arg(long)]
    profile: Option<NetProfile>,
    /// Seed for every random choice of the command.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Root for relative paths.
    #[arg(long, env = "COAE_DATA_DIR", default_value = ".")]
    data_dir: PathBuf,
}

impl Common {
    fn path(&self, p: &Path) -> PathBuf {
        self.data_dir.join(p)
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.path(&self.out);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(dir)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    fn section(&self, name: &str) -> Result<Option<String>> {
        let Some(path) = &self.config else { return Ok(None) };
        let path = self.path(path);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| Error::format("config", e))?;
        for key in table.keys() {
            if !matches!(key.as_str(), "cae" | "dae" | "visor") {
                return Err(Error::format("config", format!("unknown table `{key}`")));
            }
        }
        match table.get(name) {
            None => Ok(None),
            Some(toml::Value::Table(t)) => Ok(Some(toml::to_string(t).map_err(|e| Error::format("config", e))?)),
            Some(_) => Err(Error::format("config", format!("`{name}` must be a table"))),
        }
    }
}

#[derive(Args)]
struct TrainFlags {
    /// Passes over the training set.
    #[arg(long)]
    epochs: Option<usize>,
    /// Images per optimizer step.
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam step size.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Square training patch side.
    #[arg(long)]
    patch_size: Option<usize>,
    /// Cap on optimizer steps across all epochs.
    #[arg(long)]
    max_steps: Option<u64>,
    /// Weight of the perceptual term in the loss.
    #[arg(long)]
    perceptual_weight: Option<f64>,
    /// Share of references held out for the reconstruction report.
    #[arg(long)]
    holdout_fraction: Option<f64>,
}

#[derive(Args)]
struct VisorFlags {
    /// Feature set fed to the regressor: both, content or distortion.
    #[arg(long)]
    features: Option<FeatureSet>,
    /// Regressor training epochs.
    #[arg(long = "visor-epochs")]
    epochs: Option<usize>,
    /// Regressor batch size.
    #[arg(long = "visor-batch-size")]
    batch_size: Option<usize>,
    /// Regressor Adam step size.
    #[arg(long = "visor-learning-rate")]
    learning_rate: Option<f64>,
    /// Square crop side for regressor training features.
    #[arg(long = "visor-patch-size")]
    patch_size: Option<usize>,
    /// L2 penalty on regressor weights.
    #[arg(long)]
    weight_decay: Option<f64>,
}

#[derive(Args)]
struct SynthArgs {
    #[command(flatten)]
    common: Common,
    /// Number of images.
    #[arg(long, default_value_t = 16)]
    n: usize,
    /// Image size as `S` or `HxW`.
    #[arg(long, default_value = "64", value_parser = parse_size)]
    size: (usize, usize),
}

#[derive(Args)]
struct DistortArgs {
    #[command(flatten)]
    common: Common,
    /// Pristine corpus directory or manifest.
    #[arg(long)]
    input: PathBuf,
    /// Comma-separated distortion types (default: all).
    #[arg(long, value_delimiter = ',')]
    types: Vec<DistortionType>,
    /// Comma-separated severity levels in 1..=5.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    levels: Vec<u8>,
}

#[derive(Args)]
struct TrainCaeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainFlags,
    /// Corpus directory or manifest.
    #[arg(long)]
    corpus: PathBuf,
    /// none or s_cae (trains on distorted images).
    #[arg(long)]
    ablation: Option<Ablation>,
}

#[derive(Args)]
struct TrainDaeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    train: TrainFlags,
    /// Corpus directory or manifest with pristine and distorted records.
    #[arg(long)]
    corpus: PathBuf,
    /// Frozen CAE checkpoint; not needed for s_dae.
    #[arg(long)]
    cae: Option<PathBuf>,
    /// none, s_dae, no_spp or no_multilevel.
    #[arg(long)]
    ablation: Option<Ablation>,
}

#[derive(Args)]
struct EncoderArgs {
    /// CAE checkpoint.
    #[arg(long)]
    cae: Option<PathBuf>,
    /// DAE checkpoint.
    #[arg(long)]
    dae: Option<PathBuf>,
}

#[derive(Args)]
struct TrainVisorArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    visor: VisorFlags,
    #[command(flatten)]
    encoders: EncoderArgs,
    /// MOS manifest, corpus manifest or corpus directory.
    #[arg(long)]
    data: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    visor: VisorFlags,
    #[command(flatten)]
    encoders: EncoderArgs,
    /// MOS manifest, corpus manifest or corpus directory.
    #[arg(long)]
    data: PathBuf,
    /// Number of train/test sessions.
    #[arg(long, default_value_t = 10)]
    sessions: usize,
    /// Share of references in each training split.
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    /// Dataset name in the report (default: derived from --data).
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct CrossEvalArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    visor: VisorFlags,
    #[command(flatten)]
    encoders: EncoderArgs,
    /// Training dataset.
    #[arg(long)]
    train: PathBuf,
    /// Test dataset; repeat for several.
    #[arg(long, required = true)]
    test: Vec<PathBuf>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    visor: VisorFlags,
    /// Corpus directory or manifest with pristine and distorted records.
    #[arg(long)]
    corpus: PathBuf,
    /// none, s_cae, s_dae, no_spp or no_multilevel.
    #[arg(long, default_value = "none")]
    variant: Ablation,
    /// Number of train/test sessions.
    #[arg(long, default_value_t = 10)]
    sessions: usize,
    /// Share of references in each training split.
    #[arg(long, default_value_t = 0.8)]
    ratio: f64,
    /// Stage 1 epochs.
    #[arg(long)]
    cae_epochs: Option<usize>,
    /// Stage 2 epochs.
    #[arg(long)]
    dae_epochs: Option<usize>,
    /// Cap on optimizer steps per stage.
    #[arg(long)]
    max_steps: Option<u64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    encoders: EncoderArgs,
    /// Corpus directory or manifest.
    #[arg(long)]
    corpus: PathBuf,
    /// Also render the 2-D embedding as SVG.
    #[arg(long)]
    plot: bool,
}

fn parse_size(s: &str) -> std::result::Result<(usize, usize), String> {
    let parse = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("invalid size `{s}`: {e}"));
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Ok((parse(h)?, parse(w)?)),
        None => parse(s).map(|v| (v, v)),
    }
}

fn manifest_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join(MANIFEST_FILE)
    } else {
        p.to_path_buf()
    }
}

/// The path as given, without a trailing manifest file name or extension.
fn dataset_name(p: &Path) -> String {
    let p = if p.file_name().is_some_and(|f| f == MANIFEST_FILE) { p.parent().unwrap_or(p) } else { p };
    let name = p.with_extension("").to_string_lossy().into_owned();
    if name.is_empty() { "dataset".into() } else { name }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format("report", e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn log_file(path: &Path) -> Result<std::io::BufWriter<fs::File>> {
    Ok(std::io::BufWriter::new(fs::File::create(path).map_err(|e| Error::io(path, e))?))
}

fn train_config(common: &Common, stage: Stage, flags: &TrainFlags, ablation: Option<Ablation>) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::new(stage, common.profile.unwrap_or_else(NetProfile::canonical));
    let section = if stage == Stage::Cae { "cae" } else { "dae" };
    if let Some(text) = common.section(section)? {
        cfg = TrainConfig::from_toml(&text, cfg)?;
    }
    if let Some(p) = common.profile {
        cfg.profile = p;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(a) = ablation {
        cfg.ablation = a;
    }
    cfg.epochs = flags.epochs.unwrap_or(cfg.epochs);
    cfg.batch_size = flags.batch_size.unwrap_or(cfg.batch_size);
    cfg.learning_rate = flags.learning_rate.unwrap_or(cfg.learning_rate);
    cfg.patch_size = flags.patch_size.unwrap_or(cfg.patch_size);
    cfg.max_steps = flags.max_steps.or(cfg.max_steps);
    cfg.perceptual_weight = flags.perceptual_weight.unwrap_or(cfg.perceptual_weight);
    cfg.holdout_fraction = flags.holdout_fraction.unwrap_or(cfg.holdout_fraction);
    cfg.validate()?;
    Ok(cfg)
}

fn visor_config(common: &Common, profile: &NetProfile, flags: &VisorFlags, features: Option<FeatureSet>) -> Result<VisorConfig> {
    let mut cfg = VisorConfig::new(profile);
    if let Some(text) = common.section("visor")? {
        cfg = VisorConfig::from_toml(&text, cfg)?;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    cfg.features = flags.features.or(features).unwrap_or(cfg.features);
    cfg.epochs = flags.epochs.unwrap_or(cfg.epochs);
    cfg.batch_size = flags.batch_size.unwrap_or(cfg.batch_size);
    cfg.learning_rate = flags.learning_rate.unwrap_or(cfg.learning_rate);
    cfg.patch_size = flags.patch_size.unwrap_or(cfg.patch_size);
    cfg.weight_decay = flags.weight_decay.unwrap_or(cfg.weight_decay);
    cfg.validate()?;
    Ok(cfg)
}

fn load_encoders(common: &Common, args: &EncoderArgs) -> Result<Encoders> {
    let cae = args.cae.as_ref().map(|p| Checkpoint::load(common.path(p))).transpose()?;
    let dae = args.dae.as_ref().map(|p| Checkpoint::load(common.path(p))).transpose()?;
    Encoders::from_checkpoints(cae.as_ref(), dae.as_ref())
}

/// Features the encoders can provide when the flag is not given.
fn default_features(enc: &Encoders) -> FeatureSet {
    match (enc.cae.is_some(), enc.dae.is_some()) {
        (true, false) => FeatureSet::Content,
        (false, true) => FeatureSet::Distortion,
        _ => FeatureSet::Both,
    }
}

fn read_dataset(common: &Common, p: &Path) -> Result<Vec<MosRecord>> {
    read_mos_manifest(manifest_path(&common.path(p)))
}

fn finish_reports(reports: &[EvalReport], out: &Path, file: &str) -> Result<ExitCode> {
    write_reports(reports, out.join(file))?;
    print!("{}", render_table(reports));
    Ok(if reports.iter().any(|r| r.failed > 0) { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn synth(a: SynthArgs) -> Result<ExitCode> {
    let images = synth_pristine(a.n, a.size, a.common.seed())?;
    let m = pristine_corpus(&images, a.common.out_dir()?, a.common.seed())?;
    println!("wrote {} pristine images to {}", m.records.len(), m.root.display());
    Ok(ExitCode::SUCCESS)
}

fn distort(a: DistortArgs) -> Result<ExitCode> {
    let src = CorpusManifest::read(manifest_path(&a.common.path(&a.input)))?;
    let images = src
        .pristine_records()
        .map(|r| src.load(r.image_path()))
        .collect::<Result<Vec<_>>>()?;
    let types = if a.types.is_empty() { DistortionType::ALL.to_vec() } else { a.types };
    let m = build_corpus(&images, &types, &a.levels, a.common.out_dir()?, a.common.seed())?;
    println!("wrote {} records to {}", m.records.len(), m.root.display());
    Ok(ExitCode::SUCCESS)
}

fn train_cae_cmd(a: TrainCaeArgs) -> Result<ExitCode> {
    let cfg = train_config(&a.common, Stage::Cae, &a.train, a.ablation)?;
    let manifest = CorpusManifest::read(manifest_path(&a.common.path(&a.corpus)))?;
    let out = a.common.out_dir()?;
    let mut log = log_file(&out.join("cae_log.jsonl"))?;
    let outcome = train_cae_manifest(&manifest, &cfg, &PyramidDistance::default(), &mut log)?;
    outcome.checkpoint.save(out.join("cae.safetensors"))?;
    write_json(&out.join("cae_report.json"), &outcome.report)?;
    write_json(&out.join("cae_config.json"), &cfg)?;
    println!("{}", serde_json::to_string(&outcome.report).map_err(|e| Error::format("report", e))?);
    Ok(ExitCode::SUCCESS)
}

fn train_dae_cmd(a: TrainDaeArgs) -> Result<ExitCode> {
    let cfg = train_config(&a.common, Stage::Dae, &a.train, a.ablation)?;
    let manifest = CorpusManifest::read(manifest_path(&a.common.path(&a.corpus)))?;
    let cae = a.cae.as_ref().map(|p| Checkpoint::load(a.common.path(p))).transpose()?;
    let data = PairedData::from_manifest(&manifest)?;
    let out = a.common.out_dir()?;
    let mut log = log_file(&out.join("dae_log.jsonl"))?;
    let outcome = train_dae(cae.as_ref(), &data, &cfg, &PyramidDistance::default(), &mut log)?;
    outcome.checkpoint.save(out.join("dae.safetensors"))?;
    write_json(&out.join("dae_report.json"), &outcome.report)?;
    write_json(&out.join("dae_config.json"), &cfg)?;
    println!("{}", serde_json::to_string(&outcome.report).map_err(|e| Error::format("report", e))?);
    Ok(ExitCode::SUCCESS)
}

fn train_visor_cmd(a: TrainVisorArgs) -> Result<ExitCode> {
    let mut enc = load_encoders(&a.common, &a.encoders)?;
    let cfg = visor_config(&a.common, &enc.profile, &a.visor, Some(default_features(&enc)))?;
    let records = read_dataset(&a.common, &a.data)?;
    let dataset = records
        .iter()
        .map(|r| Ok((load_image(&r.image_path)?, r.mos)))
        .collect::<Result<Vec<_>>>()?;
    let (mut visor, report) = train_visor(&dataset, &mut enc, &cfg)?;
    let out = a.common.out_dir()?;
    visor
        .to_checkpoint(0, (cfg.patch_size, cfg.patch_size), report.steps)
        .save(out.join("visor.safetensors"))?;
    write_json(&out.join("visor_report.json"), &report)?;
    write_json(&out.join("visor_config.json"), &cfg)?;
    println!("{}", serde_json::to_string(&report).map_err(|e| Error::format("report", e))?);
    Ok(ExitCode::SUCCESS)
}

fn eval_cmd(a: EvalArgs) -> Result<ExitCode> {
    let mut enc = load_encoders(&a.common, &a.encoders)?;
    let cfg = visor_config(&a.common, &enc.profile, &a.visor, Some(default_features(&enc)))?;
    let records = read_dataset(&a.common, &a.data)?;
    let table = FeatureTable::build(records, &mut enc, &cfg)?;
    let name = a.name.unwrap_or_else(|| dataset_name(&a.data));
    let report = visor_sessions(&table, enc.profile, &cfg, a.sessions, a.common.seed(), a.ratio, &name, "none")?;
    finish_reports(&[report], &a.common.out_dir()?, "eval.jsonl")
}

fn cross_eval_cmd(a: CrossEvalArgs) -> Result<ExitCode> {
    let mut enc = load_encoders(&a.common, &a.encoders)?;
    let cfg = visor_config(&a.common, &enc.profile, &a.visor, Some(default_features(&enc)))?;
    let train = FeatureTable::build(read_dataset(&a.common, &a.train)?, &mut enc, &cfg)?;
    let tests = a
        .test
        .iter()
        .map(|p| Ok((dataset_name(p), FeatureTable::build(read_dataset(&a.common, p)?, &mut enc, &cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    let test_refs: Vec<(&str, &FeatureTable)> = tests.iter().map(|(n, t)| (n.as_str(), t)).collect();
    let train_name = dataset_name(&a.train);
    let reports = cross_dataset_eval((&train_name, &train), &test_refs, enc.profile, &cfg, "none")?;
    finish_reports(&reports, &a.common.out_dir()?, "cross_eval.jsonl")
}

fn ablate_cmd(a: AblateArgs) -> Result<ExitCode> {
    let flags = TrainFlags {
        epochs: None,
        batch_size: None,
        learning_rate: None,
        patch_size: None,
        max_steps: a.max_steps,
        perceptual_weight: None,
        holdout_fraction: None,
    };
    let manifest = CorpusManifest::read(manifest_path(&a.common.path(&a.corpus)))?;
    let out = a.common.out_dir()?;
    let provider = PyramidDistance::default();
    // The independent settings train both autoencoders on distorted images only.
    let independent = matches!(a.variant, Ablation::SCae | Ablation::SDae);
    let features = match a.variant {
        Ablation::SCae => FeatureSet::Content,
        Ablation::SDae => FeatureSet::Distortion,
        _ => FeatureSet::Both,
    };
    let features = a.visor.features.unwrap_or(features);

    let cae = if features.uses_content() || a.variant.dae_variant().is_ok_and(|v| v.uses_content()) {
        let mut cfg = train_config(&a.common, Stage::Cae, &flags, Some(if independent { Ablation::SCae } else { Ablation::None }))?;
        cfg.epochs = a.cae_epochs.unwrap_or(cfg.epochs);
        let corpus = if independent { manifest.clone() } else { manifest.pristine_only() };
        let mut log = log_file(&out.join("cae_log.jsonl"))?;
        let outcome = train_cae_manifest(&corpus, &cfg, &provider, &mut log)?;
        outcome.checkpoint.save(out.join("cae.safetensors"))?;
        write_json(&out.join("cae_report.json"), &outcome.report)?;
        Some(outcome.checkpoint)
    } else {
        None
    };
    let dae = if features.uses_distortion() {
        let mut cfg = train_config(&a.common, Stage::Dae, &flags, Some(a.variant))?;
        cfg.epochs = a.dae_epochs.unwrap_or(cfg.epochs);
        let mut log = log_file(&out.join("dae_log.jsonl"))?;
        let content = if a.variant == Ablation::SDae { None } else { cae.as_ref() };
        let outcome = train_dae(content, &PairedData::from_manifest(&manifest)?, &cfg, &provider, &mut log)?;
        outcome.checkpoint.save(out.join("dae.safetensors"))?;
        write_json(&out.join("dae_report.json"), &outcome.report)?;
        Some(outcome.checkpoint)
    } else {
        None
    };
    let mut enc = Encoders::from_checkpoints(cae.as_ref(), dae.as_ref())?;
    let cfg = visor_config(&a.common, &enc.profile, &a.visor, Some(features))?;
    let records = manifest.to_mos_records();
    let table = FeatureTable::build(records, &mut enc, &cfg)?;
    let label = format!("{}:{}", a.variant.name(), features.name());
    let report = visor_sessions(
        &table,
        enc.profile,
        &cfg,
        a.sessions,
        a.common.seed(),
        a.ratio,
        &dataset_name(&a.corpus),
        &label,
    )?;
    finish_reports(&[report], &out, "ablate.jsonl")
}

#[derive(Serialize)]
struct AnalysisReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    content_similarity: Option<coae::analysis::ContentSimilarity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    separability: Option<coae::analysis::Separability>,
    #[serde(skip_serializing_if = "Option::is_none")]
    explained_variance: Option<f64>,
}

fn analyze_cmd(a: AnalyzeArgs) -> Result<ExitCode> {
    let manifest = CorpusManifest::read(manifest_path(&a.common.path(&a.corpus)))?;
    let out = a.common.out_dir()?;
    let mut report = AnalysisReport {
        content_similarity: None,
        separability: None,
        explained_variance: None,
    };
    if let Some(p) = &a.encoders.cae {
        let mut cae = load_cae(&Checkpoint::load(a.common.path(p))?)?;
        let mut images = Vec::new();
        for r in manifest.distorted_records() {
            images.push((manifest.load(&r.pristine_path)?, manifest.load(r.image_path())?));
        }
        let pairs: Vec<(&_, &_)> = images.iter().map(|(p, d)| (p, d)).collect();
        report.content_similarity = Some(content_similarity_study(&pairs, &mut cae)?);
    }
    if let Some(p) = &a.encoders.dae {
        let mut dae = load_dae(&Checkpoint::load(a.common.path(p))?)?;
        let records = export_features(&manifest, &mut dae, out.join("features.jsonl"))?;
        let cfg = ProbeConfig {
            seed: a.common.seed(),
            ..ProbeConfig::default()
        };
        report.separability = Some(distortion_separability(&records, &cfg)?);
        let f_d: Vec<Vec<f32>> = records.iter().map(|r| r.f_d.clone()).collect();
        let emb = embed_2d(&f_d)?;
        report.explained_variance = Some(emb.explained_variance);
        write_json(&out.join("embedding.json"), &emb)?;
        if a.plot {
            let labels: Vec<String> = records.iter().map(|r| r.type_id.to_string()).collect();
            let svg = render_svg(&emb.coords, Coloring::Class(&labels), "f_d by distortion type");
            let path = out.join("embedding.svg");
            fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
        }
    }
    if report.content_similarity.is_none() && report.separability.is_none() {
        return Err(Error::arg("analyze needs --cae, --dae or both"));
    }
    write_json(&out.join("analysis.json"), &report)?;
    println!("{}", serde_json::to_string(&report).map_err(|e| Error::format("report", e))?);
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Distort(a) => distort(a),
        Command::TrainCae(a) => train_cae_cmd(a),
        Command::TrainDae(a) => train_dae_cmd(a),
        Command::TrainVisor(a) => train_visor_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::CrossEval(a) => cross_eval_cmd(a),
        Command::Ablate(a) => ablate_cmd(a),
        Command::Analyze(a) => analyze_cmd(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
