//! Two-stage COAE training.
//!
//! Stage 1 fits the content autoencoder on pristine patches. Stage 2 loads
//! that CAE, freezes it, and fits the distortion autoencoder to reproduce
//! each distorted patch from the pristine patch's `F_c` plus its own `f_d`.

use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointMeta, ModelKind};
use crate::corpus::{CorpusManifest, TypeTag};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::loss::{overall_loss, LossBreakdown, PerceptualDistance};
use crate::nets::{images_to_tensor, ContentAutoencoder, DaeVariant, DistortionAutoencoder};
use crate::nn::{param_hash, Adam, Mode, Tensor};
use crate::profile::NetProfile;
use crate::rng::{derive_seed, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Cae,
    Dae,
}

/// Ablation settings for the training stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// CAE trained alone on distorted images.
    SCae,
    /// DAE trained alone: no `F_c`, decoder content is a learned constant.
    SDae,
    NoSpp,
    NoMultilevel,
}

impl Ablation {
    pub const ALL: [Ablation; 5] = [Self::None, Self::SCae, Self::SDae, Self::NoSpp, Self::NoMultilevel];

    pub fn name(self) -> &'static str {
        match self {
            Self::None => "none",
            Self::SCae => "s_cae",
            Self::SDae => "s_dae",
            Self::NoSpp => "no_spp",
            Self::NoMultilevel => "no_multilevel",
        }
    }

    /// The DAE arrangement this ablation trains.
    pub fn dae_variant(self) -> Result<DaeVariant> {
        match self {
            Self::None => Ok(DaeVariant::Collaborative),
            Self::SDae => Ok(DaeVariant::Standalone),
            Self::NoSpp => Ok(DaeVariant::NoSpp),
            Self::NoMultilevel => Ok(DaeVariant::NoMultilevel),
            Self::SCae => Err(Error::arg("s_cae is a content-autoencoder ablation; it has no DAE stage")),
        }
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown ablation `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub stage: Stage,
    #[serde(with = "crate::profile::by_name")]
    pub profile: NetProfile,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Square training patch side; 256 canonical, 64 tiny.
    pub patch_size: usize,
    pub seed: u64,
    pub ablation: Ablation,
    pub perceptual_weight: f64,
    /// Share of references held out to measure reconstruction before and
    /// after training.
    pub holdout_fraction: f64,
    /// Optional cap on optimizer steps across all epochs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<u64>,
}

impl TrainConfig {
    pub fn new(stage: Stage, profile: NetProfile) -> Self {
        let canonical = profile.width_scale >= NetProfile::CANONICAL_SCALE;
        Self {
            stage,
            profile,
            epochs: 30,
            batch_size: if canonical { 16 } else { 8 },
            learning_rate: 1e-4,
            patch_size: if canonical { 256 } else { 64 },
            seed: 0,
            ablation: Ablation::None,
            perceptual_weight: 1.0,
            holdout_fraction: 0.1,
            max_steps: None,
        }
    }

    /// Overlays the keys of a TOML document on `base`. A `profile` key
    /// re-derives the profile-dependent defaults first.
    pub fn from_toml(text: &str, base: TrainConfig) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::format("config", e))?;
        let mut base = base;
        if let Some(name) = table.get("profile").and_then(|v| v.as_str()) {
            let profile: NetProfile = name.parse()?;
            base = TrainConfig {
                seed: base.seed,
                ablation: base.ablation,
                ..TrainConfig::new(base.stage, profile)
            };
        }
        let cfg: TrainConfig = overlay(&base, &table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>, base: TrainConfig) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::arg("epochs and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::arg("learning_rate must be positive"));
        }
        if self.patch_size == 0 || self.patch_size % 4 != 0 {
            return Err(Error::arg(format!("patch_size {} must be a positive multiple of 4", self.patch_size)));
        }
        if !(self.perceptual_weight >= 0.0 && self.perceptual_weight.is_finite()) {
            return Err(Error::arg("perceptual_weight must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::arg("holdout_fraction must lie in [0, 1)"));
        }
        Ok(())
    }

    fn patch(&self) -> (usize, usize) {
        (self.patch_size, self.patch_size)
    }
}

/// Replaces top-level keys of `base` with those present in `table`.
pub(crate) fn overlay<T: Serialize + serde::de::DeserializeOwned>(base: &T, table: &toml::Table) -> Result<T> {
    let mut merged = serde_json::to_value(base).map_err(|e| Error::format("config", e))?;
    let over = serde_json::to_value(table).map_err(|e| Error::format("config", e))?;
    if let (Some(m), Some(o)) = (merged.as_object_mut(), over.as_object()) {
        for (k, v) in o {
            m.insert(k.clone(), v.clone());
        }
    }
    serde_json::from_value(merged).map_err(|e| Error::format("config", e))
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub step: u64,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: u64,
    /// Mean per-pixel RMS reconstruction error on the held-out set.
    pub holdout_before: f64,
    pub holdout_after: f64,
    pub final_loss: LossBreakdown,
    pub param_hash: String,
    /// Hash of the frozen CAE, identical before and after stage 2.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen_hash: Option<String>,
}

pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub report: TrainReport,
}

/// Pristine references and distorted images paired with them by content.
#[derive(Clone, Debug)]
pub struct PairedData {
    pub pristine: Vec<Image>,
    pub pairs: Vec<Pair>,
    pub corpus_seed: u64,
}

#[derive(Clone, Debug)]
pub struct Pair {
    /// Index into [`PairedData::pristine`].
    pub pristine: usize,
    pub image: Image,
    pub type_id: TypeTag,
    pub level: u8,
}

impl PairedData {
    pub fn new(pristine: Vec<Image>, pairs: Vec<Pair>, corpus_seed: u64) -> Result<Self> {
        for (i, p) in pairs.iter().enumerate() {
            let reference = pristine
                .get(p.pristine)
                .ok_or_else(|| Error::arg(format!("pair {i} references missing pristine image {}", p.pristine)))?;
            if reference.dims() != p.image.dims() {
                return Err(Error::arg(format!(
                    "pair {i}: distorted image {:?} does not match its pristine image {:?}",
                    p.image.dims(),
                    reference.dims()
                )));
            }
        }
        Ok(Self {
            pristine,
            pairs,
            corpus_seed,
        })
    }

    pub fn from_manifest(manifest: &CorpusManifest) -> Result<Self> {
        manifest.validate()?;
        let mut index = std::collections::HashMap::new();
        let mut pristine = Vec::new();
        for r in manifest.pristine_records() {
            index.insert(r.pristine_path.clone(), pristine.len());
            pristine.push(manifest.load(&r.pristine_path)?);
        }
        let mut pairs = Vec::new();
        for r in manifest.distorted_records() {
            let &p = index
                .get(&r.pristine_path)
                .ok_or_else(|| Error::arg(format!("no pristine record for {}", r.pristine_path)))?;
            pairs.push(Pair {
                pristine: p,
                image: manifest.load(r.image_path())?,
                type_id: r.type_id,
                level: r.level,
            });
        }
        Self::new(pristine, pairs, manifest.corpus_seed)
    }
}

/// Splits `0..n` into (train, held-out) with a seeded shuffle. The held-out
/// part is empty when it would leave nothing to train on.
fn holdout_split(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let k = ((n as f64 * fraction).round() as usize).min(n.saturating_sub(1));
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut order);
    let held = order.split_off(n - k);
    order.sort_unstable();
    let mut held = held;
    held.sort_unstable();
    (order, held)
}

fn random_offset(dims: (usize, usize), patch: (usize, usize), rng: &mut Rng) -> Result<(usize, usize)> {
    if patch.0 > dims.0 || patch.1 > dims.1 {
        return Err(Error::arg(format!("patch {patch:?} larger than image {dims:?}")));
    }
    let y0 = rng.below(dims.0 - patch.0 + 1);
    let x0 = rng.below(dims.1 - patch.1 + 1);
    Ok((y0, x0))
}

fn crop(img: &Image, (y0, x0): (usize, usize), (h, w): (usize, usize)) -> Result<Image> {
    if (y0, x0, (h, w)) == (0, 0, img.dims()) {
        return Ok(img.clone());
    }
    img.crop_at(x0, y0, h, w)
}

fn rms_per_pixel(out: &Tensor<f32>, target: &Tensor<f32>) -> f64 {
    let n = out.batch();
    (0..n)
        .map(|i| {
            let ss: f64 = out
                .item(i)
                .iter()
                .zip(target.item(i))
                .map(|(&a, &b)| ((a - b) as f64).powi(2))
                .sum();
            (ss / out.item_len() as f64).sqrt()
        })
        .sum()
}

fn write_log(log: &mut dyn Write, step: u64, loss: LossBreakdown) -> Result<()> {
    let line = serde_json::to_string(&LogEntry { step, loss }).map_err(|e| Error::format("log", e))?;
    writeln!(log, "{line}").map_err(|e| Error::io("<training log>", e))
}

/// Fixed held-out crops: one per image, from a dedicated stream.
fn fixed_crops(images: &[&Image], patch: (usize, usize), seed: u64) -> Result<Vec<Image>> {
    let mut rng = Rng::new(seed);
    images
        .iter()
        .map(|img| crop(img, random_offset(img.dims(), patch, &mut rng)?, patch))
        .collect()
}

fn cae_holdout(cae: &mut ContentAutoencoder<f32>, crops: &[Image], batch: usize) -> Result<f64> {
    let mut total = 0.0;
    for chunk in crops.chunks(batch) {
        let refs: Vec<&Image> = chunk.iter().collect();
        let x = images_to_tensor::<f32>(&refs)?;
        let f = cae.encode(&x, Mode::Eval)?;
        total += rms_per_pixel(&cae.decode(&f, Mode::Eval)?, &x);
    }
    Ok(total / crops.len() as f64)
}

/// Stage 1 on in-memory images.
pub fn train_cae(
    images: &[Image],
    cfg: &TrainConfig,
    corpus_seed: u64,
    provider: &dyn PerceptualDistance,
    log: &mut dyn Write,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.stage != Stage::Cae {
        return Err(Error::arg("train_cae needs stage = cae"));
    }
    if images.is_empty() {
        return Err(Error::arg("no training images"));
    }
    let patch = cfg.patch();
    let (train_idx, held_idx) = holdout_split(images.len(), cfg.holdout_fraction, derive_seed(cfg.seed, 3));
    let held: Vec<&Image> = if held_idx.is_empty() {
        train_idx.iter().map(|&i| &images[i]).collect()
    } else {
        held_idx.iter().map(|&i| &images[i]).collect()
    };
    let held_crops = fixed_crops(&held, patch, derive_seed(cfg.seed, 4))?;

    let mut cae = ContentAutoencoder::<f32>::new(cfg.profile, derive_seed(cfg.seed, 1));
    let mut rng = Rng::new(derive_seed(cfg.seed, 2));
    let mut adam = Adam::new(cfg.learning_rate);
    let holdout_before = cae_holdout(&mut cae, &held_crops, cfg.batch_size)?;
    let mut step = 0u64;
    let mut last = LossBreakdown::default();
    'epochs: for epoch in 0..cfg.epochs {
        let mut order = train_idx.clone();
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let crops = chunk
                .iter()
                .map(|&i| crop(&images[i], random_offset(images[i].dims(), patch, &mut rng)?, patch))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&Image> = crops.iter().collect();
            let x = images_to_tensor::<f32>(&refs)?;
            let f = cae.encode(&x, Mode::Train)?;
            let y = cae.decode(&f, Mode::Train)?;
            let (loss, grad) = overall_loss(&y, &x, provider, cfg.perceptual_weight)?;
            cae.backward(&grad);
            adam.step(&mut cae);
            step += 1;
            last = loss;
            write_log(log, step, loss)?;
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break 'epochs;
            }
        }
        log::info!("cae epoch {} step {step} L_overall {:.5}", epoch + 1, last.overall);
    }
    let holdout_after = cae_holdout(&mut cae, &held_crops, cfg.batch_size)?;
    let mut meta = CheckpointMeta::new(ModelKind::Cae, cfg.profile, "cae");
    meta.step = step;
    meta.corpus_seed = corpus_seed;
    meta.patch = patch;
    meta.extra.insert("ablation".into(), cfg.ablation.name().into());
    let report = TrainReport {
        steps: step,
        holdout_before,
        holdout_after,
        final_loss: last,
        param_hash: param_hash(&mut cae),
        frozen_hash: None,
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint::from_model(&mut cae, meta),
        report,
    })
}

/// Stage 1 from a corpus. Only pristine records are allowed unless the
/// `s_cae` ablation is active, in which case only distorted images are used.
pub fn train_cae_manifest(
    manifest: &CorpusManifest,
    cfg: &TrainConfig,
    provider: &dyn PerceptualDistance,
    log: &mut dyn Write,
) -> Result<TrainOutcome> {
    let images = if cfg.ablation == Ablation::SCae {
        manifest
            .distorted_records()
            .map(|r| manifest.load(r.image_path()))
            .collect::<Result<Vec<_>>>()?
    } else {
        if manifest.distorted_records().next().is_some() {
            return Err(Error::arg(
                "content autoencoder trains on pristine images only; pass a pristine-only corpus or use the s_cae ablation",
            ));
        }
        manifest
            .pristine_records()
            .map(|r| manifest.load(&r.pristine_path))
            .collect::<Result<Vec<_>>>()?
    };
    train_cae(&images, cfg, manifest.corpus_seed, provider, log)
}

/// Loads a CAE checkpoint into a fresh network.
pub fn load_cae(ckpt: &Checkpoint) -> Result<ContentAutoencoder<f32>> {
    ckpt.meta.expect_kind(ModelKind::Cae)?;
    let mut cae = ContentAutoencoder::<f32>::new(ckpt.meta.profile, 0);
    ckpt.apply_to(&mut cae)?;
    Ok(cae)
}

/// Loads a DAE checkpoint into a fresh network.
pub fn load_dae(ckpt: &Checkpoint) -> Result<DistortionAutoencoder<f32>> {
    ckpt.meta.expect_kind(ModelKind::Dae)?;
    let variant = ckpt.meta.variant.unwrap_or_default();
    let mut dae = DistortionAutoencoder::<f32>::new(ckpt.meta.profile, variant, ckpt.meta.patch, 0);
    ckpt.apply_to(&mut dae)?;
    Ok(dae)
}

/// Content features for pristine crops, served from a per-image cache when
/// the crop is the whole image.
struct ContentSource<'a> {
    cae: Option<ContentAutoencoder<f32>>,
    pristine: &'a [Image],
    cache: Vec<Option<Tensor<f32>>>,
}

impl<'a> ContentSource<'a> {
    fn batch(&mut self, items: &[(usize, (usize, usize))], patch: (usize, usize)) -> Result<Option<Tensor<f32>>> {
        let Some(cae) = self.cae.as_mut() else {
            return Ok(None);
        };
        let mut parts = Vec::with_capacity(items.len());
        for &(p, off) in items {
            let img = &self.pristine[p];
            let whole = img.dims() == patch;
            if whole {
                if let Some(t) = &self.cache[p] {
                    parts.push(t.clone());
                    continue;
                }
            }
            let c = crop(img, off, patch)?;
            let f = cae.encode(&images_to_tensor(&[&c])?, Mode::Eval)?;
            if whole {
                self.cache[p] = Some(f.clone());
            }
            parts.push(f);
        }
        let [_, c, h, w] = parts[0].shape;
        let mut data = Vec::with_capacity(parts.len() * c * h * w);
        for t in &parts {
            data.extend_from_slice(&t.data);
        }
        Ok(Some(Tensor::from_vec([parts.len(), c, h, w], data)))
    }
}

fn dae_holdout(
    dae: &mut DistortionAutoencoder<f32>,
    content: &mut ContentSource,
    held: &[(usize, Image, (usize, usize))],
    patch: (usize, usize),
    batch: usize,
) -> Result<f64> {
    let mut total = 0.0;
    for chunk in held.chunks(batch) {
        let refs: Vec<&Image> = chunk.iter().map(|(_, img, _)| img).collect();
        let x = images_to_tensor::<f32>(&refs)?;
        let items: Vec<_> = chunk.iter().map(|(p, _, off)| (*p, *off)).collect();
        let f_c = content.batch(&items, patch)?;
        let y = dae.forward(f_c.as_ref(), &x, Mode::Eval)?;
        total += rms_per_pixel(&y, &x);
    }
    Ok(total / held.len() as f64)
}

/// Stage 2. `cae` is required except for the standalone (`s_dae`) variant,
/// and is never updated.
pub fn train_dae(
    cae: Option<&Checkpoint>,
    data: &PairedData,
    cfg: &TrainConfig,
    provider: &dyn PerceptualDistance,
    log: &mut dyn Write,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if cfg.stage != Stage::Dae {
        return Err(Error::arg("train_dae needs stage = dae"));
    }
    if data.pairs.is_empty() {
        return Err(Error::arg("no distorted images to train on"));
    }
    let variant = cfg.ablation.dae_variant()?;
    let patch = cfg.patch();
    let cae_net = match (variant.uses_content(), cae) {
        (true, None) => return Err(Error::arg("collaborative DAE training needs a CAE checkpoint")),
        (true, Some(ckpt)) => {
            if ckpt.meta.profile != cfg.profile {
                return Err(Error::arg(format!(
                    "CAE checkpoint profile {} does not match config profile {}",
                    ckpt.meta.profile, cfg.profile
                )));
            }
            Some(load_cae(ckpt)?)
        }
        (false, _) => None,
    };
    let mut content = ContentSource {
        cae: cae_net,
        pristine: &data.pristine,
        cache: vec![None; data.pristine.len()],
    };
    let frozen_before = content.cae.as_mut().map(|c| param_hash(c));

    // Hold out whole references so held-out content is unseen.
    let (train_refs, held_refs) = holdout_split(data.pristine.len(), cfg.holdout_fraction, derive_seed(cfg.seed, 3));
    let held_set: std::collections::HashSet<usize> = held_refs.iter().copied().collect();
    let (mut train_pairs, mut held_pairs) = (Vec::new(), Vec::new());
    for (i, p) in data.pairs.iter().enumerate() {
        if held_set.contains(&p.pristine) {
            held_pairs.push(i);
        } else {
            train_pairs.push(i);
        }
    }
    if train_refs.is_empty() || train_pairs.is_empty() {
        return Err(Error::arg("no training pairs left after the hold-out split"));
    }
    if held_pairs.is_empty() {
        held_pairs = train_pairs.clone();
    }
    let mut held_rng = Rng::new(derive_seed(cfg.seed, 4));
    let held = held_pairs
        .iter()
        .map(|&i| {
            let p = &data.pairs[i];
            let off = random_offset(p.image.dims(), patch, &mut held_rng)?;
            Ok((p.pristine, crop(&p.image, off, patch)?, off))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut dae = DistortionAutoencoder::<f32>::new(cfg.profile, variant, patch, derive_seed(cfg.seed, 1));
    let mut rng = Rng::new(derive_seed(cfg.seed, 2));
    let mut adam = Adam::new(cfg.learning_rate);
    let holdout_before = dae_holdout(&mut dae, &mut content, &held, patch, cfg.batch_size)?;
    let mut step = 0u64;
    let mut last = LossBreakdown::default();
    'epochs: for epoch in 0..cfg.epochs {
        let mut order = train_pairs.clone();
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let mut crops = Vec::with_capacity(chunk.len());
            let mut items = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let p = &data.pairs[i];
                let off = random_offset(p.image.dims(), patch, &mut rng)?;
                crops.push(crop(&p.image, off, patch)?);
                items.push((p.pristine, off));
            }
            let refs: Vec<&Image> = crops.iter().collect();
            let x = images_to_tensor::<f32>(&refs)?;
            let f_c = content.batch(&items, patch)?;
            let y = dae.forward(f_c.as_ref(), &x, Mode::Train)?;
            let (loss, grad) = overall_loss(&y, &x, provider, cfg.perceptual_weight)?;
            dae.backward(&grad);
            adam.step(&mut dae);
            step += 1;
            last = loss;
            write_log(log, step, loss)?;
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break 'epochs;
            }
        }
        log::info!("dae epoch {} step {step} L_overall {:.5}", epoch + 1, last.overall);
    }
    let holdout_after = dae_holdout(&mut dae, &mut content, &held, patch, cfg.batch_size)?;
    let frozen_after = content.cae.as_mut().map(|c| param_hash(c));
    if frozen_before != frozen_after {
        return Err(Error::Checkpoint("frozen CAE parameters changed during stage 2".into()));
    }

    let mut meta = CheckpointMeta::new(ModelKind::Dae, cfg.profile, "dae");
    meta.variant = Some(variant);
    meta.step = step;
    meta.corpus_seed = data.corpus_seed;
    meta.patch = patch;
    meta.extra.insert("ablation".into(), cfg.ablation.name().into());
    if let Some(h) = &frozen_before {
        meta.extra.insert("cae_hash".into(), h.clone().into());
    }
    let report = TrainReport {
        steps: step,
        holdout_before,
        holdout_after,
        final_loss: last,
        param_hash: param_hash(&mut dae),
        frozen_hash: frozen_before,
    };
    Ok(TrainOutcome {
        checkpoint: Checkpoint::from_model(&mut dae, meta),
        report,
    })
}
