//! VISOR: a quality regressor on the frozen COAE encoders.
//!
//! ```text
//! f_c = GAP(conv1x1(F_c))          (fc_dim)
//! f_q = [f_c ; f_d]                (fc_dim + fd_dim)
//! score = FC(·→128) ReLU FC(128→64) ReLU FC(64→1)
//! ```
//!
//! A 1×1 convolution commutes with global average pooling, so the pooling
//! branch is evaluated as a linear map on `GAP(F_c)`. Encoder inputs are
//! standardized with statistics fixed at training time.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, CheckpointMeta, ModelKind};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nets::{ContentAutoencoder, ContentFeature, DistortionAutoencoder};
use crate::nn::{join, param_hash, Adam, Layer, Linear, Mode, Param, Parameterized, Relu, Sequential, Tensor};
use crate::profile::NetProfile;
use crate::rng::{derive_seed, Rng};
use crate::train::{load_cae, load_dae};

/// Which encoder outputs feed the regressor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// `[f_c ; f_d]`.
    #[default]
    Both,
    Content,
    Distortion,
}

impl FeatureSet {
    pub fn uses_content(self) -> bool {
        self != FeatureSet::Distortion
    }

    pub fn uses_distortion(self) -> bool {
        self != FeatureSet::Content
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Both => "both",
            Self::Content => "content",
            Self::Distortion => "distortion",
        }
    }

    /// Width of `f_q` under `profile`.
    pub fn quality_dim(self, profile: &NetProfile) -> usize {
        let c = if self.uses_content() { profile.fc_dim } else { 0 };
        let d = if self.uses_distortion() { profile.fd_dim } else { 0 };
        c + d
    }

    /// Width of the raw encoder vector `[GAP(F_c) ; f_d]`.
    fn raw_dim(self, profile: &NetProfile) -> usize {
        let c = if self.uses_content() { profile.content_channels } else { 0 };
        let d = if self.uses_distortion() { profile.fd_dim } else { 0 };
        c + d
    }
}

impl FromStr for FeatureSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::Both, Self::Content, Self::Distortion]
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::arg(format!("unknown feature set `{s}` (both, content, distortion)")))
    }
}

/// Frozen encoder outputs for one image: `GAP(F_c)` and `f_d`, each empty
/// when the feature set does not use it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawFeature {
    pub gap_fc: Vec<f32>,
    pub f_d: Vec<f32>,
}

impl RawFeature {
    fn joined(&self) -> impl Iterator<Item = f32> + '_ {
        self.gap_fc.iter().chain(&self.f_d).copied()
    }
}

/// `f_q = [f_c ; f_d]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QualityFeature {
    pub f_c: Vec<f32>,
    pub f_d: Vec<f32>,
}

impl QualityFeature {
    pub fn f_q(&self) -> Vec<f32> {
        self.f_c.iter().chain(&self.f_d).copied().collect()
    }
}

/// The frozen encoder pair.
pub struct Encoders {
    pub profile: NetProfile,
    pub cae: Option<ContentAutoencoder<f32>>,
    pub dae: Option<DistortionAutoencoder<f32>>,
}

impl Encoders {
    pub fn new(cae: Option<ContentAutoencoder<f32>>, dae: Option<DistortionAutoencoder<f32>>) -> Result<Self> {
        let profile = match (&cae, &dae) {
            (Some(c), Some(d)) if c.profile != d.profile => {
                return Err(Error::arg(format!("CAE profile {} differs from DAE profile {}", c.profile, d.profile)))
            }
            (Some(c), _) => c.profile,
            (None, Some(d)) => d.profile,
            (None, None) => return Err(Error::arg("at least one encoder is required")),
        };
        Ok(Self { profile, cae, dae })
    }

    pub fn from_checkpoints(cae: Option<&Checkpoint>, dae: Option<&Checkpoint>) -> Result<Self> {
        Self::new(cae.map(load_cae).transpose()?, dae.map(load_dae).transpose()?)
    }

    pub fn supports(&self, features: FeatureSet) -> Result<()> {
        if features.uses_content() && self.cae.is_none() {
            return Err(Error::arg("feature set needs a content encoder checkpoint"));
        }
        if features.uses_distortion() && self.dae.is_none() {
            return Err(Error::arg("feature set needs a distortion encoder checkpoint"));
        }
        Ok(())
    }

    /// Full-size features; sides not divisible by 4 are reflect-padded.
    pub fn extract(&mut self, img: &Image, features: FeatureSet) -> Result<RawFeature> {
        self.supports(features)?;
        img.check_pipeline_size()?;
        let padded;
        let img = if img.width() % 4 != 0 || img.height() % 4 != 0 {
            padded = img.reflect_pad_to_multiple(4);
            &padded
        } else {
            img
        };
        let gap_fc = match (&mut self.cae, features.uses_content()) {
            (Some(cae), true) => global_average(&cae.cae_encode(img)?),
            _ => Vec::new(),
        };
        let f_d = match (&mut self.dae, features.uses_distortion()) {
            (Some(dae), true) => dae.dae_encode(img)?.f_d,
            _ => Vec::new(),
        };
        Ok(RawFeature { gap_fc, f_d })
    }

    /// `(CAE hash, DAE hash)`.
    pub fn hashes(&mut self) -> (Option<String>, Option<String>) {
        (
            self.cae.as_mut().map(|c| param_hash(c)),
            self.dae.as_mut().map(|d| param_hash(d)),
        )
    }
}

fn global_average(f: &ContentFeature) -> Vec<f32> {
    let plane = f.map.height() * f.map.width();
    f.map
        .item(0)
        .chunks(plane)
        .map(|c| (c.iter().map(|&v| v as f64).sum::<f64>() / plane as f64) as f32)
        .collect()
}

/// Three fully connected layers with ReLU between them.
pub struct Regressor {
    net: Sequential<f32>,
    in_dim: usize,
}

impl Regressor {
    pub const HIDDEN: [usize; 2] = [128, 64];

    pub fn new(in_dim: usize, rng: &mut Rng) -> Self {
        let [h1, h2] = Self::HIDDEN;
        let net = Sequential::new()
            .with("fc1", Linear::new(in_dim, h1, rng))
            .with("relu1", Relu::new())
            .with("fc2", Linear::new(h1, h2, rng))
            .with("relu2", Relu::new())
            .with("fc3", Linear::with_std(h2, 1, (1.0 / h2 as f64).sqrt(), rng));
        Self { net, in_dim }
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }
}

impl Parameterized<f32> for Regressor {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<f32>)) {
        self.net.visit(prefix, f);
    }
}

/// The trainable VISOR head: input standardization, content pooling and
/// the regressor.
pub struct Visor {
    pub profile: NetProfile,
    pub features: FeatureSet,
    /// Affine map from normalized predictions back to MOS units.
    pub mos_range: (f64, f64),
    mean: Param<f32>,
    std: Param<f32>,
    pool: Option<Linear<f32>>,
    regressor: Regressor,
}

impl Visor {
    pub fn new(profile: NetProfile, features: FeatureSet, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let regressor = Regressor::new(features.quality_dim(&profile), &mut rng);
        Self::with_regressor(profile, features, regressor, seed).expect("regressor built at the right width")
    }

    /// Fails unless `regressor` consumes exactly `|f_q|` inputs.
    pub fn with_regressor(profile: NetProfile, features: FeatureSet, regressor: Regressor, seed: u64) -> Result<Self> {
        let want = features.quality_dim(&profile);
        if regressor.in_dim() != want {
            return Err(Error::arg(format!(
                "regressor input width {} does not match |f_q| = {want}",
                regressor.in_dim()
            )));
        }
        let mut rng = Rng::new(derive_seed(seed, 1));
        let pool = features.uses_content().then(|| {
            let c = profile.content_channels;
            Linear::with_std(c, profile.fc_dim, (1.0 / c as f64).sqrt(), &mut rng)
        });
        let raw = features.raw_dim(&profile);
        Ok(Self {
            profile,
            features,
            mos_range: (0.0, 1.0),
            mean: Param::buffer(&[raw], 0.0),
            std: Param::buffer(&[raw], 1.0),
            pool,
            regressor,
        })
    }

    fn content_len(&self) -> usize {
        if self.features.uses_content() {
            self.profile.content_channels
        } else {
            0
        }
    }

    fn check_raw(&self, r: &RawFeature) -> Result<()> {
        let want_c = self.content_len();
        let want_d = if self.features.uses_distortion() { self.profile.fd_dim } else { 0 };
        if r.gap_fc.len() != want_c || r.f_d.len() != want_d {
            return Err(Error::arg(format!(
                "encoder features ({}, {}) do not match the VISOR layout ({want_c}, {want_d})",
                r.gap_fc.len(),
                r.f_d.len()
            )));
        }
        Ok(())
    }

    fn standardized(&self, raw: &[RawFeature]) -> Result<Tensor<f32>> {
        let width = self.mean.len();
        let mut data = Vec::with_capacity(raw.len() * width);
        for r in raw {
            self.check_raw(r)?;
            data.extend(r.joined().zip(self.mean.value.iter().zip(&self.std.value)).map(|(v, (m, s))| (v - m) / s));
        }
        Ok(Tensor::from_rows(raw.len(), width, data))
    }

    /// `f_c` from a content feature map.
    pub fn pool_content(&self, f_c: &ContentFeature) -> Result<Vec<f32>> {
        let pool = self.pool.as_ref().ok_or_else(|| Error::arg("this VISOR does not use content features"))?;
        if f_c.channels() != self.profile.content_channels {
            return Err(Error::arg(format!(
                "content feature has {} channels, expected {}",
                f_c.channels(),
                self.profile.content_channels
            )));
        }
        let gap = global_average(f_c);
        let c = gap.len();
        let x: Vec<f32> = gap
            .iter()
            .zip(&self.mean.value[..c])
            .zip(&self.std.value[..c])
            .map(|((v, m), s)| (v - m) / s)
            .collect();
        Ok(linear_eval(pool, &x))
    }

    /// `f_c` and `f_d` as seen by the regressor.
    pub fn quality_feature(&self, raw: &RawFeature) -> Result<QualityFeature> {
        let x = self.standardized(std::slice::from_ref(raw))?;
        let c = self.content_len();
        let f_c = match &self.pool {
            Some(pool) => linear_eval(pool, &x.data[..c]),
            None => Vec::new(),
        };
        Ok(QualityFeature {
            f_c,
            f_d: x.data[c..].to_vec(),
        })
    }

    fn forward(&mut self, x: &Tensor<f32>, mode: Mode) -> Tensor<f32> {
        let c = self.content_len();
        let n = x.batch();
        let f_q = match &mut self.pool {
            Some(pool) => {
                let parts = x.split_channels(&[c, x.channels() - c]);
                let f_c = pool.forward(&parts[0], mode);
                Tensor::concat_channels(&[&f_c, &parts[1]])
            }
            None => x.clone(),
        };
        debug_assert_eq!(f_q.shape, [n, self.regressor.in_dim, 1, 1]);
        self.regressor.net.forward(&f_q, mode)
    }

    fn backward(&mut self, grad: &Tensor<f32>) {
        let g = self.regressor.net.backward(grad);
        if let Some(pool) = &mut self.pool {
            let fc = self.profile.fc_dim;
            let parts = g.split_channels(&[fc, g.channels() - fc]);
            pool.backward(&parts[0]);
        }
    }

    /// Scores in the normalized `[0, 1]` MOS space.
    pub fn predict_raw(&mut self, raw: &[RawFeature]) -> Result<Vec<f64>> {
        let x = self.standardized(raw)?;
        Ok(self.forward(&x, Mode::Eval).data.iter().map(|&v| v as f64).collect())
    }

    pub fn denormalize(&self, score: f64) -> f64 {
        self.mos_range.0 + score * (self.mos_range.1 - self.mos_range.0)
    }

    pub fn to_checkpoint(&mut self, corpus_seed: u64, patch: (usize, usize), steps: u64) -> Checkpoint {
        let mut meta = CheckpointMeta::new(ModelKind::Visor, self.profile, "visor");
        meta.step = steps;
        meta.corpus_seed = corpus_seed;
        meta.patch = patch;
        meta.extra.insert("features".into(), self.features.name().into());
        meta.extra.insert("mos_min".into(), self.mos_range.0.into());
        meta.extra.insert("mos_max".into(), self.mos_range.1.into());
        Checkpoint::from_model(self, meta)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let meta = &ckpt.meta;
        meta.expect_kind(ModelKind::Visor)?;
        let features = meta
            .extra
            .get("features")
            .and_then(|v| v.as_str())
            .ok_or_else(|| Error::Checkpoint("VISOR checkpoint lacks its feature set".into()))?
            .parse()?;
        let bound = |key: &str| {
            meta.extra
                .get(key)
                .and_then(|v| v.as_f64())
                .ok_or_else(|| Error::Checkpoint(format!("VISOR checkpoint lacks `{key}`")))
        };
        let mut visor = Visor::new(meta.profile, features, 0);
        visor.mos_range = (bound("mos_min")?, bound("mos_max")?);
        ckpt.apply_to(&mut visor)?;
        Ok(visor)
    }
}

fn linear_eval(layer: &Linear<f32>, x: &[f32]) -> Vec<f32> {
    let n_in = layer.in_features();
    layer
        .weight
        .value
        .chunks(n_in)
        .zip(&layer.bias.value)
        .map(|(row, b)| row.iter().zip(x).map(|(w, v)| w * v).sum::<f32>() + b)
        .collect()
}

impl Parameterized<f32> for Visor {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<f32>)) {
        f(&join(prefix, "norm.mean"), &mut self.mean);
        f(&join(prefix, "norm.std"), &mut self.std);
        if let Some(pool) = &mut self.pool {
            pool.visit(&join(prefix, "pool"), f);
        }
        self.regressor.visit(&join(prefix, "head"), f);
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisorConfig {
    pub features: FeatureSet,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Square training crop side; 224 canonical, 64 tiny.
    pub patch_size: usize,
    pub seed: u64,
    pub holdout_fraction: f64,
    /// L2 penalty on weight matrices (biases and statistics are exempt).
    pub weight_decay: f64,
}

impl VisorConfig {
    pub fn new(profile: &NetProfile) -> Self {
        Self {
            features: FeatureSet::Both,
            epochs: 150,
            batch_size: 32,
            learning_rate: 1e-3,
            patch_size: if profile.width_scale >= NetProfile::CANONICAL_SCALE { 224 } else { 64 },
            seed: 0,
            holdout_fraction: 0.1,
            weight_decay: 1e-3,
        }
    }

    /// Overlays the keys of a TOML document on `base`.
    pub fn from_toml(text: &str, base: VisorConfig) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::format("config", e))?;
        let cfg: VisorConfig = crate::train::overlay(&base, &table)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<std::path::Path>, base: VisorConfig) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, base)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return Err(Error::arg("epochs, batch_size and learning_rate must be positive"));
        }
        if self.patch_size < crate::image::MIN_SIDE || self.patch_size % 4 != 0 {
            return Err(Error::arg(format!("patch_size {} must be a multiple of 4 and at least 32", self.patch_size)));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::arg("holdout_fraction must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::arg("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisorReport {
    pub steps: u64,
    /// MSE in the normalized MOS space on the held-out items.
    pub holdout_mse_before: f64,
    pub holdout_mse_after: f64,
    pub cae_hash: Option<String>,
    pub dae_hash: Option<String>,
}

/// One training crop per image, seeded per position in the dataset.
pub fn training_features(
    images: &[&Image],
    encoders: &mut Encoders,
    features: FeatureSet,
    patch: usize,
    seed: u64,
) -> Result<Vec<RawFeature>> {
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let h = (patch.min(img.height()) / 4) * 4;
            let w = (patch.min(img.width()) / 4) * 4;
            let mut rng = Rng::new(derive_seed(seed, i as u64));
            let c = crate::image::crop_patch(img, (h, w), &mut rng)?;
            encoders.extract(&c, features)
        })
        .collect()
}

fn normalize_targets(mos: &[f64]) -> Result<((f64, f64), Vec<f64>)> {
    if mos.iter().any(|m| !m.is_finite()) {
        return Err(Error::arg("MOS values must be finite"));
    }
    let lo = mos.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = mos.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    // A constant target set maps to 0 with unit span.
    let span = if hi > lo { hi - lo } else { 1.0 };
    Ok(((lo, lo + span), mos.iter().map(|m| (m - lo) / span).collect()))
}

fn mse(pred: &[f64], target: &[f64]) -> f64 {
    pred.iter().zip(target).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len().max(1) as f64
}

/// Fits a VISOR head on precomputed encoder features.
pub fn train_visor_features(
    raw: &[RawFeature],
    mos: &[f64],
    profile: NetProfile,
    cfg: &VisorConfig,
) -> Result<(Visor, VisorReport)> {
    cfg.validate()?;
    if raw.is_empty() {
        return Err(Error::arg("empty VISOR training set"));
    }
    if raw.len() != mos.len() {
        return Err(Error::arg("feature and MOS counts differ"));
    }
    let (range, targets) = normalize_targets(mos)?;
    let mut visor = Visor::new(profile, cfg.features, derive_seed(cfg.seed, 1));
    visor.mos_range = range;
    for r in raw {
        visor.check_raw(r)?;
    }

    let n = raw.len();
    let k = ((n as f64 * cfg.holdout_fraction).round() as usize).min(n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    Rng::new(derive_seed(cfg.seed, 2)).shuffle(&mut order);
    let mut held = order.split_off(n - k);
    let mut train = order;
    train.sort_unstable();
    held.sort_unstable();
    let measure = if held.is_empty() { &train } else { &held };

    // Standardization statistics from the training items only.
    let width = visor.mean.len();
    let mut mean = vec![0.0f64; width];
    let mut sq = vec![0.0f64; width];
    for &i in &train {
        for (j, v) in raw[i].joined().enumerate() {
            mean[j] += v as f64;
            sq[j] += (v as f64).powi(2);
        }
    }
    let m = train.len() as f64;
    for j in 0..width {
        let mu = mean[j] / m;
        let var = (sq[j] / m - mu * mu).max(0.0);
        visor.mean.value[j] = mu as f32;
        visor.std.value[j] = var.sqrt().max(1e-6) as f32;
    }

    let held_raw: Vec<RawFeature> = measure.iter().map(|&i| raw[i].clone()).collect();
    let held_t: Vec<f64> = measure.iter().map(|&i| targets[i]).collect();
    let holdout_mse_before = mse(&visor.predict_raw(&held_raw)?, &held_t);

    let mut rng = Rng::new(derive_seed(cfg.seed, 3));
    let mut adam = Adam::new(cfg.learning_rate);
    let mut steps = 0u64;
    for _ in 0..cfg.epochs {
        let mut order = train.clone();
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<RawFeature> = chunk.iter().map(|&i| raw[i].clone()).collect();
            let x = visor.standardized(&batch)?;
            let y = visor.forward(&x, Mode::Train);
            let scale = 2.0 / chunk.len() as f32;
            let grad: Vec<f32> = y
                .data
                .iter()
                .zip(chunk)
                .map(|(&p, &i)| scale * (p - targets[i] as f32))
                .collect();
            visor.backward(&Tensor::from_rows(chunk.len(), 1, grad));
            if cfg.weight_decay > 0.0 {
                let wd = cfg.weight_decay as f32;
                visor.visit("", &mut |name, p| {
                    if p.trainable && name.ends_with("weight") {
                        p.grad.iter_mut().zip(&p.value).for_each(|(g, w)| *g += wd * w);
                    }
                });
            }
            adam.step(&mut visor);
            steps += 1;
        }
    }
    let holdout_mse_after = mse(&visor.predict_raw(&held_raw)?, &held_t);
    let report = VisorReport {
        steps,
        holdout_mse_before,
        holdout_mse_after,
        cae_hash: None,
        dae_hash: None,
    };
    Ok((visor, report))
}

/// Extracts training features with frozen encoders and fits a VISOR head.
/// Encoder hashes are checked before and after.
pub fn train_visor(
    dataset: &[(Image, f64)],
    encoders: &mut Encoders,
    cfg: &VisorConfig,
) -> Result<(Visor, VisorReport)> {
    if dataset.is_empty() {
        return Err(Error::arg("empty VISOR training set"));
    }
    encoders.supports(cfg.features)?;
    let before = encoders.hashes();
    let images: Vec<&Image> = dataset.iter().map(|(img, _)| img).collect();
    let raw = training_features(&images, encoders, cfg.features, cfg.patch_size, derive_seed(cfg.seed, 4))?;
    let mos: Vec<f64> = dataset.iter().map(|(_, m)| *m).collect();
    let (visor, mut report) = train_visor_features(&raw, &mos, encoders.profile, cfg)?;
    let after = encoders.hashes();
    if before != after {
        return Err(Error::Checkpoint("encoder parameters changed during VISOR training".into()));
    }
    (report.cae_hash, report.dae_hash) = after;
    Ok((visor, report))
}

/// Encoders plus a trained head, ready for full-size inference.
pub struct Predictor {
    pub encoders: Encoders,
    pub visor: Visor,
}

impl Predictor {
    pub fn new(encoders: Encoders, visor: Visor) -> Result<Self> {
        if encoders.profile != visor.profile {
            return Err(Error::arg("encoder and VISOR profiles differ"));
        }
        encoders.supports(visor.features)?;
        Ok(Self { encoders, visor })
    }

    pub fn from_checkpoints(cae: Option<&Checkpoint>, dae: Option<&Checkpoint>, visor: &Checkpoint) -> Result<Self> {
        Self::new(Encoders::from_checkpoints(cae, dae)?, Visor::from_checkpoint(visor)?)
    }

    /// Score in the normalized MOS space.
    pub fn predict_quality(&mut self, img: &Image) -> Result<f64> {
        let raw = self.encoders.extract(img, self.visor.features)?;
        Ok(self.visor.predict_raw(&[raw])?[0])
    }

    pub fn quality_feature(&mut self, img: &Image) -> Result<QualityFeature> {
        let raw = self.encoders.extract(img, self.visor.features)?;
        self.visor.quality_feature(&raw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::DaeVariant;
    use crate::synth::synth_pristine;

    fn encoders(profile: NetProfile) -> Encoders {
        Encoders::new(
            Some(ContentAutoencoder::new(profile, 1)),
            Some(DistortionAutoencoder::new(profile, DaeVariant::Collaborative, (64, 64), 2)),
        )
        .unwrap()
    }

    #[test]
    fn config_toml_overlay() {
        let base = VisorConfig::new(&NetProfile::tiny());
        let cfg = VisorConfig::from_toml("epochs = 7\nfeatures = \"distortion\"\n", base.clone()).unwrap();
        assert_eq!((cfg.epochs, cfg.features, cfg.patch_size), (7, FeatureSet::Distortion, 64));
        assert_eq!(cfg.weight_decay, base.weight_decay);
        assert!(VisorConfig::from_toml("bogus = 1", base.clone()).is_err());
        assert!(VisorConfig::from_toml("weight_decay = -1.0", base.clone()).is_err());
        assert!(VisorConfig::from_toml("patch_size = 30", base).is_err());
    }

    #[test]
    fn canonical_widths() {
        let p = NetProfile::canonical();
        assert_eq!(FeatureSet::Both.quality_dim(&p), 272);
        assert_eq!(FeatureSet::Content.quality_dim(&p), 16);
        let v = Visor::new(p, FeatureSet::Both, 0);
        let f = ContentFeature {
            map: Tensor::from_vec([1, 256, 7, 9], vec![0.5; 256 * 63]),
        };
        assert_eq!(v.pool_content(&f).unwrap().len(), 16);
        let bad = ContentFeature {
            map: Tensor::zeros([1, 64, 4, 4]),
        };
        assert!(v.pool_content(&bad).is_err());
    }

    #[test]
    fn regressor_width_is_checked() {
        let p = NetProfile::tiny();
        let mut rng = Rng::new(0);
        assert!(Visor::with_regressor(p, FeatureSet::Both, Regressor::new(68, &mut rng), 0).is_ok());
        assert!(Visor::with_regressor(p, FeatureSet::Both, Regressor::new(64, &mut rng), 0).is_err());
        assert!(Visor::with_regressor(p, FeatureSet::Distortion, Regressor::new(64, &mut rng), 0).is_ok());
    }

    #[test]
    fn constant_content_pools_to_the_conv_response() {
        // GAP of a constant map is the constant, so f_c equals the 1×1
        // convolution applied to that per-channel constant.
        let p = NetProfile::tiny();
        let v = Visor::new(p, FeatureSet::Both, 3);
        let consts: Vec<f32> = (0..64).map(|c| c as f32 * 0.1).collect();
        let mut data = Vec::new();
        for &c in &consts {
            data.extend(std::iter::repeat(c).take(5 * 6));
        }
        let f = ContentFeature {
            map: Tensor::from_vec([1, 64, 5, 6], data),
        };
        let pool = v.pool.as_ref().unwrap();
        let want = linear_eval(pool, &consts);
        for (a, b) in v.pool_content(&f).unwrap().iter().zip(&want) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn layout_slices_are_independent() {
        let p = NetProfile::tiny();
        let v = Visor::new(p, FeatureSet::Both, 3);
        let raw = RawFeature {
            gap_fc: vec![0.3; 64],
            f_d: vec![0.1; 64],
        };
        let mut other = raw.clone();
        other.f_d[5] = 9.0;
        let (a, b) = (v.quality_feature(&raw).unwrap(), v.quality_feature(&other).unwrap());
        assert_eq!(a.f_c, b.f_c);
        assert_ne!(a.f_d, b.f_d);
        assert_eq!(a.f_q().len(), 68);
        assert_eq!(&a.f_q()[..4], a.f_c.as_slice());
        let mut third = raw.clone();
        third.gap_fc[0] = -2.0;
        assert_eq!(v.quality_feature(&third).unwrap().f_d, a.f_d);
    }

    #[test]
    fn full_size_inputs_of_any_shape() {
        let mut enc = encoders(NetProfile::tiny());
        for (h, w) in [(64, 64), (40, 52), (33, 45)] {
            let img = &synth_pristine(1, (h, w), 1).unwrap()[0];
            let raw = enc.extract(img, FeatureSet::Both).unwrap();
            assert_eq!((raw.gap_fc.len(), raw.f_d.len()), (64, 64));
        }
        assert!(enc.extract(&Image::zeros(20, 40), FeatureSet::Both).is_err());
        let mut dae_only = Encoders::new(None, enc.dae.take()).unwrap();
        assert!(dae_only.extract(&Image::zeros(32, 32), FeatureSet::Both).is_err());
        assert_eq!(dae_only.extract(&Image::zeros(32, 32), FeatureSet::Distortion).unwrap().gap_fc.len(), 0);
    }

    #[test]
    fn constant_targets_are_learned() {
        let mut rng = Rng::new(1);
        let raw: Vec<RawFeature> = (0..2000)
            .map(|_| RawFeature {
                gap_fc: (0..64).map(|_| rng.normal() as f32).collect(),
                f_d: (0..64).map(|_| rng.normal() as f32).collect(),
            })
            .collect();
        let mos = vec![3.5; 2000];
        let cfg = VisorConfig {
            epochs: 20,
            weight_decay: 1e-2,
            holdout_fraction: 0.2,
            ..VisorConfig::new(&NetProfile::tiny())
        };
        let (mut visor, report) = train_visor_features(&raw, &mos, NetProfile::tiny(), &cfg).unwrap();
        assert!(report.holdout_mse_after < 1e-4, "{report:?}");
        let score = visor.predict_raw(&raw[..1]).unwrap()[0];
        assert!((visor.denormalize(score) - 3.5).abs() < 0.02);
    }

    #[test]
    fn visor_training_leaves_encoders_untouched() {
        let imgs = synth_pristine(6, (48, 48), 4).unwrap();
        let dataset: Vec<(Image, f64)> = imgs.into_iter().enumerate().map(|(i, img)| (img, i as f64)).collect();
        let mut enc = encoders(NetProfile::tiny());
        let before = enc.hashes();
        let cfg = VisorConfig {
            epochs: 3,
            patch_size: 32,
            ..VisorConfig::new(&NetProfile::tiny())
        };
        let (mut visor, report) = train_visor(&dataset, &mut enc, &cfg).unwrap();
        assert_eq!(enc.hashes(), before);
        assert_eq!((report.cae_hash.clone(), report.dae_hash.clone()), before);

        let ckpt = visor.to_checkpoint(0, (32, 32), report.steps);
        let mut restored = Visor::from_checkpoint(&ckpt).unwrap();
        let raw = enc.extract(&dataset[0].0, FeatureSet::Both).unwrap();
        assert_eq!(
            visor.predict_raw(std::slice::from_ref(&raw)).unwrap(),
            restored.predict_raw(&[raw]).unwrap()
        );
        assert!(train_visor(&[], &mut enc, &cfg).is_err());
    }

    #[test]
    fn scores_do_not_depend_on_batch_order() {
        let mut rng = Rng::new(2);
        let raw: Vec<RawFeature> = (0..5)
            .map(|_| RawFeature {
                gap_fc: (0..64).map(|_| rng.normal() as f32).collect(),
                f_d: (0..64).map(|_| rng.normal() as f32).collect(),
            })
            .collect();
        let mut v = Visor::new(NetProfile::tiny(), FeatureSet::Both, 1);
        let fwd = v.predict_raw(&raw).unwrap();
        let mut rev = raw.clone();
        rev.reverse();
        let mut back = v.predict_raw(&rev).unwrap();
        back.reverse();
        assert_eq!(fwd, back);
    }
}
