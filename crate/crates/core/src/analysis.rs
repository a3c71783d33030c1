//! Feature analyses: content robustness, distortion separability and a
//! 2-D embedding for plotting.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, TypeTag};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::nets::{ContentAutoencoder, DistortionAutoencoder};
use crate::rng::Rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRecord {
    pub id: String,
    pub type_id: TypeTag,
    pub level: u8,
    pub f_d: Vec<f32>,
    /// Path of the image whose `F_c` pairs with this record.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f_c_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pseudo_mos: Option<f64>,
}

fn padded(img: &Image) -> std::borrow::Cow<'_, Image> {
    if img.width() % 4 == 0 && img.height() % 4 == 0 {
        std::borrow::Cow::Borrowed(img)
    } else {
        std::borrow::Cow::Owned(img.reflect_pad_to_multiple(4))
    }
}

/// One record per manifest entry, in manifest order.
pub fn feature_records(manifest: &CorpusManifest, dae: &mut DistortionAutoencoder<f32>) -> Result<Vec<FeatureRecord>> {
    manifest
        .records
        .iter()
        .map(|r| {
            let img = manifest.load(r.image_path())?;
            Ok(FeatureRecord {
                id: r.image_path().to_owned(),
                type_id: r.type_id,
                level: r.level,
                f_d: dae.dae_encode(&padded(&img))?.f_d,
                f_c_ref: Some(r.pristine_path.clone()),
                pseudo_mos: Some(r.pseudo_mos),
            })
        })
        .collect()
}

pub fn write_feature_records(records: &[FeatureRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::format("feature record", e))?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_feature_records(path: impl AsRef<Path>) -> Result<Vec<FeatureRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::format("feature record", e)))
        .collect()
}

/// Extracts features for every manifest record and writes them as JSONL.
pub fn export_features(
    manifest: &CorpusManifest,
    dae: &mut DistortionAutoencoder<f32>,
    out_path: impl AsRef<Path>,
) -> Result<Vec<FeatureRecord>> {
    let records = feature_records(manifest, dae)?;
    write_feature_records(&records, out_path)?;
    Ok(records)
}

/// Cosine similarity; `None` if either vector is zero.
pub fn cosine(a: &[f32], b: &[f32]) -> Option<f64> {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return None;
    }
    Some((ab / (aa.sqrt() * bb.sqrt())).clamp(-1.0, 1.0))
}

/// Mean cosine similarity over vector pairs.
pub fn mean_cosine(pairs: &[(Vec<f32>, Vec<f32>)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::arg("no pairs to compare"));
    }
    let mut total = 0.0;
    for (a, b) in pairs {
        if a.len() != b.len() {
            return Err(Error::arg("paired features differ in length"));
        }
        total += cosine(a, b).ok_or_else(|| Error::arg("cosine similarity of a zero vector"))?;
    }
    Ok(total / pairs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentSimilarity {
    /// Mean cosine between flattened `F_c` maps.
    pub raw: f64,
    /// Mean cosine between channel means of `F_c`.
    pub pooled: f64,
    pub pairs: usize,
}

/// Compares `F_c` of each distorted image with that of its pristine version.
pub fn content_similarity_study(pairs: &[(&Image, &Image)], cae: &mut ContentAutoencoder<f32>) -> Result<ContentSimilarity> {
    if pairs.is_empty() {
        return Err(Error::arg("no pairs to compare"));
    }
    let mut raw = Vec::with_capacity(pairs.len());
    let mut pooled = Vec::with_capacity(pairs.len());
    for (pristine, distorted) in pairs {
        if pristine.dims() != distorted.dims() {
            return Err(Error::arg("pair images differ in size"));
        }
        let a = cae.cae_encode(&padded(pristine))?.map;
        let b = cae.cae_encode(&padded(distorted))?.map;
        let plane = a.height() * a.width();
        let mean = |t: &crate::nn::Tensor<f32>| -> Vec<f32> {
            t.data.chunks(plane).map(|c| c.iter().sum::<f32>() / plane as f32).collect()
        };
        pooled.push((mean(&a), mean(&b)));
        raw.push((a.data, b.data));
    }
    Ok(ContentSimilarity {
        raw: mean_cosine(&raw)?,
        pooled: mean_cosine(&pooled)?,
        pairs: pairs.len(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub test_fraction: f64,
    /// L2 penalty on the probe weights.
    pub l2: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            l2: 1e-3,
            iterations: 300,
            learning_rate: 0.05,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Separability {
    /// Held-out accuracy of a linear probe predicting the distortion type.
    pub probe_accuracy: f64,
    pub classes: usize,
    pub test_size: usize,
    /// Mean pristine↔distorted distance minus mean pristine↔pristine
    /// distance; `None` with fewer than two pristine records.
    pub pristine_margin: Option<f64>,
}

/// Stratified split: `fraction` of each class (at least one when the class
/// has two or more members) goes to the test side.
fn stratified_split(labels: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let mut rng = Rng::new(seed);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (_, mut idx) in by_class {
        rng.shuffle(&mut idx);
        let mut k = (idx.len() as f64 * fraction).round() as usize;
        if idx.len() >= 2 {
            k = k.clamp(1, idx.len() - 1);
        } else {
            k = 0;
        }
        test.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

/// Multinomial logistic regression on standardized features, fitted by
/// full-batch Adam. Returns held-out accuracy.
pub fn linear_probe(features: &[Vec<f32>], labels: &[usize], cfg: &ProbeConfig) -> Result<(f64, usize)> {
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::arg("features and labels must be non-empty and of equal length"));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    if labels.iter().collect::<std::collections::BTreeSet<_>>().len() < 2 {
        return Err(Error::arg("the probe needs at least two classes"));
    }
    let d = features[0].len();
    if features.iter().any(|f| f.len() != d) {
        return Err(Error::arg("feature vectors differ in length"));
    }
    let (train, test) = stratified_split(labels, cfg.test_fraction, cfg.seed);
    if test.is_empty() {
        return Err(Error::arg("no held-out samples for the probe"));
    }
    let mut mean = vec![0.0f64; d];
    let mut var = vec![0.0f64; d];
    for &i in &train {
        for (j, &v) in features[i].iter().enumerate() {
            mean[j] += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= train.len() as f64);
    for &i in &train {
        for (j, &v) in features[i].iter().enumerate() {
            var[j] += (v as f64 - mean[j]).powi(2);
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / train.len() as f64).sqrt().max(1e-8)).collect();
    let x = |i: usize| -> Vec<f64> { features[i].iter().enumerate().map(|(j, &v)| (v as f64 - mean[j]) / std[j]).collect() };
    let xs: Vec<Vec<f64>> = (0..features.len()).map(x).collect();

    // Parameters: k rows of d weights followed by one bias each.
    let width = d + 1;
    let mut w = vec![0.0f64; k * width];
    let (mut m1, mut m2) = (vec![0.0; w.len()], vec![0.0; w.len()]);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let logits = |w: &[f64], xi: &[f64]| -> Vec<f64> {
        (0..k)
            .map(|c| {
                let row = &w[c * width..(c + 1) * width];
                row[..d].iter().zip(xi).map(|(a, b)| a * b).sum::<f64>() + row[d]
            })
            .collect()
    };
    for t in 1..=cfg.iterations {
        let mut g = vec![0.0; w.len()];
        for &i in &train {
            let z = logits(&w, &xs[i]);
            let mx = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = z.iter().map(|v| (v - mx).exp()).collect();
            let s: f64 = e.iter().sum();
            for c in 0..k {
                let delta = e[c] / s - if labels[i] == c { 1.0 } else { 0.0 };
                let row = &mut g[c * width..(c + 1) * width];
                for (gj, xj) in row[..d].iter_mut().zip(&xs[i]) {
                    *gj += delta * xj;
                }
                row[d] += delta;
            }
        }
        let n = train.len() as f64;
        for c in 0..k {
            for j in 0..width {
                let idx = c * width + j;
                g[idx] /= n;
                if j < d {
                    g[idx] += cfg.l2 * w[idx];
                }
            }
        }
        let (c1, c2) = (1.0 - b1.powi(t as i32), 1.0 - b2.powi(t as i32));
        for idx in 0..w.len() {
            m1[idx] = b1 * m1[idx] + (1.0 - b1) * g[idx];
            m2[idx] = b2 * m2[idx] + (1.0 - b2) * g[idx] * g[idx];
            w[idx] -= cfg.learning_rate * (m1[idx] / c1) / ((m2[idx] / c2).sqrt() + eps);
        }
    }
    let correct = test
        .iter()
        .filter(|&&i| {
            let z = logits(&w, &xs[i]);
            let best = (0..k).max_by(|&a, &b| z[a].total_cmp(&z[b]).then(b.cmp(&a))).unwrap_or(0);
            best == labels[i]
        })
        .count();
    Ok((correct as f64 / test.len() as f64, test.len()))
}

fn euclid(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum::<f64>().sqrt()
}

/// Mean pristine↔distorted distance minus mean pristine↔pristine distance.
pub fn pristine_margin(records: &[FeatureRecord]) -> Option<f64> {
    let pristine: Vec<&FeatureRecord> = records.iter().filter(|r| r.type_id == TypeTag::Pristine).collect();
    let distorted: Vec<&FeatureRecord> = records.iter().filter(|r| r.type_id != TypeTag::Pristine).collect();
    if pristine.len() < 2 || distorted.is_empty() {
        return None;
    }
    let mut pd = 0.0;
    for p in &pristine {
        for d in &distorted {
            pd += euclid(&p.f_d, &d.f_d);
        }
    }
    pd /= (pristine.len() * distorted.len()) as f64;
    let mut pp = 0.0;
    let mut count = 0usize;
    for i in 0..pristine.len() {
        for j in i + 1..pristine.len() {
            pp += euclid(&pristine[i].f_d, &pristine[j].f_d);
            count += 1;
        }
    }
    Some(pd - pp / count as f64)
}

/// Probe accuracy over distorted records (label = distortion type) plus the
/// pristine margin.
pub fn distortion_separability(records: &[FeatureRecord], cfg: &ProbeConfig) -> Result<Separability> {
    let distorted: Vec<&FeatureRecord> = records.iter().filter(|r| r.type_id != TypeTag::Pristine).collect();
    let mut classes: BTreeMap<TypeTag, usize> = BTreeMap::new();
    for r in &distorted {
        let next = classes.len();
        classes.entry(r.type_id).or_insert(next);
    }
    if classes.len() < 2 {
        return Err(Error::arg("separability needs at least two distortion types"));
    }
    let features: Vec<Vec<f32>> = distorted.iter().map(|r| r.f_d.clone()).collect();
    let labels: Vec<usize> = distorted.iter().map(|r| classes[&r.type_id]).collect();
    let (probe_accuracy, test_size) = linear_probe(&features, &labels, cfg)?;
    Ok(Separability {
        probe_accuracy,
        classes: classes.len(),
        test_size,
        pristine_margin: pristine_margin(records),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub coords: Vec<(f64, f64)>,
    /// Share of total variance on the two kept components.
    pub explained_variance: f64,
}

/// Projection onto the top two principal components. Each axis is signed so
/// that its largest-magnitude loading is positive.
pub fn embed_2d(features: &[Vec<f32>]) -> Result<Embedding> {
    if features.len() < 3 {
        return Err(Error::arg("embedding needs at least three records"));
    }
    let d = features[0].len();
    if d == 0 || features.iter().any(|f| f.len() != d) {
        return Err(Error::arg("feature vectors must share a positive length"));
    }
    let n = features.len();
    let mut mean = vec![0.0f64; d];
    for f in features {
        for (m, &v) in mean.iter_mut().zip(f) {
            *m += v as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| features[i][j] as f64 - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    if !(total > 1e-12) {
        return Err(Error::arg("features have zero variance"));
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axes: Vec<Vec<f64>> = order
        .iter()
        .take(2)
        .map(|&c| {
            let v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let lead = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if lead < 0.0 {
                v.iter().map(|x| -x).collect()
            } else {
                v
            }
        })
        .collect();
    let project = |i: usize, axis: Option<&Vec<f64>>| -> f64 {
        axis.map_or(0.0, |a| centered.row(i).iter().zip(a).map(|(x, y)| x * y).sum())
    };
    let coords = (0..n).map(|i| (project(i, axes.first()), project(i, axes.get(1)))).collect();
    let kept: f64 = order.iter().take(2).map(|&c| eig.eigenvalues[c].max(0.0)).sum();
    Ok(Embedding {
        coords,
        explained_variance: kept / total,
    })
}

/// Point colouring for [`render_svg`].
pub enum Coloring<'a> {
    /// One categorical label per point.
    Class(&'a [String]),
    /// One score per point, mapped onto a blue→red ramp.
    Score(&'a [f64]),
}

const PALETTE: [&str; 11] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#000000",
];

/// Scatter plot of 2-D points as a standalone SVG document.
pub fn render_svg(coords: &[(f64, f64)], coloring: Coloring, title: &str) -> String {
    let (size, pad) = (480.0, 40.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in coords {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    let sx = if x1 > x0 { (size - 2.0 * pad) / (x1 - x0) } else { 1.0 };
    let sy = if y1 > y0 { (size - 2.0 * pad) / (y1 - y0) } else { 1.0 };
    let mut classes: BTreeMap<&str, usize> = BTreeMap::new();
    if let Coloring::Class(labels) = &coloring {
        for l in labels.iter() {
            let next = classes.len();
            classes.entry(l.as_str()).or_insert(next);
        }
    }
    let (s0, s1) = match &coloring {
        Coloring::Score(s) => s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
        Coloring::Class(_) => (0.0, 1.0),
    };
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{pad}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));
    for (i, &(x, y)) in coords.iter().enumerate() {
        let color = match &coloring {
            Coloring::Class(labels) => PALETTE[classes[labels[i].as_str()] % PALETTE.len()].to_string(),
            Coloring::Score(s) => {
                let t = if s1 > s0 { (s[i] - s0) / (s1 - s0) } else { 0.5 };
                format!("rgb({},{},{})", (255.0 * t) as u8, 40, (255.0 * (1.0 - t)) as u8)
            }
        };
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}" fill-opacity="0.75"/>"#,
            pad + (x - x0) * sx,
            size - pad - (y - y0) * sy
        );
    }
    for (k, (label, idx)) in classes.iter().enumerate() {
        let y = 44.0 + 16.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<circle cx="{}" cy="{y}" r="4" fill="{}"/><text x="{}" y="{}" font-family="sans-serif" font-size="11">{}</text>"#,
            size - 130.0,
            PALETTE[idx % PALETTE.len()],
            size - 120.0,
            y + 4.0,
            escape(label)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
