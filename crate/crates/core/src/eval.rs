//! Correlation metrics and the evaluation protocols: reference-disjoint
//! splits, multi-session medians, weighted averages and cross-dataset runs.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::MosRecord;
use crate::error::{Error, Result};
use crate::image::{load_image, Image};
use crate::rng::Rng;
use crate::visor::{train_visor_features, training_features, Encoders, RawFeature, Visor, VisorConfig};

fn check_pair(pred: &[f64], gt: &[f64]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::arg(format!("length mismatch: {} predictions, {} labels", pred.len(), gt.len())));
    }
    if pred.len() < 2 {
        return Err(Error::arg("correlation needs at least two samples"));
    }
    if pred.iter().chain(gt).any(|v| !v.is_finite()) {
        return Err(Error::arg("correlation inputs must be finite"));
    }
    Ok(())
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::arg("correlation is undefined for a constant input"));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

/// Spearman rank correlation: Pearson correlation of average ranks.
pub fn srcc(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt)?;
    pearson(&average_ranks(pred), &average_ranks(gt))
}

/// Pearson linear correlation.
pub fn plcc(pred: &[f64], gt: &[f64]) -> Result<f64> {
    check_pair(pred, gt)?;
    pearson(pred, gt)
}

/// `Σ vᵢ·sᵢ / Σ sᵢ`.
pub fn weighted_average(values: &[f64], sizes: &[f64]) -> Result<f64> {
    if values.len() != sizes.len() || values.is_empty() {
        return Err(Error::arg("values and sizes must be non-empty and of equal length"));
    }
    if sizes.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::arg("sizes must be positive"));
    }
    let total: f64 = sizes.iter().sum();
    Ok(values.iter().zip(sizes).map(|(v, s)| v * s).sum::<f64>() / total)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Train/test indices into a record list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// The grouping key: the reference id, or the image itself for records
/// without one (authentic data degrades to a per-image split).
fn reference_key(r: &MosRecord) -> String {
    match &r.reference {
        Some(reference) => format!("ref:{reference}"),
        None => format!("img:{}", r.image_path.display()),
    }
}

/// Splits records so no reference appears on both sides; `ratio` of the
/// references (rounded, at least one per side) go to training.
pub fn split_by_reference(records: &[MosRecord], ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::arg("split ratio must lie in (0, 1)"));
    }
    let refs: BTreeSet<String> = records.iter().map(reference_key).collect();
    if refs.len() < 2 {
        return Err(Error::arg("splitting needs at least two references"));
    }
    let mut refs: Vec<String> = refs.into_iter().collect();
    Rng::new(seed).shuffle(&mut refs);
    let k = ((refs.len() as f64 * ratio).round() as usize).clamp(1, refs.len() - 1);
    let train_refs: BTreeSet<&String> = refs[..k].iter().collect();
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, r) in records.iter().enumerate() {
        if train_refs.contains(&reference_key(r)) {
            train.push(i);
        } else {
            test.push(i);
        }
    }
    Ok(Split { train, test })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionResult {
    pub session: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub srcc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plcc: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub ablation: String,
    pub sessions: Vec<SessionResult>,
    pub median_srcc: Option<f64>,
    pub median_plcc: Option<f64>,
    pub failed: usize,
}

impl EvalReport {
    pub fn from_sessions(dataset: impl Into<String>, ablation: impl Into<String>, sessions: Vec<SessionResult>) -> Self {
        let ok: Vec<&SessionResult> = sessions.iter().filter(|s| s.error.is_none()).collect();
        let s: Vec<f64> = ok.iter().filter_map(|s| s.srcc).collect();
        let p: Vec<f64> = ok.iter().filter_map(|s| s.plcc).collect();
        Self {
            dataset: dataset.into(),
            ablation: ablation.into(),
            failed: sessions.len() - ok.len(),
            median_srcc: median(&s),
            median_plcc: median(&p),
            sessions,
        }
    }

    pub fn split_seeds(&self) -> Vec<u64> {
        self.sessions.iter().map(|s| s.seed).collect()
    }
}

/// Runs `n` sessions with seeds `base_seed + i`. Each session trains a model
/// and evaluates it to `(predictions, labels)`. Failed sessions are recorded
/// and excluded from the medians.
pub fn run_sessions<M>(
    n: usize,
    base_seed: u64,
    dataset: &str,
    ablation: &str,
    mut train_fn: impl FnMut(u64) -> Result<M>,
    mut eval_fn: impl FnMut(&mut M, u64) -> Result<(Vec<f64>, Vec<f64>)>,
) -> Result<EvalReport> {
    if n == 0 {
        return Err(Error::arg("at least one session is required"));
    }
    let mut sessions = Vec::with_capacity(n);
    for i in 0..n {
        let seed = base_seed.wrapping_add(i as u64);
        let outcome = train_fn(seed)
            .and_then(|mut m| eval_fn(&mut m, seed))
            .and_then(|(pred, gt)| Ok((srcc(&pred, &gt)?, plcc(&pred, &gt)?)));
        sessions.push(match outcome {
            Ok((s, p)) => SessionResult {
                session: i,
                seed,
                srcc: Some(s),
                plcc: Some(p),
                error: None,
            },
            Err(e) => {
                log::warn!("session {i} failed: {e}");
                SessionResult {
                    session: i,
                    seed,
                    srcc: None,
                    plcc: None,
                    error: Some(e.to_string()),
                }
            }
        });
    }
    Ok(EvalReport::from_sessions(dataset, ablation, sessions))
}

pub fn reports_to_jsonl(reports: &[EvalReport]) -> Result<String> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::format("report", e))?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_reports(reports: &[EvalReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, reports_to_jsonl(reports)?).map_err(|e| Error::io(path, e))
}

/// Fixed-width table, one row per report.
pub fn render_table(reports: &[EvalReport]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"));
    let dw = reports.iter().map(|r| r.dataset.len()).chain([7]).max().unwrap_or(7);
    let aw = reports.iter().map(|r| r.ablation.len()).chain([7]).max().unwrap_or(7);
    let mut out = String::new();
    let _ = writeln!(out, "{:<dw$}  {:<aw$}  {:>6}  {:>6}  {:>8}  {:>6}", "dataset", "setting", "SRCC", "PLCC", "sessions", "failed");
    let _ = writeln!(out, "{}", "-".repeat(dw + aw + 40));
    for r in reports {
        let _ = writeln!(
            out,
            "{:<dw$}  {:<aw$}  {:>6}  {:>6}  {:>8}  {:>6}",
            r.dataset,
            r.ablation,
            fmt(r.median_srcc),
            fmt(r.median_plcc),
            r.sessions.len(),
            r.failed
        );
    }
    out
}

/// Encoder features for a MOS dataset: one seeded training crop and one
/// full-size pass per image.
pub struct FeatureTable {
    pub records: Vec<MosRecord>,
    pub crop: Vec<RawFeature>,
    pub full: Vec<RawFeature>,
}

impl FeatureTable {
    pub fn build(records: Vec<MosRecord>, encoders: &mut Encoders, cfg: &VisorConfig) -> Result<Self> {
        let images = records
            .iter()
            .map(|r| load_image(&r.image_path))
            .collect::<Result<Vec<_>>>()?;
        Self::from_images(records, &images, encoders, cfg)
    }

    pub fn from_images(records: Vec<MosRecord>, images: &[Image], encoders: &mut Encoders, cfg: &VisorConfig) -> Result<Self> {
        if records.len() != images.len() {
            return Err(Error::arg("record and image counts differ"));
        }
        let refs: Vec<&Image> = images.iter().collect();
        let crop = training_features(&refs, encoders, cfg.features, cfg.patch_size, crate::rng::derive_seed(cfg.seed, 4))?;
        let mut full = Vec::with_capacity(images.len());
        for (img, c) in images.iter().zip(&crop) {
            let covered = img.width() <= cfg.patch_size && img.height() <= cfg.patch_size
                && img.width() % 4 == 0
                && img.height() % 4 == 0;
            full.push(if covered { c.clone() } else { encoders.extract(img, cfg.features)? });
        }
        Ok(Self { records, crop, full })
    }

    pub fn mos(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter().map(|&i| self.records[i].mos).collect()
    }

    /// Trains a head on the training crops of `idx`.
    pub fn train(&self, idx: &[usize], cfg: &VisorConfig, seed: u64, profile: crate::profile::NetProfile) -> Result<Visor> {
        let raw: Vec<RawFeature> = idx.iter().map(|&i| self.crop[i].clone()).collect();
        let cfg = VisorConfig { seed, ..cfg.clone() };
        Ok(train_visor_features(&raw, &self.mos(idx), profile, &cfg)?.0)
    }

    /// Full-size predictions for `idx`.
    pub fn predict(&self, visor: &mut Visor, idx: &[usize]) -> Result<Vec<f64>> {
        let raw: Vec<RawFeature> = idx.iter().map(|&i| self.full[i].clone()).collect();
        visor.predict_raw(&raw)
    }
}

/// The in-dataset protocol: `sessions` reference-disjoint splits, a fresh
/// VISOR head per split, medians over sessions.
pub fn visor_sessions(
    table: &FeatureTable,
    profile: crate::profile::NetProfile,
    cfg: &VisorConfig,
    sessions: usize,
    base_seed: u64,
    ratio: f64,
    dataset: &str,
    ablation: &str,
) -> Result<EvalReport> {
    run_sessions(
        sessions,
        base_seed,
        dataset,
        ablation,
        |seed| {
            let split = split_by_reference(&table.records, ratio, seed)?;
            let visor = table.train(&split.train, cfg, seed, profile)?;
            Ok((visor, split))
        },
        |(visor, split), _| Ok((table.predict(visor, &split.test)?, table.mos(&split.test))),
    )
}

/// Trains one predictor on all of `train` and reports correlations on each
/// test set, in order. Test sets must not share a name or any image with
/// the training set.
pub fn cross_dataset_eval(
    train: (&str, &FeatureTable),
    tests: &[(&str, &FeatureTable)],
    profile: crate::profile::NetProfile,
    cfg: &VisorConfig,
    ablation: &str,
) -> Result<Vec<EvalReport>> {
    let (train_name, train_table) = train;
    let train_paths: BTreeSet<&Path> = train_table.records.iter().map(|r| r.image_path.as_path()).collect();
    for (name, table) in tests {
        if *name == train_name {
            return Err(Error::arg(format!("test dataset `{name}` is the training dataset")));
        }
        if table.records.iter().any(|r| train_paths.contains(r.image_path.as_path())) {
            return Err(Error::arg(format!("test dataset `{name}` shares images with `{train_name}`")));
        }
    }
    let all: Vec<usize> = (0..train_table.records.len()).collect();
    let mut visor = train_table.train(&all, cfg, cfg.seed, profile)?;
    tests
        .iter()
        .map(|(name, table)| {
            let idx: Vec<usize> = (0..table.records.len()).collect();
            let pred = table.predict(&mut visor, &idx)?;
            let gt = table.mos(&idx);
            let session = match (srcc(&pred, &gt), plcc(&pred, &gt)) {
                (Ok(s), Ok(p)) => SessionResult {
                    session: 0,
                    seed: cfg.seed,
                    srcc: Some(s),
                    plcc: Some(p),
                    error: None,
                },
                (Err(e), _) | (_, Err(e)) => SessionResult {
                    session: 0,
                    seed: cfg.seed,
                    srcc: None,
                    plcc: None,
                    error: Some(e.to_string()),
                },
            };
            Ok(EvalReport::from_sessions(format!("{train_name}->{name}"), ablation, vec![session]))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn rec(path: &str, reference: Option<&str>, mos: f64) -> MosRecord {
        MosRecord {
            image_path: PathBuf::from(path),
            mos,
            reference: reference.map(str::to_owned),
            type_id: None,
            level: None,
        }
    }

    #[test]
    fn correlation_examples() {
        assert!((srcc(&[1., 2., 3.], &[10., 20., 30.]).unwrap() - 1.0).abs() < 1e-15);
        assert!((srcc(&[3., 2., 1.], &[1., 2., 3.]).unwrap() + 1.0).abs() < 1e-15);
        assert!((plcc(&[3., 5., 7.], &[1., 2., 3.]).unwrap() - 1.0).abs() < 1e-15);
        assert!((plcc(&[-1., -2., -3.], &[1., 2., 3.]).unwrap() + 1.0).abs() < 1e-15);
        // cov = 1.5, var_x = 7/3·... worked by hand: r = 1.5 / sqrt(1 · 2.3333) = 0.98198
        let r = plcc(&[1., 2., 4.], &[1., 2., 3.]).unwrap();
        assert!((r - 1.5 / (1.0f64 * (7.0f64 / 3.0)).sqrt()).abs() < 1e-12);
        assert!((r - 0.9819805060619657).abs() < 1e-12);
    }

    #[test]
    fn correlation_errors() {
        assert!(srcc(&[1., 2.], &[1., 2., 3.]).is_err());
        assert!(srcc(&[1.], &[1.]).is_err());
        assert!(plcc(&[1., 2., 3.], &[2., 2., 2.]).is_err());
        assert!(srcc(&[1., f64::NAN], &[1., 2.]).is_err());
    }

    #[test]
    fn ties_share_ranks() {
        assert_eq!(average_ranks(&[1., 2., 2., 3.]), vec![1.0, 2.5, 2.5, 4.0]);
        assert_eq!(average_ranks(&[5., 5., 5.]), vec![2.0, 2.0, 2.0]);
    }

    #[test]
    fn weighted_and_median() {
        assert!((weighted_average(&[0.9, 0.8], &[100., 300.]).unwrap() - 0.825).abs() < 1e-12);
        assert_eq!(weighted_average(&[0.7], &[5.]).unwrap(), 0.7);
        assert!(weighted_average(&[0.7], &[5., 1.]).is_err());
        assert!(weighted_average(&[0.7], &[0.]).is_err());
        let tenths: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        assert!((median(&tenths).unwrap() - 0.55).abs() < 1e-12);
        assert_eq!(median(&[0.3]), Some(0.3));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn reference_split_counts() {
        let records: Vec<MosRecord> = (0..10)
            .flat_map(|r| (0..50).map(move |d| rec(&format!("{r}_{d}.png"), Some(&format!("ref{r}")), d as f64)))
            .collect();
        let split = split_by_reference(&records, 0.8, 3).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (400, 100));
        assert_eq!(split, split_by_reference(&records, 0.8, 3).unwrap());
        assert!(split_by_reference(&records[..50], 0.8, 3).is_err());
    }

    #[test]
    fn authentic_records_split_per_image() {
        let records: Vec<MosRecord> = (0..20).map(|i| rec(&format!("{i}.png"), None, i as f64)).collect();
        let split = split_by_reference(&records, 0.8, 1).unwrap();
        assert_eq!((split.train.len(), split.test.len()), (16, 4));
    }

    #[test]
    fn sessions_collect_failures() {
        let report = run_sessions(
            4,
            100,
            "toy",
            "none",
            |seed| if seed == 102 { Err(Error::arg("boom")) } else { Ok(seed) },
            |&mut seed, _| {
                let gt: Vec<f64> = (0..10).map(|i| i as f64).collect();
                let pred = gt.iter().map(|v| v + (seed % 2) as f64 * 0.0).collect();
                Ok((pred, gt))
            },
        )
        .unwrap();
        assert_eq!(report.failed, 1);
        assert_eq!(report.split_seeds(), vec![100, 101, 102, 103]);
        assert_eq!(report.median_srcc, Some(1.0));
        assert!(report.sessions[2].error.as_deref().unwrap().contains("boom"));
        let one = run_sessions(1, 0, "toy", "none", |_| Ok(()), |_, _| Ok((vec![1., 3., 2.], vec![1., 2., 3.]))).unwrap();
        assert_eq!(one.median_srcc, one.sessions[0].srcc);
        assert!(run_sessions(0, 0, "x", "y", |_| Ok(()), |_, _| Ok((vec![], vec![]))).is_err());
    }

    #[test]
    fn table_and_jsonl() {
        let r = EvalReport::from_sessions(
            "toy",
            "none",
            vec![SessionResult {
                session: 0,
                seed: 1,
                srcc: Some(0.91234),
                plcc: Some(0.9),
                error: None,
            }],
        );
        let t = render_table(&[r.clone()]);
        assert!(t.contains("0.912") && t.contains("toy"));
        let line = reports_to_jsonl(&[r.clone()]).unwrap();
        let back: EvalReport = serde_json::from_str(line.trim()).unwrap();
        assert_eq!(back, r);
    }
}
