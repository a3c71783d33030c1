//! Distorted-corpus generation and the line-delimited JSON manifests that
//! describe corpora and MOS-labelled datasets.
//!
//! A corpus directory looks like
//!
//! ```text
//! manifest.jsonl
//! pristine/0000.png
//! dist/<type>/<level>/0000_<seed>.png
//! ```
//!
//! `manifest.jsonl` starts with a header line
//! `{"corpus_seed":..,"generator_version":..}` followed by one record per
//! image. Paths inside records are relative to the manifest's directory.

use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::distortion::{apply_distortion, DistortionSpec, DistortionType};
use crate::error::{Error, Result};
use crate::image::{load_image, save_image, Image};
use crate::rng::derive_seed;

pub const GENERATOR_VERSION: &str = "coae-corpus/1";
pub const MANIFEST_FILE: &str = "manifest.jsonl";

/// `"pristine"` or a distortion type name.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TypeTag {
    Pristine,
    Distorted(DistortionType),
}

impl TypeTag {
    pub fn distortion(self) -> Option<DistortionType> {
        match self {
            TypeTag::Pristine => None,
            TypeTag::Distorted(t) => Some(t),
        }
    }
}

impl fmt::Display for TypeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TypeTag::Pristine => f.write_str("pristine"),
            TypeTag::Distorted(t) => f.write_str(t.name()),
        }
    }
}

impl TryFrom<String> for TypeTag {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        if s == "pristine" {
            Ok(TypeTag::Pristine)
        } else {
            s.parse().map(TypeTag::Distorted)
        }
    }
}

impl From<TypeTag> for String {
    fn from(t: TypeTag) -> String {
        t.to_string()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub pristine_path: String,
    pub distorted_path: Option<String>,
    pub type_id: TypeTag,
    /// 0 for pristine records.
    pub level: u8,
    pub seed: u64,
    pub pseudo_mos: f64,
}

impl CorpusRecord {
    pub fn is_pristine(&self) -> bool {
        self.type_id == TypeTag::Pristine
    }

    /// The file holding this record's image.
    pub fn image_path(&self) -> &str {
        self.distorted_path.as_deref().unwrap_or(&self.pristine_path)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    corpus_seed: u64,
    generator_version: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorpusManifest {
    pub records: Vec<CorpusRecord>,
    pub corpus_seed: u64,
    pub generator_version: String,
    /// Directory that record paths are relative to.
    pub root: PathBuf,
}

/// `1 − level/5`, and 1.0 for pristine images.
pub fn pseudo_mos(level: u8) -> f64 {
    1.0 - level as f64 / 5.0
}

impl CorpusManifest {
    pub fn pristine_records(&self) -> impl Iterator<Item = &CorpusRecord> {
        self.records.iter().filter(|r| r.is_pristine())
    }

    pub fn distorted_records(&self) -> impl Iterator<Item = &CorpusRecord> {
        self.records.iter().filter(|r| !r.is_pristine())
    }

    /// The same corpus restricted to its pristine records.
    pub fn pristine_only(&self) -> CorpusManifest {
        CorpusManifest {
            records: self.pristine_records().cloned().collect(),
            ..self.clone()
        }
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn load(&self, rel: &str) -> Result<Image> {
        load_image(self.resolve(rel))
    }

    /// Checks that every distorted record points at a pristine record and
    /// that pseudo-MOS values follow the level rule.
    pub fn validate(&self) -> Result<()> {
        let pristine: std::collections::HashSet<&str> =
            self.pristine_records().map(|r| r.pristine_path.as_str()).collect();
        for r in &self.records {
            if r.is_pristine() {
                if r.level != 0 || r.distorted_path.is_some() || r.pseudo_mos != 1.0 {
                    return Err(Error::format("manifest", format!("bad pristine record {r:?}")));
                }
            } else {
                if r.distorted_path.is_none() || !(1..=5).contains(&r.level) {
                    return Err(Error::format("manifest", format!("bad distorted record {r:?}")));
                }
                if !pristine.contains(r.pristine_path.as_str()) {
                    return Err(Error::format(
                        "manifest",
                        format!("{} has no pristine record", r.pristine_path),
                    ));
                }
                if (r.pseudo_mos - pseudo_mos(r.level)).abs() > 1e-12 {
                    return Err(Error::format("manifest", format!("pseudo-MOS mismatch in {r:?}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&Header {
            corpus_seed: self.corpus_seed,
            generator_version: self.generator_version.clone(),
        })
        .expect("header serializes");
        out.push('\n');
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_jsonl()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut header: Option<Header> = None;
        let mut records = Vec::new();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            if i == 0 && line.contains("\"generator_version\"") {
                header = Some(serde_json::from_str(&line).map_err(|e| Error::format("manifest header", e))?);
                continue;
            }
            records.push(
                serde_json::from_str(&line)
                    .map_err(|e| Error::format("manifest record", format!("line {}: {e}", i + 1)))?,
            );
        }
        let header = header.ok_or_else(|| Error::format("manifest", "missing header line"))?;
        let manifest = CorpusManifest {
            records,
            corpus_seed: header.corpus_seed,
            generator_version: header.generator_version,
            root: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Converts to MOS-labelled samples, pristine images included, with the
    /// pristine path as the reference identity.
    pub fn to_mos_records(&self) -> Vec<MosRecord> {
        self.records
            .iter()
            .map(|r| MosRecord {
                image_path: self.resolve(r.image_path()),
                mos: r.pseudo_mos,
                reference: Some(r.pristine_path.clone()),
                type_id: Some(r.type_id),
                level: Some(r.level),
            })
            .collect()
    }
}

/// Seed of the distorted record for pristine `index`, type `t` and `level`.
pub fn record_seed(corpus_seed: u64, index: usize, t: DistortionType, level: u8) -> u64 {
    let type_index = DistortionType::ALL.iter().position(|&x| x == t).unwrap_or(0) as u64;
    derive_seed(derive_seed(corpus_seed, index as u64), type_index * 16 + level as u64)
}

/// Rounds to the 8-bit grid so that in-memory images equal their PNG files.
pub fn quantize_8bit(img: &Image) -> Image {
    img.map(|v| (v * 255.0).round() / 255.0)
}

/// Writes pristine images alone under `out_dir` with their manifest.
pub fn pristine_corpus(pristine: &[Image], out_dir: impl AsRef<Path>, seed: u64) -> Result<CorpusManifest> {
    if pristine.is_empty() {
        return Err(Error::arg("corpus needs pristine images"));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut records = Vec::with_capacity(pristine.len());
    for (i, img) in pristine.iter().enumerate() {
        let pristine_path = format!("pristine/{i:04}.png");
        save_image(&quantize_8bit(img), out_dir.join(&pristine_path))?;
        records.push(CorpusRecord {
            pristine_path,
            distorted_path: None,
            type_id: TypeTag::Pristine,
            level: 0,
            seed: derive_seed(seed, i as u64),
            pseudo_mos: 1.0,
        });
    }
    let manifest = CorpusManifest {
        records,
        corpus_seed: seed,
        generator_version: GENERATOR_VERSION.to_string(),
        root: out_dir.to_path_buf(),
    };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Writes every pristine image and its `|types| × |levels|` distortions
/// under `out_dir` and returns (and writes) the manifest.
pub fn build_corpus(
    pristine: &[Image],
    types: &[DistortionType],
    levels: &[u8],
    out_dir: impl AsRef<Path>,
    seed: u64,
) -> Result<CorpusManifest> {
    if pristine.is_empty() || types.is_empty() || levels.is_empty() {
        return Err(Error::arg("corpus needs pristine images, types and levels"));
    }
    for &l in levels {
        if !(1..=5).contains(&l) {
            return Err(Error::arg(format!("level {l} outside 1..=5")));
        }
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut records = Vec::with_capacity(pristine.len() * (1 + types.len() * levels.len()));
    for (i, img) in pristine.iter().enumerate() {
        let img = quantize_8bit(img);
        let pristine_path = format!("pristine/{i:04}.png");
        save_image(&img, out_dir.join(&pristine_path))?;
        records.push(CorpusRecord {
            pristine_path: pristine_path.clone(),
            distorted_path: None,
            type_id: TypeTag::Pristine,
            level: 0,
            seed: derive_seed(seed, i as u64),
            pseudo_mos: 1.0,
        });
        for &t in types {
            for &level in levels {
                let rseed = record_seed(seed, i, t, level);
                let spec = DistortionSpec::new(t, level, rseed)?;
                let distorted = apply_distortion(&img, &spec)?;
                let rel = format!("dist/{}/{level}/{i:04}_{rseed}.png", t.name());
                save_image(&distorted, out_dir.join(&rel))?;
                records.push(CorpusRecord {
                    pristine_path: pristine_path.clone(),
                    distorted_path: Some(rel),
                    type_id: TypeTag::Distorted(t),
                    level,
                    seed: rseed,
                    pseudo_mos: pseudo_mos(level),
                });
            }
        }
    }
    let manifest = CorpusManifest {
        records,
        corpus_seed: seed,
        generator_version: GENERATOR_VERSION.to_string(),
        root: out_dir.to_path_buf(),
    };
    manifest.write(out_dir.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// One MOS-labelled image. `reference` identifies shared content (the
/// pristine source) for synthetic datasets and is absent for authentic ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MosRecord {
    pub image_path: PathBuf,
    pub mos: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub type_id: Option<TypeTag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<u8>,
}

/// Reads a MOS dataset manifest. Accepts either `{image_path, mos, ..}`
/// lines or a corpus manifest (pseudo-MOS used as labels). Relative image
/// paths are resolved against the manifest's directory.
pub fn read_mos_manifest(path: impl AsRef<Path>) -> Result<Vec<MosRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if text.lines().next().is_some_and(|l| l.contains("\"generator_version\"")) {
        return Ok(CorpusManifest::read(path)?.to_mos_records());
    }
    let root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: MosRecord = serde_json::from_str(line)
            .map_err(|e| Error::format("MOS manifest", format!("line {}: {e}", i + 1)))?;
        if !rec.mos.is_finite() {
            return Err(Error::format("MOS manifest", format!("line {}: non-finite mos", i + 1)));
        }
        if rec.image_path.is_relative() {
            rec.image_path = root.join(&rec.image_path);
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_mos_manifest(records: &[MosRecord], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for r in records {
        writeln!(f, "{}", serde_json::to_string(r).expect("record serializes")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::synth_pristine;

    #[test]
    fn corpus_counts_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let imgs = synth_pristine(10, (32, 32), 1).unwrap();
        let types: Vec<_> = DistortionType::ALL.to_vec();
        let m = build_corpus(&imgs, &types, &[1, 2, 3, 4, 5], dir.path(), 9).unwrap();
        assert_eq!(m.distorted_records().count(), 500);
        assert_eq!(m.pristine_records().count(), 10);
        for r in &m.records {
            assert!(dir.path().join(r.image_path()).exists());
        }
        let r = m.distorted_records().next().unwrap();
        assert!(r.distorted_path.as_ref().unwrap().starts_with("dist/gaussian_blur/1/0000_"));
        assert!((r.pseudo_mos - 0.8).abs() < 1e-12);

        let back = CorpusManifest::read(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn corpus_is_deterministic() {
        let imgs = synth_pristine(2, (32, 32), 4).unwrap();
        let types = [DistortionType::GaussianNoise, DistortionType::Pixelate];
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        build_corpus(&imgs, &types, &[1, 5], a.path(), 3).unwrap();
        build_corpus(&imgs, &types, &[1, 5], b.path(), 3).unwrap();
        let ma = fs::read(a.path().join(MANIFEST_FILE)).unwrap();
        let mb = fs::read(b.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(ma, mb);
    }

    #[test]
    fn pristine_file_matches_in_memory_source() {
        let dir = tempfile::tempdir().unwrap();
        let imgs = synth_pristine(1, (32, 32), 8).unwrap();
        let m = build_corpus(&imgs, &[DistortionType::Quantize], &[3], dir.path(), 1).unwrap();
        let loaded = m.load(&m.records[0].pristine_path).unwrap();
        assert_eq!(loaded, quantize_8bit(&imgs[0]));
    }

    #[test]
    fn full_scale_count() {
        assert_eq!(10_000 * 25 * 5, 1_250_000);
    }

    #[test]
    fn unwritable_out_dir() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("blocker");
        fs::write(&file, b"x").unwrap();
        let imgs = synth_pristine(1, (32, 32), 8).unwrap();
        let err = build_corpus(&imgs, &[DistortionType::Quantize], &[1], file.join("sub"), 1);
        assert!(matches!(err, Err(Error::Io { .. })));
    }

    #[test]
    fn validation_catches_orphans() {
        let m = CorpusManifest {
            records: vec![CorpusRecord {
                pristine_path: "pristine/0000.png".into(),
                distorted_path: Some("dist/quantize/1/0000_1.png".into()),
                type_id: TypeTag::Distorted(DistortionType::Quantize),
                level: 1,
                seed: 1,
                pseudo_mos: 0.8,
            }],
            corpus_seed: 0,
            generator_version: GENERATOR_VERSION.into(),
            root: PathBuf::new(),
        };
        assert!(m.validate().is_err());
    }

    #[test]
    fn mos_manifest_formats() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("mos.jsonl");
        fs::write(&p, "{\"image_path\":\"a.png\",\"mos\":3.5}\n{\"image_path\":\"/abs/b.png\",\"mos\":1.0,\"reference\":\"r1\"}\n").unwrap();
        let recs = read_mos_manifest(&p).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].image_path, dir.path().join("a.png"));
        assert_eq!(recs[1].image_path, PathBuf::from("/abs/b.png"));
        assert_eq!(recs[1].reference.as_deref(), Some("r1"));

        let imgs = synth_pristine(1, (32, 32), 8).unwrap();
        let m = build_corpus(&imgs, &[DistortionType::Quantize], &[2], dir.path().join("c"), 1).unwrap();
        let recs = read_mos_manifest(dir.path().join("c").join(MANIFEST_FILE)).unwrap();
        assert_eq!(recs.len(), m.records.len());
        assert!(recs.iter().all(|r| r.image_path.exists()));
    }
}
