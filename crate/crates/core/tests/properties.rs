//! Cross-module invariants under generated inputs.

use std::path::PathBuf;

use coae::analysis::{cosine, embed_2d};
use coae::corpus::MosRecord;
use coae::distortion::{apply_distortion, DistortionSpec, DistortionType};
use coae::eval::split_by_reference;
use coae::image::{crop_patch, Image};
use coae::loss::{loss_percep, loss_recon, overall_loss, PyramidDistance};
use coae::nets::{images_to_tensor, ContentAutoencoder, ContentFeature, DaeVariant, DistortionAutoencoder, DistortionFeature};
use coae::nn::{spp_len, spp_pool, Tensor};
use coae::profile::NetProfile;
use coae::rng::Rng;
use coae::synth::synth_pristine;
use proptest::prelude::*;

fn image(seed: u64, h: usize, w: usize) -> Image {
    synth_pristine(1, (h, w), seed).unwrap().remove(0)
}

fn any_type() -> impl Strategy<Value = DistortionType> {
    prop::sample::select(DistortionType::ALL.to_vec())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn distortion_keeps_dims_range_and_source(
        t in any_type(), level in 1u8..=5, seed in any::<u64>(), h in 32usize..48, w in 32usize..48,
    ) {
        let img = image(seed % 1000, h, w);
        let before = img.clone();
        let spec = DistortionSpec::new(t, level, seed).unwrap();
        let out = apply_distortion(&img, &spec).unwrap();
        prop_assert_eq!(out.dims(), img.dims());
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!(&img, &before);
        prop_assert_eq!(out, apply_distortion(&img, &spec).unwrap());
    }

    #[test]
    fn crops_are_windows_of_the_source(seed in any::<u64>(), ph in 1usize..32, pw in 1usize..32) {
        let img = image(3, 32, 40);
        let mut rng = Rng::new(seed);
        let c = crop_patch(&img, (ph, pw), &mut rng).unwrap();
        prop_assert_eq!(c.dims(), (ph, pw));
        let found = (0..=32 - ph).any(|y0| (0..=40 - pw).any(|x0| img.crop_at(x0, y0, ph, pw).unwrap() == c));
        prop_assert!(found);
    }

    #[test]
    fn spp_length_is_size_independent(c in 1usize..5, h in 4usize..20, w in 4usize..20) {
        let t = Tensor::<f64>::from_vec([1, c, h, w], (0..c * h * w).map(|i| i as f64).collect());
        let v = spp_pool(&t, &[1, 2, 4]).unwrap();
        prop_assert_eq!(v.data.len(), c * spp_len(&[1, 2, 4]));
    }

    #[test]
    fn overall_loss_is_additive(seed in any::<u64>(), weight in 0.0f64..3.0) {
        let a = image(seed % 500, 32, 32);
        let b = apply_distortion(&a, &DistortionSpec::new(DistortionType::GaussianNoise, 2, seed).unwrap()).unwrap();
        let provider = PyramidDistance::default();
        let (l, _) = overall_loss(
            &images_to_tensor::<f64>(&[&a]).unwrap(),
            &images_to_tensor::<f64>(&[&b]).unwrap(),
            &provider,
            weight,
        )
        .unwrap();
        prop_assert!((l.recon - loss_recon(&a, &b).unwrap()).abs() < 1e-9);
        prop_assert!((l.percep - loss_percep(&a, &b, &provider).unwrap()).abs() < 1e-9);
        prop_assert!((l.overall - (l.recon + weight * l.percep)).abs() < 1e-12);
    }

    #[test]
    fn reference_split_partitions(n_refs in 2usize..12, per in 1usize..5, ratio in 0.1f64..0.9, seed in any::<u64>()) {
        let records: Vec<MosRecord> = (0..n_refs * per)
            .map(|i| MosRecord {
                image_path: PathBuf::from(format!("{i}.png")),
                mos: i as f64,
                reference: Some(format!("r{}", i % n_refs)),
                type_id: None,
                level: None,
            })
            .collect();
        let s = split_by_reference(&records, ratio, seed).unwrap();
        let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..records.len()).collect::<Vec<_>>());
        for &i in &s.train {
            for &j in &s.test {
                prop_assert_ne!(&records[i].reference, &records[j].reference);
            }
        }
    }

    #[test]
    fn cosine_is_one_exactly_for_positive_multiples(
        v in prop::collection::vec(-10.0f32..10.0, 2..16), k in 0.1f32..10.0, other in prop::collection::vec(-10.0f32..10.0, 16),
    ) {
        if let Some(c) = cosine(&v, &v.iter().map(|x| k * x).collect::<Vec<_>>()) {
            prop_assert!((c - 1.0).abs() < 1e-6);
            let neg: Vec<f32> = v.iter().map(|x| -k * x).collect();
            prop_assert!((cosine(&v, &neg).unwrap() + 1.0).abs() < 1e-6);
        }
        let w = &other[..v.len()];
        if let Some(c) = cosine(&v, w) {
            prop_assert!((-1.0..=1.0).contains(&c));
            // Below 1 unless w is (numerically) a positive multiple of v.
            let t = w.iter().zip(&v).map(|(a, b)| a * b).sum::<f32>() / v.iter().map(|b| b * b).sum::<f32>();
            let resid: f32 = w.iter().zip(&v).map(|(a, b)| (a - t * b).powi(2)).sum();
            if resid > 1e-3 {
                prop_assert!(c < 1.0 - 1e-9);
            }
        }
    }

    #[test]
    fn embedding_ignores_record_order(seed in any::<u64>(), n in 4usize..20) {
        let mut rng = Rng::new(seed);
        let pts: Vec<Vec<f32>> = (0..n).map(|_| (0..6).map(|_| rng.normal() as f32).collect()).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let shuffled: Vec<Vec<f32>> = perm.iter().map(|&i| pts[i].clone()).collect();
        let (a, b) = (embed_2d(&pts).unwrap(), embed_2d(&shuffled).unwrap());
        for (k, &i) in perm.iter().enumerate() {
            prop_assert!((a.coords[i].0 - b.coords[k].0).abs() < 1e-4);
            prop_assert!((a.coords[i].1 - b.coords[k].1).abs() < 1e-4);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn content_map_is_a_quarter_of_the_input(h4 in 8usize..20, w4 in 8usize..20) {
        let mut cae = ContentAutoencoder::<f32>::new(NetProfile::tiny(), 1);
        let f = cae.cae_encode(&image(1, 4 * h4, 4 * w4)).unwrap();
        prop_assert_eq!(f.spatial(), (h4, w4));
        prop_assert_eq!(f.channels(), NetProfile::tiny().content_channels);
    }

    #[test]
    fn eval_forward_passes_are_deterministic(seed in 0u64..100) {
        let img = image(seed, 48, 64);
        let mut cae = ContentAutoencoder::<f32>::new(NetProfile::tiny(), seed);
        let mut dae = DistortionAutoencoder::<f32>::new(NetProfile::tiny(), DaeVariant::Collaborative, (64, 64), seed);
        prop_assert_eq!(cae.cae_encode(&img).unwrap(), cae.cae_encode(&img).unwrap());
        prop_assert_eq!(dae.dae_encode(&img).unwrap(), dae.dae_encode(&img).unwrap());
    }
}

#[test]
fn fd_length_is_fixed_across_input_sizes() {
    let mut dae = DistortionAutoencoder::<f32>::new(NetProfile::canonical(), DaeVariant::Collaborative, (256, 256), 1);
    for (h, w) in [(96, 96), (224, 224), (200, 320)] {
        assert_eq!(dae.dae_encode(&image(2, h, w)).unwrap().f_d.len(), 256);
    }
}

/// Output must react to f_d once the modulation branch is non-trivial.
#[test]
fn decoder_output_depends_on_fd() {
    let mut cae = ContentAutoencoder::<f32>::new(NetProfile::tiny(), 1);
    let mut dae = DistortionAutoencoder::<f32>::new(NetProfile::tiny(), DaeVariant::Collaborative, (32, 32), 2);
    let mut rng = Rng::new(3);
    coae::nn::Parameterized::visit(&mut dae, "", &mut |name, p| {
        if name.contains("smres") && name.contains("conv2") {
            p.value.iter_mut().for_each(|v| *v = 0.05 * rng.normal() as f32);
        }
    });
    let img = image(4, 32, 32);
    let f_c: ContentFeature = cae.cae_encode(&img).unwrap();
    let f_d = dae.dae_encode(&img).unwrap();
    let base = dae.dae_decode(&f_c, &f_d).unwrap();
    let mut moved = 0;
    for k in 0..f_d.f_d.len() {
        let mut bumped = f_d.f_d.clone();
        bumped[k] += 1e-2;
        let out = dae.dae_decode(&f_c, &DistortionFeature { f_d: bumped }).unwrap();
        if out.l2_distance(&base).unwrap() > 0.0 {
            moved += 1;
        }
    }
    assert!(moved > f_d.f_d.len() / 2, "only {moved} of {} components move the output", f_d.f_d.len());
}
