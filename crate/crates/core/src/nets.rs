//! The collaborative autoencoder pair.
//!
//! Content autoencoder (CAE):
//!
//! ```text
//! E_c: conv7(3→c1) BN ReLU · conv4/2(c1→c2) BN ReLU · conv4/2(c2→C) BN ReLU · 4×ResBlock(C)
//! D_c: 4×ResBlock(C) · deconv4/2(C→c2) BN ReLU · deconv4/2(c2→c1) BN ReLU · conv7(c1→3) sigmoid
//! ```
//!
//! Distortion autoencoder (DAE):
//!
//! ```text
//! E_d: four stride-2 conv3 stages (3→c1→c2→C→C), each tapped by
//!      conv1(·→32s) · SPP{1,2,4} · FC(→fd/4); f_d = concat of the four codes
//! D_d: s = FC(f_d); F ← SMResBlock_k(F, s_k) for k = 1..4 starting from F_c;
//!      then the same three-layer upsampling tail as D_c
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::nn::{
    join, BatchNorm2d, Conv2d, ConvTranspose2d, GlobalAvgPool, Layer, LeakyRelu, Linear, Mode, Param,
    Parameterized, Real, Relu, Sequential, Sigmoid, SpatialPyramidPool, Tensor,
};
use crate::profile::NetProfile;
use crate::rng::Rng;

pub const SPP_LEVELS: [usize; 3] = [1, 2, 4];
pub const RESIDUAL_BLOCKS: usize = 4;

/// Stacks equally sized images into a `[n, 3, h, w]` tensor.
pub fn images_to_tensor<R: Real>(images: &[&Image]) -> Result<Tensor<R>> {
    let first = images.first().ok_or_else(|| Error::arg("empty image batch"))?;
    let (h, w) = first.dims();
    let mut t = Tensor::zeros([images.len(), 3, h, w]);
    for (n, img) in images.iter().enumerate() {
        if img.dims() != (h, w) {
            return Err(Error::arg("images in a batch must share one size"));
        }
        let item = t.item_mut(n);
        for (i, px) in img.data().chunks(3).enumerate() {
            for c in 0..3 {
                item[c * h * w + i] = R::lit(px[c] as f64);
            }
        }
    }
    Ok(t)
}

pub fn tensor_to_images<R: Real>(t: &Tensor<R>) -> Vec<Image> {
    let [n, c, h, w] = t.shape;
    assert_eq!(c, 3, "expected an RGB tensor");
    (0..n)
        .map(|i| {
            let item = t.item(i);
            Image::from_fn(w, h, |x, y| {
                let p = y * w + x;
                [0, 1, 2].map(|ch| item[ch * h * w + p].to_f32().unwrap_or(0.0))
            })
        })
        .collect()
}

/// `conv3 BN ReLU conv3 BN` plus identity skip.
pub struct ResBlock<R: Real> {
    body: Sequential<R>,
}

impl<R: Real> ResBlock<R> {
    pub fn new(channels: usize, rng: &mut Rng) -> Self {
        let body = Sequential::new()
            .with("conv1", Conv2d::new(channels, channels, 3, 1, 1, false, rng))
            .with("bn1", BatchNorm2d::new(channels))
            .with("relu", Relu::new())
            .with("conv2", Conv2d::new(channels, channels, 3, 1, 1, false, rng))
            .with("bn2", BatchNorm2d::new(channels));
        Self { body }
    }
}

impl<R: Real> Parameterized<R> for ResBlock<R> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<R>)) {
        self.body.visit(prefix, f);
    }
}

impl<R: Real> Layer<R> for ResBlock<R> {
    fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Tensor<R> {
        let mut y = self.body.forward(x, mode);
        y.add_assign(x);
        y
    }

    fn backward(&mut self, grad: &Tensor<R>) -> Tensor<R> {
        let mut g = self.body.backward(grad);
        g.add_assign(grad);
        g
    }
}

/// Two stride-2 deconvolutions and a k7 output convolution with sigmoid.
fn upsampling_tail<R: Real>(p: &NetProfile, rng: &mut Rng) -> Sequential<R> {
    let (c1, c2, c) = (p.stem_channels(), p.mid_channels(), p.content_channels);
    Sequential::new()
        .with("deconv1", ConvTranspose2d::new(c, c2, 4, 2, 1, false, rng))
        .with("bn1", BatchNorm2d::new(c2))
        .with("relu1", Relu::new())
        .with("deconv2", ConvTranspose2d::new(c2, c1, 4, 2, 1, false, rng))
        .with("bn2", BatchNorm2d::new(c1))
        .with("relu2", Relu::new())
        .with("conv_out", Conv2d::new(c1, 3, 7, 1, 3, true, rng))
        .with("squash", Sigmoid::new())
}

fn check_divisible(h: usize, w: usize) -> Result<()> {
    if h % 4 != 0 || w % 4 != 0 || h == 0 || w == 0 {
        return Err(Error::arg(format!("spatial size {h}x{w} must be a positive multiple of 4")));
    }
    Ok(())
}

/// `F_c` for one image: `content_channels × H/4 × W/4`.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentFeature {
    pub map: Tensor<f32>,
}

impl ContentFeature {
    pub fn channels(&self) -> usize {
        self.map.channels()
    }

    pub fn spatial(&self) -> (usize, usize) {
        (self.map.height(), self.map.width())
    }
}

/// `f_d` for one image, with its four tap codes.
#[derive(Clone, Debug, PartialEq)]
pub struct DistortionFeature {
    pub f_d: Vec<f32>,
}

impl DistortionFeature {
    /// `f_d^1..f_d^4` (for the single-tap ablation, the one code).
    pub fn parts(&self, taps: usize) -> Vec<&[f32]> {
        self.f_d.chunks(self.f_d.len() / taps).collect()
    }
}

/// The content autoencoder `E_c`/`D_c`.
pub struct ContentAutoencoder<R: Real> {
    pub profile: NetProfile,
    pub encoder: Sequential<R>,
    pub decoder: Sequential<R>,
}

impl<R: Real> ContentAutoencoder<R> {
    pub fn new(profile: NetProfile, seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let (c1, c2, c) = (profile.stem_channels(), profile.mid_channels(), profile.content_channels);
        let mut encoder = Sequential::new()
            .with("conv1", Conv2d::new(3, c1, 7, 1, 3, false, &mut rng).without_input_grad())
            .with("bn1", BatchNorm2d::new(c1))
            .with("relu1", Relu::new())
            .with("conv2", Conv2d::new(c1, c2, 4, 2, 1, false, &mut rng))
            .with("bn2", BatchNorm2d::new(c2))
            .with("relu2", Relu::new())
            .with("conv3", Conv2d::new(c2, c, 4, 2, 1, false, &mut rng))
            .with("bn3", BatchNorm2d::new(c))
            .with("relu3", Relu::new());
        for i in 0..RESIDUAL_BLOCKS {
            encoder.push(format!("res{}", i + 1), ResBlock::new(c, &mut rng));
        }
        let mut decoder = Sequential::new();
        for i in 0..RESIDUAL_BLOCKS {
            decoder.push(format!("res{}", i + 1), ResBlock::new(c, &mut rng));
        }
        decoder.push("tail", upsampling_tail(&profile, &mut rng));
        Self {
            profile,
            encoder,
            decoder,
        }
    }

    /// `[n,3,H,W] → [n,C,H/4,W/4]`.
    pub fn encode(&mut self, x: &Tensor<R>, mode: Mode) -> Result<Tensor<R>> {
        check_divisible(x.height(), x.width())?;
        if x.channels() != 3 {
            return Err(Error::arg("content encoder expects RGB input"));
        }
        Ok(self.encoder.forward(x, mode))
    }

    pub fn decode(&mut self, f_c: &Tensor<R>, mode: Mode) -> Result<Tensor<R>> {
        if f_c.channels() != self.profile.content_channels {
            return Err(Error::arg(format!(
                "content feature has {} channels, profile expects {}",
                f_c.channels(),
                self.profile.content_channels
            )));
        }
        Ok(self.decoder.forward(f_c, mode))
    }

    /// Backpropagates an output gradient through decoder and encoder.
    pub fn backward(&mut self, grad: &Tensor<R>) {
        let g = self.decoder.backward(grad);
        self.encoder.backward(&g);
    }
}

impl<R: Real> Parameterized<R> for ContentAutoencoder<R> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<R>)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
    }
}

impl ContentAutoencoder<f32> {
    /// `E_c(img)` in eval mode.
    pub fn cae_encode(&mut self, img: &Image) -> Result<ContentFeature> {
        let (h, w) = img.dims();
        check_divisible(h, w)?;
        let x = images_to_tensor(&[img])?;
        Ok(ContentFeature {
            map: self.encode(&x, Mode::Eval)?,
        })
    }

    /// `D_c(F_c)` in eval mode.
    pub fn cae_decode(&mut self, f_c: &ContentFeature) -> Result<Image> {
        let y = self.decode(&f_c.map, Mode::Eval)?;
        Ok(tensor_to_images(&y).remove(0))
    }
}

/// Which distortion-autoencoder arrangement to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DaeVariant {
    /// Decoder conditioned on the frozen CAE's `F_c`.
    #[default]
    Collaborative,
    /// Trained alone: the decoder's content input is a learned constant map.
    Standalone,
    /// Taps are globally average-pooled instead of SPP-pooled.
    NoSpp,
    /// Only the last stage is tapped; its code is `fd_dim` long.
    NoMultilevel,
}

impl DaeVariant {
    pub fn uses_content(self) -> bool {
        self != DaeVariant::Standalone
    }
}

/// The distortion encoder `E_d`.
pub struct DistortionEncoder<R: Real> {
    pub profile: NetProfile,
    pub variant: DaeVariant,
    stages: Vec<Sequential<R>>,
    /// `(stage index, head)`.
    heads: Vec<(usize, Sequential<R>)>,
}

impl<R: Real> DistortionEncoder<R> {
    pub fn new(profile: NetProfile, variant: DaeVariant, rng: &mut Rng) -> Self {
        let c = profile.content_channels;
        let widths = [3, profile.stem_channels(), profile.mid_channels(), c, c];
        let stages: Vec<Sequential<R>> = (0..4)
            .map(|i| {
                let mut conv = Conv2d::new(widths[i], widths[i + 1], 3, 2, 1, true, rng);
                if i == 0 {
                    conv = conv.without_input_grad();
                }
                Sequential::new().with("conv", conv).with("act", LeakyRelu::new(0.2))
            })
            .collect();
        let tapped: Vec<usize> = match variant {
            DaeVariant::NoMultilevel => vec![3],
            _ => vec![0, 1, 2, 3],
        };
        let code = profile.fd_dim / tapped.len();
        let heads = tapped
            .into_iter()
            .map(|i| {
                let cin = widths[i + 1];
                let head = match variant {
                    DaeVariant::NoSpp => Sequential::new()
                        .with("gap", GlobalAvgPool::new())
                        .with("fc", Linear::with_std(cin, code, (1.0 / cin as f64).sqrt(), rng)),
                    _ => {
                        let proj = profile.spp_channels();
                        let bins = proj * crate::nn::spp_len(&SPP_LEVELS);
                        Sequential::new()
                            .with("proj", Conv2d::new(cin, proj, 1, 1, 0, true, rng))
                            .with("spp", SpatialPyramidPool::new(&SPP_LEVELS))
                            .with("fc", Linear::with_std(bins, code, (1.0 / bins as f64).sqrt(), rng))
                    }
                };
                (i, head)
            })
            .collect();
        Self {
            profile,
            variant,
            stages,
            heads,
        }
    }

    pub fn taps(&self) -> usize {
        self.heads.len()
    }

    /// `[n,3,H,W] → [n, fd_dim, 1, 1]`.
    pub fn forward(&mut self, x: &Tensor<R>, mode: Mode) -> Tensor<R> {
        let mut outputs = Vec::with_capacity(4);
        let mut h = self.stages[0].forward(x, mode);
        outputs.push(h.clone());
        for stage in &mut self.stages[1..] {
            h = stage.forward(&h, mode);
            outputs.push(h.clone());
        }
        let codes: Vec<Tensor<R>> = self
            .heads
            .iter_mut()
            .map(|(i, head)| head.forward(&outputs[*i], mode))
            .collect();
        let refs: Vec<&Tensor<R>> = codes.iter().collect();
        Tensor::concat_channels(&refs)
    }

    pub fn backward(&mut self, grad: &Tensor<R>) {
        let sizes: Vec<usize> = vec![self.profile.fd_dim / self.heads.len(); self.heads.len()];
        let parts = grad.split_channels(&sizes);
        let mut tap_grads: Vec<Option<Tensor<R>>> = vec![None, None, None, None];
        for ((i, head), g) in self.heads.iter_mut().zip(&parts) {
            tap_grads[*i] = Some(head.backward(g));
        }
        let mut carry: Option<Tensor<R>> = None;
        for i in (0..4).rev() {
            let g = match (carry.take(), tap_grads[i].take()) {
                (Some(mut a), Some(b)) => {
                    a.add_assign(&b);
                    a
                }
                (Some(a), None) | (None, Some(a)) => a,
                (None, None) => continue,
            };
            carry = Some(self.stages[i].backward(&g));
        }
    }
}

impl<R: Real> Parameterized<R> for DistortionEncoder<R> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<R>)) {
        for (i, stage) in self.stages.iter_mut().enumerate() {
            stage.visit(&join(prefix, &format!("stage{}", i + 1)), f);
        }
        for (i, head) in &mut self.heads {
            head.visit(&join(prefix, &format!("tap{}", *i + 1)), f);
        }
    }
}

/// Sub-modulation residual block:
/// `F + conv3(ReLU(conv3(concat(F, broadcast(s_k)))))`, with the last
/// convolution zero-initialized so a fresh block is the identity.
pub struct SmResBlock<R: Real> {
    channels: usize,
    conv1: Conv2d<R>,
    relu: Relu<R>,
    conv2: Conv2d<R>,
}

impl<R: Real> SmResBlock<R> {
    pub fn new(channels: usize, rng: &mut Rng) -> Self {
        Self {
            channels,
            conv1: Conv2d::new(2 * channels, channels, 3, 1, 1, true, rng),
            relu: Relu::new(),
            conv2: Conv2d::new(channels, channels, 3, 1, 1, true, rng).zero_init(),
        }
    }

    pub fn forward(&mut self, f: &Tensor<R>, s: &Tensor<R>, mode: Mode) -> Tensor<R> {
        let [n, c, h, w] = f.shape;
        debug_assert_eq!(s.shape, [n, c, 1, 1]);
        let mut broadcast = Tensor::zeros([n, c, h, w]);
        for (dst, &v) in broadcast.data.chunks_mut(h * w).zip(&s.data) {
            dst.iter_mut().for_each(|d| *d = v);
        }
        let cat = Tensor::concat_channels(&[f, &broadcast]);
        let a = self.relu.forward(&self.conv1.forward(&cat, mode), mode);
        let mut out = self.conv2.forward(&a, mode);
        out.add_assign(f);
        out
    }

    /// Returns `(∂/∂F, ∂/∂s_k)`.
    pub fn backward(&mut self, grad: &Tensor<R>) -> (Tensor<R>, Tensor<R>) {
        let g = self.conv2.backward(grad);
        let g = self.relu.backward(&g);
        let gcat = self.conv1.backward(&g);
        let mut halves = gcat.split_channels(&[self.channels, self.channels]);
        let gb = halves.pop().expect("two halves");
        let mut gf = halves.pop().expect("two halves");
        gf.add_assign(grad);
        let [n, c, h, w] = gb.shape;
        let gs = gb.data.chunks(h * w).map(|plane| plane.iter().copied().sum::<R>()).collect();
        (gf, Tensor::from_vec([n, c, 1, 1], gs))
    }

    /// Checked single-call form: `s_k` must have one entry per channel.
    pub fn modulate(&mut self, f: &Tensor<R>, s: &[R]) -> Result<Tensor<R>> {
        if s.len() != f.channels() || f.channels() != self.channels || f.batch() != 1 {
            return Err(Error::arg(format!(
                "modulation vector of length {} for a {}-channel map (block width {})",
                s.len(),
                f.channels(),
                self.channels
            )));
        }
        let st = Tensor::from_rows(1, s.len(), s.to_vec());
        Ok(self.forward(f, &st, Mode::Eval))
    }
}

impl<R: Real> Parameterized<R> for SmResBlock<R> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<R>)) {
        self.conv1.visit(&join(prefix, "conv1"), f);
        self.conv2.visit(&join(prefix, "conv2"), f);
    }
}

/// The distortion decoder `D_d`.
pub struct DistortionDecoder<R: Real> {
    pub profile: NetProfile,
    pub modulation: Linear<R>,
    pub blocks: Vec<SmResBlock<R>>,
    pub tail: Sequential<R>,
    /// Learned content stand-in for the standalone variant, `C × h × w`.
    pub content: Option<Param<R>>,
    last_batch: usize,
}

impl<R: Real> DistortionDecoder<R> {
    pub fn new(profile: NetProfile, content_size: Option<(usize, usize)>, rng: &mut Rng) -> Self {
        let c = profile.content_channels;
        let modulation = Linear::with_std(profile.fd_dim, profile.s_dim, (1.0 / profile.fd_dim as f64).sqrt(), rng);
        let blocks = (0..4).map(|_| SmResBlock::new(c, rng)).collect();
        let tail = upsampling_tail(&profile, rng);
        let content = content_size.map(|(h, w)| Param::normal(&[c, h, w], 1.0, rng));
        Self {
            profile,
            modulation,
            blocks,
            tail,
            content,
            last_batch: 0,
        }
    }

    /// The learned content map broadcast over a batch.
    pub fn content_input(&self, n: usize) -> Option<Tensor<R>> {
        self.content.as_ref().map(|p| {
            let mut data = Vec::with_capacity(n * p.len());
            for _ in 0..n {
                data.extend_from_slice(&p.value);
            }
            Tensor::from_vec([n, p.shape[0], p.shape[1], p.shape[2]], data)
        })
    }

    /// `s = FC(f_d)` split into its four slices.
    pub fn modulation_signal(&mut self, f_d: &Tensor<R>, mode: Mode) -> Vec<Tensor<R>> {
        let s = self.modulation.forward(f_d, mode);
        let c = self.profile.content_channels;
        s.split_channels(&[c, c, c, c])
    }

    pub fn forward(&mut self, f_c: &Tensor<R>, f_d: &Tensor<R>, mode: Mode) -> Tensor<R> {
        let slices = self.modulation_signal(f_d, mode);
        let mut f = f_c.clone();
        for (block, s) in self.blocks.iter_mut().zip(&slices) {
            f = block.forward(&f, s, mode);
        }
        self.last_batch = f_c.batch();
        self.tail.forward(&f, mode)
    }

    /// Returns `(∂/∂F_c, ∂/∂f_d)`.
    pub fn backward(&mut self, grad: &Tensor<R>) -> (Tensor<R>, Tensor<R>) {
        let mut g = self.tail.backward(grad);
        let mut gs = Vec::with_capacity(4);
        for block in self.blocks.iter_mut().rev() {
            let (gf, g_s) = block.backward(&g);
            g = gf;
            gs.push(g_s);
        }
        gs.reverse();
        let refs: Vec<&Tensor<R>> = gs.iter().collect();
        let g_fd = self.modulation.backward(&Tensor::concat_channels(&refs));
        if let Some(p) = &mut self.content {
            for i in 0..self.last_batch {
                for (acc, &v) in p.grad.iter_mut().zip(g.item(i)) {
                    *acc += v;
                }
            }
        }
        (g, g_fd)
    }
}

impl<R: Real> Parameterized<R> for DistortionDecoder<R> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<R>)) {
        self.modulation.visit(&join(prefix, "modulation"), f);
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit(&join(prefix, &format!("smres{}", i + 1)), f);
        }
        self.tail.visit(&join(prefix, "tail"), f);
        if let Some(p) = &mut self.content {
            f(&join(prefix, "content"), p);
        }
    }
}

/// The distortion autoencoder `E_d`/`D_d`.
pub struct DistortionAutoencoder<R: Real> {
    pub profile: NetProfile,
    pub variant: DaeVariant,
    pub encoder: DistortionEncoder<R>,
    pub decoder: DistortionDecoder<R>,
}

impl<R: Real> DistortionAutoencoder<R> {
    /// `patch` is the training patch size; the standalone variant sizes its
    /// learned content map from it.
    pub fn new(profile: NetProfile, variant: DaeVariant, patch: (usize, usize), seed: u64) -> Self {
        let mut rng = Rng::new(seed);
        let encoder = DistortionEncoder::new(profile, variant, &mut rng);
        let content_size = (!variant.uses_content()).then_some((patch.0 / 4, patch.1 / 4));
        let decoder = DistortionDecoder::new(profile, content_size, &mut rng);
        Self {
            profile,
            variant,
            encoder,
            decoder,
        }
    }

    /// `D_d(F_c, E_d(x))`. `f_c` is ignored (and may be `None`) for the
    /// standalone variant.
    pub fn forward(&mut self, f_c: Option<&Tensor<R>>, x: &Tensor<R>, mode: Mode) -> Result<Tensor<R>> {
        let f_d = self.encoder.forward(x, mode);
        let content = self.content_for(f_c, x)?;
        Ok(self.decoder.forward(&content, &f_d, mode))
    }

    fn content_for(&self, f_c: Option<&Tensor<R>>, x: &Tensor<R>) -> Result<Tensor<R>> {
        let expected = [x.batch(), self.profile.content_channels, x.height() / 4, x.width() / 4];
        let content = match self.decoder.content_input(x.batch()) {
            Some(c) => c,
            None => f_c.ok_or_else(|| Error::arg("collaborative DAE needs the content feature"))?.clone(),
        };
        if content.shape != expected {
            return Err(Error::arg(format!(
                "content input {:?} does not match expected {:?}",
                content.shape, expected
            )));
        }
        Ok(content)
    }

    pub fn backward(&mut self, grad: &Tensor<R>) {
        let (_, g_fd) = self.decoder.backward(grad);
        self.encoder.backward(&g_fd);
    }
}

impl<R: Real> Parameterized<R> for DistortionAutoencoder<R> {
    fn visit(&mut self, prefix: &str, f: &mut dyn FnMut(&str, &mut Param<R>)) {
        self.encoder.visit(&join(prefix, "encoder"), f);
        self.decoder.visit(&join(prefix, "decoder"), f);
    }
}

impl DistortionAutoencoder<f32> {
    /// `E_d(img)` in eval mode; any size of at least 32×32.
    pub fn dae_encode(&mut self, img: &Image) -> Result<DistortionFeature> {
        img.check_pipeline_size()?;
        let x = images_to_tensor(&[img])?;
        Ok(DistortionFeature {
            f_d: self.encoder.forward(&x, Mode::Eval).data,
        })
    }

    /// `D_d(F_c, f_d)` in eval mode.
    pub fn dae_decode(&mut self, f_c: &ContentFeature, f_d: &DistortionFeature) -> Result<Image> {
        if f_c.channels() != self.profile.content_channels {
            return Err(Error::arg(format!(
                "content feature has {} channels, DAE profile expects {}",
                f_c.channels(),
                self.profile.content_channels
            )));
        }
        if f_d.f_d.len() != self.profile.fd_dim {
            return Err(Error::arg(format!(
                "distortion feature has length {}, DAE profile expects {}",
                f_d.f_d.len(),
                self.profile.fd_dim
            )));
        }
        let fd = Tensor::from_rows(1, f_d.f_d.len(), f_d.f_d.clone());
        let content = match self.decoder.content_input(1) {
            Some(c) => {
                if c.shape != f_c.map.shape {
                    return Err(Error::arg("standalone DAE decodes only at its training size"));
                }
                c
            }
            None => f_c.map.clone(),
        };
        let y = self.decoder.forward(&content, &fd, Mode::Eval);
        Ok(tensor_to_images(&y).remove(0))
    }
}
