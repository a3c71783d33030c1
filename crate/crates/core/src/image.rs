//! RGB images in `[0, 1]` and their PNG representation.

use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Smallest side length accepted anywhere in the pipeline.
pub const MIN_SIDE: usize = 32;

/// An RGB image stored row-major, channels interleaved, values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl Image {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 3])
    }

    pub fn filled(width: usize, height: usize, rgb: [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Wraps interleaved RGB data, clipping every value into `[0, 1]`.
    pub fn from_rgb(width: usize, height: usize, mut data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg("image dimensions must be positive"));
        }
        if data.len() != width * height * 3 {
            return Err(Error::arg(format!(
                "expected {} values for a {width}x{height} RGB image, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("image contains non-finite values"));
        }
        clip_slice(&mut data);
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        clip_slice(&mut data);
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `(height, width)`.
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Applies `f` to every value and clips the result into `[0, 1]`.
    pub fn map(&self, f: impl Fn(f32) -> f32) -> Image {
        let mut data: Vec<f32> = self.data.iter().map(|&v| f(v)).collect();
        clip_slice(&mut data);
        Image {
            width: self.width,
            height: self.height,
            data,
        }
    }

    pub fn mean(&self) -> f32 {
        (self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64) as f32
    }

    pub fn std_dev(&self) -> f32 {
        let m = self.mean() as f64;
        let var = self.data.iter().map(|&v| (v as f64 - m).powi(2)).sum::<f64>()
            / self.data.len() as f64;
        var.sqrt() as f32
    }

    /// Euclidean distance over all pixel values.
    pub fn l2_distance(&self, other: &Image) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::arg("images differ in size"));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).powi(2))
            .sum::<f64>()
            .sqrt())
    }

    pub fn check_pipeline_size(&self) -> Result<()> {
        if self.width < MIN_SIDE || self.height < MIN_SIDE {
            return Err(Error::arg(format!(
                "image is {}x{}, pipeline needs at least {MIN_SIDE}x{MIN_SIDE}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    /// Copies the `h`×`w` window whose top-left corner is `(x0, y0)`.
    pub fn crop_at(&self, x0: usize, y0: usize, h: usize, w: usize) -> Result<Image> {
        if h == 0 || w == 0 || y0 + h > self.height || x0 + w > self.width {
            return Err(Error::arg(format!(
                "window {w}x{h} at ({x0},{y0}) exceeds {}x{} image",
                self.width, self.height
            )));
        }
        let mut data = Vec::with_capacity(h * w * 3);
        for y in y0..y0 + h {
            let start = (y * self.width + x0) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Ok(Image {
            width: w,
            height: h,
            data,
        })
    }

    /// Pads on the bottom/right by mirror reflection (edge pixel not
    /// repeated) until both sides are multiples of `multiple`.
    pub fn reflect_pad_to_multiple(&self, multiple: usize) -> Image {
        let h = self.height.div_ceil(multiple) * multiple;
        let w = self.width.div_ceil(multiple) * multiple;
        if h == self.height && w == self.width {
            return self.clone();
        }
        Image::from_fn(w, h, |x, y| {
            self.pixel(reflect(x, self.width), reflect(y, self.height))
        })
    }
}

fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

fn clip_slice(data: &mut [f32]) {
    for v in data {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Uniformly random `h`×`w` window of `img`.
pub fn crop_patch(img: &Image, (h, w): (usize, usize), rng: &mut Rng) -> Result<Image> {
    if h > img.height || w > img.width {
        return Err(Error::arg(format!(
            "patch {w}x{h} larger than {}x{} image",
            img.width, img.height
        )));
    }
    let y0 = rng.below(img.height - h + 1);
    let x0 = rng.below(img.width - w + 1);
    img.crop_at(x0, y0, h, w)
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    if reader.format() != Some(image::ImageFormat::Png) {
        return Err(Error::Image {
            path: path.to_owned(),
            message: "unsupported format (expected PNG)".into(),
        });
    }
    let decoded = reader.decode().map_err(|e| Error::Image {
        path: path.to_owned(),
        message: e.to_string(),
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = rgb.dimensions();
    let data = rgb.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    Image::from_rgb(w as usize, h as usize, data)
}

pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let bytes: Vec<u8> = img.data.iter().map(|&v| (v * 255.0).round() as u8).collect();
    let buf = image::RgbImage::from_raw(img.width as u32, img.height as u32, bytes)
        .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Image {
                path: path.to_owned(),
                message: other.to_string(),
            },
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |x, y| {
            [x as f32 / w as f32, y as f32 / h as f32, ((x + y) % 7) as f32 / 7.0]
        })
    }

    #[test]
    fn crop_512_to_256() {
        let img = ramp(512, 512);
        let mut rng = Rng::new(0);
        let p = crop_patch(&img, (256, 256), &mut rng).unwrap();
        assert_eq!(p.dims(), (256, 256));
    }

    #[test]
    fn crop_full_size_is_identity() {
        let img = ramp(64, 48);
        let mut rng = Rng::new(3);
        assert_eq!(crop_patch(&img, (48, 64), &mut rng).unwrap(), img);
    }

    #[test]
    fn crop_too_large_fails() {
        let img = ramp(100, 100);
        let mut rng = Rng::new(3);
        assert!(matches!(
            crop_patch(&img, (128, 128), &mut rng),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn crop_never_reads_border_sentinel() {
        // Every pixel is tagged with its own coordinates, so each patch must
        // be a contiguous in-bounds window of the source.
        let img = Image::from_fn(50, 40, |x, y| [x as f32 / 64.0, y as f32 / 64.0, 0.5]);
        let mut rng = Rng::new(11);
        for _ in 0..200 {
            let p = crop_patch(&img, (17, 23), &mut rng).unwrap();
            let [x0, y0, _] = p.pixel(0, 0);
            let (x0, y0) = ((x0 * 64.0).round() as usize, (y0 * 64.0).round() as usize);
            assert!(x0 + 23 <= 50 && y0 + 17 <= 40);
            for y in 0..17 {
                for x in 0..23 {
                    assert_eq!(p.pixel(x, y), img.pixel(x0 + x, y0 + y));
                }
            }
        }
    }

    #[test]
    fn from_rgb_clips_and_validates() {
        let img = Image::from_rgb(1, 1, vec![-1.0, 0.5, 2.0]).unwrap();
        assert_eq!(img.pixel(0, 0), [0.0, 0.5, 1.0]);
        assert!(Image::from_rgb(1, 1, vec![0.0; 4]).is_err());
        assert!(Image::from_rgb(1, 1, vec![f32::NAN, 0.0, 0.0]).is_err());
    }

    #[test]
    fn reflect_pad() {
        let img = ramp(5, 6);
        let p = img.reflect_pad_to_multiple(4);
        assert_eq!(p.dims(), (8, 8));
        assert_eq!(p.pixel(5, 0), img.pixel(3, 0));
        assert_eq!(p.pixel(0, 6), img.pixel(0, 4));
        assert_eq!(p.pixel(4, 5), img.pixel(4, 5));
    }

    #[test]
    fn png_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = ramp(40, 33);
        let a = dir.path().join("a.png");
        let b = dir.path().join("b.png");
        save_image(&img, &a).unwrap();
        let back = load_image(&a).unwrap();
        let max_diff = img
            .data()
            .iter()
            .zip(back.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f32, f32::max);
        assert!(max_diff <= 1.0 / 255.0 + 1e-6, "{max_diff}");
        save_image(&back, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn load_missing_file_is_io_error() {
        assert!(matches!(
            load_image("/definitely/not/here.png"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn load_non_png_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        std::fs::write(&p, b"this is not an image").unwrap();
        assert!(load_image(&p).is_err());
    }
}
