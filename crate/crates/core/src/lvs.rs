//! FFT landmark-correlation kernel and its timing harness.
//!
//! Normalization: the forward transform is unnormalized and the inverse
//! carries the `1 / (W H)` factor, so `inverse(forward(x)) = x` and
//! `sum |x|^2 = sum |X|^2 / (W H)`.
//!
//! Correlation is circular: `surface[d] = sum_n image[n + d] * template[n]`
//! with indices taken modulo the image shape, computed as
//! `inverse(F(image) * conj(F(template)))`.

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result};

/// Row-major grid of finite samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    width: usize,
    height: usize,
    samples: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, samples: Vec<f64>) -> Result<Self> {
        if width * height != samples.len() {
            return Err(Error::SampleCount {
                width,
                height,
                got: samples.len(),
            });
        }
        if samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteSample);
        }
        Ok(Image {
            width,
            height,
            samples,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Image {
            width,
            height,
            samples: vec![0.0; width * height],
        }
    }

    /// Uniform samples in `[0, 1)` from a seeded generator.
    pub fn random(width: usize, height: usize, seed: u64) -> Self {
        let mut rng = seed::rng(seed);
        let samples = (0..width * height).map(|_| rng.random::<f64>()).collect();
        Image {
            width,
            height,
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }
    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.samples[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.samples[row * self.width + col] = value;
    }

    /// Circular shift: `out[i][j] = self[(i + di) % H][(j + dj) % W]`.
    pub fn roll(&self, di: usize, dj: usize) -> Image {
        let (w, h) = (self.width, self.height);
        let samples = (0..h)
            .flat_map(|i| (0..w).map(move |j| (i, j)))
            .map(|(i, j)| self.get((i + di) % h, (j + dj) % w))
            .collect();
        Image {
            width: w,
            height: h,
            samples,
        }
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|x| x * x).sum()
    }

    fn check_pow2(&self) -> Result<()> {
        if self.width.is_power_of_two() && self.height.is_power_of_two() {
            Ok(())
        } else {
            Err(Error::NotPowerOfTwo {
                width: self.width,
                height: self.height,
            })
        }
    }
}

/// Row-major complex grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub width: usize,
    pub height: usize,
    pub bins: Vec<Complex64>,
}

impl Spectrum {
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.bins[row * self.width + col]
    }

    pub fn energy(&self) -> f64 {
        self.bins.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Planned 2-D transform for one shape. Reuse it when transforming many
/// images of the same size.
pub struct Fft2 {
    width: usize,
    height: usize,
    rows: Arc<dyn Fft<f64>>,
    cols: Arc<dyn Fft<f64>>,
    rows_inv: Arc<dyn Fft<f64>>,
    cols_inv: Arc<dyn Fft<f64>>,
}

impl Fft2 {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if !(width.is_power_of_two() && height.is_power_of_two()) {
            return Err(Error::NotPowerOfTwo { width, height });
        }
        let mut planner = FftPlanner::new();
        Ok(Fft2 {
            width,
            height,
            rows: planner.plan_fft_forward(width),
            cols: planner.plan_fft_forward(height),
            rows_inv: planner.plan_fft_inverse(width),
            cols_inv: planner.plan_fft_inverse(height),
        })
    }

    fn run(&self, data: &mut Vec<Complex64>, rows: &dyn Fft<f64>, cols: &dyn Fft<f64>) {
        let (w, h) = (self.width, self.height);
        rows.process(data);
        let mut t = transpose(data, w, h);
        cols.process(&mut t);
        *data = transpose(&t, h, w);
    }

    pub fn forward(&self, img: &Image) -> Result<Spectrum> {
        self.check_shape(img.width, img.height)?;
        let mut data: Vec<Complex64> = img.samples.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.run(&mut data, &*self.rows, &*self.cols);
        Ok(Spectrum {
            width: self.width,
            height: self.height,
            bins: data,
        })
    }

    /// Inverse transform including the `1 / (W H)` factor.
    pub fn inverse(&self, spec: &Spectrum) -> Result<Vec<Complex64>> {
        self.check_shape(spec.width, spec.height)?;
        let mut data = spec.bins.clone();
        self.run(&mut data, &*self.rows_inv, &*self.cols_inv);
        let scale = 1.0 / (self.width * self.height) as f64;
        data.iter_mut().for_each(|c| *c *= scale);
        Ok(data)
    }

    fn check_shape(&self, width: usize, height: usize) -> Result<()> {
        if (width, height) == (self.width, self.height) {
            Ok(())
        } else {
            Err(Error::ShapeMismatch(width, height, self.width, self.height))
        }
    }
}

fn transpose(data: &[Complex64], w: usize, h: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); w * h];
    const B: usize = 32;
    for i0 in (0..h).step_by(B) {
        for j0 in (0..w).step_by(B) {
            for i in i0..(i0 + B).min(h) {
                for j in j0..(j0 + B).min(w) {
                    out[j * h + i] = data[i * w + j];
                }
            }
        }
    }
    out
}

pub fn fft2_forward(img: &Image) -> Result<Spectrum> {
    img.check_pow2()?;
    Fft2::new(img.width, img.height)?.forward(img)
}

pub fn fft2_inverse(spec: &Spectrum) -> Result<Vec<Complex64>> {
    Fft2::new(spec.width, spec.height)?.inverse(spec)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub surface: Image,
    pub peak_row: usize,
    pub peak_col: usize,
    pub peak_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CorrelateOptions {
    /// Zero-pad both inputs to twice their size first, giving linear rather
    /// than circular correlation. Lag `d` sits at index `d` for `d >= 0` and
    /// at `2 n + d` for negative lags.
    pub zero_pad: bool,
    /// Subtract each input's mean and divide by the product of their norms,
    /// so scores are correlation coefficients in `[-1, 1]`.
    pub normalized: bool,
}

/// Maximum over the grid; ties go to the smallest row, then column.
pub fn find_peak(surface: &Image) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for (idx, &v) in surface.samples.iter().enumerate() {
        if v > best.2 {
            best = (idx / surface.width, idx % surface.width, v);
        }
    }
    best
}

/// Circular cross-correlation with raw scores.
pub fn fft_correlate(image: &Image, template: &Image) -> Result<CorrelationResult> {
    fft_correlate_with(image, template, CorrelateOptions::default())
}

pub fn fft_correlate_with(image: &Image, template: &Image, opts: CorrelateOptions) -> Result<CorrelationResult> {
    if (image.width, image.height) != (template.width, template.height) {
        return Err(Error::ShapeMismatch(image.width, image.height, template.width, template.height));
    }
    image.check_pow2()?;
    let (mut a, mut b) = (image.clone(), template.clone());
    let mut scale = 1.0;
    if opts.normalized {
        center(&mut a);
        center(&mut b);
        let norm = (a.energy() * b.energy()).sqrt();
        if norm > 0.0 {
            scale = 1.0 / norm;
        }
    }
    if opts.zero_pad {
        a = pad(&a);
        b = pad(&b);
    }
    let plan = Fft2::new(a.width, a.height)?;
    let surface = correlate_planned(&plan, &a, &b, scale)?;
    let (peak_row, peak_col, peak_value) = find_peak(&surface);
    Ok(CorrelationResult {
        surface,
        peak_row,
        peak_col,
        peak_value,
    })
}

/// Transform, conjugate product and inverse; no peak search.
pub fn correlate_planned(plan: &Fft2, image: &Image, template: &Image, scale: f64) -> Result<Image> {
    let fi = plan.forward(image)?;
    let ft = plan.forward(template)?;
    let bins = fi.bins.iter().zip(&ft.bins).map(|(x, y)| x * y.conj()).collect();
    let product = Spectrum {
        width: fi.width,
        height: fi.height,
        bins,
    };
    let samples = plan.inverse(&product)?.into_iter().map(|c| c.re * scale).collect();
    Image::new(fi.width, fi.height, samples)
}

fn center(img: &mut Image) {
    let mean = img.samples.iter().sum::<f64>() / img.samples.len() as f64;
    img.samples.iter_mut().for_each(|x| *x -= mean);
}

fn pad(img: &Image) -> Image {
    let mut out = Image::zeros(2 * img.width, 2 * img.height);
    for i in 0..img.height {
        for j in 0..img.width {
            out.set(i, j, img.get(i, j));
        }
    }
    out
}

/// Spatial circular correlation by direct summation, `O((W H)^2)`.
pub fn direct_correlate(image: &Image, template: &Image) -> Result<Image> {
    if (image.width, image.height) != (template.width, template.height) {
        return Err(Error::ShapeMismatch(image.width, image.height, template.width, template.height));
    }
    let (w, h) = (image.width, image.height);
    let mut out = Image::zeros(w, h);
    for di in 0..h {
        for dj in 0..w {
            let mut acc = 0.0;
            for i in 0..h {
                let row = ((i + di) % h) * w;
                let trow = i * w;
                for j in 0..w {
                    acc += image.samples[row + (j + dj) % w] * template.samples[trow + j];
                }
            }
            out.set(di, dj, acc);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BenchOp {
    ForwardFft,
    /// Two forward transforms, the conjugate product and the inverse.
    FftCorrelate,
    PeakSearch,
    DirectCorrelate,
    /// Planned FFT against the direct DFT sum; the row carries the max deviation.
    OracleFft,
    /// FFT correlation against the spatial sum; the row carries the max deviation.
    OracleCorrelate,
}

impl BenchOp {
    pub fn label(self) -> &'static str {
        match self {
            BenchOp::ForwardFft => "FORWARD_FFT",
            BenchOp::FftCorrelate => "FFT_CORRELATE",
            BenchOp::PeakSearch => "PEAK_SEARCH",
            BenchOp::DirectCorrelate => "DIRECT_CORRELATE",
            BenchOp::OracleFft => "ORACLE_FFT",
            BenchOp::OracleCorrelate => "ORACLE_CORRELATE",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub op: BenchOp,
    pub size: usize,
    pub reps: usize,
    pub median_seconds: f64,
    /// Set on oracle rows only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_deviation: Option<f64>,
}

pub const DEFAULT_BENCH_SIZES: [usize; 4] = [128, 256, 512, 1024];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    pub sizes: Vec<usize>,
    pub reps: usize,
    /// Largest size at which the direct spatial correlation is also timed;
    /// 0 disables it.
    pub direct_max: usize,
    /// Largest size at which oracle comparison rows are produced; 0 disables
    /// them.
    pub oracle_max: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            sizes: DEFAULT_BENCH_SIZES.to_vec(),
            reps: 5,
            direct_max: 0,
            oracle_max: 0,
            seed: 0,
        }
    }
}

fn median_time(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut times: Vec<f64> = (0..reps)
        .map(|_| {
            let t = Instant::now();
            f();
            t.elapsed().as_secs_f64()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let n = times.len();
    if n % 2 == 1 {
        times[n / 2]
    } else {
        0.5 * (times[n / 2 - 1] + times[n / 2])
    }
}

/// Median wall-clock time per operation and size on the calling thread.
pub fn bench(config: &BenchConfig) -> Result<Vec<TimingRow>> {
    if config.reps < 3 {
        return Err(Error::TooFewReps(config.reps));
    }
    let mut rows = Vec::new();
    for &n in &config.sizes {
        let plan = Fft2::new(n, n)?;
        let image = Image::random(n, n, seed::derive(config.seed, &[n as u64, 0]));
        let template = image.roll(n / 3, n / 5);
        let reps = config.reps;
        let mut row = |op, median_seconds| {
            rows.push(TimingRow {
                op,
                size: n,
                reps,
                median_seconds,
                max_deviation: None,
            })
        };
        row(
            BenchOp::ForwardFft,
            median_time(reps, || {
                std::hint::black_box(plan.forward(&image).expect("shape checked"));
            }),
        );
        let mut surface = Image::zeros(n, n);
        row(
            BenchOp::FftCorrelate,
            median_time(reps, || {
                surface = correlate_planned(&plan, &image, &template, 1.0).expect("shape checked");
            }),
        );
        row(
            BenchOp::PeakSearch,
            median_time(reps, || {
                std::hint::black_box(find_peak(&surface));
            }),
        );
        if n <= config.direct_max {
            row(
                BenchOp::DirectCorrelate,
                median_time(reps, || {
                    std::hint::black_box(direct_correlate(&image, &template).expect("same shape"));
                }),
            );
        }
        if n <= config.oracle_max {
            let mut dev = 0.0;
            let secs = median_time(reps, || {
                let reference = direct_dft(&image);
                let fast = plan.forward(&image).expect("shape checked");
                dev = max_abs_diff(&fast.bins, &reference.bins);
            });
            rows.push(TimingRow {
                op: BenchOp::OracleFft,
                size: n,
                reps,
                median_seconds: secs,
                max_deviation: Some(dev),
            });
            let secs = median_time(reps, || {
                let reference = direct_correlate(&image, &template).expect("same shape");
                let fast = correlate_planned(&plan, &image, &template, 1.0).expect("shape checked");
                dev = fast
                    .samples
                    .iter()
                    .zip(&reference.samples)
                    .fold(0.0, |m: f64, (a, b)| m.max((a - b).abs()));
            });
            rows.push(TimingRow {
                op: BenchOp::OracleCorrelate,
                size: n,
                reps,
                median_seconds: secs,
                max_deviation: Some(dev),
            });
        }
    }
    Ok(rows)
}

fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m: f64, (x, y)| m.max((x - y).norm()))
}

/// Unnormalized 2-D DFT by the defining double sum. Quadratic in the pixel
/// count; for checking small sizes only.
pub fn direct_dft(img: &Image) -> Spectrum {
    let (w, h) = (img.width, img.height);
    let tau = 2.0 * std::f64::consts::PI;
    let mut bins = vec![Complex64::new(0.0, 0.0); w * h];
    for (k, bin) in bins.iter_mut().enumerate() {
        let (u, v) = (k / w, k % w);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..h {
            for j in 0..w {
                // Reduce the phase index first to keep the angle small.
                let ph = ((u * i) % h) as f64 / h as f64 + ((v * j) % w) as f64 / w as f64;
                acc += img.samples[i * w + j] * Complex64::from_polar(1.0, -tau * ph);
            }
        }
        *bin = acc;
    }
    Spectrum { width: w, height: h, bins }
}

pub fn write_timing_csv<W: Write>(rows: &[TimingRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["op", "size", "reps", "median_seconds", "max_deviation"])?;
    for r in rows {
        out.write_record([
            r.op.label().to_string(),
            r.size.to_string(),
            r.reps.to_string(),
            r.median_seconds.to_string(),
            r.max_deviation.map(|d| d.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Binary PGM (`P5`), 8- or 16-bit; samples are scaled to `[0, 1]` by the
/// header's maximum value.
pub fn read_pgm<R: Read>(mut r: R) -> Result<Image> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::ImageFormat("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::ImageFormat("expected binary PGM (P5)".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        token()?
            .parse()
            .map_err(|_| Error::ImageFormat(format!("bad PGM {what}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if !(1..=65535).contains(&maxval) {
        return Err(Error::ImageFormat(format!("PGM maxval {maxval} out of range")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let data = &bytes[pos + 1.min(bytes.len() - pos)..];
    let depth = if maxval < 256 { 1 } else { 2 };
    let need = width * height * depth;
    if data.len() < need {
        return Err(Error::ImageFormat(format!("PGM raster has {} bytes, need {need}", data.len())));
    }
    let scale = 1.0 / maxval as f64;
    let samples = if depth == 1 {
        data[..need].iter().map(|&b| b as f64 * scale).collect()
    } else {
        data[..need]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 * scale)
            .collect()
    };
    Image::new(width, height, samples)
}

/// 8-bit binary PGM; the sample range is stretched to `[0, 255]`.
pub fn write_pgm<W: Write>(img: &Image, mut w: W) -> Result<()> {
    let lo = img.samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = img.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    write!(w, "P5\n{} {}\n255\n", img.width, img.height)?;
    let raster: Vec<u8> = img
        .samples
        .iter()
        .map(|x| ((x - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8)
        .collect();
    w.write_all(&raster)?;
    Ok(())
}

/// Magic for the raw float container: 8 bytes, then `u32` width and `u32`
/// height, then `width * height` `f64` samples, all little-endian.
pub const RAW_MAGIC: &[u8; 8] = b"F64GRID\0";

pub fn write_raw<W: Write>(img: &Image, mut w: W) -> Result<()> {
    let dim = |x: usize| u32::try_from(x).map_err(|_| Error::ImageFormat(format!("dimension {x} too large")));
    w.write_all(RAW_MAGIC)?;
    w.write_all(&dim(img.width)?.to_le_bytes())?;
    w.write_all(&dim(img.height)?.to_le_bytes())?;
    for x in &img.samples {
        w.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_raw<R: Read>(mut r: R) -> Result<Image> {
    let mut head = [0u8; 16];
    r.read_exact(&mut head)?;
    if &head[..8] != RAW_MAGIC {
        return Err(Error::ImageFormat("bad raw grid magic".into()));
    }
    let width = u32::from_le_bytes(head[8..12].try_into().expect("4 bytes")) as usize;
    let height = u32::from_le_bytes(head[12..16].try_into().expect("4 bytes")) as usize;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != width * height * 8 {
        return Err(Error::SampleCount {
            width,
            height,
            got: body.len() / 8,
        });
    }
    let samples = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Image::new(width, height, samples)
}

/// Loads by extension: `.pgm` as PGM, anything else as the raw container.
pub fn load_image(path: &Path) -> Result<Image> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("pgm") => read_pgm(file),
        _ => read_raw(file),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    /// Direct-summation 2-D DFT.
    fn dft(img: &Image) -> Vec<Complex64> {
        let (w, h) = (img.width(), img.height());
        let mut out = vec![Complex64::new(0.0, 0.0); w * h];
        for u in 0..h {
            for v in 0..w {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..h {
                    for j in 0..w {
                        let phase = -2.0 * PI * ((u * i) as f64 / h as f64 + (v * j) as f64 / w as f64);
                        acc += img.get(i, j) * Complex64::from_polar(1.0, phase);
                    }
                }
                out[u * w + v] = acc;
            }
        }
        out
    }

    #[test]
    fn zeros_and_constants() {
        let z = fft2_forward(&Image::zeros(8, 4)).unwrap();
        assert!(z.bins.iter().all(|c| c.norm() == 0.0));
        let c = fft2_forward(&Image::new(8, 4, vec![2.5; 32]).unwrap()).unwrap();
        assert!((c.get(0, 0) - Complex64::new(80.0, 0.0)).norm() < 1e-12);
        assert!(c.bins[1..].iter().all(|b| b.norm() < 1e-12));
    }

    #[test]
    fn matches_direct_dft() {
        for (w, h) in [(8, 8), (4, 16), (2, 1), (16, 2)] {
            let img = Image::random(w, h, (w * 31 + h) as u64);
            let fast = fft2_forward(&img).unwrap();
            let slow = dft(&img);
            let err = fast.bins.iter().zip(&slow).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            assert!(err <= 1e-9, "{w}x{h}: {err}");
        }
    }

    #[test]
    fn rejects_non_power_of_two_and_mismatch() {
        let img = Image::zeros(6, 4);
        assert!(matches!(fft2_forward(&img), Err(Error::NotPowerOfTwo { .. })));
        assert!(matches!(
            fft_correlate(&Image::zeros(4, 4), &Image::zeros(8, 4)),
            Err(Error::ShapeMismatch(..))
        ));
        assert!(matches!(Image::new(2, 2, vec![0.0; 3]), Err(Error::SampleCount { .. })));
        assert!(matches!(Image::new(1, 1, vec![f64::NAN]), Err(Error::NonFiniteSample)));
    }

    #[test]
    fn spatial_oracle_agrees_on_small_pairs() {
        let a = Image::random(4, 4, 1);
        let b = Image::random(4, 4, 2);
        let fast = fft_correlate(&a, &b).unwrap().surface;
        let slow = direct_correlate(&a, &b).unwrap();
        for (x, y) in fast.samples().iter().zip(slow.samples()) {
            assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn impulse_template_reproduces_image() {
        let img = Image::random(8, 8, 5);
        let mut t = Image::zeros(8, 8);
        t.set(0, 0, 1.0);
        let s = fft_correlate(&img, &t).unwrap().surface;
        for (x, y) in s.samples().iter().zip(img.samples()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn shift_is_recovered_exactly() {
        let img = Image::random(32, 16, 9);
        for (di, dj) in [(0, 0), (3, 7), (15, 31), (8, 1)] {
            let r = fft_correlate(&img, &img.roll(di, dj)).unwrap();
            assert_eq!((r.peak_row, r.peak_col), (di, dj));
        }
    }

    #[test]
    fn self_correlation_peaks_at_origin_with_energy() {
        let img = Image::random(16, 16, 4);
        let r = fft_correlate(&img, &img).unwrap();
        assert_eq!((r.peak_row, r.peak_col), (0, 0));
        assert!((r.peak_value - img.energy()).abs() <= 1e-9 * img.energy());
    }

    #[test]
    fn ties_resolve_to_smallest_row_then_column() {
        let mut s = Image::zeros(4, 4);
        s.set(2, 1, 5.0);
        s.set(1, 3, 5.0);
        s.set(1, 2, 5.0);
        assert_eq!(find_peak(&s), (1, 2, 5.0));
    }

    #[test]
    fn zero_padded_matches_linear_oracle() {
        let a = Image::random(4, 4, 11);
        let b = Image::random(4, 4, 12);
        let r = fft_correlate_with(&a, &b, CorrelateOptions { zero_pad: true, normalized: false }).unwrap();
        assert_eq!((r.surface.width(), r.surface.height()), (8, 8));
        for di in -3i64..4 {
            for dj in -3i64..4 {
                let mut acc = 0.0;
                for i in 0..4i64 {
                    for j in 0..4i64 {
                        let (y, x) = (i + di, j + dj);
                        if (0..4).contains(&y) && (0..4).contains(&x) {
                            acc += a.get(y as usize, x as usize) * b.get(i as usize, j as usize);
                        }
                    }
                }
                let got = r.surface.get(di.rem_euclid(8) as usize, dj.rem_euclid(8) as usize);
                assert!((got - acc).abs() <= 1e-9, "lag ({di}, {dj})");
            }
        }
    }

    #[test]
    fn normalized_self_match_scores_one() {
        let img = Image::random(16, 8, 3);
        let r = fft_correlate_with(&img.roll(2, 5), &img, CorrelateOptions { zero_pad: false, normalized: true }).unwrap();
        assert!((r.peak_value - 1.0).abs() <= 1e-12);
        assert!(r.surface.samples().iter().all(|x| x.abs() <= 1.0 + 1e-12));
    }

    #[test]
    fn raw_container_round_trip() {
        let img = Image::random(8, 4, 2);
        let mut buf = Vec::new();
        write_raw(&img, &mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 8 * 32);
        assert_eq!(read_raw(buf.as_slice()).unwrap(), img);
    }

    #[test]
    fn pgm_round_trip_8_and_16_bit() {
        let img = Image::new(4, 2, vec![0.0, 1.0, 0.5, 0.25, 0.0, 1.0, 0.75, 0.125]).unwrap();
        let mut buf = Vec::new();
        write_pgm(&img, &mut buf).unwrap();
        let back = read_pgm(buf.as_slice()).unwrap();
        for (a, b) in back.samples().iter().zip(img.samples()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        let mut p16 = b"P5\n# comment\n2 1\n65535\n".to_vec();
        p16.extend_from_slice(&[0xFF, 0xFF, 0x80, 0x00]);
        let img = read_pgm(p16.as_slice()).unwrap();
        assert_eq!(img.get(0, 0), 1.0);
        assert!((img.get(0, 1) - 32768.0 / 65535.0).abs() < 1e-15);
    }

    #[test]
    fn bench_reports_every_op() {
        let rows = bench(&BenchConfig { sizes: vec![16], reps: 3, direct_max: 16, oracle_max: 0, seed: 1 }).unwrap();
        let ops: Vec<BenchOp> = rows.iter().map(|r| r.op).collect();
        assert_eq!(ops, vec![BenchOp::ForwardFft, BenchOp::FftCorrelate, BenchOp::PeakSearch, BenchOp::DirectCorrelate]);
        assert!(matches!(bench(&BenchConfig { reps: 2, ..Default::default() }), Err(Error::TooFewReps(2))));
    }

    #[test]
    fn oracle_rows_only_at_small_sizes() {
        let cfg = BenchConfig { sizes: vec![8, 32], reps: 3, direct_max: 0, oracle_max: 16, seed: 4 };
        let rows = bench(&cfg).unwrap();
        let oracle: Vec<&TimingRow> = rows.iter().filter(|r| r.max_deviation.is_some()).collect();
        assert_eq!(oracle.len(), 2);
        assert!(oracle.iter().all(|r| r.size == 8 && r.max_deviation.unwrap() <= 1e-9));
    }

    proptest! {
        #[test]
        fn round_trip_is_identity(lw in 0u32..5, lh in 0u32..5, seed in any::<u64>()) {
            let img = Image::random(1 << lw, 1 << lh, seed);
            let back = fft2_inverse(&fft2_forward(&img).unwrap()).unwrap();
            for (c, x) in back.iter().zip(img.samples()) {
                prop_assert!((c.re - x).abs() <= 1e-12 && c.im.abs() <= 1e-12);
            }
        }

        #[test]
        fn parseval(lw in 0u32..6, lh in 0u32..6, seed in any::<u64>()) {
            let img = Image::random(1 << lw, 1 << lh, seed);
            let spec = fft2_forward(&img).unwrap();
            let lhs = img.energy();
            let rhs = spec.energy() / (img.width() * img.height()) as f64;
            prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.max(1e-300));
        }
    }
}
