//! Grayscale frames, binary PGM (P5) I/O, the synthetic drift generator and
//! the encoded-size model.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

/// One grayscale image of a stream.
///
/// Pixel storage is reference counted so a frame can sit in the send buffer,
/// the in-flight slot and the received log without copying the image.
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub id: u64,
    /// Generation time in milliseconds.
    pub t_gen: f64,
    pub width: usize,
    pub height: usize,
    pub pixels: Arc<[u8]>,
    /// Modeled transmission payload in bytes.
    pub encoded_size: u64,
}

impl Frame {
    /// Builds a frame whose encoded size defaults to the raw pixel count.
    ///
    /// Panics if `pixels.len() != width * height`.
    pub fn new(id: u64, t_gen: f64, width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(
            pixels.len(),
            width * height,
            "pixel buffer does not match {width}x{height}"
        );
        Self {
            id,
            t_gen,
            width,
            height,
            pixels: pixels.into(),
            encoded_size: (width * height).max(1) as u64,
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }
}

/// An ordered stream of frames replayed at a fixed rate.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameSequence {
    pub frames: Vec<Frame>,
    pub fps: f64,
}

impl FrameSequence {
    /// Milliseconds between consecutive frames.
    pub fn frame_interval_ms(&self) -> f64 {
        1000.0 / self.fps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Applies the size model to every frame.
    pub fn with_size_model(mut self, model: SizeModel) -> Self {
        for frame in &mut self.frames {
            frame.encoded_size = model.encoded_size(frame);
        }
        self
    }
}

#[derive(Debug, Error)]
pub enum PgmError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a binary PGM file (magic {0:?}, expected \"P5\")")]
    BadMagic(String),
    #[error("unsupported maxval {0} (only 8-bit PGM is supported)")]
    UnsupportedMaxval(u32),
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("truncated pixel payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Debug, Error)]
pub enum SequenceError {
    #[error("no .pgm files in {0}")]
    Empty(PathBuf),
    #[error("{path}: {source}")]
    Frame {
        path: PathBuf,
        #[source]
        source: PgmError,
    },
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid frame rate {0}")]
    InvalidFps(f64),
    #[error("invalid synthetic parameters: {0}")]
    InvalidParams(String),
}

struct HeaderReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> HeaderReader<'a> {
    fn skip_whitespace_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let b = self.data[self.pos];
            if b == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self, what: &str) -> Result<u32, PgmError> {
        self.skip_whitespace_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(PgmError::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| PgmError::MalformedHeader(format!("bad {what}")))
    }
}

/// Parses an in-memory binary PGM. The frame gets id 0 and `t_gen` 0.
pub fn parse_pgm(data: &[u8]) -> Result<Frame, PgmError> {
    if data.len() < 2 || &data[..2] != b"P5" {
        let magic = String::from_utf8_lossy(&data[..data.len().min(2)]).into_owned();
        return Err(PgmError::BadMagic(magic));
    }
    let mut reader = HeaderReader { data, pos: 2 };
    let width = reader.token("width")? as usize;
    let height = reader.token("height")? as usize;
    let maxval = reader.token("maxval")?;
    if maxval == 0 {
        return Err(PgmError::MalformedHeader("maxval must be positive".into()));
    }
    if maxval > 255 {
        return Err(PgmError::UnsupportedMaxval(maxval));
    }
    // Exactly one whitespace byte separates the header from the raster.
    match data.get(reader.pos) {
        Some(b) if b.is_ascii_whitespace() => reader.pos += 1,
        _ => {
            return Err(PgmError::Truncated {
                expected: width * height,
                found: 0,
            })
        }
    }
    let expected = width * height;
    let payload = &data[reader.pos..];
    if payload.len() < expected {
        return Err(PgmError::Truncated {
            expected,
            found: payload.len(),
        });
    }
    Ok(Frame::new(0, 0.0, width, height, payload[..expected].to_vec()))
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Frame, PgmError> {
    parse_pgm(&fs::read(path)?)
}

pub fn encode_pgm(frame: &Frame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    out.extend_from_slice(&frame.pixels);
    out
}

pub fn write_pgm(frame: &Frame, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(fs::File::create(path)?);
    file.write_all(&encode_pgm(frame))?;
    file.flush()
}

fn check_fps(fps: f64) -> Result<(), SequenceError> {
    if fps.is_finite() && fps > 0.0 {
        Ok(())
    } else {
        Err(SequenceError::InvalidFps(fps))
    }
}

/// Loads every `.pgm` file of `dir` in lexicographic filename order.
pub fn load_sequence(dir: impl AsRef<Path>, fps: f64) -> Result<FrameSequence, SequenceError> {
    check_fps(fps)?;
    let dir = dir.as_ref();
    let io_err = |source| SequenceError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let path = entry.map_err(io_err)?.path();
        let is_pgm = path.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("pgm"));
        if is_pgm && path.is_file() {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(SequenceError::Empty(dir.to_path_buf()));
    }
    paths.sort_by(|a, b| a.file_name().cmp(&b.file_name()));

    let interval = 1000.0 / fps;
    let frames = paths
        .into_iter()
        .enumerate()
        .map(|(i, path)| {
            let mut frame = load_pgm(&path).map_err(|source| SequenceError::Frame { path, source })?;
            frame.id = i as u64;
            frame.t_gen = i as f64 * interval;
            Ok(frame)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(FrameSequence { frames, fps })
}

/// Parameters of the drifting random-dot generator.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticParams {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    /// Fraction of pixels that carry a bright dot.
    pub dot_density: f64,
    /// Horizontal drift in whole pixels per frame, wrapping at the right edge.
    pub shift_px_per_frame: usize,
    /// Standard deviation of the per-frame additive Gaussian noise.
    pub noise_sigma: f64,
    pub fps: f64,
    pub seed: u64,
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            width: 96,
            height: 128,
            n_frames: 1000,
            dot_density: 0.02,
            shift_px_per_frame: 1,
            noise_sigma: 0.0,
            fps: 25.0,
            seed: 0,
        }
    }
}

impl SyntheticParams {
    pub fn validate(&self) -> Result<(), SequenceError> {
        let bad = |msg: &str| Err(SequenceError::InvalidParams(msg.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("width and height must be positive");
        }
        if self.n_frames == 0 {
            return bad("n_frames must be positive");
        }
        if !(self.dot_density > 0.0 && self.dot_density < 1.0) {
            return bad("dot_density must lie in (0, 1)");
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma must be non-negative");
        }
        check_fps(self.fps)
    }
}

/// Grid spacing of the smooth background texture, in pixels.
const TEXTURE_CELL: usize = 12;
const DOT_INTENSITY: u8 = 255;

/// Horizontally periodic value-noise texture in roughly [30, 180].
///
/// Bilinear interpolation keeps the slope well under what the segment test
/// needs, so corners come from the dots only, while the binary intensity tests
/// of the descriptor see distinct structure at every location.
fn background_texture(width: usize, height: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let cols = width.div_ceil(TEXTURE_CELL).max(1);
    let rows = height / TEXTURE_CELL + 2;
    let grid: Vec<f64> = (0..cols * rows).map(|_| rng.random_range(30.0..180.0)).collect();
    let period = (cols * TEXTURE_CELL) as f64;
    let mut out = Vec::with_capacity(width * height);
    for y in 0..height {
        let gy = y as f64 / TEXTURE_CELL as f64;
        let r0 = gy.floor() as usize;
        let fy = gy - r0 as f64;
        for x in 0..width {
            // Stretch the grid over exactly `width` columns so the texture wraps.
            let gx = x as f64 * period / width as f64 / TEXTURE_CELL as f64;
            let c0 = gx.floor() as usize % cols;
            let c1 = (c0 + 1) % cols;
            let fx = gx - gx.floor();
            let at = |r: usize, c: usize| grid[r * cols + c];
            let top = at(r0, c0) * (1.0 - fx) + at(r0, c1) * fx;
            let bottom = at(r0 + 1, c0) * (1.0 - fx) + at(r0 + 1, c1) * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Generates a drifting random-dot sequence.
///
/// Frame 0 is a field of bright dots over a smooth background; frame `i` is
/// frame 0 shifted right by `i * shift_px_per_frame` pixels (wrapping) plus
/// fresh Gaussian noise. The output is a pure function of `params`.
pub fn gen_synthetic(params: &SyntheticParams) -> Result<FrameSequence, SequenceError> {
    params.validate()?;
    let (w, h) = (params.width, params.height);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let texture = background_texture(w, h, &mut rng);
    let base: Vec<u8> = texture
        .iter()
        .map(|&v| {
            if rng.random_bool(params.dot_density) {
                DOT_INTENSITY
            } else {
                v.round() as u8
            }
        })
        .collect();

    let noise = (params.noise_sigma > 0.0).then(|| Normal::new(0.0, params.noise_sigma).expect("sigma validated"));
    let interval = 1000.0 / params.fps;
    let frames = (0..params.n_frames)
        .map(|i| {
            let shift = (i * params.shift_px_per_frame) % w;
            let mut pixels = Vec::with_capacity(w * h);
            for y in 0..h {
                let row = &base[y * w..(y + 1) * w];
                for x in 0..w {
                    let v = row[(x + w - shift) % w];
                    pixels.push(match &noise {
                        Some(n) => (v as f64 + n.sample(&mut rng)).round().clamp(0.0, 255.0) as u8,
                        None => v,
                    });
                }
            }
            Frame::new(i as u64, i as f64 * interval, w, h, pixels)
        })
        .collect();
    Ok(FrameSequence {
        frames,
        fps: params.fps,
    })
}

/// Parametric stand-in for a JPEG encoder: payload = pixels x ratio.
///
/// Ratio 0.0916 gives ~120 KB per 1280x1024 frame (~3 MB/s at 25 fps) and
/// 0.01526 gives ~20 KB (~0.5 MB/s); both are back-computed from stream rates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SizeModel {
    pub compression_ratio: f64,
}

impl SizeModel {
    pub const QUALITY_80: SizeModel = SizeModel {
        compression_ratio: 0.0916,
    };
    pub const QUALITY_10: SizeModel = SizeModel {
        compression_ratio: 0.01526,
    };
    pub const RAW: SizeModel = SizeModel { compression_ratio: 1.0 };

    pub fn new(compression_ratio: f64) -> Option<Self> {
        (compression_ratio > 0.0 && compression_ratio <= 1.0).then_some(Self { compression_ratio })
    }

    pub fn encoded_size(&self, frame: &Frame) -> u64 {
        model_encoded_size(frame.width, frame.height, self.compression_ratio)
    }
}

impl Default for SizeModel {
    fn default() -> Self {
        Self::QUALITY_80
    }
}

pub fn model_encoded_size(width: usize, height: usize, compression_ratio: f64) -> u64 {
    ((width * height) as f64 * compression_ratio).round().max(1.0) as u64
}
