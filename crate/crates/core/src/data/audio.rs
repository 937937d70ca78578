//! Audio-side data: encoder geometry, the mock windowed encoder, and the
//! binary embedding file format.
//!
//! Real encoders are consumed as precomputed embedding files; the mock
//! encoder reproduces their framing geometry (window, hop, overlap) over
//! raw feature sequences so the windowing arithmetic is testable at desk
//! scale.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::sequence::{EmbeddingSequence, EncoderId, Overlap};
use crate::numerics::rng::{sub_seed, Rng};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"AEMB";
pub const EMBEDDING_FORMAT_VERSION: u16 = 1;

/// Encoder geometry and provenance metadata. The four named entries follow
/// the published models exactly; the mock entry is free.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderSpec {
    pub id: EncoderId,
    pub embedding_dim: usize,
    pub window_seconds: f32,
    pub training_regime: &'static str,
}

impl EncoderSpec {
    /// The four compared encoders: (name, dimensionality, window).
    pub const NAMED: [EncoderSpec; 4] = [
        EncoderSpec {
            id: EncoderId::Vggish,
            embedding_dim: 128,
            window_seconds: 0.96,
            training_regime: "supervised",
        },
        EncoderSpec {
            id: EncoderId::Yamnet,
            embedding_dim: 1024,
            window_seconds: 0.96,
            training_regime: "supervised",
        },
        EncoderSpec {
            id: EncoderId::Openl3,
            embedding_dim: 512,
            window_seconds: 1.00,
            training_regime: "self-supervised",
        },
        EncoderSpec {
            id: EncoderId::Coala,
            embedding_dim: 1152,
            window_seconds: 2.20,
            training_regime: "contrastive",
        },
    ];

    pub fn named(id: EncoderId) -> Option<&'static EncoderSpec> {
        Self::NAMED.iter().find(|s| s.id == id)
    }

    pub fn mock(embedding_dim: usize, window_seconds: f32) -> EncoderSpec {
        EncoderSpec {
            id: EncoderId::Mock,
            embedding_dim,
            window_seconds,
            training_regime: "synthetic",
        }
    }
}

/// Raw per-frame audio features X: T rows of F values at a fixed frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    values: Vec<f64>,
    t: usize,
    f: usize,
    pub frame_rate: f64,
}

impl FeatureSequence {
    pub fn new(values: Vec<f64>, t: usize, f: usize, frame_rate: f64) -> Result<Self> {
        if t == 0 || f == 0 {
            return Err(Error::shape("feature sequence needs T >= 1 and F >= 1"));
        }
        if values.len() != t * f {
            return Err(Error::shape(format!(
                "feature sequence {t}x{f} wants {} values, got {}",
                t * f,
                values.len()
            )));
        }
        if !(frame_rate > 0.0) {
            return Err(Error::shape("frame rate must be positive"));
        }
        Ok(FeatureSequence { values, t, f, frame_rate })
    }

    pub fn frames(&self) -> usize {
        self.t
    }

    pub fn feature_dim(&self) -> usize {
        self.f
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.f..(t + 1) * self.f]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Mean,
}

/// Window length in frames for a spec at a frame rate.
pub fn window_frames(spec: &EncoderSpec, frame_rate: f64) -> usize {
    (spec.window_seconds as f64 * frame_rate).round() as usize
}

/// Hop in frames: the full window without overlap, floor(w/2) with 50%
/// overlap (clamped to one frame for width-1 windows).
pub fn hop_frames(window: usize, overlap: Overlap) -> usize {
    match overlap {
        Overlap::None => window,
        Overlap::Half => (window / 2).max(1),
    }
}

/// Number of windows: floor((T - w) / h) + 1. Tail frames that do not fill
/// a window are dropped.
pub fn window_count(t: usize, window: usize, hop: usize) -> usize {
    (t - window) / hop + 1
}

/// The mock encoder: mean-pools each analysis window and applies a fixed
/// seeded random projection F -> embedding_dim as a stand-in for a real
/// encoder, preserving the framing geometry exactly.
pub fn window_embed(
    x: &FeatureSequence,
    spec: &EncoderSpec,
    overlap: Overlap,
    pool: Pooling,
) -> Result<EmbeddingSequence> {
    let Pooling::Mean = pool;
    let w = window_frames(spec, x.frame_rate);
    if w == 0 {
        return Err(Error::config(format!(
            "window of {}s is shorter than one frame at {} fps",
            spec.window_seconds, x.frame_rate
        )));
    }
    if w > x.frames() {
        return Err(Error::config(format!(
            "window of {w} frames exceeds the {} available frames",
            x.frames()
        )));
    }
    let h = hop_frames(w, overlap);
    let t_prime = window_count(x.frames(), w, h);
    let f = x.feature_dim();
    let dim = spec.embedding_dim;

    // Projection fixed by encoder identity and geometry, not by any run seed.
    let proj_seed = sub_seed(
        u64::from_le_bytes(*b"mockproj"),
        (spec.id.wire_code() as u64) << 32 | (f as u64) << 16 | dim as u64,
    );
    let mut rng = Rng::new(proj_seed);
    let limit = (3.0 / f as f64).sqrt();
    let proj: Vec<f64> = (0..f * dim).map(|_| rng.uniform(-limit, limit)).collect();

    let mut values = Vec::with_capacity(t_prime * dim);
    for win in 0..t_prime {
        let start = win * h;
        let mut mean = vec![0.0f64; f];
        for t in start..start + w {
            for (m, v) in mean.iter_mut().zip(x.row(t)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= w as f64);
        for j in 0..dim {
            let mut acc = 0.0;
            for (i, m) in mean.iter().enumerate() {
                acc += m * proj[i * dim + j];
            }
            values.push(acc as f32);
        }
    }

    let hop_seconds = match overlap {
        Overlap::None => spec.window_seconds,
        Overlap::Half => spec.window_seconds * 0.5,
    };
    EmbeddingSequence::new(
        values,
        t_prime,
        dim,
        spec.id,
        overlap,
        spec.window_seconds,
        hop_seconds,
    )
}

// ── Binary embedding files ──────────────────────────────────────────

pub fn write_embedding(seq: &EmbeddingSequence, w: &mut impl Write) -> Result<()> {
    w.write_all(EMBEDDING_MAGIC)?;
    w.write_all(&EMBEDDING_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&[seq.encoder_id.wire_code(), seq.overlap.wire_code()])?;
    w.write_all(&seq.window_seconds.to_le_bytes())?;
    w.write_all(&seq.hop_seconds.to_le_bytes())?;
    w.write_all(&(seq.t_prime() as u32).to_le_bytes())?;
    w.write_all(&(seq.f_prime() as u32).to_le_bytes())?;
    for &v in seq.values() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_embedding(r: &mut impl Read) -> Result<EmbeddingSequence> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::format("embedding file too short"))?;
    if &magic != EMBEDDING_MAGIC {
        return Err(Error::format(format!("bad embedding magic {magic:?}")));
    }
    let mut buf2 = [0u8; 2];
    r.read_exact(&mut buf2)?;
    let version = u16::from_le_bytes(buf2);
    if version != EMBEDDING_FORMAT_VERSION {
        return Err(Error::format(format!("unsupported embedding format version {version}")));
    }
    r.read_exact(&mut buf2)?;
    let encoder_id = EncoderId::from_wire_code(buf2[0])?;
    let overlap = Overlap::from_wire_code(buf2[1])?;
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let window_seconds = f32::from_le_bytes(buf4);
    r.read_exact(&mut buf4)?;
    let hop_seconds = f32::from_le_bytes(buf4);
    r.read_exact(&mut buf4)?;
    let t_prime = u32::from_le_bytes(buf4) as usize;
    r.read_exact(&mut buf4)?;
    let f_prime = u32::from_le_bytes(buf4) as usize;

    let mut payload = vec![0u8; t_prime * f_prime * 4];
    r.read_exact(&mut payload)
        .map_err(|_| Error::format("embedding payload truncated"))?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(Error::format("trailing bytes after embedding payload"));
    }
    let values: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    EmbeddingSequence::new(values, t_prime, f_prime, encoder_id, overlap, window_seconds, hop_seconds)
}

pub fn write_embedding_file(seq: &EmbeddingSequence, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_embedding(seq, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn read_embedding_file(path: impl AsRef<Path>) -> Result<EmbeddingSequence> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path)?);
    read_embedding(&mut r)
        .map_err(|e| Error::format(format!("{}: {e}", path.display())))
}

/// Directory of embedding files laid out as
/// `embeddings/<encoder>/<overlap>/<clip_id>.aemb` under a data root.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    root: PathBuf,
}

impl EmbeddingStore {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        EmbeddingStore { root: root.into() }
    }

    pub fn path_for(&self, encoder: EncoderId, overlap: Overlap, clip_id: &str) -> PathBuf {
        self.root
            .join("embeddings")
            .join(encoder.name())
            .join(overlap.name())
            .join(format!("{clip_id}.aemb"))
    }

    pub fn load(
        &self,
        encoder: EncoderId,
        overlap: Overlap,
        clip_id: &str,
    ) -> Result<EmbeddingSequence> {
        read_embedding_file(self.path_for(encoder, overlap, clip_id))
    }

    /// Checks that every clip has its embedding file, reporting all missing
    /// ids at once.
    pub fn verify_clips<'a>(
        &self,
        encoder: EncoderId,
        overlap: Overlap,
        clip_ids: impl IntoIterator<Item = &'a str>,
    ) -> Result<()> {
        let missing: Vec<String> = clip_ids
            .into_iter()
            .filter(|id| !self.path_for(encoder, overlap, id).is_file())
            .map(str::to_string)
            .collect();
        if missing.is_empty() {
            Ok(())
        } else {
            Err(Error::MissingEmbeddings(missing))
        }
    }

    pub fn save(
        &self,
        clip_id: &str,
        seq: &EmbeddingSequence,
    ) -> Result<()> {
        let path = self.path_for(seq.encoder_id, seq.overlap, clip_id);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        write_embedding_file(seq, path)
    }
}
