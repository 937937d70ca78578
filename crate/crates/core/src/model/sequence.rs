//! Audio embedding sequences and their adapted form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Pre-trained audio encoders, plus the deterministic mock used at desk
/// scale. The four named encoders have fixed embedding widths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EncoderId {
    Vggish,
    Yamnet,
    Openl3,
    Coala,
    Mock,
}

impl EncoderId {
    pub const NAMED: [EncoderId; 4] =
        [EncoderId::Vggish, EncoderId::Yamnet, EncoderId::Openl3, EncoderId::Coala];

    pub fn name(&self) -> &'static str {
        match self {
            EncoderId::Vggish => "vggish",
            EncoderId::Yamnet => "yamnet",
            EncoderId::Openl3 => "openl3",
            EncoderId::Coala => "coala",
            EncoderId::Mock => "mock",
        }
    }

    /// Fixed embedding width of the named encoders; the mock is free.
    pub fn declared_dim(&self) -> Option<usize> {
        match self {
            EncoderId::Vggish => Some(128),
            EncoderId::Yamnet => Some(1024),
            EncoderId::Openl3 => Some(512),
            EncoderId::Coala => Some(1152),
            EncoderId::Mock => None,
        }
    }

    pub(crate) fn wire_code(&self) -> u8 {
        match self {
            EncoderId::Vggish => 0,
            EncoderId::Yamnet => 1,
            EncoderId::Openl3 => 2,
            EncoderId::Coala => 3,
            EncoderId::Mock => 4,
        }
    }

    pub(crate) fn from_wire_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => EncoderId::Vggish,
            1 => EncoderId::Yamnet,
            2 => EncoderId::Openl3,
            3 => EncoderId::Coala,
            4 => EncoderId::Mock,
            other => return Err(Error::format(format!("unknown encoder code {other}"))),
        })
    }
}

/// Window overlap used when the embeddings were extracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Overlap {
    None,
    Half,
}

impl Overlap {
    pub const ALL: [Overlap; 2] = [Overlap::None, Overlap::Half];

    pub fn name(&self) -> &'static str {
        match self {
            Overlap::None => "none",
            Overlap::Half => "half",
        }
    }

    pub(crate) fn wire_code(&self) -> u8 {
        match self {
            Overlap::None => 0,
            Overlap::Half => 1,
        }
    }

    pub(crate) fn from_wire_code(code: u8) -> Result<Self> {
        Ok(match code {
            0 => Overlap::None,
            1 => Overlap::Half,
            other => return Err(Error::format(format!("unknown overlap code {other}"))),
        })
    }
}

/// A clip's audio embedding sequence: T' rows of F' features, plus the
/// provenance metadata carried by the embedding files. Values are kept in
/// the file's 32-bit precision so write/read round-trips are bit-exact.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    values: Vec<f32>,
    t_prime: usize,
    f_prime: usize,
    pub encoder_id: EncoderId,
    pub overlap: Overlap,
    pub window_seconds: f32,
    pub hop_seconds: f32,
}

impl EmbeddingSequence {
    pub fn new(
        values: Vec<f32>,
        t_prime: usize,
        f_prime: usize,
        encoder_id: EncoderId,
        overlap: Overlap,
        window_seconds: f32,
        hop_seconds: f32,
    ) -> Result<Self> {
        if t_prime == 0 || f_prime == 0 {
            return Err(Error::shape("embedding sequence needs T' >= 1 and F' >= 1"));
        }
        if values.len() != t_prime * f_prime {
            return Err(Error::shape(format!(
                "embedding sequence {t_prime}x{f_prime} wants {} values, got {}",
                t_prime * f_prime,
                values.len()
            )));
        }
        if let Some(dim) = encoder_id.declared_dim() {
            if f_prime != dim {
                return Err(Error::format(format!(
                    "encoder {} produces {dim}-dimensional embeddings, file claims {f_prime}",
                    encoder_id.name()
                )));
            }
        }
        if !(window_seconds > 0.0) || !(hop_seconds > 0.0) {
            return Err(Error::format("window and hop must be positive".to_string()));
        }
        let half = hop_seconds == window_seconds * 0.5;
        if (overlap == Overlap::Half) != half {
            return Err(Error::format(format!(
                "overlap {} inconsistent with window {window_seconds}s / hop {hop_seconds}s",
                overlap.name()
            )));
        }
        Ok(EmbeddingSequence { values, t_prime, f_prime, encoder_id, overlap, window_seconds, hop_seconds })
    }

    pub fn t_prime(&self) -> usize {
        self.t_prime
    }

    pub fn f_prime(&self) -> usize {
        self.f_prime
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Widened to the engine's 64-bit precision.
    pub fn to_tensor(&self) -> Tensor {
        let data: Vec<f64> = self.values.iter().map(|&v| v as f64).collect();
        Tensor::new(vec![self.t_prime, self.f_prime], data).unwrap()
    }
}

/// The adapter's output: same T' as the input sequence, F'' features.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedSequence {
    pub values: Tensor,
}

impl AdaptedSequence {
    pub fn t_prime(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn dim(&self) -> usize {
        self.values.shape()[1]
    }
}
