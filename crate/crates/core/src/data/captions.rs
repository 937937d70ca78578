//! Caption datasets in the Clotho convention: one audio clip per row with
//! exactly five captions, one audio-caption pair being one example.

use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CAPTIONS_PER_CLIP: usize = 5;
const CSV_HEADER: [&str; 6] =
    ["file_name", "caption_1", "caption_2", "caption_3", "caption_4", "caption_5"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Evaluation,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Validation, Split::Evaluation];

    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Evaluation => "evaluation",
        }
    }
}

/// One clip and its five source captions.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipCaptions {
    pub clip_id: String,
    pub captions: [String; CAPTIONS_PER_CLIP],
}

/// Immutable caption dataset for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionDataset {
    clips: Vec<ClipCaptions>,
    split: Split,
}

impl CaptionDataset {
    pub fn new(split: Split, clips: Vec<ClipCaptions>) -> Result<Self> {
        let mut seen = HashSet::new();
        for clip in &clips {
            if !seen.insert(clip.clip_id.as_str()) {
                return Err(Error::format(format!("duplicate clip id {:?}", clip.clip_id)));
            }
        }
        Ok(CaptionDataset { clips, split })
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn clips(&self) -> &[ClipCaptions] {
        &self.clips
    }

    pub fn clip_ids(&self) -> impl Iterator<Item = &str> {
        self.clips.iter().map(|c| c.clip_id.as_str())
    }

    /// Number of audio-caption pairs (five per clip).
    pub fn example_count(&self) -> usize {
        self.clips.len() * CAPTIONS_PER_CLIP
    }

    /// The idx-th audio-caption pair, in clip-major order.
    pub fn example(&self, idx: usize) -> (&str, &str) {
        let clip = &self.clips[idx / CAPTIONS_PER_CLIP];
        (clip.clip_id.as_str(), clip.captions[idx % CAPTIONS_PER_CLIP].as_str())
    }

    pub fn examples(&self) -> impl Iterator<Item = (&str, &str)> {
        (0..self.example_count()).map(move |i| self.example(i))
    }

    pub fn references(&self, clip_id: &str) -> Option<&[String; CAPTIONS_PER_CLIP]> {
        self.clips.iter().find(|c| c.clip_id == clip_id).map(|c| &c.captions)
    }

    /// Reads a caption CSV with the exact Clotho header.
    pub fn from_csv(path: impl AsRef<Path>, split: Split) -> Result<Self> {
        let path = path.as_ref();
        let mut reader = csv::Reader::from_reader(File::open(path)?);
        {
            let headers = reader.headers()?;
            let expected: Vec<&str> = CSV_HEADER.to_vec();
            if headers.iter().collect::<Vec<_>>() != expected {
                return Err(Error::format(format!(
                    "{}: caption CSV header must be {:?}",
                    path.display(),
                    CSV_HEADER.join(",")
                )));
            }
        }
        let mut clips = Vec::new();
        for (i, record) in reader.records().enumerate() {
            let record = record?;
            if record.len() != 6 {
                return Err(Error::Parse {
                    path: path.display().to_string(),
                    line: i + 2,
                    msg: format!("expected 6 fields, got {}", record.len()),
                });
            }
            let captions: [String; CAPTIONS_PER_CLIP] =
                std::array::from_fn(|j| record[j + 1].to_string());
            clips.push(ClipCaptions { clip_id: record[0].to_string(), captions });
        }
        CaptionDataset::new(split, clips)
    }

    pub fn to_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut writer = csv::Writer::from_writer(File::create(path)?);
        writer.write_record(CSV_HEADER)?;
        for clip in &self.clips {
            let mut record = vec![clip.clip_id.as_str()];
            record.extend(clip.captions.iter().map(String::as_str));
            writer.write_record(record)?;
        }
        writer.flush()?;
        Ok(())
    }
}
