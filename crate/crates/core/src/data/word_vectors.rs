//! Loader for word-vector text files (word2vec / GloVe convention).
//!
//! Format: an optional first header line `<count> <dim>`, then one
//! `<token> <v1> ... <vdim>` line per word, space-separated decimal floats.
//! Vocabulary tokens missing from the file receive seeded random rows drawn
//! like the `random` source, so a seed fixes the whole table.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::data::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::model::table::{random_embedding_row, WordEmbeddingTable, WordSource};
use crate::numerics::rng::{streams, Rng};
use crate::numerics::Tensor;

fn parse_header(line: &str) -> Option<(usize, usize)> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 2 {
        return None;
    }
    match (fields[0].parse::<usize>(), fields[1].parse::<usize>()) {
        (Ok(count), Ok(dim)) => Some((count, dim)),
        _ => None,
    }
}

pub fn load_word_embedding_table(
    path: impl AsRef<Path>,
    vocab: &Vocabulary,
    source: WordSource,
    trainable: bool,
    seed: u64,
) -> Result<WordEmbeddingTable> {
    let path = path.as_ref();
    if !source.file_backed() {
        return Err(Error::config(format!(
            "word source {} is not loaded from a file",
            source.name()
        )));
    }
    let reader = BufReader::new(File::open(path)?);
    let display = path.display().to_string();

    let mut dim: Option<usize> = None;
    let mut vectors: std::collections::HashMap<String, Vec<f64>> = std::collections::HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        if i == 0 {
            if let Some((_, header_dim)) = parse_header(&line) {
                dim = Some(header_dim);
                continue;
            }
        }
        let mut fields = line.split_whitespace();
        let token = fields
            .next()
            .ok_or_else(|| Error::Parse {
                path: display.clone(),
                line: line_no,
                msg: "empty vector line".to_string(),
            })?
            .to_string();
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    path: display.clone(),
                    line: line_no,
                    msg: format!("bad float {f:?}"),
                })
            })
            .collect::<Result<_>>()?;
        if values.is_empty() {
            return Err(Error::Parse {
                path: display.clone(),
                line: line_no,
                msg: format!("token {token:?} has no vector values"),
            });
        }
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(Error::Parse {
                    path: display.clone(),
                    line: line_no,
                    msg: format!("dimension {} conflicts with earlier {d}", values.len()),
                })
            }
            _ => {}
        }
        vectors.insert(token, values);
    }

    let dim = dim.ok_or_else(|| Error::format(format!("{display}: no vectors in file")))?;
    if let Some(required) = source.required_dim() {
        if dim != required {
            return Err(Error::format(format!(
                "{display}: {} vectors must be {required}-dimensional, file has {dim}",
                source.name()
            )));
        }
    }

    let mut rng = Rng::from_stream(seed, streams::WORD_TABLE);
    let mut data = Vec::with_capacity(vocab.len() * dim);
    for token in vocab.tokens() {
        match vectors.get(token) {
            Some(v) => data.extend_from_slice(v),
            None => data.extend(random_embedding_row(&mut rng, dim)),
        }
    }
    let rows = Tensor::new(vec![vocab.len(), dim], data)?;
    WordEmbeddingTable::from_rows(rows, source, trainable)
}

/// Writes a table of token vectors in the text format, with a header line.
pub fn write_word_vectors(
    path: impl AsRef<Path>,
    entries: &[(String, Vec<f64>)],
) -> Result<()> {
    use std::io::Write;
    let dim = entries.first().map(|(_, v)| v.len()).unwrap_or(0);
    let mut w = std::io::BufWriter::new(File::create(path)?);
    writeln!(w, "{} {}", entries.len(), dim)?;
    for (token, values) in entries {
        write!(w, "{token}")?;
        for v in values {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}
