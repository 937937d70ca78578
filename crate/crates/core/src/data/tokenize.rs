//! Caption text preprocessing: lowercase, strip punctuation, split on
//! whitespace. The end token is appended by the training pipeline, not here.

use crate::error::{Error, Result};

pub fn tokenize_caption(text: &str) -> Result<Vec<String>> {
    if text.trim().is_empty() {
        return Err(Error::Empty("caption text".to_string()));
    }
    let cleaned: String = text
        .chars()
        .map(|c| if c.is_alphanumeric() || c.is_whitespace() { c } else { ' ' })
        .collect();
    let tokens: Vec<String> =
        cleaned.split_whitespace().map(|t| t.to_lowercase()).collect();
    if tokens.is_empty() {
        return Err(Error::Empty(format!("caption {text:?} has no tokens")));
    }
    Ok(tokens)
}
