//! Dataset containers.
//!
//! Binary (any extension other than `.jsonl`):
//!
//! ```text
//! "FSFTEMB1"  u32 version = 1  u64 N  u32 d  u32 L
//! N × { u32 M, M × { u32 token_id, d × f32 } }
//! ```
//!
//! all little-endian. JSON lines (`.jsonl`): an optional header object
//! `{"dim": d, "vocab_size": L}` followed by one
//! `{"tokens": [...], "embeddings": [[...], ...]}` object per sentence.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, TokenizedSentence};
use crate::error::{Error, FormatError, Result};
use crate::io_util::Reader;

pub const DATASET_MAGIC: &[u8; 8] = b"FSFTEMB1";
pub const DATASET_VERSION: u32 = 1;

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("jsonl"))
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let bytes = if is_jsonl(path) {
        dataset.to_jsonl().into_bytes()
    } else {
        dataset.to_bytes()
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if is_jsonl(path) {
        let text = String::from_utf8(bytes).map_err(|e| FormatError::Parse {
            line: 0,
            message: format!("not UTF-8: {e}"),
        })?;
        Ok(Dataset::from_jsonl(&text)?)
    } else {
        Ok(Dataset::from_bytes(&bytes)?)
    }
}

#[derive(Serialize, Deserialize)]
struct JsonHeader {
    dim: usize,
    vocab_size: usize,
}

#[derive(Serialize, Deserialize)]
struct JsonSentence {
    tokens: Vec<u32>,
    embeddings: Vec<Vec<f32>>,
}

impl Dataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(28 + self.total_positions() * (4 + 4 * self.dim));
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.vocab_size as u32).to_le_bytes());
        for s in &self.sentences {
            out.extend_from_slice(&(s.len() as u32).to_le_bytes());
            for (token, x) in s.positions() {
                out.extend_from_slice(&token.to_le_bytes());
                for v in x {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FormatError> {
        let mut r = Reader::new(bytes);
        r.magic(DATASET_MAGIC)?;
        let version = r.u32("version")?;
        if version != DATASET_VERSION {
            return Err(FormatError::UnsupportedVersion(version));
        }
        let n = r.u64("sentence count")?;
        let dim = r.u32("dimension")? as usize;
        let vocab_size = r.u32("vocabulary size")?;
        if dim == 0 || vocab_size == 0 {
            return Err(FormatError::Dimension(format!(
                "header declares d = {dim}, L = {vocab_size}"
            )));
        }
        let mut sentences = Vec::with_capacity((n as usize).min(r.remaining() / 4));
        for i in 0..n {
            let m = r.u32("sentence length")? as usize;
            if m.saturating_mul(4 + 4 * dim) > r.remaining() {
                return Err(FormatError::Truncated {
                    offset: r.offset() as u64,
                    context: format!("sentence {i} declares {m} positions"),
                });
            }
            let mut tokens = Vec::with_capacity(m);
            let mut embeddings = Vec::with_capacity(m * dim);
            for _ in 0..m {
                let token = r.u32("token id")?;
                if token >= vocab_size {
                    return Err(FormatError::TokenOutOfRange { token, vocab_size });
                }
                tokens.push(token);
                for _ in 0..dim {
                    embeddings.push(r.f32("embedding")?);
                }
            }
            let s = TokenizedSentence::new(dim, tokens, embeddings)
                .map_err(|e| FormatError::Dimension(format!("sentence {i}: {e}")))?;
            sentences.push(s);
        }
        r.finish()?;
        Dataset::new(dim, vocab_size as usize, sentences)
            .map_err(|e| FormatError::Dimension(e.to_string()))
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&JsonHeader {
            dim: self.dim,
            vocab_size: self.vocab_size,
        })
        .unwrap();
        out.push('\n');
        for s in &self.sentences {
            let line = JsonSentence {
                tokens: s.tokens().to_vec(),
                embeddings: s.embeddings().chunks_exact(self.dim).map(<[f32]>::to_vec).collect(),
            };
            out.push_str(&serde_json::to_string(&line).unwrap());
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, FormatError> {
        let mut header: Option<JsonHeader> = None;
        let mut raw = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            let line_no = idx + 1;
            if line.trim().is_empty() {
                continue;
            }
            let value: serde_json::Value =
                serde_json::from_str(line).map_err(|e| FormatError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?;
            if value.get("vocab_size").is_some() {
                if header.is_some() || !raw.is_empty() {
                    return Err(FormatError::Parse {
                        line: line_no,
                        message: "header must be the first line".into(),
                    });
                }
                header = Some(serde_json::from_value(value).map_err(|e| FormatError::Parse {
                    line: line_no,
                    message: e.to_string(),
                })?);
            } else {
                let s: JsonSentence =
                    serde_json::from_value(value).map_err(|e| FormatError::Parse {
                        line: line_no,
                        message: e.to_string(),
                    })?;
                raw.push((line_no, s));
            }
        }

        let (dim, vocab_size) = match header {
            Some(h) => (h.dim, h.vocab_size),
            None => {
                let dim = raw
                    .iter()
                    .find_map(|(_, s)| s.embeddings.first().map(Vec::len))
                    .ok_or_else(|| FormatError::Parse {
                        line: 0,
                        message: "no header and no embeddings to infer the dimension from".into(),
                    })?;
                let max_token = raw.iter().flat_map(|(_, s)| s.tokens.iter().copied()).max();
                (dim, max_token.map_or(1, |t| t as usize + 1))
            }
        };

        let mut sentences = Vec::with_capacity(raw.len());
        for (line, s) in raw {
            if s.tokens.len() != s.embeddings.len() {
                return Err(FormatError::Dimension(format!(
                    "line {line}: {} tokens but {} embeddings",
                    s.tokens.len(),
                    s.embeddings.len()
                )));
            }
            if let Some(x) = s.embeddings.iter().find(|x| x.len() != dim) {
                return Err(FormatError::Dimension(format!(
                    "line {line}: embedding of length {} in a dimension-{dim} dataset",
                    x.len()
                )));
            }
            if let Some(&token) = s.tokens.iter().find(|&&t| t as usize >= vocab_size) {
                return Err(FormatError::TokenOutOfRange {
                    token,
                    vocab_size: vocab_size as u32,
                });
            }
            let flat = s.embeddings.concat();
            sentences.push(
                TokenizedSentence::new(dim, s.tokens, flat)
                    .map_err(|e| FormatError::Dimension(format!("line {line}: {e}")))?,
            );
        }
        Dataset::new(dim, vocab_size, sentences).map_err(|e| FormatError::Dimension(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Dataset {
        let a = TokenizedSentence::from_positions(2, &[(1, vec![0.1, -3.5]), (0, vec![1e-30, 7.0])])
            .unwrap();
        let b = TokenizedSentence::new(2, vec![], vec![]).unwrap();
        Dataset::new(2, 4, vec![a, b]).unwrap()
    }

    #[test]
    fn binary_header_layout() {
        let bytes = small().to_bytes();
        assert_eq!(&bytes[..8], b"FSFTEMB1");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..20], &2u64.to_le_bytes());
        assert_eq!(&bytes[20..24], &2u32.to_le_bytes());
        assert_eq!(&bytes[24..28], &4u32.to_le_bytes());
        assert_eq!(&bytes[28..32], &2u32.to_le_bytes());
        assert_eq!(bytes.len(), 28 + 4 + 2 * 12 + 4);
    }

    #[test]
    fn distinct_errors() {
        let good = small().to_bytes();
        let mut magic = good.clone();
        magic[3] = b'?';
        assert!(matches!(Dataset::from_bytes(&magic), Err(FormatError::MagicMismatch { .. })));
        assert!(matches!(
            Dataset::from_bytes(&good[..40]),
            Err(FormatError::Truncated { .. })
        ));
        let mut token = good.clone();
        token[32..36].copy_from_slice(&9u32.to_le_bytes());
        assert!(matches!(
            Dataset::from_bytes(&token),
            Err(FormatError::TokenOutOfRange { token: 9, .. })
        ));
        let mut zero_dim = good;
        zero_dim[20..24].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(Dataset::from_bytes(&zero_dim), Err(FormatError::Dimension(_))));
    }

    #[test]
    fn jsonl_round_trip_and_inference() {
        let ds = small();
        assert_eq!(Dataset::from_jsonl(&ds.to_jsonl()).unwrap(), ds);
        let inferred =
            Dataset::from_jsonl("{\"tokens\":[2],\"embeddings\":[[1.0,2.0,3.0]]}\n").unwrap();
        assert_eq!(inferred.dim(), 3);
        assert_eq!(inferred.vocab_size(), 3);
    }

    #[test]
    fn jsonl_errors_carry_line_numbers() {
        let text = "{\"dim\":2,\"vocab_size\":3}\n{\"tokens\":[0],\"embeddings\":[[1.0]]}\n";
        assert!(matches!(Dataset::from_jsonl(text), Err(FormatError::Dimension(m)) if m.contains("line 2")));
        let garbage = "{\"dim\":2,\"vocab_size\":3}\nnot json\n";
        assert!(matches!(Dataset::from_jsonl(garbage), Err(FormatError::Parse { line: 2, .. })));
        assert!(Dataset::from_jsonl("").is_err());
    }
}
