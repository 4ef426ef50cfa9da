//! BPE token accounting: token maps over prompt text, token distance
//! between occurrences of a node, and Small/Medium/Large distance buckets.

use std::collections::HashMap;
use std::fmt;
use std::ops::Range;
use std::sync::{Arc, OnceLock};

use base64::Engine as _;
use serde::{Deserialize, Serialize};
use tiktoken_rs::CoreBPE;

use crate::encoding::Encoding;
use crate::prng::sha256_hex;

pub const DEFAULT_TOKENIZER: &str = "cl100k_base";

/// Pre-tokenization pattern shared by cl100k_base and Llama-3 style
/// tiktoken vocabularies.
const CL100K_PATTERN: &str = r"'(?i:[sdmt]|ll|ve|re)|[^\r\n\p{L}\p{N}]?+\p{L}++|\p{N}{1,3}+| ?[^\s\p{L}\p{N}]++[\r\n]*+|\s++$|\s*[\r\n]|\s+(?!\S)|\s";

#[derive(Debug, thiserror::Error)]
pub enum TokenError {
    #[error("unknown tokenizer `{0}` (expected cl100k_base, o200k_base or tiktoken-file:<path>)")]
    UnknownTokenizer(String),
    #[error("failed to load tokenizer vocabulary {path}: {reason}")]
    Vocabulary { path: String, reason: String },
    #[error("span {0:?} lies outside text of length {1}")]
    OutOfBounds(Range<usize>, usize),
    #[error("spans {0:?} and {1:?} overlap or are out of order")]
    Overlap(Range<usize>, Range<usize>),
    #[error("distance undefined: no common node occurs in both subgraphs")]
    UndefinedDistance,
}

#[derive(Clone)]
enum Bpe {
    Builtin(&'static CoreBPE),
    Loaded(Arc<CoreBPE>),
}

impl Bpe {
    fn get(&self) -> &CoreBPE {
        match self {
            Bpe::Builtin(b) => b,
            Bpe::Loaded(b) => b,
        }
    }
}

/// A loaded BPE tokenizer. Immutable after construction and cheap to clone.
#[derive(Clone)]
pub struct Tokenizer {
    id: String,
    bpe: Bpe,
    vocab_hash: Arc<OnceLock<String>>,
    file_hash: Option<String>,
}

impl fmt::Debug for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tokenizer").field("id", &self.id).finish()
    }
}

impl Tokenizer {
    /// Loads a tokenizer by id: `cl100k_base` (tiktoken-compatible default),
    /// `o200k_base`, or `tiktoken-file:<path>` for a model-family vocabulary
    /// in tiktoken's base64 rank format (e.g. Llama 3).
    pub fn load(id: &str) -> Result<Self, TokenError> {
        let (bpe, file_hash) = match id {
            "cl100k_base" => (Bpe::Builtin(tiktoken_rs::cl100k_base_singleton()), None),
            "o200k_base" => (Bpe::Builtin(tiktoken_rs::o200k_base_singleton()), None),
            other => match other.strip_prefix("tiktoken-file:") {
                Some(path) => {
                    let (bpe, hash) = load_tiktoken_file(path)?;
                    (Bpe::Loaded(Arc::new(bpe)), Some(hash))
                }
                None => return Err(TokenError::UnknownTokenizer(other.to_string())),
            },
        };
        Ok(Self {
            id: id.to_string(),
            bpe,
            vocab_hash: Arc::new(OnceLock::new()),
            file_hash,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// SHA-256 over the vocabulary. For file vocabularies this is the file
    /// hash; for built-ins it hashes every `(rank, bytes)` entry.
    pub fn vocab_hash(&self) -> &str {
        self.vocab_hash.get_or_init(|| {
            if let Some(h) = &self.file_hash {
                return h.clone();
            }
            let bpe = self.bpe.get();
            let mut buf = Vec::new();
            let mut misses = 0u32;
            let mut rank: u32 = 0;
            // Ranks are dense; stop after a long run of unknown ranks.
            while misses < 1024 {
                match bpe.decode_bytes(&[rank]) {
                    Ok(bytes) => {
                        misses = 0;
                        buf.extend_from_slice(&rank.to_le_bytes());
                        buf.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
                        buf.extend_from_slice(&bytes);
                    }
                    Err(_) => misses += 1,
                }
                rank += 1;
            }
            sha256_hex(&buf)
        })
    }

    pub fn count(&self, text: &str) -> usize {
        self.bpe.get().encode_ordinary(text).len()
    }

    pub fn tokenize(&self, text: &str) -> TokenMap {
        let bpe = self.bpe.get();
        let ranks = bpe.encode_ordinary(text);
        let mut ends = Vec::with_capacity(ranks.len());
        let mut cursor = 0usize;
        for rank in ranks {
            // Every rank produced by encode_ordinary decodes.
            let width = bpe.decode_bytes(&[rank]).map(|b| b.len()).unwrap_or(0);
            cursor += width;
            ends.push(cursor);
        }
        debug_assert_eq!(cursor, text.len());
        TokenMap {
            text: text.to_string(),
            ends,
        }
    }
}

fn load_tiktoken_file(path: &str) -> Result<(CoreBPE, String), TokenError> {
    let err = |reason: String| TokenError::Vocabulary {
        path: path.to_string(),
        reason,
    };
    let contents = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let mut encoder = HashMap::default();
    for (lineno, line) in contents.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (token, rank) = line
            .split_once(' ')
            .ok_or_else(|| err(format!("line {}: expected `<base64> <rank>`", lineno + 1)))?;
        let bytes = base64::engine::general_purpose::STANDARD
            .decode(token)
            .map_err(|e| err(format!("line {}: {e}", lineno + 1)))?;
        let rank: u32 = rank
            .trim()
            .parse()
            .map_err(|e| err(format!("line {}: {e}", lineno + 1)))?;
        encoder.insert(bytes, rank);
    }
    let bpe = CoreBPE::new(encoder, HashMap::default(), CL100K_PATTERN).map_err(|e| err(e.to_string()))?;
    Ok((bpe, sha256_hex(contents.as_bytes())))
}

/// Token segmentation of one text, indexed by byte offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenMap {
    text: String,
    /// `ends[k]` is the byte offset one past token `k`.
    ends: Vec<usize>,
}

impl TokenMap {
    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn token_count(&self) -> usize {
        self.ends.len()
    }

    /// Number of tokens that end at or before `offset`. Non-decreasing, 0 at
    /// offset 0 and `token_count` at the end of the text.
    pub fn char_to_token(&self, offset: usize) -> usize {
        self.ends.partition_point(|&end| end <= offset)
    }

    /// Token index containing byte `offset` (clamped to the last token).
    pub fn token_at(&self, offset: usize) -> usize {
        self.ends
            .partition_point(|&end| end <= offset)
            .min(self.ends.len().saturating_sub(1))
    }

    /// Midpoint of `span` in token coordinates, normalized by token count.
    pub fn normalized_midpoint(&self, span: Range<usize>) -> f64 {
        if self.ends.is_empty() {
            return 0.0;
        }
        let first = self.token_at(span.start) as f64;
        let last = self.token_at(span.end.saturating_sub(1).max(span.start)) as f64 + 1.0;
        (first + last) / 2.0 / self.ends.len() as f64
    }

    /// Tokens separating two occurrences: tokens finished before `b` starts
    /// minus tokens finished by the end of `a`, floored at zero.
    pub fn occurrence_distance(&self, a: Range<usize>, b: Range<usize>) -> Result<usize, TokenError> {
        for span in [&a, &b] {
            if span.start > span.end || span.end > self.text.len() {
                return Err(TokenError::OutOfBounds(span.clone(), self.text.len()));
            }
        }
        if a.start >= b.start || a.end > b.start {
            return Err(TokenError::Overlap(a, b));
        }
        Ok(self.char_to_token(b.start).saturating_sub(self.char_to_token(a.end)))
    }

    /// Median over common nodes of the distance between each node's two
    /// occurrences.
    pub fn median_common_distance(
        &self,
        occurrences: &[(Range<usize>, Range<usize>)],
    ) -> Result<usize, TokenError> {
        let mut distances = occurrences
            .iter()
            .map(|(a, b)| self.occurrence_distance(a.clone(), b.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        median_half_up(&mut distances).ok_or(TokenError::UndefinedDistance)
    }
}

/// Median of integer values; even counts average the two middle values and
/// round half up.
pub fn median_half_up(values: &mut [usize]) -> Option<usize> {
    if values.is_empty() {
        return None;
    }
    values.sort_unstable();
    let n = values.len();
    if n % 2 == 1 {
        Some(values[n / 2])
    } else {
        Some((values[n / 2 - 1] + values[n / 2]).div_ceil(2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BucketLabel {
    Small,
    Medium,
    Large,
}

impl BucketLabel {
    pub const ALL: [BucketLabel; 3] = [Self::Small, Self::Medium, Self::Large];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Small => "Small",
            Self::Medium => "Medium",
            Self::Large => "Large",
        }
    }
}

impl fmt::Display for BucketLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Inclusive upper bounds of the Small and Medium buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BucketThresholds {
    pub small: usize,
    pub medium: usize,
}

impl BucketThresholds {
    pub fn bucketize(&self, distance: usize) -> BucketLabel {
        if distance <= self.small {
            BucketLabel::Small
        } else if distance <= self.medium {
            BucketLabel::Medium
        } else {
            BucketLabel::Large
        }
    }

    pub fn buckets(&self, encoding: Encoding) -> [DistanceBucket; 3] {
        [
            DistanceBucket {
                encoding,
                label: BucketLabel::Small,
                lower: None,
                upper: Some(self.small),
            },
            DistanceBucket {
                encoding,
                label: BucketLabel::Medium,
                lower: Some(self.small),
                upper: Some(self.medium),
            },
            DistanceBucket {
                encoding,
                label: BucketLabel::Large,
                lower: Some(self.medium),
                upper: None,
            },
        ]
    }
}

/// `lower` is exclusive, `upper` inclusive; `None` is unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DistanceBucket {
    pub encoding: Encoding,
    pub label: BucketLabel,
    pub lower: Option<usize>,
    pub upper: Option<usize>,
}

impl DistanceBucket {
    pub fn contains(&self, distance: usize) -> bool {
        self.lower.is_none_or(|l| distance > l) && self.upper.is_none_or(|u| distance <= u)
    }
}

/// Per-encoding thresholds; defaults are the published distance groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThresholdTable {
    pub incident: BucketThresholds,
    pub adjacency: BucketThresholds,
    pub expert: BucketThresholds,
}

impl Default for ThresholdTable {
    fn default() -> Self {
        Self {
            incident: BucketThresholds { small: 219, medium: 399 },
            adjacency: BucketThresholds { small: 425, medium: 785 },
            expert: BucketThresholds { small: 354, medium: 654 },
        }
    }
}

impl ThresholdTable {
    pub fn for_encoding(&self, encoding: Encoding) -> BucketThresholds {
        match encoding {
            Encoding::Incident => self.incident,
            Encoding::Adjacency => self.adjacency,
            Encoding::Expert => self.expert,
        }
    }

    pub fn bucketize(&self, distance: usize, encoding: Encoding) -> BucketLabel {
        self.for_encoding(encoding).bucketize(distance)
    }
}
