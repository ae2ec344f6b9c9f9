//! Deterministic prompt-to-embedding lookup for the toy stack: each token
//! hashes to a seed that generates its row, so identical prompts always
//! produce identical embeddings without a pretrained text encoder.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::embedding::Embedding;

pub const DEFAULT_TOKENS: usize = 8;
pub const DEFAULT_DIM: usize = 64;

const PAD_TOKEN: &str = "<pad>";
const TOKEN_SCALE: f64 = 0.25;

/// FNV-1a over bytes, used both for token seeding and component seed fanout.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn token_row(token: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(token.as_bytes()));
    (0..dim)
        .map(|_| {
            // Box-Muller from two uniforms
            let u1: f64 = rng.gen::<f64>().max(1e-12);
            let u2: f64 = rng.gen();
            TOKEN_SCALE
                * (-2.0 * u1.ln()).sqrt()
                * (2.0 * std::f64::consts::PI * u2).cos()
        })
        .collect()
}

/// Embed a prompt as `tokens` rows of dimension `dim`. Words beyond the row
/// budget are dropped; missing rows use the pad token.
pub fn embed_prompt(prompt: &str, tokens: usize, dim: usize) -> Embedding {
    let words: Vec<String> = prompt
        .to_ascii_lowercase()
        .split_whitespace()
        .map(str::to_string)
        .collect();
    let mut data = Vec::with_capacity(tokens * dim);
    for i in 0..tokens {
        let tok = words.get(i).map(String::as_str).unwrap_or(PAD_TOKEN);
        data.extend(token_row(tok, dim));
    }
    Embedding { tokens, dim, data }
}

pub fn embed_prompt_default(prompt: &str) -> Embedding {
    embed_prompt(prompt, DEFAULT_TOKENS, DEFAULT_DIM)
}

/// Derive a per-component seed from the run seed and a component label.
pub fn component_seed(base: u64, label: &str) -> u64 {
    fnv1a(&[&base.to_le_bytes()[..], label.as_bytes()].concat())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_case_insensitive() {
        let a = embed_prompt_default("a Red square");
        let b = embed_prompt_default("a red square");
        assert_eq!(a, b);
    }

    #[test]
    fn distinct_prompts_differ() {
        let a = embed_prompt_default("a red square");
        let b = embed_prompt_default("a blue square");
        assert_ne!(a, b);
        // shared words share rows: only the color token row differs
        let dim = DEFAULT_DIM;
        assert_eq!(&a.data[..dim], &b.data[..dim]);
        assert_ne!(&a.data[dim..2 * dim], &b.data[dim..2 * dim]);
        assert_eq!(&a.data[2 * dim..3 * dim], &b.data[2 * dim..3 * dim]);
    }

    #[test]
    fn component_seed_fanout_distinct() {
        let a = component_seed(0, "train");
        let b = component_seed(0, "invert");
        let c = component_seed(1, "train");
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, component_seed(0, "train"));
    }
}
