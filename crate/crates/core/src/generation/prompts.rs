//! Prompt layouts for per-tuple, batched and context-grounded generation.

use serde::{Deserialize, Serialize};

use super::GenerationError;
use crate::types::{single_line, RelationTuple};

/// Single-tuple prompt used with the fine-tuned sequence-to-sequence generators.
/// Entity types are deliberately absent.
pub fn build_generation_prompt(tuple: &RelationTuple) -> String {
    format!(
        "Generate a sentence, given the following entities and reaction between them:\n\
         Entity 1:{}\nEntity 2: {}\nRelation: {}",
        tuple.e1, tuple.e2, tuple.r
    )
}

pub const BATCH_HEADER: &str = "Generate one sentence for each of the relation tuples below.";
pub const TUPLE_FORMAT_LINE: &str = "Tuple_format: (E1, E1_TYPE, RELATION, E2, E2_TYPE)";

/// Numbered multi-tuple prompt for decoder-only generators.
pub fn build_batch_prompt(
    tuples: &[RelationTuple],
    batch_size: usize,
) -> Result<String, GenerationError> {
    if tuples.is_empty() {
        return Err(GenerationError::EmptyBatch);
    }
    if tuples.len() > batch_size {
        return Err(GenerationError::BatchTooLarge {
            size: tuples.len(),
            max: batch_size,
        });
    }
    let k = tuples.len();
    let mut p = String::new();
    p.push_str(BATCH_HEADER);
    p.push('\n');
    p.push_str(
        "Each sentence must contain both entities exactly as written and express the relation between them.\n",
    );
    p.push_str(TUPLE_FORMAT_LINE);
    p.push('\n');
    for (i, t) in tuples.iter().enumerate() {
        p.push_str(&format!("{}. {}\n", i + 1, t.display_tuple()));
    }
    p.push_str(&format!(
        "Return exactly {k} numbered sentences, one per line, in the same order as the tuples."
    ));
    Ok(p)
}

/// Splits a numbered model response into sentences, stripping `1.`, `1)` or `1:` markers.
pub fn parse_numbered_output(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(|l| {
            let digits = l.chars().take_while(|c| c.is_ascii_digit()).count();
            if digits > 0 {
                let rest = &l[digits..];
                if let Some(stripped) = rest
                    .strip_prefix('.')
                    .or_else(|| rest.strip_prefix(')'))
                    .or_else(|| rest.strip_prefix(':'))
                {
                    return stripped.trim().to_string();
                }
            }
            l.to_string()
        })
        .filter(|l| !l.is_empty())
        .collect()
}

/// Background text about one entity, e.g. the lead paragraph of its encyclopedia article.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSnippet {
    pub entity: String,
    pub text: String,
    pub source: String,
}

pub const ECB_HEADER: &str =
    "Using only the context below, write a single sentence that connects the two entities through the given relation.";
pub const ECB_NO_EXTERNAL_KNOWLEDGE: &str =
    "Do not add any information that is not stated in the context, and do not use your own knowledge about the entities.";
pub const ECB_MISSING_CONTEXT: &str = "[no context available]";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EcbPrompt {
    pub text: String,
    /// Set when either entity had no usable context.
    pub missing_context: bool,
}

/// Context-grounded prompt. Missing or blank snippets are marked unavailable.
pub fn build_ecb_prompt(
    tuple: &RelationTuple,
    ctx1: Option<&ContextSnippet>,
    ctx2: Option<&ContextSnippet>,
) -> EcbPrompt {
    let render = |c: Option<&ContextSnippet>| c.and_then(|c| single_line(&c.text));
    let c1 = render(ctx1);
    let c2 = render(ctx2);
    let missing_context = c1.is_none() || c2.is_none();
    let text = format!(
        "{ECB_HEADER}\n{ECB_NO_EXTERNAL_KNOWLEDGE}\n\
         Both entity names must appear in the sentence exactly as written.\n\
         Entity 1: {}\nEntity 2: {}\nRelation: {}\nContext 1: {}\nContext 2: {}\nSentence:",
        tuple.e1,
        tuple.e2,
        tuple.r,
        c1.as_deref().unwrap_or(ECB_MISSING_CONTEXT),
        c2.as_deref().unwrap_or(ECB_MISSING_CONTEXT),
    );
    EcbPrompt {
        text,
        missing_context,
    }
}
