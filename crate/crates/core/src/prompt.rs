//! Grounded revision prompts and the direct-generation variants.
//!
//! A revision prompt has this layout, with `---` separator lines:
//!
//! ```text
//! <instruction block>
//!
//! ---
//! <title>
//! ---
//! * <ingredient>
//! ---
//! Original Recipe
//! 1. <step>
//! ---
//! Revised Recipe
//! 1.
//! ```
//!
//! The prompt ends with `"1. "` (trailing space, no newline) so the
//! completion continues the first revised step inline.

use std::io;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Recipe, RecipeCollection};
use crate::digest::{derive_seed, sha256_hex};

/// Fixed instruction block: six lettered operations and six demonstrations.
pub const REVISION_INSTRUCTIONS: &str = include_str!("../assets/revision_instructions.txt");

pub const SEPARATOR: &str = "---";
pub const ORIGINAL_HEADER: &str = "Original Recipe";
pub const REVISED_HEADER: &str = "Revised Recipe";
pub const REVISION_SUFFIX: &str = "Revised Recipe\n1. ";
pub const DIRECT_INSTRUCTION: &str = "Write a recipe for the following dish.";
pub const DIRECT_HEADER: &str = "Recipe";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("recipe {id:?} cannot be prompted: {reason}")]
    InvalidRecipe { id: String, reason: String },
    #[error("title is blank")]
    BlankTitle,
    #[error("few-shot pool has {available} candidates, {requested} requested")]
    InsufficientPool { requested: usize, available: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    Revision,
    Direct,
}

impl PromptKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PromptKind::Revision => "revision",
            PromptKind::Direct => "direct",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptText {
    pub text: String,
    pub kind: PromptKind,
    pub recipe_id: String,
    pub config_fingerprint: String,
}

impl PromptText {
    /// SHA-256 of the prompt text; keys scripted completions and results.
    pub fn fingerprint(&self) -> String {
        sha256_hex(&self.text)
    }

    pub fn file_name(&self) -> String {
        format!("{}.{}.prompt.txt", self.recipe_id, self.kind.as_str())
    }

    /// Writes `<recipe_id>.<kind>.prompt.txt` under `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> io::Result<PathBuf> {
        let path = dir.join(self.file_name());
        std::fs::write(&path, &self.text)?;
        Ok(path)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectPromptConfig {
    pub include_ingredients: bool,
    pub few_shot_count: usize,
    pub seed: u64,
}

/// Renders one line of prompt content; embedded line breaks would break
/// the numbered layout, so they become spaces.
fn one_line(text: &str) -> String {
    text.trim().replace(['\r', '\n'], " ")
}

fn push_line(out: &mut String, line: &str) {
    out.push_str(line);
    out.push('\n');
}

fn push_ingredients(out: &mut String, ingredients: &[String]) {
    for ingredient in ingredients {
        push_line(out, &format!("* {}", one_line(ingredient)));
    }
}

fn push_numbered(out: &mut String, steps: &[String]) {
    for (idx, step) in steps.iter().enumerate() {
        push_line(out, &format!("{}. {}", idx + 1, one_line(step)));
    }
}

fn check_recipe(recipe: &Recipe) -> Result<(), PromptError> {
    let fail = |reason: &str| PromptError::InvalidRecipe {
        id: recipe.id.clone(),
        reason: reason.to_string(),
    };
    if recipe.title.trim().is_empty() {
        return Err(fail("blank title"));
    }
    if recipe.steps.is_empty() || recipe.steps.iter().any(|s| s.trim().is_empty()) {
        return Err(fail("missing or blank steps"));
    }
    if recipe.ingredients.is_empty() {
        return Err(fail("no ingredients"));
    }
    Ok(())
}

fn revision_config_fingerprint() -> String {
    sha256_hex(format!("revision\u{1f}{REVISION_INSTRUCTIONS}"))
}

pub fn build_revision_prompt(recipe: &Recipe) -> Result<PromptText, PromptError> {
    check_recipe(recipe)?;
    let mut text = String::with_capacity(REVISION_INSTRUCTIONS.len() + 1024);
    text.push_str(REVISION_INSTRUCTIONS);
    text.push('\n');
    push_line(&mut text, SEPARATOR);
    push_line(&mut text, &one_line(&recipe.title));
    push_line(&mut text, SEPARATOR);
    push_ingredients(&mut text, &recipe.ingredients);
    push_line(&mut text, SEPARATOR);
    push_line(&mut text, ORIGINAL_HEADER);
    push_numbered(&mut text, &recipe.steps);
    push_line(&mut text, SEPARATOR);
    text.push_str(REVISION_SUFFIX);
    Ok(PromptText {
        text,
        kind: PromptKind::Revision,
        recipe_id: recipe.id.clone(),
        config_fingerprint: revision_config_fingerprint(),
    })
}

fn push_direct_block(out: &mut String, title: &str, ingredients: Option<&[String]>) {
    push_line(out, SEPARATOR);
    push_line(out, &one_line(title));
    if let Some(ingredients) = ingredients {
        push_line(out, SEPARATOR);
        push_ingredients(out, ingredients);
    }
    push_line(out, SEPARATOR);
    push_line(out, DIRECT_HEADER);
}

/// Title-only prompt, optionally with ingredients and rendered examples.
///
/// Examples use the same layout as the target and carry ingredients only
/// when the target does.
pub fn build_direct_prompt(
    recipe_id: &str,
    title: &str,
    ingredients: Option<&[String]>,
    examples: &[Recipe],
) -> Result<PromptText, PromptError> {
    if title.trim().is_empty() {
        return Err(PromptError::BlankTitle);
    }
    for example in examples {
        check_recipe(example)?;
    }
    let mut text = String::new();
    push_line(&mut text, DIRECT_INSTRUCTION);
    for example in examples {
        push_direct_block(
            &mut text,
            &example.title,
            ingredients.map(|_| example.ingredients.as_slice()),
        );
        push_numbered(&mut text, &example.steps);
    }
    push_direct_block(&mut text, title, ingredients);
    text.push_str("1. ");

    let options = format!(
        "direct\u{1f}{DIRECT_INSTRUCTION}\u{1f}ingredients={}\u{1f}shots={}",
        ingredients.is_some(),
        examples.len()
    );
    Ok(PromptText {
        text,
        kind: PromptKind::Direct,
        recipe_id: recipe_id.to_string(),
        config_fingerprint: sha256_hex(options),
    })
}

/// Builds the direct prompt for `target` under `config`, sampling few-shot
/// examples from `pool`.
pub fn build_direct_prompt_for(
    target: &Recipe,
    pool: &RecipeCollection,
    config: &DirectPromptConfig,
) -> Result<PromptText, PromptError> {
    let examples = sample_few_shot(pool, config.few_shot_count, config.seed, &target.id)?;
    let ingredients = config
        .include_ingredients
        .then_some(target.ingredients.as_slice());
    build_direct_prompt(&target.id, &target.title, ingredients, &examples)
}

/// `k` distinct recipes from `pool`, never `exclude_id`, chosen by a seeded
/// shuffle of the id-sorted candidates.
pub fn sample_few_shot(
    pool: &RecipeCollection,
    k: usize,
    seed: u64,
    exclude_id: &str,
) -> Result<Vec<Recipe>, PromptError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let mut candidates: Vec<&Recipe> = pool.iter().filter(|r| r.id != exclude_id).collect();
    if candidates.len() < k {
        return Err(PromptError::InsufficientPool {
            requested: k,
            available: candidates.len(),
        });
    }
    candidates.sort_by(|a, b| a.id.cmp(&b.id));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed("few-shot", seed));
    candidates.shuffle(&mut rng);
    Ok(candidates.into_iter().take(k).cloned().collect())
}
