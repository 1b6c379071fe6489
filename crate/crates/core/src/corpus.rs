//! Recipe corpus ingestion, validation and stratified sampling.
//!
//! Input files hold one JSON object per line in the Recipes1M+ layer-1
//! shape: `id`, `title`, optional `class`, `ingredients` and `instructions`
//! as arrays of `{"text": ...}` objects, and an optional `url`.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::derive_seed;
use crate::jsonl;
use crate::par::Exec;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read corpus {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("corpus line {line} is not a JSON record: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate recipe id {0:?}")]
    DuplicateId(String),
    #[error("invalid sample spec: {0}")]
    InvalidSpec(String),
    #[error("insufficient stratum population: {}", format_deficits(.0))]
    InsufficientStratum(Vec<StratumDeficit>),
}

fn format_deficits(deficits: &[StratumDeficit]) -> String {
    deficits
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StratumDeficit {
    pub class: String,
    pub bucket: Bucket,
    pub needed: usize,
    pub available: usize,
}

impl fmt::Display for StratumDeficit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "({}, {}) needs {} but has {}",
            self.class, self.bucket, self.needed, self.available
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextItem {
    pub text: String,
}

/// One line of a corpus file, before validation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecipe {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<String>,
    #[serde(default)]
    pub ingredients: Vec<TextItem>,
    #[serde(default)]
    pub instructions: Vec<TextItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub id: String,
    pub title: String,
    pub class_label: Option<String>,
    pub ingredients: Vec<String>,
    pub steps: Vec<String>,
    pub source_url: Option<String>,
}

impl Recipe {
    pub fn step_count(&self) -> usize {
        self.steps.iter().filter(|s| !s.trim().is_empty()).count()
    }

    pub fn to_raw(&self) -> RawRecipe {
        RawRecipe {
            id: Some(self.id.clone()),
            title: Some(self.title.clone()),
            class: self.class_label.clone(),
            ingredients: self
                .ingredients
                .iter()
                .map(|t| TextItem { text: t.clone() })
                .collect(),
            instructions: self
                .steps
                .iter()
                .map(|t| TextItem { text: t.clone() })
                .collect(),
            url: self.source_url.clone(),
        }
    }
}

/// Checks every recipe invariant that can be decided from a single record.
///
/// Step numbers in failure messages are 1-based.
pub fn validate_recipe(raw: &RawRecipe) -> Result<Recipe, Vec<String>> {
    let mut failures = Vec::new();
    let id = raw.id.clone().unwrap_or_default();
    if id.trim().is_empty() {
        failures.push("id missing".to_string());
    }
    if raw.instructions.is_empty() {
        failures.push("steps empty".to_string());
    }
    for (idx, step) in raw.instructions.iter().enumerate() {
        if step.text.trim().is_empty() {
            failures.push(format!("step {} blank", idx + 1));
        }
    }
    if raw.ingredients.is_empty() {
        failures.push("ingredients empty".to_string());
    }
    if !failures.is_empty() {
        return Err(failures);
    }
    Ok(Recipe {
        id,
        title: raw.title.clone().unwrap_or_default(),
        class_label: raw.class.clone(),
        ingredients: raw.ingredients.iter().map(|t| t.text.clone()).collect(),
        steps: raw.instructions.iter().map(|t| t.text.clone()).collect(),
        source_url: raw.url.clone(),
    })
}

/// Recipes with unique ids, in insertion order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecipeCollection {
    recipes: Vec<Recipe>,
}

impl RecipeCollection {
    pub fn new(recipes: Vec<Recipe>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for recipe in &recipes {
            if !seen.insert(recipe.id.as_str()) {
                return Err(CorpusError::DuplicateId(recipe.id.clone()));
            }
        }
        Ok(Self { recipes })
    }

    pub fn len(&self) -> usize {
        self.recipes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recipes.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Recipe> {
        self.recipes.iter()
    }

    pub fn as_slice(&self) -> &[Recipe] {
        &self.recipes
    }

    pub fn get(&self, id: &str) -> Option<&Recipe> {
        self.recipes.iter().find(|r| r.id == id)
    }

    pub fn into_vec(self) -> Vec<Recipe> {
        self.recipes
    }

    /// Writes the collection back out in the corpus input format.
    pub fn write_jsonl(&self, path: &Path) -> io::Result<()> {
        let raws: Vec<RawRecipe> = self.recipes.iter().map(Recipe::to_raw).collect();
        jsonl::write_records(path, &raws)
    }
}

impl<'a> IntoIterator for &'a RecipeCollection {
    type Item = &'a Recipe;
    type IntoIter = std::slice::Iter<'a, Recipe>;

    fn into_iter(self) -> Self::IntoIter {
        self.recipes.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRecord {
    pub line: usize,
    pub id: Option<String>,
    pub reasons: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOutcome {
    pub collection: RecipeCollection,
    pub skipped: Vec<SkippedRecord>,
}

pub fn load_corpus(path: &Path) -> Result<LoadOutcome, CorpusError> {
    load_corpus_with(path, Exec::default())
}

pub fn load_corpus_with(path: &Path, exec: Exec) -> Result<LoadOutcome, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_corpus(&text, exec)
}

/// Parses and validates corpus text. Malformed JSON is fatal; records that
/// parse but break an invariant are skipped and reported.
pub fn parse_corpus(text: &str, exec: Exec) -> Result<LoadOutcome, CorpusError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();

    let parsed = exec.map(&lines, |(line, l)| {
        serde_json::from_str::<RawRecipe>(l)
            .map(|raw| (*line, validate_recipe(&raw).map_err(|r| (raw.id.clone(), r))))
            .map_err(|e| CorpusError::Malformed {
                line: *line,
                message: e.to_string(),
            })
    });

    let mut recipes = Vec::new();
    let mut skipped = Vec::new();
    let mut seen = HashSet::new();
    for item in parsed {
        let (line, result) = item?;
        match result {
            Ok(recipe) => {
                if seen.insert(recipe.id.clone()) {
                    recipes.push(recipe);
                } else {
                    skipped.push(SkippedRecord {
                        line,
                        id: Some(recipe.id),
                        reasons: vec!["duplicate id".to_string()],
                    });
                }
            }
            Err((id, reasons)) => skipped.push(SkippedRecord { line, id, reasons }),
        }
    }
    for skip in &skipped {
        log::warn!(
            "skipping corpus line {} ({}): {}",
            skip.line,
            skip.id.as_deref().unwrap_or("<no id>"),
            skip.reasons.join(", ")
        );
    }
    Ok(LoadOutcome {
        collection: RecipeCollection { recipes },
        skipped,
    })
}

/// Inclusive step-count interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRange {
    pub min: usize,
    pub max: usize,
}

impl StepRange {
    pub fn new(min: usize, max: usize) -> Self {
        Self { min, max }
    }

    pub fn contains(&self, steps: usize) -> bool {
        self.min <= steps && steps <= self.max
    }

    fn overlaps(&self, other: &StepRange) -> bool {
        self.min <= other.max && other.min <= self.max
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Long,
    Short,
    OutOfRange,
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Bucket::Long => "long",
            Bucket::Short => "short",
            Bucket::OutOfRange => "out-of-range",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub classes: Vec<String>,
    pub per_class_long: usize,
    pub per_class_short: usize,
    pub long_range: StepRange,
    pub short_range: StepRange,
    #[serde(default)]
    pub seed: u64,
}

pub const STANDARD_CLASSES: [&str; 10] = [
    "couscous salad",
    "apple pie",
    "clam chowder",
    "lentil soup",
    "chicken enchiladas",
    "beef stroganoff",
    "coconut macaroons",
    "chow mein",
    "pad thai",
    "paella",
];

impl SampleSpec {
    /// Ten cuisine classes, five long (11-16 steps) and five short (5-10
    /// steps) recipes per class.
    pub fn standard(seed: u64) -> Self {
        Self {
            classes: STANDARD_CLASSES.iter().map(|c| c.to_string()).collect(),
            per_class_long: 5,
            per_class_short: 5,
            long_range: StepRange::new(11, 16),
            short_range: StepRange::new(5, 10),
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if self.classes.is_empty() {
            return Err(CorpusError::InvalidSpec("no classes".into()));
        }
        let mut seen = HashSet::new();
        for class in &self.classes {
            if class.trim().is_empty() {
                return Err(CorpusError::InvalidSpec("blank class label".into()));
            }
            if !seen.insert(class.to_lowercase()) {
                return Err(CorpusError::InvalidSpec(format!("duplicate class {class:?}")));
            }
        }
        for range in [&self.long_range, &self.short_range] {
            if range.min > range.max {
                return Err(CorpusError::InvalidSpec(format!(
                    "empty step range {}..={}",
                    range.min, range.max
                )));
            }
        }
        if self.long_range.overlaps(&self.short_range) {
            return Err(CorpusError::InvalidSpec("long and short ranges overlap".into()));
        }
        Ok(())
    }

    pub fn bucket(&self, step_count: usize) -> Bucket {
        if self.long_range.contains(step_count) {
            Bucket::Long
        } else if self.short_range.contains(step_count) {
            Bucket::Short
        } else {
            Bucket::OutOfRange
        }
    }

    /// Index of the first class in spec order matching the label.
    pub fn class_of(&self, recipe: &Recipe) -> Option<usize> {
        let label = recipe.class_label.as_deref()?.to_lowercase();
        self.classes.iter().position(|c| c.to_lowercase() == label)
    }

    pub fn total(&self) -> usize {
        self.classes.len() * (self.per_class_long + self.per_class_short)
    }
}

/// Draws the per-(class, bucket) quotas without replacement.
///
/// Each stratum's eligible ids are sorted, shuffled with a generator seeded
/// from `(spec.seed, class, bucket)`, and the first `k` taken, so the result
/// does not depend on input order. Output is grouped by class in spec order,
/// long bucket before short.
pub fn stratified_sample(
    collection: &RecipeCollection,
    spec: &SampleSpec,
) -> Result<RecipeCollection, CorpusError> {
    spec.validate()?;
    let mut strata: BTreeMap<(usize, Bucket), Vec<&Recipe>> = BTreeMap::new();
    for recipe in collection {
        let Some(class) = spec.class_of(recipe) else {
            continue;
        };
        let bucket = spec.bucket(recipe.step_count());
        if bucket != Bucket::OutOfRange {
            strata.entry((class, bucket)).or_default().push(recipe);
        }
    }

    let mut deficits = Vec::new();
    let mut picked = Vec::with_capacity(spec.total());
    for (class_idx, class) in spec.classes.iter().enumerate() {
        for (bucket, quota) in [
            (Bucket::Long, spec.per_class_long),
            (Bucket::Short, spec.per_class_short),
        ] {
            let mut eligible = strata.remove(&(class_idx, bucket)).unwrap_or_default();
            if eligible.len() < quota {
                deficits.push(StratumDeficit {
                    class: class.clone(),
                    bucket,
                    needed: quota,
                    available: eligible.len(),
                });
                continue;
            }
            eligible.sort_by(|a, b| a.id.cmp(&b.id));
            let label = format!("{}\u{1f}{}", class.to_lowercase(), bucket);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&label, spec.seed));
            eligible.shuffle(&mut rng);
            picked.extend(eligible.into_iter().take(quota).cloned());
        }
    }
    if !deficits.is_empty() {
        return Err(CorpusError::InsufficientStratum(deficits));
    }
    RecipeCollection::new(picked)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(id: &str, steps: &[&str]) -> RawRecipe {
        RawRecipe {
            id: Some(id.into()),
            title: Some(format!("dish {id}")),
            class: Some("paella".into()),
            ingredients: vec![TextItem { text: "rice".into() }],
            instructions: steps.iter().map(|s| TextItem { text: s.to_string() }).collect(),
            url: None,
        }
    }

    #[test]
    fn empty_steps_fail() {
        let err = validate_recipe(&raw("a", &[])).unwrap_err();
        assert_eq!(err, vec!["steps empty"]);
    }

    #[test]
    fn blank_step_is_named() {
        let err = validate_recipe(&raw("a", &["one", "two", "  "])).unwrap_err();
        assert_eq!(err, vec!["step 3 blank"]);
    }

    #[test]
    fn every_violation_listed() {
        let mut r = raw("", &[" "]);
        r.ingredients.clear();
        let err = validate_recipe(&r).unwrap_err();
        assert_eq!(err, vec!["id missing", "step 1 blank", "ingredients empty"]);
    }

    #[test]
    fn valid_record_is_identity() {
        let r = raw("a", &["Boil.", "Serve."]);
        let recipe = validate_recipe(&r).unwrap();
        assert_eq!(recipe.to_raw(), r);
    }

    #[test]
    fn bucket_is_total_and_exclusive() {
        let spec = SampleSpec::standard(0);
        for n in 0..40 {
            let b = spec.bucket(n);
            let expected = match n {
                5..=10 => Bucket::Short,
                11..=16 => Bucket::Long,
                _ => Bucket::OutOfRange,
            };
            assert_eq!(b, expected, "steps {n}");
        }
    }

    #[test]
    fn spec_rejects_overlap_and_duplicates() {
        let mut spec = SampleSpec::standard(0);
        spec.short_range = StepRange::new(5, 11);
        assert!(spec.validate().is_err());
        let mut spec = SampleSpec::standard(0);
        spec.classes.push("Paella".into());
        assert!(spec.validate().is_err());
        let mut spec = SampleSpec::standard(0);
        spec.classes.clear();
        assert!(spec.validate().is_err());
    }

    #[test]
    fn class_match_is_case_insensitive() {
        let spec = SampleSpec::standard(0);
        let mut recipe = validate_recipe(&raw("a", &["x"])).unwrap();
        recipe.class_label = Some("PAD Thai".into());
        assert_eq!(spec.class_of(&recipe), Some(8));
        recipe.class_label = None;
        assert_eq!(spec.class_of(&recipe), None);
    }

    #[test]
    fn deficit_names_stratum() {
        let coll = RecipeCollection::new(vec![]).unwrap();
        let spec = SampleSpec {
            classes: vec!["paella".into()],
            per_class_long: 0,
            per_class_short: 1,
            long_range: StepRange::new(11, 16),
            short_range: StepRange::new(5, 10),
            seed: 0,
        };
        let err = stratified_sample(&coll, &spec).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(paella, short)"), "{msg}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let r = validate_recipe(&raw("a", &["x"])).unwrap();
        assert!(matches!(
            RecipeCollection::new(vec![r.clone(), r]),
            Err(CorpusError::DuplicateId(_))
        ));
    }
}
