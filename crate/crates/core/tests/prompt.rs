mod common;

use std::collections::HashSet;

use common::{fixture, recipe};
use proptest::prelude::*;
use souschef_core::corpus::{load_corpus, Recipe, RecipeCollection};
use souschef_core::prompt::{
    build_direct_prompt, build_direct_prompt_for, build_revision_prompt, sample_few_shot, DirectPromptConfig,
    PromptError, REVISION_INSTRUCTIONS,
};
use souschef_core::sha256_hex;

fn pies() -> Recipe {
    load_corpus(&fixture("mini_apple_pies.jsonl"))
        .unwrap()
        .collection
        .into_vec()
        .remove(0)
}

/// Set UPDATE_GOLDEN=1 to rewrite the golden file after an intended change.
#[test]
fn revision_prompt_matches_golden() {
    let prompt = build_revision_prompt(&pies()).unwrap();
    let path = fixture("mini_apple_pies.revision.prompt.txt");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &prompt.text).unwrap();
    }
    let golden = std::fs::read_to_string(&path).unwrap();
    assert_eq!(prompt.text, golden);
    assert_eq!(prompt.file_name(), "mini-apple-pies-503243.revision.prompt.txt");
}

#[test]
fn instruction_asset_is_pinned() {
    assert_eq!(
        sha256_hex(REVISION_INSTRUCTIONS),
        "b3d81cc72c691667e6b803aa380dc409f5ad2d3fe0a17328e3db0470289ca5ca"
    );
    let lines: Vec<&str> = REVISION_INSTRUCTIONS.lines().collect();
    let ops: Vec<&&str> = lines[2..8].iter().collect();
    for (line, letter) in ops.iter().zip(['A', 'B', 'C', 'D', 'E', 'F']) {
        assert!(line.starts_with(&format!("{letter}) ")), "{line}");
    }
    let demos = &lines[lines.len() - 6..];
    for (line, letter) in demos.iter().zip(['A', 'B', 'C', 'D', 'E', 'F']) {
        assert!(line.starts_with(&format!("{letter}) ")) && line.contains("->"), "{line}");
    }
}

#[test]
fn water_slots() {
    let r = Recipe {
        id: "w".into(),
        title: "Hot Water".into(),
        class_label: None,
        ingredients: vec!["Water".into()],
        steps: vec!["Boil the water.".into()],
        source_url: None,
    };
    let p = build_revision_prompt(&r).unwrap();
    let parts: Vec<&str> = p.text.split("\n---\n").collect();
    assert_eq!(parts[2], "* Water");
    assert_eq!(parts[3], "Original Recipe\n1. Boil the water.");
    assert!(p.text.lines().any(|l| l == "C) Revise a unclear step"));
}

fn slots(text: &str) -> (String, Vec<String>) {
    let parts: Vec<&str> = text.split("\n---\n").collect();
    assert_eq!(parts.len(), 5);
    let fixed = vec![parts[0].to_string(), parts[4].to_string()];
    (parts[1..4].join("\n---\n"), fixed)
}

#[test]
fn distinct_recipes_differ_only_in_slots() {
    let golden = std::fs::read_to_string(fixture("mini_apple_pies.revision.prompt.txt")).unwrap();
    let other = build_revision_prompt(&recipe("x", "paella", 4)).unwrap();
    let (slots_a, fixed_a) = slots(&golden);
    let (slots_b, fixed_b) = slots(&other.text);
    assert_eq!(fixed_a, fixed_b);
    assert_ne!(slots_a, slots_b);
    assert_eq!(fixed_a[0], REVISION_INSTRUCTIONS);
}

#[test]
fn zero_shot_title_only() {
    let p = build_direct_prompt("cc", "clam chowder", None, &[]).unwrap();
    assert!(p.text.contains("clam chowder"));
    assert!(!p.text.lines().any(|l| l.starts_with("* ")));
    assert!(p.text.ends_with("Recipe\n1. "));
    assert!(matches!(build_direct_prompt("cc", "  ", None, &[]), Err(PromptError::BlankTitle)));
}

fn pool(n: usize) -> RecipeCollection {
    RecipeCollection::new((0..n).map(|i| recipe(&format!("p{i}"), "chow mein", 2)).collect()).unwrap()
}

#[test]
fn two_shot_examples_precede_target() {
    let target = recipe("target", "clam chowder", 3);
    let config = DirectPromptConfig {
        include_ingredients: true,
        few_shot_count: 2,
        seed: 5,
    };
    let p = build_direct_prompt_for(&target, &pool(6), &config).unwrap();
    let target_at = p.text.find(&target.title).unwrap();
    let examples = p.text[..target_at].matches("\nRecipe\n").count();
    assert_eq!(examples, 2);
    assert!(p.text[target_at..].contains("* salt"));
}

#[test]
fn seeds_change_examples() {
    let target = recipe("target", "clam chowder", 3);
    let outcomes: HashSet<String> = (0..10)
        .map(|seed| {
            let config = DirectPromptConfig {
                include_ingredients: false,
                few_shot_count: 2,
                seed,
            };
            build_direct_prompt_for(&target, &pool(5), &config).unwrap().text
        })
        .collect();
    assert!(outcomes.len() >= 2);
}

#[test]
fn few_shot_edge_cases() {
    let p = pool(5);
    assert!(sample_few_shot(&p, 0, 1, "p0").unwrap().is_empty());
    let forced: HashSet<String> = sample_few_shot(&pool(3), 2, 1, "p1")
        .unwrap()
        .into_iter()
        .map(|r| r.id)
        .collect();
    assert_eq!(forced, HashSet::from(["p0".to_string(), "p2".to_string()]));
    assert!(matches!(
        sample_few_shot(&p, 5, 0, "p0"),
        Err(PromptError::InsufficientPool { requested: 5, available: 4 })
    ));
}

#[test]
fn few_shot_membership_over_seeds() {
    let p = pool(5);
    let ids: HashSet<&str> = p.iter().map(|r| r.id.as_str()).collect();
    let mut pairs = HashSet::new();
    for seed in 0..50 {
        let picked = sample_few_shot(&p, 2, seed, "p3").unwrap();
        assert_eq!(picked.len(), 2);
        assert_ne!(picked[0].id, picked[1].id);
        for r in &picked {
            assert!(ids.contains(r.id.as_str()));
            assert_ne!(r.id, "p3");
        }
        let mut pair = [picked[0].id.clone(), picked[1].id.clone()];
        pair.sort();
        pairs.insert(pair);
    }
    assert!(pairs.len() >= 2);
}

proptest! {
    #[test]
    fn step_slot_is_numbered_verbatim(steps in proptest::collection::vec("[A-Za-z][A-Za-z ,.]{0,30}", 1..15)) {
        let mut r = recipe("r", "paella", 1);
        r.steps = steps.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
        prop_assume!(!r.steps.is_empty());
        let p = build_revision_prompt(&r).unwrap();
        let original = p.text.split("\n---\n").nth(3).unwrap();
        let expected: Vec<String> = std::iter::once("Original Recipe".to_string())
            .chain(r.steps.iter().enumerate().map(|(i, s)| format!("{}. {s}", i + 1)))
            .collect();
        prop_assert_eq!(original, expected.join("\n"));
    }
}
