#![allow(dead_code)]

use std::path::PathBuf;

use souschef_core::corpus::Recipe;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn recipe(id: &str, class: &str, steps: usize) -> Recipe {
    Recipe {
        id: id.to_string(),
        title: format!("{class} {id}"),
        class_label: Some(class.to_string()),
        ingredients: vec!["salt".into(), "water".into()],
        steps: (1..=steps).map(|i| format!("Step {i} of {id}.")).collect(),
        source_url: None,
    }
}

pub fn strings(xs: &[&str]) -> Vec<String> {
    xs.iter().map(|s| s.to_string()).collect()
}
