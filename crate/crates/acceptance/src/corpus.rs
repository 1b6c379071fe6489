use souschef_core::corpus::{Recipe, STANDARD_CLASSES};

/// Deterministic corpus of `n` recipes. Ten in eleven belong to the
/// sampling classes, the rest to a distractor class. Step counts cycle
/// through 3..=20, so every (class, bucket) stratum fills once `n` is large.
pub fn synthetic_corpus(n: usize) -> Vec<Recipe> {
    (0..n)
        .map(|i| {
            let class = match i % 11 {
                10 => "distractor stew".to_string(),
                c => STANDARD_CLASSES[c].to_string(),
            };
            let steps = 3 + (i * 7 + i / 10) % 18;
            Recipe {
                id: format!("syn-{i:05}"),
                title: format!("{class} no. {i}"),
                class_label: Some(class),
                ingredients: vec![format!("{} g flour", 100 + i % 400), "1 pinch salt".into()],
                steps: (1..=steps).map(|s| format!("Do step {s} of recipe {i}.")).collect(),
                source_url: None,
            }
        })
        .collect()
}

const PIE_INGREDIENTS: [&str; 8] = [
    "1/2 cup sugar",
    "2 tablespoons flour",
    "1/4 teaspoon nutmeg",
    "1 teaspoon cinnamon",
    "1/8 teaspoon salt",
    "3 apples, peeled and diced",
    "2 refrigerated pie crusts",
    "1 egg, beaten",
];

const PIE_ORIGINAL: [&str; 6] = [
    "Preheat oven to 350 degrees F.",
    "Line baking sheets with parchment paper and set aside.",
    "In a medium bowl combine first 5 ingredients (sugar - salt) and then add the apples and toss.",
    "Unroll the pie crusts on a floured board and cut 3-inch rounds (note in description), re-roll scraps and cut out more rounds (need an even number of rounds).",
    "brush each round with beaten egg and then place a large spoonful of apple mixture in center of half of the rounds, top each with a plain round which you have cut a vent in, sealing edges with a fork or your fingers (we used fingers), sprinkle with sugar.",
    "Bake pies on baking sheets for 20 minutes or until golden.",
];

const PIE_REVISED: [&str; 10] = [
    "Preheat oven to 350 degrees F.",
    "Line baking sheets with parchment paper and set aside.",
    "In a medium bowl, whisk together sugar, flour, nutmeg, cinnamon, and salt.",
    "Add the peeled and diced apples and toss to combine.",
    "Unroll the pie crusts on a floured board and cut 3-inch rounds. Re-roll scraps and cut out more rounds until you have an even number of rounds.",
    "Brush each round with beaten egg.",
    "Place a large spoonful of the apple mixture in the center of half of the rounds.",
    "Top each filled round with a plain round and use a fork or fingers to seal the edges.",
    "Sprinkle with sugar.",
    "Bake pies on baking sheets for 20 minutes or until golden.",
];

/// The six-step "Mini Apple Pies" recipe.
pub fn mini_apple_pies() -> Recipe {
    Recipe {
        id: "mini-apple-pies-503243".into(),
        title: "Mini Apple Pies".into(),
        class_label: Some("apple pie".into()),
        ingredients: PIE_INGREDIENTS.iter().map(|s| s.to_string()).collect(),
        steps: PIE_ORIGINAL.iter().map(|s| s.to_string()).collect(),
        source_url: Some("https://www.food.com/recipe/mini-apple-pies-503243".into()),
    }
}

/// Its ten-step revision.
pub fn mini_apple_pies_revision() -> Vec<String> {
    PIE_REVISED.iter().map(|s| s.to_string()).collect()
}
