use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hashing::short_hash;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PromptError {
    #[error("prompt has no slots")]
    NoSlots,
    #[error("slot `{0}` needs at least two vocabulary entries")]
    TooFewEntries(String),
    #[error("slot `{slot}` repeats entry `{entry}` (case-insensitive)")]
    DuplicateEntry { slot: String, entry: String },
    #[error("slot `{0}` has an empty vocabulary entry")]
    EmptyEntry(String),
    #[error("slot `{0}` is declared twice")]
    DuplicateSlot(String),
    #[error("placeholder {{{0}}} must appear exactly once in the template")]
    Placeholder(String),
    #[error("template references unknown slot {{{0}}}")]
    UnknownPlaceholder(String),
    #[error("unknown built-in prompt `{0}`")]
    UnknownBuiltin(String),
}

/// One constrained answer slot, e.g. `class = {0..9}` or `group = {even, odd}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpec {
    pub name: String,
    pub vocabulary: Vec<String>,
    /// Replaces the enumerated vocabulary in the rendered prompt,
    /// e.g. `digit from 0 to 9`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display: Option<String>,
}

impl SlotSpec {
    pub fn new<S: Into<String>>(name: &str, vocabulary: impl IntoIterator<Item = S>) -> Self {
        SlotSpec {
            name: name.to_owned(),
            vocabulary: vocabulary.into_iter().map(Into::into).collect(),
            display: None,
        }
    }

    pub fn with_display(mut self, display: &str) -> Self {
        self.display = Some(display.to_owned());
        self
    }

    fn rendered(&self) -> String {
        match &self.display {
            Some(d) => format!("<{d}>"),
            None => format!("<{}>", self.vocabulary.join(" | ")),
        }
    }
}

/// A question plus an answer structure whose `{slot}` placeholders are
/// filled with the slot vocabularies when rendered.
///
/// ```
/// use semproj::gateway::{GuidingPrompt, SlotSpec};
/// let p = GuidingPrompt::new(
///     "What time is it? Answer with the structure: It is {time}.",
///     vec![SlotSpec::new("time", ["Day", "Night"])],
/// ).unwrap();
/// assert_eq!(p.render(), "What time is it? Answer with the structure: It is <Day | Night>.");
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuidingPrompt {
    pub template: String,
    pub slots: Vec<SlotSpec>,
}

impl GuidingPrompt {
    pub fn new(template: &str, slots: Vec<SlotSpec>) -> Result<Self, PromptError> {
        let p = GuidingPrompt {
            template: template.to_owned(),
            slots,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PromptError> {
        if self.slots.is_empty() {
            return Err(PromptError::NoSlots);
        }
        let mut names = HashSet::new();
        for slot in &self.slots {
            if !names.insert(slot.name.as_str()) {
                return Err(PromptError::DuplicateSlot(slot.name.clone()));
            }
            if slot.vocabulary.len() < 2 {
                return Err(PromptError::TooFewEntries(slot.name.clone()));
            }
            let mut seen = HashSet::new();
            for entry in &slot.vocabulary {
                if entry.trim().is_empty() {
                    return Err(PromptError::EmptyEntry(slot.name.clone()));
                }
                if !seen.insert(entry.to_lowercase()) {
                    return Err(PromptError::DuplicateEntry {
                        slot: slot.name.clone(),
                        entry: entry.clone(),
                    });
                }
            }
            if self.template.matches(&format!("{{{}}}", slot.name)).count() != 1 {
                return Err(PromptError::Placeholder(slot.name.clone()));
            }
        }
        for name in placeholders(&self.template) {
            if !names.contains(name) {
                return Err(PromptError::UnknownPlaceholder(name.to_owned()));
            }
        }
        Ok(())
    }

    /// The prompt text sent to the classifier.
    pub fn render(&self) -> String {
        let mut out = self.template.clone();
        for slot in &self.slots {
            out = out.replacen(&format!("{{{}}}", slot.name), &slot.rendered(), 1);
        }
        out
    }

    /// Short content hash of the rendered prompt, used as a cache key.
    pub fn prompt_hash(&self) -> String {
        short_hash(self.render().as_bytes())
    }

    /// The slot whose values serve as class labels: the one named `class`,
    /// otherwise the first.
    pub fn class_slot(&self) -> &SlotSpec {
        self.slots
            .iter()
            .find(|s| s.name == "class")
            .unwrap_or(&self.slots[0])
    }

    /// A secondary grouping slot (`group`, otherwise the second slot), if any.
    pub fn group_slot(&self) -> Option<&SlotSpec> {
        let class = &self.class_slot().name;
        self.slots
            .iter()
            .find(|s| s.name == "group")
            .or_else(|| self.slots.iter().find(|s| &s.name != class))
    }

    pub fn builtin(name: &str) -> Result<Self, PromptError> {
        builtin(name)
    }
}

fn placeholders(template: &str) -> impl Iterator<Item = &str> {
    template.split('{').skip(1).filter_map(|rest| {
        let end = rest.find('}')?;
        let name = &rest[..end];
        (!name.is_empty() && name.chars().all(|c| c.is_alphanumeric() || c == '_')).then_some(name)
    })
}

const DIGITS: [&str; 10] = ["0", "1", "2", "3", "4", "5", "6", "7", "8", "9"];
const CIFAR10: [&str; 10] = [
    "airplane", "automobile", "bird", "cat", "deer", "dog", "frog", "horse", "ship", "truck",
];
const FASHION: [&str; 10] = [
    "T-shirt/top", "Trouser", "Pullover", "Dress", "Coat", "Sandal", "Shirt", "Sneaker", "Bag",
    "Ankle boot",
];
const AG_NEWS: [&str; 4] = ["World", "Sports", "Business", "Science/Technology"];

/// Names accepted by [`GuidingPrompt::builtin`].
pub const BUILTIN_PROMPTS: [&str; 9] = [
    "mnist_digits",
    "fashion_items",
    "cifar_classes",
    "ag_news_topics",
    "mnist_parity",
    "fashion_groups",
    "cifar_vehicle_animal",
    "fashion_style",
    "cifar_day_night",
];

fn builtin(name: &str) -> Result<GuidingPrompt, PromptError> {
    let (template, slots) = match name {
        // Expected class labels.
        "mnist_digits" => (
            "What digit is this? Answer with the structure: This is digit {class}.",
            vec![SlotSpec::new("class", DIGITS)],
        ),
        "fashion_items" => (
            "What clothing item is this? Answer with the structure: This is a {class}.",
            vec![SlotSpec::new("class", FASHION)],
        ),
        "cifar_classes" => (
            "What is this? Answer with the structure: This is a {class}.",
            vec![SlotSpec::new("class", CIFAR10)],
        ),
        "ag_news_topics" => (
            "What is this news article about? Answer with the structure: This is about {class}.",
            vec![SlotSpec::new("class", AG_NEWS)],
        ),
        // Hierarchical grouping.
        "mnist_parity" => (
            "What digit is this? Answer with the structure: This is digit {class} {group}.",
            vec![
                SlotSpec::new("class", DIGITS).with_display("digit from 0 to 9"),
                SlotSpec::new("group", ["even", "odd"]),
            ],
        ),
        "fashion_groups" => (
            "What type of clothing item is this? Answer with the structure: This is a {class} {group}.",
            vec![
                SlotSpec::new("class", FASHION),
                SlotSpec::new("group", ["tops", "bottoms", "outerwear", "footwear", "accessory"]),
            ],
        ),
        "cifar_vehicle_animal" => (
            "What is this? Answer with the structure: This is a {class} {group}.",
            vec![
                SlotSpec::new("class", CIFAR10),
                SlotSpec::new("group", ["vehicle", "animal"]),
            ],
        ),
        // Qualitative attributes.
        "fashion_style" => (
            "Describe this clothing item with the structure: This is {style}.",
            vec![SlotSpec::new("style", ["Modern", "Old-fashioned"])],
        ),
        "cifar_day_night" => (
            "What time is it? Answer with the structure: It is {time}.",
            vec![SlotSpec::new("time", ["Day", "Night"])],
        ),
        other => return Err(PromptError::UnknownBuiltin(other.to_owned())),
    };
    GuidingPrompt::new(template, slots)
}
