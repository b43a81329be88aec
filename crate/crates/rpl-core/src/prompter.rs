//! Prompt template assembly.
//!
//! Two built-in templates cover the shapes the harness studies: `QA_SCENARIO`
//! puts a scenario description before the retrieved content and the question;
//! `DIRECT` poses the question first and appends the content. Slots and
//! chunks are joined by blank lines so the recorded character ranges are
//! unambiguous.

use serde::{Deserialize, Serialize};

use crate::chunker::Chunk;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    ScenarioDescription,
    Content,
    Question,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub name: String,
    pub order: Vec<Slot>,
    pub scenario: String,
}

impl PromptTemplate {
    /// `<Scenario Description> <Content> <Question>`
    pub fn qa_scenario() -> Self {
        PromptTemplate {
            name: "QA_SCENARIO".into(),
            order: vec![Slot::ScenarioDescription, Slot::Content, Slot::Question],
            scenario: "answer the question using only the reference content below .".into(),
        }
    }

    /// `<Question> <Content>`
    pub fn direct() -> Self {
        PromptTemplate {
            name: "DIRECT".into(),
            order: vec![Slot::Question, Slot::Content],
            scenario: String::new(),
        }
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "QA_SCENARIO" => Some(Self::qa_scenario()),
            "DIRECT" => Some(Self::direct()),
            _ => None,
        }
    }

    /// Every template must carry exactly one Content and one Question slot.
    pub fn validate(&self) -> Result<(), String> {
        let count = |slot: Slot| self.order.iter().filter(|s| **s == slot).count();
        if count(Slot::Content) != 1 || count(Slot::Question) != 1 {
            return Err(format!(
                "template {} must contain exactly one content and one question slot",
                self.name
            ));
        }
        Ok(())
    }

    pub fn load_json(json: &str) -> Result<Vec<PromptTemplate>, serde_json::Error> {
        serde_json::from_str(json)
    }
}

/// The assembled prompt with the slot positions the attack engine needs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentedRequest {
    pub text: String,
    pub content_range: std::ops::Range<usize>,
    pub question_range: std::ops::Range<usize>,
    pub template: String,
}

/// Fill the template slots in declared order. Chunks are joined by blank
/// lines; the recorded content range covers every chunk's text.
pub fn assemble(template: &PromptTemplate, retrieved: &[Chunk], question: &str) -> AugmentedRequest {
    template.validate().expect("valid template");
    let content = retrieved
        .iter()
        .map(|c| c.text.as_str())
        .collect::<Vec<_>>()
        .join("\n\n");

    let mut text = String::new();
    let mut content_range = 0..0;
    let mut question_range = 0..0;
    let mut first = true;
    for slot in &template.order {
        let piece = match slot {
            Slot::ScenarioDescription => template.scenario.as_str(),
            Slot::Content => content.as_str(),
            Slot::Question => question,
        };
        if *slot == Slot::ScenarioDescription && piece.is_empty() {
            continue;
        }
        if !first {
            text.push_str("\n\n");
        }
        let start = text.len();
        text.push_str(piece);
        let range = start..text.len();
        match slot {
            Slot::Content => content_range = range,
            Slot::Question => question_range = range,
            Slot::ScenarioDescription => {}
        }
        first = false;
    }
    AugmentedRequest {
        text,
        content_range,
        question_range,
        template: template.name.clone(),
    }
}
