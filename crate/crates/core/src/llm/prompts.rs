//! Prompt construction for the detection and summarization tasks.
//!
//! The detection guideline text ships as an editable template
//! (`assets/detection_guidelines.txt`); the bundled copy is the default.

use serde::{Deserialize, Serialize};

use crate::model::{DocumentPair, SpanAnnotation};
use crate::tagged::{render_tagged, ClassMode};

/// Bundled guideline template for the detection task.
pub const DEFAULT_GUIDELINES: &str = include_str!("../../assets/detection_guidelines.txt");

pub const SYSTEM_PROMPT: &str =
    "You are a helpful assistant that helps patients understand their medical records.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Message {
            role: "system".to_string(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message {
            role: "user".to_string(),
            content: content.into(),
        }
    }
}

/// Decoding parameters sent with every request.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub max_new_tokens: u32,
    pub temperature: f64,
}

impl Default for Decoding {
    fn default() -> Self {
        Decoding {
            max_new_tokens: 600,
            temperature: 0.0,
        }
    }
}

/// One in-context exemplar: a document, its summary, and the known
/// error spans over the summary. `cot_description` is the bullet list
/// shown under ERRORS in chain-of-thought prompts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Exemplar {
    pub document: String,
    pub summary: String,
    #[serde(default)]
    pub spans: Vec<SpanAnnotation>,
    #[serde(default)]
    pub cot_description: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTask {
    Detection,
    Summarization,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptSpec {
    pub task: PromptTask,
    pub mode: ClassMode,
    pub cot: bool,
    pub shots: Vec<Exemplar>,
    pub decoding: Decoding,
}

impl PromptSpec {
    pub fn detection(mode: ClassMode) -> Self {
        PromptSpec {
            task: PromptTask::Detection,
            mode,
            cot: false,
            shots: Vec::new(),
            decoding: Decoding::default(),
        }
    }
}

/// Marker preceding the labeled summary in exemplars and responses.
pub const LABELED_HEADER: &str = "AVS WITH ERRORS LABELED:";

fn exemplar_tagged(exemplar: &Exemplar, mode: ClassMode) -> String {
    match mode {
        ClassMode::ClassAware => render_tagged(&exemplar.summary, &exemplar.spans),
        // class-agnostic prompts carry plain <error> tags
        ClassMode::ClassAgnostic => {
            let stripped: Vec<SpanAnnotation> = exemplar
                .spans
                .iter()
                .map(|s| SpanAnnotation::new(s.start, s.end, None))
                .collect();
            render_tagged(&exemplar.summary, &stripped)
        }
    }
}

/// Detection prompt: guidelines, k exemplars, then the test document
/// ending at the "ERROR:" cue.
pub fn build_detection_prompt(
    spec: &PromptSpec,
    doc: &DocumentPair,
    guidelines: &str,
) -> Vec<Message> {
    assert_eq!(spec.task, PromptTask::Detection);
    let mut body = String::with_capacity(guidelines.len() + 2048);
    body.push_str(guidelines.trim_end());
    body.push('\n');
    if spec.mode == ClassMode::ClassAgnostic {
        body.push_str(
            "\nFor this task, label error spans with plain <error> tags without a class attribute.\n",
        );
    }
    body.push_str("\n## Examples\n");
    for (i, exemplar) in spec.shots.iter().enumerate() {
        body.push_str(&format!(
            "\n### Example {}\n\nBHC:\n{}\n\nAVS:\n{}\n",
            i + 1,
            exemplar.document,
            exemplar.summary
        ));
        if spec.cot {
            let errors = exemplar.cot_description.as_deref().unwrap_or("- none");
            body.push_str(&format!("\nERRORS:\n{errors}\n"));
        }
        body.push_str(&format!(
            "\n{LABELED_HEADER}\n{}\n",
            exemplar_tagged(exemplar, spec.mode)
        ));
    }
    body.push_str(&format!(
        "\n### Example {}\n\nBHC:\n{}\n\nAVS:\n{}\n\nERROR:",
        spec.shots.len() + 1,
        doc.context,
        doc.summary
    ));
    vec![Message::system(SYSTEM_PROMPT), Message::user(body)]
}

/// Summarization prompt: instruction block, DOCUMENT/SUMMARY exemplars,
/// final DOCUMENT.
pub fn build_summarization_prompt(shots: &[(String, String)], doc: &DocumentPair) -> Vec<Message> {
    assert!(shots.len() <= 5, "at most 5 summarization shots");
    let mut body = String::from(
        "You will be given some doctor's notes and you will need to summarize the patient's \
         brief hospital course in one paragraph. Please only include key events and findings \
         and avoid using medical jargons, and you MUST start the summary with \"You were \
         admitted\". \nHere are some examples:\n",
    );
    for (document, summary) in shots {
        body.push_str(&format!("DOCUMENT: \n{document}\nSUMMARY: \n{summary}\n"));
    }
    body.push_str(&format!("DOCUMENT: {}", doc.context));
    vec![Message::system(SYSTEM_PROMPT), Message::user(body)]
}
