//! Span-level hallucination annotation toolkit for patient-facing
//! hospital-course summaries: annotation parsing and validation, inline
//! tag extraction with offset re-alignment, partial-match span scoring,
//! inter-annotator agreement, an entity-grounding detection baseline, an
//! LLM detector with record/replay, clinical-note preprocessing, and
//! summarization metrics.

pub mod agreement;
pub mod align;
pub mod entity;
pub mod eval;
pub mod llm;
pub mod metrics;
pub mod model;
pub mod prep;
pub mod report;
pub mod run;
pub mod standoff;
pub mod tagged;
