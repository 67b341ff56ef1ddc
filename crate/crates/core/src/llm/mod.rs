//! LLM-backed detection and summarization: prompt construction, an
//! OpenAI-compatible client with record/replay, and response
//! post-processing into annotation sets.

pub mod client;
pub mod detect;
pub mod prompts;
