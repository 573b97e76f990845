//! Question answering for green-building design: EPW weather reasoning,
//! retrieval over a case and reference-text library, and a tool-calling
//! dialogue loop on top of a chat-completion model.

pub mod calendar;
pub mod epw;
pub mod analytics;
pub mod artifacts;
pub mod chart;
pub mod llm;
pub mod corpus;
pub mod retrieval;
pub mod session;
pub mod tools;
pub mod orchestrator;
pub mod demo;
