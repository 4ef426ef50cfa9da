//! Frozen prompt text. Any change here changes token counts and distances,
//! so it is versioned through [`PROMPT_FORMAT_VERSION`].

use crate::encoding::Encoding;
use crate::graph::{NodeId, QuestionTemplate};

pub const PROMPT_FORMAT_VERSION: &str = "prompt-v1";

pub const SYSTEM_PROMPT: &str = "You are a careful assistant that answers questions about graphs.";

/// Separator between the system text and the user text when the prompt is
/// measured as a single string.
pub const MESSAGE_SEPARATOR: &str = "\n\n";

/// Assembles the user message around a graph section and returns it with the
/// byte offset at which the graph section starts.
pub fn user_message(encoding: Encoding, graph_section: &str, question: &str, instructions: &str) -> (String, usize) {
    let mut text = String::with_capacity(graph_section.len() + 512);
    text.push_str(encoding.description());
    text.push('\n');
    let offset = text.len();
    text.push_str(graph_section);
    text.push_str("\n\nQuestion: ");
    text.push_str(question);
    text.push('\n');
    text.push_str(instructions);
    (text, offset)
}

pub fn edge_existence_question(a: NodeId, b: NodeId) -> String {
    format!("Are node {a} and node {b} directly connected?")
}

pub const YES_NO_INSTRUCTIONS: &str = "Answer with yes or no.";

pub fn common_connection_question(a: NodeId, b: NodeId) -> String {
    format!("What is the number of common connections between node {a} and node {b}?")
}

pub const INTEGER_INSTRUCTIONS: &str = "Answer with a single integer.";

/// The two similarity phrasings, with `i`/`k` the targets and `j` the source.
pub fn similarity_question(template: QuestionTemplate, i: NodeId, j: NodeId, k: NodeId) -> String {
    match template {
        QuestionTemplate::GreaterJkOverIj => format!(
            "Is the number of common connections between node {j} and node {k} greater than the number of common connections between node {i} and node {j}?"
        ),
        QuestionTemplate::GreaterIjOverJk => format!(
            "Is the number of common connections between node {i} and node {j} greater than the number of common connections between node {j} and node {k}?"
        ),
    }
}

/// Chain-of-thought block: the (target1, source) count first, then the
/// (source, target2) count, then the comparison and a fixed final line.
pub fn similarity_instructions(i: NodeId, j: NodeId, k: NodeId) -> String {
    format!(
        "Solve the problem step by step.\n\
         Step 1: Find the common connections between node {i} and node {j}, then write \"Common connections between node {i} and node {j}: <count>\".\n\
         Step 2: Find the common connections between node {j} and node {k}, then write \"Common connections between node {j} and node {k}: <count>\".\n\
         Step 3: Compare the two counts to answer the question.\n\
         End your response with a single line \"Final answer: yes\" or \"Final answer: no\"."
    )
}

/// Marker the similarity CoT response must end with.
pub const FINAL_ANSWER_MARKER: &str = "Final answer:";

/// The line format the CoT asks for when stating a subcount.
pub fn subcount_line(a: NodeId, b: NodeId, count: usize) -> String {
    format!("Common connections between node {a} and node {b}: {count}")
}
