//! Mock models that answer from the gold data. Used for closed-loop tests
//! and the CLI's `oracle` gateway.

use std::collections::BTreeSet;

use super::dataset::{McqInstance, NeedleSpec};
use crate::annotator::strip_tags;
use crate::gateway::MockModel;

/// Finds the needle present in the (tag-stripped) prompt and names its first
/// gold answer. Questions repeat across needles, so the needle text is the
/// key. Prompts with no known needle get an empty answer.
pub fn needle_oracle(needles: &[NeedleSpec], tag_names: BTreeSet<String>) -> MockModel {
    let table: Vec<(String, String, String)> = needles
        .iter()
        .map(|n| (n.needle_text.clone(), n.question.clone(), n.gold_answers[0].clone()))
        .collect();
    MockModel::from_fn(move |req| {
        let user = strip_tags(&req.user, &tag_names);
        Ok(table
            .iter()
            .find(|(needle, q, _)| user.contains(needle.as_str()) && user.contains(q.as_str()))
            .map(|(_, _, a)| format!("The character is {a}."))
            .unwrap_or_default())
    })
}

/// Answers the letter of the question whose rendered text is in the prompt.
pub fn choice_oracle(questions: &[McqInstance]) -> MockModel {
    let table: Vec<(String, String)> = questions
        .iter()
        .map(|q| (q.render_question(), q.gold.to_string()))
        .collect();
    MockModel::from_fn(move |req| {
        Ok(table
            .iter()
            .find(|(q, _)| req.user.contains(q.as_str()))
            .map(|(_, g)| format!("Answer: {g}"))
            .unwrap_or_default())
    })
}
