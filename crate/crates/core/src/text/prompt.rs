//! Few-shot prompt assembly from curated exemplar sets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SOURCE_PARSE_JSON: &str = include_str!("exemplars/source_parse.json");
const KNOWLEDGE_PARSE_JSON: &str = include_str!("exemplars/knowledge_parse.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    SourceParse,
    KnowledgeParse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exemplar {
    pub input: String,
    pub output: String,
}

/// The on-disk exemplar file format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarSet {
    pub task: Task,
    pub version: u32,
    pub instruction_origin: String,
    pub instruction: String,
    pub exemplars: Vec<Exemplar>,
}

impl ExemplarSet {
    pub fn builtin(task: Task) -> Self {
        let raw = match task {
            Task::SourceParse => SOURCE_PARSE_JSON,
            Task::KnowledgeParse => KNOWLEDGE_PARSE_JSON,
        };
        serde_json::from_str(raw).expect("bundled exemplar file is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        if set.exemplars.is_empty() {
            return Err(Error::invalid("exemplar set is empty"));
        }
        Ok(set)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotPrompt {
    pub task: Task,
    pub instruction: String,
    pub exemplars: Vec<Exemplar>,
    pub k: usize,
    pub query: String,
}

impl FewShotPrompt {
    pub fn with_query(mut self, query: impl Into<String>) -> Self {
        self.query = query.into();
        self
    }
}

/// The first `k` curated exemplars for a task, with an empty query.
pub fn build_fewshot_prompt(task: Task, k: usize) -> Result<FewShotPrompt> {
    build_fewshot_prompt_from(&ExemplarSet::builtin(task), k)
}

pub fn build_fewshot_prompt_from(set: &ExemplarSet, k: usize) -> Result<FewShotPrompt> {
    if k == 0 || k > set.exemplars.len() {
        return Err(Error::invalid(format!(
            "k = {k} is outside 1..={} for the {:?} exemplars",
            set.exemplars.len(),
            set.task
        )));
    }
    Ok(FewShotPrompt {
        task: set.task,
        instruction: set.instruction.clone(),
        exemplars: set.exemplars[..k].to_vec(),
        k,
        query: String::new(),
    })
}

pub fn max_shots(task: Task) -> usize {
    ExemplarSet::builtin(task).exemplars.len()
}
