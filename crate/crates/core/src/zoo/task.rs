use serde::{Deserialize, Serialize};

use super::model::ModelRecord;
use crate::error::{Error, Result};
use crate::numerics::Rng;

/// A meta-learning task: `n` meta-train models and one held-out meta-test
/// model, as indices into the repository.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSplit {
    pub train: Vec<usize>,
    pub test: usize,
}

impl TaskSplit {
    pub fn n(&self) -> usize {
        self.train.len()
    }

    pub fn train_models<'a>(&self, repo: &'a [ModelRecord]) -> Vec<&'a ModelRecord> {
        self.train.iter().map(|&i| &repo[i]).collect()
    }

    pub fn test_model<'a>(&self, repo: &'a [ModelRecord]) -> &'a ModelRecord {
        &repo[self.test]
    }
}

/// Draws `n + 1` distinct models uniformly; the first `n` drawn train, the
/// last drawn tests.
pub fn sample_task(repo_size: usize, n: usize, rng: &mut Rng) -> Result<TaskSplit> {
    if n == 0 {
        return Err(Error::config("ensemble size n must be at least 1"));
    }
    if repo_size < n + 1 {
        return Err(Error::config(format!(
            "repository of {repo_size} models cannot supply n+1 = {} distinct models",
            n + 1
        )));
    }
    let mut picks = rng.sample_distinct(repo_size, n + 1);
    let test = picks.pop().expect("n+1 >= 2 picks");
    Ok(TaskSplit { train: picks, test })
}
