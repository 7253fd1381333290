use crate::error::{invalid, Result};
use crate::gradcore::{Rng, Tensor};

/// Reservoir sample (algorithm R) of `budget` positions from a stream of
/// length `n`, returned in ascending order.
pub fn reservoir_indices(n: usize, budget: usize, rng: &mut Rng) -> Vec<usize> {
    let mut kept: Vec<usize> = (0..n.min(budget)).collect();
    for i in budget..n {
        let j = rng.below(i + 1);
        if j < budget {
            kept[j] = i;
        }
    }
    kept.sort_unstable();
    kept
}

/// Samples kept from one finished task.
#[derive(Clone, Debug, PartialEq)]
pub struct Memory {
    pub task: usize,
    pub x: Tensor,
    pub labels: Vec<usize>,
    /// Logits of the model right after the task, when stored.
    pub logits: Option<Tensor>,
}

/// Per-task reservoir memory with a fixed budget per task.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Buffer {
    pub budget: usize,
    pub memories: Vec<Memory>,
}

impl Buffer {
    pub fn new(budget: usize) -> Self {
        Buffer {
            budget,
            memories: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.memories.iter().map(|m| m.labels.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores a reservoir sample of task `task`'s data.
    pub fn add_task(
        &mut self,
        task: usize,
        x: &Tensor,
        labels: &[usize],
        logits: Option<&Tensor>,
        rng: &mut Rng,
    ) -> Result<()> {
        if self.budget == 0 {
            return Err(invalid("memory budget is 0"));
        }
        if x.rows() != labels.len() {
            return Err(invalid("samples and labels differ in length"));
        }
        let idx = reservoir_indices(labels.len(), self.budget, rng);
        self.memories.push(Memory {
            task,
            x: x.select_rows(&idx)?,
            labels: idx.iter().map(|&i| labels[i]).collect(),
            logits: logits.map(|l| l.select_rows(&idx)).transpose()?,
        });
        Ok(())
    }

    /// All stored inputs, labels and (if every task kept them) logits.
    pub fn concat(&self) -> Result<Option<(Tensor, Vec<usize>, Option<Tensor>)>> {
        if self.memories.is_empty() {
            return Ok(None);
        }
        let x = Tensor::stack_rows(
            &self
                .memories
                .iter()
                .map(|m| m.x.clone())
                .collect::<Vec<_>>(),
        )?;
        let labels = self
            .memories
            .iter()
            .flat_map(|m| m.labels.clone())
            .collect();
        let logits = self
            .memories
            .iter()
            .map(|m| m.logits.clone())
            .collect::<Option<Vec<_>>>()
            .map(|l| Tensor::stack_rows(&l))
            .transpose()?;
        Ok(Some((x, labels, logits)))
    }
}
