//! Stratified 8:1:1 dataset splits.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::netbuild::WeightedGraph;
use crate::rng::{stream_rng, Stream};

/// Index sets into the dataset, disjoint and exhaustive.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    pub fn total(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }
}

/// Stratified split with ratios 8:1:1. Every class contributes at least one
/// instance to each part, which is why classes below 3 members are rejected.
pub fn split(dataset: &[WeightedGraph], seed: u64) -> Result<Splits> {
    if dataset.len() < 10 {
        return Err(Error::invalid(format!(
            "split needs at least 10 instances, got {}",
            dataset.len()
        )));
    }
    let num_classes = dataset.iter().map(|g| g.label).max().unwrap_or(0) + 1;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); num_classes];
    for (i, g) in dataset.iter().enumerate() {
        by_class[g.label].push(i);
    }
    let mut rng = stream_rng(seed, Stream::Split);
    let mut out = Splits {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for members in by_class.iter_mut() {
        if members.len() < 3 {
            return Err(Error::invalid(format!(
                "cannot stratify: a class has only {} members",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        let tenth = ((members.len() as f64) / 10.0).round() as usize;
        let n_val = tenth.max(1);
        let n_test = tenth.max(1);
        let (val_part, rest) = members.split_at(n_val);
        let (test_part, train_part) = rest.split_at(n_test);
        out.val.extend_from_slice(val_part);
        out.test.extend_from_slice(test_part);
        out.train.extend_from_slice(train_part);
    }
    out.train.sort_unstable();
    out.val.sort_unstable();
    out.test.sort_unstable();
    Ok(out)
}
