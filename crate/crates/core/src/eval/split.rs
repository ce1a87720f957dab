use std::collections::BTreeMap;
use std::fmt::Display;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    fn from_test(n: usize, mut test: Vec<usize>) -> Self {
        test.sort_unstable();
        let mut in_test = vec![false; n];
        for &i in &test {
            in_test[i] = true;
        }
        let train = (0..n).filter(|&i| !in_test[i]).collect();
        Self { train, test }
    }
}

/// `k * repeats` folds, repeat-major. Within a repeat every class is
/// shuffled and dealt round-robin across folds, continuing the deal from
/// one class to the next so fold sizes differ by at most one.
pub fn stratified_kfold_split<L: Ord + Clone + Display>(
    labels: &[L],
    k: usize,
    repeats: usize,
    seed: u64,
) -> Result<Vec<Split>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if repeats == 0 {
        return Err(Error::Config("repeats must be at least 1".into()));
    }
    let mut by_class: BTreeMap<&L, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    if let Some((class, members)) = by_class.iter().find(|(_, m)| m.len() < k) {
        return Err(Error::InvalidArgument(format!(
            "class {class} has {} members, fewer than k = {k}",
            members.len()
        )));
    }

    let mut out = Vec::with_capacity(k * repeats);
    for repeat in 0..repeats {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(repeat as u64);
        let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
        let mut slot = 0;
        for members in by_class.values() {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            for i in shuffled {
                tests[slot % k].push(i);
                slot += 1;
            }
        }
        out.extend(tests.into_iter().map(|t| Split::from_test(labels.len(), t)));
    }
    Ok(out)
}

/// One fold per distinct group value, in ascending group order.
pub fn logo_split<G: Ord + Clone>(groups: &[G]) -> Result<Vec<(G, Split)>> {
    let mut by_group: BTreeMap<&G, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_group.entry(g).or_default().push(i);
    }
    if by_group.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "leave-one-group-out needs at least 2 groups, found {}",
            by_group.len()
        )));
    }
    Ok(by_group
        .into_iter()
        .map(|(g, test)| (g.clone(), Split::from_test(groups.len(), test)))
        .collect())
}
