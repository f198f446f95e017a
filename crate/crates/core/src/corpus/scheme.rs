use std::collections::BTreeMap;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;

use super::Corpus;
use crate::error::{Error, Result};
use crate::seed;

/// Assignment of every annotator to exactly one group of one attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupScheme {
    attribute: String,
    groups: Vec<String>,
    assignment: BTreeMap<String, usize>,
}

impl GroupScheme {
    pub fn new(
        attribute: impl Into<String>,
        groups: Vec<String>,
        assignment: BTreeMap<String, usize>,
    ) -> Result<Self> {
        if groups.is_empty() {
            return Err(Error::input("group scheme needs at least one group"));
        }
        if let Some((a, g)) = assignment.iter().find(|(_, &g)| g >= groups.len()) {
            return Err(Error::input(format!(
                "annotator `{a}` assigned to group {g} of {}",
                groups.len()
            )));
        }
        Ok(Self {
            attribute: attribute.into(),
            groups,
            assignment,
        })
    }

    pub fn attribute(&self) -> &str {
        &self.attribute
    }

    pub fn groups(&self) -> &[String] {
        &self.groups
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn assignment(&self) -> &BTreeMap<String, usize> {
        &self.assignment
    }

    pub fn group_of(&self, annotator: &str) -> Option<usize> {
        self.assignment.get(annotator).copied()
    }

    pub fn group_name(&self, group: usize) -> &str {
        &self.groups[group]
    }

    pub fn group_index(&self, name: &str) -> Option<usize> {
        self.groups.iter().position(|g| g == name)
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.groups.len()];
        for &g in self.assignment.values() {
            sizes[g] += 1;
        }
        sizes
    }

    /// Writes `annotator_id,group` rows, one per annotator in id order.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["annotator_id", "group"])?;
        for (a, &g) in &self.assignment {
            w.write_record([a.as_str(), self.groups[g].as_str()])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Reads a file written by [`GroupScheme::write_csv`]; groups are the
    /// distinct names in sorted order.
    pub fn read_csv(attribute: &str, path: &Path) -> Result<Self> {
        let mut rdr = csv::Reader::from_path(path)?;
        let mut rows = Vec::new();
        for row in rdr.records() {
            let row = row?;
            rows.push((row[0].to_string(), row[1].to_string()));
        }
        let mut groups: Vec<String> = rows.iter().map(|(_, g)| g.clone()).collect();
        groups.sort();
        groups.dedup();
        let mut assignment = BTreeMap::new();
        for (a, g) in rows {
            let idx = groups.binary_search(&g).expect("group collected above");
            if assignment.insert(a.clone(), idx).is_some() {
                return Err(Error::data(format!("annotator `{a}` listed twice")));
            }
        }
        GroupScheme::new(attribute, groups, assignment)
    }
}

/// One group per category observed for `attribute` (sorted by name),
/// residual categories included.
pub fn build_group_scheme(corpus: &Corpus, attribute: &str) -> Result<GroupScheme> {
    if !corpus.attributes().iter().any(|a| a == attribute) {
        return Err(Error::input(format!("unknown attribute `{attribute}`")));
    }
    let mut groups: Vec<String> = corpus
        .annotators()
        .values()
        .map(|p| p.attributes[attribute].clone())
        .collect();
    groups.sort();
    groups.dedup();
    let assignment = corpus
        .annotators()
        .values()
        .map(|p| {
            let g = groups
                .binary_search(&p.attributes[attribute])
                .expect("category collected above");
            (p.id.clone(), g)
        })
        .collect();
    GroupScheme::new(attribute, groups, assignment)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ShuffleMode {
    /// Random permutation of the assignment multiset; sizes are preserved exactly.
    #[default]
    Permutation,
    /// Independent draws with probabilities proportional to the original sizes.
    Multinomial,
}

impl std::str::FromStr for ShuffleMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "permutation" => Ok(ShuffleMode::Permutation),
            "multinomial" => Ok(ShuffleMode::Multinomial),
            _ => Err(Error::config(format!("unknown shuffle mode `{s}`"))),
        }
    }
}

/// Randomly reassigns annotators to groups, keeping the group list.
pub fn shuffle_group_scheme(scheme: &GroupScheme, seed: u64, mode: ShuffleMode) -> GroupScheme {
    let mut rng = seed::rng(seed);
    let ids: Vec<&String> = scheme.assignment.keys().collect();
    let labels: Vec<usize> = match mode {
        ShuffleMode::Permutation => {
            let mut labels: Vec<usize> = scheme.assignment.values().copied().collect();
            labels.shuffle(&mut rng);
            labels
        }
        ShuffleMode::Multinomial => {
            let sizes = scheme.sizes();
            match WeightedIndex::new(&sizes) {
                Ok(dist) => ids.iter().map(|_| dist.sample(&mut rng)).collect(),
                // No annotators at all: nothing to reassign.
                Err(_) => Vec::new(),
            }
        }
    };
    let assignment = ids.into_iter().cloned().zip(labels).collect();
    GroupScheme {
        attribute: scheme.attribute.clone(),
        groups: scheme.groups.clone(),
        assignment,
    }
}
