//! Arm-level data model for binary-outcome networks.
//!
//! A [`Network`] is built once from raw [`ArmRecord`]s and is immutable
//! afterwards. Studies and treatments are indexed in lexicographic label
//! order so that every downstream matrix has a reproducible layout.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One treatment arm of one study.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmRecord {
    pub study: String,
    pub treatment: String,
    pub events: u64,
    pub sample_size: u64,
}

impl ArmRecord {
    pub fn new(
        study: impl Into<String>,
        treatment: impl Into<String>,
        events: u64,
        sample_size: u64,
    ) -> Self {
        Self {
            study: study.into(),
            treatment: treatment.into(),
            events,
            sample_size,
        }
    }
}

/// An arm inside a validated network; `treatment` indexes [`Network::treatments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Arm {
    pub treatment: usize,
    pub events: u64,
    pub sample_size: u64,
}

impl Arm {
    pub fn non_events(&self) -> u64 {
        self.sample_size - self.events
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Study {
    pub label: String,
    /// Sorted by treatment index.
    pub arms: Vec<Arm>,
}

impl Study {
    pub fn is_all_zero(&self) -> bool {
        self.arms.iter().all(|a| a.events == 0)
    }

    /// True when any arm has no events or no non-events.
    pub fn has_zero_cell(&self) -> bool {
        self.arms
            .iter()
            .any(|a| a.events == 0 || a.events == a.sample_size)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Network {
    studies: Vec<Study>,
    treatments: Vec<String>,
    reference: usize,
}

impl Network {
    /// Validate raw records and build the network.
    ///
    /// The reference defaults to the lexicographically smallest treatment label.
    pub fn validate(records: &[ArmRecord], reference: Option<&str>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::EmptyInput);
        }
        for r in records {
            if r.sample_size < 1 || r.events > r.sample_size {
                return Err(Error::CountOutOfRange {
                    study: r.study.clone(),
                    treatment: r.treatment.clone(),
                    events: r.events,
                    sample_size: r.sample_size,
                });
            }
        }

        let treatments: Vec<String> = records
            .iter()
            .map(|r| r.treatment.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let index_of: BTreeMap<&str, usize> = treatments
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect();

        let mut grouped: BTreeMap<&str, Vec<Arm>> = BTreeMap::new();
        for r in records {
            let arms = grouped.entry(r.study.as_str()).or_default();
            let treatment = index_of[r.treatment.as_str()];
            if arms.iter().any(|a| a.treatment == treatment) {
                return Err(Error::DuplicateArm {
                    study: r.study.clone(),
                    treatment: r.treatment.clone(),
                });
            }
            arms.push(Arm {
                treatment,
                events: r.events,
                sample_size: r.sample_size,
            });
        }

        let mut studies = Vec::with_capacity(grouped.len());
        for (label, mut arms) in grouped {
            if arms.len() < 2 {
                return Err(Error::SingleArmStudy {
                    study: label.to_string(),
                });
            }
            arms.sort_by_key(|a| a.treatment);
            studies.push(Study {
                label: label.to_string(),
                arms,
            });
        }

        let reference = match reference {
            None => 0,
            Some(label) => *index_of
                .get(label)
                .ok_or_else(|| Error::UnknownReference(label.to_string()))?,
        };

        Ok(Self {
            studies,
            treatments,
            reference,
        })
    }

    /// Flatten back to records in canonical (study, treatment) order.
    pub fn records(&self) -> Vec<ArmRecord> {
        self.studies
            .iter()
            .flat_map(|s| {
                s.arms.iter().map(move |a| {
                    ArmRecord::new(
                        s.label.clone(),
                        self.treatments[a.treatment].clone(),
                        a.events,
                        a.sample_size,
                    )
                })
            })
            .collect()
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    pub fn treatments(&self) -> &[String] {
        &self.treatments
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn reference_label(&self) -> &str {
        &self.treatments[self.reference]
    }

    pub fn n_studies(&self) -> usize {
        self.studies.len()
    }

    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }

    /// Σᵢ Aᵢ.
    pub fn arm_total(&self) -> usize {
        self.studies.iter().map(|s| s.arms.len()).sum()
    }

    pub fn treatment_index(&self, label: &str) -> Result<usize> {
        self.treatments
            .iter()
            .position(|t| t == label)
            .ok_or_else(|| Error::UnknownTreatment(label.to_string()))
    }

    /// Iterate arms in canonical order as `(study_index, arm)`.
    pub fn arms(&self) -> impl Iterator<Item = (usize, &Arm)> + '_ {
        self.studies
            .iter()
            .enumerate()
            .flat_map(|(i, s)| s.arms.iter().map(move |a| (i, a)))
    }

    /// Same data with a different reference treatment.
    pub fn with_reference(&self, label: &str) -> Result<Self> {
        let reference = self
            .treatments
            .iter()
            .position(|t| t == label)
            .ok_or_else(|| Error::UnknownReference(label.to_string()))?;
        Ok(Self {
            reference,
            ..self.clone()
        })
    }

    /// Labels of studies whose every arm has zero events.
    pub fn all_zero_studies(&self) -> BTreeSet<String> {
        self.studies
            .iter()
            .filter(|s| s.is_all_zero())
            .map(|s| s.label.clone())
            .collect()
    }

    pub fn count_all_zero_studies(&self) -> usize {
        self.studies.iter().filter(|s| s.is_all_zero()).count()
    }

    /// Connected components of the treatment graph, each sorted by treatment
    /// index and ordered by their smallest member. Treatments evaluated only in
    /// dropped studies appear as singletons.
    pub fn connectivity(&self, drop_all_zero: bool) -> Vec<Vec<String>> {
        self.component_indices(drop_all_zero)
            .into_iter()
            .map(|c| c.into_iter().map(|t| self.treatments[t].clone()).collect())
            .collect()
    }

    pub fn is_connected(&self) -> bool {
        self.component_indices(false).len() == 1
    }

    fn component_indices(&self, drop_all_zero: bool) -> Vec<Vec<usize>> {
        components(
            self.n_treatments(),
            self.studies
                .iter()
                .filter(|s| !(drop_all_zero && s.is_all_zero()))
                .map(|s| s.arms.iter().map(|a| a.treatment).collect()),
        )
    }

    /// Network without its all-zero-event studies, keeping the treatment set
    /// and reference. Fails when the exclusion disconnects the network.
    pub fn drop_all_zero_studies(&self) -> Result<Self> {
        let comps = self.component_indices(true);
        if comps.len() > 1 {
            return Err(Error::DisconnectedAfterExclusion {
                components: comps.len(),
            });
        }
        Ok(Self {
            studies: self
                .studies
                .iter()
                .filter(|s| !s.is_all_zero())
                .cloned()
                .collect(),
            treatments: self.treatments.clone(),
            reference: self.reference,
        })
    }

    /// Number of arms with zero events and number with events equal to n.
    pub fn zero_cell_counts(&self) -> (usize, usize) {
        let zero = self.arms().filter(|(_, a)| a.events == 0).count();
        let full = self
            .arms()
            .filter(|(_, a)| a.events == a.sample_size)
            .count();
        (zero, full)
    }
}

/// Connected components over `n` treatments where each group links all of its
/// members. Components are sorted internally and by smallest member.
pub(crate) fn components(n: usize, groups: impl Iterator<Item = Vec<usize>>) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for group in groups {
        let Some((&first, rest)) = group.split_first() else {
            continue;
        };
        for &t in rest {
            let (a, b) = (find(&mut parent, first), find(&mut parent, t));
            if a != b {
                parent[a.max(b)] = a.min(b);
            }
        }
    }
    let mut grouped: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        grouped.entry(root).or_default().push(i);
    }
    let mut comps: Vec<Vec<usize>> = grouped.into_values().collect();
    comps.sort_by_key(|c| c[0]);
    comps
}
