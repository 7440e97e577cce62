//! Bipartite incidence graphs: sampling units on one side, study units on
//! the other, directed incidence edges between them.
//!
//! Graphs are immutable after construction and all operations are pure, so
//! values can be shared freely across threads.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque unit identifier. Ordering and equality are plain string order;
/// the *canonical* order of units is their declaration order in the graph.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UnitId(String);

impl UnitId {
    pub fn new(id: impl Into<String>) -> Self {
        UnitId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UnitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for UnitId {
    fn from(id: &str) -> Self {
        UnitId(id.to_string())
    }
}

impl From<String> for UnitId {
    fn from(id: String) -> Self {
        UnitId(id)
    }
}

/// Converts a slice of anything id-like into owned ids.
pub fn unit_ids<I, T>(ids: I) -> Vec<UnitId>
where
    I: IntoIterator<Item = T>,
    T: Into<UnitId>,
{
    ids.into_iter().map(Into::into).collect()
}

/// How much of the graph an estimator is allowed to consult, beyond the
/// realised sample graph. Levels are totally ordered: full graph knowledge
/// implies successor-ancestry knowledge, which implies ancestry knowledge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnowledgeLevel {
    /// Only the ancestor sets of the observed study units are known.
    Ancestry,
    /// Additionally, all successors of every known ancestor are known.
    SuccessorAncestry,
    /// The entire graph is known.
    Graph,
}

impl fmt::Display for KnowledgeLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            KnowledgeLevel::Ancestry => "ancestry",
            KnowledgeLevel::SuccessorAncestry => "successor-ancestry",
            KnowledgeLevel::Graph => "graph",
        };
        f.write_str(name)
    }
}

impl std::str::FromStr for KnowledgeLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ancestry" => Ok(KnowledgeLevel::Ancestry),
            "successor-ancestry" => Ok(KnowledgeLevel::SuccessorAncestry),
            "graph" => Ok(KnowledgeLevel::Graph),
            other => Err(Error::BadFixture(format!(
                "unknown knowledge level `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct GraphFile {
    sampling_units: Vec<UnitId>,
    study_units: Vec<UnitId>,
    edges: Vec<(UnitId, UnitId)>,
}

/// A bipartite simple digraph with edges pointing from sampling units to
/// study units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BipartiteGraph {
    sampling_units: Vec<UnitId>,
    study_units: Vec<UnitId>,
    edges: Vec<(usize, usize)>,
    successors_of: Vec<Vec<usize>>,
    ancestors_of: Vec<Vec<usize>>,
}

/// The realised part of the graph after drawing an initial sample: the
/// sample itself, its successors, and the edges emanating from it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleGraph {
    pub initial_sample: Vec<UnitId>,
    pub observed_units: Vec<UnitId>,
    pub observed_edges: Vec<(UnitId, UnitId)>,
}

impl BipartiteGraph {
    /// Validates and builds a graph. Both unit sides must be non-empty,
    /// identifier spaces disjoint, edges unique with known endpoints.
    pub fn new(
        sampling_units: Vec<UnitId>,
        study_units: Vec<UnitId>,
        edges: Vec<(UnitId, UnitId)>,
    ) -> Result<Self> {
        if sampling_units.is_empty() {
            return Err(Error::EmptySide("sampling units"));
        }
        if study_units.is_empty() {
            return Err(Error::EmptySide("study units"));
        }
        Self::build(sampling_units, study_units, edges)
    }

    /// Shared construction path; used by `remove_units`, which is allowed
    /// to leave the study side empty.
    fn build(
        sampling_units: Vec<UnitId>,
        study_units: Vec<UnitId>,
        edges: Vec<(UnitId, UnitId)>,
    ) -> Result<Self> {
        let mut sampling_index = BTreeMap::new();
        for (idx, unit) in sampling_units.iter().enumerate() {
            if sampling_index.insert(unit.clone(), idx).is_some() {
                return Err(Error::DuplicateUnit(unit.to_string()));
            }
        }
        let mut study_index = BTreeMap::new();
        for (idx, unit) in study_units.iter().enumerate() {
            if study_index.insert(unit.clone(), idx).is_some() {
                return Err(Error::DuplicateUnit(unit.to_string()));
            }
            if sampling_index.contains_key(unit) {
                return Err(Error::SharedIdentifier(unit.to_string()));
            }
        }

        let mut index_edges = Vec::with_capacity(edges.len());
        let mut seen = BTreeSet::new();
        for (from, to) in &edges {
            let i = *sampling_index
                .get(from)
                .ok_or_else(|| Error::UnknownSamplingUnit(from.to_string()))?;
            let k = *study_index
                .get(to)
                .ok_or_else(|| Error::UnknownStudyUnit(to.to_string()))?;
            if !seen.insert((i, k)) {
                return Err(Error::DuplicateEdge(from.to_string(), to.to_string()));
            }
            index_edges.push((i, k));
        }

        let mut successors_of = vec![Vec::new(); sampling_units.len()];
        let mut ancestors_of = vec![Vec::new(); study_units.len()];
        for &(i, k) in &index_edges {
            successors_of[i].push(k);
            ancestors_of[k].push(i);
        }
        for list in successors_of.iter_mut().chain(ancestors_of.iter_mut()) {
            list.sort_unstable();
        }

        Ok(BipartiteGraph {
            sampling_units,
            study_units,
            edges: index_edges,
            successors_of,
            ancestors_of,
        })
    }

    /// Parses the JSON fixture format
    /// `{"sampling_units": [...], "study_units": [...], "edges": [["i1","k1"], ...]}`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: GraphFile = serde_json::from_str(text)?;
        Self::new(file.sampling_units, file.study_units, file.edges)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "sampling_units": self.sampling_units,
            "study_units": self.study_units,
            "edges": self.edge_ids(),
        })
    }

    pub fn sampling_units(&self) -> &[UnitId] {
        &self.sampling_units
    }

    pub fn study_units(&self) -> &[UnitId] {
        &self.study_units
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edge_ids(&self) -> Vec<(UnitId, UnitId)> {
        self.edges
            .iter()
            .map(|&(i, k)| (self.sampling_units[i].clone(), self.study_units[k].clone()))
            .collect()
    }

    pub fn sampling_index(&self, unit: &UnitId) -> Result<usize> {
        self.sampling_units
            .iter()
            .position(|u| u == unit)
            .ok_or_else(|| Error::UnknownSamplingUnit(unit.to_string()))
    }

    pub fn study_index(&self, unit: &UnitId) -> Result<usize> {
        self.study_units
            .iter()
            .position(|u| u == unit)
            .ok_or_else(|| Error::UnknownStudyUnit(unit.to_string()))
    }

    pub fn has_edge(&self, i: usize, k: usize) -> bool {
        self.successors_of
            .get(i)
            .is_some_and(|list| list.binary_search(&k).is_ok())
    }

    /// Successor indices of a single sampling unit (its alpha set).
    pub fn successor_indices_of(&self, i: usize) -> &[usize] {
        &self.successors_of[i]
    }

    /// Ancestor indices of a single study unit (its beta set).
    pub fn ancestor_indices_of(&self, k: usize) -> &[usize] {
        &self.ancestors_of[k]
    }

    /// Successor index set of a set of sampling-unit indices.
    pub fn successor_set(&self, sample: &BTreeSet<usize>) -> BTreeSet<usize> {
        sample
            .iter()
            .flat_map(|&i| self.successors_of[i].iter().copied())
            .collect()
    }

    /// Ancestor index set of a set of study-unit indices.
    pub fn ancestor_set(&self, targets: &BTreeSet<usize>) -> BTreeSet<usize> {
        targets
            .iter()
            .flat_map(|&k| self.ancestors_of[k].iter().copied())
            .collect()
    }

    fn sample_index_set(&self, sample: &[UnitId]) -> Result<BTreeSet<usize>> {
        sample.iter().map(|u| self.sampling_index(u)).collect()
    }

    fn study_index_set(&self, targets: &[UnitId]) -> Result<BTreeSet<usize>> {
        targets.iter().map(|u| self.study_index(u)).collect()
    }

    /// All study units reachable from `sample`, in declared study order.
    pub fn successors(&self, sample: &[UnitId]) -> Result<Vec<UnitId>> {
        let set = self.successor_set(&self.sample_index_set(sample)?);
        Ok(set
            .into_iter()
            .map(|k| self.study_units[k].clone())
            .collect())
    }

    /// All sampling units pointing into `targets`, in declared sampling order.
    pub fn ancestors(&self, targets: &[UnitId]) -> Result<Vec<UnitId>> {
        let set = self.ancestor_set(&self.study_index_set(targets)?);
        Ok(set
            .into_iter()
            .map(|i| self.sampling_units[i].clone())
            .collect())
    }

    /// Realises the incident observation procedure for an initial sample.
    pub fn sample_graph(&self, initial_sample: &[UnitId]) -> Result<SampleGraph> {
        let sample = self.sample_index_set(initial_sample)?;
        let observed = self.successor_set(&sample);
        let observed_edges = self
            .edges
            .iter()
            .filter(|(i, _)| sample.contains(i))
            .map(|&(i, k)| (self.sampling_units[i].clone(), self.study_units[k].clone()))
            .collect();
        Ok(SampleGraph {
            initial_sample: sample
                .iter()
                .map(|&i| self.sampling_units[i].clone())
                .collect(),
            observed_units: observed
                .iter()
                .map(|&k| self.study_units[k].clone())
                .collect(),
            observed_edges,
        })
    }

    /// The graph with the given study units deleted, along with every edge
    /// ending in them. The sampling side is unchanged. Removing all study
    /// units is legal; every estimator evaluates to zero on the result.
    pub fn remove_units(&self, removed: &[UnitId]) -> Result<Self> {
        let removed = self.study_index_set(removed)?;
        let study_units: Vec<UnitId> = self
            .study_units
            .iter()
            .enumerate()
            .filter(|(k, _)| !removed.contains(k))
            .map(|(_, u)| u.clone())
            .collect();
        let edges = self
            .edges
            .iter()
            .filter(|(_, k)| !removed.contains(k))
            .map(|&(i, k)| (self.sampling_units[i].clone(), self.study_units[k].clone()))
            .collect();
        Self::build(self.sampling_units.clone(), study_units, edges)
    }

    /// Adds a fresh study unit connected to `target` by a single edge.
    pub fn extend_elemental(&self, target: &UnitId, new_id: UnitId) -> Result<Self> {
        self.sampling_index(target)?;
        if self.study_units.contains(&new_id) || self.sampling_units.contains(&new_id) {
            return Err(Error::DuplicateUnit(new_id.to_string()));
        }
        let mut study_units = self.study_units.clone();
        study_units.push(new_id.clone());
        let mut edges = self.edge_ids();
        edges.push((target.clone(), new_id));
        Self::build(self.sampling_units.clone(), study_units, edges)
    }

    /// An elemental graph over the given sampling units: a single study
    /// unit reached by a single edge from `target`.
    pub fn elemental(
        sampling_units: Vec<UnitId>,
        target: &UnitId,
        study_unit: UnitId,
    ) -> Result<Self> {
        let edge = (target.clone(), study_unit.clone());
        Self::new(sampling_units, vec![study_unit], vec![edge])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn ids(list: &[&str]) -> Vec<UnitId> {
        unit_ids(list.iter().copied())
    }

    #[test]
    fn successors_on_fig1() {
        let g = fixtures::fig1();
        assert_eq!(
            g.successors(&ids(&["i1", "i4"])).unwrap(),
            ids(&["k1", "k4"])
        );
        assert_eq!(g.successors(&[]).unwrap(), Vec::<UnitId>::new());
        assert_eq!(g.successors(&ids(&["i5"])).unwrap(), Vec::<UnitId>::new());
    }

    #[test]
    fn ancestors_on_fig1_and_fig3() {
        let g = fixtures::fig1();
        assert_eq!(g.ancestors(&ids(&["k1"])).unwrap(), ids(&["i1", "i4"]));
        assert_eq!(g.ancestors(&[]).unwrap(), Vec::<UnitId>::new());
        let b = fixtures::fig3();
        assert_eq!(g.ancestors(&ids(&["k5"])).unwrap(), Vec::<UnitId>::new());
        assert_eq!(
            b.ancestors(&ids(&["k2"])).unwrap(),
            ids(&["i1", "i2", "i3"])
        );
    }

    #[test]
    fn sample_graph_on_fig1() {
        let g = fixtures::fig1();
        let s = g.sample_graph(&ids(&["i1", "i4"])).unwrap();
        assert_eq!(s.observed_units, ids(&["k1", "k4"]));
        assert_eq!(
            s.observed_edges,
            vec![
                ("i1".into(), "k1".into()),
                ("i4".into(), "k1".into()),
                ("i4".into(), "k4".into()),
            ]
        );

        let empty = g.sample_graph(&[]).unwrap();
        assert!(empty.initial_sample.is_empty());
        assert!(empty.observed_units.is_empty());
        assert!(empty.observed_edges.is_empty());
    }

    #[test]
    fn sample_graph_on_elemental() {
        let g =
            BipartiteGraph::elemental(ids(&["i1", "i2", "i3"]), &"i3".into(), "k".into()).unwrap();
        let s = g.sample_graph(&ids(&["i1", "i3"])).unwrap();
        assert_eq!(s.observed_edges, vec![("i3".into(), "k".into())]);
    }

    #[test]
    fn remove_units_drops_columns() {
        let b = fixtures::fig3();
        let reduced = b.remove_units(&ids(&["k1"])).unwrap();
        assert_eq!(reduced.study_units(), &ids(&["k2"]));
        assert_eq!(reduced.edge_count(), 3);
        assert_eq!(
            reduced.ancestors(&ids(&["k2"])).unwrap(),
            ids(&["i1", "i2", "i3"])
        );

        assert_eq!(b.remove_units(&[]).unwrap(), b);

        let g = fixtures::fig1();
        let all: Vec<UnitId> = g.study_units().to_vec();
        let empty = g.remove_units(&all).unwrap();
        assert!(empty.study_units().is_empty());
        assert_eq!(empty.sampling_units(), g.sampling_units());
        assert_eq!(empty.edge_count(), 0);
    }

    #[test]
    fn remove_units_preserves_other_ancestors() {
        let g = fixtures::fig1();
        let reduced = g.remove_units(&ids(&["k2"])).unwrap();
        for k in reduced.study_units() {
            let k = std::slice::from_ref(k);
            assert_eq!(reduced.ancestors(k).unwrap(), g.ancestors(k).unwrap());
        }
    }

    #[test]
    fn extend_elemental_adds_one_pendant_unit() {
        // two study units fully sharing ancestors except i2
        let b = BipartiteGraph::new(
            ids(&["i1", "i2", "i3"]),
            ids(&["k1", "k2"]),
            vec![
                ("i1".into(), "k1".into()),
                ("i2".into(), "k1".into()),
                ("i3".into(), "k1".into()),
                ("i1".into(), "k2".into()),
                ("i3".into(), "k2".into()),
            ],
        )
        .unwrap();
        let extended = b.extend_elemental(&"i3".into(), "kstar".into()).unwrap();
        assert_eq!(extended.study_units(), &ids(&["k1", "k2", "kstar"]));
        assert_eq!(extended.ancestors(&ids(&["kstar"])).unwrap(), ids(&["i3"]));
        let mut expected_edges = b.edge_ids();
        expected_edges.push(("i3".into(), "kstar".into()));
        assert_eq!(extended.edge_ids(), expected_edges);
    }

    #[test]
    fn extend_elemental_round_trip() {
        let b = fixtures::fig3();
        let extended = b.extend_elemental(&"i3".into(), "kstar".into()).unwrap();
        assert_eq!(extended.study_units().len(), b.study_units().len() + 1);
        assert_eq!(extended.edge_count(), b.edge_count() + 1);

        let twice = extended
            .extend_elemental(&"i1".into(), "kstar2".into())
            .unwrap();
        assert_eq!(twice.study_units().len(), b.study_units().len() + 2);
        assert_eq!(twice.edge_count(), b.edge_count() + 2);

        let back = extended.remove_units(&ids(&["kstar"])).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(
            BipartiteGraph::new(vec![], ids(&["k1"]), vec![]),
            Err(Error::EmptySide(_))
        ));
        assert!(matches!(
            BipartiteGraph::new(ids(&["i1", "i1"]), ids(&["k1"]), vec![]),
            Err(Error::DuplicateUnit(_))
        ));
        assert!(matches!(
            BipartiteGraph::new(ids(&["i1"]), ids(&["i1"]), vec![]),
            Err(Error::SharedIdentifier(_))
        ));
        assert!(matches!(
            BipartiteGraph::new(
                ids(&["i1"]),
                ids(&["k1"]),
                vec![("i1".into(), "k1".into()), ("i1".into(), "k1".into())]
            ),
            Err(Error::DuplicateEdge(..))
        ));
        assert!(matches!(
            BipartiteGraph::new(ids(&["i1"]), ids(&["k1"]), vec![("i2".into(), "k1".into())]),
            Err(Error::UnknownSamplingUnit(_))
        ));
        let g = fixtures::fig3();
        assert!(g.successors(&ids(&["nope"])).is_err());
        assert!(g.ancestors(&ids(&["nope"])).is_err());
        assert!(g.extend_elemental(&"i1".into(), "k1".into()).is_err());
    }

    #[test]
    fn knowledge_levels_are_ordered() {
        assert!(KnowledgeLevel::Graph > KnowledgeLevel::SuccessorAncestry);
        assert!(KnowledgeLevel::SuccessorAncestry > KnowledgeLevel::Ancestry);
        assert_eq!(
            "successor-ancestry".parse::<KnowledgeLevel>().unwrap(),
            KnowledgeLevel::SuccessorAncestry
        );
    }

    #[test]
    fn fixture_json_round_trip() {
        let g = fixtures::fig1();
        let text = g.to_json_value().to_string();
        assert_eq!(BipartiteGraph::from_json_str(&text).unwrap(), g);
    }
}
