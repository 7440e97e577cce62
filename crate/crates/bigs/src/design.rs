//! Initial sampling designs: finite-support probability distributions over
//! subsets of the sampling units, with exact rational probabilities.

use std::collections::BTreeSet;

use itertools::Itertools;
use num_traits::{One, Zero};
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, UnitId};
use crate::ratio::{format_ratio, parse_ratio, Ratio};

/// Human-readable label for a sample, `"i1,i2"`.
pub fn sample_label(sample: &[UnitId]) -> String {
    sample
        .iter()
        .map(UnitId::as_str)
        .collect::<Vec<_>>()
        .join(",")
}

/// Parses a `"i1,i2"` label back into unit ids.
pub fn parse_sample_label(label: &str) -> Vec<UnitId> {
    if label.is_empty() {
        return Vec::new();
    }
    label.split(',').map(|s| UnitId::new(s.trim())).collect()
}

#[derive(Debug, Deserialize)]
struct DesignFile {
    support: Vec<Vec<UnitId>>,
    probabilities: Vec<String>,
}

/// A finite-support design over a fixed universe of sampling units.
///
/// Probabilities are strictly positive and sum to exactly one; support
/// samples are pairwise distinct. The support order is preserved as given
/// (fixture listing order, or lexicographic order for generated designs).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Design {
    units: Vec<UnitId>,
    support: Vec<Vec<usize>>,
    probabilities: Vec<Ratio>,
}

/// Outcome of a coverage check: which study units can never be observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CoverageReport {
    pub covered: bool,
    pub uncovered: Vec<UnitId>,
}

impl Design {
    /// Builds a design over an explicit unit universe. Samples are given as
    /// id lists; duplicates within a sample are rejected via the id lookup.
    pub fn new(
        units: Vec<UnitId>,
        support: Vec<Vec<UnitId>>,
        probabilities: Vec<Ratio>,
    ) -> Result<Self> {
        if support.len() != probabilities.len() {
            return Err(Error::SupportShape {
                support: support.len(),
                probabilities: probabilities.len(),
            });
        }
        let mut seen_units = BTreeSet::new();
        for unit in &units {
            if !seen_units.insert(unit.clone()) {
                return Err(Error::DuplicateUnit(unit.to_string()));
            }
        }

        let index_of = |unit: &UnitId| -> Result<usize> {
            units
                .iter()
                .position(|u| u == unit)
                .ok_or_else(|| Error::UnknownSamplingUnit(unit.to_string()))
        };

        let mut index_support = Vec::with_capacity(support.len());
        let mut seen_samples = BTreeSet::new();
        for sample in &support {
            let mut indices = BTreeSet::new();
            for unit in sample {
                if !indices.insert(index_of(unit)?) {
                    return Err(Error::DuplicateSample(sample_label(sample)));
                }
            }
            let indices: Vec<usize> = indices.into_iter().collect();
            if !seen_samples.insert(indices.clone()) {
                return Err(Error::DuplicateSample(sample_label(sample)));
            }
            index_support.push(indices);
        }

        for p in &probabilities {
            if *p <= Ratio::zero() {
                return Err(Error::NonPositiveProbability(format_ratio(p)));
            }
        }
        let total = crate::ratio::sum(&probabilities);
        if !total.is_one() {
            return Err(Error::ProbabilitySum(format_ratio(&total)));
        }

        Ok(Design {
            units,
            support: index_support,
            probabilities,
        })
    }

    /// Simple random sampling without replacement: all size-`n` subsets in
    /// lexicographic order of unit indices, each with probability
    /// `1 / C(N, n)`.
    pub fn srs(units: Vec<UnitId>, n: usize) -> Result<Self> {
        if n == 0 || n > units.len() {
            return Err(Error::SampleSizeOutOfRange {
                n,
                units: units.len(),
            });
        }
        let support: Vec<Vec<UnitId>> = (0..units.len())
            .combinations(n)
            .map(|combo| combo.into_iter().map(|i| units[i].clone()).collect())
            .collect();
        let count = support.len() as i64;
        let probabilities = vec![crate::ratio::ratio(1, count); support.len()];
        Self::new(units, support, probabilities)
    }

    /// Parses the JSON fixture format
    /// `{"support": [["i1","i2"], ...], "probabilities": ["1/3", ...]}`.
    ///
    /// With `units: None` the universe is the units in order of first
    /// appearance in the support; passing a graph's sampling units instead
    /// anchors the design to that graph's canonical order.
    pub fn from_json_str(text: &str, units: Option<&[UnitId]>) -> Result<Self> {
        let file: DesignFile = serde_json::from_str(text)?;
        let universe = match units {
            Some(units) => units.to_vec(),
            None => {
                let mut seen = BTreeSet::new();
                let mut universe = Vec::new();
                for sample in &file.support {
                    for unit in sample {
                        if seen.insert(unit.clone()) {
                            universe.push(unit.clone());
                        }
                    }
                }
                universe
            }
        };
        let probabilities = file
            .probabilities
            .iter()
            .map(|s| parse_ratio(s))
            .collect::<Result<Vec<_>>>()?;
        Self::new(universe, file.support, probabilities)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::json!({
            "support": self.support_keys(),
            "probabilities": self.probabilities.iter().map(format_ratio).collect::<Vec<_>>(),
        })
    }

    pub fn units(&self) -> &[UnitId] {
        &self.units
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    /// Unit indices of one support sample, ascending.
    pub fn sample_indices(&self, row: usize) -> &[usize] {
        &self.support[row]
    }

    /// Unit ids of one support sample, in canonical unit order.
    pub fn sample_key(&self, row: usize) -> Vec<UnitId> {
        self.support[row]
            .iter()
            .map(|&i| self.units[i].clone())
            .collect()
    }

    pub fn support_keys(&self) -> Vec<Vec<UnitId>> {
        (0..self.support.len())
            .map(|r| self.sample_key(r))
            .collect()
    }

    pub fn probability(&self, row: usize) -> &Ratio {
        &self.probabilities[row]
    }

    pub fn probabilities(&self) -> &[Ratio] {
        &self.probabilities
    }

    pub fn unit_index(&self, unit: &UnitId) -> Result<usize> {
        self.units
            .iter()
            .position(|u| u == unit)
            .ok_or_else(|| Error::UnknownSamplingUnit(unit.to_string()))
    }

    /// Locates a sample in the support by its member ids.
    pub fn sample_row(&self, sample: &[UnitId]) -> Result<usize> {
        let indices: BTreeSet<usize> = sample
            .iter()
            .map(|u| self.unit_index(u))
            .collect::<Result<_>>()?;
        let indices: Vec<usize> = indices.into_iter().collect();
        self.support
            .iter()
            .position(|s| *s == indices)
            .ok_or_else(|| Error::SampleNotInSupport(sample_label(sample)))
    }

    /// Initial-sample inclusion probability of one unit.
    pub fn unit_inclusion(&self, unit: &UnitId) -> Result<Ratio> {
        let i = self.unit_index(unit)?;
        Ok(self.unit_inclusion_by_index(i))
    }

    pub fn unit_inclusion_by_index(&self, i: usize) -> Ratio {
        self.support
            .iter()
            .zip(&self.probabilities)
            .filter(|(s, _)| s.contains(&i))
            .fold(Ratio::zero(), |acc, (_, p)| acc + p)
    }

    /// Joint inclusion probability of two units.
    pub fn pair_inclusion(&self, a: &UnitId, b: &UnitId) -> Result<Ratio> {
        let ia = self.unit_index(a)?;
        let ib = self.unit_index(b)?;
        Ok(self
            .support
            .iter()
            .zip(&self.probabilities)
            .filter(|(s, _)| s.contains(&ia) && s.contains(&ib))
            .fold(Ratio::zero(), |acc, (_, p)| acc + p))
    }

    /// Checks that every unit in the support exists in the graph.
    pub fn check_compatible(&self, graph: &BipartiteGraph) -> Result<()> {
        for sample in &self.support {
            for &i in sample {
                graph.sampling_index(&self.units[i])?;
            }
        }
        Ok(())
    }

    /// Does the row's sample reach the study unit with graph index `k`?
    fn sample_reaches(&self, graph: &BipartiteGraph, row: usize, k: usize) -> Result<bool> {
        for &i in &self.support[row] {
            let gi = graph.sampling_index(&self.units[i])?;
            if graph.successor_indices_of(gi).binary_search(&k).is_ok() {
                return Ok(true);
            }
        }
        Ok(false)
    }

    /// Study-sample inclusion probability of `unit`, induced by the design
    /// and the graph: the total probability of samples with an edge into it.
    pub fn study_inclusion(&self, graph: &BipartiteGraph, unit: &UnitId) -> Result<Ratio> {
        let k = graph.study_index(unit)?;
        let mut total = Ratio::zero();
        for row in 0..self.support.len() {
            if self.sample_reaches(graph, row, k)? {
                total += &self.probabilities[row];
            }
        }
        Ok(total)
    }

    /// Joint study-sample inclusion probability of two study units.
    pub fn study_pair_inclusion(
        &self,
        graph: &BipartiteGraph,
        a: &UnitId,
        b: &UnitId,
    ) -> Result<Ratio> {
        let ka = graph.study_index(a)?;
        let kb = graph.study_index(b)?;
        let mut total = Ratio::zero();
        for row in 0..self.support.len() {
            if self.sample_reaches(graph, row, ka)? && self.sample_reaches(graph, row, kb)? {
                total += &self.probabilities[row];
            }
        }
        Ok(total)
    }

    /// Whether every study unit has positive probability of observation.
    pub fn covers(&self, graph: &BipartiteGraph) -> Result<CoverageReport> {
        let mut uncovered = Vec::new();
        for unit in graph.study_units() {
            if self.study_inclusion(graph, unit)?.is_zero() {
                uncovered.push(unit.clone());
            }
        }
        Ok(CoverageReport {
            covered: uncovered.is_empty(),
            uncovered,
        })
    }

    /// Total probability of a set of support samples, given by row index.
    pub fn block_probability_by_rows(&self, rows: &[usize]) -> Ratio {
        let rows: BTreeSet<usize> = rows.iter().copied().collect();
        rows.iter()
            .map(|&r| &self.probabilities[r])
            .fold(Ratio::zero(), |acc, p| acc + p)
    }

    /// Total probability of a set of support samples, given by member ids.
    pub fn block_probability(&self, samples: &[Vec<UnitId>]) -> Result<Ratio> {
        let rows = samples
            .iter()
            .map(|s| self.sample_row(s))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.block_probability_by_rows(&rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::graph::unit_ids;
    use crate::ratio::{int, ratio};

    fn ids(list: &[&str]) -> Vec<UnitId> {
        unit_ids(list.iter().copied())
    }

    #[test]
    fn example_design_inclusions() {
        let d = fixtures::design_example2();
        assert_eq!(d.unit_inclusion(&"i1".into()).unwrap(), ratio(1, 3));
        assert_eq!(d.unit_inclusion(&"i2".into()).unwrap(), int(1));
        assert_eq!(d.unit_inclusion(&"i3".into()).unwrap(), ratio(2, 3));
        assert_eq!(
            d.pair_inclusion(&"i1".into(), &"i2".into()).unwrap(),
            ratio(1, 3)
        );
        assert_eq!(
            d.pair_inclusion(&"i1".into(), &"i3".into()).unwrap(),
            int(0)
        );
    }

    #[test]
    fn srs_design_shape() {
        let d = Design::srs(ids(&["i1", "i2", "i3", "i4"]), 2).unwrap();
        assert_eq!(d.support_len(), 6);
        let keys: Vec<String> = d.support_keys().iter().map(|k| sample_label(k)).collect();
        assert_eq!(
            keys,
            vec!["i1,i2", "i1,i3", "i1,i4", "i2,i3", "i2,i4", "i3,i4"]
        );
        for row in 0..6 {
            assert_eq!(*d.probability(row), ratio(1, 6));
        }
        for unit in d.units().to_vec() {
            assert_eq!(d.unit_inclusion(&unit).unwrap(), ratio(1, 2));
        }

        let single = Design::srs(ids(&["i1", "i2"]), 2).unwrap();
        assert_eq!(single.support_len(), 1);
        assert_eq!(*single.probability(0), int(1));

        let three = Design::srs(ids(&["i1", "i2", "i3"]), 2).unwrap();
        assert_eq!(three.support_len(), 3);
        assert_eq!(*three.probability(0), ratio(1, 3));
    }

    #[test]
    fn study_inclusion_on_example2() {
        let g = fixtures::fig3();
        let d = fixtures::design_example2();
        assert_eq!(d.study_inclusion(&g, &"k2".into()).unwrap(), int(1));
        assert_eq!(d.study_inclusion(&g, &"k1".into()).unwrap(), ratio(1, 3));
        assert_eq!(
            d.study_pair_inclusion(&g, &"k1".into(), &"k2".into())
                .unwrap(),
            ratio(1, 3)
        );
    }

    #[test]
    fn isolated_study_unit_has_zero_inclusion() {
        let g = fixtures::fig1();
        let d = Design::srs(g.sampling_units().to_vec(), 2).unwrap();
        assert_eq!(d.study_inclusion(&g, &"k5".into()).unwrap(), int(0));
        let report = d.covers(&g).unwrap();
        assert!(!report.covered);
        assert_eq!(report.uncovered, ids(&["k5"]));
    }

    #[test]
    fn coverage_on_shipped_fixtures() {
        let fig3 = fixtures::fig3();
        assert!(fixtures::design_example2().covers(&fig3).unwrap().covered);

        let trimmed = fixtures::fig1_trimmed();
        let srs = Design::srs(trimmed.sampling_units().to_vec(), 2).unwrap();
        assert!(srs.covers(&trimmed).unwrap().covered);
        assert!(
            fixtures::design_minsupport()
                .covers(&trimmed)
                .unwrap()
                .covered
        );
        assert!(
            fixtures::design_systematic()
                .covers(&trimmed)
                .unwrap()
                .covered
        );
    }

    #[test]
    fn coverage_survives_unit_removal() {
        let g = fixtures::fig1_trimmed();
        let d = Design::srs(g.sampling_units().to_vec(), 2).unwrap();
        for unit in g.study_units().to_vec() {
            let reduced = g.remove_units(&[unit]).unwrap();
            assert!(d.covers(&reduced).unwrap().covered);
        }
    }

    #[test]
    fn block_probability_cases() {
        let d = fixtures::design_example2();
        assert_eq!(d.block_probability(&d.support_keys()).unwrap(), int(1));
        assert_eq!(
            d.block_probability(std::slice::from_ref(&ids(&["i1", "i2"])))
                .unwrap(),
            ratio(1, 3)
        );
        assert!(matches!(
            d.block_probability(std::slice::from_ref(&ids(&["i1", "i3"]))),
            Err(Error::SampleNotInSupport(_))
        ));
    }

    #[test]
    fn handshake_identity() {
        for d in [
            fixtures::design_example2(),
            fixtures::design_minsupport(),
            Design::srs(ids(&["i1", "i2", "i3", "i4"]), 3).unwrap(),
        ] {
            let lhs: Ratio = d
                .units()
                .iter()
                .map(|u| d.unit_inclusion(u).unwrap())
                .fold(int(0), |acc, p| acc + p);
            let rhs: Ratio = (0..d.support_len())
                .map(|r| d.probability(r) * int(d.sample_indices(r).len() as i64))
                .fold(int(0), |acc, p| acc + p);
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn study_inclusion_bounded_by_ancestor_mass() {
        let g = fixtures::fig1_trimmed();
        for d in [
            Design::srs(g.sampling_units().to_vec(), 2).unwrap(),
            fixtures::design_minsupport(),
            fixtures::design_systematic(),
        ] {
            for k in g.study_units() {
                let pk = d.study_inclusion(&g, k).unwrap();
                assert!(pk <= int(1));
                let mass: Ratio = g
                    .ancestors(std::slice::from_ref(k))
                    .unwrap()
                    .iter()
                    .map(|i| d.unit_inclusion(i).unwrap())
                    .fold(int(0), |acc, p| acc + p);
                assert!(pk <= mass || mass >= int(1));
            }
        }
    }

    #[test]
    fn validation_errors() {
        assert!(matches!(
            Design::new(ids(&["i1"]), vec![ids(&["i1"])], vec![ratio(1, 2)]),
            Err(Error::ProbabilitySum(_))
        ));
        assert!(matches!(
            Design::new(
                ids(&["i1", "i2"]),
                vec![ids(&["i1"]), ids(&["i2"])],
                vec![ratio(3, 2), ratio(-1, 2)]
            ),
            Err(Error::NonPositiveProbability(_))
        ));
        assert!(matches!(
            Design::new(
                ids(&["i1", "i2"]),
                vec![ids(&["i1"]), ids(&["i1"])],
                vec![ratio(1, 2), ratio(1, 2)]
            ),
            Err(Error::DuplicateSample(_))
        ));
        assert!(matches!(
            Design::new(ids(&["i1"]), vec![ids(&["i2"])], vec![int(1)]),
            Err(Error::UnknownSamplingUnit(_))
        ));
        assert!(matches!(
            Design::srs(ids(&["i1", "i2"]), 3),
            Err(Error::SampleSizeOutOfRange { .. })
        ));
        assert!(matches!(
            Design::srs(ids(&["i1", "i2"]), 0),
            Err(Error::SampleSizeOutOfRange { .. })
        ));
    }

    #[test]
    fn zero_probability_rejected_at_load() {
        let text = r#"{"support": [["i1"], ["i2"]], "probabilities": ["1", "0"]}"#;
        assert!(matches!(
            Design::from_json_str(text, None),
            Err(Error::NonPositiveProbability(_))
        ));
    }

    #[test]
    fn fixture_json_round_trip() {
        let d = fixtures::design_example2();
        let text = d.to_json_value().to_string();
        assert_eq!(Design::from_json_str(&text, None).unwrap(), d);
    }
}
