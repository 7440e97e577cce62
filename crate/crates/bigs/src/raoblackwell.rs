//! The sufficiency partition of the support by realised study sample,
//! Rao-Blackwellization by block averaging, and its zero-invariant
//! refinement.
//!
//! Averaging an estimator within blocks of samples that observe the same
//! study units never increases variance and preserves the expectation.
//! The zero-invariant variant partitions by the observed study units that
//! carry nonzero values, one branch per zero pattern, so that deleting
//! zero-valued units from the graph cannot change the estimate.

use std::collections::BTreeMap;

use num_traits::Zero;

use crate::design::Design;
use crate::error::{Error, Result};
use crate::estimator::{LazyBranches, LinearEstimator, PiecewiseEstimator, EAGER_BRANCH_LIMIT};
use crate::graph::{BipartiteGraph, KnowledgeLevel, UnitId};
use crate::ratio::Ratio;

/// One block of the partition: the support samples observing the same
/// study units (outside the zero pattern), with their total probability.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionBlock {
    /// The common observed study units, minus the zero pattern.
    pub observed: Vec<UnitId>,
    /// Support rows in the block, in support order.
    pub rows: Vec<usize>,
    pub probability: Ratio,
}

/// Partition of the support by the realised study sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SufficiencyPartition {
    pub blocks: Vec<PartitionBlock>,
}

impl SufficiencyPartition {
    /// The block containing a given support row.
    pub fn block_of(&self, row: usize) -> &PartitionBlock {
        self.blocks
            .iter()
            .find(|b| b.rows.contains(&row))
            .expect("blocks partition the support")
    }
}

/// Groups the support samples by their observed study units, after
/// discarding the given zero pattern. An empty pattern yields the plain
/// sufficiency partition. Blocks are ordered by their observed sets in
/// the graph's canonical study order.
pub fn partition(
    design: &Design,
    graph: &BipartiteGraph,
    zero_pattern: &[UnitId],
) -> Result<SufficiencyPartition> {
    design.check_compatible(graph)?;
    let mut zero_indices = std::collections::BTreeSet::new();
    for unit in zero_pattern {
        zero_indices.insert(graph.study_index(unit)?);
    }

    let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
    for row in 0..design.support_len() {
        let sample: std::collections::BTreeSet<usize> = design
            .sample_key(row)
            .iter()
            .map(|u| graph.sampling_index(u))
            .collect::<Result<_>>()?;
        let key: Vec<usize> = graph
            .successor_set(&sample)
            .into_iter()
            .filter(|k| !zero_indices.contains(k))
            .collect();
        groups.entry(key).or_default().push(row);
    }

    let blocks = groups
        .into_iter()
        .map(|(key, rows)| {
            let probability = design.block_probability_by_rows(&rows);
            PartitionBlock {
                observed: key
                    .iter()
                    .map(|&k| graph.study_units()[k].clone())
                    .collect(),
                rows,
                probability,
            }
        })
        .collect();
    Ok(SufficiencyPartition { blocks })
}

fn averaged_coefficients(
    design: &Design,
    est: &LinearEstimator,
    part: &SufficiencyPartition,
) -> Result<Vec<Vec<Ratio>>> {
    let aligned = est.alignment(design)?;
    let cols = est.study_units().len();
    let mut rows = vec![vec![Ratio::zero(); cols]; design.support_len()];
    for block in &part.blocks {
        assert!(
            !block.probability.is_zero(),
            "support probabilities are positive, so block mass is positive"
        );
        let mut avg = vec![Ratio::zero(); cols];
        for &row in &block.rows {
            let source = est.row(aligned[row]);
            for (acc, value) in avg.iter_mut().zip(source) {
                *acc += design.probability(row) * value;
            }
        }
        for value in &mut avg {
            *value /= &block.probability;
        }
        for &row in &block.rows {
            rows[row] = avg.clone();
        }
    }
    Ok(rows)
}

/// Replaces the estimator by its conditional expectation given the
/// realised study sample: every row becomes the probability-weighted
/// average of its block. The result is sufficient, has the same
/// expectation, and never larger variance.
pub fn rao_blackwellize(
    design: &Design,
    graph: &BipartiteGraph,
    est: &LinearEstimator,
) -> Result<LinearEstimator> {
    if est.study_units() != graph.study_units() {
        return Err(Error::TableMismatch(format!(
            "`{}` is not defined over this graph's study units",
            est.label()
        )));
    }
    let part = partition(design, graph, &[])?;
    let coefficients = averaged_coefficients(design, est, &part)?;
    LinearEstimator::from_parts(
        format!("RB({})", est.label()),
        KnowledgeLevel::Graph,
        (0..design.support_len())
            .map(|r| design.sample_key(r))
            .collect(),
        est.study_units().to_vec(),
        coefficients,
    )
}

/// One branch of the zero-invariant Rao-Blackwellization: block averages
/// over the partition that ignores the zero-valued study units, restricted
/// to the remaining columns.
pub fn zrb_branch(
    design: &Design,
    graph: &BipartiteGraph,
    est: &LinearEstimator,
    zero_pattern: &[UnitId],
) -> Result<LinearEstimator> {
    let part = partition(design, graph, zero_pattern)?;
    let coefficients = averaged_coefficients(design, est, &part)?;
    let averaged = LinearEstimator::from_parts(
        format!("ZRB({})", est.label()),
        KnowledgeLevel::SuccessorAncestry,
        (0..design.support_len())
            .map(|r| design.sample_key(r))
            .collect(),
        est.study_units().to_vec(),
        coefficients,
    )?;
    let dropped: std::collections::BTreeSet<usize> = zero_pattern
        .iter()
        .map(|u| graph.study_index(u))
        .collect::<Result<_>>()?;
    Ok(averaged.drop_columns(&dropped))
}

/// Zero-invariant Rao-Blackwellization: one branch per zero pattern of the
/// value vector. The empty-pattern branch equals plain Rao-Blackwellization;
/// unbiasedness and zero-invariance carry over from the input.
///
/// All branches are materialized eagerly up to [`EAGER_BRANCH_LIMIT`] study
/// units; beyond that, branches other than the empty pattern are computed
/// on demand at evaluation time.
pub fn zrb(
    design: &Design,
    graph: &BipartiteGraph,
    est: &LinearEstimator,
) -> Result<PiecewiseEstimator> {
    if est.study_units() != graph.study_units() {
        return Err(Error::TableMismatch(format!(
            "`{}` is not defined over this graph's study units",
            est.label()
        )));
    }
    let total = graph.study_units().len();
    let mut branches = BTreeMap::new();
    let mut lazy = None;

    if total <= EAGER_BRANCH_LIMIT {
        for mask in 0u64..(1u64 << total) {
            let pattern_indices: Vec<usize> = (0..total).filter(|k| mask & (1 << k) != 0).collect();
            let pattern: Vec<UnitId> = pattern_indices
                .iter()
                .map(|&k| graph.study_units()[k].clone())
                .collect();
            branches.insert(pattern_indices, zrb_branch(design, graph, est, &pattern)?);
        }
    } else {
        branches.insert(Vec::new(), zrb_branch(design, graph, est, &[])?);
        lazy = Some(Box::new(LazyBranches {
            design: design.clone(),
            graph: graph.clone(),
            base: est.clone(),
        }));
    }

    PiecewiseEstimator::new(
        format!("ZRB({})", est.label()),
        KnowledgeLevel::SuccessorAncestry,
        (0..design.support_len())
            .map(|r| design.sample_key(r))
            .collect(),
        graph.study_units().to_vec(),
        branches,
        lazy,
    )
}

/// Result of a sufficiency check, with a violating pair of samples when
/// the estimator is not sufficient.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SufficiencyCheck {
    pub sufficient: bool,
    pub witness: Option<(Vec<UnitId>, Vec<UnitId>)>,
}

/// An estimator is sufficient when it takes the same value on any two
/// samples observing the same study units; for coefficient tables this
/// means identical rows within every partition block.
pub fn is_sufficient(
    design: &Design,
    graph: &BipartiteGraph,
    est: &LinearEstimator,
) -> Result<SufficiencyCheck> {
    let part = partition(design, graph, &[])?;
    let aligned = est.alignment(design)?;
    for block in &part.blocks {
        let first = block.rows[0];
        for &row in &block.rows[1..] {
            if est.row(aligned[first]) != est.row(aligned[row]) {
                return Ok(SufficiencyCheck {
                    sufficient: false,
                    witness: Some((design.sample_key(first), design.sample_key(row))),
                });
            }
        }
    }
    Ok(SufficiencyCheck {
        sufficient: true,
        witness: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{build_hte, build_multiplicity};
    use crate::fixtures;
    use crate::moments::{expectation, variance};
    use crate::ratio::{int, ratio};

    #[test]
    fn partition_on_example2() {
        let b = fixtures::fig3();
        let d = fixtures::design_example2();

        let plain = partition(&d, &b, &[]).unwrap();
        assert_eq!(plain.blocks.len(), 2);
        assert_eq!(
            plain.blocks[0].observed,
            vec![UnitId::from("k1"), UnitId::from("k2")]
        );
        assert_eq!(plain.blocks[0].rows, vec![0]);
        assert_eq!(plain.blocks[1].observed, vec![UnitId::from("k2")]);
        assert_eq!(plain.blocks[1].rows, vec![1]);

        let merged = partition(&d, &b, &["k1".into()]).unwrap();
        assert_eq!(merged.blocks.len(), 1);
        assert_eq!(merged.blocks[0].rows, vec![0, 1]);
        assert_eq!(merged.blocks[0].probability, int(1));

        let total: Ratio = plain
            .blocks
            .iter()
            .map(|b| b.probability.clone())
            .fold(int(0), |acc, p| acc + p);
        assert_eq!(total, int(1));
    }

    #[test]
    fn single_sample_support_has_one_block() {
        let b = fixtures::fig3();
        let d = Design::new(
            b.sampling_units().to_vec(),
            vec![vec!["i1".into(), "i2".into()]],
            vec![int(1)],
        )
        .unwrap();
        let part = partition(&d, &b, &[]).unwrap();
        assert_eq!(part.blocks.len(), 1);
    }

    #[test]
    fn rb_merges_rows_on_reduced_graph() {
        let b = fixtures::fig3();
        let d = fixtures::design_example2();
        let reduced = b.remove_units(&["k1".into()]).unwrap();
        let est = build_multiplicity(&d, &reduced).unwrap();
        let rb = rao_blackwellize(&d, &reduced, &est).unwrap();
        assert_eq!(rb.row(0), &[int(1)]);
        assert_eq!(rb.row(1), &[int(1)]);
        assert_eq!(rb.knowledge(), KnowledgeLevel::Graph);

        // on the full graph the blocks are singletons: nothing changes
        let est = build_multiplicity(&d, &b).unwrap();
        let rb = rao_blackwellize(&d, &b, &est).unwrap();
        for row in 0..2 {
            assert_eq!(rb.row(row), est.row(row));
        }
    }

    #[test]
    fn hte_is_a_fixed_point() {
        let b = fixtures::fig3();
        let d = fixtures::design_example2();
        let hte = build_hte(&d, &b).unwrap();
        let rb = rao_blackwellize(&d, &b, &hte).unwrap();
        for row in 0..d.support_len() {
            assert_eq!(rb.row(row), hte.row(row));
        }

        let g = fixtures::fig1_trimmed();
        let srs = fixtures::srs2();
        let hte = build_hte(&srs, &g).unwrap();
        let rb = rao_blackwellize(&srs, &g, &hte).unwrap();
        for row in 0..srs.support_len() {
            assert_eq!(rb.row(row), hte.row(row));
        }
    }

    #[test]
    fn rb_preserves_expectation() {
        let g = fixtures::fig1_trimmed();
        let d = fixtures::srs2();
        let est = build_multiplicity(&d, &g).unwrap();
        let rb = rao_blackwellize(&d, &g, &est).unwrap();
        for k in 0..4 {
            let mut y = vec![int(0); 4];
            y[k] = int(1);
            assert_eq!(
                expectation(&d, &rb, &y).unwrap(),
                expectation(&d, &est, &y).unwrap()
            );
        }
    }

    #[test]
    fn zrb_branch_merges_zero_pattern() {
        let b = fixtures::fig3();
        let d = fixtures::design_example2();
        let est = build_multiplicity(&d, &b).unwrap();
        let z = zrb(&d, &b, &est).unwrap();
        assert_eq!(z.knowledge(), KnowledgeLevel::SuccessorAncestry);
        assert_eq!(z.branches().len(), 4);

        let branch = z.branch(&["k1".into()]).unwrap();
        assert_eq!(branch.row(0), &[int(1)]);
        assert_eq!(branch.row(1), &[int(1)]);

        // empty pattern equals plain Rao-Blackwellization
        let empty = z.branch(&[]).unwrap();
        let rb = rao_blackwellize(&d, &b, &est).unwrap();
        for row in 0..2 {
            assert_eq!(empty.row(row), rb.row(row));
        }

        // full pattern is the zero estimator
        let full = z.branch(&["k1".into(), "k2".into()]).unwrap();
        assert!(full.study_units().is_empty());
        assert_eq!(
            z.evaluate(&["i1".into(), "i2".into()], &[int(0), int(0)])
                .unwrap(),
            int(0)
        );
    }

    #[test]
    fn zrb_of_sufficient_zero_invariant_estimator_restricts_it() {
        let b = fixtures::fig3();
        let d = fixtures::design_example2();
        let hte = build_hte(&d, &b).unwrap();
        let z = zrb(&d, &b, &hte).unwrap();
        for (pattern, branch) in z.branches() {
            let dropped: std::collections::BTreeSet<usize> = pattern.iter().copied().collect();
            let expected = hte.drop_columns(&dropped);
            for row in 0..d.support_len() {
                assert_eq!(branch.row(row), expected.row(row), "pattern {pattern:?}");
            }
        }
    }

    #[test]
    fn variance_chain_on_example2() {
        let b = fixtures::fig3();
        let d = fixtures::design_example2();
        let est = build_multiplicity(&d, &b).unwrap();
        let rb = rao_blackwellize(&d, &b, &est).unwrap();
        let z = zrb(&d, &b, &est).unwrap();
        let y = vec![int(0), int(1)];
        let v_est = variance(&d, &est, &y).unwrap();
        let v_rb = variance(&d, &rb, &y).unwrap();
        let v_z = variance(&d, &z, &y).unwrap();
        assert_eq!(v_est, ratio(1, 18));
        assert_eq!(v_rb, ratio(1, 18));
        assert_eq!(v_z, int(0));
        assert!(v_z < v_rb && v_rb <= v_est);
    }

    #[test]
    fn sufficiency_witness_on_reduced_graph() {
        let b = fixtures::fig3();
        let d = fixtures::design_example2();
        let est = build_multiplicity(&d, &b).unwrap();
        assert!(is_sufficient(&d, &b, &est).unwrap().sufficient);

        let reduced = b.remove_units(&["k1".into()]).unwrap();
        let est = build_multiplicity(&d, &reduced).unwrap();
        let check = is_sufficient(&d, &reduced, &est).unwrap();
        assert!(!check.sufficient);
        let (a, b_) = check.witness.unwrap();
        assert_eq!(a, vec![UnitId::from("i1"), UnitId::from("i2")]);
        assert_eq!(b_, vec![UnitId::from("i2"), UnitId::from("i3")]);
    }

    #[test]
    fn rb_output_is_always_sufficient() {
        let g = fixtures::fig1_trimmed();
        for d in [fixtures::srs2(), fixtures::design_minsupport()] {
            let est = build_multiplicity(&d, &g).unwrap();
            let rb = rao_blackwellize(&d, &g, &est).unwrap();
            assert!(is_sufficient(&d, &g, &rb).unwrap().sufficient);
        }
    }

    #[test]
    fn zrb_is_unbiased_on_every_branch() {
        let b = fixtures::fig3();
        let d = fixtures::design_example2();
        let est = crate::estimator::build_multiplicity(&d, &b).unwrap();
        let z = zrb(&d, &b, &est).unwrap();
        // strictly nonzero values on the complement of each zero pattern
        let nonzero = [ratio(3, 7), ratio(-2, 5), ratio(11, 4)];
        for pattern in z.branches().keys() {
            for shift in 0..nonzero.len() {
                let mut y = Vec::new();
                let mut cursor = shift;
                for k in 0..b.study_units().len() {
                    if pattern.contains(&k) {
                        y.push(int(0));
                    } else {
                        y.push(nonzero[cursor % nonzero.len()].clone());
                        cursor += 1;
                    }
                }
                let theta: Ratio = y.iter().fold(int(0), |acc, v| acc + v);
                assert_eq!(
                    crate::moments::expectation(&d, &z, &y).unwrap(),
                    theta,
                    "pattern {pattern:?}"
                );
            }
        }
    }

    #[test]
    fn zrb_is_lazy_beyond_the_branch_limit() {
        // 13 study units: materializing all 2^13 branches would be wasteful,
        // so only the empty pattern is cached and the rest compute on demand
        let study: Vec<UnitId> = (1..=13)
            .map(|k| UnitId::from(format!("k{k}").as_str()))
            .collect();
        let sampling: Vec<UnitId> = vec!["i1".into(), "i2".into()];
        let edges: Vec<(UnitId, UnitId)> = study
            .iter()
            .enumerate()
            .map(|(k, unit)| (sampling[k % 2].clone(), unit.clone()))
            .collect();
        let graph = BipartiteGraph::new(sampling.clone(), study, edges).unwrap();
        let design = Design::new(
            sampling.clone(),
            vec![
                vec![sampling[0].clone()],
                vec![sampling[1].clone()],
                sampling.clone(),
            ],
            vec![ratio(1, 4), ratio(1, 4), ratio(1, 2)],
        )
        .unwrap();
        let est = crate::estimator::build_multiplicity(&design, &graph).unwrap();
        let z = zrb(&design, &graph, &est).unwrap();
        assert_eq!(z.branches().len(), 1);

        let on_demand = z.branch(&["k1".into()]).unwrap();
        let direct = zrb_branch(&design, &graph, &est, &["k1".into()]).unwrap();
        for row in 0..design.support_len() {
            assert_eq!(on_demand.row(row), direct.row(row));
        }

        let mut y = vec![int(1); 13];
        y[0] = int(0);
        let value = z.evaluate(&design.sample_key(2), &y).unwrap();
        assert_eq!(
            value,
            direct.evaluate(&design.sample_key(2), &y[1..]).unwrap()
        );
    }

    #[test]
    fn zrb_is_idempotent_branchwise() {
        let b = fixtures::fig3();
        let d = fixtures::design_example2();
        let est = build_multiplicity(&d, &b).unwrap();
        let z = zrb(&d, &b, &est).unwrap();
        for (pattern, branch) in z.branches() {
            // averaging a branch again over its own partition changes nothing
            let pattern_ids: Vec<UnitId> = pattern
                .iter()
                .map(|&k| b.study_units()[k].clone())
                .collect();
            let part = partition(&d, &b, &pattern_ids).unwrap();
            let again = averaged_coefficients(&d, branch, &part).unwrap();
            for (row, averaged) in again.iter().enumerate() {
                assert_eq!(averaged.as_slice(), branch.row(row));
            }
        }
    }
}
