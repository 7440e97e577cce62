//! Linear estimators as exact coefficient tables, and the incidence
//! weighting constructions that produce them.
//!
//! An estimator table has one row per support sample and one column per
//! study unit; the estimate for sample `s0` at value vector `y` is the dot
//! product of the row with `y`. Every constructor in this module keeps the
//! support property: a coefficient is zero whenever the study unit is not a
//! successor of the sample, so estimates depend on `y` only through the
//! observed units.

use std::collections::{BTreeMap, BTreeSet};

use itertools::Itertools;
use num_traits::{One, Zero};
use serde_json::json;

use crate::design::{parse_sample_label, sample_label, Design};
use crate::error::{Error, Result};
use crate::graph::{BipartiteGraph, KnowledgeLevel, UnitId};
use crate::ratio::{format_ratio, parse_ratio, Ratio};

/// Above this many study units, zero-invariant Rao-Blackwell output keeps a
/// lazy handle instead of materializing all `2^|study units|` branches.
pub const EAGER_BRANCH_LIMIT: usize = 12;

/// A linear estimator represented extensionally: exact coefficients over a
/// concrete (design, graph) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinearEstimator {
    label: String,
    knowledge: KnowledgeLevel,
    sample_keys: Vec<Vec<UnitId>>,
    study_units: Vec<UnitId>,
    coefficients: Vec<Vec<Ratio>>,
}

impl LinearEstimator {
    pub fn from_parts(
        label: impl Into<String>,
        knowledge: KnowledgeLevel,
        sample_keys: Vec<Vec<UnitId>>,
        study_units: Vec<UnitId>,
        coefficients: Vec<Vec<Ratio>>,
    ) -> Result<Self> {
        if coefficients.len() != sample_keys.len() {
            return Err(Error::DimensionMismatch {
                expected: sample_keys.len(),
                got: coefficients.len(),
            });
        }
        for row in &coefficients {
            if row.len() != study_units.len() {
                return Err(Error::DimensionMismatch {
                    expected: study_units.len(),
                    got: row.len(),
                });
            }
        }
        let mut seen = BTreeSet::new();
        for key in &sample_keys {
            let mut sorted = key.clone();
            sorted.sort();
            if !seen.insert(sorted) {
                return Err(Error::DuplicateSample(sample_label(key)));
            }
        }
        Ok(LinearEstimator {
            label: label.into(),
            knowledge,
            sample_keys,
            study_units,
            coefficients,
        })
    }

    /// All-zero table with the given shape.
    pub fn zeros(
        label: impl Into<String>,
        knowledge: KnowledgeLevel,
        sample_keys: Vec<Vec<UnitId>>,
        study_units: Vec<UnitId>,
    ) -> Self {
        let coefficients = vec![vec![Ratio::zero(); study_units.len()]; sample_keys.len()];
        LinearEstimator::from_parts(label, knowledge, sample_keys, study_units, coefficients)
            .expect("shape is consistent by construction")
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn knowledge(&self) -> KnowledgeLevel {
        self.knowledge
    }

    pub fn with_knowledge(mut self, knowledge: KnowledgeLevel) -> Self {
        self.knowledge = knowledge;
        self
    }

    pub fn sample_keys(&self) -> &[Vec<UnitId>] {
        &self.sample_keys
    }

    pub fn study_units(&self) -> &[UnitId] {
        &self.study_units
    }

    pub fn row_count(&self) -> usize {
        self.sample_keys.len()
    }

    pub fn row(&self, row: usize) -> &[Ratio] {
        &self.coefficients[row]
    }

    pub fn coefficient(&self, row: usize, col: usize) -> &Ratio {
        &self.coefficients[row][col]
    }

    /// The coefficient column for one study unit: the estimator's value
    /// vector over the support when `y` is that unit's basis vector.
    pub fn column(&self, col: usize) -> Vec<Ratio> {
        self.coefficients.iter().map(|r| r[col].clone()).collect()
    }

    pub fn study_column(&self, unit: &UnitId) -> Result<Vec<Ratio>> {
        let col = self
            .study_units
            .iter()
            .position(|u| u == unit)
            .ok_or_else(|| Error::UnknownStudyUnit(unit.to_string()))?;
        Ok(self.column(col))
    }

    pub fn row_for_sample(&self, sample: &[UnitId]) -> Result<usize> {
        let mut target: Vec<UnitId> = sample.to_vec();
        target.sort();
        self.sample_keys
            .iter()
            .position(|key| {
                let mut sorted = key.clone();
                sorted.sort();
                sorted == target
            })
            .ok_or_else(|| Error::SampleNotInSupport(sample_label(sample)))
    }

    /// For each design support row, the matching estimator row.
    pub fn alignment(&self, design: &Design) -> Result<Vec<usize>> {
        (0..design.support_len())
            .map(|row| self.row_for_sample(&design.sample_key(row)))
            .collect()
    }

    pub fn evaluate_row(&self, row: usize, y: &[Ratio]) -> Result<Ratio> {
        if y.len() != self.study_units.len() {
            return Err(Error::DimensionMismatch {
                expected: self.study_units.len(),
                got: y.len(),
            });
        }
        Ok(self.coefficients[row]
            .iter()
            .zip(y)
            .fold(Ratio::zero(), |acc, (c, v)| acc + c * v))
    }

    pub fn evaluate(&self, sample: &[UnitId], y: &[Ratio]) -> Result<Ratio> {
        let row = self.row_for_sample(sample)?;
        self.evaluate_row(row, y)
    }

    fn check_aligned(&self, other: &Self) -> Result<()> {
        if self.sample_keys != other.sample_keys || self.study_units != other.study_units {
            return Err(Error::TableMismatch(format!(
                "`{}` and `{}` are defined over different supports or study units",
                self.label, other.label
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_aligned(other)?;
        let coefficients = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
            .collect();
        LinearEstimator::from_parts(
            format!("{} + {}", self.label, other.label),
            self.knowledge.max(other.knowledge),
            self.sample_keys.clone(),
            self.study_units.clone(),
            coefficients,
        )
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_aligned(other)?;
        let coefficients = self
            .coefficients
            .iter()
            .zip(&other.coefficients)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        LinearEstimator::from_parts(
            format!("{} - {}", self.label, other.label),
            self.knowledge.max(other.knowledge),
            self.sample_keys.clone(),
            self.study_units.clone(),
            coefficients,
        )
    }

    pub fn scale(&self, factor: &Ratio) -> Self {
        let coefficients = self
            .coefficients
            .iter()
            .map(|row| row.iter().map(|c| c * factor).collect())
            .collect();
        LinearEstimator {
            label: format!("{} * {}", format_ratio(factor), self.label),
            knowledge: self.knowledge,
            sample_keys: self.sample_keys.clone(),
            study_units: self.study_units.clone(),
            coefficients,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients
            .iter()
            .all(|row| row.iter().all(Ratio::is_zero))
    }

    /// Keeps only the listed study-unit columns, in their current order.
    pub fn drop_columns(&self, dropped: &BTreeSet<usize>) -> Self {
        let keep: Vec<usize> = (0..self.study_units.len())
            .filter(|c| !dropped.contains(c))
            .collect();
        let study_units = keep.iter().map(|&c| self.study_units[c].clone()).collect();
        let coefficients = self
            .coefficients
            .iter()
            .map(|row| keep.iter().map(|&c| row[c].clone()).collect())
            .collect();
        LinearEstimator {
            label: self.label.clone(),
            knowledge: self.knowledge,
            sample_keys: self.sample_keys.clone(),
            study_units,
            coefficients,
        }
    }

    /// Verifies the support property against a graph: a nonzero coefficient
    /// may only sit on a study unit reachable from its sample.
    pub fn validate_support(&self, graph: &BipartiteGraph) -> Result<()> {
        for (row, key) in self.sample_keys.iter().enumerate() {
            let sample: BTreeSet<usize> = key
                .iter()
                .map(|u| graph.sampling_index(u))
                .collect::<Result<_>>()?;
            let observed = graph.successor_set(&sample);
            for (col, unit) in self.study_units.iter().enumerate() {
                let k = graph.study_index(unit)?;
                if !observed.contains(&k) && !self.coefficients[row][col].is_zero() {
                    return Err(Error::UnsupportedCoefficient {
                        sample: sample_label(key),
                        unit: unit.to_string(),
                        value: format_ratio(&self.coefficients[row][col]),
                    });
                }
            }
        }
        Ok(())
    }

    /// Dump format: `{"format": 1, "label": ..., "knowledge": ...,
    /// "samples": [...], "study_units": [...], "rows": {...}}`.
    pub fn to_json_value(&self) -> serde_json::Value {
        let mut rows = serde_json::Map::new();
        for (key, coeffs) in self.sample_keys.iter().zip(&self.coefficients) {
            let mut row = serde_json::Map::new();
            for (unit, value) in self.study_units.iter().zip(coeffs) {
                row.insert(unit.to_string(), json!(format_ratio(value)));
            }
            rows.insert(sample_label(key), serde_json::Value::Object(row));
        }
        json!({
            "format": 1,
            "label": self.label,
            "knowledge": self.knowledge,
            "samples": self.sample_keys.iter().map(|k| sample_label(k)).collect::<Vec<_>>(),
            "study_units": self.study_units,
            "rows": rows,
        })
    }

    pub fn from_json_value(value: &serde_json::Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| Error::BadFixture("estimator dump must be an object".into()))?;
        let label = obj
            .get("label")
            .and_then(|v| v.as_str())
            .unwrap_or("estimator")
            .to_string();
        let knowledge: KnowledgeLevel = obj
            .get("knowledge")
            .and_then(|v| v.as_str())
            .unwrap_or("ancestry")
            .parse()?;
        let rows_obj = obj
            .get("rows")
            .and_then(|v| v.as_object())
            .ok_or_else(|| Error::BadFixture("estimator dump is missing `rows`".into()))?;

        let sample_labels: Vec<String> = match obj.get("samples").and_then(|v| v.as_array()) {
            Some(list) => list
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(str::to_string)
                        .ok_or_else(|| Error::BadFixture("`samples` must be strings".into()))
                })
                .collect::<Result<_>>()?,
            None => rows_obj.keys().cloned().collect(),
        };
        let study_units: Vec<UnitId> = match obj.get("study_units").and_then(|v| v.as_array()) {
            Some(list) => list
                .iter()
                .map(|v| {
                    v.as_str()
                        .map(UnitId::new)
                        .ok_or_else(|| Error::BadFixture("`study_units` must be strings".into()))
                })
                .collect::<Result<_>>()?,
            None => {
                let mut units: BTreeSet<String> = BTreeSet::new();
                for row in rows_obj.values() {
                    if let Some(row) = row.as_object() {
                        units.extend(row.keys().cloned());
                    }
                }
                units.into_iter().map(UnitId::new).collect()
            }
        };

        let mut sample_keys = Vec::new();
        let mut coefficients = Vec::new();
        for label in &sample_labels {
            let row_obj = rows_obj
                .get(label)
                .and_then(|v| v.as_object())
                .ok_or_else(|| Error::BadFixture(format!("missing row for sample {{{label}}}")))?;
            let mut row = Vec::with_capacity(study_units.len());
            for unit in &study_units {
                let value = match row_obj.get(unit.as_str()) {
                    Some(v) => {
                        let text = v.as_str().ok_or_else(|| {
                            Error::BadFixture("coefficients must be \"num/den\" strings".into())
                        })?;
                        parse_ratio(text)?
                    }
                    None => Ratio::zero(),
                };
                row.push(value);
            }
            sample_keys.push(parse_sample_label(label));
            coefficients.push(row);
        }
        LinearEstimator::from_parts(label, knowledge, sample_keys, study_units, coefficients)
    }
}

/// Edge weights for the incidence weighting construction: either one
/// constant weight per edge, or weights that vary with the drawn sample.
/// Missing entries count as zero.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WeightScheme {
    Constant(BTreeMap<(UnitId, UnitId), Ratio>),
    Variable(BTreeMap<Vec<UnitId>, BTreeMap<(UnitId, UnitId), Ratio>>),
}

impl WeightScheme {
    pub fn is_constant(&self) -> bool {
        matches!(self, WeightScheme::Constant(_))
    }

    /// Weight of edge `(i, k)` for the given sample (zero when absent).
    pub fn weight(&self, sample: &[UnitId], i: &UnitId, k: &UnitId) -> Ratio {
        match self {
            WeightScheme::Constant(map) => map
                .get(&(i.clone(), k.clone()))
                .cloned()
                .unwrap_or_else(Ratio::zero),
            WeightScheme::Variable(map) => {
                let mut key = sample.to_vec();
                key.sort();
                map.get(&key)
                    .and_then(|edges| edges.get(&(i.clone(), k.clone())))
                    .cloned()
                    .unwrap_or_else(Ratio::zero)
            }
        }
    }

    /// Parses `{"constant": {"i1": {"k1": "1/2"}}}` or
    /// `{"variable": {"i1,i2": {"i1": {"k1": "1"}}}}`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let obj = value
            .as_object()
            .ok_or_else(|| Error::BadFixture("weights file must be an object".into()))?;
        let parse_edges = |v: &serde_json::Value| -> Result<BTreeMap<(UnitId, UnitId), Ratio>> {
            let mut edges = BTreeMap::new();
            let units = v
                .as_object()
                .ok_or_else(|| Error::BadFixture("weights must map units to edges".into()))?;
            for (i, row) in units {
                let row = row
                    .as_object()
                    .ok_or_else(|| Error::BadFixture("weights must map units to edges".into()))?;
                for (k, w) in row {
                    let text = w.as_str().ok_or_else(|| {
                        Error::BadFixture("weights must be \"num/den\" strings".into())
                    })?;
                    edges.insert(
                        (UnitId::new(i.clone()), UnitId::new(k.clone())),
                        parse_ratio(text)?,
                    );
                }
            }
            Ok(edges)
        };
        if let Some(constant) = obj.get("constant") {
            return Ok(WeightScheme::Constant(parse_edges(constant)?));
        }
        if let Some(variable) = obj.get("variable") {
            let samples = variable.as_object().ok_or_else(|| {
                Error::BadFixture("`variable` must map samples to weights".into())
            })?;
            let mut map = BTreeMap::new();
            for (sample, edges) in samples {
                let mut key = parse_sample_label(sample);
                key.sort();
                map.insert(key, parse_edges(edges)?);
            }
            return Ok(WeightScheme::Variable(map));
        }
        Err(Error::BadFixture(
            "weights file needs a `constant` or `variable` field".into(),
        ))
    }
}

/// Horvitz-Thompson estimator: coefficient `1 / study-inclusion` on every
/// observed study unit. Requires only ancestry knowledge.
///
/// Errors if some study unit with a non-empty ancestor set can never be
/// observed under the design; isolated study units get a zero column.
pub fn build_hte(design: &Design, graph: &BipartiteGraph) -> Result<LinearEstimator> {
    design.check_compatible(graph)?;
    let mut uncovered = Vec::new();
    let mut inclusions = Vec::with_capacity(graph.study_units().len());
    for (k, unit) in graph.study_units().iter().enumerate() {
        let pk = design.study_inclusion(graph, unit)?;
        if pk.is_zero() && !graph.ancestor_indices_of(k).is_empty() {
            uncovered.push(unit.to_string());
        }
        inclusions.push(pk);
    }
    if !uncovered.is_empty() {
        return Err(Error::NotCovered(uncovered));
    }

    let sample_keys: Vec<Vec<UnitId>> = (0..design.support_len())
        .map(|r| design.sample_key(r))
        .collect();
    let mut coefficients = Vec::with_capacity(sample_keys.len());
    for key in &sample_keys {
        let sample: BTreeSet<usize> = key
            .iter()
            .map(|u| graph.sampling_index(u))
            .collect::<Result<_>>()?;
        let observed = graph.successor_set(&sample);
        let row: Vec<Ratio> = (0..graph.study_units().len())
            .map(|k| {
                if observed.contains(&k) {
                    inclusions[k].recip()
                } else {
                    Ratio::zero()
                }
            })
            .collect();
        coefficients.push(row);
    }
    LinearEstimator::from_parts(
        "hte",
        KnowledgeLevel::Ancestry,
        sample_keys,
        graph.study_units().to_vec(),
        coefficients,
    )
}

/// Incidence weighting estimator for a weight scheme: the coefficient on a
/// study unit sums `weight / unit-inclusion` over the sampled ancestors.
pub fn build_iwe(
    design: &Design,
    graph: &BipartiteGraph,
    weights: &WeightScheme,
) -> Result<LinearEstimator> {
    design.check_compatible(graph)?;
    validate_weights(design, graph, weights)?;

    let sample_keys: Vec<Vec<UnitId>> = (0..design.support_len())
        .map(|r| design.sample_key(r))
        .collect();
    let mut coefficients = Vec::with_capacity(sample_keys.len());
    for key in &sample_keys {
        let sample: BTreeSet<usize> = key
            .iter()
            .map(|u| graph.sampling_index(u))
            .collect::<Result<_>>()?;
        let mut row = vec![Ratio::zero(); graph.study_units().len()];
        for (k, unit) in graph.study_units().iter().enumerate() {
            for &i in graph.ancestor_indices_of(k) {
                if !sample.contains(&i) {
                    continue;
                }
                let ancestor = &graph.sampling_units()[i];
                let w = weights.weight(key, ancestor, unit);
                if w.is_zero() {
                    continue;
                }
                let pi = design.unit_inclusion(ancestor)?;
                row[k] += w / pi;
            }
        }
        coefficients.push(row);
    }
    LinearEstimator::from_parts(
        "iwe",
        KnowledgeLevel::Ancestry,
        sample_keys,
        graph.study_units().to_vec(),
        coefficients,
    )
}

fn validate_weights(design: &Design, graph: &BipartiteGraph, weights: &WeightScheme) -> Result<()> {
    let check_edge = |i: &UnitId, k: &UnitId, w: &Ratio| -> Result<()> {
        let gi = graph.sampling_index(i)?;
        let gk = graph.study_index(k)?;
        if !graph.has_edge(gi, gk) {
            return Err(Error::BadFixture(format!(
                "weight on ({i}, {k}) which is not an edge"
            )));
        }
        if !w.is_zero() && design.unit_inclusion(i)?.is_zero() {
            return Err(Error::ZeroInclusion(i.to_string()));
        }
        Ok(())
    };
    match weights {
        WeightScheme::Constant(map) => {
            for ((i, k), w) in map {
                check_edge(i, k, w)?;
            }
        }
        WeightScheme::Variable(map) => {
            for (sample, edges) in map {
                let row = design.sample_row(sample)?;
                let members = design.sample_key(row);
                for ((i, k), w) in edges {
                    if !members.contains(i) {
                        return Err(Error::WeightOutsideSample {
                            unit: i.to_string(),
                            sample: sample_label(sample),
                        });
                    }
                    check_edge(i, k, w)?;
                }
            }
        }
    }
    Ok(())
}

/// Equal-share constant weights: `1 / |ancestors|` on every edge. Study
/// units without ancestors get no entries.
pub fn multiplicity_weights(graph: &BipartiteGraph) -> WeightScheme {
    let mut map = BTreeMap::new();
    for (k, unit) in graph.study_units().iter().enumerate() {
        let ancestors = graph.ancestor_indices_of(k);
        if ancestors.is_empty() {
            continue;
        }
        let share = crate::ratio::ratio(1, ancestors.len() as i64);
        for &i in ancestors {
            map.insert(
                (graph.sampling_units()[i].clone(), unit.clone()),
                share.clone(),
            );
        }
    }
    WeightScheme::Constant(map)
}

/// The multiplicity estimator: the incidence weighting estimator with
/// equal-share constant weights.
pub fn build_multiplicity(design: &Design, graph: &BipartiteGraph) -> Result<LinearEstimator> {
    Ok(build_iwe(design, graph, &multiplicity_weights(graph))?.with_label("multiplicity"))
}

/// First-occurrence indicator weights: given constant base weights whose
/// ancestor sums are all one, and a visiting order of the support, unit `i`
/// contributes only in the first ordered sample containing it, with weight
/// `base * inclusion / sample probability`.
///
/// `order` is a permutation of the support row indices.
pub fn lexicographic_indicator_weights(
    design: &Design,
    graph: &BipartiteGraph,
    base: &WeightScheme,
    order: &[usize],
) -> Result<WeightScheme> {
    let WeightScheme::Constant(base_map) = base else {
        return Err(Error::BadFixture(
            "indicator weights need a constant base scheme".into(),
        ));
    };
    let mut seen = BTreeSet::new();
    if order.len() != design.support_len()
        || !order
            .iter()
            .all(|&r| r < design.support_len() && seen.insert(r))
    {
        return Err(Error::NotAPermutation);
    }
    for (k, unit) in graph.study_units().iter().enumerate() {
        let ancestors = graph.ancestor_indices_of(k);
        if ancestors.is_empty() {
            continue;
        }
        let total: Ratio = ancestors
            .iter()
            .map(|&i| {
                base_map
                    .get(&(graph.sampling_units()[i].clone(), unit.clone()))
                    .cloned()
                    .unwrap_or_else(Ratio::zero)
            })
            .fold(Ratio::zero(), |acc, w| acc + w);
        if !total.is_one() {
            return Err(Error::WeightRowSum {
                unit: unit.to_string(),
                sum: format_ratio(&total),
            });
        }
    }

    // first ordered sample containing each unit
    let mut first_row: BTreeMap<usize, usize> = BTreeMap::new();
    for &row in order {
        for &i in design.sample_indices(row) {
            first_row.entry(i).or_insert(row);
        }
    }

    let mut map: BTreeMap<Vec<UnitId>, BTreeMap<(UnitId, UnitId), Ratio>> = BTreeMap::new();
    for row in 0..design.support_len() {
        let mut key = design.sample_key(row);
        key.sort();
        let mut edges = BTreeMap::new();
        for &i in design.sample_indices(row) {
            if first_row.get(&i) != Some(&row) {
                continue;
            }
            let unit = design.units()[i].clone();
            let pi = design.unit_inclusion_by_index(i);
            for ((wi, wk), w) in base_map {
                if *wi != unit || w.is_zero() {
                    continue;
                }
                let value = w * &pi / design.probability(row);
                edges.insert((wi.clone(), wk.clone()), value);
            }
        }
        map.insert(key, edges);
    }
    Ok(WeightScheme::Variable(map))
}

/// Builds the indicator-weighted estimator over the multiplicity base for
/// a support permutation.
pub fn build_lexicographic(
    design: &Design,
    graph: &BipartiteGraph,
    order: &[usize],
    label: impl Into<String>,
) -> Result<LinearEstimator> {
    let base = multiplicity_weights(graph);
    let weights = lexicographic_indicator_weights(design, graph, &base, order)?;
    Ok(build_iwe(design, graph, &weights)?.with_label(label))
}

/// Per-study-unit unbiasedness residuals of a weight scheme: the expected
/// weight totals that must all equal one for the incidence weighting
/// estimator to be unbiased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnbiasednessReport {
    pub unbiased: bool,
    pub residuals: Vec<(UnitId, Ratio)>,
}

pub fn check_unbiased_weights(
    design: &Design,
    graph: &BipartiteGraph,
    weights: &WeightScheme,
) -> Result<UnbiasednessReport> {
    design.check_compatible(graph)?;
    let mut residuals = Vec::new();
    let mut unbiased = true;
    for (k, unit) in graph.study_units().iter().enumerate() {
        let mut total = Ratio::zero();
        for &i in graph.ancestor_indices_of(k) {
            let ancestor = &graph.sampling_units()[i];
            let Ok(di) = design.unit_index(ancestor) else {
                continue; // ancestor outside the design universe never contributes
            };
            let pi = design.unit_inclusion_by_index(di);
            if pi.is_zero() {
                continue;
            }
            for row in 0..design.support_len() {
                if !design.sample_indices(row).contains(&di) {
                    continue;
                }
                let key = design.sample_key(row);
                let w = weights.weight(&key, ancestor, unit);
                if !w.is_zero() {
                    total += design.probability(row) * w / &pi;
                }
            }
        }
        if !total.is_one() {
            unbiased = false;
        }
        residuals.push((unit.clone(), total));
    }
    Ok(UnbiasednessReport {
        unbiased,
        residuals,
    })
}

/// An estimator constructor, instantiable on reduced and extended graphs.
pub type Builder<'a> = dyn Fn(&Design, &BipartiteGraph) -> Result<LinearEstimator> + 'a;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroInvarianceWitness {
    /// The removed study units for which the tables disagree.
    pub removed: Vec<UnitId>,
    pub sample: Option<Vec<UnitId>>,
    pub study_unit: Option<UnitId>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ZeroInvarianceReport {
    pub zero_invariant: bool,
    pub witness: Option<ZeroInvarianceWitness>,
}

/// Checks that a constructor commutes with deleting study units: building
/// on the reduced graph must equal dropping the removed columns from the
/// table built on the full graph.
///
/// Removal sets are enumerated exhaustively (by size, then canonical
/// order) up to [`EAGER_BRANCH_LIMIT`] study units; beyond that only
/// singletons and pairs are tried.
pub fn check_zero_invariant(
    design: &Design,
    graph: &BipartiteGraph,
    builder: &Builder,
) -> Result<ZeroInvarianceReport> {
    let base = builder(design, graph)?;
    let total = graph.study_units().len();
    let sizes: Vec<usize> = if total <= EAGER_BRANCH_LIMIT {
        (0..=total).collect()
    } else {
        vec![0, 1, 2]
    };

    for size in sizes {
        for combo in (0..total).combinations(size) {
            let removed: Vec<UnitId> = combo
                .iter()
                .map(|&k| graph.study_units()[k].clone())
                .collect();
            let reduced_graph = graph.remove_units(&removed)?;
            let reduced = match builder(design, &reduced_graph) {
                Ok(est) => est,
                Err(err) => {
                    return Ok(ZeroInvarianceReport {
                        zero_invariant: false,
                        witness: Some(ZeroInvarianceWitness {
                            removed,
                            sample: None,
                            study_unit: None,
                            detail: format!("constructor failed on reduced graph: {err}"),
                        }),
                    })
                }
            };
            let dropped: BTreeSet<usize> = combo.iter().copied().collect();
            let expected = base.drop_columns(&dropped);
            if let Some((row, col)) = first_difference(&expected, &reduced) {
                let sample = expected.sample_keys()[row].clone();
                let unit = expected.study_units()[col].clone();
                let detail = format!(
                    "coefficient on `{unit}` for sample {{{}}} is {} on the full graph but {} after removal",
                    sample_label(&sample),
                    format_ratio(expected.coefficient(row, col)),
                    format_ratio(reduced.coefficient(row, col)),
                );
                return Ok(ZeroInvarianceReport {
                    zero_invariant: false,
                    witness: Some(ZeroInvarianceWitness {
                        removed,
                        sample: Some(sample),
                        study_unit: Some(unit),
                        detail,
                    }),
                });
            }
        }
    }
    Ok(ZeroInvarianceReport {
        zero_invariant: true,
        witness: None,
    })
}

fn first_difference(a: &LinearEstimator, b: &LinearEstimator) -> Option<(usize, usize)> {
    if a.sample_keys() != b.sample_keys() || a.study_units() != b.study_units() {
        return Some((0, 0));
    }
    for row in 0..a.row_count() {
        for col in 0..a.study_units().len() {
            if a.coefficient(row, col) != b.coefficient(row, col) {
                return Some((row, col));
            }
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementalWitness {
    pub unit: UnitId,
    pub sample: Vec<UnitId>,
    pub expected: Ratio,
    pub got: Ratio,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ElementalReport {
    pub elemental: bool,
    pub witness: Option<ElementalWitness>,
}

/// Checks that a constructor reduces to `y / unit-inclusion` on every
/// single-edge, single-study-unit graph over the design's units.
pub fn check_elemental(design: &Design, builder: &Builder) -> Result<ElementalReport> {
    let mut fresh = String::from("k*");
    while design.units().iter().any(|u| u.as_str() == fresh) {
        fresh.push('*');
    }

    for unit in design.units().to_vec() {
        let graph =
            BipartiteGraph::elemental(design.units().to_vec(), &unit, UnitId::new(fresh.clone()))?;
        let est = builder(design, &graph)?;
        let pi = design.unit_inclusion(&unit)?;
        for row in 0..design.support_len() {
            let key = design.sample_key(row);
            let expected = if key.contains(&unit) {
                pi.recip()
            } else {
                Ratio::zero()
            };
            let got = est.coefficient(est.row_for_sample(&key)?, 0).clone();
            if got != expected {
                return Ok(ElementalReport {
                    elemental: false,
                    witness: Some(ElementalWitness {
                        unit,
                        sample: key,
                        expected,
                        got,
                    }),
                });
            }
        }
    }
    Ok(ElementalReport {
        elemental: true,
        witness: None,
    })
}

/// One group of samples sharing the same set of sampled ancestors of a
/// study unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtTypeGroup {
    pub ancestors_in_sample: Vec<UnitId>,
    /// Probability that exactly this ancestor set is sampled.
    pub probability: Ratio,
    /// Probability-weighted mean of `inclusion * sum(weight / unit inclusion)`
    /// over the group; constant groups make this the common value.
    pub eta: Ratio,
    pub constant: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtTypeUnitReport {
    pub study_unit: UnitId,
    pub inclusion: Ratio,
    pub groups: Vec<HtTypeGroup>,
    /// Whether the group means weighted by group probabilities add back up
    /// to the study inclusion probability (equivalent to unbiasedness).
    pub identity_holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HtTypeReport {
    pub per_unit: Vec<HtTypeUnitReport>,
    pub identity_holds: bool,
    /// True when every group is constant, i.e. the weights genuinely
    /// depend on the sample only through the sampled ancestor set.
    pub ht_type: bool,
}

/// Diagnostic for Horvitz-Thompson-type weight schemes.
pub fn ht_type_report(
    design: &Design,
    graph: &BipartiteGraph,
    weights: &WeightScheme,
) -> Result<HtTypeReport> {
    design.check_compatible(graph)?;
    let mut per_unit = Vec::new();
    let mut identity_all = true;
    let mut ht_type = true;

    for (k, unit) in graph.study_units().iter().enumerate() {
        let inclusion = design.study_inclusion(graph, unit)?;
        // group support rows by the sampled ancestor set
        let mut groups: BTreeMap<Vec<usize>, Vec<usize>> = BTreeMap::new();
        for row in 0..design.support_len() {
            let sampled: Vec<usize> = graph
                .ancestor_indices_of(k)
                .iter()
                .copied()
                .filter(|&i| {
                    let unit = &graph.sampling_units()[i];
                    design
                        .unit_index(unit)
                        .map(|d| design.sample_indices(row).contains(&d))
                        .unwrap_or(false)
                })
                .collect();
            if sampled.is_empty() {
                continue;
            }
            groups.entry(sampled).or_default().push(row);
        }

        let mut group_reports = Vec::new();
        let mut identity_total = Ratio::zero();
        for (sampled, rows) in groups {
            let probability: Ratio = rows
                .iter()
                .map(|&r| design.probability(r))
                .fold(Ratio::zero(), |acc, p| acc + p);
            let mut etas = Vec::new();
            for &row in &rows {
                let key = design.sample_key(row);
                let mut value = Ratio::zero();
                for &i in &sampled {
                    let ancestor = &graph.sampling_units()[i];
                    let w = weights.weight(&key, ancestor, unit);
                    if !w.is_zero() {
                        value += w / design.unit_inclusion(ancestor)?;
                    }
                }
                etas.push(&inclusion * value);
            }
            let constant = etas.windows(2).all(|pair| pair[0] == pair[1]);
            let mean = rows
                .iter()
                .zip(&etas)
                .map(|(&r, eta)| design.probability(r) * eta)
                .fold(Ratio::zero(), |acc, v| acc + v)
                / &probability;
            identity_total += &probability * &mean;
            if !constant {
                ht_type = false;
            }
            group_reports.push(HtTypeGroup {
                ancestors_in_sample: sampled
                    .iter()
                    .map(|&i| graph.sampling_units()[i].clone())
                    .collect(),
                probability,
                eta: mean,
                constant,
            });
        }
        let identity_holds = identity_total == inclusion;
        if !identity_holds {
            identity_all = false;
        }
        per_unit.push(HtTypeUnitReport {
            study_unit: unit.clone(),
            inclusion,
            groups: group_reports,
            identity_holds,
        });
    }
    Ok(HtTypeReport {
        per_unit,
        identity_holds: identity_all,
        ht_type,
    })
}

/// A family of linear estimators indexed by the zero pattern of the value
/// vector: evaluating at `y` selects the branch for the exact set of
/// zero-valued study units. Produced by zero-invariant Rao-Blackwellization.
#[derive(Debug, Clone)]
pub struct PiecewiseEstimator {
    label: String,
    knowledge: KnowledgeLevel,
    sample_keys: Vec<Vec<UnitId>>,
    study_units: Vec<UnitId>,
    branches: BTreeMap<Vec<usize>, LinearEstimator>,
    lazy: Option<Box<LazyBranches>>,
}

/// Handle for computing branches on demand when the full set would be too
/// large to materialize.
#[derive(Debug, Clone)]
pub struct LazyBranches {
    pub design: Design,
    pub graph: BipartiteGraph,
    pub base: LinearEstimator,
}

impl PiecewiseEstimator {
    pub(crate) fn new(
        label: String,
        knowledge: KnowledgeLevel,
        sample_keys: Vec<Vec<UnitId>>,
        study_units: Vec<UnitId>,
        branches: BTreeMap<Vec<usize>, LinearEstimator>,
        lazy: Option<Box<LazyBranches>>,
    ) -> Result<Self> {
        if !branches.contains_key(&Vec::new()) {
            return Err(Error::BadFixture(
                "piecewise estimator needs a branch for the empty zero pattern".into(),
            ));
        }
        for (pattern, branch) in &branches {
            let expected: Vec<UnitId> = study_units
                .iter()
                .enumerate()
                .filter(|(k, _)| !pattern.contains(k))
                .map(|(_, u)| u.clone())
                .collect();
            if branch.study_units() != expected.as_slice() {
                return Err(Error::BadFixture(
                    "branch columns must cover exactly the nonzero study units".into(),
                ));
            }
        }
        Ok(PiecewiseEstimator {
            label,
            knowledge,
            sample_keys,
            study_units,
            branches,
            lazy,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn knowledge(&self) -> KnowledgeLevel {
        self.knowledge
    }

    pub fn study_units(&self) -> &[UnitId] {
        &self.study_units
    }

    pub fn sample_keys(&self) -> &[Vec<UnitId>] {
        &self.sample_keys
    }

    /// Materialized branches, keyed by zero-pattern indices.
    pub fn branches(&self) -> &BTreeMap<Vec<usize>, LinearEstimator> {
        &self.branches
    }

    fn pattern_indices(&self, pattern: &[UnitId]) -> Result<Vec<usize>> {
        let mut indices: BTreeSet<usize> = BTreeSet::new();
        for unit in pattern {
            let k = self
                .study_units
                .iter()
                .position(|u| u == unit)
                .ok_or_else(|| Error::UnknownStudyUnit(unit.to_string()))?;
            indices.insert(k);
        }
        Ok(indices.into_iter().collect())
    }

    /// The branch for a zero pattern given by study-unit ids; computed on
    /// demand when the estimator was built lazily.
    pub fn branch(&self, pattern: &[UnitId]) -> Result<LinearEstimator> {
        let indices = self.pattern_indices(pattern)?;
        if let Some(branch) = self.branches.get(&indices) {
            return Ok(branch.clone());
        }
        if let Some(lazy) = &self.lazy {
            let pattern_ids: Vec<UnitId> = indices
                .iter()
                .map(|&k| self.study_units[k].clone())
                .collect();
            return crate::raoblackwell::zrb_branch(
                &lazy.design,
                &lazy.graph,
                &lazy.base,
                &pattern_ids,
            );
        }
        Err(Error::BadFixture(format!(
            "no branch for zero pattern {{{}}}",
            sample_label(pattern)
        )))
    }

    /// Evaluates at `y`: selects the branch for the exact zero set of `y`
    /// and applies it to the nonzero coordinates.
    pub fn evaluate(&self, sample: &[UnitId], y: &[Ratio]) -> Result<Ratio> {
        if y.len() != self.study_units.len() {
            return Err(Error::DimensionMismatch {
                expected: self.study_units.len(),
                got: y.len(),
            });
        }
        let pattern: Vec<UnitId> = self
            .study_units
            .iter()
            .zip(y)
            .filter(|(_, v)| v.is_zero())
            .map(|(u, _)| u.clone())
            .collect();
        let branch = self.branch(&pattern)?;
        let reduced_y: Vec<Ratio> = y.iter().filter(|v| !v.is_zero()).cloned().collect();
        branch.evaluate(sample, &reduced_y)
    }

    pub fn to_json_value(&self) -> serde_json::Value {
        let mut branches = serde_json::Map::new();
        for (pattern, branch) in &self.branches {
            let key = sample_label(
                &pattern
                    .iter()
                    .map(|&k| self.study_units[k].clone())
                    .collect::<Vec<_>>(),
            );
            branches.insert(key, branch.to_json_value());
        }
        json!({
            "format": 1,
            "label": self.label,
            "knowledge": self.knowledge,
            "study_units": self.study_units,
            "branches": branches,
        })
    }
}
