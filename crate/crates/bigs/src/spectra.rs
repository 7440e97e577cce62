//! Sample-space matrices, the probability-weighted orthogonal
//! decomposition of estimators, and admissibility classification.
//!
//! The sample-space matrix has a row per sampling unit and a column per
//! support sample, with a one where the unit belongs to the sample; its
//! weighted companion carries the sample probability instead. The row
//! space of the plain matrix and the kernel of the weighted one are
//! complementary and orthogonal under the probability-weighted inner
//! product, which splits every linear estimator into a sample-space
//! spanned part and a kernel part. A mean-zero kernel part can always be
//! removed without cost, which is what the inadmissibility certificates
//! exploit.

use num_traits::{One, Zero};

use crate::design::Design;
use crate::error::{Error, Result};
use crate::estimator::LinearEstimator;
use crate::graph::{BipartiteGraph, UnitId};
use crate::linalg;
use crate::moments;
use crate::ratio::{format_ratio, Ratio};

/// The 0/1 sample-space matrix of a design, its probability-weighted
/// companion, and exact rank, row-space and kernel data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleSpaceMatrix {
    /// Row labels: the design's sampling units in canonical order.
    pub units: Vec<UnitId>,
    /// Column labels: the support samples in support order.
    pub sample_keys: Vec<Vec<UnitId>>,
    pub plain: Vec<Vec<Ratio>>,
    pub weighted: Vec<Vec<Ratio>>,
    pub rank: usize,
    /// Basis of the row space of the plain matrix.
    pub row_basis: Vec<Vec<Ratio>>,
    /// Basis of the kernel of the weighted matrix.
    pub kernel_basis: Vec<Vec<Ratio>>,
}

pub fn sample_space_matrix(design: &Design) -> SampleSpaceMatrix {
    let units = design.units().to_vec();
    let n = design.support_len();
    let mut plain = vec![vec![Ratio::zero(); n]; units.len()];
    let mut weighted = vec![vec![Ratio::zero(); n]; units.len()];
    for row in 0..n {
        for &i in design.sample_indices(row) {
            plain[i][row] = Ratio::one();
            weighted[i][row] = design.probability(row).clone();
        }
    }
    let rank = linalg::rank(&plain);
    let row_basis = linalg::row_space_basis(&plain);
    let kernel_basis = linalg::kernel_basis(&weighted);
    SampleSpaceMatrix {
        units,
        sample_keys: design.support_keys(),
        plain,
        weighted,
        rank,
        row_basis,
        kernel_basis,
    }
}

/// Probability-weighted inner product of two support vectors.
pub fn p_inner(design: &Design, v: &[Ratio], w: &[Ratio]) -> Result<Ratio> {
    if v.len() != design.support_len() || w.len() != design.support_len() {
        return Err(Error::DimensionMismatch {
            expected: design.support_len(),
            got: if v.len() != design.support_len() {
                v.len()
            } else {
                w.len()
            },
        });
    }
    Ok(design
        .probabilities()
        .iter()
        .zip(v.iter().zip(w))
        .fold(Ratio::zero(), |acc, (p, (a, b))| acc + p * a * b))
}

/// A design is full rank when its sample-space matrix has rank equal to
/// the support size; every estimator is then sample-space spanned.
pub fn is_full_rank(design: &Design) -> bool {
    sample_space_matrix(design).rank == design.support_len()
}

/// Splits a support vector into its row-space and kernel components via
/// the probability-weighted orthogonal projection.
fn split_vector(
    design: &Design,
    matrix: &SampleSpaceMatrix,
    v: &[Ratio],
) -> Result<(Vec<Ratio>, Vec<Ratio>)> {
    if matrix.row_basis.is_empty() {
        return Ok((vec![Ratio::zero(); v.len()], v.to_vec()));
    }
    let mut gram = Vec::with_capacity(matrix.row_basis.len());
    let mut rhs = Vec::with_capacity(matrix.row_basis.len());
    for basis_a in &matrix.row_basis {
        rhs.push(p_inner(design, v, basis_a)?);
        let mut gram_row = Vec::with_capacity(matrix.row_basis.len());
        for basis_b in &matrix.row_basis {
            gram_row.push(p_inner(design, basis_a, basis_b)?);
        }
        gram.push(gram_row);
    }
    let coords =
        linalg::solve(&gram, &rhs).expect("the Gram matrix of an independent basis is invertible");
    let mut row_part = vec![Ratio::zero(); v.len()];
    for (c, basis_vector) in coords.iter().zip(&matrix.row_basis) {
        for (acc, value) in row_part.iter_mut().zip(basis_vector) {
            *acc += c * value;
        }
    }
    let kernel_part: Vec<Ratio> = v.iter().zip(&row_part).map(|(a, b)| a - b).collect();
    debug_assert!(
        linalg::mat_vec(&matrix.weighted, &kernel_part)
            .iter()
            .all(Ratio::is_zero),
        "residual must lie in the kernel of the weighted matrix"
    );
    Ok((row_part, kernel_part))
}

/// The unique split of an estimator into a row-space part and a kernel
/// part, column by column over the study units.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub row_part: LinearEstimator,
    pub kernel_part: LinearEstimator,
}

pub fn decompose(design: &Design, est: &LinearEstimator) -> Result<Decomposition> {
    let matrix = sample_space_matrix(design);
    let aligned = est.alignment(design)?;
    let cols = est.study_units().len();
    let n = design.support_len();

    let mut row_coeffs = vec![vec![Ratio::zero(); cols]; n];
    let mut kernel_coeffs = vec![vec![Ratio::zero(); cols]; n];
    for col in 0..cols {
        let v: Vec<Ratio> = (0..n)
            .map(|r| est.coefficient(aligned[r], col).clone())
            .collect();
        let (row_part, kernel_part) = split_vector(design, &matrix, &v)?;
        for r in 0..n {
            row_coeffs[r][col] = row_part[r].clone();
            kernel_coeffs[r][col] = kernel_part[r].clone();
        }
    }

    let sample_keys: Vec<Vec<UnitId>> = (0..n).map(|r| design.sample_key(r)).collect();
    let row_part = LinearEstimator::from_parts(
        format!("rowspace({})", est.label()),
        est.knowledge(),
        sample_keys.clone(),
        est.study_units().to_vec(),
        row_coeffs,
    )?;
    let kernel_part = LinearEstimator::from_parts(
        format!("kernel({})", est.label()),
        est.knowledge(),
        sample_keys,
        est.study_units().to_vec(),
        kernel_coeffs,
    )?;
    Ok(Decomposition {
        row_part,
        kernel_part,
    })
}

/// Result of a spanning check: when the estimator's value vectors all lie
/// in the row space, `coefficients[i][k]` gives per-unit contributions
/// `a_i` so that the estimate is the sum of `a_i(y)` over sampled units,
/// with `a_i(y) = sum_k coefficients[i][k] * y_k`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpanningReport {
    pub spanned: bool,
    pub coefficients: Option<Vec<Vec<Ratio>>>,
}

/// An estimator is sample-space spanned when its value vector is a fixed
/// per-unit sum over the drawn sample, independent of which sample was
/// drawn; equivalently, all its basis columns lie in the row space of the
/// plain sample-space matrix.
pub fn is_sample_space_spanned(design: &Design, est: &LinearEstimator) -> Result<SpanningReport> {
    let aligned = est.alignment(design)?;
    let n = design.support_len();
    let units = design.units().len();
    // transpose of the plain sample-space matrix
    let mut transposed = vec![vec![Ratio::zero(); units]; n];
    for (row, entries) in transposed.iter_mut().enumerate() {
        for &i in design.sample_indices(row) {
            entries[i] = Ratio::one();
        }
    }

    let mut per_column = Vec::with_capacity(est.study_units().len());
    for col in 0..est.study_units().len() {
        let v: Vec<Ratio> = aligned
            .iter()
            .map(|&r| est.coefficient(r, col).clone())
            .collect();
        match linalg::solve(&transposed, &v) {
            Some(a) => per_column.push(a),
            None => {
                return Ok(SpanningReport {
                    spanned: false,
                    coefficients: None,
                })
            }
        }
    }
    let coefficients = (0..units)
        .map(|i| per_column.iter().map(|a| a[i].clone()).collect())
        .collect();
    Ok(SpanningReport {
        spanned: true,
        coefficients: Some(coefficients),
    })
}

/// Classification outcome for an unbiased zero-invariant linear estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// Sufficient, hence admissible among unbiased zero-invariant
    /// estimators.
    SufficientAdmissibleDStar,
    /// Sample-space spanned, hence admissible among unbiased
    /// zero-invariant analytic estimators.
    SampleSpaceSpannedAdmissibleDStarStar,
    /// Splits into a spanned part plus a nonzero mean-zero kernel part;
    /// inadmissible, dominated by its spanned part.
    KernelPerturbedInadmissible,
    /// Outside the decomposable class; admissibility undecided here.
    Unknown,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Verdict::SufficientAdmissibleDStar => "SufficientAdmissibleDStar",
            Verdict::SampleSpaceSpannedAdmissibleDStarStar => {
                "SampleSpaceSpannedAdmissibleDStarStar"
            }
            Verdict::KernelPerturbedInadmissible => "KernelPerturbedInadmissible",
            Verdict::Unknown => "Unknown",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Evidence {
    /// Number of distinct observed study samples across the support.
    Sufficient { blocks: usize },
    /// Per-unit spanning coefficients.
    Spanned { coefficients: Vec<Vec<Ratio>> },
    /// The dominating estimator and a value vector with a strict variance
    /// gap.
    KernelPerturbed {
        dominating: LinearEstimator,
        witness_y: Vec<Ratio>,
        variance_gap: Ratio,
    },
    /// Why the orthogonal decomposition does not produce two estimators.
    Outside { detail: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Classification {
    pub verdict: Verdict,
    pub evidence: Evidence,
}

fn column_expectation(
    design: &Design,
    est: &LinearEstimator,
    aligned: &[usize],
    col: usize,
) -> Ratio {
    (0..design.support_len()).fold(Ratio::zero(), |acc, r| {
        acc + design.probability(r) * est.coefficient(aligned[r], col)
    })
}

/// First study-unit basis vector on which the estimator's column is not
/// identically zero; falls back to the all-ones vector.
fn witness_vector(est: &LinearEstimator, aligned: &[usize], n: usize) -> Vec<Ratio> {
    let cols = est.study_units().len();
    for col in 0..cols {
        if (0..n).any(|r| !est.coefficient(aligned[r], col).is_zero()) {
            let mut y = vec![Ratio::zero(); cols];
            y[col] = Ratio::one();
            return y;
        }
    }
    vec![Ratio::one(); cols]
}

/// Classifies an unbiased zero-invariant linear estimator:
///
/// 1. sufficient estimators are admissible among unbiased zero-invariant
///    estimators;
/// 2. otherwise, sample-space spanned estimators are admissible among
///    unbiased zero-invariant analytic estimators;
/// 3. otherwise, when the kernel part of the orthogonal decomposition is
///    an estimator in its own right (mean zero, supported on observed
///    units via the row part), the estimator is inadmissible: its row
///    part dominates with a strict variance gap at the witness;
/// 4. otherwise the verdict is unknown.
///
/// Unbiasedness is verified here (per study-unit basis vector) and biased
/// input is refused. Zero-invariance cannot be read off a single table and
/// remains the caller's certification; linear tables are analytic.
pub fn classify(
    design: &Design,
    graph: &BipartiteGraph,
    est: &LinearEstimator,
) -> Result<Classification> {
    est.validate_support(graph)?;
    let aligned = est.alignment(design)?;

    let mut residuals = Vec::new();
    for (col, unit) in est.study_units().iter().enumerate() {
        let e = column_expectation(design, est, &aligned, col);
        if !e.is_one() {
            residuals.push((unit.to_string(), format_ratio(&e)));
        }
    }
    if !residuals.is_empty() {
        return Err(Error::Biased(residuals));
    }

    let sufficiency = crate::raoblackwell::is_sufficient(design, graph, est)?;
    if sufficiency.sufficient {
        let blocks = crate::raoblackwell::partition(design, graph, &[])?
            .blocks
            .len();
        return Ok(Classification {
            verdict: Verdict::SufficientAdmissibleDStar,
            evidence: Evidence::Sufficient { blocks },
        });
    }

    let spanning = is_sample_space_spanned(design, est)?;
    if spanning.spanned {
        return Ok(Classification {
            verdict: Verdict::SampleSpaceSpannedAdmissibleDStarStar,
            evidence: Evidence::Spanned {
                coefficients: spanning.coefficients.expect("present when spanned"),
            },
        });
    }

    let decomposition = decompose(design, est)?;
    let kernel = &decomposition.kernel_part;
    let kernel_aligned = kernel.alignment(design)?;
    for (col, unit) in kernel.study_units().iter().enumerate() {
        let mean = column_expectation(design, kernel, &kernel_aligned, col);
        if !mean.is_zero() {
            return Ok(Classification {
                verdict: Verdict::Unknown,
                evidence: Evidence::Outside {
                    detail: format!(
                        "kernel part has mean {} on `{unit}`, so the row part is not unbiased",
                        format_ratio(&mean)
                    ),
                },
            });
        }
    }
    if let Err(err) = decomposition.row_part.validate_support(graph) {
        return Ok(Classification {
            verdict: Verdict::Unknown,
            evidence: Evidence::Outside {
                detail: format!("row part is not an estimator: {err}"),
            },
        });
    }

    let witness_y = witness_vector(kernel, &kernel_aligned, design.support_len());
    let gap = moments::variance(design, est, &witness_y)?
        - moments::variance(design, &decomposition.row_part, &witness_y)?;
    assert!(
        gap > Ratio::zero(),
        "nonzero mean-zero kernel part has positive variance"
    );
    Ok(Classification {
        verdict: Verdict::KernelPerturbedInadmissible,
        evidence: Evidence::KernelPerturbed {
            dominating: decomposition.row_part,
            witness_y,
            variance_gap: gap,
        },
    })
}

/// Certificate that `base + direction` is dominated by `base`: the
/// direction has mean zero and is uncorrelated with the base at every
/// value vector, so adding it only ever adds variance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OrthogonalPairCertificate {
    pub dominating: String,
    pub dominated: String,
    pub witness_y: Vec<Ratio>,
    /// Variance of the direction at the witness, which equals the variance
    /// gap between the dominated and dominating estimators there.
    pub variance_gap: Ratio,
}

/// Verifies the orthogonal-pair construction for two estimator tables:
/// the direction must have zero expectation on every basis vector, the
/// covariance form of the pair must vanish identically, and the direction
/// must not be identically zero. The refusal names the failing condition.
pub fn verify_orthogonal_pair(
    design: &Design,
    base: &LinearEstimator,
    direction: &LinearEstimator,
) -> Result<OrthogonalPairCertificate> {
    let aligned = direction.alignment(design)?;
    for (col, unit) in direction.study_units().iter().enumerate() {
        let mean = column_expectation(design, direction, &aligned, col);
        if !mean.is_zero() {
            return Err(Error::PairNonzeroMean(unit.to_string()));
        }
    }
    let form = moments::covariance_form(design, base, direction)?;
    if form.iter().any(|row| row.iter().any(|v| !v.is_zero())) {
        return Err(Error::PairCorrelated);
    }
    if direction.is_zero() {
        return Err(Error::PairTrivialDirection);
    }
    let witness_y = witness_vector(direction, &aligned, design.support_len());
    let variance_gap = moments::variance(design, direction, &witness_y)?;
    Ok(OrthogonalPairCertificate {
        dominating: base.label().to_string(),
        dominated: format!("{} + {}", base.label(), direction.label()),
        witness_y,
        variance_gap,
    })
}
