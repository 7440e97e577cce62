//! Exact first and second moments of estimators under a design, plus the
//! constrained-minimum and mixture devices used by the admissibility
//! arguments.

use num_traits::Zero;

use crate::design::Design;
use crate::error::{Error, Result};
use crate::estimator::{LinearEstimator, PiecewiseEstimator};
use crate::graph::UnitId;
use crate::ratio::{format_ratio, Ratio};

/// Anything that yields an exact estimate for a support sample and value
/// vector.
pub trait Estimate {
    fn label(&self) -> &str;
    fn study_units(&self) -> &[UnitId];
    fn value(&self, sample: &[UnitId], y: &[Ratio]) -> Result<Ratio>;
}

impl Estimate for LinearEstimator {
    fn label(&self) -> &str {
        self.label()
    }

    fn study_units(&self) -> &[UnitId] {
        self.study_units()
    }

    fn value(&self, sample: &[UnitId], y: &[Ratio]) -> Result<Ratio> {
        self.evaluate(sample, y)
    }
}

impl Estimate for PiecewiseEstimator {
    fn label(&self) -> &str {
        self.label()
    }

    fn study_units(&self) -> &[UnitId] {
        self.study_units()
    }

    fn value(&self, sample: &[UnitId], y: &[Ratio]) -> Result<Ratio> {
        self.evaluate(sample, y)
    }
}

/// Exact moments of an estimator at one value vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MomentReport {
    pub expectation: Ratio,
    pub variance: Ratio,
    /// The estimation target: the total of the value vector.
    pub theta: Ratio,
    pub bias: Ratio,
}

fn values_over_support<E: Estimate + ?Sized>(
    design: &Design,
    est: &E,
    y: &[Ratio],
) -> Result<Vec<Ratio>> {
    (0..design.support_len())
        .map(|row| est.value(&design.sample_key(row), y))
        .collect()
}

fn mean(design: &Design, values: &[Ratio]) -> Ratio {
    design
        .probabilities()
        .iter()
        .zip(values)
        .fold(Ratio::zero(), |acc, (p, v)| acc + p * v)
}

/// Expected value over repeated sampling.
pub fn expectation<E: Estimate + ?Sized>(design: &Design, est: &E, y: &[Ratio]) -> Result<Ratio> {
    Ok(mean(design, &values_over_support(design, est, y)?))
}

/// Exact variance at one value vector.
pub fn variance<E: Estimate + ?Sized>(design: &Design, est: &E, y: &[Ratio]) -> Result<Ratio> {
    let values = values_over_support(design, est, y)?;
    let center = mean(design, &values);
    Ok(design
        .probabilities()
        .iter()
        .zip(&values)
        .fold(Ratio::zero(), |acc, (p, v)| {
            let dev = v - &center;
            acc + p * &dev * &dev
        }))
}

/// Exact covariance of two estimators at one value vector.
pub fn covariance<A: Estimate + ?Sized, B: Estimate + ?Sized>(
    design: &Design,
    first: &A,
    second: &B,
    y: &[Ratio],
) -> Result<Ratio> {
    let a = values_over_support(design, first, y)?;
    let b = values_over_support(design, second, y)?;
    let ma = mean(design, &a);
    let mb = mean(design, &b);
    Ok(design
        .probabilities()
        .iter()
        .zip(a.iter().zip(&b))
        .fold(Ratio::zero(), |acc, (p, (va, vb))| {
            acc + p * (va - &ma) * (vb - &mb)
        }))
}

pub fn moment_report<E: Estimate + ?Sized>(
    design: &Design,
    est: &E,
    y: &[Ratio],
) -> Result<MomentReport> {
    let expectation = expectation(design, est, y)?;
    let variance = variance(design, est, y)?;
    let theta = crate::ratio::sum(y.iter());
    let bias = &expectation - &theta;
    Ok(MomentReport {
        expectation,
        variance,
        theta,
        bias,
    })
}

/// Symmetric matrix `M` over the study units with
/// `Cov(e1, e2)(y) = y^T M y` for every value vector `y`; it vanishes
/// identically exactly when the covariance does.
pub fn covariance_form(
    design: &Design,
    first: &LinearEstimator,
    second: &LinearEstimator,
) -> Result<Vec<Vec<Ratio>>> {
    let a_rows = first.alignment(design)?;
    let b_rows = second.alignment(design)?;
    if first.study_units() != second.study_units() {
        return Err(Error::TableMismatch(format!(
            "`{}` and `{}` are defined over different study units",
            first.label(),
            second.label()
        )));
    }
    let dim = first.study_units().len();
    let n = design.support_len();

    let col_means = |est: &LinearEstimator, rows: &[usize]| -> Vec<Ratio> {
        (0..dim)
            .map(|col| {
                (0..n).fold(Ratio::zero(), |acc, r| {
                    acc + design.probability(r) * est.coefficient(rows[r], col)
                })
            })
            .collect()
    };
    let means_a = col_means(first, &a_rows);
    let means_b = col_means(second, &b_rows);

    let raw: Vec<Vec<Ratio>> = (0..dim)
        .map(|k| {
            (0..dim)
                .map(|l| {
                    let second_moment = (0..n).fold(Ratio::zero(), |acc, r| {
                        acc + design.probability(r)
                            * first.coefficient(a_rows[r], k)
                            * second.coefficient(b_rows[r], l)
                    });
                    second_moment - &means_a[k] * &means_b[l]
                })
                .collect()
        })
        .collect();

    let half = crate::ratio::ratio(1, 2);
    let symmetric = (0..dim)
        .map(|k| {
            (0..dim)
                .map(|l| (&raw[k][l] + &raw[l][k]) * &half)
                .collect()
        })
        .collect();
    Ok(symmetric)
}

/// The constant function attaining the minimal second moment over a block
/// of support samples among all functions with the given probability-
/// weighted sum; the minimum is unique.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LagrangianMinimum {
    pub constant: Ratio,
    pub second_moment: Ratio,
}

pub fn lagrangian_minimizer(
    design: &Design,
    block_rows: &[usize],
    target: &Ratio,
) -> Result<LagrangianMinimum> {
    if block_rows.is_empty() {
        return Err(Error::EmptyBlock);
    }
    let mass = design.block_probability_by_rows(block_rows);
    let constant = target / &mass;
    let second_moment = target * &constant;
    Ok(LagrangianMinimum {
        constant,
        second_moment,
    })
}

/// The variance-optimal mixing coefficient for perturbing an estimator
/// along a mean-zero direction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixtureImprovement {
    pub alpha: Ratio,
    /// Variance of the mixture at the optimal coefficient.
    pub variance: Ratio,
}

/// For a mean-zero direction `d` with positive variance at `y`, the mixture
/// `e0 + alpha*d` has variance `V(e0) + alpha^2 V(d) + 2 alpha Cov(e0, d)`,
/// minimized at `alpha = -Cov(e0, d) / V(d)`. The minimum improves strictly
/// on `V(e0)` exactly when the covariance is nonzero.
pub fn mixture_improvement<A: Estimate + ?Sized, B: Estimate + ?Sized>(
    design: &Design,
    base: &A,
    direction: &B,
    y: &[Ratio],
) -> Result<MixtureImprovement> {
    let mean_d = expectation(design, direction, y)?;
    if !mean_d.is_zero() {
        return Err(Error::MeanNotZero(format_ratio(&mean_d)));
    }
    let var_d = variance(design, direction, y)?;
    if var_d.is_zero() {
        return Err(Error::DegenerateDirection);
    }
    let cov = covariance(design, base, direction, y)?;
    let alpha = -&cov / &var_d;
    let variance = variance(design, base, y)? - &cov * &cov / &var_d;
    Ok(MixtureImprovement { alpha, variance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{build_hte, build_lexicographic, build_multiplicity};
    use crate::fixtures;
    use crate::graph::KnowledgeLevel;
    use crate::ratio::{int, ratio};

    fn brute_variance<E: Estimate + ?Sized>(design: &Design, est: &E, y: &[Ratio]) -> Ratio {
        // independent enumeration: E(e^2) - E(e)^2 term by term
        let mut first = Ratio::zero();
        let mut second = Ratio::zero();
        for row in 0..design.support_len() {
            let v = est.value(&design.sample_key(row), y).unwrap();
            first += design.probability(row) * &v;
            second += design.probability(row) * &v * &v;
        }
        second - &first * &first
    }

    #[test]
    fn hte_expectation_is_total() {
        let g = fixtures::fig3();
        let d = fixtures::design_example2();
        let hte = build_hte(&d, &g).unwrap();
        for y in [
            vec![int(1), int(0)],
            vec![int(0), int(1)],
            vec![ratio(7, 3), ratio(-2, 5)],
        ] {
            let total = crate::ratio::sum(y.iter());
            assert_eq!(expectation(&d, &hte, &y).unwrap(), total);
        }
    }

    #[test]
    fn zero_estimator_moments() {
        let g = fixtures::fig3();
        let d = fixtures::design_example2();
        let zero = LinearEstimator::zeros(
            "zero",
            KnowledgeLevel::Ancestry,
            d.support_keys(),
            g.study_units().to_vec(),
        );
        let y = vec![int(2), int(5)];
        let report = moment_report(&d, &zero, &y).unwrap();
        assert_eq!(report.expectation, int(0));
        assert_eq!(report.variance, int(0));
        assert_eq!(report.theta, int(7));
        assert_eq!(report.bias, int(-7));
    }

    #[test]
    fn table1_difference_has_zero_mean() {
        let g = fixtures::fig1_trimmed();
        let d = fixtures::srs2();
        let e1 = build_lexicographic(&d, &g, &(0..6).rev().collect::<Vec<_>>(), "e1").unwrap();
        let e2 = build_lexicographic(&d, &g, &[4, 5, 3, 2, 1, 0], "e2").unwrap();
        let diff = e2.sub(&e1).unwrap();
        for k in 0..4 {
            let mut y = vec![int(0); 4];
            y[k] = int(1);
            assert_eq!(expectation(&d, &diff, &y).unwrap(), int(0));
        }
        assert_eq!(expectation(&d, &diff, &vec![int(1); 4]).unwrap(), int(0));
    }

    #[test]
    fn multiplicity_variance_one_eighteenth() {
        let g = fixtures::fig3();
        let d = fixtures::design_example2();
        let est = build_multiplicity(&d, &g).unwrap();
        let rb = crate::raoblackwell::rao_blackwellize(&d, &g, &est).unwrap();
        let y = vec![int(0), int(1)];
        assert_eq!(variance(&d, &rb, &y).unwrap(), ratio(1, 18));
        assert_eq!(brute_variance(&d, &rb, &y), ratio(1, 18));
    }

    #[test]
    fn constant_estimator_has_zero_variance() {
        let g = fixtures::fig3();
        let d = fixtures::design_example2();
        // coefficient 1 on k2 in both rows: constant y(k2)
        let est = LinearEstimator::from_parts(
            "const",
            KnowledgeLevel::Graph,
            d.support_keys(),
            g.study_units().to_vec(),
            vec![vec![int(0), int(1)], vec![int(0), int(1)]],
        )
        .unwrap();
        assert_eq!(variance(&d, &est, &[int(5), int(9)]).unwrap(), int(0));
    }

    #[test]
    fn table1_pair_is_uncorrelated() {
        let g = fixtures::fig1_trimmed();
        let d = fixtures::srs2();
        let e0 = build_lexicographic(&d, &g, &(0..6).collect::<Vec<_>>(), "e0").unwrap();
        let e1 = build_lexicographic(&d, &g, &(0..6).rev().collect::<Vec<_>>(), "e1").unwrap();
        let e2 = build_lexicographic(&d, &g, &[4, 5, 3, 2, 1, 0], "e2").unwrap();
        let diff = e2.sub(&e1).unwrap();
        let ones = vec![int(1); 4];
        assert_eq!(covariance(&d, &e0, &diff, &ones).unwrap(), int(0));

        let form = covariance_form(&d, &e0, &diff).unwrap();
        for row in &form {
            for value in row {
                assert_eq!(*value, int(0));
            }
        }
    }

    #[test]
    fn covariance_form_matches_variance_on_diagonal() {
        let g = fixtures::fig3();
        let d = fixtures::design_example2();
        let hte = build_hte(&d, &g).unwrap();
        let form = covariance_form(&d, &hte, &hte).unwrap();
        assert!(form.iter().any(|row| row.iter().any(|v| !v.is_zero())));
        for (k, unit) in g.study_units().iter().enumerate() {
            let mut y = vec![int(0); 2];
            y[k] = int(1);
            assert_eq!(form[k][k], variance(&d, &hte, &y).unwrap());
            let _ = unit;
        }

        let zero = LinearEstimator::zeros(
            "zero",
            KnowledgeLevel::Ancestry,
            d.support_keys(),
            g.study_units().to_vec(),
        );
        let form = covariance_form(&d, &hte, &zero).unwrap();
        assert!(form.iter().all(|row| row.iter().all(Ratio::is_zero)));
    }

    #[test]
    fn expectation_is_linear_in_the_estimator() {
        let g = fixtures::fig3();
        let d = fixtures::design_example2();
        let hte = build_hte(&d, &g).unwrap();
        let mult = build_multiplicity(&d, &g).unwrap();
        let y = vec![ratio(3, 7), ratio(-1, 2)];
        let a = ratio(5, 3);
        let combined = hte.scale(&a).add(&mult).unwrap();
        assert_eq!(
            expectation(&d, &combined, &y).unwrap(),
            a * expectation(&d, &hte, &y).unwrap() + expectation(&d, &mult, &y).unwrap()
        );
    }

    #[test]
    fn variance_bilinearity_identity() {
        let g = fixtures::fig1_trimmed();
        let d = fixtures::srs2();
        let e1 = build_hte(&d, &g).unwrap();
        let e2 = build_multiplicity(&d, &g).unwrap();
        let sum = e1.add(&e2).unwrap();
        let y = vec![int(1), int(2), int(3), int(4)];
        let lhs = variance(&d, &sum, &y).unwrap();
        let rhs = variance(&d, &e1, &y).unwrap()
            + variance(&d, &e2, &y).unwrap()
            + int(2) * covariance(&d, &e1, &e2, &y).unwrap();
        assert_eq!(lhs, rhs);
    }

    #[test]
    fn lagrangian_minimizer_cases() {
        let d = fixtures::design_example2();
        let both = lagrangian_minimizer(&d, &[0, 1], &int(1)).unwrap();
        assert_eq!(both.constant, int(1));
        assert_eq!(both.second_moment, int(1));

        let zero = lagrangian_minimizer(&d, &[0, 1], &int(0)).unwrap();
        assert_eq!(zero.constant, int(0));
        assert_eq!(zero.second_moment, int(0));

        let single = lagrangian_minimizer(&d, &[0], &int(1)).unwrap();
        assert_eq!(single.constant, int(3));
        assert_eq!(single.second_moment, int(3));

        assert!(matches!(
            lagrangian_minimizer(&d, &[], &int(1)),
            Err(Error::EmptyBlock)
        ));
    }

    #[test]
    fn mixture_improvement_cases() {
        let g = fixtures::fig1_trimmed();
        let d = fixtures::srs2();
        let e0 = build_lexicographic(&d, &g, &(0..6).collect::<Vec<_>>(), "e0").unwrap();
        let e1 = build_lexicographic(&d, &g, &(0..6).rev().collect::<Vec<_>>(), "e1").unwrap();
        let e2 = build_lexicographic(&d, &g, &[4, 5, 3, 2, 1, 0], "e2").unwrap();
        let diff = e2.sub(&e1).unwrap();
        let ones = vec![int(1); 4];

        // orthogonal direction: no improvement possible
        let result = mixture_improvement(&d, &e0, &diff, &ones).unwrap();
        assert_eq!(result.alpha, int(0));
        assert_eq!(result.variance, variance(&d, &e0, &ones).unwrap());
        let gap = variance(&d, &e0.add(&diff).unwrap(), &ones).unwrap()
            - variance(&d, &e0, &ones).unwrap();
        assert_eq!(gap, variance(&d, &diff, &ones).unwrap());
        assert_eq!(gap, int(27));

        // perfect correction: d = theta - e0 drives the variance to zero
        let b = fixtures::fig3();
        let dd = fixtures::design_example2();
        let mult = build_multiplicity(&dd, &b).unwrap();
        let theta_est = LinearEstimator::from_parts(
            "theta",
            KnowledgeLevel::Graph,
            dd.support_keys(),
            b.study_units().to_vec(),
            vec![vec![int(1), int(1)], vec![int(1), int(1)]],
        )
        .unwrap();
        let correction = theta_est.sub(&mult).unwrap();
        let y = vec![int(2), int(1)];
        let result = mixture_improvement(&dd, &mult, &correction, &y).unwrap();
        assert_eq!(result.alpha, int(1));
        assert_eq!(result.variance, int(0));

        // degenerate direction refused
        let zero = LinearEstimator::zeros(
            "zero",
            KnowledgeLevel::Ancestry,
            dd.support_keys(),
            b.study_units().to_vec(),
        );
        assert!(matches!(
            mixture_improvement(&dd, &mult, &zero, &y),
            Err(Error::DegenerateDirection)
        ));
        assert!(matches!(
            mixture_improvement(&dd, &mult, &mult, &y),
            Err(Error::MeanNotZero(_))
        ));
    }
}
