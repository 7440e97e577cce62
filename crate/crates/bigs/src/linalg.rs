//! Exact Gaussian elimination over the rationals.
//!
//! Pivots are chosen as the first nonzero entry in canonical order (top to
//! bottom, left to right), so ranks, bases and particular solutions are
//! deterministic and reproducible across runs.

use num_traits::{One, Zero};

use crate::ratio::Ratio;

/// Reduces `mat` to reduced row echelon form in place and returns the pivot
/// column of each nonzero row, in order.
pub fn rref(mat: &mut [Vec<Ratio>]) -> Vec<usize> {
    let rows = mat.len();
    let cols = if rows == 0 { 0 } else { mat[0].len() };
    let mut pivots = Vec::new();
    let mut row = 0;

    for col in 0..cols {
        let Some(pivot_row) = (row..rows).find(|&r| !mat[r][col].is_zero()) else {
            continue;
        };
        mat.swap(row, pivot_row);

        let pivot = mat[row][col].clone();
        if !pivot.is_one() {
            for entry in &mut mat[row][col..] {
                *entry /= &pivot;
            }
        }

        let pivot_row = mat[row].clone();
        for (other, target) in mat.iter_mut().enumerate() {
            if other == row || target[col].is_zero() {
                continue;
            }
            let factor = target[col].clone();
            for (entry, pivot_entry) in target[col..].iter_mut().zip(&pivot_row[col..]) {
                *entry -= &factor * pivot_entry;
            }
        }

        pivots.push(col);
        row += 1;
        if row == rows {
            break;
        }
    }
    pivots
}

pub fn rank(mat: &[Vec<Ratio>]) -> usize {
    let mut work = mat.to_vec();
    rref(&mut work).len()
}

/// Basis of the row space: the nonzero rows of the reduced echelon form.
pub fn row_space_basis(mat: &[Vec<Ratio>]) -> Vec<Vec<Ratio>> {
    let mut work = mat.to_vec();
    let pivots = rref(&mut work);
    work.truncate(pivots.len());
    work
}

/// Basis of the kernel (right null space), one vector per free column.
pub fn kernel_basis(mat: &[Vec<Ratio>]) -> Vec<Vec<Ratio>> {
    let cols = if mat.is_empty() { 0 } else { mat[0].len() };
    let mut work = mat.to_vec();
    let pivots = rref(&mut work);

    let mut basis = Vec::with_capacity(cols - pivots.len());
    for free in 0..cols {
        if pivots.contains(&free) {
            continue;
        }
        let mut vector = vec![Ratio::zero(); cols];
        vector[free] = Ratio::one();
        for (row, &pivot_col) in pivots.iter().enumerate() {
            vector[pivot_col] = -work[row][free].clone();
        }
        basis.push(vector);
    }
    basis
}

/// One exact solution of `A x = b` with free variables set to zero, or
/// `None` if the system is inconsistent.
pub fn solve(matrix: &[Vec<Ratio>], rhs: &[Ratio]) -> Option<Vec<Ratio>> {
    let rows = matrix.len();
    let cols = if rows == 0 { 0 } else { matrix[0].len() };
    assert_eq!(rows, rhs.len(), "system shape mismatch");

    let mut work: Vec<Vec<Ratio>> = matrix
        .iter()
        .zip(rhs)
        .map(|(row, b)| {
            let mut r = row.clone();
            r.push(b.clone());
            r
        })
        .collect();
    let pivots = rref(&mut work);

    if pivots.last() == Some(&cols) {
        return None; // pivot in the augmented column
    }

    let mut solution = vec![Ratio::zero(); cols];
    for (row, &col) in pivots.iter().enumerate() {
        solution[col] = work[row][cols].clone();
    }
    Some(solution)
}

/// Matrix-vector product.
pub fn mat_vec(matrix: &[Vec<Ratio>], vector: &[Ratio]) -> Vec<Ratio> {
    matrix
        .iter()
        .map(|row| {
            row.iter()
                .zip(vector)
                .fold(Ratio::zero(), |acc, (a, b)| acc + a * b)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ratio::{int, ratio};

    fn m(entries: &[&[i64]]) -> Vec<Vec<Ratio>> {
        entries
            .iter()
            .map(|row| row.iter().map(|&v| int(v)).collect())
            .collect()
    }

    #[test]
    fn rank_of_identity_and_singular() {
        assert_eq!(rank(&m(&[&[1, 0], &[0, 1]])), 2);
        assert_eq!(rank(&m(&[&[1, 2], &[2, 4]])), 1);
        assert_eq!(rank(&m(&[&[0, 0], &[0, 0]])), 0);
    }

    #[test]
    fn kernel_vectors_annihilate() {
        let a = m(&[
            &[1, 1, 1, 0, 0, 0],
            &[1, 0, 0, 1, 1, 0],
            &[0, 1, 0, 1, 0, 1],
            &[0, 0, 1, 0, 1, 1],
        ]);
        let basis = kernel_basis(&a);
        assert_eq!(basis.len(), 2);
        for vector in &basis {
            for value in mat_vec(&a, vector) {
                assert_eq!(value, int(0));
            }
        }
        assert_eq!(rank(&a) + basis.len(), 6);
    }

    #[test]
    fn solve_consistent_and_inconsistent() {
        let a = m(&[&[1, 2], &[3, 4]]);
        let x = solve(&a, &[int(5), int(11)]).unwrap();
        assert_eq!(x, vec![int(1), int(2)]);

        let singular = m(&[&[1, 1], &[2, 2]]);
        assert!(solve(&singular, &[int(1), int(3)]).is_none());
        let under = solve(&singular, &[int(1), int(2)]).unwrap();
        assert_eq!(under, vec![int(1), int(0)]); // free variable pinned to zero

        let wide = m(&[&[2, 0, 0]]);
        assert_eq!(
            solve(&wide, &[int(1)]).unwrap(),
            vec![ratio(1, 2), int(0), int(0)]
        );
    }

    #[test]
    fn row_basis_spans_rows() {
        let a = m(&[&[1, 2, 3], &[2, 4, 6], &[0, 1, 1]]);
        let basis = row_space_basis(&a);
        assert_eq!(basis.len(), 2);
        // every original row solves in the basis coordinates
        for row in &a {
            let basis_t: Vec<Vec<Ratio>> = (0..3)
                .map(|c| basis.iter().map(|b| b[c].clone()).collect())
                .collect();
            assert!(solve(&basis_t, row).is_some());
        }
    }
}
