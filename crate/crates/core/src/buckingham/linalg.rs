//! Exact Gaussian elimination over the rationals.

use num_traits::Zero;

use crate::dimension::Rational;

/// Row-major dense matrix of rationals.
pub type RationalMatrix = Vec<Vec<Rational>>;

/// Reduces `m` in place to row echelon form and returns its rank.
fn echelon(m: &mut RationalMatrix) -> usize {
    let rows = m.len();
    let cols = m.first().map_or(0, Vec::len);
    let mut rank = 0;
    for col in 0..cols {
        let Some(pivot) = (rank..rows).find(|&r| !m[r][col].is_zero()) else {
            continue;
        };
        m.swap(rank, pivot);
        let p = m[rank][col];
        for r in (rank + 1)..rows {
            let factor = m[r][col] / p;
            if factor.is_zero() {
                continue;
            }
            for c in col..cols {
                let delta = factor * m[rank][c];
                m[r][c] -= delta;
            }
        }
        rank += 1;
        if rank == rows {
            break;
        }
    }
    rank
}

pub fn rank(m: &RationalMatrix) -> usize {
    let mut work = m.clone();
    echelon(&mut work)
}

/// Rank of the columns `cols` of `m`.
pub fn column_rank(m: &RationalMatrix, cols: &[usize]) -> usize {
    let sub: RationalMatrix = m.iter().map(|row| cols.iter().map(|&c| row[c]).collect()).collect();
    rank(&sub)
}

/// Whether `b` lies in the column space of `a`.
pub fn in_column_space(a: &RationalMatrix, b: &[Rational]) -> bool {
    let augmented: RationalMatrix = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    rank(a) == rank(&augmented)
}

/// Solves the square system `a x = b` exactly; `None` if `a` is singular.
pub fn solve(a: &RationalMatrix, b: &[Rational]) -> Option<Vec<Rational>> {
    let n = a.len();
    let mut m: RationalMatrix = a
        .iter()
        .zip(b)
        .map(|(row, &bi)| {
            debug_assert_eq!(row.len(), n);
            let mut r = row.clone();
            r.push(bi);
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, pivot);
        let p = m[col][col];
        for c in col..=n {
            m[col][c] /= p;
        }
        for r in 0..n {
            if r == col || m[r][col].is_zero() {
                continue;
            }
            let factor = m[r][col];
            for c in col..=n {
                let delta = factor * m[col][c];
                m[r][c] -= delta;
            }
        }
    }
    Some(m.into_iter().map(|row| row[n]).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[i64]]) -> RationalMatrix {
        rows.iter().map(|r| r.iter().map(|&v| Rational::from_integer(v)).collect()).collect()
    }

    fn vec_r(v: &[i64]) -> Vec<Rational> {
        v.iter().map(|&x| Rational::from_integer(x)).collect()
    }

    #[test]
    fn rank_by_hand() {
        // columns y0 = L, V0 = L T^-1 over rows (L, T)
        assert_eq!(rank(&mat(&[&[1, 1], &[0, -1]])), 2);
        assert_eq!(rank(&mat(&[&[1, 1], &[0, 0]])), 1);
        assert_eq!(rank(&mat(&[&[0, 0], &[0, 0]])), 0);
        assert_eq!(rank(&mat(&[&[1, 2, 3], &[2, 4, 6], &[1, 0, 1]])), 2);
    }

    #[test]
    fn solve_exact() {
        // basis (t, g) over rows (L, T): t = [0, 1], g = [1, -2]; target y0 = L
        let a = mat(&[&[0, 1], &[1, -2]]);
        assert_eq!(solve(&a, &vec_r(&[1, 0])).unwrap(), vec_r(&[2, 1]));
        assert!(solve(&mat(&[&[1, 1], &[1, 1]]), &vec_r(&[1, 0])).is_none());
        let half = solve(&mat(&[&[2]]), &vec_r(&[1])).unwrap();
        assert_eq!(half[0], Rational::new(1, 2));
    }

    #[test]
    fn column_space_membership() {
        // two pure-L columns cannot reach T
        let a = mat(&[&[1, 1], &[0, 0]]);
        assert!(in_column_space(&a, &vec_r(&[3, 0])));
        assert!(!in_column_space(&a, &vec_r(&[2, -1])));
    }
}
