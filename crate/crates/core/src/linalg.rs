//! Dense symmetric-indefinite factorization for KKT systems.
//!
//! [`SymmetricIndefinite`] computes `P S Pᵀ = L D Lᵀ` with Bunch-Kaufman
//! partial pivoting: `L` is unit lower triangular, `D` is block diagonal with
//! 1×1 and 2×2 blocks, and `P` is a single global permutation. Only the lower
//! triangle of the input is read.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot threshold: a pivot below `PIVOT_TOL · max|S_ij|` is singular.
pub const PIVOT_TOL: f64 = 1e-14;

const BK_ALPHA: f64 = 0.640_388_203_202_208_4; // (1 + sqrt(17)) / 8

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Pivot {
    One,
    Two,
}

#[derive(Clone, Debug)]
pub struct SymmetricIndefinite {
    n: usize,
    // column-major; strictly lower part holds L, block diagonal holds D
    a: Vec<f64>,
    // perm[i] = original index placed at position i
    perm: Vec<usize>,
    pivots: Vec<(usize, Pivot)>,
}

impl SymmetricIndefinite {
    pub fn factor(s: &DMatrix<f64>) -> Result<Self> {
        let n = s.nrows();
        if s.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: s.ncols(),
                context: "KKT matrix must be square",
            });
        }
        let mut a = s.as_slice().to_vec();
        let max_abs = a.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        if !max_abs.is_finite() {
            return Err(Error::Diverged {
                iteration: 0,
                reason: "non-finite entry in KKT matrix".into(),
            });
        }
        let thresh = PIVOT_TOL * max_abs;
        let mut perm: Vec<usize> = (0..n).collect();
        let mut pivots = Vec::with_capacity(n);
        let idx = |i: usize, j: usize| i + j * n;

        let mut k = 0;
        while k < n {
            let absakk = a[idx(k, k)].abs();
            let (mut imax, mut colmax) = (k, 0.0);
            for i in (k + 1)..n {
                let v = a[idx(i, k)].abs();
                if v > colmax {
                    colmax = v;
                    imax = i;
                }
            }
            if absakk.max(colmax) <= thresh {
                return Err(Error::LinearSolveSingular {
                    column: k,
                    pivot: absakk.max(colmax),
                    threshold: thresh,
                });
            }

            let (kp, kind) = if absakk >= BK_ALPHA * colmax {
                (k, Pivot::One)
            } else {
                let mut rowmax = 0.0_f64;
                for j in k..imax {
                    rowmax = rowmax.max(a[idx(imax, j)].abs());
                }
                for j in (imax + 1)..n {
                    rowmax = rowmax.max(a[idx(j, imax)].abs());
                }
                if absakk * rowmax >= BK_ALPHA * colmax * colmax {
                    (k, Pivot::One)
                } else if a[idx(imax, imax)].abs() >= BK_ALPHA * rowmax {
                    (imax, Pivot::One)
                } else {
                    (imax, Pivot::Two)
                }
            };
            let kstep = if kind == Pivot::One { 1 } else { 2 };
            let kk = k + kstep - 1;

            if kp != kk {
                // symmetric interchange of kk and kp (kp > kk), lower storage
                a.swap(idx(kk, kk), idx(kp, kp));
                for j in (kk + 1)..kp {
                    a.swap(idx(j, kk), idx(kp, j));
                }
                for i in (kp + 1)..n {
                    a.swap(idx(i, kk), idx(i, kp));
                }
                for j in 0..kk {
                    a.swap(idx(kk, j), idx(kp, j));
                }
                perm.swap(kk, kp);
            }

            match kind {
                Pivot::One => {
                    let d = a[idx(k, k)];
                    if d.abs() <= thresh {
                        return Err(Error::LinearSolveSingular {
                            column: k,
                            pivot: d.abs(),
                            threshold: thresh,
                        });
                    }
                    let (head, tail) = a.split_at_mut((k + 1) * n);
                    let colk = &mut head[k * n..];
                    let w: Vec<f64> = colk[(k + 1)..n].to_vec();
                    for i in (k + 1)..n {
                        colk[i] /= d;
                    }
                    for j in (k + 1)..n {
                        let wj = w[j - k - 1];
                        if wj == 0.0 {
                            continue;
                        }
                        let colj = &mut tail[(j - k - 1) * n..(j - k) * n];
                        for i in j..n {
                            colj[i] -= colk[i] * wj;
                        }
                    }
                }
                Pivot::Two => {
                    let d11 = a[idx(k, k)];
                    let d21 = a[idx(k + 1, k)];
                    let d22 = a[idx(k + 1, k + 1)];
                    let det = d11 * d22 - d21 * d21;
                    let scale = d11.abs().max(d21.abs()).max(d22.abs());
                    if det.abs() <= thresh * scale {
                        return Err(Error::LinearSolveSingular {
                            column: k,
                            pivot: det.abs() / scale.max(f64::MIN_POSITIVE),
                            threshold: thresh,
                        });
                    }
                    let (i11, i21, i22) = (d22 / det, -d21 / det, d11 / det);
                    let (head, tail) = a.split_at_mut((k + 2) * n);
                    let (c0, c1) = head[k * n..].split_at_mut(n);
                    let w0: Vec<f64> = c0[(k + 2)..n].to_vec();
                    let w1: Vec<f64> = c1[(k + 2)..n].to_vec();
                    for i in (k + 2)..n {
                        let (x0, x1) = (w0[i - k - 2], w1[i - k - 2]);
                        c0[i] = x0 * i11 + x1 * i21;
                        c1[i] = x0 * i21 + x1 * i22;
                    }
                    for j in (k + 2)..n {
                        let (wj0, wj1) = (w0[j - k - 2], w1[j - k - 2]);
                        if wj0 == 0.0 && wj1 == 0.0 {
                            continue;
                        }
                        let colj = &mut tail[(j - k - 2) * n..(j - k - 1) * n];
                        for i in j..n {
                            colj[i] -= c0[i] * wj0 + c1[i] * wj1;
                        }
                    }
                }
            }
            pivots.push((k, kind));
            k += kstep;
        }

        Ok(Self { n, a, perm, pivots })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of 2×2 pivot blocks used; nonzero means `S` was treated as indefinite.
    pub fn two_by_two_blocks(&self) -> usize {
        self.pivots.iter().filter(|(_, p)| *p == Pivot::Two).count()
    }

    /// Inertia `(positive, negative, zero)` read off the block diagonal.
    pub fn inertia(&self) -> (usize, usize, usize) {
        let n = self.n;
        let (mut pos, mut neg, mut zero) = (0, 0, 0);
        for &(k, kind) in &self.pivots {
            match kind {
                Pivot::One => {
                    let d = self.a[k + k * n];
                    if d > 0.0 {
                        pos += 1
                    } else if d < 0.0 {
                        neg += 1
                    } else {
                        zero += 1
                    }
                }
                // a 2x2 Bunch-Kaufman block always has negative determinant
                Pivot::Two => {
                    pos += 1;
                    neg += 1;
                }
            }
        }
        (pos, neg, zero)
    }

    pub fn solve(&self, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.n;
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                actual: rhs.len(),
                context: "right-hand side",
            });
        }
        let a = &self.a;
        let idx = |i: usize, j: usize| i + j * n;
        let mut y: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();

        for &(k, kind) in &self.pivots {
            match kind {
                Pivot::One => {
                    let yk = y[k];
                    if yk != 0.0 {
                        for i in (k + 1)..n {
                            y[i] -= a[idx(i, k)] * yk;
                        }
                    }
                }
                Pivot::Two => {
                    let (y0, y1) = (y[k], y[k + 1]);
                    for i in (k + 2)..n {
                        y[i] -= a[idx(i, k)] * y0 + a[idx(i, k + 1)] * y1;
                    }
                }
            }
        }
        for &(k, kind) in &self.pivots {
            match kind {
                Pivot::One => y[k] /= a[idx(k, k)],
                Pivot::Two => {
                    let (d11, d21, d22) = (a[idx(k, k)], a[idx(k + 1, k)], a[idx(k + 1, k + 1)]);
                    let det = d11 * d22 - d21 * d21;
                    let (y0, y1) = (y[k], y[k + 1]);
                    y[k] = (d22 * y0 - d21 * y1) / det;
                    y[k + 1] = (d11 * y1 - d21 * y0) / det;
                }
            }
        }
        for &(k, kind) in self.pivots.iter().rev() {
            match kind {
                Pivot::One => {
                    let mut acc = 0.0;
                    for i in (k + 1)..n {
                        acc += a[idx(i, k)] * y[i];
                    }
                    y[k] -= acc;
                }
                Pivot::Two => {
                    let (mut acc0, mut acc1) = (0.0, 0.0);
                    for i in (k + 2)..n {
                        acc0 += a[idx(i, k)] * y[i];
                        acc1 += a[idx(i, k + 1)] * y[i];
                    }
                    y[k] -= acc0;
                    y[k + 1] -= acc1;
                }
            }
        }

        let mut x = DVector::zeros(n);
        for (i, &p) in self.perm.iter().enumerate() {
            x[p] = y[i];
        }
        Ok(x)
    }
}

/// Solves `S Δx = rhs` for a symmetric (possibly indefinite) `S`, with one step
/// of iterative refinement.
pub fn solve_kkt_linear(s: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let fact = SymmetricIndefinite::factor(s)?;
    let mut x = fact.solve(rhs)?;
    let r = rhs - s * &x;
    x += fact.solve(&r)?;
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_orthogonal(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        m.qr().q()
    }

    #[test]
    fn identity() {
        let x = solve_kkt_linear(&DMatrix::identity(3, 3), &DVector::from_vec(vec![1.0, 2.0, 3.0]))
            .unwrap();
        assert_eq!(x.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn permutation_matrix_is_indefinite() {
        let s = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let x = solve_kkt_linear(&s, &DVector::from_vec(vec![3.0, -7.0])).unwrap();
        assert_relative_eq!(x[0], -7.0, epsilon = 1e-15);
        assert_relative_eq!(x[1], 3.0, epsilon = 1e-15);
        let f = SymmetricIndefinite::factor(&s).unwrap();
        assert_eq!(f.two_by_two_blocks(), 1);
        assert_eq!(f.inertia(), (1, 1, 0));
    }

    #[test]
    fn constructed_indefinite_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 20;
        let q = random_orthogonal(n, &mut rng);
        let d = DVector::from_fn(n, |i, _| {
            let mag = rng.random_range(0.5..5.0);
            if i % 3 == 0 { -mag } else { mag }
        });
        let s = &q * DMatrix::from_diagonal(&d) * q.transpose();
        let s = (&s + s.transpose()) * 0.5;
        let x_true = DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0));
        let x = solve_kkt_linear(&s, &(&s * &x_true)).unwrap();
        assert!((x - x_true).amax() < 1e-8);

        let f = SymmetricIndefinite::factor(&s).unwrap();
        assert_eq!(f.inertia(), (13, 7, 0));
    }

    #[test]
    fn saddle_point_with_zero_block() {
        // [[A, Bᵀ], [B, 0]] with A SPD and B full row rank
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.5, 0.0, 0.5, 2.0]);
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, -1.0]);
        let mut s = DMatrix::zeros(5, 5);
        s.view_mut((0, 0), (3, 3)).copy_from(&a);
        s.view_mut((3, 0), (2, 3)).copy_from(&b);
        s.view_mut((0, 3), (3, 2)).copy_from(&b.transpose());
        let rhs = DVector::from_vec(vec![1.0, -2.0, 0.5, 0.25, 3.0]);
        let x = solve_kkt_linear(&s, &rhs).unwrap();
        assert!((&s * &x - &rhs).norm() <= 1e-10 * (1.0 + rhs.norm()));
        assert_eq!(SymmetricIndefinite::factor(&s).unwrap().inertia(), (3, 2, 0));
    }

    #[test]
    fn singular_matrix_is_reported() {
        let s = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 3.0, 6.0, 9.0]);
        let err = SymmetricIndefinite::factor(&s).unwrap_err();
        assert!(matches!(err, Error::LinearSolveSingular { .. }));
    }

    #[test]
    fn redundant_constraints_are_singular() {
        // two identical constraint rows
        let s = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.0, 1.0, 1.0, //
                0.0, 1.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 0.0,
            ],
        );
        assert!(matches!(
            solve_kkt_linear(&s, &DVector::zeros(4)),
            Err(Error::LinearSolveSingular { .. })
        ));
    }

    #[test]
    fn rejects_non_square() {
        assert!(matches!(
            SymmetricIndefinite::factor(&DMatrix::zeros(2, 3)),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
