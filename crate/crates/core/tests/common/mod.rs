//! Independent oracles and random inputs shared by the integration tests.
//! Nothing here calls the library's own products or materializations.

#![allow(dead_code)]

use std::f64::consts::PI;

use modewise_jl::{DenseTensor, Matrix, SeededRng, C64};

pub fn c(v: f64) -> C64 {
    C64::new(v, 0.0)
}

pub fn complex_normal(rng: &mut SeededRng) -> C64 {
    C64::new(rng.standard_normal(), rng.standard_normal())
}

pub fn random_vec(n: usize, rng: &mut SeededRng) -> Vec<C64> {
    (0..n).map(|_| complex_normal(rng)).collect()
}

pub fn random_tensor(shape: &[usize], rng: &mut SeededRng) -> DenseTensor {
    let len = shape.iter().product();
    DenseTensor::new(shape.to_vec(), random_vec(len, rng)).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut SeededRng) -> Matrix {
    Matrix::new(rows, cols, random_vec(rows * cols, rng)).unwrap()
}

pub fn random_shape(d: usize, max: usize, rng: &mut SeededRng) -> Vec<usize> {
    (0..d).map(|_| 1 + rng.distinct_sorted(max, 1)[0]).collect()
}

pub fn vnorm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `‖a − b‖ / ‖b‖`, or `‖a − b‖` when `b` is zero.
pub fn rel_err(a: &[C64], b: &[C64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    let scale = vnorm(b);
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// Multi-index of a colexicographic offset.
pub fn multi_index(mut offset: usize, shape: &[usize]) -> Vec<usize> {
    shape
        .iter()
        .map(|&n| {
            let i = offset % n;
            offset /= n;
            i
        })
        .collect()
}

pub fn colex_offset(idx: &[usize], shape: &[usize]) -> usize {
    let mut off = 0;
    let mut stride = 1;
    for (&i, &n) in idx.iter().zip(shape) {
        off += i * stride;
        stride *= n;
    }
    off
}

/// `(X ×_j U)[…p…] = Σ_k U[p,k] X[…k…]` by direct index loops.
pub fn naive_mode_product(x: &DenseTensor, u: &Matrix, j: usize) -> DenseTensor {
    let mut shape = x.shape().to_vec();
    shape[j] = u.rows();
    let len: usize = shape.iter().product();
    let data = (0..len)
        .map(|off| {
            let idx = multi_index(off, &shape);
            let mut src = idx.clone();
            (0..u.cols())
                .map(|k| {
                    src[j] = k;
                    u[(idx[j], k)] * x.data()[colex_offset(&src, x.shape())]
                })
                .sum()
        })
        .collect();
    DenseTensor::new(shape, data).unwrap()
}

/// Mode-`j` unfolding built from its definition: entry `(i_j, col)` where
/// `col` enumerates the other modes in ascending order, smallest fastest.
pub fn naive_unfold(x: &DenseTensor, j: usize) -> Matrix {
    let shape = x.shape();
    let rest: Vec<usize> = (0..shape.len()).filter(|&l| l != j).collect();
    let rest_shape: Vec<usize> = rest.iter().map(|&l| shape[l]).collect();
    let cols: usize = rest_shape.iter().product();
    Matrix::from_fn(shape[j], cols, |i, col| {
        let r = multi_index(col, &rest_shape);
        let mut idx = vec![0; shape.len()];
        idx[j] = i;
        for (&l, &v) in rest.iter().zip(&r) {
            idx[l] = v;
        }
        x.data()[colex_offset(&idx, shape)]
    })
    .unwrap()
}

pub fn naive_matmul(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.rows());
    Matrix::from_fn(a.rows(), b.cols(), |i, j| {
        (0..a.cols()).map(|k| a[(i, k)] * b[(k, j)]).sum()
    })
    .unwrap()
}

pub fn naive_matvec(a: &Matrix, x: &[C64]) -> Vec<C64> {
    assert_eq!(a.cols(), x.len());
    (0..a.rows())
        .map(|i| (0..a.cols()).map(|k| a[(i, k)] * x[k]).sum())
        .collect()
}

/// `A ⊗ B` with `(A⊗B)[i·p+k, j·q+l] = A[i,j]·B[k,l]`.
pub fn kron(a: &Matrix, b: &Matrix) -> Matrix {
    let (p, q) = (b.rows(), b.cols());
    Matrix::from_fn(a.rows() * p, a.cols() * q, |row, col| {
        a[(row / p, col / q)] * b[(row % p, col % q)]
    })
    .unwrap()
}

/// `U_{d-1} ⊗ … ⊗ U_0`.
pub fn kron_chain(us: &[Matrix]) -> Matrix {
    let mut acc = us.last().unwrap().clone();
    for u in us.iter().rev().skip(1) {
        acc = kron(&acc, u);
    }
    acc
}

/// Rank-one tensor `v_0 ○ … ○ v_{d-1}`, entry by entry.
pub fn naive_outer(vs: &[Vec<C64>]) -> DenseTensor {
    let shape: Vec<usize> = vs.iter().map(Vec::len).collect();
    let len = shape.iter().product();
    let data = (0..len)
        .map(|off| {
            multi_index(off, &shape)
                .iter()
                .zip(vs)
                .map(|(&i, v)| v[i])
                .product()
        })
        .collect();
    DenseTensor::new(shape, data).unwrap()
}

/// `⟨x, y⟩ = Σ x_i conj(y_i)`.
pub fn dot(x: &[C64], y: &[C64]) -> C64 {
    x.iter().zip(y).map(|(a, b)| a * b.conj()).sum()
}

/// Dense `(1/√m) R F D` with `F[p,k] = exp(-2πi pk/n)`.
pub fn dense_fjlt(signs: &[f64], rows: &[usize]) -> Matrix {
    let n = signs.len();
    let scale = 1.0 / (rows.len() as f64).sqrt();
    Matrix::from_fn(rows.len(), n, |i, k| {
        let theta = -2.0 * PI * (rows[i] as f64) * (k as f64) / n as f64;
        C64::new(theta.cos(), theta.sin()) * scale * signs[k]
    })
    .unwrap()
}

/// Random `n × r` matrix with orthonormal columns (modified Gram–Schmidt).
pub fn orthonormal_columns(n: usize, r: usize, rng: &mut SeededRng) -> Matrix {
    assert!(r <= n);
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(r);
    while cols.len() < r {
        let mut v = random_vec(n, rng);
        for q in &cols {
            let p = dot(&v, q);
            for (a, b) in v.iter_mut().zip(q) {
                *a -= p * b;
            }
        }
        let nv = vnorm(&v);
        if nv > 1e-8 {
            cols.push(v.into_iter().map(|z| z / nv).collect());
        }
    }
    Matrix::from_columns(&cols).unwrap()
}

/// Random factors with unit columns.
pub fn unit_factors(shape: &[usize], r: usize, rng: &mut SeededRng) -> Vec<Matrix> {
    shape
        .iter()
        .map(|&n| {
            let cols: Vec<Vec<C64>> = (0..r)
                .map(|_| {
                    let v = random_vec(n, rng);
                    let nv = vnorm(&v);
                    v.into_iter().map(|z| z / nv).collect()
                })
                .collect();
            Matrix::from_columns(&cols).unwrap()
        })
        .collect()
}

/// `Σ_k α_k ○_ℓ y_k⁽ˡ⁾` entry by entry.
pub fn naive_cp(weights: &[C64], factors: &[Matrix]) -> DenseTensor {
    let shape: Vec<usize> = factors.iter().map(Matrix::rows).collect();
    let len = shape.iter().product();
    let data = (0..len)
        .map(|off| {
            let idx = multi_index(off, &shape);
            weights
                .iter()
                .enumerate()
                .map(|(k, w)| {
                    idx.iter()
                        .zip(factors)
                        .map(|(&i, f)| f[(i, k)])
                        .product::<C64>()
                        * w
                })
                .sum()
        })
        .collect();
    DenseTensor::new(shape, data).unwrap()
}

/// Gram matrix `G[k,h] = ⟨vect(B_k), vect(B_h)⟩` of the rank-one basis
/// tensors, computed from their dense expansions.
pub fn dense_basis_gram(factors: &[Matrix]) -> Vec<Vec<C64>> {
    let r = factors[0].cols();
    let basis: Vec<DenseTensor> = (0..r)
        .map(|k| naive_outer(&factors.iter().map(|f| f.column(k)).collect::<Vec<_>>()))
        .collect();
    (0..r)
        .map(|k| {
            (0..r)
                .map(|h| dot(basis[k].data(), basis[h].data()))
                .collect()
        })
        .collect()
}

/// Least squares through complex Gaussian elimination with partial pivoting
/// on the normal equations of an explicit design.
pub fn naive_ls(design: &Matrix, target: &[C64]) -> Vec<C64> {
    let r = design.cols();
    let mut a: Vec<Vec<C64>> = (0..r)
        .map(|k| {
            let mut row: Vec<C64> = (0..r)
                .map(|h| {
                    (0..design.rows())
                        .map(|i| design[(i, k)].conj() * design[(i, h)])
                        .sum()
                })
                .collect();
            row.push(
                (0..design.rows())
                    .map(|i| design[(i, k)].conj() * target[i])
                    .sum(),
            );
            row
        })
        .collect();
    for col in 0..r {
        let piv = (col..r)
            .max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm()))
            .unwrap();
        a.swap(col, piv);
        for row in col + 1..r {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col].clone();
            for (dst, v) in a[row][col..].iter_mut().zip(&pivot_row[col..]) {
                *dst -= f * v;
            }
        }
    }
    let mut x = vec![C64::new(0.0, 0.0); r];
    for row in (0..r).rev() {
        let s: C64 = (row + 1..r).map(|k| a[row][k] * x[k]).sum();
        x[row] = (a[row][r] - s) / a[row][row];
    }
    x
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn sample_std(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}
