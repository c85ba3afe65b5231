//! Thin safe wrappers over `matrixmultiply::dgemm` for row-major buffers.
//!
//! The crate is built without its threading feature, so every product is
//! computed in one fixed accumulation order.

/// `c = a · b + beta · c` where `a` is `m × k`, `b` is `k × n`, `c` is `m × n`.
pub(crate) fn matmul(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    // SAFETY: lengths checked above; strides describe contiguous row-major storage.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = aᵀ · b + beta · c` where `a` is stored `k × m`, `b` is `k × n`.
pub(crate) fn matmul_tn(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    assert_eq!(a.len(), k * m);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    // SAFETY: lengths checked above; `a` is read through transposed strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            1,
            m as isize,
            b.as_ptr(),
            n as isize,
            1,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `c = a · bᵀ + beta · c` where `a` is `m × k`, `b` is stored `n × k`.
pub(crate) fn matmul_nt(m: usize, k: usize, n: usize, a: &[f64], b: &[f64], beta: f64, c: &mut [f64]) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), n * k);
    assert_eq!(c.len(), m * n);
    // SAFETY: lengths checked above; `b` is read through transposed strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            k as isize,
            1,
            b.as_ptr(),
            1,
            k as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    fn transpose(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
        let mut t = vec![0.0; x.len()];
        for r in 0..rows {
            for c in 0..cols {
                t[c * rows + r] = x[r * cols + c];
            }
        }
        t
    }

    #[test]
    fn products_agree_with_naive_loops() {
        let (m, k, n) = (5, 7, 3);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let expected = naive(m, k, n, &a, &b);

        let mut c = vec![0.0; m * n];
        matmul(m, k, n, &a, &b, 0.0, &mut c);
        let mut c_tn = vec![0.0; m * n];
        matmul_tn(m, k, n, &transpose(m, k, &a), &b, 0.0, &mut c_tn);
        let mut c_nt = vec![0.0; m * n];
        matmul_nt(m, k, n, &a, &transpose(k, n, &b), 0.0, &mut c_nt);

        for i in 0..m * n {
            assert!((c[i] - expected[i]).abs() < 1e-12);
            assert!((c_tn[i] - expected[i]).abs() < 1e-12);
            assert!((c_nt[i] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_do_not_depend_on_batch_size() {
        let (m, k, n) = (37, 300, 41);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.013).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.007).cos()).collect();
        let mut full = vec![0.0; m * n];
        matmul(m, k, n, &a, &b, 0.0, &mut full);
        for row in [0, 5, 36] {
            let mut single = vec![0.0; n];
            matmul(1, k, n, &a[row * k..(row + 1) * k], &b, 0.0, &mut single);
            assert_eq!(&full[row * n..(row + 1) * n], &single[..]);
        }
    }
}
