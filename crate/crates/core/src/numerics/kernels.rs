//! Slice-level dense kernels shared by `Matrix` and the nn layers.
//!
//! All kernels accumulate over the inner dimension in ascending index order, one fused
//! multiply-add at a time per output entry, so results do not depend on vector width.

/// `out[m×n] += a[m×k] · b[k×n]`
pub(crate) fn gemm_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k);
    gemm_strided(a, (k, 1), b, out, m, k, n);
}

/// `out[k×n] += aᵀ · b` where `a` is `m×k` and `b` is `m×n`.
pub(crate) fn gemm_tn_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k);
    gemm_strided(a, (1, k), b, out, k, m, n);
}

/// `out[m×n] += A · b[k×n]` where entry `(i, p)` of `A` is `a[i·rs + p·ps]`.
fn gemm_strided(a: &[f64], (rs, ps): (usize, usize), b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    assert_eq!(b.len(), k * n);
    assert_eq!(out.len(), m * n);
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!((m - 1) * rs + (k - 1) * ps < a.len());
    let a = Strided { a, rs, ps };
    #[cfg(target_arch = "x86_64")]
    {
        if std::arch::is_x86_feature_detected!("avx512f") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { gemm_avx512(a, b, out, m, k, n) };
        }
        if std::arch::is_x86_feature_detected!("avx2") && std::arch::is_x86_feature_detected!("fma") {
            // SAFETY: the feature was detected at runtime.
            return unsafe { gemm_avx2(a, b, out, m, k, n) };
        }
    }
    gemm_tiled::<4, 4>(a, b, out, m, k, n);
}

#[derive(Clone, Copy)]
struct Strided<'a> {
    a: &'a [f64],
    rs: usize,
    ps: usize,
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx512f,fma")]
unsafe fn gemm_avx512(a: Strided, b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    gemm_tiled::<8, 16>(a, b, out, m, k, n);
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn gemm_avx2(a: Strided, b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    gemm_tiled::<4, 8>(a, b, out, m, k, n);
}

/// Register-tiled product: an `MR × NR` block of `out` stays in registers while the
/// inner index runs. Each entry still sums its products in ascending order starting
/// from its previous value, so the result is identical for every tile size.
#[inline(always)]
fn gemm_tiled<const MR: usize, const NR: usize>(a: Strided, b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    let Strided { a, rs, ps } = a;
    assert!(b.len() == k * n && out.len() == m * n);
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * rs + (k - 1) * ps < a.len());
    let full_rows = m - m % MR;
    let full_cols = n - n % NR;
    let (ap, bp, op) = (a.as_ptr(), b.as_ptr(), out.as_mut_ptr());
    for i in (0..full_rows).step_by(MR) {
        for j in (0..full_cols).step_by(NR) {
            // SAFETY: the asserts above bound every A offset (i + r)·rs + p·ps with
            // i + r < m and p < k; j + NR ≤ n keeps the B and out offsets in bounds.
            unsafe {
                let mut acc = [[0.0f64; NR]; MR];
                for r in 0..MR {
                    for c in 0..NR {
                        acc[r][c] = *op.add((i + r) * n + j + c);
                    }
                }
                let mut brow = bp.add(j);
                for p in 0..k {
                    let bv: [f64; NR] = std::array::from_fn(|c| *brow.add(c));
                    for r in 0..MR {
                        let av = *ap.add((i + r) * rs + p * ps);
                        for c in 0..NR {
                            acc[r][c] = av.mul_add(bv[c], acc[r][c]);
                        }
                    }
                    brow = brow.add(n);
                }
                for r in 0..MR {
                    for c in 0..NR {
                        *op.add((i + r) * n + j + c) = acc[r][c];
                    }
                }
            }
        }
        for r in 0..MR {
            for j in full_cols..n {
                let mut s = out[(i + r) * n + j];
                for p in 0..k {
                    s = a[(i + r) * rs + p * ps].mul_add(b[p * n + j], s);
                }
                out[(i + r) * n + j] = s;
            }
        }
    }
    for i in full_rows..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for (p, b_row) in b.chunks_exact(n).enumerate() {
            let av = a[i * rs + p * ps];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o = av.mul_add(bv, *o);
            }
        }
    }
}

/// `out[m×n] += a · bᵀ` where `a` is `m×k` and `b` is `n×k`.
pub(crate) fn gemm_nt_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    let bt = transpose(b, n, k);
    gemm_acc(a, &bt, out, m, k, n);
}

pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), rows * cols);
    let mut t = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            t[j * rows + i] = a[i * cols + j];
        }
    }
    t
}
