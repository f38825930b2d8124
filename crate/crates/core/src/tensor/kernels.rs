// Row-major dense kernels. Every kernel accumulates into its output.
//
// Reductions use eight independent partial sums in a fixed order, so results
// do not depend on which instruction set the dispatcher selects.

#[inline(always)]
fn dot_impl(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let ra = ca.remainder();
    let rb = cb.remainder();
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail
}

#[inline(always)]
fn axpy_impl(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// c[m×n] += a[m×k] · b[n×k]ᵀ
#[inline(always)]
fn gemm_nt_impl(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for j in 0..n {
        let bj = &b[j * k..(j + 1) * k];
        for i in 0..m {
            c[i * n + j] += dot_impl(&a[i * k..(i + 1) * k], bj);
        }
    }
}

/// c[m×n] += a[m×k] · b[k×n]
#[inline(always)]
fn gemm_nn_impl(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for p in 0..k {
        let bp = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let alpha = a[i * k + p];
            if alpha != 0.0 {
                axpy_impl(alpha, bp, &mut c[i * n..(i + 1) * n]);
            }
        }
    }
}

/// c[m×n] += a[k×m]ᵀ · b[k×n]
#[inline(always)]
fn gemm_tn_impl(a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize) {
    for i in 0..m {
        let ci = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let alpha = a[p * m + i];
            if alpha != 0.0 {
                axpy_impl(alpha, &b[p * n..(p + 1) * n], ci);
            }
        }
    }
}

macro_rules! dispatch {
    ($name:ident, $impl_fn:ident, $avx:ident, ($($arg:ident : $ty:ty),*) $(-> $ret:ty)?) => {
        #[cfg(target_arch = "x86_64")]
        #[target_feature(enable = "avx2")]
        unsafe fn $avx($($arg: $ty),*) $(-> $ret)? {
            $impl_fn($($arg),*)
        }

        pub fn $name($($arg: $ty),*) $(-> $ret)? {
            #[cfg(target_arch = "x86_64")]
            {
                if std::is_x86_feature_detected!("avx2") {
                    // SAFETY: the CPU supports AVX2, checked just above.
                    return unsafe { $avx($($arg),*) };
                }
            }
            $impl_fn($($arg),*)
        }
    };
}

dispatch!(axpy, axpy_impl, axpy_avx2, (alpha: f64, x: &[f64], y: &mut [f64]));
dispatch!(gemm_nt, gemm_nt_impl, gemm_nt_avx2, (a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize));
dispatch!(gemm_nn, gemm_nn_impl, gemm_nn_avx2, (a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize));
dispatch!(gemm_tn, gemm_tn_impl, gemm_tn_avx2, (a: &[f64], b: &[f64], c: &mut [f64], m: usize, k: usize, n: usize));
