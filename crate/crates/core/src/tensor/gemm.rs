//! Strided matrix multiply, `C <- alpha * A B + beta * C`, backed by the
//! packed SIMD kernels of `matrixmultiply`.

/// Row and column stride of a matrix view, in elements.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Layout {
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl Layout {
    pub fn row_major(rows: usize, cols: usize) -> Self {
        Layout {
            rows,
            cols,
            rs: cols,
            cs: 1,
        }
    }

    pub fn with_row_stride(mut self, rs: usize) -> Self {
        self.rs = rs;
        self
    }

    fn span(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs + 1
        }
    }
}

pub trait Gemm: Copy {
    /// # Safety
    /// Pointers and strides must describe in-bounds views; see `matrixmultiply`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Gemm for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Gemm for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// `c <- alpha * a * b + beta * c`. With `beta == 0` the previous contents of
/// `c` are ignored.
pub(crate) fn gemm<T: Gemm>(
    alpha: T,
    a: &[T],
    la: Layout,
    b: &[T],
    lb: Layout,
    beta: T,
    c: &mut [T],
    lc: Layout,
) {
    assert_eq!(la.cols, lb.rows, "gemm inner dimension");
    assert_eq!(la.rows, lc.rows, "gemm output rows");
    assert_eq!(lb.cols, lc.cols, "gemm output cols");
    assert!(la.span() <= a.len(), "gemm: A view out of bounds");
    assert!(lb.span() <= b.len(), "gemm: B view out of bounds");
    assert!(lc.span() <= c.len(), "gemm: C view out of bounds");
    if lc.rows == 0 || lc.cols == 0 {
        return;
    }
    // SAFETY: every view was bounds-checked above and `c` is uniquely borrowed.
    unsafe {
        T::gemm_raw(
            la.rows,
            la.cols,
            lb.cols,
            alpha,
            a.as_ptr(),
            la.rs as isize,
            la.cs as isize,
            b.as_ptr(),
            lb.rs as isize,
            lb.cs as isize,
            beta,
            c.as_mut_ptr(),
            lc.rs as isize,
            lc.cs as isize,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_naive_product_with_transposes() {
        // a: 2x3, b stored as 4x3 and used transposed (3x4).
        let a = [1.0f64, 2.0, 3.0, 4.0, 5.0, 6.0];
        let b: Vec<f64> = (0..12).map(|v| v as f64 * 0.5 - 1.0).collect();
        let mut c = vec![f64::NAN; 8];
        gemm(
            1.0,
            &a,
            Layout::row_major(2, 3),
            &b,
            Layout {
                rows: 3,
                cols: 4,
                rs: 1,
                cs: 3,
            },
            0.0,
            &mut c,
            Layout::row_major(2, 4),
        );
        for i in 0..2 {
            for j in 0..4 {
                let want: f64 = (0..3).map(|p| a[i * 3 + p] * b[j * 3 + p]).sum();
                assert_eq!(c[i * 4 + j], want);
            }
        }
    }
}
