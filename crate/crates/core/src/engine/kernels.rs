//! Raw numeric kernels behind the tape ops. Everything here works on flat
//! row-major slices; shape validation happens in the tape layer.

/// `c = op(a) · op(b) + beta · c` with `op(a)` of size m×k and `op(b)` of size k×n,
/// all buffers row-major. `a_t` / `b_t` read the stored matrix transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the asserts above guarantee every strided access stays inside the
    // slices, and `c` does not alias `a` or `b` (distinct borrows).
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub cin: usize,
    pub h: usize,
    pub w: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    fn col_rows(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn col_len(&self) -> usize {
        self.col_rows() * self.oh * self.ow
    }
}

fn im2col(x: &[f64], g: &ConvGeom, col: &mut [f64]) {
    let (h, w, oh, ow, pad) = (g.h as isize, g.w as isize, g.oh, g.ow, g.pad as isize);
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh as isize {
            for kj in 0..g.kw as isize {
                let dst = &mut col[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = oy as isize + ki - pad;
                    let line = &mut dst[oy * ow..(oy + 1) * ow];
                    if iy < 0 || iy >= h {
                        line.iter_mut().for_each(|v| *v = 0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = ox as isize + kj - pad;
                        *v = if ix < 0 || ix >= w { 0.0 } else { src[ix as usize] };
                    }
                }
                row += 1;
            }
        }
    }
}

fn col2im_add(col: &[f64], g: &ConvGeom, dx: &mut [f64]) {
    let (h, w, oh, ow, pad) = (g.h as isize, g.w as isize, g.oh, g.ow, g.pad as isize);
    let mut row = 0;
    for ci in 0..g.cin {
        let plane = &mut dx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh as isize {
            for kj in 0..g.kw as isize {
                let src = &col[row * oh * ow..(row + 1) * oh * ow];
                for oy in 0..oh {
                    let iy = oy as isize + ki - pad;
                    if iy < 0 || iy >= h {
                        continue;
                    }
                    let line = &src[oy * ow..(oy + 1) * ow];
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter().enumerate() {
                        let ix = ox as isize + kj - pad;
                        if ix >= 0 && ix < w {
                            dst[ix as usize] += v;
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

/// Cross-correlation forward. Returns the output and the per-sample im2col
/// buffers, which the backward pass reuses.
pub(crate) fn conv2d_forward(
    x: &[f64],
    weight: &[f64],
    bias: Option<&[f64]>,
    g: &ConvGeom,
) -> (Vec<f64>, Vec<f64>) {
    let out_plane = g.oh * g.ow;
    let mut cols = vec![0.0; g.n * g.col_len()];
    let mut y = vec![0.0; g.n * g.cout * out_plane];
    let in_len = g.cin * g.h * g.w;
    for s in 0..g.n {
        let col = &mut cols[s * g.col_len()..(s + 1) * g.col_len()];
        im2col(&x[s * in_len..(s + 1) * in_len], g, col);
        let ys = &mut y[s * g.cout * out_plane..(s + 1) * g.cout * out_plane];
        if let Some(b) = bias {
            for (co, chunk) in ys.chunks_mut(out_plane).enumerate() {
                chunk.iter_mut().for_each(|v| *v = b[co]);
            }
        }
        gemm(
            g.cout,
            g.col_rows(),
            out_plane,
            weight,
            false,
            col,
            false,
            if bias.is_some() { 1.0 } else { 0.0 },
            ys,
        );
    }
    (y, cols)
}

pub(crate) struct ConvGrads {
    pub dx: Option<Vec<f64>>,
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
}

pub(crate) fn conv2d_backward(
    cols: &[f64],
    weight: &[f64],
    dy: &[f64],
    g: &ConvGeom,
    need: (bool, bool, bool),
) -> ConvGrads {
    let out_plane = g.oh * g.ow;
    let rows = g.col_rows();
    let mut dx = need.0.then(|| vec![0.0; g.n * g.cin * g.h * g.w]);
    let mut dw = need.1.then(|| vec![0.0; g.cout * rows]);
    let mut db = need.2.then(|| vec![0.0; g.cout]);
    let mut dcol = if need.0 { vec![0.0; g.col_len()] } else { Vec::new() };
    let in_len = g.cin * g.h * g.w;
    for s in 0..g.n {
        let dys = &dy[s * g.cout * out_plane..(s + 1) * g.cout * out_plane];
        let col = &cols[s * g.col_len()..(s + 1) * g.col_len()];
        if let Some(dw) = dw.as_mut() {
            gemm(g.cout, out_plane, rows, dys, false, col, true, 1.0, dw);
        }
        if let Some(db) = db.as_mut() {
            for (co, chunk) in dys.chunks(out_plane).enumerate() {
                db[co] += chunk.iter().sum::<f64>();
            }
        }
        if let Some(dx) = dx.as_mut() {
            gemm(rows, g.cout, out_plane, weight, true, dys, false, 0.0, &mut dcol);
            col2im_add(&dcol, g, &mut dx[s * in_len..(s + 1) * in_len]);
        }
    }
    ConvGrads { dx, dw, db }
}

/// 2×2 max-pool. Returns pooled values and, per output cell, the flat index of
/// the selected input element. Ties keep the lowest linear index.
pub(crate) fn maxpool2x2(x: &[f64], n: usize, c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut idx = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let cand = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[cand] > x[best] {
                        best = cand;
                    }
                }
                out.push(x[best]);
                idx.push(best);
            }
        }
    }
    (out, idx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_transposes() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(2, 2, 2, &a, false, &b, false, 0.0, &mut c);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(2, 2, 2, &a, true, &b, false, 0.0, &mut c);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(2, 2, 2, &a, false, &b, true, 0.0, &mut c);
        assert_eq!(c, [17.0, 23.0, 39.0, 53.0]);
    }

    #[test]
    fn pool_picks_first_of_ties() {
        let x = [1.0, 1.0, 1.0, 1.0];
        let (v, i) = maxpool2x2(&x, 1, 1, 2, 2);
        assert_eq!(v, vec![1.0]);
        assert_eq!(i, vec![0]);
    }
}
