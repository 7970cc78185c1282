use crate::graph::Var;
use crate::scalar::{gemm, Scalar};
use crate::tensor::Tensor;

/// Geometry of a 2-D convolution reading a `c x h x w` plane stack and
/// producing `oh x ow` positions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(c: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Self {
        assert!(stride >= 1, "stride must be positive");
        assert!(
            h + 2 * pad >= k && w + 2 * pad >= k,
            "kernel {k} larger than padded input {h}x{w} (pad {pad})"
        );
        Self {
            c,
            h,
            w,
            k,
            stride,
            pad,
            oh: conv_out_dim(h, k, stride, pad),
            ow: conv_out_dim(w, k, stride, pad),
        }
    }

    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Half-open range of output positions whose tap `kj` lands inside an
    /// input axis of length `extent`.
    #[inline]
    fn valid_range(&self, kj: usize, out: usize, extent: usize) -> (usize, usize) {
        // ix = o * stride + kj - pad must lie in [0, extent)
        let lo = if kj >= self.pad {
            0
        } else {
            (self.pad - kj).div_ceil(self.stride)
        };
        let hi_excl = if extent + self.pad > kj {
            (extent + self.pad - kj).div_ceil(self.stride)
        } else {
            0
        };
        (lo.min(out), hi_excl.min(out))
    }
}

/// `floor((input + 2 pad - k) / stride) + 1`.
pub fn conv_out_dim(input: usize, k: usize, stride: usize, pad: usize) -> usize {
    (input + 2 * pad - k) / stride + 1
}

/// Unfolds one sample into a `(c*k*k) x (oh*ow)` column matrix.
pub(crate) fn im2col<T: Scalar>(src: &[T], g: &ConvGeom, cols: &mut [T]) {
    let p = g.positions();
    let xr: Vec<(usize, usize)> = (0..g.k).map(|kj| g.valid_range(kj, g.ow, g.w)).collect();
    for ci in 0..g.c {
        let plane = &src[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            let (ylo, yhi) = g.valid_range(ki, g.oh, g.h);
            for kj in 0..g.k {
                let row = (ci * g.k + ki) * g.k + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                let (olo, ohi) = xr[kj];
                for oy in 0..g.oh {
                    let line = &mut dst[oy * g.ow..(oy + 1) * g.ow];
                    if oy < ylo || oy >= yhi || olo >= ohi {
                        line.fill(T::zero());
                        continue;
                    }
                    let iy = oy * g.stride + ki - g.pad;
                    let src_row = &plane[iy * g.w..(iy + 1) * g.w];
                    line[..olo].fill(T::zero());
                    line[ohi..].fill(T::zero());
                    if g.stride == 1 {
                        let ix0 = olo + kj - g.pad;
                        line[olo..ohi].copy_from_slice(&src_row[ix0..ix0 + (ohi - olo)]);
                    } else {
                        for (ox, v) in line.iter_mut().enumerate().take(ohi).skip(olo) {
                            *v = src_row[ox * g.stride + kj - g.pad];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into `dst`.
pub(crate) fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, dst: &mut [T]) {
    let p = g.positions();
    for ci in 0..g.c {
        let plane = &mut dst[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.k {
            let (ylo, yhi) = g.valid_range(ki, g.oh, g.h);
            for kj in 0..g.k {
                let (olo, ohi) = g.valid_range(kj, g.ow, g.w);
                if olo >= ohi {
                    continue;
                }
                let row = (ci * g.k + ki) * g.k + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in ylo..yhi {
                    let iy = oy * g.stride + ki - g.pad;
                    let dst_row = &mut plane[iy * g.w..(iy + 1) * g.w];
                    let line = &src[oy * g.ow..(oy + 1) * g.ow];
                    for ox in olo..ohi {
                        dst_row[ox * g.stride + kj - g.pad] += line[ox];
                    }
                }
            }
        }
    }
}

fn add_bias<T: Scalar>(out: &mut [T], bias: &[T], plane: usize) {
    for (chunk, &b) in out.chunks_mut(plane).zip(bias.iter().cycle()) {
        for v in chunk {
            *v += b;
        }
    }
}

fn bias_grad<T: Scalar>(g: &Tensor<T>, channels: usize, plane: usize) -> Tensor<T> {
    let mut gb = vec![T::zero(); channels];
    for (i, chunk) in g.data().chunks(plane).enumerate() {
        gb[i % channels] += chunk.iter().copied().sum::<T>();
    }
    Tensor::new(vec![channels], gb).expect("bias shape")
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

impl<'g, T: Scalar> Var<'g, T> {
    /// Dense 2-D convolution with zero padding.
    ///
    /// `self: [n, c, h, w]`, `weight: [o, c, k, k]`, `bias: [o]`.
    pub fn conv2d(
        self,
        weight: Var<'g, T>,
        bias: Option<Var<'g, T>>,
        stride: usize,
        pad: usize,
    ) -> Var<'g, T> {
        let x = self.value();
        let w = weight.value();
        let (n, c, h, wd) = x.dims4().unwrap_or_else(|e| panic!("conv2d input: {e}"));
        let (o, wc, k, k2) = w.dims4().unwrap_or_else(|e| panic!("conv2d weight: {e}"));
        assert_eq!(wc, c, "conv2d: weight expects {wc} channels, input has {c}");
        assert_eq!(k, k2, "conv2d: square kernels only");
        let geom = ConvGeom::new(c, h, wd, k, stride, pad);
        let (rows, p) = (geom.rows(), geom.positions());
        let mut out = vec![T::zero(); n * o * p];
        let mut cols = vec![T::zero(); rows * p];
        for s in 0..n {
            im2col(&x.data()[s * c * h * wd..(s + 1) * c * h * wd], &geom, &mut cols);
            gemm(false, false, o, p, rows, T::one(), w.data(), &cols, T::zero(), &mut out[s * o * p..(s + 1) * o * p]);
        }
        let b = bias.map(|b| b.value());
        if let Some(b) = &b {
            assert_eq!(b.shape(), &[o], "conv2d: bias must be [{o}]");
            add_bias(&mut out, b.data(), p);
        }
        let y = Tensor::new(vec![n, o, geom.oh, geom.ow], out).expect("conv output");
        let mut parents = vec![self.id, weight.id];
        if let Some(b) = bias {
            parents.push(b.id);
        }
        self.graph.record(
            y,
            &parents,
            Box::new(move |g, _, needs| {
                let mut gx = needs[0].then(|| Tensor::zeros(vec![n, c, h, wd]));
                let mut gw = needs[1].then(|| Tensor::zeros(vec![o, c, k, k]));
                let mut cols = vec![T::zero(); rows * p];
                let mut dcols = vec![T::zero(); rows * p];
                for s in 0..n {
                    let gout = &g.data()[s * o * p..(s + 1) * o * p];
                    if let Some(gw) = gw.as_mut() {
                        im2col(&x.data()[s * c * h * wd..(s + 1) * c * h * wd], &geom, &mut cols);
                        gemm(false, true, o, rows, p, T::one(), gout, &cols, T::one(), gw.data_mut());
                    }
                    if let Some(gx) = gx.as_mut() {
                        gemm(true, false, rows, p, o, T::one(), w.data(), gout, T::zero(), &mut dcols);
                        col2im(&dcols, &geom, &mut gx.data_mut()[s * c * h * wd..(s + 1) * c * h * wd]);
                    }
                }
                let mut grads = vec![gx, gw];
                if needs.len() == 3 {
                    grads.push(needs[2].then(|| bias_grad(g, o, p)));
                }
                grads
            }),
        )
    }

    /// Transposed convolution (fractionally strided), the adjoint of
    /// [`conv2d`](Self::conv2d) with the same kernel geometry.
    ///
    /// `self: [n, ci, h, w]`, `weight: [ci, co, k, k]`, `bias: [co]`;
    /// output side is `(h - 1) * stride - 2 pad + k + out_pad`.
    pub fn conv_transpose2d(
        self,
        weight: Var<'g, T>,
        bias: Option<Var<'g, T>>,
        stride: usize,
        pad: usize,
        out_pad: usize,
    ) -> Var<'g, T> {
        let x = self.value();
        let w = weight.value();
        let (n, ci, h, wd) = x.dims4().unwrap_or_else(|e| panic!("conv_transpose2d input: {e}"));
        let (wci, co, k, _) = w.dims4().unwrap_or_else(|e| panic!("conv_transpose2d weight: {e}"));
        assert_eq!(wci, ci, "conv_transpose2d: weight expects {wci} channels, input has {ci}");
        assert!(out_pad < stride, "output padding must be smaller than stride");
        let oh = (h - 1) * stride + k + out_pad - 2 * pad;
        let ow = (wd - 1) * stride + k + out_pad - 2 * pad;
        let geom = ConvGeom::new(co, oh, ow, k, stride, pad);
        debug_assert_eq!((geom.oh, geom.ow), (h, wd));
        let (rows, p) = (geom.rows(), geom.positions());
        let plane_out = co * oh * ow;
        let mut out = vec![T::zero(); n * plane_out];
        let mut cols = vec![T::zero(); rows * p];
        for s in 0..n {
            gemm(true, false, rows, p, ci, T::one(), w.data(), &x.data()[s * ci * p..(s + 1) * ci * p], T::zero(), &mut cols);
            col2im(&cols, &geom, &mut out[s * plane_out..(s + 1) * plane_out]);
        }
        if let Some(b) = bias.map(|b| b.value()) {
            assert_eq!(b.shape(), &[co], "conv_transpose2d: bias must be [{co}]");
            add_bias(&mut out, b.data(), oh * ow);
        }
        let y = Tensor::new(vec![n, co, oh, ow], out).expect("convT output");
        let mut parents = vec![self.id, weight.id];
        if let Some(b) = bias {
            parents.push(b.id);
        }
        self.graph.record(
            y,
            &parents,
            Box::new(move |g, _, needs| {
                let mut gx = needs[0].then(|| Tensor::zeros(vec![n, ci, h, wd]));
                let mut gw = needs[1].then(|| Tensor::zeros(vec![ci, co, k, k]));
                let mut dcols = vec![T::zero(); rows * p];
                for s in 0..n {
                    im2col(&g.data()[s * plane_out..(s + 1) * plane_out], &geom, &mut dcols);
                    if let Some(gx) = gx.as_mut() {
                        gemm(false, false, ci, p, rows, T::one(), w.data(), &dcols, T::zero(), &mut gx.data_mut()[s * ci * p..(s + 1) * ci * p]);
                    }
                    if let Some(gw) = gw.as_mut() {
                        gemm(false, true, ci, rows, p, T::one(), &x.data()[s * ci * p..(s + 1) * ci * p], &dcols, T::one(), gw.data_mut());
                    }
                }
                let mut grads = vec![gx, gw];
                if needs.len() == 3 {
                    grads.push(needs[2].then(|| bias_grad(g, co, oh * ow)));
                }
                grads
            }),
        )
    }

    /// Per-channel convolution: `weight: [c, 1, k, k]`, `bias: [c]`.
    pub fn depthwise_conv2d(
        self,
        weight: Var<'g, T>,
        bias: Option<Var<'g, T>>,
        stride: usize,
        pad: usize,
    ) -> Var<'g, T> {
        let x = self.value();
        let w = weight.value();
        let (n, c, h, wd) = x.dims4().unwrap_or_else(|e| panic!("depthwise input: {e}"));
        let (wc, one, k, _) = w.dims4().unwrap_or_else(|e| panic!("depthwise weight: {e}"));
        assert!(wc == c && one == 1, "depthwise: weight must be [{c}, 1, k, k]");
        let geom = ConvGeom::new(1, h, wd, k, stride, pad);
        let (oh, ow) = (geom.oh, geom.ow);
        let mut out = vec![T::zero(); n * c * oh * ow];
        for s in 0..n {
            for ch in 0..c {
                let src = &x.data()[(s * c + ch) * h * wd..(s * c + ch + 1) * h * wd];
                let ker = &w.data()[ch * k * k..(ch + 1) * k * k];
                let dst = &mut out[(s * c + ch) * oh * ow..(s * c + ch + 1) * oh * ow];
                for ki in 0..k {
                    let (ylo, yhi) = geom.valid_range(ki, oh, h);
                    for kj in 0..k {
                        let (xlo, xhi) = geom.valid_range(kj, ow, wd);
                        let kv = ker[ki * k + kj];
                        for oy in ylo..yhi {
                            let iy = oy * stride + ki - pad;
                            for ox in xlo..xhi {
                                dst[oy * ow + ox] += kv * src[iy * wd + ox * stride + kj - pad];
                            }
                        }
                    }
                }
            }
        }
        if let Some(b) = bias.map(|b| b.value()) {
            add_bias(&mut out, b.data(), oh * ow);
        }
        let y = Tensor::new(vec![n, c, oh, ow], out).expect("depthwise output");
        let mut parents = vec![self.id, weight.id];
        if let Some(b) = bias {
            parents.push(b.id);
        }
        self.graph.record(
            y,
            &parents,
            Box::new(move |g, _, needs| {
                let mut gx = needs[0].then(|| Tensor::zeros(vec![n, c, h, wd]));
                let mut gw = needs[1].then(|| Tensor::zeros(vec![c, 1, k, k]));
                for s in 0..n {
                    for ch in 0..c {
                        let go = &g.data()[(s * c + ch) * oh * ow..(s * c + ch + 1) * oh * ow];
                        let src = &x.data()[(s * c + ch) * h * wd..(s * c + ch + 1) * h * wd];
                        let ker = &w.data()[ch * k * k..(ch + 1) * k * k];
                        for ki in 0..k {
                            let (ylo, yhi) = geom.valid_range(ki, oh, h);
                            for kj in 0..k {
                                let (xlo, xhi) = geom.valid_range(kj, ow, wd);
                                let mut acc = T::zero();
                                for oy in ylo..yhi {
                                    let iy = oy * stride + ki - pad;
                                    for ox in xlo..xhi {
                                        let ix = ox * stride + kj - pad;
                                        let gv = go[oy * ow + ox];
                                        acc += gv * src[iy * wd + ix];
                                        if let Some(gx) = gx.as_mut() {
                                            gx.data_mut()[(s * c + ch) * h * wd + iy * wd + ix] +=
                                                gv * ker[ki * k + kj];
                                        }
                                    }
                                }
                                if let Some(gw) = gw.as_mut() {
                                    gw.data_mut()[ch * k * k + ki * k + kj] += acc;
                                }
                            }
                        }
                    }
                }
                let mut grads = vec![gx, gw];
                if needs.len() == 3 {
                    grads.push(needs[2].then(|| bias_grad(g, c, oh * ow)));
                }
                grads
            }),
        )
    }

    /// Mirror padding that excludes the edge pixel (`-1 -> 1`).
    pub fn pad_reflect(self, pad: usize) -> Var<'g, T> {
        let x = self.value();
        let (n, c, h, w) = x.dims4().unwrap_or_else(|e| panic!("pad_reflect: {e}"));
        assert!(pad < h && pad < w, "reflect pad {pad} needs input larger than {h}x{w}");
        let (ph, pw) = (h + 2 * pad, w + 2 * pad);
        let rows: Vec<usize> = (0..ph).map(|i| reflect(i as isize - pad as isize, h)).collect();
        let cols: Vec<usize> = (0..pw).map(|j| reflect(j as isize - pad as isize, w)).collect();
        let mut out = Vec::with_capacity(n * c * ph * pw);
        for plane in x.data().chunks(h * w) {
            for &r in &rows {
                for &cc in &cols {
                    out.push(plane[r * w + cc]);
                }
            }
        }
        let y = Tensor::new(vec![n, c, ph, pw], out).expect("pad output");
        self.graph.record(
            y,
            &[self.id],
            Box::new(move |g, _, _| {
                let mut gx = Tensor::zeros(vec![n, c, h, w]);
                for (dst, src) in gx.data_mut().chunks_mut(h * w).zip(g.data().chunks(ph * pw)) {
                    for (i, &r) in rows.iter().enumerate() {
                        for (j, &cc) in cols.iter().enumerate() {
                            dst[r * w + cc] += src[i * pw + j];
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}
