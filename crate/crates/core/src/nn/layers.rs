//! Layers with explicit forward and reverse-mode backward passes.
//!
//! Each layer caches what its backward pass needs during `forward_train`;
//! `forward_eval` is pure and takes `&self`. A `backward` call consumes the
//! cache of the most recent training forward and accumulates into `Param::grad`.

use rand::Rng;

use super::scalar::{gemm, MatRef};
use super::{Module, Param, Scalar};

/// An activation batch in NCHW layout. Dense layers use `h = w = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Act<T> {
    pub data: Vec<T>,
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl<T: Scalar> Act<T> {
    pub fn new(data: Vec<T>, n: usize, c: usize, h: usize, w: usize) -> Self {
        assert_eq!(data.len(), n * c * h * w, "activation shape mismatch");
        Self { data, n, c, h, w }
    }

    pub fn flat(data: Vec<T>, n: usize, features: usize) -> Self {
        Self::new(data, n, features, 1, 1)
    }

    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self::new(vec![T::zero(); n * c * h * w], n, c, h, w)
    }

    pub fn features(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn reshape(self, c: usize, h: usize, w: usize) -> Self {
        Self::new(self.data, self.n, c, h, w)
    }
}

/// Output side length of a convolution.
pub fn conv_out(size: usize, k: usize, s: usize, p: usize) -> usize {
    (size + 2 * p - k) / s + 1
}

/// Output side length of a transposed convolution.
pub fn conv_transpose_out(size: usize, k: usize, s: usize, p: usize) -> usize {
    (size - 1) * s + k - 2 * p
}

#[derive(Debug, Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    s: usize,
    p: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn rows(&self) -> usize {
        self.c * self.k * self.k
    }
}

/// Unfolds `b` images of shape (c, h, w) into a `(c*k*k, b*ho*wo)` row-major matrix.
fn im2col<T: Scalar>(x: &[T], b: usize, g: Geom, cols: &mut [T]) {
    let plane = g.ho * g.wo;
    let ncols = b * plane;
    for c in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let dst_row = &mut cols[row * ncols..(row + 1) * ncols];
                for bi in 0..b {
                    let src = &x[(bi * g.c + c) * g.h * g.w..(bi * g.c + c + 1) * g.h * g.w];
                    let dst = &mut dst_row[bi * plane..(bi + 1) * plane];
                    for oh in 0..g.ho {
                        let ih = (oh * g.s + ki) as isize - g.p as isize;
                        let drow = &mut dst[oh * g.wo..(oh + 1) * g.wo];
                        if ih < 0 || ih >= g.h as isize {
                            drow.iter_mut().for_each(|v| *v = T::zero());
                            continue;
                        }
                        let srow = &src[ih as usize * g.w..(ih as usize + 1) * g.w];
                        for (ow, d) in drow.iter_mut().enumerate() {
                            let iw = (ow * g.s + kj) as isize - g.p as isize;
                            *d = if iw < 0 || iw >= g.w as isize {
                                T::zero()
                            } else {
                                srow[iw as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-and-adds columns back onto `x`.
fn col2im<T: Scalar>(cols: &[T], b: usize, g: Geom, x: &mut [T]) {
    let plane = g.ho * g.wo;
    let ncols = b * plane;
    for c in 0..g.c {
        for ki in 0..g.k {
            for kj in 0..g.k {
                let row = (c * g.k + ki) * g.k + kj;
                let src_row = &cols[row * ncols..(row + 1) * ncols];
                for bi in 0..b {
                    let dst = &mut x[(bi * g.c + c) * g.h * g.w..(bi * g.c + c + 1) * g.h * g.w];
                    let src = &src_row[bi * plane..(bi + 1) * plane];
                    for oh in 0..g.ho {
                        let ih = (oh * g.s + ki) as isize - g.p as isize;
                        if ih < 0 || ih >= g.h as isize {
                            continue;
                        }
                        let drow = &mut dst[ih as usize * g.w..(ih as usize + 1) * g.w];
                        for (ow, &v) in src[oh * g.wo..(oh + 1) * g.wo].iter().enumerate() {
                            let iw = (ow * g.s + kj) as isize - g.p as isize;
                            if iw >= 0 && iw < g.w as isize {
                                drow[iw as usize] += v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// NCHW (b, c, hw) -> channel-major (c, b*hw).
fn to_channel_major<T: Scalar>(x: &[T], b: usize, c: usize, hw: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for bi in 0..b {
        for ci in 0..c {
            out[ci * b * hw + bi * hw..ci * b * hw + (bi + 1) * hw]
                .copy_from_slice(&x[(bi * c + ci) * hw..(bi * c + ci + 1) * hw]);
        }
    }
    out
}

/// Channel-major (c, b*hw) -> NCHW, written into `out`.
fn from_channel_major<T: Scalar>(x: &[T], b: usize, c: usize, hw: usize, out: &mut [T]) {
    for bi in 0..b {
        for ci in 0..c {
            out[(bi * c + ci) * hw..(bi * c + ci + 1) * hw]
                .copy_from_slice(&x[ci * b * hw + bi * hw..ci * b * hw + (bi + 1) * hw]);
        }
    }
}

/// Number of samples processed per unfolded GEMM, bounding scratch memory.
fn chunk_len(per_sample: usize) -> usize {
    const BUDGET: usize = 1 << 22;
    (BUDGET / per_sample.max(1)).max(1)
}

// ---------------------------------------------------------------------------

/// Fully connected layer, `y = x W^T + b` with `W` of shape (out, in).
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    input: Option<Act<T>>,
}

impl<T: Scalar> Dense<T> {
    pub fn new<R: Rng + ?Sized>(name: &str, inp: usize, out: usize, rng: &mut R) -> Self {
        Self {
            weight: Param::fan_in_uniform(format!("{name}.weight"), &[out, inp], inp, rng),
            bias: Param::fan_in_uniform(format!("{name}.bias"), &[out], inp, rng),
            input: None,
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.dims[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.dims[0]
    }

    pub fn forward_eval(&self, x: &Act<T>) -> Act<T> {
        let (inp, out) = (self.in_features(), self.out_features());
        assert_eq!(x.features(), inp, "dense input width");
        let mut y = vec![T::zero(); x.n * out];
        for row in y.chunks_exact_mut(out) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(
            T::one(),
            MatRef::new(&x.data, x.n, inp),
            MatRef::new(&self.weight.value, out, inp).t(),
            T::one(),
            &mut y,
        );
        Act::flat(y, x.n, out)
    }

    pub fn forward_train(&mut self, x: &Act<T>) -> Act<T> {
        let y = self.forward_eval(x);
        self.input = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Act<T>) -> Act<T> {
        let x = self.input.take().expect("Dense::backward without forward_train");
        let (inp, out) = (self.in_features(), self.out_features());
        // dW += dy^T x
        gemm(
            T::one(),
            MatRef::new(&dy.data, dy.n, out).t(),
            MatRef::new(&x.data, x.n, inp),
            T::one(),
            &mut self.weight.grad,
        );
        for row in dy.data.chunks_exact(out) {
            for (g, &d) in self.bias.grad.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dx = vec![T::zero(); x.n * inp];
        gemm(
            T::one(),
            MatRef::new(&dy.data, dy.n, out),
            MatRef::new(&self.weight.value, out, inp),
            T::zero(),
            &mut dx,
        );
        Act::new(dx, x.n, x.c, x.h, x.w)
    }
}

impl<T: Scalar> Module<T> for Dense<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

// ---------------------------------------------------------------------------

/// 2-d convolution with square kernel, weight shape (out, in, k, k).
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub padding: usize,
    input: Option<Act<T>>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        inp: usize,
        out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = inp * k * k;
        Self {
            weight: Param::fan_in_uniform(format!("{name}.weight"), &[out, inp, k, k], fan_in, rng),
            bias: Param::fan_in_uniform(format!("{name}.bias"), &[out], fan_in, rng),
            stride,
            padding,
            input: None,
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.weight.dims[0], self.weight.dims[1], self.weight.dims[2])
    }

    fn geom(&self, x: &Act<T>) -> Geom {
        let (_, cin, k) = self.dims();
        assert_eq!(x.c, cin, "conv input channels");
        Geom {
            c: cin,
            h: x.h,
            w: x.w,
            k,
            s: self.stride,
            p: self.padding,
            ho: conv_out(x.h, k, self.stride, self.padding),
            wo: conv_out(x.w, k, self.stride, self.padding),
        }
    }

    pub fn forward_eval(&self, x: &Act<T>) -> Act<T> {
        let (cout, _, _) = self.dims();
        let g = self.geom(x);
        let plane = g.ho * g.wo;
        let mut y = Act::zeros(x.n, cout, g.ho, g.wo);
        let chunk = chunk_len(g.rows() * plane);
        let in_len = g.c * g.h * g.w;
        let mut start = 0;
        while start < x.n {
            let b = chunk.min(x.n - start);
            let mut cols = vec![T::zero(); g.rows() * b * plane];
            im2col(&x.data[start * in_len..(start + b) * in_len], b, g, &mut cols);
            let mut out = vec![T::zero(); cout * b * plane];
            for (c, row) in out.chunks_exact_mut(b * plane).enumerate() {
                row.iter_mut().for_each(|v| *v = self.bias.value[c]);
            }
            gemm(
                T::one(),
                MatRef::new(&self.weight.value, cout, g.rows()),
                MatRef::new(&cols, g.rows(), b * plane),
                T::one(),
                &mut out,
            );
            from_channel_major(
                &out,
                b,
                cout,
                plane,
                &mut y.data[start * cout * plane..(start + b) * cout * plane],
            );
            start += b;
        }
        y
    }

    pub fn forward_train(&mut self, x: &Act<T>) -> Act<T> {
        let y = self.forward_eval(x);
        self.input = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Act<T>) -> Act<T> {
        let x = self.input.take().expect("Conv2d::backward without forward_train");
        let (cout, _, _) = self.dims();
        let g = self.geom(&x);
        let plane = g.ho * g.wo;
        let in_len = g.c * g.h * g.w;
        let mut dx = Act::zeros(x.n, x.c, x.h, x.w);
        let chunk = chunk_len(g.rows() * plane);
        let mut start = 0;
        while start < x.n {
            let b = chunk.min(x.n - start);
            let mut cols = vec![T::zero(); g.rows() * b * plane];
            im2col(&x.data[start * in_len..(start + b) * in_len], b, g, &mut cols);
            let dyc = to_channel_major(
                &dy.data[start * cout * plane..(start + b) * cout * plane],
                b,
                cout,
                plane,
            );
            for (c, row) in dyc.chunks_exact(b * plane).enumerate() {
                self.bias.grad[c] += row.iter().copied().sum::<T>();
            }
            // dW += dY cols^T
            gemm(
                T::one(),
                MatRef::new(&dyc, cout, b * plane),
                MatRef::new(&cols, g.rows(), b * plane).t(),
                T::one(),
                &mut self.weight.grad,
            );
            // dcols = W^T dY
            gemm(
                T::one(),
                MatRef::new(&self.weight.value, cout, g.rows()).t(),
                MatRef::new(&dyc, cout, b * plane),
                T::zero(),
                &mut cols,
            );
            col2im(&cols, b, g, &mut dx.data[start * in_len..(start + b) * in_len]);
            start += b;
        }
        dx
    }
}

impl<T: Scalar> Module<T> for Conv2d<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

// ---------------------------------------------------------------------------

/// Transposed 2-d convolution, weight shape (in, out, k, k).
#[derive(Debug, Clone)]
pub struct ConvTranspose2d<T> {
    pub weight: Param<T>,
    pub bias: Param<T>,
    pub stride: usize,
    pub padding: usize,
    input: Option<Act<T>>,
}

impl<T: Scalar> ConvTranspose2d<T> {
    pub fn new<R: Rng + ?Sized>(
        name: &str,
        inp: usize,
        out: usize,
        k: usize,
        stride: usize,
        padding: usize,
        rng: &mut R,
    ) -> Self {
        let fan_in = out * k * k;
        Self {
            weight: Param::fan_in_uniform(format!("{name}.weight"), &[inp, out, k, k], fan_in, rng),
            bias: Param::fan_in_uniform(format!("{name}.bias"), &[out], fan_in, rng),
            stride,
            padding,
            input: None,
        }
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.weight.dims[0], self.weight.dims[1], self.weight.dims[2])
    }

    /// Geometry of the equivalent forward convolution (output -> input).
    fn geom(&self, x: &Act<T>) -> Geom {
        let (cin, cout, k) = self.dims();
        assert_eq!(x.c, cin, "transposed conv input channels");
        Geom {
            c: cout,
            h: conv_transpose_out(x.h, k, self.stride, self.padding),
            w: conv_transpose_out(x.w, k, self.stride, self.padding),
            k,
            s: self.stride,
            p: self.padding,
            ho: x.h,
            wo: x.w,
        }
    }

    pub fn forward_eval(&self, x: &Act<T>) -> Act<T> {
        let (cin, cout, _) = self.dims();
        let g = self.geom(x);
        let plane = x.h * x.w;
        let out_len = cout * g.h * g.w;
        let mut y = Act::zeros(x.n, cout, g.h, g.w);
        let chunk = chunk_len(g.rows() * plane);
        let mut start = 0;
        while start < x.n {
            let b = chunk.min(x.n - start);
            let xc = to_channel_major(&x.data[start * cin * plane..(start + b) * cin * plane], b, cin, plane);
            let mut cols = vec![T::zero(); g.rows() * b * plane];
            gemm(
                T::one(),
                MatRef::new(&self.weight.value, cin, g.rows()).t(),
                MatRef::new(&xc, cin, b * plane),
                T::zero(),
                &mut cols,
            );
            let ys = &mut y.data[start * out_len..(start + b) * out_len];
            col2im(&cols, b, g, ys);
            for img in ys.chunks_exact_mut(out_len) {
                for (c, ch) in img.chunks_exact_mut(g.h * g.w).enumerate() {
                    let bv = self.bias.value[c];
                    ch.iter_mut().for_each(|v| *v += bv);
                }
            }
            start += b;
        }
        y
    }

    pub fn forward_train(&mut self, x: &Act<T>) -> Act<T> {
        let y = self.forward_eval(x);
        self.input = Some(x.clone());
        y
    }

    pub fn backward(&mut self, dy: &Act<T>) -> Act<T> {
        let x = self
            .input
            .take()
            .expect("ConvTranspose2d::backward without forward_train");
        let (cin, _cout, _) = self.dims();
        let g = self.geom(&x);
        let plane = x.h * x.w;
        let out_len = g.c * g.h * g.w;
        for img in dy.data.chunks_exact(out_len) {
            for (c, ch) in img.chunks_exact(g.h * g.w).enumerate() {
                self.bias.grad[c] += ch.iter().copied().sum::<T>();
            }
        }
        let mut dx = Act::zeros(x.n, cin, x.h, x.w);
        let chunk = chunk_len(g.rows() * plane);
        let mut start = 0;
        while start < x.n {
            let b = chunk.min(x.n - start);
            let mut dcols = vec![T::zero(); g.rows() * b * plane];
            im2col(&dy.data[start * out_len..(start + b) * out_len], b, g, &mut dcols);
            let xc = to_channel_major(&x.data[start * cin * plane..(start + b) * cin * plane], b, cin, plane);
            // dW += X dcols^T
            gemm(
                T::one(),
                MatRef::new(&xc, cin, b * plane),
                MatRef::new(&dcols, g.rows(), b * plane).t(),
                T::one(),
                &mut self.weight.grad,
            );
            // dX = W dcols
            let mut dxc = vec![T::zero(); cin * b * plane];
            gemm(
                T::one(),
                MatRef::new(&self.weight.value, cin, g.rows()),
                MatRef::new(&dcols, g.rows(), b * plane),
                T::zero(),
                &mut dxc,
            );
            from_channel_major(
                &dxc,
                b,
                cin,
                plane,
                &mut dx.data[start * cin * plane..(start + b) * cin * plane],
            );
            start += b;
        }
        dx
    }
}

impl<T: Scalar> Module<T> for ConvTranspose2d<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.weight);
        f(&mut self.bias);
    }
}

// ---------------------------------------------------------------------------

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;

/// Per-channel batch normalization over (N, H, W).
#[derive(Debug, Clone)]
pub struct BatchNorm2d<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Param<T>,
    pub running_var: Param<T>,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Scalar> BatchNorm2d<T> {
    pub fn new(name: &str, channels: usize) -> Self {
        Self {
            gamma: Param::filled(format!("{name}.weight"), &[channels], T::one()),
            beta: Param::zeros(format!("{name}.bias"), &[channels]),
            running_mean: Param::zeros(format!("{name}.running_mean"), &[channels]),
            running_var: Param::filled(format!("{name}.running_var"), &[channels], T::one()),
            cache: None,
        }
    }

    fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward_eval(&self, x: &Act<T>) -> Act<T> {
        assert_eq!(x.c, self.channels(), "batchnorm channels");
        let hw = x.h * x.w;
        let eps = T::c(BN_EPS);
        let mut y = x.clone();
        for img in y.data.chunks_exact_mut(x.c * hw) {
            for (c, ch) in img.chunks_exact_mut(hw).enumerate() {
                let scale = self.gamma.value[c] / (self.running_var.value[c] + eps).sqrt();
                let shift = self.beta.value[c] - self.running_mean.value[c] * scale;
                ch.iter_mut().for_each(|v| *v = *v * scale + shift);
            }
        }
        y
    }

    pub fn forward_train(&mut self, x: &Act<T>) -> Act<T> {
        let c_n = self.channels();
        assert_eq!(x.c, c_n, "batchnorm channels");
        let hw = x.h * x.w;
        let count = x.n * hw;
        let cnt = T::c(count as f64);
        let eps = T::c(BN_EPS);
        let mom = T::c(BN_MOMENTUM);
        let mut mean = vec![T::zero(); c_n];
        let mut var = vec![T::zero(); c_n];
        for img in x.data.chunks_exact(c_n * hw) {
            for (c, ch) in img.chunks_exact(hw).enumerate() {
                mean[c] += ch.iter().copied().sum::<T>();
            }
        }
        mean.iter_mut().for_each(|m| *m /= cnt);
        for img in x.data.chunks_exact(c_n * hw) {
            for (c, ch) in img.chunks_exact(hw).enumerate() {
                var[c] += ch.iter().map(|&v| (v - mean[c]) * (v - mean[c])).sum::<T>();
            }
        }
        var.iter_mut().for_each(|v| *v /= cnt);
        let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let mut xhat = x.data.clone();
        let mut y = x.clone();
        for (img_h, img_y) in xhat.chunks_exact_mut(c_n * hw).zip(y.data.chunks_exact_mut(c_n * hw)) {
            for (c, (ch_h, ch_y)) in img_h.chunks_exact_mut(hw).zip(img_y.chunks_exact_mut(hw)).enumerate() {
                for (h, yv) in ch_h.iter_mut().zip(ch_y.iter_mut()) {
                    *h = (*h - mean[c]) * inv_std[c];
                    *yv = self.gamma.value[c] * *h + self.beta.value[c];
                }
            }
        }
        let unbias = if count > 1 {
            cnt / T::c((count - 1) as f64)
        } else {
            T::one()
        };
        for c in 0..c_n {
            let rm = &mut self.running_mean.value[c];
            *rm = (T::one() - mom) * *rm + mom * mean[c];
            let rv = &mut self.running_var.value[c];
            *rv = (T::one() - mom) * *rv + mom * var[c] * unbias;
        }
        self.cache = Some(BnCache { xhat, inv_std });
        y
    }

    pub fn backward(&mut self, dy: &Act<T>) -> Act<T> {
        let BnCache { xhat, inv_std } = self.cache.take().expect("BatchNorm2d::backward without forward_train");
        let c_n = self.channels();
        let hw = dy.h * dy.w;
        let cnt = T::c((dy.n * hw) as f64);
        let mut sum_dy = vec![T::zero(); c_n];
        let mut sum_dy_xhat = vec![T::zero(); c_n];
        for (img_d, img_h) in dy.data.chunks_exact(c_n * hw).zip(xhat.chunks_exact(c_n * hw)) {
            for (c, (ch_d, ch_h)) in img_d.chunks_exact(hw).zip(img_h.chunks_exact(hw)).enumerate() {
                for (&d, &h) in ch_d.iter().zip(ch_h) {
                    sum_dy[c] += d;
                    sum_dy_xhat[c] += d * h;
                }
            }
        }
        for c in 0..c_n {
            self.gamma.grad[c] += sum_dy_xhat[c];
            self.beta.grad[c] += sum_dy[c];
        }
        let mut dx = dy.clone();
        for (img_x, img_h) in dx.data.chunks_exact_mut(c_n * hw).zip(xhat.chunks_exact(c_n * hw)) {
            for (c, (ch_x, ch_h)) in img_x.chunks_exact_mut(hw).zip(img_h.chunks_exact(hw)).enumerate() {
                let k = self.gamma.value[c] * inv_std[c] / cnt;
                for (d, &h) in ch_x.iter_mut().zip(ch_h) {
                    *d = k * (cnt * *d - sum_dy[c] - h * sum_dy_xhat[c]);
                }
            }
        }
        dx
    }
}

impl<T: Scalar> Module<T> for BatchNorm2d<T> {
    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.gamma);
        f(&mut self.beta);
    }

    fn visit_buffers(&mut self, f: &mut dyn FnMut(&mut Param<T>)) {
        f(&mut self.running_mean);
        f(&mut self.running_var);
    }
}

// ---------------------------------------------------------------------------

/// Common forward/backward surface of the layers above.
pub trait Layer<T: Scalar>: Module<T> {
    fn forward_eval(&self, x: &Act<T>) -> Act<T>;
    fn forward_train(&mut self, x: &Act<T>) -> Act<T>;
    fn backward(&mut self, dy: &Act<T>) -> Act<T>;
}

macro_rules! impl_layer {
    ($($ty:ident),*) => {$(
        impl<T: Scalar> Layer<T> for $ty<T> {
            fn forward_eval(&self, x: &Act<T>) -> Act<T> {
                $ty::forward_eval(self, x)
            }
            fn forward_train(&mut self, x: &Act<T>) -> Act<T> {
                $ty::forward_train(self, x)
            }
            fn backward(&mut self, dy: &Act<T>) -> Act<T> {
                $ty::backward(self, dy)
            }
        }
    )*};
}

impl_layer!(Dense, Conv2d, ConvTranspose2d, BatchNorm2d);

// ---------------------------------------------------------------------------

pub fn relu_inplace<T: Scalar>(x: &mut [T]) {
    x.iter_mut().for_each(|v| {
        if *v < T::zero() {
            *v = T::zero()
        }
    });
}

/// Masks `dy` by the ReLU output `y` (gradient is zero where `y == 0`).
pub fn relu_backward<T: Scalar>(dy: &mut [T], y: &[T]) {
    for (d, &v) in dy.iter_mut().zip(y) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
}

pub fn sigmoid<T: Scalar>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}
