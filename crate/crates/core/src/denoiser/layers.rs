//! Network building blocks with explicit backward passes.
//!
//! Activations are stored channel-major with the batch inside:
//! element `(c, b, y, x)` lives at `((c * batch + b) * h + y) * w + x`. With this
//! layout a convolution over the whole batch is a single matrix product and
//! channel concatenation is plain vector concatenation.

use super::scalar::{gemm, Float, Layout};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub c: usize,
    pub b: usize,
    pub h: usize,
    pub w: usize,
    pub data: Vec<T>,
}

impl<T: Float> Tensor<T> {
    pub fn zeros(c: usize, b: usize, h: usize, w: usize) -> Self {
        Tensor {
            c,
            b,
            h,
            w,
            data: vec![T::ZERO; c * b * h * w],
        }
    }

    /// Pixels per channel across the batch.
    pub fn plane(&self) -> usize {
        self.b * self.h * self.w
    }

    pub fn concat(mut self, other: &Tensor<T>) -> Tensor<T> {
        assert_eq!((self.b, self.h, self.w), (other.b, other.h, other.w));
        self.c += other.c;
        self.data.extend_from_slice(&other.data);
        self
    }

    /// Split off the trailing `c2` channels.
    pub fn split(mut self, c2: usize) -> (Tensor<T>, Tensor<T>) {
        let c1 = self.c - c2;
        let tail = self.data.split_off(c1 * self.plane());
        let second = Tensor {
            c: c2,
            b: self.b,
            h: self.h,
            w: self.w,
            data: tail,
        };
        self.c = c1;
        (self, second)
    }

    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
    }
}

#[inline]
pub fn sigmoid<T: Float>(x: T) -> T {
    T::ONE / (T::ONE + (-x).exp())
}

pub fn silu<T: Float>(x: &[T]) -> Vec<T> {
    x.iter().map(|&v| v * sigmoid(v)).collect()
}

/// Multiply `dy` in place by the SiLU derivative at `x`.
pub fn silu_backward<T: Float>(x: &[T], dy: &mut [T]) {
    for (g, &v) in dy.iter_mut().zip(x) {
        let s = sigmoid(v);
        *g *= s * (T::ONE + v * (T::ONE - s));
    }
}

fn im2col3<T: Float>(x: &Tensor<T>) -> Vec<T> {
    let (h, w) = (x.h, x.w);
    let n = x.plane();
    let mut cols = vec![T::ZERO; x.c * 9 * n];
    for ci in 0..x.c {
        let src = &x.data[ci * n..(ci + 1) * n];
        for t in 0..9 {
            let dy = t as isize / 3 - 1;
            let dx = t as isize % 3 - 1;
            let dst = &mut cols[(ci * 9 + t) * n..(ci * 9 + t + 1) * n];
            for b in 0..x.b {
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let row_out = b * h * w + y * w;
                    let row_in = b * h * w + sy as usize * w;
                    let x0 = if dx < 0 { 1 } else { 0 };
                    let x1 = if dx > 0 { w - 1 } else { w };
                    for xo in x0..x1 {
                        dst[row_out + xo] = src[row_in + (xo as isize + dx) as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im3<T: Float>(cols: &[T], c: usize, b: usize, h: usize, w: usize) -> Tensor<T> {
    let mut out = Tensor::zeros(c, b, h, w);
    let n = out.plane();
    for ci in 0..c {
        let dst = &mut out.data[ci * n..(ci + 1) * n];
        for t in 0..9 {
            let dy = t as isize / 3 - 1;
            let dx = t as isize % 3 - 1;
            let src = &cols[(ci * 9 + t) * n..(ci * 9 + t + 1) * n];
            for bi in 0..b {
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let row_out = bi * h * w + y * w;
                    let row_in = bi * h * w + sy as usize * w;
                    let x0 = if dx < 0 { 1 } else { 0 };
                    let x1 = if dx > 0 { w - 1 } else { w };
                    for xo in x0..x1 {
                        dst[row_in + (xo as isize + dx) as usize] += src[row_out + xo];
                    }
                }
            }
        }
    }
    out
}

/// Square convolution (kernel 1 or 3, zero padding, stride 1) with bias.
#[derive(Debug, Clone, Copy)]
pub struct Conv {
    pub weight: usize,
    pub bias: usize,
    pub cin: usize,
    pub cout: usize,
    pub kernel: usize,
}

impl Conv {
    fn fan_in(&self) -> usize {
        self.cin * self.kernel * self.kernel
    }

    pub fn forward<T: Float>(&self, p: &[Vec<T>], x: &Tensor<T>) -> Tensor<T> {
        assert_eq!(x.c, self.cin, "convolution input channels");
        let n = x.plane();
        let k = self.fan_in();
        let mut y = Tensor::zeros(self.cout, x.b, x.h, x.w);
        let bias = &p[self.bias];
        for (co, chunk) in y.data.chunks_mut(n).enumerate() {
            chunk.iter_mut().for_each(|v| *v = bias[co]);
        }
        let owned;
        let cols: &[T] = if self.kernel == 3 {
            owned = im2col3(x);
            &owned
        } else {
            &x.data
        };
        gemm(
            &p[self.weight],
            Layout::row_major(self.cout, k),
            cols,
            Layout::row_major(k, n),
            T::ONE,
            &mut y.data,
            Layout::row_major(self.cout, n),
        );
        y
    }

    /// Accumulate parameter gradients; return the input gradient when requested.
    pub fn backward<T: Float>(
        &self,
        p: &[Vec<T>],
        g: &mut [Vec<T>],
        x: &Tensor<T>,
        dy: &Tensor<T>,
        need_dx: bool,
    ) -> Option<Tensor<T>> {
        let n = x.plane();
        let k = self.fan_in();
        for (co, chunk) in dy.data.chunks(n).enumerate() {
            g[self.bias][co] += chunk.iter().copied().sum::<T>();
        }
        let owned;
        let cols: &[T] = if self.kernel == 3 {
            owned = im2col3(x);
            &owned
        } else {
            &x.data
        };
        gemm(
            &dy.data,
            Layout::row_major(self.cout, n),
            cols,
            Layout::transposed(k, n),
            T::ONE,
            &mut g[self.weight],
            Layout::row_major(self.cout, k),
        );
        if !need_dx {
            return None;
        }
        let mut dcols = vec![T::ZERO; k * n];
        gemm(
            &p[self.weight],
            Layout::transposed(self.cout, k),
            &dy.data,
            Layout::row_major(self.cout, n),
            T::ZERO,
            &mut dcols,
            Layout::row_major(k, n),
        );
        Some(if self.kernel == 3 {
            col2im3(&dcols, self.cin, x.b, x.h, x.w)
        } else {
            Tensor {
                c: self.cin,
                b: x.b,
                h: x.h,
                w: x.w,
                data: dcols,
            }
        })
    }
}

/// Group normalization with per-channel affine parameters.
#[derive(Debug, Clone, Copy)]
pub struct GroupNorm {
    pub scale: usize,
    pub shift: usize,
    pub channels: usize,
    pub groups: usize,
}

pub struct GroupNormCache<T> {
    xhat: Vec<T>,
    rstd: Vec<T>,
}

const GN_EPS: f64 = 1e-5;

impl GroupNorm {
    pub fn forward<T: Float>(&self, p: &[Vec<T>], x: &Tensor<T>) -> (Tensor<T>, GroupNormCache<T>) {
        assert_eq!(x.c, self.channels, "group norm channels");
        let cg = self.channels / self.groups;
        let hw = x.h * x.w;
        let count = T::from_f64((cg * hw) as f64);
        let mut xhat = vec![T::ZERO; x.data.len()];
        let mut rstd = vec![T::ZERO; x.b * self.groups];
        let mut y = Tensor::zeros(x.c, x.b, x.h, x.w);
        for b in 0..x.b {
            for gi in 0..self.groups {
                let ranges = (gi * cg..(gi + 1) * cg).map(|c| (c * x.b + b) * hw..(c * x.b + b + 1) * hw);
                let mut mean = T::ZERO;
                for r in ranges.clone() {
                    mean += x.data[r].iter().copied().sum::<T>();
                }
                mean = mean / count;
                let mut var = T::ZERO;
                for r in ranges.clone() {
                    var += x.data[r].iter().map(|&v| (v - mean) * (v - mean)).sum::<T>();
                }
                var = var / count;
                let rs = T::ONE / (var + T::from_f64(GN_EPS)).sqrt();
                rstd[b * self.groups + gi] = rs;
                for (c, r) in (gi * cg..(gi + 1) * cg).zip(ranges) {
                    let (gamma, beta) = (p[self.scale][c], p[self.shift][c]);
                    for i in r {
                        let xh = (x.data[i] - mean) * rs;
                        xhat[i] = xh;
                        y.data[i] = gamma * xh + beta;
                    }
                }
            }
        }
        (y, GroupNormCache { xhat, rstd })
    }

    pub fn backward<T: Float>(
        &self,
        p: &[Vec<T>],
        g: &mut [Vec<T>],
        cache: &GroupNormCache<T>,
        dy: &Tensor<T>,
    ) -> Tensor<T> {
        let cg = self.channels / self.groups;
        let hw = dy.h * dy.w;
        let count = T::from_f64((cg * hw) as f64);
        let mut dx = Tensor::zeros(dy.c, dy.b, dy.h, dy.w);
        for c in 0..self.channels {
            for b in 0..dy.b {
                let r = (c * dy.b + b) * hw..(c * dy.b + b + 1) * hw;
                for i in r {
                    g[self.scale][c] += dy.data[i] * cache.xhat[i];
                    g[self.shift][c] += dy.data[i];
                }
            }
        }
        for b in 0..dy.b {
            for gi in 0..self.groups {
                let ranges: Vec<_> = (gi * cg..(gi + 1) * cg)
                    .map(|c| (c, (c * dy.b + b) * hw..(c * dy.b + b + 1) * hw))
                    .collect();
                let mut sum_d = T::ZERO;
                let mut sum_dx = T::ZERO;
                for (c, r) in &ranges {
                    let gamma = p[self.scale][*c];
                    for i in r.clone() {
                        let d = dy.data[i] * gamma;
                        sum_d += d;
                        sum_dx += d * cache.xhat[i];
                    }
                }
                let rs = cache.rstd[b * self.groups + gi];
                for (c, r) in ranges {
                    let gamma = p[self.scale][c];
                    for i in r {
                        let d = dy.data[i] * gamma;
                        dx.data[i] = rs * (d - (sum_d + cache.xhat[i] * sum_dx) / count);
                    }
                }
            }
        }
        dx
    }
}

/// Dense layer acting on column vectors stored `[feature][batch]`.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: usize,
    pub bias: usize,
    pub din: usize,
    pub dout: usize,
}

impl Linear {
    pub fn forward<T: Float>(&self, p: &[Vec<T>], x: &[T], batch: usize) -> Vec<T> {
        assert_eq!(x.len(), self.din * batch);
        let mut y = vec![T::ZERO; self.dout * batch];
        for (o, row) in y.chunks_mut(batch).enumerate() {
            row.iter_mut().for_each(|v| *v = p[self.bias][o]);
        }
        gemm(
            &p[self.weight],
            Layout::row_major(self.dout, self.din),
            x,
            Layout::row_major(self.din, batch),
            T::ONE,
            &mut y,
            Layout::row_major(self.dout, batch),
        );
        y
    }

    pub fn backward<T: Float>(&self, p: &[Vec<T>], g: &mut [Vec<T>], x: &[T], dy: &[T], batch: usize) -> Vec<T> {
        for (o, row) in dy.chunks(batch).enumerate() {
            g[self.bias][o] += row.iter().copied().sum::<T>();
        }
        gemm(
            dy,
            Layout::row_major(self.dout, batch),
            x,
            Layout::transposed(self.din, batch),
            T::ONE,
            &mut g[self.weight],
            Layout::row_major(self.dout, self.din),
        );
        let mut dx = vec![T::ZERO; self.din * batch];
        gemm(
            &p[self.weight],
            Layout::transposed(self.dout, self.din),
            dy,
            Layout::row_major(self.dout, batch),
            T::ZERO,
            &mut dx,
            Layout::row_major(self.din, batch),
        );
        dx
    }
}

pub fn avgpool2<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (x.h / 2, x.w / 2);
    let mut y = Tensor::zeros(x.c, x.b, h, w);
    let quarter = T::from_f64(0.25);
    for cb in 0..x.c * x.b {
        let src = &x.data[cb * x.h * x.w..(cb + 1) * x.h * x.w];
        for yy in 0..h {
            for xx in 0..w {
                let i = 2 * yy * x.w + 2 * xx;
                y.data[cb * h * w + yy * w + xx] = (src[i] + src[i + 1] + src[i + x.w] + src[i + x.w + 1]) * quarter;
            }
        }
    }
    y
}

pub fn avgpool2_backward<T: Float>(dy: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (dy.h * 2, dy.w * 2);
    let mut dx = Tensor::zeros(dy.c, dy.b, h, w);
    let quarter = T::from_f64(0.25);
    for cb in 0..dy.c * dy.b {
        for yy in 0..h {
            for xx in 0..w {
                dx.data[cb * h * w + yy * w + xx] = dy.data[cb * dy.h * dy.w + (yy / 2) * dy.w + xx / 2] * quarter;
            }
        }
    }
    dx
}

pub fn upsample2<T: Float>(x: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (x.h * 2, x.w * 2);
    let mut y = Tensor::zeros(x.c, x.b, h, w);
    for cb in 0..x.c * x.b {
        for yy in 0..h {
            for xx in 0..w {
                y.data[cb * h * w + yy * w + xx] = x.data[cb * x.h * x.w + (yy / 2) * x.w + xx / 2];
            }
        }
    }
    y
}

pub fn upsample2_backward<T: Float>(dy: &Tensor<T>) -> Tensor<T> {
    let (h, w) = (dy.h / 2, dy.w / 2);
    let mut dx = Tensor::zeros(dy.c, dy.b, h, w);
    for cb in 0..dy.c * dy.b {
        let src = &dy.data[cb * dy.h * dy.w..(cb + 1) * dy.h * dy.w];
        for yy in 0..h {
            for xx in 0..w {
                let i = 2 * yy * dy.w + 2 * xx;
                dx.data[cb * h * w + yy * w + xx] = src[i] + src[i + 1] + src[i + dy.w] + src[i + dy.w + 1];
            }
        }
    }
    dx
}
