use serde::{Deserialize, Serialize};

use super::layer::Activation;
use super::NetworkError;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Geometry of a square-kernel convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let (hp, wp) = (h + 2 * self.padding, w + 2 * self.padding);
        if self.stride == 0 || hp < self.kernel || wp < self.kernel {
            return None;
        }
        Some(((hp - self.kernel) / self.stride + 1, (wp - self.kernel) / self.stride + 1))
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T> {
    pub geometry: ConvGeometry,
    /// `[out, in, k, k]`
    pub weight: Tensor<T>,
    /// `[out]`
    pub bias: Tensor<T>,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
pub struct ConvCache<T> {
    input: Tensor<T>,
    output: Tensor<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn zeroed(geometry: ConvGeometry, activation: Activation) -> Self {
        let k = geometry.kernel;
        Self {
            geometry,
            weight: Tensor::zeros(&[geometry.out_channels, geometry.in_channels, k, k]),
            bias: Tensor::zeros(&[geometry.out_channels]),
            activation,
        }
    }

    pub fn output_shape(&self, input: [usize; 3]) -> Result<[usize; 3], NetworkError> {
        let [c, h, w] = input;
        if c != self.geometry.in_channels {
            return Err(NetworkError::shape("conv input channels", &[self.geometry.in_channels], &[c]));
        }
        let (ho, wo) = self
            .geometry
            .output_hw(h, w)
            .ok_or_else(|| NetworkError::shape("conv spatial extent", &[self.geometry.kernel], &[h, w]))?;
        Ok([self.geometry.out_channels, ho, wo])
    }

    fn dims(&self, x: &Tensor<T>) -> Result<([usize; 4], usize, usize), NetworkError> {
        let s = x.shape();
        if s.len() != 4 {
            return Err(NetworkError::shape("conv input rank", &[4], &[s.len()]));
        }
        let [_, ho, wo] = self.output_shape([s[1], s[2], s[3]])?;
        Ok(([s[0], s[1], s[2], s[3]], ho, wo))
    }

    /// Copy one sample `[C, H, W]` into the interior of a zero-bordered
    /// `[C, H+2p, W+2p]` buffer whose border is already zero.
    fn pad_into(&self, x: &[T], [h, w]: [usize; 2], padded: &mut [T]) {
        let p = self.geometry.padding;
        let (hp, wp) = (h + 2 * p, w + 2 * p);
        for (src, dst) in x.chunks_exact(h * w).zip(padded.chunks_exact_mut(hp * wp)) {
            for (row, out) in src.chunks_exact(w).zip(dst[p * wp..].chunks_exact_mut(wp)) {
                out[p..p + w].copy_from_slice(row);
            }
        }
    }

    /// Lay out every receptive field of one padded sample as a column of
    /// `cols`, which is `[C·k·k, Ho·Wo]`.
    fn im2col(&self, padded: &[T], [hp, wp]: [usize; 2], [ho, wo]: [usize; 2], cols: &mut [T]) {
        let g = &self.geometry;
        let (k, s) = (g.kernel, g.stride);
        let spatial = ho * wo;
        for (ci, plane) in padded.chunks_exact(hp * wp).enumerate() {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let dst = &mut cols[row * spatial..(row + 1) * spatial];
                    for (oy, out) in dst.chunks_exact_mut(wo).enumerate() {
                        let start = (oy * s + ki) * wp + kj;
                        if s == 1 {
                            out.copy_from_slice(&plane[start..start + wo]);
                        } else {
                            for (ox, o) in out.iter_mut().enumerate() {
                                *o = plane[start + ox * s];
                            }
                        }
                    }
                }
            }
        }
    }

    /// Scatter-add one sample's column gradients onto a padded `[C, H+2p, W+2p]` buffer.
    fn col2im(&self, dcols: &[T], [hp, wp]: [usize; 2], [ho, wo]: [usize; 2], padded: &mut [T]) {
        let g = &self.geometry;
        let (k, s) = (g.kernel, g.stride);
        let spatial = ho * wo;
        for (ci, plane) in padded.chunks_exact_mut(hp * wp).enumerate() {
            for ki in 0..k {
                for kj in 0..k {
                    let row = (ci * k + ki) * k + kj;
                    let src = &dcols[row * spatial..(row + 1) * spatial];
                    for (oy, row_src) in src.chunks_exact(wo).enumerate() {
                        let start = (oy * s + ki) * wp + kj;
                        if s == 1 {
                            for (d, &v) in plane[start..start + wo].iter_mut().zip(row_src) {
                                *d += v;
                            }
                        } else {
                            for (ox, &v) in row_src.iter().enumerate() {
                                plane[start + ox * s] += v;
                            }
                        }
                    }
                }
            }
        }
    }

    fn padded_hw(&self, h: usize, w: usize) -> [usize; 2] {
        [h + 2 * self.geometry.padding, w + 2 * self.geometry.padding]
    }

    /// Convolve sample by sample; each output block `[O, Ho·Wo]` is already
    /// in `[B, O, Ho, Wo]` order.
    fn apply(&self, x: &Tensor<T>, dims: [usize; 4], ho: usize, wo: usize) -> Tensor<T> {
        let [b, c, h, w] = dims;
        let o = self.geometry.out_channels;
        let patch = self.geometry.patch_len();
        let spatial = ho * wo;
        let [hp, wp] = self.padded_hw(h, w);
        let mut padded = vec![T::zero(); c * hp * wp];
        let mut cols = vec![T::zero(); patch * spatial];
        let mut out = vec![T::zero(); b * o * spatial];
        let bias = self.bias.data();
        for (xb, yb) in x.data().chunks_exact(c * h * w).zip(out.chunks_exact_mut(o * spatial)) {
            self.pad_into(xb, [h, w], &mut padded);
            self.im2col(&padded, [hp, wp], [ho, wo], &mut cols);
            T::gemm(o, patch, spatial, self.weight.data(), false, &cols, false, yb, false);
            for (row, &bo) in yb.chunks_exact_mut(spatial).zip(bias) {
                for v in row {
                    *v = self.activation.apply(*v + bo);
                }
            }
        }
        Tensor::from_vec(&[b, o, ho, wo], out).expect("conv output sized from geometry")
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>, NetworkError> {
        let (dims, ho, wo) = self.dims(x)?;
        Ok(self.apply(x, dims, ho, wo))
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, ConvCache<T>), NetworkError> {
        let (dims, ho, wo) = self.dims(x)?;
        let output = self.apply(x, dims, ho, wo);
        Ok((output.clone(), ConvCache { input: x.clone(), output }))
    }

    /// Returns `(dL/dx, [dL/dweight, dL/dbias])`. Without `input_grad` the
    /// first element is an empty tensor.
    pub fn backward(
        &self,
        cache: &ConvCache<T>,
        grad_out: &Tensor<T>,
        input_grad: bool,
    ) -> (Tensor<T>, Vec<Tensor<T>>) {
        let s = cache.input.shape();
        let (b, c, h, w) = (s[0], s[1], s[2], s[3]);
        let o = self.geometry.out_channels;
        let (ho, wo) = (cache.output.shape()[2], cache.output.shape()[3]);
        let spatial = ho * wo;
        let patch = self.geometry.patch_len();

        let [hp, wp] = self.padded_hw(h, w);
        let p = self.geometry.padding;
        let mut padded = vec![T::zero(); c * hp * wp];
        let mut dpadded = vec![T::zero(); if input_grad { c * hp * wp } else { 0 }];
        let mut g = vec![T::zero(); o * spatial];
        let mut cols = vec![T::zero(); patch * spatial];
        let mut dcols = vec![T::zero(); if input_grad { patch * spatial } else { 0 }];
        let mut dweight = vec![T::zero(); o * patch];
        let mut dbias = vec![T::zero(); o];
        let mut dx = vec![T::zero(); if input_grad { b * c * h * w } else { 0 }];

        let block = o * spatial;
        for bi in 0..b {
            let yd = &cache.output.data()[bi * block..(bi + 1) * block];
            let gd = &grad_out.data()[bi * block..(bi + 1) * block];
            for (oc, row) in g.chunks_exact_mut(spatial).enumerate() {
                let mut acc = T::zero();
                for (i, d) in row.iter_mut().enumerate() {
                    let v = self.activation.backprop(yd[oc * spatial + i], gd[oc * spatial + i]);
                    *d = v;
                    acc += v;
                }
                dbias[oc] += acc;
            }
            let xb = &cache.input.data()[bi * c * h * w..(bi + 1) * c * h * w];
            self.pad_into(xb, [h, w], &mut padded);
            self.im2col(&padded, [hp, wp], [ho, wo], &mut cols);
            T::gemm(o, spatial, patch, &g, false, &cols, true, &mut dweight, true);
            if input_grad {
                T::gemm(patch, o, spatial, self.weight.data(), true, &g, false, &mut dcols, false);
                dpadded.fill(T::zero());
                self.col2im(&dcols, [hp, wp], [ho, wo], &mut dpadded);
                let dxb = &mut dx[bi * c * h * w..(bi + 1) * c * h * w];
                for (src, dst) in dpadded.chunks_exact(hp * wp).zip(dxb.chunks_exact_mut(h * w)) {
                    for (row, out) in src[p * wp..].chunks_exact(wp).zip(dst.chunks_exact_mut(w)) {
                        out.copy_from_slice(&row[p..p + w]);
                    }
                }
            }
        }
        let dx = if input_grad {
            Tensor::from_vec(&[b, c, h, w], dx).expect("input-shaped gradient")
        } else {
            Tensor::zeros(&[0])
        };
        (
            dx,
            vec![
                Tensor::from_vec(self.weight.shape(), dweight).expect("weight-shaped gradient"),
                Tensor::from_vec(&[o], dbias).expect("bias-shaped gradient"),
            ],
        )
    }
}
