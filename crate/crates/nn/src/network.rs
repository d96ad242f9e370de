//! Forward and reverse passes over a [`ModelSpec`].
//!
//! Tensors are flat, batch-major buffers. Image samples are laid out
//! `[channel][row][col]`.

use crate::par;
use crate::spec::{Layer, ModelSpec, Shape};
use crate::{Error, Result};

/// Activations recorded by [`ModelSpec::forward_cached`].
#[derive(Clone, Debug)]
pub struct ForwardTape {
    batch: usize,
    /// `acts[i]` is the input to layer `i`; the last entry is the output.
    acts: Vec<Vec<f64>>,
    /// Flat input index of each pooled maximum, per max-pool layer.
    argmax: Vec<Option<Vec<usize>>>,
}

impl ForwardTape {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn output(&self) -> &[f64] {
        self.acts.last().unwrap()
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.acts.pop().unwrap()
    }
}

/// Gradients produced by [`ModelSpec::backward`].
#[derive(Clone, Debug)]
pub struct Gradients {
    pub params: Vec<f64>,
    /// Present only when requested.
    pub input: Option<Vec<f64>>,
}

struct ImageDims {
    c: usize,
    h: usize,
    w: usize,
}

fn image(shape: Shape) -> ImageDims {
    match shape {
        Shape::Image {
            channels,
            height,
            width,
        } => ImageDims {
            c: channels,
            h: height,
            w: width,
        },
        Shape::Flat(_) => unreachable!("validated at construction"),
    }
}

impl ModelSpec {
    fn batch_size(&self, inputs: &[f64]) -> Result<usize> {
        let d = self.input_shape().len();
        if !inputs.len().is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "input buffer of {} values is not a multiple of sample size {d}",
                inputs.len()
            )));
        }
        Ok(inputs.len() / d)
    }

    /// Plain forward pass returning outputs (`batch × output len`).
    pub fn forward(&self, omega: &[f64], inputs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(omega, inputs)?.into_output())
    }

    /// Forward pass that keeps every intermediate activation for
    /// [`ModelSpec::backward`].
    pub fn forward_cached(&self, omega: &[f64], inputs: &[f64]) -> Result<ForwardTape> {
        self.check_params(omega)?;
        let batch = self.batch_size(inputs)?;
        let mut acts = Vec::with_capacity(self.layers().len() + 1);
        let mut argmax = Vec::with_capacity(self.layers().len());
        acts.push(inputs.to_vec());
        for (i, layer) in self.layers().iter().enumerate() {
            let x = acts.last().unwrap();
            let params = &omega[self.param_range(i)];
            let (w, b) = params.split_at(layer.weight_count());
            let in_shape = self.shape_at(i);
            let out_shape = self.shape_at(i + 1);
            let mut pool_idx = None;
            let y = match *layer {
                Layer::Dense {
                    inputs, outputs, ..
                } => dense_forward(x, w, b, batch, inputs, outputs),
                Layer::Conv2d {
                    kernel,
                    stride,
                    padding,
                    ..
                } => conv_forward(
                    x,
                    w,
                    b,
                    batch,
                    image(in_shape),
                    image(out_shape),
                    kernel,
                    stride,
                    padding,
                ),
                Layer::MaxPool2d { kernel } => {
                    let (y, idx) =
                        pool_forward(x, batch, image(in_shape), image(out_shape), kernel);
                    pool_idx = Some(idx);
                    y
                }
                Layer::Relu => x.iter().map(|&v| v.max(0.0)).collect(),
                Layer::Tanh => x.iter().map(|v| v.tanh()).collect(),
                Layer::Flatten => x.clone(),
            };
            argmax.push(pool_idx);
            acts.push(y);
        }
        Ok(ForwardTape {
            batch,
            acts,
            argmax,
        })
    }

    /// Reverse pass: given `d_out` (same layout as the output), returns the
    /// gradient with respect to the flat parameters and optionally the
    /// inputs.
    pub fn backward(
        &self,
        omega: &[f64],
        tape: &ForwardTape,
        d_out: &[f64],
        want_input_grad: bool,
    ) -> Result<Gradients> {
        self.check_params(omega)?;
        if tape.acts.len() != self.layers().len() + 1 || d_out.len() != tape.output().len() {
            return Err(Error::Shape(format!(
                "output gradient has length {}, expected {}",
                d_out.len(),
                tape.output().len()
            )));
        }
        let batch = tape.batch;
        let mut d_params = vec![0.0; self.param_count()];
        let mut dy = d_out.to_vec();
        for (i, layer) in self.layers().iter().enumerate().rev() {
            let need_dx = want_input_grad || i > 0;
            let x = &tape.acts[i];
            let y = &tape.acts[i + 1];
            let range = self.param_range(i);
            let wc = layer.weight_count();
            let w = &omega[range.start..range.start + wc];
            let (dw, db) = d_params[range].split_at_mut(wc);
            let in_shape = self.shape_at(i);
            let out_shape = self.shape_at(i + 1);
            let dx = match *layer {
                Layer::Dense {
                    inputs, outputs, ..
                } => dense_backward(x, w, &dy, dw, db, batch, inputs, outputs, need_dx),
                Layer::Conv2d {
                    kernel,
                    stride,
                    padding,
                    ..
                } => conv_backward(
                    x,
                    w,
                    &dy,
                    dw,
                    db,
                    batch,
                    image(in_shape),
                    image(out_shape),
                    kernel,
                    stride,
                    padding,
                    need_dx,
                ),
                Layer::MaxPool2d { .. } => {
                    let idx = tape.argmax[i].as_ref().unwrap();
                    let mut dx = vec![0.0; x.len()];
                    for (g, &j) in dy.iter().zip(idx) {
                        dx[j] += g;
                    }
                    dx
                }
                Layer::Relu => x
                    .iter()
                    .zip(&dy)
                    .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
                    .collect(),
                Layer::Tanh => y
                    .iter()
                    .zip(&dy)
                    .map(|(&t, &g)| g * (1.0 - t * t))
                    .collect(),
                Layer::Flatten => std::mem::take(&mut dy),
            };
            dy = dx;
        }
        Ok(Gradients {
            params: d_params,
            input: want_input_grad.then_some(dy),
        })
    }
}

fn dense_forward(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    batch: usize,
    n_in: usize,
    n_out: usize,
) -> Vec<f64> {
    let mut y = vec![0.0; batch * n_out];
    par::for_each_chunk_mut(&mut y, n_out, batch * n_in * n_out, |s, row| {
        let xs = &x[s * n_in..(s + 1) * n_in];
        for (o, out) in row.iter_mut().enumerate() {
            let wr = &w[o * n_in..(o + 1) * n_in];
            let mut acc = if b.is_empty() { 0.0 } else { b[o] };
            for (wi, xi) in wr.iter().zip(xs) {
                acc += wi * xi;
            }
            *out = acc;
        }
    });
    y
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    batch: usize,
    n_in: usize,
    n_out: usize,
    need_dx: bool,
) -> Vec<f64> {
    let work = batch * n_in * n_out;
    par::for_each_chunk_mut(dw, n_in, work, |o, row| {
        for s in 0..batch {
            let g = dy[s * n_out + o];
            if g == 0.0 {
                continue;
            }
            for (r, xi) in row.iter_mut().zip(&x[s * n_in..(s + 1) * n_in]) {
                *r += g * xi;
            }
        }
    });
    for (o, d) in db.iter_mut().enumerate() {
        *d = (0..batch).map(|s| dy[s * n_out + o]).sum();
    }
    if !need_dx {
        return Vec::new();
    }
    let mut dx = vec![0.0; batch * n_in];
    par::for_each_chunk_mut(&mut dx, n_in, work, |s, row| {
        for o in 0..n_out {
            let g = dy[s * n_out + o];
            if g == 0.0 {
                continue;
            }
            for (r, wi) in row.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                *r += g * wi;
            }
        }
    });
    dx
}

#[allow(clippy::too_many_arguments)]
fn conv_forward(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    batch: usize,
    inp: ImageDims,
    out: ImageDims,
    k: usize,
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let in_len = inp.c * inp.h * inp.w;
    let out_len = out.c * out.h * out.w;
    let mut y = vec![0.0; batch * out_len];
    let work = batch * out_len * inp.c * k * k;
    par::for_each_chunk_mut(&mut y, out_len, work, |s, ys| {
        let xs = &x[s * in_len..(s + 1) * in_len];
        for oc in 0..out.c {
            let bias = if b.is_empty() { 0.0 } else { b[oc] };
            for oy in 0..out.h {
                for ox in 0..out.w {
                    let mut acc = bias;
                    for ic in 0..inp.c {
                        let wbase = (oc * inp.c + ic) * k * k;
                        let xbase = ic * inp.h * inp.w;
                        for ky in 0..k {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= inp.h as isize {
                                continue;
                            }
                            let xrow = xbase + iy as usize * inp.w;
                            for kx in 0..k {
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if ix < 0 || ix >= inp.w as isize {
                                    continue;
                                }
                                acc += w[wbase + ky * k + kx] * xs[xrow + ix as usize];
                            }
                        }
                    }
                    ys[(oc * out.h + oy) * out.w + ox] = acc;
                }
            }
        }
    });
    y
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &[f64],
    w: &[f64],
    dy: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    batch: usize,
    inp: ImageDims,
    out: ImageDims,
    k: usize,
    stride: usize,
    pad: usize,
    need_dx: bool,
) -> Vec<f64> {
    let in_len = inp.c * inp.h * inp.w;
    let out_len = out.c * out.h * out.w;
    let plane = out.h * out.w;
    let work = batch * out_len * inp.c * k * k;
    // Valid (input, output) coordinate pairs along one axis for a kernel tap.
    let taps = |kk: usize, n_out: usize, n_in: usize| {
        (0..n_out).filter_map(move |o| {
            let i = (o * stride + kk) as isize - pad as isize;
            (i >= 0 && i < n_in as isize).then_some((o, i as usize))
        })
    };
    par::for_each_chunk_mut(dw, inp.c * k * k, work, |oc, wblock| {
        for s in 0..batch {
            let dys = &dy[s * out_len + oc * plane..s * out_len + (oc + 1) * plane];
            let xs = &x[s * in_len..(s + 1) * in_len];
            for ic in 0..inp.c {
                let xplane = &xs[ic * inp.h * inp.w..(ic + 1) * inp.h * inp.w];
                for ky in 0..k {
                    for kx in 0..k {
                        let mut acc = 0.0;
                        for (oy, iy) in taps(ky, out.h, inp.h) {
                            for (ox, ix) in taps(kx, out.w, inp.w) {
                                acc += dys[oy * out.w + ox] * xplane[iy * inp.w + ix];
                            }
                        }
                        wblock[(ic * k + ky) * k + kx] += acc;
                    }
                }
            }
        }
    });
    if !db.is_empty() {
        for (oc, d) in db.iter_mut().enumerate() {
            *d = (0..batch)
                .map(|s| {
                    dy[s * out_len + oc * plane..s * out_len + (oc + 1) * plane]
                        .iter()
                        .sum::<f64>()
                })
                .sum();
        }
    }
    if !need_dx {
        return Vec::new();
    }
    let mut dx = vec![0.0; batch * in_len];
    par::for_each_chunk_mut(&mut dx, in_len, work, |s, dxs| {
        let dys = &dy[s * out_len..(s + 1) * out_len];
        for oc in 0..out.c {
            for ic in 0..inp.c {
                let wbase = (oc * inp.c + ic) * k * k;
                let xbase = ic * inp.h * inp.w;
                for ky in 0..k {
                    for kx in 0..k {
                        let wv = w[wbase + ky * k + kx];
                        for (oy, iy) in taps(ky, out.h, inp.h) {
                            for (ox, ix) in taps(kx, out.w, inp.w) {
                                dxs[xbase + iy * inp.w + ix] +=
                                    wv * dys[(oc * out.h + oy) * out.w + ox];
                            }
                        }
                    }
                }
            }
        }
    });
    dx
}

fn pool_forward(
    x: &[f64],
    batch: usize,
    inp: ImageDims,
    out: ImageDims,
    k: usize,
) -> (Vec<f64>, Vec<usize>) {
    let in_len = inp.c * inp.h * inp.w;
    let mut y = Vec::with_capacity(batch * out.c * out.h * out.w);
    let mut idx = Vec::with_capacity(y.capacity());
    for s in 0..batch {
        for c in 0..inp.c {
            let base = s * in_len + c * inp.h * inp.w;
            for oy in 0..out.h {
                for ox in 0..out.w {
                    let mut best = base + oy * k * inp.w + ox * k;
                    for ky in 0..k {
                        for kx in 0..k {
                            let j = base + (oy * k + ky) * inp.w + ox * k + kx;
                            if x[j] > x[best] {
                                best = j;
                            }
                        }
                    }
                    y.push(x[best]);
                    idx.push(best);
                }
            }
        }
    }
    (y, idx)
}
