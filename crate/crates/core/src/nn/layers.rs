use super::{param_name, Gradients, LayerSpec, Model, Result};
use crate::tensor::{softmax, Tensor};

pub(super) fn forward(model: &Model, idx: usize, x: &Tensor) -> Result<Tensor> {
    let layer = model.layers[idx];
    let out_shape = layer
        .output_shape(x.shape())
        .map_err(|expected| super::NnError::ShapeMismatch {
            layer: idx,
            expected,
            found: x.shape().to_vec(),
        })?;
    let mut out = Tensor::zeros(&out_shape);
    match layer {
        LayerSpec::Dense { inputs, outputs } => {
            let w = model.param(idx, "weight").data();
            let b = model.param(idx, "bias").data();
            let xs = x.data();
            for (o, y) in out.data_mut().iter_mut().enumerate() {
                *y = b[o] + dot(&w[o * inputs..(o + 1) * inputs], xs);
            }
            debug_assert_eq!(out.len(), outputs);
        }
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            stride,
        } => {
            let (len, out_len) = (x.shape()[1], out_shape[1]);
            let w = model.param(idx, "weight").data();
            let b = model.param(idx, "bias").data();
            let xs = x.data();
            let ys = out.data_mut();
            for oc in 0..out_channels {
                let y = &mut ys[oc * out_len..(oc + 1) * out_len];
                y.iter_mut().for_each(|v| *v = b[oc]);
                for ic in 0..in_channels {
                    let xin = &xs[ic * len..(ic + 1) * len];
                    for k in 0..kernel {
                        let wk = w[(oc * in_channels + ic) * kernel + k];
                        if stride == 1 {
                            axpy(wk, &xin[k..k + out_len], y);
                        } else {
                            for (t, yv) in y.iter_mut().enumerate() {
                                *yv += wk * xin[t * stride + k];
                            }
                        }
                    }
                }
            }
        }
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
        } => {
            let (h, wd) = (x.shape()[1], x.shape()[2]);
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let w = model.param(idx, "weight").data();
            let b = model.param(idx, "bias").data();
            let xs = x.data();
            let ys = out.data_mut();
            for oc in 0..out_channels {
                let plane = &mut ys[oc * oh * ow..(oc + 1) * oh * ow];
                plane.iter_mut().for_each(|v| *v = b[oc]);
                for ic in 0..in_channels {
                    let xin = &xs[ic * h * wd..(ic + 1) * h * wd];
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let wk = w[((oc * in_channels + ic) * kernel + ky) * kernel + kx];
                            for r in 0..oh {
                                let row = &xin[(r * stride + ky) * wd..];
                                let yrow = &mut plane[r * ow..(r + 1) * ow];
                                if stride == 1 {
                                    axpy(wk, &row[kx..kx + ow], yrow);
                                } else {
                                    for (c, yv) in yrow.iter_mut().enumerate() {
                                        *yv += wk * row[c * stride + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        LayerSpec::AvgPool1d { size, stride } => {
            let (ch, len, out_len) = (x.shape()[0], x.shape()[1], out_shape[1]);
            let inv = 1.0 / size as f64;
            let xs = x.data();
            let ys = out.data_mut();
            for c in 0..ch {
                for t in 0..out_len {
                    let start = c * len + t * stride;
                    ys[c * out_len + t] = xs[start..start + size].iter().sum::<f64>() * inv;
                }
            }
        }
        LayerSpec::AvgPool2d { size, stride } => {
            let (ch, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (oh, ow) = (out_shape[1], out_shape[2]);
            let inv = 1.0 / (size * size) as f64;
            let xs = x.data();
            let ys = out.data_mut();
            for c in 0..ch {
                for r in 0..oh {
                    for col in 0..ow {
                        let mut acc = 0.0;
                        for dy in 0..size {
                            let base = c * h * wd + (r * stride + dy) * wd + col * stride;
                            acc += xs[base..base + size].iter().sum::<f64>();
                        }
                        ys[(c * oh + r) * ow + col] = acc * inv;
                    }
                }
            }
        }
        LayerSpec::Recurrent { inputs, hidden } => {
            let states = recurrent_states(model, idx, x, inputs, hidden);
            out.data_mut()
                .copy_from_slice(states.last().expect("sequence is non-empty"));
        }
        LayerSpec::Relu => out = x.map(|v| v.max(0.0)),
        LayerSpec::Sigmoid => out = x.map(sigmoid),
        LayerSpec::Softmax => {
            out = Tensor::new(x.shape().to_vec(), softmax(x.data()))?;
        }
    }
    Ok(out)
}

/// Hidden states h_1..h_T of the Elman cell (h_0 = 0 is implicit).
fn recurrent_states(model: &Model, idx: usize, x: &Tensor, inputs: usize, hidden: usize) -> Vec<Vec<f64>> {
    let steps = x.shape()[1];
    let w_in = model.param(idx, "w_in").data();
    let w_rec = model.param(idx, "w_rec").data();
    let b = model.param(idx, "bias").data();
    let xs = x.data();
    let mut states: Vec<Vec<f64>> = Vec::with_capacity(steps);
    let mut prev = vec![0.0; hidden];
    let mut xt = vec![0.0; inputs];
    for t in 0..steps {
        for (f, v) in xt.iter_mut().enumerate() {
            *v = xs[f * steps + t];
        }
        let h: Vec<f64> = (0..hidden)
            .map(|j| {
                let pre = b[j]
                    + dot(&w_in[j * inputs..(j + 1) * inputs], &xt)
                    + dot(&w_rec[j * hidden..(j + 1) * hidden], &prev);
                pre.tanh()
            })
            .collect();
        prev.clone_from(&h);
        states.push(h);
    }
    states
}

/// Accumulates parameter gradients for layer `idx` into `grads` and returns dLoss/dInput.
pub(super) fn backward(
    model: &Model,
    idx: usize,
    x: &Tensor,
    y: &Tensor,
    gy: &Tensor,
    grads: &mut Gradients,
) -> Result<Tensor> {
    let layer = model.layers[idx];
    let mut gx = Tensor::zeros(x.shape());
    match layer {
        LayerSpec::Dense { inputs, outputs } => {
            let w = model.param(idx, "weight").data();
            let mut gw = Tensor::zeros(&[outputs, inputs]);
            let xs = x.data();
            let g = gy.data();
            {
                let gwd = gw.data_mut();
                let gxd = gx.data_mut();
                for o in 0..outputs {
                    axpy(g[o], xs, &mut gwd[o * inputs..(o + 1) * inputs]);
                    axpy(g[o], &w[o * inputs..(o + 1) * inputs], gxd);
                }
            }
            grads.insert(param_name(idx, "weight"), gw);
            grads.insert(param_name(idx, "bias"), gy.clone());
        }
        LayerSpec::Conv1d {
            in_channels,
            out_channels,
            kernel,
            stride,
        } => {
            let (len, out_len) = (x.shape()[1], y.shape()[1]);
            let w = model.param(idx, "weight").data();
            let mut gw = Tensor::zeros(&[out_channels, in_channels, kernel]);
            let mut gb = Tensor::zeros(&[out_channels]);
            let xs = x.data();
            let g = gy.data();
            for oc in 0..out_channels {
                let go = &g[oc * out_len..(oc + 1) * out_len];
                gb.data_mut()[oc] = go.iter().sum();
                for ic in 0..in_channels {
                    let xin = &xs[ic * len..(ic + 1) * len];
                    let gxin = &mut gx.data_mut()[ic * len..(ic + 1) * len];
                    for k in 0..kernel {
                        let wi = (oc * in_channels + ic) * kernel + k;
                        if stride == 1 {
                            gw.data_mut()[wi] = dot(go, &xin[k..k + out_len]);
                            axpy(w[wi], go, &mut gxin[k..k + out_len]);
                        } else {
                            let mut acc = 0.0;
                            for (t, gv) in go.iter().enumerate() {
                                acc += gv * xin[t * stride + k];
                                gxin[t * stride + k] += w[wi] * gv;
                            }
                            gw.data_mut()[wi] = acc;
                        }
                    }
                }
            }
            grads.insert(param_name(idx, "weight"), gw);
            grads.insert(param_name(idx, "bias"), gb);
        }
        LayerSpec::Conv2d {
            in_channels,
            out_channels,
            kernel,
            stride,
        } => {
            let (h, wd) = (x.shape()[1], x.shape()[2]);
            let (oh, ow) = (y.shape()[1], y.shape()[2]);
            let w = model.param(idx, "weight").data();
            let mut gw = Tensor::zeros(&[out_channels, in_channels, kernel, kernel]);
            let mut gb = Tensor::zeros(&[out_channels]);
            let xs = x.data();
            let g = gy.data();
            for oc in 0..out_channels {
                let gplane = &g[oc * oh * ow..(oc + 1) * oh * ow];
                gb.data_mut()[oc] = gplane.iter().sum();
                for ic in 0..in_channels {
                    let xin = &xs[ic * h * wd..(ic + 1) * h * wd];
                    let gxin = &mut gx.data_mut()[ic * h * wd..(ic + 1) * h * wd];
                    for ky in 0..kernel {
                        for kx in 0..kernel {
                            let wi = ((oc * in_channels + ic) * kernel + ky) * kernel + kx;
                            let mut acc = 0.0;
                            for r in 0..oh {
                                let grow = &gplane[r * ow..(r + 1) * ow];
                                let base = (r * stride + ky) * wd;
                                if stride == 1 {
                                    acc += dot(grow, &xin[base + kx..base + kx + ow]);
                                    axpy(w[wi], grow, &mut gxin[base + kx..base + kx + ow]);
                                } else {
                                    for (c, gv) in grow.iter().enumerate() {
                                        acc += gv * xin[base + c * stride + kx];
                                        gxin[base + c * stride + kx] += w[wi] * gv;
                                    }
                                }
                            }
                            gw.data_mut()[wi] = acc;
                        }
                    }
                }
            }
            grads.insert(param_name(idx, "weight"), gw);
            grads.insert(param_name(idx, "bias"), gb);
        }
        LayerSpec::AvgPool1d { size, stride } => {
            let (ch, len, out_len) = (x.shape()[0], x.shape()[1], y.shape()[1]);
            let inv = 1.0 / size as f64;
            let g = gy.data();
            let gxd = gx.data_mut();
            for c in 0..ch {
                for t in 0..out_len {
                    let share = g[c * out_len + t] * inv;
                    let start = c * len + t * stride;
                    gxd[start..start + size].iter_mut().for_each(|v| *v += share);
                }
            }
        }
        LayerSpec::AvgPool2d { size, stride } => {
            let (ch, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
            let (oh, ow) = (y.shape()[1], y.shape()[2]);
            let inv = 1.0 / (size * size) as f64;
            let g = gy.data();
            let gxd = gx.data_mut();
            for c in 0..ch {
                for r in 0..oh {
                    for col in 0..ow {
                        let share = g[(c * oh + r) * ow + col] * inv;
                        for dy in 0..size {
                            let base = c * h * wd + (r * stride + dy) * wd + col * stride;
                            gxd[base..base + size].iter_mut().for_each(|v| *v += share);
                        }
                    }
                }
            }
        }
        LayerSpec::Recurrent { inputs, hidden } => {
            let steps = x.shape()[1];
            let states = recurrent_states(model, idx, x, inputs, hidden);
            let w_in = model.param(idx, "w_in").data();
            let w_rec = model.param(idx, "w_rec").data();
            let mut g_in = Tensor::zeros(&[hidden, inputs]);
            let mut g_rec = Tensor::zeros(&[hidden, hidden]);
            let mut g_b = Tensor::zeros(&[hidden]);
            let xs = x.data();
            let mut dh = gy.data().to_vec();
            let mut xt = vec![0.0; inputs];
            let zeros = vec![0.0; hidden];
            for t in (0..steps).rev() {
                let h = &states[t];
                let prev = if t == 0 { &zeros } else { &states[t - 1] };
                let da: Vec<f64> = dh.iter().zip(h).map(|(d, hv)| d * (1.0 - hv * hv)).collect();
                for (f, v) in xt.iter_mut().enumerate() {
                    *v = xs[f * steps + t];
                }
                let mut dprev = vec![0.0; hidden];
                let mut dx = vec![0.0; inputs];
                for (j, &a) in da.iter().enumerate() {
                    g_b.data_mut()[j] += a;
                    axpy(a, &xt, &mut g_in.data_mut()[j * inputs..(j + 1) * inputs]);
                    axpy(a, prev, &mut g_rec.data_mut()[j * hidden..(j + 1) * hidden]);
                    axpy(a, &w_in[j * inputs..(j + 1) * inputs], &mut dx);
                    axpy(a, &w_rec[j * hidden..(j + 1) * hidden], &mut dprev);
                }
                let gxd = gx.data_mut();
                for (f, v) in dx.into_iter().enumerate() {
                    gxd[f * steps + t] = v;
                }
                dh = dprev;
            }
            grads.insert(param_name(idx, "w_in"), g_in);
            grads.insert(param_name(idx, "w_rec"), g_rec);
            grads.insert(param_name(idx, "bias"), g_b);
        }
        LayerSpec::Relu => {
            for ((gv, &xv), &g) in gx.data_mut().iter_mut().zip(x.data()).zip(gy.data()) {
                *gv = if xv > 0.0 { g } else { 0.0 };
            }
        }
        LayerSpec::Sigmoid => {
            for ((gv, &yv), &g) in gx.data_mut().iter_mut().zip(y.data()).zip(gy.data()) {
                *gv = g * yv * (1.0 - yv);
            }
        }
        LayerSpec::Softmax => {
            let s = y.data();
            let inner = dot(gy.data(), s);
            for ((gv, &sv), &g) in gx.data_mut().iter_mut().zip(s).zip(gy.data()) {
                *gv = sv * (g - inner);
            }
        }
    }
    Ok(gx)
}

fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yv, xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}
