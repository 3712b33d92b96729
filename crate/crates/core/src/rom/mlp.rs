//! Fully connected network with hand-written reverse mode.
//!
//! Hidden layers are `affine → ReLU → LayerNorm`; the last layer is affine only.
//! All parameters live in one flat vector, layer by layer: weight (`out × in`,
//! row-major), bias (`out`), and for hidden layers the LayerNorm gain and offset.

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis, Zip};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Real, RomError};

/// LayerNorm variance floor.
pub const LN_EPS: f64 = 1e-10;

#[derive(Clone, Copy, Debug)]
struct LayerSpan {
    fan_in: usize,
    fan_out: usize,
    w: usize,
    b: usize,
    norm: Option<(usize, usize)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mlp<A> {
    sizes: Vec<usize>,
    params: Array1<A>,
}

/// Activations kept by [`Mlp::forward_cached`] for [`Mlp::backward`].
#[derive(Clone, Debug)]
pub struct MlpCache<A> {
    inputs: Vec<Array2<A>>,
    /// Post-ReLU activations of hidden layers; their sign is the ReLU mask.
    relu: Vec<Array2<A>>,
    xhat: Vec<Array2<A>>,
    inv_std: Vec<Array1<A>>,
}

impl<A> MlpCache<A> {
    pub fn batch_size(&self) -> usize {
        self.inputs.first().map_or(0, |x| x.nrows())
    }
}

/// Which gradients [`Mlp::backward`] should produce.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Want {
    pub params: bool,
    pub input: bool,
}

pub struct MlpGrads<A> {
    pub params: Option<Array1<A>>,
    pub input: Option<Array2<A>>,
}

fn spans(sizes: &[usize]) -> (Vec<LayerSpan>, usize) {
    let mut out = Vec::with_capacity(sizes.len().saturating_sub(1));
    let mut off = 0;
    let last = sizes.len().saturating_sub(2);
    for l in 0..sizes.len().saturating_sub(1) {
        let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
        let w = off;
        let b = w + fan_in * fan_out;
        off = b + fan_out;
        let norm = if l < last {
            let g = off;
            off += 2 * fan_out;
            Some((g, g + fan_out))
        } else {
            None
        };
        out.push(LayerSpan {
            fan_in,
            fan_out,
            w,
            b,
            norm,
        });
    }
    (out, off)
}

/// Number of parameters of a network with layer widths `sizes`.
pub fn param_count(sizes: &[usize]) -> usize {
    spans(sizes).1
}

impl<A: Real> Mlp<A> {
    /// He-uniform weights, zero biases, unit gains and zero offsets.
    pub fn new(sizes: &[usize], seed: u64) -> Result<Self, RomError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(RomError::Architecture(format!("invalid layer sizes {sizes:?}")));
        }
        let (layers, total) = spans(sizes);
        let mut params = Array1::zeros(total);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &layers {
            let bound = (6.0 / layer.fan_in as f64).sqrt();
            for p in params.slice_mut(s![layer.w..layer.b]).iter_mut() {
                *p = A::of(rng.gen_range(-bound..bound));
            }
            if let Some((g, _)) = layer.norm {
                params.slice_mut(s![g..g + layer.fan_out]).fill(A::one());
            }
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn from_params(sizes: &[usize], params: Array1<A>) -> Result<Self, RomError> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(RomError::Architecture(format!("invalid layer sizes {sizes:?}")));
        }
        let expected = param_count(sizes);
        if params.len() != expected {
            return Err(RomError::ShapeMismatch {
                what: "parameter vector",
                expected,
                got: params.len(),
            });
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            params,
        })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    pub fn params(&self) -> &Array1<A> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut Array1<A> {
        &mut self.params
    }

    pub fn cast<B: Real>(&self) -> Mlp<B> {
        Mlp {
            sizes: self.sizes.clone(),
            params: self.params.mapv(|v| B::of(v.as_f64())),
        }
    }

    fn weight(&self, l: &LayerSpan) -> ArrayView2<'_, A> {
        self.params
            .slice(s![l.w..l.b])
            .into_shape_with_order((l.fan_out, l.fan_in))
            .expect("contiguous weight block")
    }

    fn vector(&self, start: usize, len: usize) -> ArrayView1<'_, A> {
        self.params.slice(s![start..start + len])
    }

    fn check_input(&self, x: &ArrayView2<A>) -> Result<(), RomError> {
        if x.ncols() != self.input_dim() {
            return Err(RomError::ShapeMismatch {
                what: "network input",
                expected: self.input_dim(),
                got: x.ncols(),
            });
        }
        Ok(())
    }

    /// Forward pass over a batch (one sample per row).
    pub fn forward(&self, x: ArrayView2<A>) -> Result<Array2<A>, RomError> {
        self.check_input(&x)?;
        let (layers, _) = spans(&self.sizes);
        let mut h: Option<Array2<A>> = None;
        for layer in &layers {
            let input = h.as_ref().map_or(x.view(), |a| a.view());
            let mut pre = self.affine(layer, input);
            if let Some((g, o)) = layer.norm {
                pre.mapv_inplace(|v| v.max(A::zero()));
                let (xhat, _) = normalize_rows(&pre);
                pre = xhat * &self.vector(g, layer.fan_out) + &self.vector(o, layer.fan_out);
            }
            h = Some(pre);
        }
        Ok(h.expect("at least one layer"))
    }

    fn affine(&self, layer: &LayerSpan, input: ArrayView2<A>) -> Array2<A> {
        let mut pre = Array2::zeros((input.nrows(), layer.fan_out));
        pre += &self.vector(layer.b, layer.fan_out);
        general_mat_mul(A::one(), &input, &self.weight(layer).t(), A::one(), &mut pre);
        pre
    }

    /// Forward pass that records the activations needed by [`Mlp::backward`].
    pub fn forward_cached(&self, x: ArrayView2<A>) -> Result<(Array2<A>, MlpCache<A>), RomError> {
        self.check_input(&x)?;
        let (layers, _) = spans(&self.sizes);
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(layers.len()),
            relu: Vec::new(),
            xhat: Vec::new(),
            inv_std: Vec::new(),
        };
        let mut h = x.to_owned();
        for layer in &layers {
            let mut pre = self.affine(layer, h.view());
            cache.inputs.push(h);
            if let Some((g, o)) = layer.norm {
                pre.mapv_inplace(|v| v.max(A::zero()));
                let (xhat, inv_std) = normalize_rows(&pre);
                let y = &xhat * &self.vector(g, layer.fan_out) + &self.vector(o, layer.fan_out);
                cache.relu.push(pre);
                cache.xhat.push(xhat);
                cache.inv_std.push(inv_std);
                h = y;
            } else {
                h = pre;
            }
        }
        Ok((h, cache))
    }

    /// Reverse pass. `dy` is the gradient of a scalar loss with respect to the
    /// network output of the cached batch.
    pub fn backward(&self, cache: &MlpCache<A>, dy: ArrayView2<A>, want: Want) -> Result<MlpGrads<A>, RomError> {
        let (layers, total) = spans(&self.sizes);
        if cache.inputs.len() != layers.len() {
            return Err(RomError::MissingCache);
        }
        if dy.dim() != (cache.batch_size(), self.output_dim()) {
            return Err(RomError::ShapeMismatch {
                what: "output gradient",
                expected: cache.batch_size() * self.output_dim(),
                got: dy.len(),
            });
        }
        let mut grads = want.params.then(|| Array1::<A>::zeros(total));
        let mut delta = dy.to_owned();
        let mut hidden = cache.relu.len();
        for (l, layer) in layers.iter().enumerate().rev() {
            if let Some((g, o)) = layer.norm {
                hidden -= 1;
                let xhat = &cache.xhat[hidden];
                if let Some(gr) = grads.as_mut() {
                    gr.slice_mut(s![g..g + layer.fan_out])
                        .zip_mut_with(&(&delta * xhat).sum_axis(Axis(0)), |a, &b| *a = b);
                    gr.slice_mut(s![o..o + layer.fan_out])
                        .zip_mut_with(&delta.sum_axis(Axis(0)), |a, &b| *a = b);
                }
                let dxhat = delta * &self.vector(g, layer.fan_out);
                let mut dh = layer_norm_backward(&dxhat, xhat, &cache.inv_std[hidden]);
                Zip::from(&mut dh)
                    .and(&cache.relu[hidden])
                    .for_each(|d, &h| {
                        if h <= A::zero() {
                            *d = A::zero();
                        }
                    });
                delta = dh;
            }
            let input = &cache.inputs[l];
            if let Some(gr) = grads.as_mut() {
                let mut dw: ArrayViewMut2<A> = gr
                    .slice_mut(s![layer.w..layer.b])
                    .into_shape_with_order((layer.fan_out, layer.fan_in))
                    .expect("contiguous weight block");
                general_mat_mul(A::one(), &delta.t(), input, A::zero(), &mut dw);
                let mut db: ArrayViewMut1<A> = gr.slice_mut(s![layer.b..layer.b + layer.fan_out]);
                db.assign(&delta.sum_axis(Axis(0)));
            }
            if l > 0 || want.input {
                delta = delta.dot(&self.weight(layer));
            }
        }
        Ok(MlpGrads {
            params: grads,
            input: want.input.then_some(delta),
        })
    }
}

/// Row-wise `(h − μ) / sqrt(σ² + ε)` and the per-row `1 / sqrt(σ² + ε)`.
fn normalize_rows<A: Real>(h: &Array2<A>) -> (Array2<A>, Array1<A>) {
    let n = A::of(h.ncols() as f64);
    let eps = A::of(LN_EPS);
    let mut out = h.clone();
    let mut inv = Array1::zeros(h.nrows());
    for (mut row, s) in out.rows_mut().into_iter().zip(inv.iter_mut()) {
        let mean = row.sum() / n;
        row.mapv_inplace(|v| v - mean);
        let var = row.iter().fold(A::zero(), |acc, &v| acc + v * v) / n;
        *s = A::one() / (var + eps).sqrt();
        let k = *s;
        row.mapv_inplace(|v| v * k);
    }
    (out, inv)
}

fn layer_norm_backward<A: Real>(dxhat: &Array2<A>, xhat: &Array2<A>, inv_std: &Array1<A>) -> Array2<A> {
    let n = A::of(dxhat.ncols() as f64);
    let mut out = dxhat.clone();
    for ((mut row, xr), &s) in out.rows_mut().into_iter().zip(xhat.rows()).zip(inv_std) {
        let mean_d = row.sum() / n;
        let mean_dx = row.iter().zip(xr).fold(A::zero(), |acc, (&d, &x)| acc + d * x) / n;
        Zip::from(&mut row).and(&xr).for_each(|d, &x| {
            *d = s * (*d - mean_d - x * mean_dx);
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array;

    fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn layer_norm_output_is_standardized() {
        let h = random_batch(4, 17, 1).mapv(|v: f64| v.max(0.0) * 3.0 + 0.1);
        let (xhat, _) = normalize_rows(&h);
        for row in xhat.rows() {
            let mean = row.sum() / 17.0;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 17.0;
            assert!(mean.abs() < 1e-10);
            assert!((var - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn single_linear_layer_matches_closed_form() {
        // Loss ½‖Wx + b − y‖²: ∂/∂W = (Wx + b − y) xᵀ, ∂/∂x = Wᵀ(Wx + b − y).
        let net = Mlp::<f64>::new(&[2, 3], 4).unwrap();
        let x = Array2::from_shape_vec((1, 2), vec![0.3, -0.7]).unwrap();
        let y = Array2::from_shape_vec((1, 3), vec![0.1, 0.2, -0.4]).unwrap();
        let (out, cache) = net.forward_cached(x.view()).unwrap();
        let r = &out - &y;
        let g = net
            .backward(&cache, r.view(), Want { params: true, input: true })
            .unwrap();
        let gp = g.params.unwrap();
        let w = net.params().slice(s![0..6]).into_shape_with_order((3, 2)).unwrap().to_owned();
        for i in 0..3 {
            for j in 0..2 {
                assert!((gp[i * 2 + j] - r[(0, i)] * x[(0, j)]).abs() < 1e-15);
            }
            assert!((gp[6 + i] - r[(0, i)]).abs() < 1e-15);
        }
        let gx = r.dot(&w);
        assert!((&g.input.unwrap() - &gx).iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let net = Mlp::<f64>::new(&[5, 4, 3, 2], 2).unwrap();
        let x = random_batch(3, 5, 3);
        let (_, cache) = net.forward_cached(x.view()).unwrap();
        let g = net
            .backward(&cache, Array2::zeros((3, 2)).view(), Want { params: true, input: true })
            .unwrap();
        assert!(g.params.unwrap().iter().all(|&v| v == 0.0));
        assert!(g.input.unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cached_and_plain_forward_agree() {
        let net = Mlp::<f64>::new(&[6, 5, 4, 3], 9).unwrap();
        let x = random_batch(4, 6, 8);
        let a = net.forward(x.view()).unwrap();
        let (b, _) = net.forward_cached(x.view()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn wrong_input_width_is_rejected() {
        let net = Mlp::<f32>::new(&[6, 3], 0).unwrap();
        let x = Array2::<f32>::zeros((1, 5));
        assert!(matches!(net.forward(x.view()), Err(RomError::ShapeMismatch { .. })));
    }
}
