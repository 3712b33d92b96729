use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::mlp::{Mlp, MlpCache, Want};
use super::{Real, RomError};

/// Layer widths of the encoder `input → hidden… → latent`; the decoder mirrors them
/// `latent → …hidden → output`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AutoencoderArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent: usize,
    pub output_dim: usize,
}

impl AutoencoderArch {
    /// Widths `[512, 256, 128]` and `r = 64` for the given particle count.
    pub fn full_scale(particles: usize) -> Self {
        AutoencoderArch {
            input_dim: 12 * particles,
            hidden: vec![512, 256, 128],
            latent: 64,
            output_dim: 12 * particles,
        }
    }

    pub fn encoder_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim];
        s.extend(&self.hidden);
        s.push(self.latent);
        s
    }

    pub fn decoder_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.latent];
        s.extend(self.hidden.iter().rev());
        s.push(self.output_dim);
        s
    }

    pub fn validate(&self) -> Result<(), RomError> {
        if self.input_dim == 0 || self.latent == 0 || self.output_dim == 0 || self.hidden.contains(&0) {
            return Err(RomError::Architecture(format!("zero-width layer in {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Autoencoder<A> {
    pub arch: AutoencoderArch,
    pub encoder: Mlp<A>,
    pub decoder: Mlp<A>,
}

impl<A: Real> Autoencoder<A> {
    pub fn new(arch: AutoencoderArch, seed: u64) -> Result<Self, RomError> {
        arch.validate()?;
        let encoder = Mlp::new(&arch.encoder_sizes(), seed)?;
        let decoder = Mlp::new(&arch.decoder_sizes(), seed.wrapping_add(0x9E37_79B9_7F4A_7C15))?;
        Ok(Autoencoder { arch, encoder, decoder })
    }

    pub fn from_parts(arch: AutoencoderArch, encoder: Mlp<A>, decoder: Mlp<A>) -> Result<Self, RomError> {
        arch.validate()?;
        if encoder.sizes() != arch.encoder_sizes().as_slice() || decoder.sizes() != arch.decoder_sizes().as_slice() {
            return Err(RomError::Architecture("layer sizes disagree with the architecture".into()));
        }
        Ok(Autoencoder { arch, encoder, decoder })
    }

    pub fn cast<B: Real>(&self) -> Autoencoder<B> {
        Autoencoder {
            arch: self.arch.clone(),
            encoder: self.encoder.cast(),
            decoder: self.decoder.cast(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.encoder.params().len() + self.decoder.params().len()
    }

    /// `z = f_θ(q)` for one normalized state.
    pub fn encode(&self, q: ArrayView1<A>) -> Result<Array1<A>, RomError> {
        let z = self.encoder.forward(q.insert_axis(Axis(0)))?;
        Ok(z.index_axis_move(Axis(0), 0))
    }

    /// `q̂ = g_θ(z)` for one latent vector.
    pub fn decode(&self, z: ArrayView1<A>) -> Result<Array1<A>, RomError> {
        if z.len() != self.arch.latent {
            return Err(RomError::ShapeMismatch {
                what: "latent vector",
                expected: self.arch.latent,
                got: z.len(),
            });
        }
        let q = self.decoder.forward(z.insert_axis(Axis(0)))?;
        finite(q.index_axis_move(Axis(0), 0))
    }

    pub fn encode_batch(&self, q: ArrayView2<A>) -> Result<Array2<A>, RomError> {
        self.encoder.forward(q)
    }

    pub fn decode_batch(&self, z: ArrayView2<A>) -> Result<Array2<A>, RomError> {
        finite(self.decoder.forward(z)?)
    }

    /// Decodes `z` and returns a closure-free pullback: the gradient of a scalar
    /// with respect to `z` given its gradient with respect to the decoded output.
    pub fn decode_with_pullback(&self, z: ArrayView1<A>) -> Result<(Array1<A>, DecoderPullback<'_, A>), RomError> {
        if z.len() != self.arch.latent {
            return Err(RomError::ShapeMismatch {
                what: "latent vector",
                expected: self.arch.latent,
                got: z.len(),
            });
        }
        let (q, cache) = self.decoder.forward_cached(z.insert_axis(Axis(0)))?;
        let q = finite(q.index_axis_move(Axis(0), 0))?;
        Ok((q, DecoderPullback { net: &self.decoder, cache }))
    }
}

/// Reverse pass of one cached decode.
pub struct DecoderPullback<'a, A> {
    net: &'a Mlp<A>,
    cache: MlpCache<A>,
}

impl<A: Real> DecoderPullback<'_, A> {
    pub fn latent_gradient(&self, dq: ArrayView1<A>) -> Result<Array1<A>, RomError> {
        let g = self.net.backward(
            &self.cache,
            dq.insert_axis(Axis(0)),
            Want {
                params: false,
                input: true,
            },
        )?;
        Ok(g.input.expect("input gradient requested").index_axis_move(Axis(0), 0))
    }
}

fn finite<A: Real, D: ndarray::Dimension>(a: ndarray::Array<A, D>) -> Result<ndarray::Array<A, D>, RomError> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(a)
    } else {
        Err(RomError::CorruptParameters)
    }
}
