//! Self-describing binary model snapshot.
//!
//! Layout (all integers little-endian): an 8-byte signature, the model
//! kind and configuration, the vocabulary hash, the training noise
//! stream position, then each parameter tensor as (name, dims, f64
//! row-major data). Loading and re-saving must reproduce the bytes
//! exactly.

use ntm_core::model::{LatentActivation, ModelConfig, ModelKind, ModelParams};
use ntm_core::tensor::Tensor;

use crate::CliError;

const MAGIC: &[u8; 8] = b"NTMCKPT\x01";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub vocab_hash: u64,
    /// (seed, word position) of the training noise stream at save time.
    pub rng_state: (u64, u128),
    pub params: ModelParams,
}

fn kind_to_u8(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::Ntm => 0,
        ModelKind::Nvdm => 1,
        ModelKind::Gsm => 2,
        ModelKind::NtmR => 3,
        ModelKind::NtmF => 4,
        ModelKind::NtmFr => 5,
    }
}

fn kind_from_u8(b: u8) -> Option<ModelKind> {
    Some(match b {
        0 => ModelKind::Ntm,
        1 => ModelKind::Nvdm,
        2 => ModelKind::Gsm,
        3 => ModelKind::NtmR,
        4 => ModelKind::NtmF,
        5 => ModelKind::NtmFr,
        _ => return None,
    })
}

fn latent_to_u8(a: LatentActivation) -> u8 {
    match a {
        LatentActivation::Relu => 0,
        LatentActivation::Identity => 1,
        LatentActivation::Softmax => 2,
    }
}

fn latent_from_u8(b: u8) -> Option<LatentActivation> {
    Some(match b {
        0 => LatentActivation::Relu,
        1 => LatentActivation::Identity,
        2 => LatentActivation::Softmax,
        _ => return None,
    })
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.push(kind_to_u8(self.kind));
        out.push(latent_to_u8(self.config.latent));
        out.push(self.config.factorized as u8);
        out.extend_from_slice(&(self.config.vocab_size as u64).to_le_bytes());
        out.extend_from_slice(&(self.config.topics as u64).to_le_bytes());
        out.extend_from_slice(&(self.config.embed_dim.unwrap_or(0) as u64).to_le_bytes());
        out.extend_from_slice(&self.config.lambda.to_le_bytes());
        out.extend_from_slice(&(self.config.mc_train as u64).to_le_bytes());
        out.extend_from_slice(&(self.config.mc_eval as u64).to_le_bytes());
        out.extend_from_slice(&self.config.seed.to_le_bytes());
        out.extend_from_slice(&self.vocab_hash.to_le_bytes());
        out.extend_from_slice(&self.rng_state.0.to_le_bytes());
        out.extend_from_slice(&self.rng_state.1.to_le_bytes());

        let named = self.params.named();
        out.extend_from_slice(&(named.len() as u16).to_le_bytes());
        for (name, t) in named {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in t.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(8)?;
        if magic != MAGIC {
            return Err(CliError::Io("not a checkpoint file (bad signature)".into()));
        }
        let kind = kind_from_u8(r.u8()?)
            .ok_or_else(|| CliError::Io("checkpoint: unknown model kind".into()))?;
        let latent = latent_from_u8(r.u8()?)
            .ok_or_else(|| CliError::Io("checkpoint: unknown activation".into()))?;
        let factorized = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(CliError::Io("checkpoint: bad factorization flag".into())),
        };
        if latent != kind.latent_activation() || factorized != kind.factorized() {
            return Err(CliError::Io("checkpoint: kind and structure fields disagree".into()));
        }
        let vocab_size = r.u64()? as usize;
        let topics = r.u64()? as usize;
        let embed_dim = match r.u64()? as usize {
            0 => None,
            d => Some(d),
        };
        let lambda = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let mc_train = r.u64()? as usize;
        let mc_eval = r.u64()? as usize;
        let seed = r.u64()?;
        let vocab_hash = r.u64()?;
        let rng_seed = r.u64()?;
        let rng_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());

        let config = ModelConfig {
            vocab_size,
            topics,
            latent,
            factorized,
            lambda,
            embed_dim,
            mc_train,
            mc_eval,
            seed,
        };
        config
            .validate()
            .map_err(|e| CliError::Io(format!("checkpoint: inconsistent config: {e}")))?;

        let mut params = ModelParams::zeroed(&config)
            .map_err(|e| CliError::Io(format!("checkpoint: {e}")))?;
        let n_tensors = r.u16()? as usize;
        let expected = params.named().len();
        if n_tensors != expected {
            return Err(CliError::Io(format!(
                "checkpoint: expected {expected} tensors, found {n_tensors}"
            )));
        }
        // Names must arrive in the canonical order; shapes must agree.
        for idx in 0..n_tensors {
            let name_len = r.u16()? as usize;
            let name = core::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CliError::Io("checkpoint: tensor name not UTF-8".into()))?
                .to_string();
            let ndim = r.u8()? as usize;
            let mut dims = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                dims.push(r.u64()? as usize);
            }
            let numel: usize = dims.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            let mut named = params.named_mut();
            let (want_name, slot) = &mut named[idx];
            if *want_name != name {
                return Err(CliError::Io(format!(
                    "checkpoint: tensor {idx} named {name:?}, expected {want_name:?}"
                )));
            }
            if slot.shape() != dims.as_slice() {
                return Err(CliError::Io(format!(
                    "checkpoint: tensor {name} has shape {dims:?}, expected {:?}",
                    slot.shape()
                )));
            }
            **slot = Tensor::new(dims, data);
        }
        if r.pos != bytes.len() {
            return Err(CliError::Io("checkpoint: trailing bytes".into()));
        }
        Ok(Checkpoint { kind, config, vocab_hash, rng_state: (rng_seed, rng_pos), params })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        if self.pos + n > self.bytes.len() {
            return Err(CliError::Io("checkpoint: truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CliError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CliError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CliError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(kind: ModelKind) -> Checkpoint {
        let mut config = ModelConfig::for_kind(kind, 7, 3, 99);
        if kind.factorized() || kind.default_lambda() > 0.0 {
            config.embed_dim = Some(4);
        }
        let params = ModelParams::init(&config).unwrap();
        Checkpoint {
            kind,
            config,
            vocab_hash: 0xdeadbeefcafe1234,
            rng_state: (42, 123456789012345678901234567890u128),
            params,
        }
    }

    #[test]
    fn test_round_trip_all_kinds_byte_identical() {
        for kind in [
            ModelKind::Ntm,
            ModelKind::Nvdm,
            ModelKind::Gsm,
            ModelKind::NtmR,
            ModelKind::NtmF,
            ModelKind::NtmFr,
        ] {
            let ckpt = sample(kind);
            let bytes = ckpt.to_bytes();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            assert_eq!(back, ckpt);
            assert_eq!(back.to_bytes(), bytes, "load-then-save must be byte-identical");
        }
    }

    #[test]
    fn test_rejects_corruption() {
        let ckpt = sample(ModelKind::Ntm);
        let bytes = ckpt.to_bytes();

        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err(), "truncation");
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err(), "trailing bytes");
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&wrong_magic).is_err(), "signature");
        let mut bad_kind = bytes;
        bad_kind[8] = 99;
        assert!(Checkpoint::from_bytes(&bad_kind).is_err(), "unknown kind");
    }

    #[test]
    fn test_params_survive_exactly() {
        let ckpt = sample(ModelKind::NtmF);
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        for ((_, a), (_, b)) in ckpt.params.named().iter().zip(back.params.named().iter()) {
            assert_eq!(a.shape(), b.shape());
            for (x, y) in a.data().iter().zip(b.data().iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
