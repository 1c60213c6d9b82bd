use std::io::Write;

use super::config::ModelConfig;
use crate::blocks::{Hcfss, HcfssConfig, Rbs, Rbu, SubpelConv};
use crate::entropy::{FactorizedDensity, HyperAnalysis, HyperConfig, HyperSynthesis, SliceConfig, SliceNetwork};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, Init};
use crate::params::{ParamBuilder, ParamStore};
use crate::tape::{Tape, Var};
use crate::tensor::Scalar;

const MODEL_MAGIC: &[u8; 8] = b"HCFSMODL";
const MODEL_VERSION: u8 = 1;

/// Initial spread of the analysis output layer. With plain fan-in scaling the
/// latents start with an RMS near 0.1, every symbol rounds to zero and no
/// information reaches the decoder until training pushes them out.
const LATENT_INIT_STD: f32 = 0.5;

/// `g_a`: three residual downsampling blocks each followed by an HCFSS
/// block, then a stride-2 convolution to `M` channels (16x reduction).
#[derive(Clone, Debug)]
pub struct Analysis {
    stages: Vec<(Rbs, Hcfss)>,
    conv_out: Conv2d,
}

impl Analysis {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: &ModelConfig) -> Self {
        let block = HcfssConfig {
            channels: cfg.channels,
            state: cfg.state,
            afmm_window: cfg.main_window,
        };
        pb.scoped(name, |pb| Self {
            stages: (0..3)
                .map(|i| {
                    let c_in = if i == 0 { 3 } else { cfg.channels };
                    (
                        Rbs::new(pb, &format!("rbs{i}"), c_in, cfg.channels),
                        Hcfss::new(pb, &format!("hcfss{i}"), block),
                    )
                })
                .collect(),
            conv_out: Conv2d::new(
                pb,
                "conv_out",
                cfg.channels,
                cfg.latent,
                3,
                2,
                Init::TruncNormal(LATENT_INIT_STD),
            ),
        })
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, x: Var) -> Result<Var> {
        let s = t.shape(x);
        if s.len() != 3 || s[1] % 16 != 0 || s[2] % 16 != 0 {
            return Err(Error::shape("g_a", format!("axes 1,2 of {s:?} must be multiples of 16")));
        }
        let mut u = x;
        for (rbs, block) in &self.stages {
            u = rbs.forward(t, u)?;
            u = block.forward(t, u)?;
        }
        self.conv_out.forward(t, u)
    }
}

/// `g_s`: mirror of [`Analysis`] with residual upsampling blocks and a final
/// sub-pixel convolution to RGB.
#[derive(Clone, Debug)]
pub struct Synthesis {
    stages: Vec<(Rbu, Hcfss)>,
    conv_out: SubpelConv,
}

impl Synthesis {
    pub fn new(pb: &mut ParamBuilder, name: &str, cfg: &ModelConfig) -> Self {
        let block = HcfssConfig {
            channels: cfg.channels,
            state: cfg.state,
            afmm_window: cfg.main_window,
        };
        pb.scoped(name, |pb| Self {
            stages: (0..3)
                .map(|i| {
                    let c_in = if i == 0 { cfg.latent } else { cfg.channels };
                    (
                        Rbu::new(pb, &format!("rbu{i}"), c_in, cfg.channels),
                        Hcfss::new(pb, &format!("hcfss{i}"), block),
                    )
                })
                .collect(),
            conv_out: SubpelConv::new(pb, "conv_out", cfg.channels, 3, 3, 2),
        })
    }

    pub fn forward<T: Scalar>(&self, t: &mut Tape<T>, y: Var) -> Result<Var> {
        let mut u = y;
        for (rbu, block) in &self.stages {
            u = rbu.forward(t, u)?;
            u = block.forward(t, u)?;
        }
        self.conv_out.forward(t, u)
    }
}

/// All learned components. Parameters live in a separate [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Model {
    pub cfg: ModelConfig,
    pub g_a: Analysis,
    pub g_s: Synthesis,
    pub h_a: HyperAnalysis,
    pub h_mean: HyperSynthesis,
    pub h_scale: HyperSynthesis,
    pub density: FactorizedDensity,
    pub slices: SliceNetwork,
}

impl Model {
    /// Build a freshly initialised model.
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<(Self, ParamStore)> {
        let mut store = ParamStore::new();
        let model = Self::register(&mut ParamBuilder::new(&mut store, seed), cfg)?;
        Ok((model, store))
    }

    fn register(pb: &mut ParamBuilder, cfg: ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let hyper = HyperConfig {
            latent: cfg.latent,
            hyper_latent: cfg.hyper_latent,
            hidden: cfg.hyper_width,
            out: cfg.latent,
            state: cfg.state,
            afmm_window: cfg.entropy_window,
        };
        Ok(Self {
            cfg,
            g_a: Analysis::new(pb, "g_a", &cfg),
            g_s: Synthesis::new(pb, "g_s", &cfg),
            h_a: HyperAnalysis::new(pb, "h_a", hyper),
            h_mean: HyperSynthesis::new(pb, "h_mean", hyper),
            h_scale: HyperSynthesis::new(pb, "h_scale", hyper),
            density: FactorizedDensity::new(pb, "density", cfg.hyper_latent),
            slices: SliceNetwork::new(
                pb,
                "slices",
                SliceConfig {
                    latent: cfg.latent,
                    slices: cfg.slices,
                    hyper: cfg.latent,
                    hidden: cfg.slice_hidden,
                    heads: cfg.heads,
                    window: cfg.entropy_window,
                },
            )?,
        })
    }

    /// Model file: magic, version, config words, lambda, parameter checkpoint.
    pub fn save<W: Write>(&self, store: &ParamStore, lambda: f64, mut w: W) -> Result<()> {
        w.write_all(MODEL_MAGIC)?;
        w.write_all(&[MODEL_VERSION])?;
        for v in self.cfg.to_words() {
            w.write_all(&v.to_le_bytes())?;
        }
        w.write_all(&lambda.to_le_bytes())?;
        store.write_checkpoint(w)
    }

    pub fn to_bytes(&self, store: &ParamStore, lambda: f64) -> Vec<u8> {
        let mut out = Vec::new();
        self.save(store, lambda, &mut out).expect("writing to a Vec cannot fail");
        out
    }

    /// Inverse of [`Model::save`]: returns the model, its parameters and the
    /// recorded lambda.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Self, ParamStore, f64)> {
        let header = 8 + 1 + 40 + 8;
        if bytes.len() < header {
            return Err(Error::LengthOverrun {
                what: "model header",
                needed: header,
                available: bytes.len(),
            });
        }
        if &bytes[..8] != MODEL_MAGIC {
            return Err(Error::BadMagic { expected: "HCFSMODL" });
        }
        if bytes[8] != MODEL_VERSION {
            return Err(Error::VersionMismatch {
                found: bytes[8],
                expected: MODEL_VERSION,
            });
        }
        let words: [u32; 10] = std::array::from_fn(|i| {
            u32::from_le_bytes(bytes[9 + 4 * i..13 + 4 * i].try_into().unwrap())
        });
        let lambda = f64::from_le_bytes(bytes[49..57].try_into().unwrap());
        let cfg = ModelConfig::from_words(words);
        let (model, mut store) = Self::new(cfg, 0)?;
        let loaded = ParamStore::from_checkpoint_bytes(&bytes[header..])?;
        if loaded.len() != store.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameters, model expects {}",
                loaded.len(),
                store.len()
            )));
        }
        store.assign_from(&loaded)?;
        Ok((model, store, lambda))
    }
}
