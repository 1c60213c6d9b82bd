//! Named parameters, initialisers and the checkpoint file format.
//!
//! Checkpoint layout (little-endian):
//!
//! ```text
//! "HCFSCKPT" | version u8 | record*
//! record = name_len u16 | name utf-8 | rank u8 | extents u32[rank] | f32[prod(extents)]
//! ```

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tape::Gradients;
use crate::tensor::{Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HCFSCKPT";
pub const CHECKPOINT_VERSION: u8 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

#[derive(Clone, Debug)]
pub struct Parameter<T: Scalar = f32> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Parameters in registration order plus their accumulated gradients.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T: Scalar = f32> {
    params: Vec<Parameter<T>>,
    grads: Vec<Tensor<T>>,
    index: HashMap<String, ParamId>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self {
            params: Vec::new(),
            grads: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn register(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::InvalidArgument(format!("duplicate parameter name {name}")));
        }
        let id = ParamId(self.params.len());
        self.grads.push(Tensor::zeros(value.shape()));
        self.params.push(Parameter {
            name: name.clone(),
            value,
        });
        self.index.insert(name, id);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter<T>)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.params[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }

    pub fn zero_grad(&mut self) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v = T::zero());
        }
    }

    /// Add one backward pass worth of gradients (`+=`).
    pub fn accumulate(&mut self, grads: &Gradients<T>) {
        for (slot, g) in self.grads.iter_mut().zip(grads.param_slots()) {
            if let Some(g) = g {
                slot.add_assign(g);
            }
        }
    }

    pub fn scale_grads(&mut self, s: T) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v = *v * s);
        }
    }

    pub fn values_and_grads_mut(&mut self) -> impl Iterator<Item = (&mut Tensor<T>, &Tensor<T>)> {
        self.params
            .iter_mut()
            .zip(self.grads.iter())
            .map(|(p, g)| (&mut p.value, g))
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
            grads: self.grads.iter().map(|g| g.cast()).collect(),
            index: self.index.clone(),
        }
    }

    /// Copy values by name from `other`. Every parameter here must be present
    /// there with the same shape.
    pub fn assign_from(&mut self, other: &ParamStore<T>) -> Result<()> {
        for p in &mut self.params {
            let src = other
                .id(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {}", p.name)))?;
            let src = other.value(src);
            if src.shape() != p.value.shape() {
                return Err(Error::Checkpoint(format!(
                    "{}: shape {:?} in checkpoint, model expects {:?}",
                    p.name,
                    src.shape(),
                    p.value.shape()
                )));
            }
            p.value = src.clone();
        }
        Ok(())
    }
}

impl ParamStore<f32> {
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        w.write_all(&[CHECKPOINT_VERSION])?;
        for p in &self.params {
            let name = p.name.as_bytes();
            let len = u16::try_from(name.len())
                .map_err(|_| Error::Checkpoint(format!("name too long: {}", p.name)))?;
            w.write_all(&len.to_le_bytes())?;
            w.write_all(name)?;
            let shape = p.value.shape();
            let rank = u8::try_from(shape.len())
                .map_err(|_| Error::Checkpoint(format!("rank too large: {}", p.name)))?;
            w.write_all(&[rank])?;
            for &d in shape {
                let d = u32::try_from(d)
                    .map_err(|_| Error::Checkpoint(format!("extent too large: {}", p.name)))?;
                w.write_all(&d.to_le_bytes())?;
            }
            let mut buf = Vec::with_capacity(p.value.numel() * 4);
            for v in p.value.data() {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            w.write_all(&buf)?;
        }
        Ok(())
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_checkpoint(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes)?;
        Self::from_checkpoint_bytes(&bytes)
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(8, "magic")? != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic { expected: "HCFSCKPT" });
        }
        let version = cur.take(1, "version")?[0];
        if version != CHECKPOINT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: CHECKPOINT_VERSION,
            });
        }
        let mut store = ParamStore::new();
        while cur.pos < bytes.len() {
            let len = u16::from_le_bytes(cur.take(2, "name length")?.try_into().unwrap());
            let name = std::str::from_utf8(cur.take(len as usize, "name")?)
                .map_err(|_| Error::Checkpoint("parameter name is not utf-8".into()))?
                .to_string();
            let rank = cur.take(1, "rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(u32::from_le_bytes(cur.take(4, "extent")?.try_into().unwrap()) as usize);
            }
            let n: usize = shape.iter().product();
            let raw = cur.take(n * 4, "payload")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let value = Tensor::new(&shape, data)
                .map_err(|e| Error::Checkpoint(format!("{name}: {e}")))?;
            store
                .register(name, value)
                .map_err(|e| Error::Checkpoint(e.to_string()))?;
        }
        Ok(store)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(Error::LengthOverrun {
                what,
                needed: n,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

/// Registers parameters under a dotted name path with seeded initialisation.
pub struct ParamBuilder<'s> {
    store: &'s mut ParamStore<f32>,
    prefix: Vec<String>,
    rng: ChaCha8Rng,
}

impl<'s> ParamBuilder<'s> {
    pub fn new(store: &'s mut ParamStore<f32>, seed: u64) -> Self {
        Self {
            store,
            prefix: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn scoped<R>(&mut self, name: &str, f: impl FnOnce(&mut Self) -> R) -> R {
        self.prefix.push(name.to_string());
        let r = f(self);
        self.prefix.pop();
        r
    }

    fn full_name(&self, name: &str) -> String {
        let mut s = self.prefix.join(".");
        if !s.is_empty() {
            s.push('.');
        }
        s.push_str(name);
        s
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn tensor(&mut self, name: &str, value: Tensor<f32>) -> ParamId {
        let full = self.full_name(name);
        self.store
            .register(full, value)
            .expect("parameter names are unique by construction")
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> ParamId {
        self.tensor(name, Tensor::zeros(shape))
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], v: f32) -> ParamId {
        self.tensor(name, Tensor::full(shape, v))
    }

    /// Uniform in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`.
    pub fn fan_in_uniform(&mut self, name: &str, shape: &[usize], fan_in: usize) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f32).sqrt();
        let t = Tensor::from_fn(shape, |_| self.rng.random_range(-bound..bound));
        self.tensor(name, t)
    }

    /// Normal(0, std) truncated to two standard deviations.
    pub fn trunc_normal(&mut self, name: &str, shape: &[usize], std: f32) -> ParamId {
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| loop {
            let v = standard_normal(rng);
            if v.abs() <= 2.0 {
                break v as f32 * std;
            }
        });
        self.tensor(name, t)
    }
}

/// Box-Muller draw.
pub(crate) fn standard_normal<R: Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Overwrite every parameter with `N(0, std)` noise. Used by tests that need
/// all branches active, including those that are zero at default init.
pub fn randomize(store: &mut ParamStore<f32>, seed: u64, std: f32) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        for v in store.value_mut(id).data_mut() {
            *v = standard_normal(&mut rng) as f32 * std;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_store() -> ParamStore<f32> {
        let mut store = ParamStore::new();
        let mut b = ParamBuilder::new(&mut store, 7);
        b.scoped("g_a", |b| {
            b.scoped("conv", |b| {
                b.fan_in_uniform("weight", &[4, 3, 3, 3], 27);
                b.zeros("bias", &[4]);
            });
        });
        b.trunc_normal("head.weight", &[5, 2], 0.02);
        store
    }

    #[test]
    fn names_are_dotted_paths() {
        let store = sample_store();
        assert!(store.id("g_a.conv.weight").is_some());
        assert!(store.id("head.weight").is_some());
    }

    #[test]
    fn duplicate_name_rejected() {
        let mut store = ParamStore::<f32>::new();
        store.register("a", Tensor::zeros(&[1])).unwrap();
        assert!(store.register("a", Tensor::zeros(&[1])).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_is_byte_identical() {
        let store = sample_store();
        let a = store.to_checkpoint_bytes();
        let loaded = ParamStore::from_checkpoint_bytes(&a).unwrap();
        let b = loaded.to_checkpoint_bytes();
        assert_eq!(a, b);
        assert_eq!(&a[..8], b"HCFSCKPT");
    }

    #[test]
    fn checkpoint_errors_are_distinct() {
        let bytes = sample_store().to_checkpoint_bytes();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            ParamStore::from_checkpoint_bytes(&bad),
            Err(Error::BadMagic { .. })
        ));
        let mut bad = bytes.clone();
        bad[8] = 9;
        assert!(matches!(
            ParamStore::from_checkpoint_bytes(&bad),
            Err(Error::VersionMismatch { .. })
        ));
        assert!(matches!(
            ParamStore::from_checkpoint_bytes(&bytes[..bytes.len() - 3]),
            Err(Error::LengthOverrun { .. })
        ));
    }

    #[test]
    fn trunc_normal_is_bounded() {
        let store = sample_store();
        let w = store.value(store.id("head.weight").unwrap());
        assert!(w.data().iter().all(|v| v.abs() <= 0.04));
    }
}
