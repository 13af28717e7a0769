//! Named parameter arrays with gradient and optimizer slots, plus the
//! checkpoint format (JSON manifest + little-endian blob).

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DiffError, Result};
use crate::real::Real;
use crate::tensor::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const BLOB_FILE: &str = "params.bin";
const FORMAT: &str = "rnar-checkpoint/1";

#[derive(Debug, Clone)]
pub struct ParamEntry<R> {
    pub value: Tensor<R>,
    pub grad: Tensor<R>,
    pub(crate) moment1: Vec<R>,
    pub(crate) moment2: Vec<R>,
}

impl<R: Real> ParamEntry<R> {
    fn new(value: Tensor<R>) -> Self {
        let n = value.numel();
        Self {
            grad: Tensor::zeros(value.shape().to_vec()),
            value,
            moment1: vec![R::zero(); n],
            moment2: vec![R::zero(); n],
        }
    }
}

/// Parameters keyed by name; iteration is lexicographic.
#[derive(Debug, Clone)]
pub struct ParamStore<R> {
    entries: BTreeMap<String, ParamEntry<R>>,
    rng_seed: u64,
}

/// 64-bit FNV-1a, used to give every entry its own init stream.
fn fnv1a(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
    dtype: String,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
struct Manifest {
    format: String,
    blob: String,
    rng_seed: u64,
    entries: Vec<ManifestEntry>,
}

impl<R: Real> ParamStore<R> {
    pub fn new(rng_seed: u64) -> Self {
        Self {
            entries: BTreeMap::new(),
            rng_seed,
        }
    }

    pub fn rng_seed(&self) -> u64 {
        self.rng_seed
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_values(&self) -> usize {
        self.entries.values().map(|e| e.value.numel()).sum()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    /// Inserts or replaces an entry; gradient and moments are reset.
    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<R>) {
        self.entries.insert(name.into(), ParamEntry::new(value));
    }

    pub fn value(&self, name: &str) -> Option<&Tensor<R>> {
        self.entries.get(name).map(|e| &e.value)
    }

    pub fn value_mut(&mut self, name: &str) -> Option<&mut Tensor<R>> {
        self.entries.get_mut(name).map(|e| &mut e.value)
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor<R>> {
        self.entries.get(name).map(|e| &e.grad)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &ParamEntry<R>)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub(crate) fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut ParamEntry<R>)> {
        self.entries.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Deterministic generator for entry `name`, independent of insertion order.
    fn entry_rng(&self, name: &str) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.rng_seed ^ fnv1a(name))
    }

    /// Weight of a linear map `[fan_in, fan_out]`, uniform in `±sqrt(6/(fan_in+fan_out))`.
    pub fn init_linear(&mut self, name: &str, fan_in: usize, fan_out: usize) {
        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let mut rng = self.entry_rng(name);
        let data = (0..fan_in * fan_out).map(|_| R::of(rng.gen_range(-s..s))).collect();
        self.insert(name, Tensor::new(vec![fan_in, fan_out], data).expect("shape"));
    }

    pub fn init_const(&mut self, name: &str, shape: Vec<usize>, value: f64) {
        self.insert(name, Tensor::full(shape, R::of(value)));
    }

    /// Uniform values in `[lo, hi)`, used by tests and verification drivers.
    pub fn init_uniform(&mut self, name: &str, shape: Vec<usize>, lo: f64, hi: f64) {
        let mut rng = self.entry_rng(name);
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| R::of(rng.gen_range(lo..hi))).collect();
        self.insert(name, Tensor::new(shape, data).expect("shape"));
    }

    pub fn zero_grad(&mut self) {
        for e in self.entries.values_mut() {
            e.grad.data_mut().iter_mut().for_each(|g| *g = R::zero());
        }
    }

    pub(crate) fn accumulate_grad(&mut self, name: &str, g: &[R]) -> Result<()> {
        let e = self
            .entries
            .get_mut(name)
            .ok_or_else(|| DiffError::UnknownParam(name.to_string()))?;
        if e.grad.numel() != g.len() {
            return Err(DiffError::ShapeMismatch {
                op: "backward",
                lhs: e.grad.shape().to_vec(),
                rhs: vec![g.len()],
            });
        }
        for (d, &s) in e.grad.data_mut().iter_mut().zip(g) {
            *d = *d + s;
        }
        Ok(())
    }

    pub fn grad_norm(&self) -> f64 {
        self.entries
            .values()
            .flat_map(|e| e.grad.data().iter())
            .map(|g| g.as_f64() * g.as_f64())
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales all gradients so their global L2 norm is at most `max_norm`.
    /// Returns the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm {
            let s = R::of(max_norm / norm);
            for e in self.entries.values_mut() {
                e.grad.data_mut().iter_mut().for_each(|g| *g = *g * s);
            }
        }
        norm
    }

    pub fn save_checkpoint(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut blob = Vec::with_capacity(self.num_values() * R::BYTES);
        let mut entries = Vec::with_capacity(self.entries.len());
        for (name, e) in &self.entries {
            entries.push(ManifestEntry {
                name: name.clone(),
                shape: e.value.shape().to_vec(),
                dtype: R::DTYPE.to_string(),
                offset: blob.len(),
            });
            for &x in e.value.data() {
                x.write_le(&mut blob);
            }
        }
        let manifest = Manifest {
            format: FORMAT.to_string(),
            blob: BLOB_FILE.to_string(),
            rng_seed: self.rng_seed,
            entries,
        };
        fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)? + "\n")?;
        fs::write(dir.join(BLOB_FILE), blob)?;
        Ok(())
    }

    pub fn load_checkpoint(dir: &Path) -> Result<Self> {
        let manifest: Manifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST_FILE))?)?;
        if manifest.format != FORMAT {
            return Err(DiffError::Checkpoint(format!("unsupported format `{}`", manifest.format)));
        }
        let blob = fs::read(dir.join(&manifest.blob))?;
        let mut store = Self::new(manifest.rng_seed);
        for e in manifest.entries {
            if e.dtype != R::DTYPE {
                return Err(DiffError::Checkpoint(format!(
                    "entry `{}` has dtype {}, expected {}",
                    e.name,
                    e.dtype,
                    R::DTYPE
                )));
            }
            let n: usize = e.shape.iter().product();
            let end = e.offset + n * R::BYTES;
            let bytes = blob
                .get(e.offset..end)
                .ok_or_else(|| DiffError::Checkpoint(format!("entry `{}` runs past the blob", e.name)))?;
            let data = bytes.chunks_exact(R::BYTES).map(R::read_le).collect();
            store.insert(e.name, Tensor::new(e.shape, data)?);
        }
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_is_independent_of_insertion_order() {
        let mut a = ParamStore::<f64>::new(7);
        a.init_linear("x", 3, 4);
        a.init_linear("y", 4, 2);
        let mut b = ParamStore::<f64>::new(7);
        b.init_linear("y", 4, 2);
        b.init_linear("x", 3, 4);
        assert_eq!(a.value("x"), b.value("x"));
        assert_eq!(a.names().collect::<Vec<_>>(), vec!["x", "y"]);
        let s = (6.0f64 / 7.0).sqrt();
        assert!(a.value("x").unwrap().data().iter().all(|v| v.abs() <= s));
    }

    #[test]
    fn clip_rescales_to_max_norm() {
        let mut s = ParamStore::<f64>::new(0);
        s.init_const("w", vec![2], 0.0);
        s.accumulate_grad("w", &[3.0, 4.0]).unwrap();
        assert_eq!(s.clip_grad_norm(1.0), 5.0);
        assert!((s.grad_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let dir = std::env::temp_dir().join(format!("diffcore-ckpt-{}", std::process::id()));
        let mut s = ParamStore::<f32>::new(11);
        s.init_linear("enc.w", 5, 3);
        s.init_const("lstm.b", vec![12], 1.0);
        s.insert("odd", Tensor::new(vec![2], vec![f32::MIN_POSITIVE, -0.0]).unwrap());
        s.save_checkpoint(&dir).unwrap();
        let back = ParamStore::<f32>::load_checkpoint(&dir).unwrap();
        for (name, e) in s.iter() {
            let other = back.value(name).unwrap();
            assert_eq!(e.value.shape(), other.shape());
            let bits = |t: &Tensor<f32>| t.data().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&e.value), bits(other));
        }
        assert!(ParamStore::<f64>::load_checkpoint(&dir).is_err());
        fs::remove_dir_all(&dir).ok();
    }
}
