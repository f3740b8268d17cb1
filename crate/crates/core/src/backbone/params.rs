use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::ModelSpec;
use crate::autodiff::{Array, Tape, Tensor};
use crate::error::{Error, Result};
use crate::rng;

/// Trainable weights keyed by stable names such as `conv1.weight`.
#[derive(Clone, Debug, PartialEq)]
pub struct Parameters {
    tensors: BTreeMap<String, Array>,
}

/// Parameter tensors as seen by one forward pass.
pub type ParamTensors = BTreeMap<String, Tensor>;

impl Parameters {
    pub fn new(tensors: BTreeMap<String, Array>) -> Self {
        Parameters { tensors }
    }

    /// He-normal weights (variance 2/fan_in), zero biases. Each tensor draws
    /// from its own stream so the result depends only on `seed` and name.
    pub fn init(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut tensors = BTreeMap::new();
        for (name, shape) in spec.param_shapes()? {
            let n: usize = shape.iter().product();
            let value = if name.ends_with(".bias") {
                Array::zeros(shape)
            } else {
                let fan_in: usize = if shape.len() == 4 {
                    shape[1] * shape[2] * shape[3]
                } else {
                    shape[0]
                };
                let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt())
                    .map_err(|e| Error::invalid(e.to_string()))?;
                let mut r = rng::stream(seed, &["init".into(), name.as_str().into()]);
                Array::new(shape, (0..n).map(|_| normal.sample(&mut r)).collect())?
            };
            tensors.insert(name, value);
        }
        Ok(Parameters { tensors })
    }

    pub fn get(&self, name: &str) -> Option<&Array> {
        self.tensors.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Array)> {
        self.tensors.iter()
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn count(&self) -> usize {
        self.tensors.values().map(Array::numel).sum()
    }

    pub fn set(&mut self, name: &str, value: Array) -> Result<()> {
        match self.tensors.get_mut(name) {
            Some(slot) if slot.shape() == value.shape() => {
                *slot = value;
                Ok(())
            }
            Some(slot) => Err(Error::ShapeMismatch {
                op: "set parameter",
                lhs: slot.shape().to_vec(),
                rhs: value.shape().to_vec(),
            }),
            None => Err(Error::invalid(format!("unknown parameter {name}"))),
        }
    }

    /// Registers every parameter as a leaf on `tape`.
    pub fn on_tape(&self, tape: &Tape) -> ParamTensors {
        self.tensors
            .iter()
            .map(|(k, v)| (k.clone(), tape.leaf(v.clone())))
            .collect()
    }

    pub fn constants(&self) -> ParamTensors {
        self.tensors
            .iter()
            .map(|(k, v)| (k.clone(), Tensor::constant(v.clone())))
            .collect()
    }

    pub fn check_against(&self, spec: &ModelSpec) -> Result<()> {
        let expected = spec.param_shapes()?;
        if expected.len() != self.tensors.len() {
            return Err(Error::invalid(format!(
                "spec expects {} parameter tensors, checkpoint has {}",
                expected.len(),
                self.tensors.len()
            )));
        }
        for (name, shape) in expected {
            match self.tensors.get(&name) {
                Some(a) if a.shape() == shape.as_slice() => {}
                Some(a) => {
                    return Err(Error::ShapeMismatch {
                        op: "parameter shape",
                        lhs: a.shape().to_vec(),
                        rhs: shape,
                    })
                }
                None => return Err(Error::invalid(format!("missing parameter {name}"))),
            }
        }
        Ok(())
    }

    pub fn bit_eq(&self, other: &Parameters) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|((ka, a), (kb, b))| ka == kb && a.bit_eq(b))
    }
}

const MAGIC: &[u8] = b"PALCKPT1\n";

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset within the data section.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    tensors: Vec<TensorEntry>,
}

/// Serializes a checkpoint: magic line, one-line JSON header listing
/// `{name, shape, offset}`, newline, then little-endian `f64` data.
pub fn checkpoint_bytes(spec: &ModelSpec, params: &Parameters) -> Result<Vec<u8>> {
    let mut entries = Vec::new();
    let mut offset = 0;
    for (name, a) in &params.tensors {
        entries.push(TensorEntry {
            name: name.clone(),
            shape: a.shape().to_vec(),
            offset,
        });
        offset += a.numel() * 8;
    }
    let header = serde_json::to_string(&Header {
        spec: spec.clone(),
        tensors: entries,
    })?;
    let mut out = Vec::with_capacity(MAGIC.len() + header.len() + 1 + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(header.as_bytes());
    out.push(b'\n');
    for a in params.tensors.values() {
        for v in a.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn parse_checkpoint(bytes: &[u8], path: &Path) -> Result<(ModelSpec, Parameters)> {
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or_else(|| Error::format(path, "not a checkpoint (bad magic)"))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format(path, "unterminated header"))?;
    let header: Header = serde_json::from_slice(&rest[..nl])
        .map_err(|e| Error::format(path, format!("corrupt header: {e}")))?;
    let data = &rest[nl + 1..];
    let mut tensors = BTreeMap::new();
    let mut expected_end = 0;
    for e in header.tensors {
        let n: usize = e.shape.iter().product();
        let end = e.offset + n * 8;
        let raw = data
            .get(e.offset..end)
            .ok_or_else(|| Error::format(path, format!("tensor {} runs past end of file", e.name)))?;
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        expected_end = expected_end.max(end);
        tensors.insert(e.name, Array::new(e.shape, values)?);
    }
    if expected_end != data.len() {
        return Err(Error::format(path, "trailing bytes after tensor data"));
    }
    let params = Parameters { tensors };
    params.check_against(&header.spec)?;
    Ok((header.spec, params))
}

/// Writes to a temporary sibling and renames it into place, so an
/// interrupted write never leaves a partial checkpoint at `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("{} has no file name", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", file_name.to_string_lossy(), std::process::id()));
    let written = fs::File::create(&tmp)
        .and_then(|mut f| {
            f.write_all(bytes)?;
            f.sync_all()
        })
        .map_err(|e| Error::io(&tmp, e))
        .and_then(|_| fs::rename(&tmp, path).map_err(|e| Error::io(path, e)));
    if written.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    written
}

pub fn save_checkpoint(path: &Path, spec: &ModelSpec, params: &Parameters) -> Result<()> {
    write_atomic(path, &checkpoint_bytes(spec, params)?)
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelSpec, Parameters)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes, path)
}
