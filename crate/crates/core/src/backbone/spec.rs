use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub kernel: usize,
    pub stride: usize,
}

/// conv → relu → optional maxpool.
///
/// The post-relu map is tapped as `name`; when pooled, the post-pool map is
/// tapped as `name.pool`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub name: String,
    pub conv: ConvSpec,
    #[serde(default)]
    pub pool: Option<PoolSpec>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// (channels, height, width)
    pub input: (usize, usize, usize),
    pub blocks: Vec<Block>,
    pub n_classes: usize,
    /// Bias terms on conv and dense layers.
    pub bias: bool,
}

/// Shape (channels, height, width) of one tapped map.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TapInfo {
    pub name: String,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    /// True when the next operation applied to this map is a max-pool.
    pub feeds_pool: bool,
}

pub fn pool_tap_name(block: &str) -> String {
    format!("{block}.pool")
}

impl ModelSpec {
    /// Grayscale 64×64 → conv8/relu/pool → conv16/relu/pool → conv16/relu →
    /// conv32/relu/pool → dense(n_classes).
    pub fn toy() -> Self {
        let conv = |c| ConvSpec {
            out_channels: c,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        let pool = Some(PoolSpec { kernel: 2, stride: 2 });
        ModelSpec {
            input: (1, 64, 64),
            blocks: vec![
                Block { name: "conv1".into(), conv: conv(8), pool },
                Block { name: "conv2".into(), conv: conv(16), pool },
                Block { name: "conv3".into(), conv: conv(16), pool: None },
                Block { name: "conv4".into(), conv: conv(32), pool },
            ],
            n_classes: 7,
            bias: true,
        }
    }

    /// Two conv layers on a 16×16 input, for gradient checking.
    pub fn tiny() -> Self {
        let conv = |c| ConvSpec {
            out_channels: c,
            kernel: 3,
            stride: 1,
            padding: 1,
        };
        let pool = Some(PoolSpec { kernel: 2, stride: 2 });
        ModelSpec {
            input: (1, 16, 16),
            blocks: vec![
                Block { name: "conv1".into(), conv: conv(4), pool },
                Block { name: "conv2".into(), conv: conv(4), pool },
            ],
            n_classes: 7,
            bias: true,
        }
    }

    pub fn by_id(id: &str) -> Result<Self> {
        match id {
            "toy" => Ok(Self::toy()),
            "tiny" => Ok(Self::tiny()),
            other => Err(Error::invalid(format!("unknown model spec id {other:?} (expected toy or tiny)"))),
        }
    }

    pub fn with_bias(mut self, bias: bool) -> Self {
        self.bias = bias;
        self
    }

    /// Every tapped map in forward order, with its shape.
    pub fn taps(&self) -> Result<Vec<TapInfo>> {
        let (mut c, mut h, mut w) = self.input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::invalid("input extents must be positive"));
        }
        let mut taps = Vec::new();
        for b in &self.blocks {
            let cs = &b.conv;
            if cs.out_channels == 0 || cs.kernel == 0 || cs.stride == 0 {
                return Err(Error::invalid(format!("block {}: conv extents must be positive", b.name)));
            }
            if cs.kernel > h + 2 * cs.padding || cs.kernel > w + 2 * cs.padding {
                return Err(Error::invalid(format!("block {}: kernel larger than padded input", b.name)));
            }
            h = (h + 2 * cs.padding - cs.kernel) / cs.stride + 1;
            w = (w + 2 * cs.padding - cs.kernel) / cs.stride + 1;
            c = cs.out_channels;
            taps.push(TapInfo {
                name: b.name.clone(),
                channels: c,
                height: h,
                width: w,
                feeds_pool: b.pool.is_some(),
            });
            if let Some(p) = b.pool {
                if p.kernel == 0 || p.stride == 0 || p.kernel > h || p.kernel > w {
                    return Err(Error::invalid(format!("block {}: pooling window exceeds spatial extent", b.name)));
                }
                h = (h - p.kernel) / p.stride + 1;
                w = (w - p.kernel) / p.stride + 1;
                taps.push(TapInfo {
                    name: pool_tap_name(&b.name),
                    channels: c,
                    height: h,
                    width: w,
                    feeds_pool: false,
                });
            }
        }
        Ok(taps)
    }

    /// Checks extents and tap-name uniqueness.
    pub fn validate(&self) -> Result<()> {
        if self.blocks.is_empty() {
            return Err(Error::invalid("model needs at least one block"));
        }
        if self.n_classes < 2 {
            return Err(Error::invalid("model needs at least two classes"));
        }
        let taps = self.taps()?;
        let mut seen = HashSet::new();
        for t in &taps {
            if !seen.insert(t.name.as_str()) {
                return Err(Error::invalid(format!("duplicate tap name {}", t.name)));
            }
        }
        Ok(())
    }

    pub fn tap(&self, name: &str) -> Result<TapInfo> {
        self.taps()?
            .into_iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::invalid(format!("layer {name:?} is not a declared tap")))
    }

    /// Name of the last post-activation conv map.
    pub fn last_conv_tap(&self) -> String {
        self.blocks.last().map(|b| b.name.clone()).unwrap_or_default()
    }

    /// Flattened feature length entering the dense head.
    pub fn flat_features(&self) -> Result<usize> {
        let last = self.taps()?.pop().ok_or_else(|| Error::invalid("empty model"))?;
        Ok(last.channels * last.height * last.width)
    }

    /// Parameter names with their shapes, in a stable order.
    pub fn param_shapes(&self) -> Result<Vec<(String, Vec<usize>)>> {
        let mut out = Vec::new();
        let mut in_c = self.input.0;
        for b in &self.blocks {
            let k = b.conv.kernel;
            out.push((format!("{}.weight", b.name), vec![b.conv.out_channels, in_c, k, k]));
            if self.bias {
                out.push((format!("{}.bias", b.name), vec![b.conv.out_channels]));
            }
            in_c = b.conv.out_channels;
        }
        out.push(("dense.weight".into(), vec![self.flat_features()?, self.n_classes]));
        if self.bias {
            out.push(("dense.bias".into(), vec![self.n_classes]));
        }
        Ok(out)
    }

    pub fn param_count(&self) -> Result<usize> {
        Ok(self.param_shapes()?.iter().map(|(_, s)| s.iter().product::<usize>()).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_shapes_follow_conv_pool_arithmetic() {
        let taps = ModelSpec::toy().taps().unwrap();
        let dims: Vec<(&str, usize, usize, usize)> =
            taps.iter().map(|t| (t.name.as_str(), t.channels, t.height, t.width)).collect();
        assert_eq!(
            dims,
            vec![
                ("conv1", 8, 64, 64),
                ("conv1.pool", 8, 32, 32),
                ("conv2", 16, 32, 32),
                ("conv2.pool", 16, 16, 16),
                ("conv3", 16, 16, 16),
                ("conv4", 32, 16, 16),
                ("conv4.pool", 32, 8, 8),
            ]
        );
    }

    #[test]
    fn toy_is_small() {
        let n = ModelSpec::toy().param_count().unwrap();
        assert!(n < 200_000, "{n}");
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = ModelSpec::toy();
        s.blocks[1].name = "conv1".into();
        assert!(s.validate().is_err());
        let mut s = ModelSpec::tiny();
        s.blocks[0].conv.out_channels = 0;
        assert!(s.validate().is_err());
        let mut s = ModelSpec::tiny();
        s.input = (1, 2, 2);
        assert!(s.validate().is_err());
        assert!(ModelSpec::toy().tap("nope").is_err());
    }
}
