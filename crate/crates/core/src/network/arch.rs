use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::record;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub const fn new(kernel: usize, out_channels: usize) -> Self {
        ConvSpec {
            kernel,
            out_channels,
        }
    }
}

/// Output head: a softmax over `M` anchors, or a single regressed score.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Pqr(usize),
    Sqr,
}

impl Head {
    pub fn output_len(&self) -> usize {
        match self {
            Head::Pqr(m) => *m,
            Head::Sqr => 1,
        }
    }

    pub fn is_pqr(&self) -> bool {
        matches!(self, Head::Pqr(_))
    }
}

impl fmt::Display for Head {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Head::Pqr(m) => write!(f, "pqr:{m}"),
            Head::Sqr => f.write_str("sqr"),
        }
    }
}

impl FromStr for Head {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "sqr" {
            return Ok(Head::Sqr);
        }
        match s.strip_prefix("pqr:").map(str::parse) {
            Some(Ok(m)) => Ok(Head::Pqr(m)),
            _ => Err(Error::InvalidInput(format!("bad head {s:?}"))),
        }
    }
}

/// Shape of the shallow network: `conv (stride 1, no padding) -> 2x2 max-pool
/// -> ReLU` per stage, an optional hidden fully connected ReLU layer, dropout,
/// and the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchConfig {
    pub input_size: usize,
    pub input_channels: usize,
    pub conv: Vec<ConvSpec>,
    /// Width of the hidden FC layer; 0 connects the last conv stage straight
    /// to the output layer.
    pub fc_width: usize,
    pub head: Head,
    pub dropout: f64,
}

impl ArchConfig {
    /// 32x32 input, four stages with doubling channels, 64-wide hidden FC.
    pub fn desk(head: Head) -> Self {
        ArchConfig {
            input_size: 32,
            input_channels: 3,
            conv: vec![
                ConvSpec::new(3, 8),
                ConvSpec::new(3, 16),
                ConvSpec::new(3, 32),
                ConvSpec::new(2, 64),
            ],
            fc_width: 64,
            head,
            dropout: 0.5,
        }
    }

    /// Full-size shallow network: 64x64 input, five stages 32..512, single FC.
    pub fn full(head: Head) -> Self {
        ArchConfig {
            input_size: 64,
            input_channels: 3,
            conv: vec![
                ConvSpec::new(3, 32),
                ConvSpec::new(3, 64),
                ConvSpec::new(3, 128),
                ConvSpec::new(3, 256),
                ConvSpec::new(2, 512),
            ],
            fc_width: 0,
            head,
            dropout: 0.5,
        }
    }

    pub fn preset(name: &str, head: Head) -> Result<Self> {
        match name {
            "desk" => Ok(ArchConfig::desk(head)),
            "full" => Ok(ArchConfig::full(head)),
            other => Err(Error::InvalidParameter(format!("unknown arch preset {other:?}"))),
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_channels * self.input_size * self.input_size
    }

    /// Spatial size after each stage, checking that none underflows.
    pub(crate) fn stage_sizes(&self) -> Result<Vec<StageShape>> {
        let bad = |msg: String| Err(Error::InvalidArchitecture(msg));
        if self.input_size == 0 || self.input_channels == 0 {
            return bad("input size and channels must be positive".into());
        }
        if self.conv.is_empty() {
            return bad("at least one conv stage is required".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if let Head::Pqr(m) = self.head {
            if m < 2 {
                return bad(format!("pqr head needs M >= 2, got {m}"));
            }
        }
        let mut size = self.input_size;
        let mut channels = self.input_channels;
        let mut out = Vec::with_capacity(self.conv.len());
        for (i, spec) in self.conv.iter().enumerate() {
            if spec.kernel == 0 || spec.out_channels == 0 {
                return bad(format!("stage {i}: kernel and channels must be positive"));
            }
            if spec.kernel > size {
                return bad(format!(
                    "stage {i}: {k}x{k} kernel on a {size}x{size} map underflows",
                    k = spec.kernel
                ));
            }
            let conv = size - spec.kernel + 1;
            let pooled = pooled_size(conv);
            out.push(StageShape {
                in_channels: channels,
                out_channels: spec.out_channels,
                kernel: spec.kernel,
                in_size: size,
                conv_size: conv,
                pool_size: pooled,
            });
            size = pooled;
            channels = spec.out_channels;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        self.stage_sizes().map(|_| ())
    }

    /// `input=32x3 conv=3x8,3x16 fc=64 head=pqr:5 dropout=0.5`
    pub fn to_record(&self) -> String {
        let conv = self
            .conv
            .iter()
            .map(|c| format!("{}x{}", c.kernel, c.out_channels))
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "input={}x{} conv={} fc={} head={} dropout={}",
            self.input_size, self.input_channels, conv, self.fc_width, self.head, self.dropout
        )
    }

    pub fn from_record(line: &str) -> Result<Self> {
        let fields = record::parse_fields(line)?;
        let pair = |text: &str, what: &str| -> Result<(usize, usize)> {
            let (a, b) = text
                .split_once('x')
                .ok_or_else(|| Error::InvalidInput(format!("bad {what} {text:?}")))?;
            Ok((record::parse_num(a, what)?, record::parse_num(b, what)?))
        };
        let (input_size, input_channels) = pair(record::field(&fields, "input")?, "input")?;
        let conv = record::field(&fields, "conv")?
            .split(',')
            .map(|t| pair(t, "conv").map(|(k, c)| ConvSpec::new(k, c)))
            .collect::<Result<Vec<_>>>()?;
        let arch = ArchConfig {
            input_size,
            input_channels,
            conv,
            fc_width: record::parse_num(record::field(&fields, "fc")?, "fc")?,
            head: record::field(&fields, "head")?.parse()?,
            dropout: record::parse_num(record::field(&fields, "dropout")?, "dropout")?,
        };
        arch.validate()?;
        Ok(arch)
    }
}

/// 2x2 stride-2 pooling; a 1x1 map passes through unchanged.
pub(crate) fn pooled_size(size: usize) -> usize {
    if size == 1 {
        1
    } else {
        size / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct StageShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub in_size: usize,
    pub conv_size: usize,
    pub pool_size: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_shapes() {
        let s = ArchConfig::desk(Head::Pqr(5)).stage_sizes().unwrap();
        let sizes: Vec<_> = s.iter().map(|s| (s.conv_size, s.pool_size)).collect();
        assert_eq!(sizes, vec![(30, 15), (13, 6), (4, 2), (1, 1)]);
    }

    #[test]
    fn full_shapes_and_parameter_count() {
        let a = ArchConfig::full(Head::Pqr(5));
        let s = a.stage_sizes().unwrap();
        assert_eq!(s.last().unwrap().pool_size, 1);
        let conv: usize = s
            .iter()
            .map(|s| s.out_channels * (s.in_channels * s.kernel * s.kernel + 1))
            .sum();
        // Roughly 0.9M parameters.
        assert!((900_000..930_000).contains(&conv), "{conv}");
    }

    #[test]
    fn six_stages_underflow() {
        let mut a = ArchConfig::desk(Head::Sqr);
        a.conv = vec![ConvSpec::new(3, 4); 6];
        assert!(matches!(a.validate(), Err(Error::InvalidArchitecture(_))));
    }

    #[test]
    fn pqr_head_needs_two_anchors() {
        assert!(ArchConfig::desk(Head::Pqr(1)).validate().is_err());
    }

    #[test]
    fn record_round_trip() {
        let a = ArchConfig::desk(Head::Pqr(7));
        assert_eq!(ArchConfig::from_record(&a.to_record()).unwrap(), a);
        let b = ArchConfig::full(Head::Sqr);
        assert_eq!(ArchConfig::from_record(&b.to_record()).unwrap(), b);
    }
}
