//! Trained network container and the `GMODEL 1` file format.
//!
//! The file is a UTF-8 header followed by a binary payload:
//!
//! ```text
//! GMODEL 1
//! META <key> <value>                      (zero or more)
//! ARCH mlp | bilstm
//!   mlp:    LAYER <in>, then LAYER <width> <activation> per layer
//!   bilstm: INPUT <in>, LSTM <hidden> <activation> <dropout> per layer,
//!           DENSE <out> softmax
//! LOSS <loss>
//! STATS none | STATS <width>, then BONES/MEAN/STD lines
//! LAYOUT <block> <offset> <rows> <cols>   (one per parameter block)
//! PARAMS <count>
//! <count little-endian binary64 values>
//! ```
//!
//! Header floats use the shortest round-trip decimal form, so every value
//! reloads bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Activation, BiLstmNet, LstmLayerSpec, LstmStackSpec, Loss, Mlp, MlpSpec};
use crate::descriptor::{BoneLengths, FeatureStats, Standardizer, N_BONES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Architecture {
    Mlp(Mlp),
    BiLstm(BiLstmNet),
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub network: Architecture,
    pub stats: Option<FeatureStats>,
    pub meta: BTreeMap<String, String>,
}

impl NetworkModel {
    pub fn new(network: Architecture, stats: Option<FeatureStats>) -> Self {
        NetworkModel {
            network,
            stats,
            meta: BTreeMap::new(),
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.insert(key.to_string(), value.to_string());
        self
    }

    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta.get(key).map(String::as_str)
    }

    pub fn params(&self) -> &[f64] {
        match &self.network {
            Architecture::Mlp(m) => &m.params,
            Architecture::BiLstm(n) => &n.params,
        }
    }

    pub fn input_width(&self) -> usize {
        match &self.network {
            Architecture::Mlp(m) => m.spec.input_width(),
            Architecture::BiLstm(n) => n.spec.input,
        }
    }

    pub fn as_mlp(&self) -> Result<&Mlp> {
        match &self.network {
            Architecture::Mlp(m) => Ok(m),
            Architecture::BiLstm(_) => Err(Error::ModelMismatch("expected an MLP model, found a biLSTM".into())),
        }
    }

    pub fn as_bilstm(&self) -> Result<&BiLstmNet> {
        match &self.network {
            Architecture::BiLstm(n) => Ok(n),
            Architecture::Mlp(_) => Err(Error::ModelMismatch("expected a biLSTM model, found an MLP".into())),
        }
    }

    pub fn stats(&self) -> Result<&FeatureStats> {
        self.stats
            .as_ref()
            .ok_or_else(|| Error::ModelMismatch("model carries no feature statistics".into()))
    }

    /// Parameter blocks as (name, offset, rows, cols).
    pub fn layout(&self) -> Vec<(String, usize, usize, usize)> {
        match &self.network {
            Architecture::Mlp(m) => m
                .spec
                .layer_offsets()
                .into_iter()
                .enumerate()
                .flat_map(|(l, (w, b, i, o))| [(format!("dense{l}.weight"), w, o, i), (format!("dense{l}.bias"), b, o, 1)])
                .collect(),
            Architecture::BiLstm(n) => n.spec.layout(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut h = String::from("GMODEL 1\n");
        for (k, v) in &self.meta {
            let _ = writeln!(h, "META {k} {v}");
        }
        match &self.network {
            Architecture::Mlp(m) => {
                h.push_str("ARCH mlp\n");
                let _ = writeln!(h, "LAYER {}", m.spec.sizes[0]);
                for (size, act) in m.spec.sizes[1..].iter().zip(&m.spec.activations) {
                    let _ = writeln!(h, "LAYER {size} {act}");
                }
                let _ = writeln!(h, "LOSS {}", m.spec.loss.name());
            }
            Architecture::BiLstm(n) => {
                h.push_str("ARCH bilstm\n");
                let _ = writeln!(h, "INPUT {}", n.spec.input);
                for l in &n.spec.layers {
                    let _ = writeln!(h, "LSTM {} {} {}", l.hidden, l.activation, l.dropout);
                }
                let _ = writeln!(h, "DENSE {} softmax", n.spec.output);
                let _ = writeln!(h, "LOSS {}", Loss::CategoricalCrossEntropy.name());
            }
        }
        match &self.stats {
            None => h.push_str("STATS none\n"),
            Some(s) => {
                let _ = writeln!(h, "STATS {}", s.standardizer.width());
                let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ");
                let _ = writeln!(h, "BONES {}", join(&s.bones.0));
                let _ = writeln!(h, "MEAN {}", join(&s.standardizer.mean));
                let _ = writeln!(h, "STD {}", join(&s.standardizer.std));
            }
        }
        for (name, off, r, c) in self.layout() {
            let _ = writeln!(h, "LAYOUT {name} {off} {r} {c}");
        }
        let params = self.params();
        let _ = writeln!(h, "PARAMS {}", params.len());
        let mut bytes = h.into_bytes();
        bytes.reserve(params.len() * 8);
        for p in params {
            bytes.extend_from_slice(&p.to_le_bytes());
        }
        bytes
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let mut line_no = 0;
        let mut next_line = || -> Result<(usize, String)> {
            let rest = &bytes[pos..];
            let end = rest
                .iter()
                .position(|&b| b == b'\n')
                .ok_or_else(|| Error::parse(line_no + 1, "truncated header"))?;
            let s = std::str::from_utf8(&rest[..end]).map_err(|_| Error::parse(line_no + 1, "header is not UTF-8"))?;
            pos += end + 1;
            line_no += 1;
            Ok((line_no, s.to_string()))
        };

        let (ln, magic) = next_line()?;
        if magic.trim() != "GMODEL 1" {
            return Err(Error::parse(ln, "expected `GMODEL 1`"));
        }
        let mut meta = BTreeMap::new();
        let mut kind = None;
        let mut sizes = Vec::new();
        let mut acts = Vec::new();
        let mut input = None;
        let mut lstm_layers = Vec::new();
        let mut dense = None;
        let mut loss = None;
        let mut stats_width: Option<Option<usize>> = None;
        let (mut bones, mut mean, mut std) = (None, None, None);
        let count: usize;

        let floats = |ln: usize, toks: &[&str]| -> Result<Vec<f64>> {
            toks.iter()
                .map(|t| t.parse::<f64>().map_err(|_| Error::parse(ln, format!("bad number {t:?}"))))
                .collect()
        };
        let int = |ln: usize, t: Option<&&str>| -> Result<usize> {
            t.and_then(|t| t.parse().ok())
                .ok_or_else(|| Error::parse(ln, "expected an integer"))
        };

        loop {
            let (ln, line) = next_line()?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            let Some((&key, args)) = toks.split_first() else {
                continue;
            };
            match key {
                "META" if args.len() == 2 => {
                    meta.insert(args[0].to_string(), args[1].to_string());
                }
                "ARCH" => kind = args.first().map(|s| s.to_string()),
                "LAYER" => {
                    sizes.push(int(ln, args.first())?);
                    if let Some(a) = args.get(1) {
                        acts.push(a.parse::<Activation>().map_err(|e| Error::parse(ln, e.to_string()))?);
                    }
                }
                "INPUT" => input = Some(int(ln, args.first())?),
                "LSTM" if args.len() == 3 => lstm_layers.push(LstmLayerSpec {
                    hidden: int(ln, args.first())?,
                    activation: args[1].parse().map_err(|e: Error| Error::parse(ln, e.to_string()))?,
                    dropout: args[2].parse().map_err(|_| Error::parse(ln, "bad dropout"))?,
                }),
                "DENSE" => dense = Some(int(ln, args.first())?),
                "LOSS" => {
                    loss = Some(
                        args.first()
                            .ok_or_else(|| Error::parse(ln, "missing loss"))?
                            .parse::<Loss>()
                            .map_err(|e| Error::parse(ln, e.to_string()))?,
                    )
                }
                "STATS" => {
                    stats_width = Some(match args.first() {
                        Some(&"none") => None,
                        other => Some(int(ln, other)?),
                    })
                }
                "BONES" => bones = Some(floats(ln, args)?),
                "MEAN" => mean = Some(floats(ln, args)?),
                "STD" => std = Some(floats(ln, args)?),
                "LAYOUT" => {}
                "PARAMS" => {
                    count = int(ln, args.first())?;
                    break;
                }
                _ => return Err(Error::parse(ln, format!("unexpected header line {line:?}"))),
            }
        }

        let payload = &bytes[pos..];
        if payload.len() != count * 8 {
            return Err(Error::parse(
                line_no,
                format!("parameter payload has {} bytes, expected {}", payload.len(), count * 8),
            ));
        }
        let params: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();

        let loss = loss.ok_or_else(|| Error::parse(line_no, "missing LOSS"))?;
        let network = match kind.as_deref() {
            Some("mlp") => Architecture::Mlp(Mlp::new(MlpSpec::new(sizes, acts, loss)?, params)?),
            Some("bilstm") => {
                let spec = LstmStackSpec {
                    input: input.ok_or_else(|| Error::parse(line_no, "missing INPUT"))?,
                    layers: lstm_layers,
                    output: dense.ok_or_else(|| Error::parse(line_no, "missing DENSE"))?,
                };
                Architecture::BiLstm(BiLstmNet::new(spec, params)?)
            }
            other => return Err(Error::parse(line_no, format!("unknown architecture {other:?}"))),
        };

        let stats = match stats_width.ok_or_else(|| Error::parse(line_no, "missing STATS"))? {
            None => None,
            Some(width) => {
                let bones = bones.ok_or_else(|| Error::parse(line_no, "missing BONES"))?;
                let bones: [f64; N_BONES] = bones
                    .try_into()
                    .map_err(|_| Error::parse(line_no, "BONES needs 12 values"))?;
                let mean = mean.ok_or_else(|| Error::parse(line_no, "missing MEAN"))?;
                let std = std.ok_or_else(|| Error::parse(line_no, "missing STD"))?;
                if mean.len() != width || std.len() != width {
                    return Err(Error::parse(line_no, "MEAN/STD width mismatch"));
                }
                Some(FeatureStats {
                    bones: BoneLengths::new(bones)?,
                    standardizer: Standardizer { mean, std },
                })
            }
        };
        Ok(NetworkModel { network, stats, meta })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|e| e.with_file(path))
    }
}
