//! Plain-text parameter checkpoints.
//!
//! ```text
//! bpinn-checkpoint 1
//! kind variational
//! layers 2 16 16 2
//! variance_head true
//! dropout 0
//! meta variant bpinn_hetero
//! vector mu 322
//! 0.0123
//! ...
//! vector rho 322
//! ...
//! end
//! ```
//!
//! Values are written in Rust's shortest round-trip decimal form, so a
//! write/read cycle is exact. `kind` is `deterministic` (one `theta` vector)
//! or `variational` (`mu` and `rho`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use super::MlpConfig;

const MAGIC: &str = "bpinn-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ParamBlock {
    Deterministic { theta: Vec<f64> },
    Variational { mu: Vec<f64>, rho: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: MlpConfig,
    pub params: ParamBlock,
    /// Free-form key/value annotations (variant, normalization, noise levels).
    pub meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let kind = match self.params {
            ParamBlock::Deterministic { .. } => "deterministic",
            ParamBlock::Variational { .. } => "variational",
        };
        let _ = writeln!(s, "{MAGIC} {VERSION}");
        let _ = writeln!(s, "kind {kind}");
        let layers: Vec<String> = self.config.layer_sizes.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "layers {}", layers.join(" "));
        let _ = writeln!(s, "variance_head {}", self.config.variance_head);
        let _ = writeln!(s, "dropout {}", self.config.dropout_rate);
        for (k, v) in &self.meta {
            let _ = writeln!(s, "meta {k} {v}");
        }
        let mut vector = |name: &str, v: &[f64]| {
            let _ = writeln!(s, "vector {name} {}", v.len());
            for x in v {
                let _ = writeln!(s, "{x:?}");
            }
        };
        match &self.params {
            ParamBlock::Deterministic { theta } => vector("theta", theta),
            ParamBlock::Variational { mu, rho } => {
                vector("mu", mu);
                vector("rho", rho);
            }
        }
        s.push_str("end\n");
        s
    }

    pub fn from_text(text: &str) -> Result<Self, CheckpointError> {
        let err = |line: usize, msg: String| CheckpointError::Parse { line: line + 1, msg };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (n, head) = lines.next().ok_or_else(|| err(0, "empty checkpoint".into()))?;
        let version = head
            .strip_prefix(MAGIC)
            .map(str::trim)
            .ok_or_else(|| err(n, "missing checkpoint header".into()))?;
        if version != VERSION.to_string() {
            return Err(err(n, format!("unsupported checkpoint version {version}")));
        }

        let mut kind = None;
        let mut layers = None;
        let mut variance_head = None;
        let mut dropout = None;
        let mut meta = BTreeMap::new();
        let mut vectors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        let mut ended = false;
        while let Some((n, line)) = lines.next() {
            let (key, rest) = line.split_once(' ').unwrap_or((line, ""));
            match key {
                "kind" => kind = Some(rest.trim().to_string()),
                "layers" => {
                    let sizes: Result<Vec<usize>, _> = rest.split_whitespace().map(str::parse).collect();
                    layers = Some(sizes.map_err(|e| err(n, format!("bad layer size: {e}")))?);
                }
                "variance_head" => {
                    variance_head = Some(rest.trim().parse::<bool>().map_err(|e| err(n, e.to_string()))?)
                }
                "dropout" => dropout = Some(rest.trim().parse::<f64>().map_err(|e| err(n, e.to_string()))?),
                "meta" => {
                    let (k, v) = rest.split_once(' ').unwrap_or((rest, ""));
                    meta.insert(k.to_string(), v.to_string());
                }
                "vector" => {
                    let mut parts = rest.split_whitespace();
                    let name = parts.next().ok_or_else(|| err(n, "vector without name".into()))?;
                    let len: usize = parts
                        .next()
                        .and_then(|l| l.parse().ok())
                        .ok_or_else(|| err(n, "vector without length".into()))?;
                    let mut v = Vec::with_capacity(len);
                    for _ in 0..len {
                        let (m, l) = lines.next().ok_or_else(|| err(n, format!("vector {name} truncated")))?;
                        v.push(l.trim().parse::<f64>().map_err(|e| err(m, e.to_string()))?);
                    }
                    vectors.insert(name.to_string(), v);
                }
                "end" => {
                    ended = true;
                    break;
                }
                other => return Err(err(n, format!("unknown record '{other}'"))),
            }
        }
        if !ended {
            return Err(err(text.lines().count(), "missing end marker".into()));
        }
        let config = MlpConfig {
            layer_sizes: layers.ok_or_else(|| err(0, "missing layers".into()))?,
            variance_head: variance_head.ok_or_else(|| err(0, "missing variance_head".into()))?,
            dropout_rate: dropout.ok_or_else(|| err(0, "missing dropout".into()))?,
        };
        let expected = config
            .layout()
            .map_err(|e| err(0, e.to_string()))?
            .len();
        let mut take = |name: &str| -> Result<Vec<f64>, CheckpointError> {
            let v = vectors.remove(name).ok_or_else(|| err(0, format!("missing vector {name}")))?;
            if v.len() != expected {
                return Err(err(0, format!("vector {name} has {} entries, layout needs {expected}", v.len())));
            }
            Ok(v)
        };
        let params = match kind.as_deref() {
            Some("deterministic") => ParamBlock::Deterministic { theta: take("theta")? },
            Some("variational") => ParamBlock::Variational {
                mu: take("mu")?,
                rho: take("rho")?,
            },
            other => return Err(err(0, format!("unknown checkpoint kind {other:?}"))),
        };
        Ok(Self { config, params, meta })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        std::fs::write(path, self.to_text()).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = std::fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_text(&text)
    }
}
