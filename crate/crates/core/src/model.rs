//! Model variants and the typed view of a checkpoint.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::net::{Checkpoint, ParamBlock};
use crate::net::{Layout, MlpConfig, NetError};
use crate::physics::Normalization;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown variant `{0}` (expected bpinn-hetero, bpinn-homo, dpinn-hetero, dpinn-homo or pinn)")]
    Variant(String),
    #[error("checkpoint metadata `{key}`: {msg}")]
    Meta { key: String, msg: String },
    #[error("checkpoint parameter block does not match variant {0}")]
    Block(Variant),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    BpinnHetero,
    BpinnHomo,
    DpinnHetero,
    DpinnHomo,
    Pinn,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::BpinnHetero,
        Variant::BpinnHomo,
        Variant::DpinnHetero,
        Variant::DpinnHomo,
        Variant::Pinn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::BpinnHetero => "bpinn_hetero",
            Variant::BpinnHomo => "bpinn_homo",
            Variant::DpinnHetero => "dpinn_hetero",
            Variant::DpinnHomo => "dpinn_homo",
            Variant::Pinn => "pinn",
        }
    }

    pub fn is_bayesian(self) -> bool {
        matches!(self, Variant::BpinnHetero | Variant::BpinnHomo)
    }

    pub fn is_dropout(self) -> bool {
        matches!(self, Variant::DpinnHetero | Variant::DpinnHomo)
    }

    pub fn is_hetero(self) -> bool {
        matches!(self, Variant::BpinnHetero | Variant::DpinnHetero)
    }

    pub fn is_stochastic(self) -> bool {
        self != Variant::Pinn
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == key)
            .ok_or_else(|| ModelError::Variant(s.to_string()))
    }
}

/// Fixed standard deviations (normalized temperature units) of the initial,
/// boundary and residual likelihoods.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SigmaTriplet {
    pub sigma_0: f64,
    pub sigma_bc: f64,
    pub sigma_f: f64,
}

impl Default for SigmaTriplet {
    fn default() -> Self {
        Self { sigma_0: 0.01, sigma_bc: 0.01, sigma_f: 0.01 }
    }
}

impl SigmaTriplet {
    pub fn is_valid(&self) -> bool {
        [self.sigma_0, self.sigma_bc, self.sigma_f].iter().all(|s| *s > 0.0 && s.is_finite())
    }
}

/// Trained network with everything needed to predict in physical units.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub variant: Variant,
    pub config: MlpConfig,
    pub params: ParamBlock,
    pub norm: Normalization,
    pub sigma: SigmaTriplet,
    /// Extra annotations carried through the checkpoint.
    pub extra: BTreeMap<String, String>,
}

impl TrainedModel {
    pub fn layout(&self) -> Result<Layout, ModelError> {
        Ok(self.config.layout()?)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut meta = self.extra.clone();
        meta.insert("variant".into(), self.variant.name().into());
        let n = &self.norm;
        for (k, v) in [
            ("norm.x_scale", n.x_scale),
            ("norm.t_offset", n.t_offset),
            ("norm.t_scale", n.t_scale),
            ("norm.temp_shift", n.temp_shift),
            ("norm.temp_scale", n.temp_scale),
            ("sigma.sigma_0", self.sigma.sigma_0),
            ("sigma.sigma_bc", self.sigma.sigma_bc),
            ("sigma.sigma_f", self.sigma.sigma_f),
        ] {
            meta.insert(k.into(), format!("{v:?}"));
        }
        Checkpoint { config: self.config.clone(), params: self.params.clone(), meta }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self, ModelError> {
        let mut extra = ck.meta.clone();
        let mut take = |key: &str| {
            extra.remove(key).ok_or_else(|| ModelError::Meta { key: key.into(), msg: "missing".into() })
        };
        let variant: Variant = take("variant")?.parse()?;
        let mut num = |key: &str| -> Result<f64, ModelError> {
            let s = take(key)?;
            s.parse().map_err(|_| ModelError::Meta { key: key.into(), msg: format!("not a number: `{s}`") })
        };
        let norm = Normalization {
            x_scale: num("norm.x_scale")?,
            t_offset: num("norm.t_offset")?,
            t_scale: num("norm.t_scale")?,
            temp_shift: num("norm.temp_shift")?,
            temp_scale: num("norm.temp_scale")?,
        };
        let sigma = SigmaTriplet {
            sigma_0: num("sigma.sigma_0")?,
            sigma_bc: num("sigma.sigma_bc")?,
            sigma_f: num("sigma.sigma_f")?,
        };
        let block_ok = match &ck.params {
            ParamBlock::Variational { .. } => variant.is_bayesian(),
            ParamBlock::Deterministic { .. } => !variant.is_bayesian(),
        };
        if !block_ok {
            return Err(ModelError::Block(variant));
        }
        ck.config.validate()?;
        Ok(Self { variant, config: ck.config.clone(), params: ck.params.clone(), norm, sigma, extra })
    }
}
