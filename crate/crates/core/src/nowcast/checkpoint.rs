//! Text checkpoints for trained models.
//!
//! A checkpoint is a `key = value` file. Floats are written with Rust's
//! shortest round-trip formatting, so loading restores every bit.
//!
//! ```text
//! format = tnn-checkpoint
//! version = 1
//! model = global | sigmanet
//! k = 100
//! window = 1800.0
//! points_per_segment = 32
//! fetch = 8
//! sigma = <xy> <z> <t>              (global)
//! hidden = 32                       (sigmanet)
//! scale = <xy> <z> <t>
//! norm_lo = <x> <y> <z>
//! norm_hi = <x> <y> <z>
//! params = <p0> <p1> ...
//! ```

use std::path::Path;

use crate::data::config::KeyValues;
use crate::error::{Error, Result};
use crate::metric::ScaleParams;
use crate::nowcast::forecast::GkaModel;
use crate::nowcast::sigmanet::{InputNorm, SigmaNet};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: GkaModel,
    pub k: usize,
    pub window: f64,
    pub points_per_segment: usize,
    pub fetch: usize,
}

fn floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn parse_floats(kv: &KeyValues, key: &str) -> Result<Vec<f64>> {
    let s = kv.get_str(key).ok_or_else(|| bad(format!("missing `{key}`")))?;
    s.split_whitespace()
        .map(|t| t.parse::<f64>().map_err(|_| bad(format!("bad number `{t}` in `{key}`"))))
        .collect()
}

fn parse_triple(kv: &KeyValues, key: &str) -> Result<[f64; 3]> {
    let v = parse_floats(kv, key)?;
    v.try_into().map_err(|_| bad(format!("`{key}` needs 3 values")))
}

fn required<T: std::str::FromStr>(kv: &KeyValues, key: &str) -> Result<T> {
    kv.get(key)
        .map_err(|e| bad(e.to_string()))?
        .ok_or_else(|| bad(format!("missing `{key}`")))
}

impl Checkpoint {
    pub fn to_text(&self) -> String {
        let mut kv = KeyValues::default();
        kv.set("format", "tnn-checkpoint");
        kv.set("version", CHECKPOINT_VERSION);
        kv.set("k", self.k);
        kv.set("window", format!("{:?}", self.window));
        kv.set("points_per_segment", self.points_per_segment);
        kv.set("fetch", self.fetch);
        match &self.model {
            GkaModel::Global(s) => {
                kv.set("model", "global");
                kv.set("sigma", floats(&s.as_array()));
            }
            GkaModel::Net(n) => {
                kv.set("model", "sigmanet");
                kv.set("hidden", n.hidden);
                kv.set("scale", floats(&n.scale));
                kv.set("norm_lo", floats(&n.norm.lo));
                kv.set("norm_hi", floats(&n.norm.hi));
                kv.set("params", floats(&n.params));
            }
        }
        kv.to_string()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        if kv.get_str("format") != Some("tnn-checkpoint") {
            return Err(bad("not a checkpoint file"));
        }
        let version: u32 = required(&kv, "version")?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let model = match kv.get_str("model") {
            Some("global") => GkaModel::Global(ScaleParams::from_array(parse_triple(&kv, "sigma")?)?),
            Some("sigmanet") => GkaModel::Net(SigmaNet::from_parts(
                required(&kv, "hidden")?,
                parse_floats(&kv, "params")?,
                parse_triple(&kv, "scale")?,
                InputNorm {
                    lo: parse_triple(&kv, "norm_lo")?,
                    hi: parse_triple(&kv, "norm_hi")?,
                },
            )?),
            other => return Err(bad(format!("unknown model {other:?}"))),
        };
        Ok(Self {
            model,
            k: required(&kv, "k")?,
            window: required(&kv, "window")?,
            points_per_segment: required(&kv, "points_per_segment")?,
            fetch: required(&kv, "fetch")?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}
