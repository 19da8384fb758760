//! The `--config` file: a `LinkConfig` object, optionally carrying one
//! extra section per subcommand.

use anyhow::{Context, Result};
use serde_json::{Map, Value};
use sipm_link::experiments::{BerSweep, GbpSpec, LinkConfig, PenaltySpec, SimMode, SweepSpec};
use sipm_link::RngSeed;

const SECTIONS: [&str; 4] = ["theory", "sweep", "ber", "gbp"];

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub link: LinkConfig,
    pub theory: PenaltySpec,
    /// Absent unless the file has a `sweep` section.
    pub sweep: Option<SweepSpec>,
    pub ber: BerSweep,
    pub gbp: GbpSpec,
}

fn section<T: serde::de::DeserializeOwned>(map: &mut Map<String, Value>, key: &str) -> Result<Option<T>> {
    map.remove(key).map(|v| serde_json::from_value(v).with_context(|| format!("invalid \"{key}\" section"))).transpose()
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).context("config is not valid JSON")?;
        let Value::Object(mut map) = value else {
            anyhow::bail!("config must be a JSON object");
        };
        let theory = section(&mut map, SECTIONS[0])?.unwrap_or_default();
        let sweep = section(&mut map, SECTIONS[1])?;
        let ber = section(&mut map, SECTIONS[2])?.unwrap_or_default();
        let gbp = section(&mut map, SECTIONS[3])?.unwrap_or_default();
        let link = LinkConfig::from_json(&Value::Object(map).to_string()).context("invalid link configuration")?;
        Ok(Self { link, theory, sweep, ber, gbp })
    }

    pub fn load(path: Option<&std::path::Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("in {}", p.display()))
            }
        }
    }

    /// Applies `--seed` and `--mode`, then re-validates.
    pub fn override_with(mut self, seed: Option<u64>, mode: Option<SimMode>) -> Result<Self> {
        if let Some(s) = seed {
            self.link.master_seed = RngSeed(s);
        }
        if let Some(m) = mode {
            self.link.mode = m;
        }
        self.link.validate()?;
        Ok(self)
    }

    /// Everything, defaults filled in, as one JSON document that `parse`
    /// accepts.
    pub fn to_json(&self) -> Result<String> {
        let mut v = serde_json::to_value(&self.link)?;
        let map = v.as_object_mut().expect("LinkConfig serializes to an object");
        map.insert("theory".into(), serde_json::to_value(&self.theory)?);
        let sweep = self.sweep.clone().unwrap_or_default();
        map.insert("sweep".into(), serde_json::to_value(sweep)?);
        map.insert("ber".into(), serde_json::to_value(&self.ber)?);
        map.insert("gbp".into(), serde_json::to_value(&self.gbp)?);
        Ok(serde_json::to_string_pretty(&v)?)
    }
}
