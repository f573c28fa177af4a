use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::qa::QAExample;
use crate::error::{Error, Result};

/// How a stratum's fractional development count is rounded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRounding {
    #[default]
    Floor,
    Ceil,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub dev_frac: f64,
    pub seed: String,
    pub rounding: SplitRounding,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            dev_frac: 0.30,
            seed: "0".into(),
            rounding: SplitRounding::Floor,
        }
    }
}

impl SplitConfig {
    /// Development count for a stratum of `n` ids.
    pub fn dev_count(&self, n: usize) -> usize {
        // Snap to 1e-9 so that e.g. 0.3 * 200 counts as exactly 60.
        let x = (self.dev_frac * n as f64 * 1e9).round() / 1e9;
        let k = match self.rounding {
            SplitRounding::Floor => x.floor(),
            SplitRounding::Ceil => x.ceil(),
        };
        (k.max(0.0) as usize).min(n)
    }
}

/// An id with the stratum it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitItem {
    pub id: String,
    pub stratum: String,
}

impl From<&QAExample> for SplitItem {
    fn from(e: &QAExample) -> Self {
        Self {
            id: e.id.clone(),
            stratum: format!("{}/{}", e.dataset.as_str(), e.tier.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCount {
    pub stratum: String,
    pub total: usize,
    pub dev: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DevTestSplit {
    pub dev: Vec<String>,
    pub test: Vec<String>,
    pub strata: Vec<StratumCount>,
    pub config: SplitConfig,
}

pub fn hash_key(seed: &str, id: &str) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.as_bytes());
    h.update(id.as_bytes());
    h.finalize().into()
}

/// Within each stratum, ids are ordered by SHA-256(seed ‖ id) and the first
/// `dev_count(n)` go to development. Output does not depend on input order.
pub fn split_dev_test(items: &[SplitItem], cfg: &SplitConfig) -> Result<DevTestSplit> {
    if !(0.0..=1.0).contains(&cfg.dev_frac) {
        return Err(Error::Config(format!("dev_frac {} outside [0, 1]", cfg.dev_frac)));
    }
    let mut seen = HashSet::with_capacity(items.len());
    let mut strata: BTreeMap<&str, Vec<([u8; 32], &str)>> = BTreeMap::new();
    for it in items {
        if !seen.insert(it.id.as_str()) {
            return Err(Error::DataIntegrity(format!("duplicate id {}", it.id)));
        }
        strata
            .entry(&it.stratum)
            .or_default()
            .push((hash_key(&cfg.seed, &it.id), &it.id));
    }
    let (mut dev, mut test, mut counts) = (Vec::new(), Vec::new(), Vec::new());
    for (name, mut ids) in strata {
        ids.sort_unstable();
        let k = cfg.dev_count(ids.len());
        dev.extend(ids[..k].iter().map(|(_, id)| id.to_string()));
        test.extend(ids[k..].iter().map(|(_, id)| id.to_string()));
        counts.push(StratumCount {
            stratum: name.to_string(),
            total: ids.len(),
            dev: k,
        });
    }
    Ok(DevTestSplit {
        dev,
        test,
        strata: counts,
        config: cfg.clone(),
    })
}
