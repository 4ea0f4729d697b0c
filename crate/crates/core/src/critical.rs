//! Monte-Carlo critical values of the null statistic `T_n*`.
//!
//! Replicate `r` draws its noise from a ChaCha8 stream seeded with
//! [`replicate_seed`]`(base_seed, r)`, so the sample does not depend on how
//! replicates are scheduled across threads.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::kernels::ShapeClass;
use crate::multiscale::{CombinedScan, GridScheme, MomentPrefixSums};

/// Identifies the seed derivation and normal generator behind a table.
pub const GENERATOR_ID: &str = "splitmix64-chacha8-ziggurat-v1";

pub const TABLE_SCHEMA_VERSION: u32 = 1;

pub const DEFAULT_REPS: usize = 9999;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `r`: `splitmix64(splitmix64(base) ^ r)`.
pub fn replicate_seed(base_seed: u64, r: u64) -> u64 {
    splitmix64(splitmix64(base_seed) ^ r)
}

/// Fills `out` with standard normals from the stream of replicate `r`.
pub fn fill_standard_normal(base_seed: u64, r: u64, out: &mut [f64]) {
    let mut rng = ChaCha8Rng::seed_from_u64(replicate_seed(base_seed, r));
    for v in out.iter_mut() {
        *v = StandardNormal.sample(&mut rng);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub n: usize,
    pub shape: ShapeClass,
    pub reps: usize,
    pub base_seed: u64,
    pub alphas: Vec<f64>,
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 100 {
            return Err(Error::InvalidConfig(format!(
                "reps must be >= 100, got {}",
                self.reps
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!(
                "n must be >= 2, got {}",
                self.n
            )));
        }
        if self.alphas.is_empty() {
            return Err(Error::InvalidConfig("alphas must be nonempty".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return Err(Error::InvalidConfig(format!("alpha {a} not in (0, 1)")));
        }
        Ok(())
    }
}

/// `T_n*` for replicates `0..reps`, sorted ascending. No lower bound on
/// `reps` is enforced here.
pub fn simulate_replicates(
    n: usize,
    shape: ShapeClass,
    reps: usize,
    base_seed: u64,
) -> Result<Vec<f64>> {
    let grid = GridScheme::standard(shape, n);
    let scan = CombinedScan::new(shape, &grid)?;
    let mut stats = (0..reps as u64)
        .into_par_iter()
        .map_init(
            || (vec![0.0; n], MomentPrefixSums::default()),
            |(noise, ps), r| {
                fill_standard_normal(base_seed, r, noise);
                ps.rebuild(noise);
                scan.statistic(ps, 1.0)
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    stats.sort_by(f64::total_cmp);
    Ok(stats)
}

/// Sorted null sample of `T_n*` (σ = 1).
pub fn simulate_null_statistics(config: &SimulationConfig) -> Result<Vec<f64>> {
    config.validate()?;
    simulate_replicates(config.n, config.shape, config.reps, config.base_seed)
}

/// The `⌈(1-α) reps⌉`-th order statistic of a sorted sample.
pub fn quantile_kappa(samples: &[f64], alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha must be in (0, 1), got {alpha}"
        )));
    }
    if samples.is_empty() {
        return Err(Error::Domain("empty sample".into()));
    }
    let reps = samples.len();
    // Guard against (1 - α) reps landing a hair above an integer.
    let pos = ((1.0 - alpha) * reps as f64 - 1e-9).ceil().max(1.0) as usize;
    Ok(samples[pos.min(reps) - 1])
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct KappaEntry {
    pub alpha: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct CriticalValueTable {
    pub schema_version: u32,
    pub shape: ShapeClass,
    pub n: usize,
    pub reps: usize,
    pub base_seed: u64,
    pub generator_id: String,
    pub entries: Vec<KappaEntry>,
}

impl CriticalValueTable {
    /// Critical value for `alpha`, if tabulated.
    pub fn kappa(&self, alpha: f64) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| (e.alpha - alpha).abs() < 1e-12)
            .map(|e| e.kappa)
    }

    /// JSON text with every float at 17 significant digits.
    pub fn to_json(&self) -> String {
        let entries: Vec<String> = self
            .entries
            .iter()
            .map(|e| {
                format!(
                    "    {{\"alpha\": {}, \"kappa\": {}}}",
                    fmt17(e.alpha),
                    fmt17(e.kappa)
                )
            })
            .collect();
        format!(
            "{{\n  \"schemaVersion\": {},\n  \"shape\": \"{}\",\n  \"n\": {},\n  \"reps\": {},\n  \"baseSeed\": {},\n  \"generatorId\": {},\n  \"entries\": [\n{}\n  ]\n}}\n",
            self.schema_version,
            self.shape,
            self.n,
            self.reps,
            self.base_seed,
            serde_json::to_string(&self.generator_id).expect("string serializes"),
            entries.join(",\n")
        )
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let table: CriticalValueTable =
            serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        if table.schema_version != TABLE_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported schemaVersion {}",
                table.schema_version
            )));
        }
        Ok(table)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// `{:.16e}`: 17 significant digits, round-trips every finite f64.
fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Simulates and extracts `κ_{α,n}` for every configured level.
pub fn build_table(config: &SimulationConfig) -> Result<CriticalValueTable> {
    let samples = simulate_null_statistics(config)?;
    let entries = config
        .alphas
        .iter()
        .map(|&alpha| {
            Ok(KappaEntry {
                alpha,
                kappa: quantile_kappa(&samples, alpha)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CriticalValueTable {
        schema_version: TABLE_SCHEMA_VERSION,
        shape: config.shape,
        n: config.n,
        reps: config.reps,
        base_seed: config.base_seed,
        generator_id: GENERATOR_ID.to_string(),
        entries,
    })
}

/// [`build_table`] followed by [`CriticalValueTable::write`].
pub fn build_table_to(config: &SimulationConfig, path: &Path) -> Result<CriticalValueTable> {
    let table = build_table(config)?;
    table.write(path)?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(reps: usize, seed: u64) -> SimulationConfig {
        SimulationConfig {
            n: 30,
            shape: ShapeClass::Isotonic,
            reps,
            base_seed: seed,
            alphas: vec![0.5, 0.1, 0.05],
        }
    }

    #[test]
    fn quantile_convention() {
        let s = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_kappa(&s, 0.5).unwrap(), 2.0);
        assert_eq!(quantile_kappa(&s, 1e-9).unwrap(), 4.0);
        assert_eq!(quantile_kappa(&s, 0.75).unwrap(), 1.0);
        assert_eq!(quantile_kappa(&s, 0.999).unwrap(), 1.0);
        assert!(quantile_kappa(&s, 0.0).is_err());
        assert!(quantile_kappa(&s, 1.0).is_err());
        assert!(quantile_kappa(&[], 0.5).is_err());
        // 9999 * 0.95 = 9499.05 -> 9500th
        let big: Vec<f64> = (1..=9999).map(|v| v as f64).collect();
        assert_eq!(quantile_kappa(&big, 0.05).unwrap(), 9500.0);
        assert_eq!(quantile_kappa(&big, 0.5).unwrap(), 5000.0);
        // 100 * 0.9 = 90 exactly
        let hundred: Vec<f64> = (1..=100).map(|v| v as f64).collect();
        assert_eq!(quantile_kappa(&hundred, 0.1).unwrap(), 90.0);
    }

    #[test]
    fn config_validation() {
        assert!(config(99, 0).validate().is_err());
        assert!(config(100, 0).validate().is_ok());
        let mut c = config(100, 0);
        c.alphas = vec![];
        assert!(c.validate().is_err());
        c.alphas = vec![0.0];
        assert!(c.validate().is_err());
        c.alphas = vec![1.2];
        assert!(c.validate().is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let a = simulate_replicates(30, ShapeClass::Convex, 2, 42).unwrap();
        let b = simulate_replicates(30, ShapeClass::Convex, 2, 42).unwrap();
        assert_eq!(a, b);
        let c = simulate_replicates(30, ShapeClass::Convex, 2, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn replicate_streams_are_independent_of_order() {
        let mut buf = vec![0.0; 20];
        fill_standard_normal(5, 3, &mut buf);
        let third = buf.clone();
        fill_standard_normal(5, 4, &mut buf);
        assert_ne!(third, buf);
        fill_standard_normal(5, 3, &mut buf);
        assert_eq!(third, buf);
        assert_ne!(replicate_seed(5, 3), replicate_seed(5, 4));
        assert_ne!(replicate_seed(5, 3), replicate_seed(6, 3));
    }

    #[test]
    fn table_roundtrip_and_monotone() {
        let table = build_table(&config(200, 9)).unwrap();
        let k: Vec<f64> = table.entries.iter().map(|e| e.kappa).collect();
        assert!(k[0] < k[1] && k[1] < k[2]);
        let back = CriticalValueTable::from_json(&table.to_json()).unwrap();
        assert_eq!(back, table);
        assert_eq!(back.kappa(0.1), Some(k[1]));
        assert_eq!(back.kappa(0.2), None);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.json");
        build_table_to(&config(200, 9), &path).unwrap();
        assert_eq!(CriticalValueTable::read(&path).unwrap(), table);
        assert!(CriticalValueTable::read(&dir.path().join("missing.json")).is_err());
    }

    #[test]
    fn table_rejects_bad_schema() {
        let table = build_table(&config(100, 1)).unwrap();
        let text = table
            .to_json()
            .replace("\"schemaVersion\": 1", "\"schemaVersion\": 7");
        assert!(CriticalValueTable::from_json(&text).is_err());
        assert!(CriticalValueTable::from_json("{").is_err());
    }
}
