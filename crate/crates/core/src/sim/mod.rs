//! Monte-Carlo replication of the simulation study: data-generating
//! processes, the outcome-adaptive lasso comparator, paired multi-method
//! experiments and their summary tables.

pub mod experiment;
pub mod generate;
pub mod oal;
pub mod scenario;
pub mod summary;

pub use experiment::{run_experiment, ExperimentOptions, Method, MethodOutcome, ReplicationReport};
pub use generate::generate;
pub use oal::{oal_fit, oal_fit_at, OalConfig, OalResult};
pub use scenario::{Scenario, ScenarioConfig, DEFAULT_SEED, PRESET_NAMES};
pub use summary::{summarize, AteRow, FrequencyRow, RuntimeRow, SummaryTables};

/// SplitMix64 finalizer, used to derive independent seeds.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `rep` under master seed `seed`.
pub fn replication_seed(seed: u64, rep: usize) -> u64 {
    splitmix64(splitmix64(seed) ^ (rep as u64).wrapping_mul(0xA24B_AED4_963E_E407))
}
