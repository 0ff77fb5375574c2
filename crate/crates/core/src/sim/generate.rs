use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::replication_seed;
use super::scenario::{Scenario, ScenarioConfig};
use crate::data::Dataset;
use crate::error::Result;
use crate::propensity::sigmoid;

/// Draws replication `rep_index` of the scenario. The stream depends only on
/// `(cfg.seed, rep_index)`.
pub fn generate(cfg: &ScenarioConfig, rep_index: usize) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(cfg.seed, rep_index));
    let (n, p) = (cfg.n, cfg.p);
    let mut rows = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    let mut d = Vec::with_capacity(n);
    for _ in 0..n {
        let start = rows.len();
        rows.extend((0..p).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let xi = &rows[start..];
        let dot = |coef: &[f64]| xi.iter().zip(coef).map(|(x, c)| x * c).sum::<f64>();
        let treated = rng.random::<f64>() < sigmoid(dot(&cfg.alpha));
        let eps = cfg.noise_sd * rng.sample::<f64, _>(StandardNormal);
        let yi = match cfg.scenario {
            Scenario::S1Heterogeneous => {
                if treated {
                    dot(&cfg.beta_t) + eps
                } else {
                    dot(&cfg.beta_c) + eps
                }
            }
            Scenario::S2Linear => dot(&cfg.beta) + if treated { cfg.mu } else { 0.0 } + eps,
        };
        y.push(yi);
        d.push(treated);
    }
    Dataset::with_default_names(y, d, DMatrix::from_row_slice(n, p, &rows))
}
