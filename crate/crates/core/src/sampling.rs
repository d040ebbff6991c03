//! Forward sampling from a network, for synthetic datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, DatasetRow, RowBits};
use crate::error::Result;
use crate::events::Mode;
use crate::learning::NetworkModel;

/// Draw `n` rows by ancestral sampling. Rows are labeled `row-<i>` in `city`.
pub fn sample_dataset(model: &NetworkModel, n: usize, seed: u64, city: &str) -> Result<Dataset> {
    let order = model.skeleton.topological_order()?;
    let cpds: Vec<_> = order.iter().map(|&v| model.cpd(v).expect("node has a CPD")).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = (0..n)
        .map(|i| {
            let mut values = RowBits::default();
            for cpd in &cpds {
                let p = cpd.row(cpd.configuration_of(values)).p_yes;
                values.set(cpd.node, rng.gen::<f64>() < p);
            }
            DatasetRow::new(values, format!("row-{i}"), city)
        })
        .collect();
    Ok(Dataset::new(rows, Mode::Binary))
}
