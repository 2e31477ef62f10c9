//! Vanilla block-wise pipeline: teacher features, supernet training, rating.

use crate::distill::{
    extract_features, init_supernet, train_all_blocks, BlockLearningRates, BlockTrainReport,
    FeatureCache, SupernetBlock,
};
use crate::error::Result;
use crate::net::ChainNet;
use crate::numkernel::TrainHyper;
use crate::rate::{rate_block, LocalScoreList, Metric};
use crate::space::SearchSpace;
use crate::task::Dataset;

#[derive(Clone, Debug, PartialEq)]
pub struct DnaSettings {
    pub supernet: TrainHyper,
    pub rates: BlockLearningRates,
    pub metric: Metric,
    pub workers: usize,
}

pub struct DnaRun {
    pub cache: FeatureCache,
    pub blocks: Vec<SupernetBlock>,
    pub reports: Vec<BlockTrainReport>,
    pub lists: Vec<LocalScoreList>,
}

/// Rates every block on the validation rows of its cached features.
pub fn rate_all(
    blocks: &[SupernetBlock],
    cache: &FeatureCache,
    metric: Metric,
    seed: u64,
) -> Result<Vec<LocalScoreList>> {
    blocks
        .iter()
        .map(|b| {
            let (x, y) = cache.val_rows(b.index)?;
            rate_block(b, &x, &y, metric, seed).map(|(list, _)| list)
        })
        .collect()
}

/// Extract features from `teacher`, train a fresh supernet, rate it.
pub fn run_dna(
    space: &SearchSpace,
    data: &Dataset,
    teacher: &ChainNet,
    settings: &DnaSettings,
) -> Result<DnaRun> {
    let cache = extract_features(teacher, data)?;
    let blocks = init_supernet(space, settings.supernet.seed)?;
    let (blocks, reports) = train_all_blocks(
        blocks,
        &cache,
        &settings.supernet,
        &settings.rates,
        settings.workers,
    )?;
    let lists = rate_all(&blocks, &cache, settings.metric, settings.supernet.seed)?;
    Ok(DnaRun {
        cache,
        blocks,
        reports,
        lists,
    })
}
