//! Relevance scoring, knowledge-base importance and bit allocation.
//!
//! Each object's score picks a target PSNR; the knowledge base turns that into
//! a bit length, and bit lengths become importances. An object's share of the
//! source pool mixes its area share and importance with weight α. The
//! background is treated as a score-0 pseudo-object.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::MIN_BUDGET_BITS;
use crate::kb::{KbError, KnowledgeBase, FALLBACK};
use crate::matcher::MatchTriple;
use crate::phy::{CodeShape, PhyError};
use crate::scene::{BBox, ChannelState};

pub const MAX_SCORE: u8 = 8;
pub const DEFAULT_ALPHA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum AllocError {
    #[error("score {0} outside 0..=8")]
    ScoreRange(u8),
    #[error("{scores} scores for {objects} objects")]
    ScoreCount { scores: usize, objects: usize },
    #[error("alpha {0} outside [0, 1]")]
    Alpha(f64),
    #[error("similarity table must be non-decreasing")]
    Table,
    #[error("budget infeasible: {regions} regions need {needed} source bits, pool holds {available}")]
    InfeasibleBudget { regions: usize, needed: u64, available: u64 },
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Kb(#[from] KbError),
}

/// Correlation score 2c + (g − 2) + (o − 2), always within 0..=8.
pub fn relevance(t: &MatchTriple) -> u8 {
    let v = 2 * t.category_match.value() + (t.global_match.value() - 2) + (t.object_match.value() - 2);
    v as u8
}

/// Target PSNR (dB) per score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SimilarityTable(pub [f64; 9]);

impl Default for SimilarityTable {
    /// Linear from 24 dB at score 0 to 38 dB at score 8.
    fn default() -> Self {
        Self(std::array::from_fn(|s| 24.0 + 1.75 * s as f64))
    }
}

impl SimilarityTable {
    pub fn validate(&self) -> Result<(), AllocError> {
        if self.0.windows(2).all(|w| w[0] <= w[1]) {
            Ok(())
        } else {
            Err(AllocError::Table)
        }
    }

    pub fn expected_similarity(&self, score: u8) -> f64 {
        self.0[usize::from(score.min(MAX_SCORE))]
    }
}

/// Ratios of each bit length to their sum; uniform when all are zero.
pub fn importance(bits: &[u64]) -> Vec<f64> {
    let total: u64 = bits.iter().sum();
    if total == 0 {
        return vec![1.0 / bits.len() as f64; bits.len()];
    }
    bits.iter().map(|&b| b as f64 / total as f64).collect()
}

/// Where per-object bit lengths come from.
#[derive(Debug, Clone, Copy)]
pub enum BitSource<'a> {
    Kb { kb: &'a KnowledgeBase, table: &'a SimilarityTable },
    /// No knowledge base: a fixed length per score stands in for the query result.
    Fixed(&'a [u64; 9]),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AllocatorConfig {
    pub alpha: f64,
    pub min_region_bits: u64,
}

impl Default for AllocatorConfig {
    fn default() -> Self {
        Self { alpha: DEFAULT_ALPHA, min_region_bits: MIN_BUDGET_BITS }
    }
}

/// Linear fixed lengths, 2048·(s + 1) bits.
pub fn default_fixed_bits() -> [u64; 9] {
    std::array::from_fn(|s| 2048 * (s as u64 + 1))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectInput {
    pub index: u32,
    pub category: String,
    pub bbox: BBox,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub index: u32,
    pub category: String,
    pub bbox: BBox,
    pub score: u8,
    pub reference_bits: u64,
    pub importance: f64,
    pub factor: f64,
    pub source_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundEntry {
    pub reference_bits: u64,
    pub importance: f64,
    pub factor: f64,
    pub source_bits: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocationPlan {
    pub objects: Vec<PlanEntry>,
    pub background: BackgroundEntry,
    pub source_pool_bits: u64,
    pub wire_budget_bytes: u64,
    /// Worst-case wire bytes of any frame whose payloads respect the plan.
    pub projected_wire_bytes: u64,
}

impl AllocationPlan {
    pub fn total_source_bits(&self) -> u64 {
        self.background.source_bits + self.objects.iter().map(|o| o.source_bits).sum::<u64>()
    }
}

/// Splits `pool` in proportion to `weights`, each share at least `min`, whole bits
/// by largest remainder (ties to the earlier region).
pub fn split_pool(weights: &[f64], pool: u64, min: u64) -> Result<Vec<u64>, AllocError> {
    let n = weights.len();
    let needed = min * n as u64;
    if needed > pool {
        return Err(AllocError::InfeasibleBudget { regions: n, needed, available: pool });
    }
    // Regions whose proportional share falls under the floor are pinned to it,
    // and the rest of the pool is re-split among the others until stable.
    let mut pinned = vec![false; n];
    let mut shares = vec![0.0; n];
    loop {
        let free_pool = (pool - min * pinned.iter().filter(|&&p| p).count() as u64) as f64;
        let free_weight: f64 = weights.iter().zip(&pinned).filter(|(_, &p)| !p).map(|(w, _)| w).sum();
        let mut changed = false;
        for i in 0..n {
            if pinned[i] {
                shares[i] = min as f64;
                continue;
            }
            shares[i] = if free_weight > 0.0 {
                free_pool * weights[i] / free_weight
            } else {
                free_pool / pinned.iter().filter(|&&p| !p).count() as f64
            };
            if shares[i] < min as f64 {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut out: Vec<u64> = shares.iter().map(|s| s.floor() as u64).collect();
    let rest = pool.saturating_sub(out.iter().sum());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| (shares[b] - shares[b].floor()).total_cmp(&(shares[a] - shares[a].floor())).then(a.cmp(&b)));
    for &i in order.iter().take(rest as usize) {
        out[i] += 1;
    }
    Ok(out)
}

fn check_scores(objects: &[ObjectInput]) -> Result<(), AllocError> {
    match objects.iter().find(|o| o.score > MAX_SCORE) {
        Some(o) => Err(AllocError::ScoreRange(o.score)),
        None => Ok(()),
    }
}

/// Builds the allocation plan for one image of `width`×`height` pixels.
pub fn allocate(
    objects: &[ObjectInput],
    width: u32,
    height: u32,
    channel: &ChannelState,
    source: BitSource<'_>,
    cfg: &AllocatorConfig,
    shape: &CodeShape,
) -> Result<AllocationPlan, AllocError> {
    check_scores(objects)?;
    if !(0.0..=1.0).contains(&cfg.alpha) {
        return Err(AllocError::Alpha(cfg.alpha));
    }
    let regions = objects.len() + 1;
    let pool = shape.source_pool(channel.wire_budget_bytes, regions)?;

    let (obj_bits, bg_bits) = match source {
        BitSource::Kb { kb, table } => {
            table.validate()?;
            let bits = objects
                .iter()
                .map(|o| kb.query_bits(&o.category, channel, table.expected_similarity(o.score)))
                .collect::<Result<Vec<_>, _>>()?;
            (bits, kb.query_bits(FALLBACK, channel, table.expected_similarity(0))?)
        }
        BitSource::Fixed(fixed) => (objects.iter().map(|o| fixed[usize::from(o.score)]).collect(), fixed[0]),
    };

    let image_area = u64::from(width) * u64::from(height);
    let obj_imp = if objects.is_empty() { Vec::new() } else { importance(&obj_bits) };
    let total_obj_bits: u64 = obj_bits.iter().sum();
    let bg_imp = if bg_bits + total_obj_bits == 0 { 0.0 } else { bg_bits as f64 / (bg_bits + total_obj_bits) as f64 };

    let mut covered = vec![false; image_area as usize];
    for o in objects {
        let (x0, y0, w, h) = o.bbox.as_usize();
        for y in y0..y0 + h {
            covered[y * width as usize + x0..y * width as usize + x0 + w].fill(true);
        }
    }
    let bg_area = covered.iter().filter(|&&c| !c).count() as f64 / image_area as f64;
    let mut weights: Vec<f64> = std::iter::once(cfg.alpha * bg_area + (1.0 - cfg.alpha) * bg_imp)
        .chain(
            objects
                .iter()
                .zip(&obj_imp)
                .map(|(o, imp)| cfg.alpha * o.bbox.area() as f64 / image_area as f64 + (1.0 - cfg.alpha) * imp),
        )
        .collect();
    let sum: f64 = weights.iter().sum();
    if sum > 0.0 {
        weights.iter_mut().for_each(|w| *w /= sum);
    } else {
        weights.iter_mut().for_each(|w| *w = 1.0 / regions as f64);
    }

    let bits = split_pool(&weights, pool, cfg.min_region_bits)?;
    let background = BackgroundEntry { reference_bits: bg_bits, importance: bg_imp, factor: weights[0], source_bits: bits[0] };
    let entries = objects
        .iter()
        .enumerate()
        .map(|(i, o)| PlanEntry {
            index: o.index,
            category: o.category.clone(),
            bbox: o.bbox,
            score: o.score,
            reference_bits: obj_bits[i],
            importance: obj_imp[i],
            factor: weights[i + 1],
            source_bits: bits[i + 1],
        })
        .collect();
    Ok(AllocationPlan {
        objects: entries,
        background,
        source_pool_bits: pool,
        wire_budget_bytes: channel.wire_budget_bytes,
        projected_wire_bytes: shape.wire_cost(pool, regions),
    })
}

/// Allocation from externally supplied 0–8 scores, through either bit source.
pub fn direct_score_allocate(
    objects: &[ObjectInput],
    scores: &[u8],
    width: u32,
    height: u32,
    channel: &ChannelState,
    source: BitSource<'_>,
    cfg: &AllocatorConfig,
    shape: &CodeShape,
) -> Result<AllocationPlan, AllocError> {
    if scores.len() != objects.len() {
        return Err(AllocError::ScoreCount { scores: scores.len(), objects: objects.len() });
    }
    let rescored: Vec<ObjectInput> =
        objects.iter().zip(scores).map(|(o, &score)| ObjectInput { score, ..o.clone() }).collect();
    allocate(&rescored, width, height, channel, source, cfg, shape)
}
