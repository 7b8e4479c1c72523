//! One image through one method: score, allocate, encode, frame, transmit,
//! decode, reassemble, evaluate.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{self, decode_region, encode_region, extract_regions, ordering, reassemble, MID_GRAY};
use crate::cot::{allocate, direct_score_allocate, relevance, split_pool, AllocationPlan, AllocatorConfig, BackgroundEntry, BitSource, ObjectInput, PlanEntry};
use crate::eval::{build_masks, evaluate, MetricReport};
use crate::image::RasterImage;
use crate::intent::SynonymLexicon;
use crate::kb::KnowledgeBase;
use crate::matcher::{
    holistic_score, scripted_triple, service_direct_score, service_match, HttpTransport, MatchTriple, PartTexts, PromptBundle,
    ScriptedTransport, ServiceConfig, Transport,
};
use crate::phy::link::{transmit, LinkConfig};
use crate::phy::{shared_code, ChannelReport, CodeShape, Frame, FrameRegion, LdpcCode, RegionKind};
use crate::rng;
use crate::scene::{BBox, ChannelState, SceneDescription};

use super::config::{AblationMode, ExperimentConfig, MatcherMode};
use super::corpus::CorpusItem;
use super::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Pace(AblationMode),
    /// Whole image as a single region at the full budget.
    IntentionAgnostic,
    /// Equal source bits for the background and every object.
    UniformRegions,
    /// Shares proportional to token overlap with the intention, plus one.
    LexicalSim,
}

impl Method {
    pub fn name(self) -> String {
        match self {
            Method::Pace(AblationMode::Normal) => "pace".into(),
            Method::Pace(m) => format!("pace_{}", m.name()),
            Method::IntentionAgnostic => "intention_agnostic".into(),
            Method::UniformRegions => "uniform_regions".into(),
            Method::LexicalSim => "lexical_sim".into(),
        }
    }

    pub fn comparison_set() -> Vec<Method> {
        vec![Method::Pace(AblationMode::Normal), Method::IntentionAgnostic, Method::UniformRegions, Method::LexicalSim]
    }
}

/// Shared, read-only state for a run.
pub struct Context {
    pub config: ExperimentConfig,
    pub lexicon: SynonymLexicon,
    pub kb: Option<KnowledgeBase>,
    pub code: Arc<LdpcCode>,
    pub shape: CodeShape,
    service: ServiceConfig,
    transport: Option<Box<dyn Transport>>,
}

impl Context {
    pub fn new(config: ExperimentConfig, kb: Option<KnowledgeBase>) -> Result<Self, HarnessError> {
        config.validate()?;
        let lexicon = if config.paths.lexicon.as_os_str().is_empty() {
            SynonymLexicon::bundled()
        } else {
            SynonymLexicon::load(&config.paths.lexicon).map_err(|e| HarnessError::Config(e.to_string()))?
        };
        let code = shared_code(config.seeds.code).map_err(|e| HarnessError::Config(e.to_string()))?;
        let mut service = config.matcher.service_config();
        if !config.paths.prompts.as_os_str().is_empty() {
            service.prompt_bundle = PromptBundle::load_dir(&config.paths.prompts).map_err(|e| HarnessError::io(&config.paths.prompts, e))?;
        }
        let transport: Option<Box<dyn Transport>> = match config.matcher.mode {
            MatcherMode::Scripted => None,
            MatcherMode::Service => Some(Box::new(HttpTransport::new(&service))),
            MatcherMode::Stub => Some(Box::new(ScriptedTransport { lexicon: lexicon.clone() })),
        };
        let shape = CodeShape { n: config.channel.ldpc_n, k: config.channel.ldpc_k };
        Ok(Self { config, lexicon, kb, code, shape, service, transport })
    }

    /// Loads the knowledge base from the configured path.
    pub fn with_kb_file(config: ExperimentConfig) -> Result<Self, HarnessError> {
        let kb = KnowledgeBase::load(&config.paths.kb)
            .map_err(|e| HarnessError::Config(format!("{e} (run `pace calibrate` first)")))?;
        Self::new(config, Some(kb))
    }

    pub fn channel(&self) -> ChannelState {
        self.config.channel.state()
    }

    fn link(&self) -> LinkConfig {
        LinkConfig { snr_db: self.config.channel.snr_db, max_iter: self.config.channel.max_iter, decoder: self.config.channel.decoder }
    }

    /// 1-based position in the lexicon; 0 for categories it lacks.
    pub fn category_id(&self, category: &str) -> u16 {
        self.lexicon.terms().position(|t| t == category).map_or(0, |i| i as u16 + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectScore {
    pub index: u32,
    pub category: String,
    /// Absent when the score came from a direct 0–8 judgement.
    pub triple: Option<MatchTriple>,
    pub score: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageOutcome {
    pub image_id: String,
    pub method: Method,
    pub scores: Vec<ObjectScore>,
    pub plan: AllocationPlan,
    /// The frame as sent.
    pub frame: Vec<u8>,
    pub channel: ChannelReport,
    /// Regions lost in transit or undecodable, as "background" or "object <index>".
    pub lost: Vec<String>,
    pub metrics: MetricReport,
    pub received: RasterImage,
}

fn parts(scene: &SceneDescription, i: usize) -> PartTexts {
    let o = &scene.objects[i];
    PartTexts { category: o.category.clone(), global_caption: scene.global_caption.clone(), object_caption: o.caption.clone() }
}

fn score_objects(ctx: &Context, item: &CorpusItem, direct: bool) -> Result<Vec<ObjectScore>, HarnessError> {
    let scene = &item.scene;
    let id = &scene.image_id;
    (0..scene.objects.len())
        .map(|i| {
            let o = &scene.objects[i];
            let (triple, score) = match (&ctx.transport, direct) {
                (None, false) => {
                    let t = scripted_triple(scene, o, &item.intention, &ctx.lexicon);
                    (Some(t), relevance(&t))
                }
                (None, true) => (None, holistic_score(&o.category, &o.caption, &scene.global_caption, &item.intention)),
                (Some(tr), false) => {
                    let t = service_match(&parts(scene, i), &item.intention, &ctx.service, tr.as_ref())
                        .map_err(|e| HarnessError::stage(id, "match", e))?;
                    (Some(t), relevance(&t))
                }
                (Some(tr), true) => (
                    None,
                    service_direct_score(&parts(scene, i), &item.intention, &ctx.service, tr.as_ref())
                        .map_err(|e| HarnessError::stage(id, "direct score", e))?,
                ),
            };
            Ok(ObjectScore { index: o.index, category: o.category.clone(), triple, score })
        })
        .collect()
}

/// A plan from explicit region weights (background first), for the baselines.
fn weighted_plan(
    ctx: &Context,
    objects: &[ObjectInput],
    weights: &[f64],
    channel: &ChannelState,
    id: &str,
) -> Result<AllocationPlan, HarnessError> {
    let regions = objects.len() + 1;
    let pool = ctx.shape.source_pool(channel.wire_budget_bytes, regions).map_err(|e| HarnessError::stage(id, "allocate", e))?;
    let total: f64 = weights.iter().sum();
    let norm: Vec<f64> = weights.iter().map(|w| w / total).collect();
    let bits = split_pool(&norm, pool, ctx.config.allocator.min_region_bits).map_err(|e| HarnessError::stage(id, "allocate", e))?;
    Ok(AllocationPlan {
        objects: objects
            .iter()
            .enumerate()
            .map(|(i, o)| PlanEntry {
                index: o.index,
                category: o.category.clone(),
                bbox: o.bbox,
                score: o.score,
                reference_bits: 0,
                importance: norm[i + 1],
                factor: norm[i + 1],
                source_bits: bits[i + 1],
            })
            .collect(),
        background: BackgroundEntry { reference_bits: 0, importance: norm[0], factor: norm[0], source_bits: bits[0] },
        source_pool_bits: pool,
        wire_budget_bytes: channel.wire_budget_bytes,
        projected_wire_bytes: ctx.shape.wire_cost(pool, regions),
    })
}

fn plan_for(ctx: &Context, item: &CorpusItem, method: Method, channel: &ChannelState) -> Result<(Vec<ObjectScore>, AllocationPlan), HarnessError> {
    let scene = &item.scene;
    let id = scene.image_id.as_str();
    let direct = matches!(method, Method::Pace(AblationMode::NoVoting) | Method::LexicalSim);
    let scores = match method {
        Method::Pace(_) => score_objects(ctx, item, direct)?,
        // Baselines never consult the matcher service.
        Method::LexicalSim => scene
            .objects
            .iter()
            .map(|o| ObjectScore {
                index: o.index,
                category: o.category.clone(),
                triple: None,
                score: holistic_score(&o.category, &o.caption, &scene.global_caption, &item.intention),
            })
            .collect(),
        Method::UniformRegions | Method::IntentionAgnostic => scene
            .objects
            .iter()
            .map(|o| ObjectScore { index: o.index, category: o.category.clone(), triple: None, score: 0 })
            .collect(),
    };
    let inputs: Vec<ObjectInput> = scene
        .objects
        .iter()
        .zip(&scores)
        .map(|(o, s)| ObjectInput { index: o.index, category: o.category.clone(), bbox: o.bbox, score: s.score })
        .collect();
    let a = &ctx.config.allocator;
    let cfg = AllocatorConfig { alpha: a.alpha, min_region_bits: a.min_region_bits };
    let stage = |e: crate::cot::AllocError| HarnessError::stage(id, "allocate", e);
    let plan = match method {
        Method::Pace(AblationMode::NoKb) => {
            allocate(&inputs, scene.width, scene.height, channel, BitSource::Fixed(&a.fixed_bits), &cfg, &ctx.shape).map_err(stage)?
        }
        Method::Pace(AblationMode::NoVoting) => {
            let kb = ctx.kb.as_ref().ok_or_else(|| HarnessError::stage(id, "allocate", "knowledge base required"))?;
            let source = BitSource::Kb { kb, table: &a.similarity_table };
            let direct: Vec<u8> = scores.iter().map(|s| s.score).collect();
            direct_score_allocate(&inputs, &direct, scene.width, scene.height, channel, source, &cfg, &ctx.shape).map_err(stage)?
        }
        Method::Pace(AblationMode::Normal) => {
            let kb = ctx.kb.as_ref().ok_or_else(|| HarnessError::stage(id, "allocate", "knowledge base required"))?;
            let source = BitSource::Kb { kb, table: &a.similarity_table };
            allocate(&inputs, scene.width, scene.height, channel, source, &cfg, &ctx.shape).map_err(stage)?
        }
        Method::UniformRegions => weighted_plan(ctx, &inputs, &vec![1.0; inputs.len() + 1], channel, id)?,
        Method::LexicalSim => {
            let weights: Vec<f64> = std::iter::once(1.0).chain(inputs.iter().map(|o| f64::from(o.score) + 1.0)).collect();
            weighted_plan(ctx, &inputs, &weights, channel, id)?
        }
        Method::IntentionAgnostic => weighted_plan(ctx, &[], &[1.0], channel, id)?,
    };
    Ok((scores, plan))
}

/// Runs one image through one method under `channel`.
pub fn run_image(ctx: &Context, item: &CorpusItem, method: Method, channel: &ChannelState) -> Result<ImageOutcome, HarnessError> {
    let scene = &item.scene;
    let id = scene.image_id.as_str();
    let (scores, plan) = plan_for(ctx, item, method, channel)?;

    // Objects travel in raster order of their box centers, after the background.
    let boxes: Vec<BBox> = plan.objects.iter().map(|o| o.bbox).collect();
    let order = ordering(&boxes);
    let objects: Vec<(BBox, u16)> = order.iter().map(|&i| (boxes[i], ctx.category_id(&plan.objects[i].category))).collect();
    let (background, patches) = if method == Method::IntentionAgnostic {
        let (mut bg, _) = extract_regions(&item.image, &[]).map_err(|e| HarnessError::stage(id, "extract", e))?;
        bg.pixels = item.image.clone();
        (bg, Vec::new())
    } else {
        extract_regions(&item.image, &objects).map_err(|e| HarnessError::stage(id, "extract", e))?
    };
    let budgets: Vec<u64> = std::iter::once(plan.background.source_bits)
        .chain(order.iter().map(|&i| plan.objects[i].source_bits))
        .collect();
    let all_patches: Vec<&codec::RegionPatch> = std::iter::once(&background).chain(&patches).collect();
    let streams = all_patches
        .par_iter()
        .zip(&budgets)
        .map(|(p, &bits)| encode_region(&p.pixels, bits))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| HarnessError::stage(id, "encode", e))?;

    let frame = Frame {
        width: scene.width as u16,
        height: scene.height as u16,
        regions: all_patches
            .iter()
            .zip(streams)
            .map(|(p, s)| FrameRegion { kind: p.kind, category_id: p.category_id, bbox: p.bbox, payload: s.bytes })
            .collect(),
    };
    let frame_bytes = frame.to_bytes().map_err(|e| HarnessError::stage(id, "frame", e))?;
    let link = ctx.link();
    let (rx, report) = transmit(&frame, &ctx.code, &link, rng::derive_str(ctx.config.seeds.channel, id));

    let (w, h) = (scene.width as usize, scene.height as usize);
    let mut lost = Vec::new();
    let received = if !rx.header_ok {
        lost.push("header".into());
        RasterImage::filled(w, h, MID_GRAY)
    } else {
        let mut canvas = None;
        let mut decoded_objects = Vec::new();
        for (k, r) in rx.regions.iter().enumerate() {
            let label = if r.header.kind == RegionKind::Background {
                "background".to_string()
            } else {
                format!("object {}", plan.objects[order[k - 1]].index)
            };
            let img = if r.lost { None } else { decode_region(&r.payload, &r.header.bbox).ok() };
            match (r.header.kind, img) {
                (RegionKind::Background, Some(d)) => canvas = Some(d.image),
                (RegionKind::Object, Some(d)) => decoded_objects.push((r.header.bbox, d.image)),
                (_, None) => lost.push(label),
            }
        }
        let canvas = canvas.unwrap_or_else(|| RasterImage::filled(w, h, MID_GRAY));
        let refs: Vec<(BBox, &RasterImage)> = decoded_objects.iter().map(|(b, i)| (*b, i)).collect();
        reassemble(&canvas, &refs).map_err(|e| HarnessError::stage(id, "reassemble", e))?
    };
    let masks = build_masks(&item.intention, scene);
    let metrics = evaluate(&item.image, &received, &masks).map_err(|e| HarnessError::stage(id, "evaluate", e))?;
    Ok(ImageOutcome { image_id: id.to_string(), method, scores, plan, frame: frame_bytes, channel: report, lost, metrics, received })
}

/// Writes the received image of an outcome as PPM.
pub fn save_received(outcome: &ImageOutcome, path: &Path) -> Result<(), HarnessError> {
    crate::image::save_image(&outcome.received, path).map_err(|e| HarnessError::stage(&outcome.image_id, "write image", e))
}
