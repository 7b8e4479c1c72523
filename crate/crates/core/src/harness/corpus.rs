//! On-disk corpus layout: `scenes/<id>.json`, `images/<id>.ppm` and one `intentions.json`.

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;

use crate::image::{load_image, save_image, RasterImage};
use crate::intent::{generate_intention, GeneratedIntention, SynonymLexicon};
use crate::rng;
use crate::scene::{load_scene, save_scene, Intention, SceneDescription};

use super::config::ExperimentConfig;
use super::synth::{image_id, synth_image};
use super::HarnessError;

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub scene: SceneDescription,
    pub image: RasterImage,
    pub intention: Intention,
}

/// Synthesizes the configured number of scenes with their images.
pub fn synthesize(cfg: &ExperimentConfig) -> Vec<(SceneDescription, RasterImage)> {
    (0..cfg.corpus.images)
        .into_par_iter()
        .map(|i| synth_image(&image_id(i), &cfg.corpus, rng::derive(cfg.seeds.dataset, i as u64)))
        .collect()
}

/// One intention per scene; the seed depends only on the intent seed and the image id.
pub fn intentions_for(
    scenes: &[SceneDescription],
    lexicon: &SynonymLexicon,
    cfg: &ExperimentConfig,
) -> Result<Vec<GeneratedIntention>, HarnessError> {
    scenes
        .iter()
        .map(|s| {
            generate_intention(&s.labels(), lexicon, rng::derive_str(cfg.seeds.intent, &s.image_id), &cfg.corpus.intention_template)
                .map_err(|e| HarnessError::stage(&s.image_id, "intent", e))
        })
        .collect()
}

pub fn synthesize_corpus(cfg: &ExperimentConfig, lexicon: &SynonymLexicon) -> Result<Vec<CorpusItem>, HarnessError> {
    let pairs = synthesize(cfg);
    let scenes: Vec<SceneDescription> = pairs.iter().map(|(s, _)| s.clone()).collect();
    let intents = intentions_for(&scenes, lexicon, cfg)?;
    Ok(pairs
        .into_iter()
        .zip(intents)
        .map(|((scene, image), g)| CorpusItem { scene, image, intention: g.intention })
        .collect())
}

fn ensure_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

pub fn write_scenes(dir: &Path, pairs: &[(SceneDescription, RasterImage)]) -> Result<(), HarnessError> {
    ensure_dir(&dir.join("scenes"))?;
    ensure_dir(&dir.join("images"))?;
    for (scene, image) in pairs {
        save_scene(scene, dir.join("scenes").join(format!("{}.json", scene.image_id)))
            .map_err(|e| HarnessError::stage(&scene.image_id, "write scene", e))?;
        save_image(image, dir.join("images").join(format!("{}.ppm", scene.image_id)))
            .map_err(|e| HarnessError::stage(&scene.image_id, "write image", e))?;
    }
    Ok(())
}

/// Name of the intentions file inside a corpus directory.
pub const INTENTIONS_FILE: &str = "intentions.json";

/// Writes one JSON object mapping image id to its generated intention.
pub fn write_intentions(path: &Path, scenes: &[SceneDescription], intents: &[GeneratedIntention]) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        ensure_dir(dir)?;
    }
    let map: BTreeMap<&str, &GeneratedIntention> = scenes.iter().map(|s| s.image_id.as_str()).zip(intents).collect();
    let text = serde_json::to_string_pretty(&map).expect("serializable") + "\n";
    std::fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

pub fn load_intentions(path: &Path) -> Result<BTreeMap<String, GeneratedIntention>, HarnessError> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::stage(&path.display().to_string(), "load intentions", e))
}

/// Scenes in file-name order.
pub fn load_scenes(dir: &Path) -> Result<Vec<SceneDescription>, HarnessError> {
    let scene_dir = dir.join("scenes");
    let mut paths: Vec<_> = std::fs::read_dir(&scene_dir)
        .map_err(|e| HarnessError::io(&scene_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| load_scene(p).map_err(|e| HarnessError::stage(&p.display().to_string(), "load scene", e)))
        .collect()
}

pub fn load_corpus(dir: &Path) -> Result<Vec<CorpusItem>, HarnessError> {
    let scenes = load_scenes(dir)?;
    let mut intents = load_intentions(&dir.join(INTENTIONS_FILE))?;
    scenes
        .into_iter()
        .map(|scene| {
            let id = scene.image_id.clone();
            let image = load_image(dir.join("images").join(format!("{id}.ppm"))).map_err(|e| HarnessError::stage(&id, "load image", e))?;
            if (image.width(), image.height()) != (scene.width as usize, scene.height as usize) {
                return Err(HarnessError::stage(&id, "load image", "image size differs from scene size"));
            }
            let g = intents.remove(&id).ok_or_else(|| HarnessError::stage(&id, "load intention", "no intention for this image"))?;
            Ok(CorpusItem { scene, image, intention: g.intention })
        })
        .collect()
}

/// Up to `per_category` crops of each category, in corpus order.
pub fn calibration_crops(corpus: &[CorpusItem], per_category: usize) -> BTreeMap<String, Vec<RasterImage>> {
    let mut out: BTreeMap<String, Vec<RasterImage>> = BTreeMap::new();
    for item in corpus {
        for obj in &item.scene.objects {
            let list = out.entry(obj.category.clone()).or_default();
            if list.len() < per_category {
                list.push(item.image.crop(&obj.bbox));
            }
        }
    }
    out
}
