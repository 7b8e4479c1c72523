//! Synthetic desk corpus: smooth backgrounds with textured objects at known
//! boxes, each category drawn with its own texture family so coding
//! difficulty differs by category. Defaults mimic COCO scale: 640×480
//! frames with objects of 96–224 pixels a side.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::image::RasterImage;
use crate::rng::{self, uniform_index};
use crate::scene::{BBox, ObjectAnnotation, SceneDescription};

use super::config::CorpusSection;

/// Categories the generator draws, each with a texture and caption phrase.
pub const CATEGORIES: [(&str, Texture, &str); 8] = [
    ("airplane", Texture::Gradient, "flying low over the field"),
    ("dog", Texture::Noise, "sitting on the grass"),
    ("car", Texture::Checker, "parked by the road"),
    ("cat", Texture::Stripes, "lying in the sun"),
    ("boat", Texture::Waves, "floating on the lake"),
    ("bird", Texture::Speckle, "perched on a branch"),
    ("bus", Texture::Bars, "waiting at the stop"),
    ("horse", Texture::Blotches, "standing in the paddock"),
];

const COLORS: [(&str, [u8; 3]); 8] = [
    ("red", [200, 40, 40]),
    ("green", [40, 160, 60]),
    ("blue", [40, 70, 200]),
    ("yellow", [220, 200, 40]),
    ("brown", [130, 80, 40]),
    ("white", [235, 235, 235]),
    ("black", [30, 30, 30]),
    ("gray", [128, 128, 128]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Texture {
    Gradient,
    Noise,
    Checker,
    Stripes,
    Waves,
    Speckle,
    Bars,
    Blotches,
}

fn mix(a: [u8; 3], b: [u8; 3], t: f64) -> [u8; 3] {
    std::array::from_fn(|c| (f64::from(a[c]) * (1.0 - t) + f64::from(b[c]) * t).round().clamp(0.0, 255.0) as u8)
}

fn jitter(p: [u8; 3], r: &mut ChaCha8Rng, amp: i32) -> [u8; 3] {
    p.map(|v| (i32::from(v) + r.gen_range(-amp..=amp)).clamp(0, 255) as u8)
}

/// Bilinearly interpolated random lattice with `cell`-pixel spacing, values in [0, 1].
fn value_noise(w: usize, h: usize, cell: f64, r: &mut ChaCha8Rng) -> Vec<f64> {
    let (gw, gh) = ((w as f64 / cell).ceil() as usize + 2, (h as f64 / cell).ceil() as usize + 2);
    let grid: Vec<f64> = (0..gw * gh).map(|_| r.gen::<f64>()).collect();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (gx, gy) = (x as f64 / cell, y as f64 / cell);
            let (ix, iy) = (gx.floor() as usize, gy.floor() as usize);
            let (tx, ty) = (gx - ix as f64, gy - iy as f64);
            let g = |a: usize, b: usize| grid[b * gw + a];
            out.push(
                g(ix, iy) * (1.0 - tx) * (1.0 - ty)
                    + g(ix + 1, iy) * tx * (1.0 - ty)
                    + g(ix, iy + 1) * (1.0 - tx) * ty
                    + g(ix + 1, iy + 1) * tx * ty,
            );
        }
    }
    out
}

/// Octaves of value noise with amplitude proportional to cell size (a 1/f spectrum).
fn fractal_noise(w: usize, h: usize, cells: &[f64], r: &mut ChaCha8Rng) -> Vec<f64> {
    let total: f64 = cells.iter().sum();
    let mut acc = vec![0.0; w * h];
    for &cell in cells {
        for (a, v) in acc.iter_mut().zip(value_noise(w, h, cell, r)) {
            *a += v * cell / total;
        }
    }
    acc
}

/// Per-pixel grain shared by every texture, so no object is trivially compressible.
const GRAIN: i32 = 6;

/// Paints one texture patch of `w`×`h` from a base color. Every family is
/// band-limited plus a fine grain: coding difficulty varies by category, but
/// no family is pixel-independent noise.
pub fn texture_patch(kind: Texture, w: usize, h: usize, base: [u8; 3], r: &mut ChaCha8Rng) -> RasterImage {
    let dark = mix(base, [0, 0, 0], 0.6);
    let light = mix(base, [255, 255, 255], 0.5);
    let phase: f64 = r.gen_range(0.0..std::f64::consts::TAU);
    let period = r.gen_range(6.0..12.0);
    let checker = r.gen_range(10..17);
    let field = match kind {
        Texture::Noise => fractal_noise(w, h, &[24.0, 12.0, 6.0, 3.0], r),
        Texture::Speckle => fractal_noise(w, h, &[8.0, 4.0, 2.0], r),
        Texture::Blotches => value_noise(w, h, (w.max(h) as f64 / 7.0).max(4.0), r),
        _ => Vec::new(),
    };
    let mut img = RasterImage::filled(w, h, base);
    for y in 0..h {
        for x in 0..w {
            let (fx, fy) = (x as f64, y as f64);
            let t = match kind {
                Texture::Gradient => (fx + fy) / (w + h) as f64,
                Texture::Noise | Texture::Blotches => field[y * w + x],
                Texture::Speckle => (2.0 * field[y * w + x] - 0.5).clamp(0.0, 1.0),
                Texture::Checker => {
                    if (x / checker + y / checker) % 2 == 0 {
                        0.9
                    } else {
                        0.1
                    }
                }
                Texture::Stripes => 0.5 + 0.5 * ((fx + fy) * std::f64::consts::TAU / period + phase).sin(),
                Texture::Waves => 0.5 + 0.5 * (fx * std::f64::consts::TAU / (2.0 * period) + 3.0 * (fy / period + phase).sin()).sin(),
                Texture::Bars => {
                    if (y / 6) % 3 == 0 {
                        1.0
                    } else {
                        0.2
                    }
                }
            };
            img.set_pixel(x, y, jitter(mix(dark, light, t), r, GRAIN));
        }
    }
    img
}

fn background(w: usize, h: usize, r: &mut ChaCha8Rng) -> RasterImage {
    let sky = [r.gen_range(120..200), r.gen_range(150..210), r.gen_range(190..250)];
    let ground = [r.gen_range(60..140), r.gen_range(100..170), r.gen_range(40..100)];
    let mut img = RasterImage::filled(w, h, sky);
    for y in 0..h {
        let t = y as f64 / h as f64;
        for x in 0..w {
            img.set_pixel(x, y, jitter(mix(sky, ground, t), r, 3));
        }
    }
    img
}

fn overlaps(a: &BBox, b: &BBox) -> bool {
    a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h
}

fn list_phrase(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [init @ .., last] => format!("{} and {last}", init.join(", ")),
    }
}

/// One synthetic image with its annotations. Categories within an image are distinct.
pub fn synth_image(id: &str, cfg: &CorpusSection, seed: u64) -> (SceneDescription, RasterImage) {
    let mut r = rng::seeded(seed);
    let (w, h) = (cfg.width as usize, cfg.height as usize);
    let mut img = background(w, h, &mut r);
    let n = cfg.min_objects + uniform_index(&mut r, cfg.max_objects - cfg.min_objects + 1);

    let mut pool: Vec<usize> = (0..CATEGORIES.len()).collect();
    let mut boxes: Vec<BBox> = Vec::new();
    let mut objects = Vec::new();
    for _ in 0..n {
        if pool.is_empty() {
            break;
        }
        let mut placed = None;
        for _ in 0..200 {
            let bw = r.gen_range(cfg.min_object_size..=cfg.max_object_size.min(cfg.width));
            let bh = r.gen_range(cfg.min_object_size..=cfg.max_object_size.min(cfg.height));
            let b = BBox::new(r.gen_range(0..=cfg.width - bw), r.gen_range(0..=cfg.height - bh), bw, bh);
            if !boxes.iter().any(|o| overlaps(o, &b)) {
                placed = Some(b);
                break;
            }
        }
        let Some(bbox) = placed else { break };
        let (category, texture, phrase) = CATEGORIES[pool.remove(uniform_index(&mut r, pool.len()))];
        let (color_name, color) = COLORS[uniform_index(&mut r, COLORS.len())];
        let patch = texture_patch(texture, bbox.w as usize, bbox.h as usize, color, &mut r);
        img.paste(&patch, bbox.x as usize, bbox.y as usize);
        boxes.push(bbox);
        objects.push(ObjectAnnotation {
            index: objects.len() as u32,
            category: category.to_string(),
            caption: format!("a {color_name} {category} {phrase}"),
            bbox,
        });
    }
    let names: Vec<String> = objects.iter().map(|o| format!("{} {}", article(&o.category), o.category)).collect();
    let global_caption = if names.is_empty() { "an empty outdoor scene".to_string() } else { format!("an outdoor scene with {}", list_phrase(&names)) };
    let scene = SceneDescription { image_id: id.to_string(), width: cfg.width, height: cfg.height, global_caption, objects };
    (scene, img)
}

fn article(word: &str) -> &'static str {
    if word.starts_with(['a', 'e', 'i', 'o', 'u']) {
        "an"
    } else {
        "a"
    }
}

/// Image id for corpus position `i`.
pub fn image_id(i: usize) -> String {
    format!("syn{i:04}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intent::SynonymLexicon;

    #[test]
    fn objects_fit_and_do_not_overlap() {
        let cfg = CorpusSection::default();
        for i in 0..30 {
            let (scene, img) = synth_image(&image_id(i), &cfg, i as u64);
            let scene = scene.validated().unwrap();
            assert!((cfg.min_objects..=cfg.max_objects).contains(&scene.objects.len()));
            assert_eq!((img.width(), img.height()), (cfg.width as usize, cfg.height as usize));
            let sizes = cfg.min_object_size..=cfg.max_object_size;
            for (a, oa) in scene.objects.iter().enumerate() {
                assert!(sizes.contains(&oa.bbox.w) && sizes.contains(&oa.bbox.h));
                assert!(oa.caption.contains(&oa.category));
                assert!(scene.global_caption.contains(&oa.category));
                for ob in &scene.objects[a + 1..] {
                    assert!(!overlaps(&oa.bbox, &ob.bbox));
                    assert_ne!(oa.category, ob.category);
                }
            }
        }
    }

    #[test]
    fn texture_difficulty_varies_without_incompressible_families() {
        let mut psnrs = Vec::new();
        for (i, &(_, texture, _)) in CATEGORIES.iter().enumerate() {
            let patch = texture_patch(texture, 128, 128, COLORS[i].1, &mut rng::seeded(i as u64));
            let s = crate::codec::encode_region(&patch, 16_384).unwrap();
            let d = crate::codec::decode_region(&s.bytes, &BBox::full(128, 128)).unwrap();
            psnrs.push(crate::eval::psnr(&patch, &d.image, None).unwrap());
        }
        let (lo, hi) = psnrs.iter().fold((f64::MAX, f64::MIN), |(l, h), &p| (l.min(p), h.max(p)));
        assert!(lo > 18.0 && hi - lo > 3.0, "{psnrs:?}");
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = CorpusSection::default();
        assert_eq!(synth_image("a", &cfg, 9), synth_image("a", &cfg, 9));
        assert_ne!(synth_image("a", &cfg, 9).1, synth_image("a", &cfg, 10).1);
    }

    #[test]
    fn categories_are_in_the_lexicon() {
        let lex = SynonymLexicon::bundled();
        for (c, _, _) in CATEGORIES {
            assert!(lex.synonyms(c).is_some(), "{c}");
        }
    }

    #[test]
    fn captions_name_only_their_own_category() {
        let lex = SynonymLexicon::bundled();
        for (cat, _, phrase) in CATEGORIES {
            for (color, _) in COLORS {
                let tokens = crate::text::tokenize(&format!("a {color} {cat} {phrase}"));
                for other in lex.terms().filter(|&t| t != cat) {
                    assert!(!crate::text::phrase_in(&tokens, other), "{other:?} in caption of {cat}");
                    for syn in lex.synonyms(other).unwrap() {
                        assert!(!crate::text::phrase_in(&tokens, syn), "{syn:?} in caption of {cat}");
                    }
                }
            }
        }
    }

    #[test]
    fn list_phrase_forms() {
        let s = |v: &[&str]| list_phrase(&v.iter().map(|x| x.to_string()).collect::<Vec<_>>());
        assert_eq!(s(&["a dog"]), "a dog");
        assert_eq!(s(&["a dog", "a cat", "a car"]), "a dog, a cat and a car");
    }
}
