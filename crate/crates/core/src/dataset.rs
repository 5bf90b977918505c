//! Dataset generation and loading: scenes → G-buffers + path-traced targets on disk → training samples.

use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::io::{self, DatasetItem, ItemFiles};
use crate::pixels::Image;
use crate::render::{path_trace_with, render_gbuffer_with, GBuffer, Geometry, PTConfig};
use crate::scene::{generate_scene, SceneConfig};
use crate::train::{EvalItem, Sample};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

/// Wall-clock render times, kept apart from the manifest so datasets stay bit-reproducible.
pub const TIMINGS_NAME: &str = "timings.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    /// Item `i` uses scene seed `seed + i`.
    pub seed: u64,
    pub scene: SceneConfig,
    pub path_tracer: PTConfig,
    /// Also write 8-bit sRGB PNG previews.
    pub previews: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            count: 300,
            width: 128,
            height: 64,
            seed: 0,
            scene: SceneConfig::default(),
            path_tracer: PTConfig::default(),
            previews: true,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("count must be >= 1".into()));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!("resolution {}x{} must be positive", self.width, self.height)));
        }
        self.scene.validate()?;
        self.path_tracer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemTiming {
    pub id: String,
    pub gbuffer_seconds: f64,
    pub path_trace_seconds: f64,
}

/// Hex SHA-256 of a value's JSON form.
pub fn digest<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn item_id(index: usize) -> String {
    format!("item{index:05}")
}

/// Renders and writes item `index`; returns its manifest entry and timings.
pub fn render_item(root: &Path, index: usize, cfg: &GenConfig) -> Result<(DatasetItem, ItemTiming)> {
    let id = item_id(index);
    let wrap = |e: Error| Error::Item {
        id: id.clone(),
        msg: e.to_string(),
    };
    let seed = cfg.seed.wrapping_add(index as u64);
    let scene = generate_scene(seed, &cfg.scene).map_err(wrap)?;

    let t = Instant::now();
    let geom = Geometry::from_scene(&scene).map_err(wrap)?;
    let build = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let g = render_gbuffer_with(&geom, &scene, cfg.width, cfg.height).map_err(wrap)?;
    let gbuffer_seconds = build + t.elapsed().as_secs_f64();
    let pt = PTConfig {
        seed: crate::rng::mix(cfg.path_tracer.seed, seed),
        ..cfg.path_tracer.clone()
    };
    let t = Instant::now();
    let target = path_trace_with(&geom, &scene, &pt, cfg.width, cfg.height).map_err(wrap)?;
    let path_trace_seconds = build + t.elapsed().as_secs_f64();

    let files = ItemFiles::for_id(&id);
    let images = [
        (&files.direct, "direct", &g.direct),
        (&files.depth, "depth", &g.depth),
        (&files.normal, "normal", &g.normal),
        (&files.albedo, "albedo", &g.albedo),
        (&files.target, "target", &target),
    ];
    for (rel, name, img) in images {
        io::write_image(&root.join(rel), img).map_err(wrap)?;
        if cfg.previews {
            io::write_png(&root.join("previews").join(format!("{id}_{name}.png")), img).map_err(wrap)?;
        }
    }
    let item = DatasetItem {
        id: id.clone(),
        seed,
        width: cfg.width,
        height: cfg.height,
        files,
        scene_digest: digest(&cfg.scene),
        render_digest: digest(&cfg.path_tracer),
    };
    let timing = ItemTiming {
        id,
        gbuffer_seconds,
        path_trace_seconds,
    };
    Ok((item, timing))
}

/// Renders `cfg.count` items in parallel, then writes the manifest and timing log in item order.
pub fn generate_dataset(root: &Path, cfg: &GenConfig, progress: &(dyn Fn(usize, usize) + Sync)) -> Result<Vec<DatasetItem>> {
    cfg.validate()?;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<(DatasetItem, ItemTiming)> = (0..cfg.count)
        .into_par_iter()
        .map(|i| {
            let r = render_item(root, i, cfg)?;
            progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1, cfg.count);
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let (items, timings): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    io::write_manifest(root, &items)?;
    let mut lines = String::new();
    for t in &timings {
        lines.push_str(&serde_json::to_string(t).expect("timing serializes"));
        lines.push('\n');
    }
    io::write_atomic(&root.join(TIMINGS_NAME), lines.as_bytes())?;
    Ok(items)
}

/// Timings by item id; empty if the dataset has no timing log.
pub fn read_timings(root: &Path) -> Result<HashMap<String, ItemTiming>> {
    let path = root.join(TIMINGS_NAME);
    if !path.exists() {
        return Ok(HashMap::new());
    }
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str::<ItemTiming>(l)
                .map(|t| (t.id.clone(), t))
                .map_err(|e| Error::Parse {
                    path: path.clone(),
                    line: i + 1,
                    msg: e.to_string(),
                })
        })
        .collect()
}

fn to_network(img: &Image) -> Vec<f32> {
    img.data.iter().map(|v| v.clamp(0.0, 1.0) * 2.0 - 1.0).collect()
}

/// 12-channel `[-1, 1]` network input: direct, depth ×3, normal, albedo.
pub fn conditioning(direct: &Image, depth: &Image, normal: &Image, albedo: &Image) -> Result<Tensor<f32>> {
    let (w, h) = (direct.width, direct.height);
    for img in [depth, normal, albedo] {
        if (img.width, img.height) != (w, h) {
            return Err(Error::shape("conditioning", (h, w), (img.height, img.width)));
        }
    }
    let mut data = to_network(direct);
    data.extend(to_network(&depth.replicate(3)));
    data.extend(to_network(normal));
    data.extend(to_network(albedo));
    Tensor::new([1, 12, h, w], data)
}

pub fn gbuffer_conditioning(g: &GBuffer) -> Result<Tensor<f32>> {
    conditioning(&g.direct, &g.depth, &g.normal, &g.albedo)
}

/// `[0, 1]`-clamped image as a `(1, C, H, W)` network tensor.
pub fn image_to_network(img: &Image) -> Tensor<f32> {
    Tensor::new([1, img.channels, img.height, img.width], to_network(img)).expect("image dims are valid")
}

struct Loaded {
    direct: Image,
    input: Tensor<f32>,
    target: Image,
}

fn load_images(root: &Path, item: &DatasetItem) -> Result<Loaded> {
    let wrap = |e: Error| Error::Item {
        id: item.id.clone(),
        msg: e.to_string(),
    };
    let f = &item.files;
    let read = |rel: &str| io::read_image(&root.join(rel)).map_err(wrap);
    let direct = read(&f.direct)?;
    let input = conditioning(&direct, &read(&f.depth)?, &read(&f.normal)?, &read(&f.albedo)?).map_err(wrap)?;
    Ok(Loaded {
        direct,
        input,
        target: read(&f.target)?,
    })
}

pub fn load_sample(root: &Path, item: &DatasetItem) -> Result<Sample> {
    let l = load_images(root, item)?;
    Ok(Sample {
        id: item.id.clone(),
        input: l.input,
        target: image_to_network(&l.target),
    })
}

pub fn load_eval_item(root: &Path, item: &DatasetItem, timing: Option<&ItemTiming>) -> Result<EvalItem> {
    let l = load_images(root, item)?;
    Ok(EvalItem {
        id: item.id.clone(),
        input: l.input,
        direct: l.direct,
        target: l.target,
        gbuffer_seconds: timing.map_or(0.0, |t| t.gbuffer_seconds),
        path_trace_seconds: timing.map_or(0.0, |t| t.path_trace_seconds),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny_config(count: usize) -> GenConfig {
        GenConfig {
            count,
            width: 16,
            height: 8,
            seed: 40,
            scene: SceneConfig {
                min_objects: 5,
                max_objects: 10,
                ..SceneConfig::default()
            },
            path_tracer: PTConfig {
                spp: 4,
                ..PTConfig::default()
            },
            previews: true,
        }
    }

    fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
        let mut out = Vec::new();
        let mut stack = vec![root.to_path_buf()];
        while let Some(d) = stack.pop() {
            for e in std::fs::read_dir(&d).unwrap() {
                let p = e.unwrap().path();
                if p.is_dir() {
                    stack.push(p);
                } else if p.file_name().unwrap() != TIMINGS_NAME {
                    out.push((p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
                }
            }
        }
        out.sort();
        out
    }

    #[test]
    fn generate_load_and_reproduce() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = tiny_config(3);
        let items = generate_dataset(a.path(), &cfg, &|_, _| {}).unwrap();
        assert_eq!(items.len(), 3);
        let manifest = std::fs::read_to_string(a.path().join(io::MANIFEST_NAME)).unwrap();
        assert_eq!(manifest.lines().count(), 3);
        let loaded = io::load_dataset(a.path()).unwrap();
        assert_eq!(loaded, items);
        assert_eq!(loaded.iter().map(|i| i.id.as_str()).collect::<Vec<_>>(), ["item00000", "item00001", "item00002"]);
        assert_eq!(read_timings(a.path()).unwrap().len(), 3);

        let s = load_sample(a.path(), &items[1]).unwrap();
        assert_eq!(s.input.dims(), [1, 12, 8, 16]);
        assert_eq!(s.target.dims(), [1, 3, 8, 16]);
        assert!(s.input.data().iter().chain(s.target.data()).all(|v| (-1.0..=1.0).contains(v)));

        rayon::ThreadPoolBuilder::new()
            .num_threads(2)
            .build()
            .unwrap()
            .install(|| generate_dataset(b.path(), &cfg, &|_, _| {}))
            .unwrap();
        assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));
    }

    #[test]
    fn missing_file_names_the_item() {
        let dir = tempfile::tempdir().unwrap();
        let items = generate_dataset(dir.path(), &tiny_config(3), &|_, _| {}).unwrap();
        std::fs::remove_file(dir.path().join(&items[1].files.normal)).unwrap();
        match io::load_dataset(dir.path()) {
            Err(Error::Item { id, msg }) => {
                assert_eq!(id, "item00001");
                assert!(msg.contains("normal"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resolution_mismatch_reported() {
        let dir = tempfile::tempdir().unwrap();
        let items = generate_dataset(dir.path(), &tiny_config(2), &|_, _| {}).unwrap();
        io::write_image(&dir.path().join(&items[0].files.depth), &Image::new(8, 8, 1)).unwrap();
        assert!(matches!(io::load_dataset(dir.path()), Err(Error::Item { id, .. }) if id == "item00000"));
    }

    #[test]
    fn malformed_manifest_line_reported() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(io::MANIFEST_NAME), "{}\n").unwrap();
        assert!(matches!(io::read_manifest(dir.path()), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn conditioning_layout() {
        let direct = Image::from_data(1, 1, 3, vec![0.0, 0.5, 2.0]).unwrap();
        let depth = Image::from_data(1, 1, 1, vec![0.25]).unwrap();
        let normal = Image::from_data(1, 1, 3, vec![0.5, 0.5, 1.0]).unwrap();
        let albedo = Image::from_data(1, 1, 3, vec![1.0, 0.0, 0.5]).unwrap();
        let t = conditioning(&direct, &depth, &normal, &albedo).unwrap();
        assert_eq!(t.data(), &[-1.0, 0.0, 1.0, -0.5, -0.5, -0.5, 0.0, 0.0, 1.0, 1.0, -1.0, 0.0]);
    }
}
