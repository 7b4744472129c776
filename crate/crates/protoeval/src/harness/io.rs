//! On-disk formats: dataset directories, model files, report files.
//!
//! A dataset directory lays out one image, one metadata file, and one
//! mask per present part for every scene:
//!
//! ```text
//! <dir>/config.json
//! <dir>/vocab.json
//! <dir>/classes.json
//! <dir>/scenes/<id>.img          image, PGRD f32, 3 channels
//! <dir>/scenes/<id>.mask.<slot>  part mask, PGRD u8, 1 channel
//! <dir>/scenes/<id>.json         scene metadata
//! ```
//!
//! All JSON writing goes through one helper so bytes are reproducible:
//! maps are ordered, floats round-trip exactly, field order is fixed.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{ImageBuffer, Mask, PgrdGrid};
use crate::metrics::MetricReport;
use crate::protonet::Model;
use crate::scenegen::{
    BackgroundSpec, ClassSpec, DatasetBundle, GenerationConfig, PartAssignment, PartVocabulary,
    Scene,
};

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes =
        serde_json::to_vec_pretty(value).map_err(|e| Error::json(path, e))?;
    bytes.push(b'\n');
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
}

/// Scene facts that do not live in pixel files.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SceneMeta {
    id: String,
    partition: String,
    class_id: usize,
    scene_seed: u64,
    background_seed: u64,
    background: BackgroundSpec,
    provenance: BTreeMap<String, PartAssignment>,
    placement_attempt: u64,
}

fn scene_paths(scenes_dir: &Path, id: &str) -> (PathBuf, PathBuf) {
    (scenes_dir.join(format!("{id}.img")), scenes_dir.join(format!("{id}.json")))
}

fn save_scene(scenes_dir: &Path, scene: &Scene, partition: &str) -> Result<()> {
    let (img_path, meta_path) = scene_paths(scenes_dir, &scene.id);
    scene.image.to_pgrd().save(&img_path)?;
    for (slot, mask) in &scene.part_masks {
        mask.to_pgrd().save(scenes_dir.join(format!("{}.mask.{slot}", scene.id)))?;
    }
    write_json(
        &meta_path,
        &SceneMeta {
            id: scene.id.clone(),
            partition: partition.to_string(),
            class_id: scene.class_id,
            scene_seed: scene.scene_seed,
            background_seed: scene.background_seed,
            background: scene.background.clone(),
            provenance: scene.provenance.clone(),
            placement_attempt: scene.placement_attempt,
        },
    )
}

fn load_scene(scenes_dir: &Path, meta: SceneMeta) -> Result<Scene> {
    let (img_path, _) = scene_paths(scenes_dir, &meta.id);
    let image = ImageBuffer::from_pgrd(&PgrdGrid::load(&img_path)?)?;
    let mut part_masks = BTreeMap::new();
    for (slot, assignment) in &meta.provenance {
        if matches!(assignment, PartAssignment::Variant(_)) {
            let mask_path = scenes_dir.join(format!("{}.mask.{slot}", meta.id));
            let mask = Mask::from_pgrd(&PgrdGrid::load(&mask_path)?)?;
            if mask.rows != image.rows || mask.cols != image.cols {
                return Err(Error::Data(format!(
                    "mask {} is {}x{} but image is {}x{}",
                    mask_path.display(),
                    mask.rows,
                    mask.cols,
                    image.rows,
                    image.cols
                )));
            }
            part_masks.insert(slot.clone(), mask);
        }
    }
    Ok(Scene {
        id: meta.id,
        image,
        part_masks,
        class_id: meta.class_id,
        scene_seed: meta.scene_seed,
        background_seed: meta.background_seed,
        background: meta.background,
        provenance: meta.provenance,
        placement_attempt: meta.placement_attempt,
    })
}

pub fn save_dataset(bundle: &DatasetBundle, dir: &Path) -> Result<()> {
    let scenes_dir = dir.join("scenes");
    fs::create_dir_all(&scenes_dir).map_err(|e| Error::io(&scenes_dir, e))?;
    write_json(&dir.join("config.json"), &bundle.config)?;
    write_json(&dir.join("vocab.json"), &bundle.vocabulary)?;
    write_json(&dir.join("classes.json"), &bundle.classes)?;
    for scene in &bundle.train {
        save_scene(&scenes_dir, scene, "train")?;
    }
    for scene in &bundle.test {
        save_scene(&scenes_dir, scene, "test")?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<DatasetBundle> {
    let config: GenerationConfig = read_json(&dir.join("config.json"))?;
    let vocabulary: PartVocabulary = read_json(&dir.join("vocab.json"))?;
    let classes: Vec<ClassSpec> = read_json(&dir.join("classes.json"))?;
    let scenes_dir = dir.join("scenes");
    let mut meta_paths: Vec<PathBuf> = fs::read_dir(&scenes_dir)
        .map_err(|e| Error::io(&scenes_dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
        .collect();
    meta_paths.sort();

    let mut train = Vec::new();
    let mut test = Vec::new();
    for path in meta_paths {
        let meta: SceneMeta = read_json(&path)?;
        let partition = meta.partition.clone();
        let scene = load_scene(&scenes_dir, meta)?;
        match partition.as_str() {
            "train" => train.push(scene),
            "test" => test.push(scene),
            other => {
                return Err(Error::Data(format!(
                    "scene {} has unknown partition '{other}'",
                    scene.id
                )))
            }
        }
    }
    if train.is_empty() && test.is_empty() {
        return Err(Error::Data(format!(
            "no scenes found under {}",
            scenes_dir.display()
        )));
    }
    Ok(DatasetBundle { train, test, vocabulary, classes, config })
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    write_json(path, model)
}

pub fn load_model(path: &Path) -> Result<Model> {
    let model: Model = read_json(path)?;
    model.validate()?;
    Ok(model)
}

pub fn save_report(report: &MetricReport, path: &Path) -> Result<()> {
    write_json(path, report)
}

pub fn load_report(path: &Path) -> Result<MetricReport> {
    read_json(path)
}
