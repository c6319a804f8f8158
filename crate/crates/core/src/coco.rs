//! COCO instance-annotation ingestion and the per-image object index.
//!
//! The loader accepts the usual `images` / `annotations` / `categories`
//! layout. Segmentations may be polygon lists or run-length objects with
//! either integer-array or compressed-string counts. Fields the loader does
//! not know about are ignored.
//!
//! The `area` declared in the file is kept for round-tripping but never used:
//! every area computation goes through the rasterized mask.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{parse_error, Error, Result};
use crate::mask::{polygons_from_flat, rasterize_polygons, SegmentationMask};
use crate::rle;

pub type CategoryId = u64;
pub type ImageId = u64;
pub type InstanceId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supercategory: Option<String>,
}

/// Category ids and their lowercase canonical names.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CategoryTable {
    entries: Vec<Category>,
    by_name: HashMap<String, CategoryId>,
}

impl CategoryTable {
    /// Validates uniqueness of ids and lowercased names. Entries are kept in
    /// ascending id order.
    pub fn new(mut entries: Vec<Category>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Integrity("category table is empty".into()));
        }
        entries.sort_by_key(|c| c.id);
        let mut by_name = HashMap::new();
        let mut dup_ids = Vec::new();
        let mut dup_names = Vec::new();
        for pair in entries.windows(2) {
            if pair[0].id == pair[1].id {
                dup_ids.push(pair[0].id);
            }
        }
        for c in &mut entries {
            c.name = c.name.trim().to_lowercase();
            if by_name.insert(c.name.clone(), c.id).is_some() {
                dup_names.push(c.name.clone());
            }
        }
        if !dup_ids.is_empty() || !dup_names.is_empty() {
            return Err(Error::Integrity(format!(
                "duplicate category ids {dup_ids:?} / names {dup_names:?}"
            )));
        }
        Ok(CategoryTable { entries, by_name })
    }

    /// The 80 MS-COCO instance categories with their official ids.
    pub fn coco80() -> Self {
        let entries = COCO80
            .iter()
            .map(|&(id, name)| Category {
                id,
                name: name.to_owned(),
                supercategory: None,
            })
            .collect();
        Self::new(entries).expect("builtin table is valid")
    }

    pub fn entries(&self) -> &[Category] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: CategoryId) -> bool {
        self.entries.binary_search_by_key(&id, |c| c.id).is_ok()
    }

    pub fn name(&self, id: CategoryId) -> Option<&str> {
        self.entries
            .binary_search_by_key(&id, |c| c.id)
            .ok()
            .map(|i| self.entries[i].name.as_str())
    }

    /// Case-insensitive lookup.
    pub fn id_of(&self, name: &str) -> Option<CategoryId> {
        self.by_name.get(&name.trim().to_lowercase()).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: ImageId,
    pub width: u32,
    pub height: u32,
    pub file_name: String,
}

/// Run-length counts as stored in the file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RleCounts {
    Uncompressed(Vec<u32>),
    Compressed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Segmentation {
    /// Flat `[x0, y0, x1, y1, ...]` lists, one per polygon.
    Polygons(Vec<Vec<f64>>),
    /// `size` is `[height, width]`.
    Rle { size: [u32; 2], counts: RleCounts },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceAnnotation {
    pub id: InstanceId,
    pub image_id: ImageId,
    pub category_id: CategoryId,
    pub segmentation: Segmentation,
    #[serde(default)]
    pub area: f64,
    #[serde(default)]
    pub bbox: [f64; 4],
}

impl InstanceAnnotation {
    /// Rasterizes this instance on its image's pixel grid.
    pub fn rasterize(&self, width: u32, height: u32) -> Result<SegmentationMask> {
        let seg_err = |reason: String| Error::Segmentation {
            instance_id: self.id,
            reason,
        };
        match &self.segmentation {
            Segmentation::Polygons(flat) => {
                let polys = polygons_from_flat(flat).map_err(|e| seg_err(e.to_string()))?;
                rasterize_polygons(&polys, width, height).map_err(|e| seg_err(e.to_string()))
            }
            Segmentation::Rle { size, counts } => {
                if size[0] != height || size[1] != width {
                    return Err(seg_err(format!(
                        "run-length size {}x{} (h x w) differs from image {height}x{width}",
                        size[0], size[1]
                    )));
                }
                let counts = match counts {
                    RleCounts::Uncompressed(c) => c.clone(),
                    RleCounts::Compressed(s) => {
                        rle::counts_from_string(s).map_err(|e| seg_err(e.to_string()))?
                    }
                };
                rle::decode_rle(&counts, width, height).map_err(|e| seg_err(e.to_string()))
            }
        }
    }
}

/// Counts reported after a successful load.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub categories: usize,
    pub images: usize,
    pub instances: usize,
    pub polygon_instances: usize,
    pub rle_instances: usize,
}

#[derive(Deserialize, Serialize)]
struct CocoFile {
    images: Vec<ImageRecord>,
    annotations: Vec<InstanceAnnotation>,
    categories: Vec<Category>,
}

/// A validated annotation corpus.
#[derive(Debug, Clone)]
pub struct CocoCorpus {
    pub categories: CategoryTable,
    pub images: Vec<ImageRecord>,
    pub instances: Vec<InstanceAnnotation>,
    image_pos: HashMap<ImageId, usize>,
    by_image: BTreeMap<ImageId, Vec<usize>>,
}

impl PartialEq for CocoCorpus {
    fn eq(&self, other: &Self) -> bool {
        self.categories == other.categories
            && self.images == other.images
            && self.instances == other.instances
    }
}

/// Reads and validates a COCO instances file.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<CocoCorpus> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    CocoCorpus::from_json(&text, path)
}

impl CocoCorpus {
    /// Parses `text`; `origin` only labels errors.
    pub fn from_json(text: &str, origin: impl AsRef<Path>) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: CocoFile =
            serde_path_to_error::deserialize(de).map_err(|e| parse_error(origin.as_ref(), text, e))?;
        Self::new(
            CategoryTable::new(file.categories)?,
            file.images,
            file.annotations,
        )
    }

    /// Validates referential integrity and that every instance rasterizes to
    /// a nonempty mask inside its image.
    pub fn new(
        categories: CategoryTable,
        images: Vec<ImageRecord>,
        instances: Vec<InstanceAnnotation>,
    ) -> Result<Self> {
        let mut image_pos = HashMap::with_capacity(images.len());
        let mut dup_images = Vec::new();
        let mut bad_dims = Vec::new();
        for (i, img) in images.iter().enumerate() {
            if image_pos.insert(img.id, i).is_some() {
                dup_images.push(img.id);
            }
            if img.width == 0 || img.height == 0 {
                bad_dims.push(img.id);
            }
        }
        if !dup_images.is_empty() {
            return Err(Error::Integrity(format!("duplicate image ids {dup_images:?}")));
        }
        if !bad_dims.is_empty() {
            return Err(Error::Integrity(format!("images with zero width or height {bad_dims:?}")));
        }

        let mut seen = HashSet::with_capacity(instances.len());
        let mut dup_instances = Vec::new();
        let mut unknown_category = Vec::new();
        let mut unknown_image = Vec::new();
        for inst in &instances {
            if !seen.insert(inst.id) {
                dup_instances.push(inst.id);
            }
            if !categories.contains(inst.category_id) {
                unknown_category.push(inst.id);
            }
            if !image_pos.contains_key(&inst.image_id) {
                unknown_image.push(inst.id);
            }
        }
        if !dup_instances.is_empty() || !unknown_category.is_empty() || !unknown_image.is_empty() {
            let mut parts = Vec::new();
            if !dup_instances.is_empty() {
                parts.push(format!("duplicate instance ids {dup_instances:?}"));
            }
            if !unknown_category.is_empty() {
                parts.push(format!("instances with unknown category {unknown_category:?}"));
            }
            if !unknown_image.is_empty() {
                parts.push(format!("instances with unknown image {unknown_image:?}"));
            }
            return Err(Error::Integrity(parts.join("; ")));
        }

        // Every instance must produce pixels.
        let bad: Vec<Error> = instances
            .par_iter()
            .filter_map(|inst| {
                let img = &images[image_pos[&inst.image_id]];
                match inst.rasterize(img.width, img.height) {
                    Ok(m) if m.is_empty() => Some(Error::Segmentation {
                        instance_id: inst.id,
                        reason: "segmentation is empty within image bounds".into(),
                    }),
                    Ok(_) => None,
                    Err(e) => Some(e),
                }
            })
            .collect();
        if let Some(first) = bad.into_iter().next() {
            return Err(first);
        }

        let mut by_image: BTreeMap<ImageId, Vec<usize>> = BTreeMap::new();
        for (i, inst) in instances.iter().enumerate() {
            by_image.entry(inst.image_id).or_default().push(i);
        }
        for list in by_image.values_mut() {
            list.sort_by_key(|&i| instances[i].id);
        }

        Ok(CocoCorpus {
            categories,
            images,
            instances,
            image_pos,
            by_image,
        })
    }

    pub fn summary(&self) -> LoadSummary {
        let polygon_instances = self
            .instances
            .iter()
            .filter(|i| matches!(i.segmentation, Segmentation::Polygons(_)))
            .count();
        LoadSummary {
            categories: self.categories.len(),
            images: self.images.len(),
            instances: self.instances.len(),
            polygon_instances,
            rle_instances: self.instances.len() - polygon_instances,
        }
    }

    pub fn image(&self, id: ImageId) -> Option<&ImageRecord> {
        self.image_pos.get(&id).map(|&i| &self.images[i])
    }

    /// Instances of `image_id`, ascending by instance id.
    pub fn instances_of(&self, image_id: ImageId) -> impl Iterator<Item = &InstanceAnnotation> {
        self.by_image
            .get(&image_id)
            .into_iter()
            .flatten()
            .map(|&i| &self.instances[i])
    }

    /// Rasterized masks for every instance of one image.
    pub fn instance_masks(&self, image_id: ImageId) -> Result<BTreeMap<InstanceId, SegmentationMask>> {
        let img = self
            .image(image_id)
            .ok_or(Error::MissingMasks { image_id })?;
        self.instances_of(image_id)
            .map(|inst| Ok((inst.id, inst.rasterize(img.width, img.height)?)))
            .collect()
    }

    /// Serializes back to the COCO layout.
    pub fn to_json(&self) -> String {
        let file = CocoFile {
            images: self.images.clone(),
            annotations: self.instances.clone(),
            categories: self.categories.entries().to_vec(),
        };
        serde_json::to_string_pretty(&file).expect("corpus serializes")
    }
}

/// Categories present in one image and its instances grouped by category.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImageObjects {
    pub categories: BTreeSet<CategoryId>,
    pub instances: BTreeMap<CategoryId, Vec<InstanceId>>,
}

/// `O_I` for every image of a corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ImageObjectIndex {
    by_image: BTreeMap<ImageId, ImageObjects>,
}

impl ImageObjectIndex {
    pub fn get(&self, image_id: ImageId) -> Option<&ImageObjects> {
        self.by_image.get(&image_id)
    }

    /// Categories present in `image_id`; empty for unknown images.
    pub fn categories(&self, image_id: ImageId) -> BTreeSet<CategoryId> {
        self.by_image
            .get(&image_id)
            .map(|o| o.categories.clone())
            .unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ImageId, &ImageObjects)> {
        self.by_image.iter()
    }

    pub fn len(&self) -> usize {
        self.by_image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_image.is_empty()
    }
}

/// Builds the per-image object index. Images without instances map to an
/// empty set; instance lists are sorted by id.
pub fn build_object_index(
    images: &[ImageRecord],
    instances: &[InstanceAnnotation],
) -> ImageObjectIndex {
    let mut by_image: BTreeMap<ImageId, ImageObjects> = images
        .iter()
        .map(|img| (img.id, ImageObjects::default()))
        .collect();
    for inst in instances {
        let entry = by_image.entry(inst.image_id).or_default();
        entry.categories.insert(inst.category_id);
        entry
            .instances
            .entry(inst.category_id)
            .or_default()
            .push(inst.id);
    }
    for objects in by_image.values_mut() {
        for ids in objects.instances.values_mut() {
            ids.sort_unstable();
        }
    }
    ImageObjectIndex { by_image }
}

const COCO80: [(CategoryId, &str); 80] = [
    (1, "person"),
    (2, "bicycle"),
    (3, "car"),
    (4, "motorcycle"),
    (5, "airplane"),
    (6, "bus"),
    (7, "train"),
    (8, "truck"),
    (9, "boat"),
    (10, "traffic light"),
    (11, "fire hydrant"),
    (13, "stop sign"),
    (14, "parking meter"),
    (15, "bench"),
    (16, "bird"),
    (17, "cat"),
    (18, "dog"),
    (19, "horse"),
    (20, "sheep"),
    (21, "cow"),
    (22, "elephant"),
    (23, "bear"),
    (24, "zebra"),
    (25, "giraffe"),
    (27, "backpack"),
    (28, "umbrella"),
    (31, "handbag"),
    (32, "tie"),
    (33, "suitcase"),
    (34, "frisbee"),
    (35, "skis"),
    (36, "snowboard"),
    (37, "sports ball"),
    (38, "kite"),
    (39, "baseball bat"),
    (40, "baseball glove"),
    (41, "skateboard"),
    (42, "surfboard"),
    (43, "tennis racket"),
    (44, "bottle"),
    (46, "wine glass"),
    (47, "cup"),
    (48, "fork"),
    (49, "knife"),
    (50, "spoon"),
    (51, "bowl"),
    (52, "banana"),
    (53, "apple"),
    (54, "sandwich"),
    (55, "orange"),
    (56, "broccoli"),
    (57, "carrot"),
    (58, "hot dog"),
    (59, "pizza"),
    (60, "donut"),
    (61, "cake"),
    (62, "chair"),
    (63, "couch"),
    (64, "potted plant"),
    (65, "bed"),
    (67, "dining table"),
    (70, "toilet"),
    (72, "tv"),
    (73, "laptop"),
    (74, "mouse"),
    (75, "remote"),
    (76, "keyboard"),
    (77, "cell phone"),
    (78, "microwave"),
    (79, "oven"),
    (80, "toaster"),
    (81, "sink"),
    (82, "refrigerator"),
    (84, "book"),
    (85, "clock"),
    (86, "vase"),
    (87, "scissors"),
    (88, "teddy bear"),
    (89, "hair drier"),
    (90, "toothbrush"),
];
