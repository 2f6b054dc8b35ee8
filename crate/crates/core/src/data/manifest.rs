use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::GroundTruthBox;
use crate::graph::{BBox, DEFAULT_CLASS_NAMES};

const SLACK: f64 = 1e-6;
const CLASSES_TAG: &str = "#classes";

/// Normalized center-size box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoxAnnotation {
    pub class_id: usize,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoxAnnotation {
    fn in_bounds(&self) -> bool {
        let ok = |c: f64, s: f64| s > 0.0 && c - s / 2.0 >= -SLACK && c + s / 2.0 <= 1.0 + SLACK;
        [self.cx, self.cy, self.w, self.h].iter().all(|v| v.is_finite()) && ok(self.cx, self.w) && ok(self.cy, self.h)
    }

    /// Corner box in pixels of a `width` x `height` image.
    pub fn to_pixels(&self, width: usize, height: usize) -> BBox {
        let (w, h) = (width as f64, height as f64);
        BBox::new(
            ((self.cx - self.w / 2.0) * w) as f32,
            ((self.cy - self.h / 2.0) * h) as f32,
            ((self.cx + self.w / 2.0) * w) as f32,
            ((self.cy + self.h / 2.0) * h) as f32,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnnotatedImage {
    pub image_path: String,
    pub width: usize,
    pub height: usize,
    pub boxes: Vec<BoxAnnotation>,
}

impl AnnotatedImage {
    pub fn ground_truth(&self) -> Vec<GroundTruthBox> {
        self.boxes
            .iter()
            .map(|b| GroundTruthBox { class_id: b.class_id, bbox: b.to_pixels(self.width, self.height) })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub images: Vec<AnnotatedImage>,
}

impl Dataset {
    pub fn new(class_names: Vec<String>, images: Vec<AnnotatedImage>) -> Result<Self> {
        let ds = Self { class_names, images };
        ds.validate("<memory>")?;
        Ok(ds)
    }

    pub fn num_boxes(&self) -> usize {
        self.images.iter().map(|i| i.boxes.len()).sum()
    }

    fn validate(&self, path: &str) -> Result<()> {
        let err = |msg: String| Error::Manifest { path: path.to_string(), line: 0, msg };
        if self.class_names.is_empty() {
            return Err(err("no class names".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for n in &self.class_names {
            if n.is_empty() || n.contains(['\t', '\n']) || !seen.insert(n) {
                return Err(err(format!("class name {n:?} is empty, duplicated or contains tabs")));
            }
        }
        for img in &self.images {
            check_image(img, self.class_names.len()).map_err(err)?;
        }
        Ok(())
    }
}

fn check_image(img: &AnnotatedImage, k: usize) -> std::result::Result<(), String> {
    if img.image_path.is_empty() || img.image_path.contains(['\t', '\n']) {
        return Err(format!("bad image path {:?}", img.image_path));
    }
    if img.width == 0 || img.height == 0 {
        return Err(format!("{}: image size must be positive", img.image_path));
    }
    for (i, b) in img.boxes.iter().enumerate() {
        if b.class_id >= k {
            return Err(format!("{} box {i}: class {} out of range for {k} classes", img.image_path, b.class_id));
        }
        if !b.in_bounds() {
            return Err(format!("{} box {i}: outside the unit square", img.image_path));
        }
    }
    Ok(())
}

fn parse_box(s: &str) -> std::result::Result<BoxAnnotation, String> {
    let f: Vec<&str> = s.split(':').collect();
    if f.len() != 5 {
        return Err(format!("box {s:?} must be class:cx:cy:w:h"));
    }
    let class_id = f[0].parse::<usize>().map_err(|e| format!("box class {:?}: {e}", f[0]))?;
    let num = |v: &str| v.parse::<f64>().map_err(|e| format!("box value {v:?}: {e}"));
    Ok(BoxAnnotation { class_id, cx: num(f[1])?, cy: num(f[2])?, w: num(f[3])?, h: num(f[4])? })
}

/// Parses manifest text. `path` only labels errors.
pub fn parse_manifest(text: &str, path: &str) -> Result<Dataset> {
    let err = |line: usize, msg: String| Error::Manifest { path: path.to_string(), line, msg };
    let mut class_names: Option<Vec<String>> = None;
    let mut images = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(CLASSES_TAG) {
            if !images.is_empty() || class_names.is_some() {
                return Err(err(ln, "class header must come first".into()));
            }
            let names: Vec<String> = rest.split('\t').skip(1).map(str::to_string).collect();
            if !rest.starts_with('\t') || names.is_empty() {
                return Err(err(ln, "class header must list tab-separated names".into()));
            }
            class_names = Some(names);
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        if f.len() != 4 {
            return Err(err(ln, format!("expected 4 tab-separated fields, got {}", f.len())));
        }
        let dim = |s: &str, what: &str| s.parse::<usize>().map_err(|e| err(ln, format!("{what} {s:?}: {e}")));
        let boxes = if f[3].is_empty() {
            Vec::new()
        } else {
            f[3].split(',').map(parse_box).collect::<std::result::Result<_, _>>().map_err(|m| err(ln, m))?
        };
        let img = AnnotatedImage {
            image_path: f[0].to_string(),
            width: dim(f[1], "width")?,
            height: dim(f[2], "height")?,
            boxes,
        };
        images.push((ln, img));
    }
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let class_names = class_names.unwrap_or_else(|| DEFAULT_CLASS_NAMES.iter().map(|s| s.to_string()).collect());
    let ds = Dataset { class_names, images: Vec::new() };
    ds.validate(path)?;
    let k = ds.class_names.len();
    let mut out = Vec::with_capacity(images.len());
    for (ln, img) in images {
        check_image(&img, k).map_err(|m| err(ln, m))?;
        out.push(img);
    }
    Ok(Dataset { images: out, ..ds })
}

pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    parse_manifest(&text, &path.display().to_string())
}

/// Canonical text: class header, then one line per image with boxes at six
/// decimals.
pub fn render_manifest(ds: &Dataset) -> String {
    let mut out = String::new();
    writeln!(out, "{CLASSES_TAG}\t{}", ds.class_names.join("\t")).expect("string write");
    for img in &ds.images {
        let boxes: Vec<String> = img
            .boxes
            .iter()
            .map(|b| format!("{}:{:.6}:{:.6}:{:.6}:{:.6}", b.class_id, b.cx, b.cy, b.w, b.h))
            .collect();
        writeln!(out, "{}\t{}\t{}\t{}", img.image_path, img.width, img.height, boxes.join(",")).expect("string write");
    }
    out
}

pub fn save_manifest(ds: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, render_manifest(ds))?;
    Ok(())
}

/// Per-class box counts and the number of images containing each class,
/// in class-name order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassDistribution {
    pub class_names: Vec<String>,
    pub box_counts: Vec<usize>,
    pub image_counts: Vec<usize>,
}

impl ClassDistribution {
    pub fn total_boxes(&self) -> usize {
        self.box_counts.iter().sum()
    }

    pub fn render(&self) -> String {
        let width = self.class_names.iter().map(String::len).max().unwrap_or(0).max(5);
        let mut out = format!("{:<width$}  {:>7}  {:>7}\n", "class", "boxes", "images");
        for ((n, b), i) in self.class_names.iter().zip(&self.box_counts).zip(&self.image_counts) {
            writeln!(out, "{n:<width$}  {b:>7}  {i:>7}").expect("string write");
        }
        writeln!(out, "{:<width$}  {:>7}", "total", self.total_boxes()).expect("string write");
        out
    }
}

pub fn class_distribution(ds: &Dataset) -> ClassDistribution {
    let k = ds.class_names.len();
    let mut box_counts = vec![0; k];
    let mut image_counts = vec![0; k];
    for img in &ds.images {
        let mut present = vec![false; k];
        for b in &img.boxes {
            box_counts[b.class_id] += 1;
            present[b.class_id] = true;
        }
        for (c, p) in present.into_iter().enumerate() {
            image_counts[c] += p as usize;
        }
    }
    ClassDistribution { class_names: ds.class_names.clone(), box_counts, image_counts }
}
