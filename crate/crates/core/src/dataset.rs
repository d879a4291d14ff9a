//! On-disk dataset formats.
//!
//! A dataset directory holds:
//!
//! * `manifest.csv` with header
//!   `index,intensity,occupancy,labels[,<parameter names>...]`. `intensity`
//!   and `labels` are paths (relative to the directory) of binary PGM files;
//!   `occupancy` is a path prefix, with one PGM per class at
//!   `<prefix>_<class name>.pgm`. Empty fields mean "not provided".
//! * `features.csv` (optional) with header
//!   `sample,width,height,channels,v0,...,v{n-1}`, one exact feature vector
//!   per row in the channel-major order of [`crate::renderer`].
//!
//! PGM files are `P5` with maxval 255. Intensity is stored as
//! `round(255 * value)`, occupancy as 0 or 255, and labels as the raw class
//! id with 255 for background. When `features.csv` is present it is the
//! source of feature vectors; otherwise they are rebuilt from the PGMs.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::renderer::{unflatten_features, FeatureImage, LabelImage, CHANNELS};
use crate::scene::ObjectClass;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const FEATURES_FILE: &str = "features.csv";

/// A grayscale 8-bit image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn write_pgm(path: &Path, pgm: &Pgm) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", pgm.width, pgm.height).into_bytes();
    bytes.extend_from_slice(&pgm.pixels);
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes).map_err(|m| Error::format(path, m))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<Pgm, String> {
    let mut pos = 0;
    let mut tokens = Vec::new();
    while tokens.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    if tokens[0] != "P5" {
        return Err(format!("expected P5 magic, found {:?}", tokens[0]));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|e| format!("bad header number {s:?}: {e}"));
    let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
    if maxval != 255 {
        return Err(format!("only maxval 255 is supported, found {maxval}"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(format!("raster has {} bytes, expected {n}", bytes.len().saturating_sub(pos)));
    }
    Ok(Pgm {
        width,
        height,
        pixels: bytes[pos..pos + n].to_vec(),
    })
}

pub fn quantize(value: f64) -> u8 {
    (value.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// One dataset entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetItem {
    pub features: FeatureImage,
    pub labels: Option<LabelImage>,
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub items: Vec<DatasetItem>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn images(&self) -> Vec<FeatureImage> {
        self.items.iter().map(|i| i.features.clone()).collect()
    }

    pub fn labels(&self) -> Vec<LabelImage> {
        self.items.iter().filter_map(|i| i.labels.clone()).collect()
    }

    pub fn feature_vectors(&self) -> Vec<Vec<f64>> {
        self.items.iter().map(|i| i.features.data.clone()).collect()
    }
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Writes `dataset` under `dir` in both the PGM and CSV forms.
/// `parameter_names` labels the theta columns of the manifest.
pub fn write_dataset(dir: &Path, dataset: &Dataset, parameter_names: &[String]) -> Result<()> {
    for sub in ["images", "labels"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut manifest = create(&manifest_path)?;
    let mut header = String::from("index,intensity,occupancy,labels");
    for name in parameter_names {
        header.push(',');
        header.push_str(name);
    }
    let io = |e| Error::io(&manifest_path, e);
    writeln!(manifest, "{header}").map_err(io)?;

    let features_path = dir.join(FEATURES_FILE);
    let mut features = create(&features_path)?;
    let feature_len = dataset.items.first().map_or(0, |i| i.features.data.len());
    let mut fheader = String::from("sample,width,height,channels");
    for i in 0..feature_len {
        fheader.push_str(&format!(",v{i}"));
    }
    writeln!(features, "{fheader}").map_err(|e| Error::io(&features_path, e))?;

    for (index, item) in dataset.items.iter().enumerate() {
        let img = &item.features;
        let stem = format!("{index:05}");
        let intensity_rel = format!("images/{stem}_intensity.pgm");
        write_pgm(
            &dir.join(&intensity_rel),
            &Pgm {
                width: img.width,
                height: img.height,
                pixels: img.intensity().iter().map(|v| quantize(*v)).collect(),
            },
        )?;
        let occupancy_rel = format!("images/{stem}_occ");
        for class in ObjectClass::ALL {
            write_pgm(
                &dir.join(format!("{occupancy_rel}_{}.pgm", class.name())),
                &Pgm {
                    width: img.width,
                    height: img.height,
                    pixels: img.occupancy(class).iter().map(|v| if *v > 0.5 { 255 } else { 0 }).collect(),
                },
            )?;
        }
        let labels_rel = match &item.labels {
            Some(l) => {
                let rel = format!("labels/{stem}.pgm");
                write_pgm(
                    &dir.join(&rel),
                    &Pgm {
                        width: l.width,
                        height: l.height,
                        pixels: l.labels.clone(),
                    },
                )?;
                rel
            }
            None => String::new(),
        };
        let mut row = format!("{index},{intensity_rel},{occupancy_rel},{labels_rel}");
        if let Some(theta) = &item.theta {
            for v in theta {
                row.push_str(&format!(",{v}"));
            }
        }
        writeln!(manifest, "{row}").map_err(io)?;

        let mut frow = format!("{index},{},{},{CHANNELS}", img.width, img.height);
        for v in &img.data {
            frow.push_str(&format!(",{v}"));
        }
        writeln!(features, "{frow}").map_err(|e| Error::io(&features_path, e))?;
    }
    manifest.flush().map_err(io)?;
    features.flush().map_err(|e| Error::io(&features_path, e))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(path, e))
}

fn read_features_csv(path: &Path) -> Result<Vec<FeatureImage>> {
    let lines = read_lines(path)?;
    let mut out = Vec::new();
    for (n, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(Error::format(path, format!("line {}: too few fields", n + 1)));
        }
        let int = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))
        };
        let (width, height, channels) = (int(fields[1])?, int(fields[2])?, int(fields[3])?);
        if channels != CHANNELS {
            return Err(Error::format(path, format!("line {}: expected {CHANNELS} channels", n + 1)));
        }
        let values = fields[4..]
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        out.push(unflatten_features(&values, width, height).map_err(|e| Error::format(path, e.to_string()))?);
    }
    Ok(out)
}

struct ManifestRow {
    intensity: String,
    occupancy: String,
    labels: String,
    theta: Vec<f64>,
}

fn read_manifest(path: &Path) -> Result<Vec<ManifestRow>> {
    let lines = read_lines(path)?;
    let header = lines.first().ok_or_else(|| Error::format(path, "empty manifest"))?;
    if !header.starts_with("index,intensity,occupancy,labels") {
        return Err(Error::format(path, "unexpected manifest header"));
    }
    let mut rows = Vec::new();
    for (n, line) in lines.iter().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 4 {
            return Err(Error::format(path, format!("line {}: too few fields", n + 1)));
        }
        let theta = fields[4..]
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::format(path, format!("line {}: {e}", n + 1)))?;
        rows.push(ManifestRow {
            intensity: fields[1].trim().to_string(),
            occupancy: fields[2].trim().to_string(),
            labels: fields[3].trim().to_string(),
            theta,
        });
    }
    Ok(rows)
}

fn image_from_pgms(dir: &Path, row: &ManifestRow) -> Result<FeatureImage> {
    let path = dir.join(&row.intensity);
    let intensity = read_pgm(&path)?;
    let (w, h) = (intensity.width, intensity.height);
    let mut img = FeatureImage::zeros(w, h);
    for (slot, p) in img.data.iter_mut().zip(&intensity.pixels) {
        *slot = *p as f64 / 255.0;
    }
    if !row.occupancy.is_empty() {
        for class in ObjectClass::ALL {
            let path = dir.join(format!("{}_{}.pgm", row.occupancy, class.name()));
            let occ = read_pgm(&path)?;
            if (occ.width, occ.height) != (w, h) {
                return Err(Error::format(&path, "occupancy size differs from intensity"));
            }
            let base = (1 + class.id() as usize) * w * h;
            for (i, p) in occ.pixels.iter().enumerate() {
                img.data[base + i] = if *p > 127 { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(img)
}

/// Loads a dataset directory written by [`write_dataset`] or assembled by
/// hand in the same format.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let features_path = dir.join(FEATURES_FILE);
    let rows = if manifest_path.exists() {
        Some(read_manifest(&manifest_path)?)
    } else {
        None
    };
    let csv_images = if features_path.exists() {
        Some(read_features_csv(&features_path)?)
    } else {
        None
    };

    let items = match (rows, csv_images) {
        (None, None) => {
            return Err(Error::io(
                &manifest_path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "dataset has neither manifest.csv nor features.csv"),
            ))
        }
        (None, Some(images)) => images
            .into_iter()
            .map(|features| DatasetItem {
                features,
                labels: None,
                theta: None,
            })
            .collect(),
        (Some(rows), csv) => {
            if let Some(images) = &csv {
                if images.len() != rows.len() {
                    return Err(Error::format(
                        &features_path,
                        format!("{} feature rows but {} manifest rows", images.len(), rows.len()),
                    ));
                }
            }
            let mut items = Vec::with_capacity(rows.len());
            for (i, row) in rows.iter().enumerate() {
                let features = match &csv {
                    Some(images) => images[i].clone(),
                    None => image_from_pgms(dir, row)?,
                };
                let labels = if row.labels.is_empty() {
                    None
                } else {
                    let path = dir.join(&row.labels);
                    let pgm = read_pgm(&path)?;
                    if (pgm.width, pgm.height) != (features.width, features.height) {
                        return Err(Error::format(&path, "label size differs from features"));
                    }
                    Some(LabelImage {
                        width: pgm.width,
                        height: pgm.height,
                        labels: pgm.pixels,
                    })
                };
                items.push(DatasetItem {
                    features,
                    labels,
                    theta: (!row.theta.is_empty()).then(|| row.theta.clone()),
                });
            }
            items
        }
    };
    Ok(Dataset { items })
}

/// Paths are resolved relative to `base` unless absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_item(seed: u8) -> DatasetItem {
        let mut features = FeatureImage::zeros(3, 2);
        for i in 0..6 {
            features.data[i] = ((i as u8 * 40 + seed) % 255) as f64 / 255.0;
        }
        features.data[6 + 2] = 1.0;
        features.data[6 * 5 + 4] = 1.0;
        DatasetItem {
            labels: Some(LabelImage {
                width: 3,
                height: 2,
                labels: vec![0, 255, 2, 255, 4, 255],
            }),
            features,
            theta: Some(vec![0.5, 1.25]),
        }
    }

    #[test]
    fn pgm_round_trip_and_comments() {
        let dir = tempfile::tempdir().unwrap();
        let pgm = Pgm {
            width: 3,
            height: 2,
            pixels: vec![0, 10, 255, 32, 9, 13],
        };
        let path = dir.path().join("a.pgm");
        write_pgm(&path, &pgm).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), pgm);
        assert!(fs::read(&path).unwrap().starts_with(b"P5\n3 2\n255\n"));

        let mut commented = b"P5\n# made by hand\n3 2\n255\n".to_vec();
        commented.extend_from_slice(&pgm.pixels);
        assert_eq!(parse_pgm(&commented).unwrap(), pgm);
        assert!(parse_pgm(b"P2\n1 1\n255\n0").is_err());
        assert!(parse_pgm(b"P5\n4 4\n255\n\x00").is_err());
    }

    #[test]
    fn dataset_round_trip_via_csv_and_pgm() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset {
            items: vec![sample_item(0), sample_item(7)],
        };
        let names = vec!["a".to_string(), "b".to_string()];
        write_dataset(dir.path(), &ds, &names).unwrap();
        assert_eq!(load_dataset(dir.path()).unwrap(), ds);

        // Without the CSV the features come back quantized from the PGMs.
        fs::remove_file(dir.path().join(FEATURES_FILE)).unwrap();
        let back = load_dataset(dir.path()).unwrap();
        for (a, b) in back.items.iter().zip(&ds.items) {
            for (x, y) in a.features.data.iter().zip(&b.features.data) {
                assert!((x - y).abs() <= 0.5 / 255.0 + 1e-12);
            }
            assert_eq!(a.labels, b.labels);
        }
    }

    #[test]
    fn missing_dataset_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset(&dir.path().join("nope")).unwrap_err();
        assert!(err.to_string().contains("nope"));
    }
}
