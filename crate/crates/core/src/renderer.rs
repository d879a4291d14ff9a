//! Deterministic proxy renderer.
//!
//! The view is an orthographic window centred on the region. Camera height
//! and field of view set its size (`view_scale * height * tan(fov / 2)`
//! meters of half extent); the pitch tilts the optical axis, which puts the
//! camera `height * tan(pitch)` meters behind the window centre along -y.
//! Each grid cell samples the world at its centre:
//!
//! * occupancy channel `c` is 1 when any object of class `c` covers the cell;
//! * the label is the tallest covering object (painter's order on height);
//! * intensity is `clamp(light / 6 * shading * exp(-scatter_density * depth), 0, 1)`,
//!   where shading combines sun elevation (an `ambient` floor plus a direct
//!   `sin(elevation)` share), the visible surface's albedo and facing
//!   relative to the sun azimuth, colour-temperature tint and cast shadows,
//!   and `depth` is the slant distance from the camera scaled by
//!   `(0.5 + scatter_coefficient) / depth_scale`.
//!
//! Cells that fall outside the modelled region see nothing: zero intensity,
//! no occupancy, background label. A high camera therefore shows the edge of
//! the world, which is what makes its height visible in the features.
//!
//! Feature vectors are channel-major: the intensity plane first, then the
//! seven occupancy planes in class-id order, each plane row-major.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scene::{ObjectClass, ObjectMark, Region, SceneLayout, SceneParameters};

pub const CHANNELS: usize = 1 + ObjectClass::COUNT;

/// Surfaces lower than this receive cast shadows.
const FLAT_HEIGHT: f64 = 0.5;
const SHADOW_FACTOR: f64 = 0.4;
const MAX_SHADOW_LENGTH: f64 = 25.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    /// Ground half extent per unit of `camera_height * tan(fov / 2)`.
    pub view_scale: f64,
    /// Meters of slant distance per unit of depth proxy.
    pub depth_scale: f64,
    /// Share of sunlight that does not depend on sun elevation.
    pub ambient: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            width: 32,
            height: 32,
            view_scale: 30.0,
            depth_scale: 10.0,
            ambient: 0.8,
        }
    }
}

impl RenderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config(format!(
                "render grid must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if !(self.view_scale > 0.0 && self.depth_scale > 0.0) {
            return Err(Error::Config("render scales must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(Error::Config(format!("ambient must lie in [0, 1], got {}", self.ambient)));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.width * self.height
    }

    pub fn feature_len(&self) -> usize {
        self.cells() * CHANNELS
    }
}

/// Intensity plane plus per-class binary occupancy planes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImage {
    pub width: usize,
    pub height: usize,
    /// `CHANNELS` planes of `width * height` values, channel-major.
    pub data: Vec<f64>,
}

impl FeatureImage {
    pub fn zeros(width: usize, height: usize) -> Self {
        FeatureImage {
            width,
            height,
            data: vec![0.0; width * height * CHANNELS],
        }
    }

    fn plane_len(&self) -> usize {
        self.width * self.height
    }

    pub fn intensity(&self) -> &[f64] {
        &self.data[..self.plane_len()]
    }

    pub fn occupancy(&self, class: ObjectClass) -> &[f64] {
        let n = self.plane_len();
        let c = 1 + class.id() as usize;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn intensity_at(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn occupied(&self, class: ObjectClass, row: usize, col: usize) -> bool {
        self.occupancy(class)[row * self.width + col] > 0.5
    }
}

/// Per-cell class id, or [`LabelImage::BACKGROUND`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelImage {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u8>,
}

impl LabelImage {
    pub const BACKGROUND: u8 = 255;

    pub fn at(&self, row: usize, col: usize) -> u8 {
        self.labels[row * self.width + col]
    }
}

/// Ground-plane window seen by the camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewWindow {
    pub camera: (f64, f64),
    pub center: (f64, f64),
    pub half_extent: f64,
}

impl ViewWindow {
    pub fn new(theta: &SceneParameters, region: &Region, cfg: &RenderConfig) -> Self {
        let center = region.center();
        ViewWindow {
            camera: (center.0, center.1 - theta.camera_height * theta.camera_pitch.tan()),
            center,
            half_extent: cfg.view_scale * theta.camera_height * (0.5 * theta.camera_fov).tan(),
        }
    }

    /// World point sampled by cell `(row, col)`.
    pub fn cell_center(&self, row: usize, col: usize, cfg: &RenderConfig) -> (f64, f64) {
        let size = 2.0 * self.half_extent;
        (
            self.center.0 - self.half_extent + (col as f64 + 0.5) * size / cfg.width as f64,
            self.center.1 - self.half_extent + (row as f64 + 0.5) * size / cfg.height as f64,
        )
    }
}

struct PreparedMark {
    mark: ObjectMark,
    half: (f64, f64),
    sin_cos: (f64, f64),
    radius: f64,
}

impl PreparedMark {
    fn new(mark: &ObjectMark) -> Self {
        PreparedMark {
            mark: *mark,
            half: mark.half_extents(),
            sin_cos: mark.orientation.sin_cos(),
            radius: mark.bounding_radius(),
        }
    }

    fn contains(&self, p: (f64, f64)) -> bool {
        let dx = p.0 - self.mark.position.0;
        let dy = p.1 - self.mark.position.1;
        if dx.abs() > self.radius || dy.abs() > self.radius {
            return false;
        }
        let (s, c) = self.sin_cos;
        let u = c * dx + s * dy;
        let v = -s * dx + c * dy;
        u.abs() <= self.half.0 && v.abs() <= self.half.1
    }
}

fn class_tint(class: ObjectClass, color_temperature: f64) -> f64 {
    let warmth = match class {
        ObjectClass::Vegetation | ObjectClass::Sky => -1.0,
        _ => 1.0,
    };
    1.0 + 0.3 * (color_temperature - 0.5) * warmth
}

/// Renders features and labels in one pass.
pub fn render_pair(
    theta: &SceneParameters,
    layout: &SceneLayout,
    region: &Region,
    cfg: &RenderConfig,
) -> (FeatureImage, LabelImage) {
    let window = ViewWindow::new(theta, region, cfg);
    // Stable sort: ties keep layout order, later objects paint over earlier.
    let mut marks: Vec<PreparedMark> = layout.objects.iter().map(PreparedMark::new).collect();
    marks.sort_by(|a, b| a.mark.class.height().total_cmp(&b.mark.class.height()));

    let cells = cfg.cells();
    let mut image = FeatureImage::zeros(cfg.width, cfg.height);
    let mut labels = LabelImage {
        width: cfg.width,
        height: cfg.height,
        labels: vec![LabelImage::BACKGROUND; cells],
    };

    let light = theta.light_intensity / 6.0;
    let sun = cfg.ambient + (1.0 - cfg.ambient) * theta.sun_elevation.sin().max(0.0);
    let shadow_len = if theta.sun_elevation.tan() > 1.0 / MAX_SHADOW_LENGTH {
        1.0 / theta.sun_elevation.tan()
    } else {
        MAX_SHADOW_LENGTH
    };
    let sun_dir = (theta.sun_azimuth.cos(), theta.sun_azimuth.sin());
    let extinction = theta.scatter_density * (0.5 + theta.scatter_coefficient) / cfg.depth_scale;

    for row in 0..cfg.height {
        for col in 0..cfg.width {
            let idx = row * cfg.width + col;
            let p = window.cell_center(row, col, cfg);
            if !region.contains(p) {
                continue;
            }
            let mut top: Option<&PreparedMark> = None;
            for m in &marks {
                if m.contains(p) {
                    image.data[(1 + m.mark.class.id() as usize) * cells + idx] = 1.0;
                    top = Some(m);
                }
            }

            let mut shading = match top {
                Some(m) => {
                    let facing = 0.75 + 0.25 * (theta.sun_azimuth - m.mark.orientation).cos();
                    m.mark.class.albedo() * facing * class_tint(m.mark.class, theta.color_temperature)
                }
                None => 1.0,
            };
            let surface_height = top.map_or(0.0, |m| m.mark.class.height());
            if surface_height < FLAT_HEIGHT {
                let shadowed = marks.iter().any(|m| {
                    let h = m.mark.class.height();
                    h >= FLAT_HEIGHT
                        && [0.25, 0.5, 0.75, 1.0].iter().any(|t| {
                            let reach = (t * h * shadow_len).min(MAX_SHADOW_LENGTH);
                            m.contains((p.0 + sun_dir.0 * reach, p.1 + sun_dir.1 * reach))
                        })
                });
                if shadowed {
                    shading *= SHADOW_FACTOR;
                }
            }

            let dx = p.0 - window.camera.0;
            let dy = p.1 - window.camera.1;
            let slant = (theta.camera_height.powi(2) + dx * dx + dy * dy).sqrt();
            let value = light * sun * shading * (-extinction * slant).exp();
            image.data[idx] = value.clamp(0.0, 1.0);

            if let Some(m) = top {
                labels.labels[idx] = m.mark.class.id();
            }
        }
    }
    (image, labels)
}

pub fn render(
    theta: &SceneParameters,
    layout: &SceneLayout,
    region: &Region,
    cfg: &RenderConfig,
) -> FeatureImage {
    render_pair(theta, layout, region, cfg).0
}

/// Label pass only; shares rasterization with [`render`] so labels always
/// agree with the occupancy planes.
pub fn render_labels(
    theta: &SceneParameters,
    layout: &SceneLayout,
    region: &Region,
    cfg: &RenderConfig,
) -> LabelImage {
    render_pair(theta, layout, region, cfg).1
}

pub fn flatten_features(img: &FeatureImage) -> Vec<f64> {
    img.data.clone()
}

pub fn unflatten_features(values: &[f64], width: usize, height: usize) -> Result<FeatureImage> {
    let expected = width * height * CHANNELS;
    if values.len() != expected {
        return Err(Error::DimensionMismatch {
            expected,
            actual: values.len(),
        });
    }
    Ok(FeatureImage {
        width,
        height,
        data: values.to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{GibbsConfig, LayoutConfig, Region};
    use crate::seed::rng_for;
    use std::f64::consts::FRAC_PI_2;

    fn flat_theta(light: f64) -> SceneParameters {
        let mut t = SceneParameters::midpoint();
        t.light_intensity = light;
        t.scatter_density = 0.0;
        t.sun_elevation = FRAC_PI_2;
        t.camera_pitch = 0.0;
        // Low, narrow camera: the window stays inside the default region.
        t.camera_height = 1.0;
        t.camera_fov = 0.9;
        t
    }

    fn scene_sample(seed: u64) -> (SceneParameters, SceneLayout) {
        let prior = crate::priors::uniform_prior(&crate::priors::ParameterSpace::scene(8));
        let mut rng = rng_for(seed, 0, 0);
        let theta = crate::priors::sample_theta(&prior, &mut rng).unwrap();
        let layout = crate::scene::sample_layout(
            &theta,
            &Region::default(),
            &GibbsConfig::default(),
            &LayoutConfig::default(),
            &mut rng,
        )
        .unwrap();
        (theta, layout)
    }

    #[test]
    fn dark_empty_scene_is_all_zero() {
        let region = Region::default();
        let img = render(&flat_theta(0.0), &SceneLayout::empty(), &region, &RenderConfig::default());
        assert!(img.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn noon_empty_scene_is_saturated() {
        let region = Region::default();
        let mut theta = flat_theta(6.0);
        for ct in [0.0, 0.5, 1.0] {
            theta.color_temperature = ct;
            let img = render(&theta, &SceneLayout::empty(), &region, &RenderConfig::default());
            assert!(img.intensity().iter().all(|v| *v == 1.0));
            assert!(img.data[img.intensity().len()..].iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn single_vehicle_matches_independent_rasterizer() {
        let region = Region::default();
        let cam = region.center();
        let cfg = RenderConfig::default();
        let theta = flat_theta(3.0);
        let vehicle = ObjectMark {
            class: ObjectClass::Vehicle,
            position: cam,
            orientation: 0.0,
            // Vehicle half extents are (0.9, 2.2); scale it to a unit square's width.
            scale: 0.5 / 0.9,
        };
        let layout = SceneLayout::new(vec![vehicle], &GibbsConfig::default());
        let img = render(&theta, &layout, &region, &cfg);

        // Oracle: axis-aligned box test in world coordinates with the window
        // recomputed from scratch.
        let half = cfg.view_scale * theta.camera_height * (theta.camera_fov / 2.0).tan();
        let (hw, hd) = (0.5, 2.2 * 0.5 / 0.9);
        let mut covered = 0;
        for row in 0..cfg.height {
            for col in 0..cfg.width {
                let x = cam.0 - half + (2.0 * col as f64 + 1.0) * half / cfg.width as f64;
                let y = cam.1 - half + (2.0 * row as f64 + 1.0) * half / cfg.height as f64;
                let inside = (x - cam.0).abs() <= hw && (y - cam.1).abs() <= hd;
                covered += inside as usize;
                assert_eq!(img.occupied(ObjectClass::Vehicle, row, col), inside, "cell {row},{col}");
                for c in ObjectClass::ALL.iter().filter(|c| **c != ObjectClass::Vehicle) {
                    assert!(!img.occupied(*c, row, col));
                }
            }
        }
        assert!(covered > 0);
    }

    #[test]
    fn building_labels_match_oracle_and_occlude_pedestrian() {
        let region = Region::default();
        let cfg = RenderConfig::default();
        let theta = flat_theta(3.0);
        // Centre both objects on a cell so the small pedestrian is sampled.
        let spot = ViewWindow::new(&theta, &region, &cfg).cell_center(17, 18, &cfg);
        let building = ObjectMark {
            class: ObjectClass::Building,
            position: spot,
            orientation: 0.3,
            scale: 0.5,
        };
        let pedestrian = ObjectMark {
            class: ObjectClass::Pedestrian,
            position: spot,
            orientation: 0.0,
            scale: 1.0,
        };
        let alone = SceneLayout::new(vec![building], &GibbsConfig::default());
        let labels = render_labels(&theta, &alone, &region, &cfg);
        let window = ViewWindow::new(&theta, &region, &cfg);
        for row in 0..cfg.height {
            for col in 0..cfg.width {
                let p = window.cell_center(row, col, &cfg);
                let expected = if building.contains(p) { 2 } else { LabelImage::BACKGROUND };
                assert_eq!(labels.at(row, col), expected);
            }
        }

        // Pedestrian listed after the building still loses to it.
        let both = SceneLayout::new(vec![building, pedestrian], &GibbsConfig::default());
        let (img, labels) = render_pair(&theta, &both, &region, &cfg);
        let mut under = 0;
        for row in 0..cfg.height {
            for col in 0..cfg.width {
                if img.occupied(ObjectClass::Pedestrian, row, col) {
                    under += 1;
                    assert_eq!(labels.at(row, col), ObjectClass::Building.id());
                }
            }
        }
        assert!(under > 0);
    }

    #[test]
    fn high_camera_sees_a_dark_border_beyond_the_region() {
        let region = Region::default();
        let cfg = RenderConfig::default();
        let mut theta = flat_theta(6.0);
        theta.camera_height = 2.0;
        let img = render(&theta, &SceneLayout::empty(), &region, &cfg);
        let window = ViewWindow::new(&theta, &region, &cfg);
        assert!(window.half_extent > 15.0);
        let mut dark = 0;
        for row in 0..cfg.height {
            for col in 0..cfg.width {
                let inside = region.contains(window.cell_center(row, col, &cfg));
                assert_eq!(img.intensity_at(row, col), if inside { 1.0 } else { 0.0 });
                dark += !inside as usize;
            }
        }
        assert!(dark > 0);

        // A lower camera keeps the whole window inside the region.
        theta.camera_height = 1.0;
        let img = render(&theta, &SceneLayout::empty(), &region, &cfg);
        assert!(img.intensity().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn empty_layout_labels_are_background() {
        let region = Region::default();
        let labels = render_labels(&flat_theta(3.0), &SceneLayout::empty(), &region, &RenderConfig::default());
        assert!(labels.labels.iter().all(|l| *l == LabelImage::BACKGROUND));
    }

    #[test]
    fn render_is_deterministic_and_labels_consistent() {
        let cfg = RenderConfig::default();
        let region = Region::default();
        for seed in 0..20 {
            let (theta, layout) = scene_sample(seed);
            let (a, labels) = render_pair(&theta, &layout, &region, &cfg);
            let (b, _) = render_pair(&theta, &layout, &region, &cfg);
            assert_eq!(a, b);
            for v in a.intensity() {
                assert!((0.0..=1.0).contains(v));
            }
            for row in 0..cfg.height {
                for col in 0..cfg.width {
                    let l = labels.at(row, col);
                    if l != LabelImage::BACKGROUND {
                        assert!(a.occupied(ObjectClass::from_id(l).unwrap(), row, col));
                    } else {
                        assert!(ObjectClass::ALL.iter().all(|c| !a.occupied(*c, row, col)));
                    }
                }
            }
        }
    }

    #[test]
    fn brighter_light_never_darkens_a_cell() {
        let cfg = RenderConfig::default();
        let region = Region::default();
        for seed in 0..10 {
            let (mut theta, layout) = scene_sample(seed);
            let mut prev = vec![0.0; cfg.cells()];
            for step in 0..=12 {
                theta.light_intensity = step as f64 * 0.5;
                let img = render(&theta, &layout, &region, &cfg);
                for (now, before) in img.intensity().iter().zip(&prev) {
                    assert!(now >= before);
                }
                prev = img.intensity().to_vec();
            }
        }
    }

    #[test]
    fn every_photometric_and_camera_dimension_changes_the_image() {
        let cfg = RenderConfig::default();
        let region = Region::default();
        let (base_theta, layout) = (0..)
            .map(scene_sample)
            .find(|(_, l)| l.objects.len() >= 4)
            .unwrap();
        let mut base_theta = base_theta;
        base_theta.light_intensity = 3.0;
        base_theta.sun_elevation = 0.6;
        base_theta.scatter_density = 0.5;
        let base = render(&base_theta, &layout, &region, &cfg);
        for dim in 0..9 {
            let mut v = base_theta.to_vector();
            let r = crate::scene::PARAMETER_RANGES[dim];
            v[dim] = if v[dim] - r.lower > r.upper - v[dim] {
                r.lower + 0.1 * (r.upper - r.lower)
            } else {
                r.upper - 0.1 * (r.upper - r.lower)
            };
            let changed = render(&SceneParameters::from_vector(&v).unwrap(), &layout, &region, &cfg);
            assert_ne!(changed, base, "dimension {} had no effect", r.name);
        }
    }

    #[test]
    fn flatten_layout_and_round_trip() {
        let img = FeatureImage {
            width: 2,
            height: 2,
            data: (0..2 * 2 * CHANNELS).map(|i| i as f64).collect(),
        };
        let flat = flatten_features(&img);
        assert_eq!(&flat[..4], &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(flat.len(), 2 * 2 * CHANNELS);
        assert_eq!(unflatten_features(&flat, 2, 2).unwrap(), img);
        assert!(flatten_features(&FeatureImage::zeros(3, 3)).iter().all(|v| *v == 0.0));
        assert!(unflatten_features(&flat, 3, 2).is_err());
    }
}
