//! Scene-parameter space and the marked point process that places objects.
//!
//! A scene is described by a [`SceneParameters`] point (photometry, camera and
//! per-class Poisson rates) and a [`SceneLayout`]: a finite set of marked
//! points whose pairwise overlap is penalised by a Gibbs energy.

pub mod geometry;
mod layout;

use std::f64::consts::{FRAC_PI_2, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use layout::{
    gibbs_energy, layout_density_unnorm, overlap_fraction, read_layout, sample_layout,
    write_layout, LayoutConfig, SceneLayout,
};

/// Semantic object classes, in label-id order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[repr(u8)]
pub enum ObjectClass {
    Vehicle = 0,
    Pedestrian = 1,
    Building = 2,
    Vegetation = 3,
    Road = 4,
    Ground = 5,
    Sky = 6,
}

impl ObjectClass {
    pub const COUNT: usize = 7;

    pub const ALL: [ObjectClass; Self::COUNT] = [
        ObjectClass::Vehicle,
        ObjectClass::Pedestrian,
        ObjectClass::Building,
        ObjectClass::Vegetation,
        ObjectClass::Road,
        ObjectClass::Ground,
        ObjectClass::Sky,
    ];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.get(id as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectClass::Vehicle => "vehicle",
            ObjectClass::Pedestrian => "pedestrian",
            ObjectClass::Building => "building",
            ObjectClass::Vegetation => "vegetation",
            ObjectClass::Road => "road",
            ObjectClass::Ground => "ground",
            ObjectClass::Sky => "sky",
        }
    }

    /// Footprint half extents `(width, depth)` in meters at scale 1.
    pub fn footprint(self) -> (f64, f64) {
        match self {
            ObjectClass::Vehicle => (0.9, 2.2),
            ObjectClass::Pedestrian => (0.3, 0.3),
            ObjectClass::Building => (4.0, 4.0),
            ObjectClass::Vegetation => (1.0, 1.0),
            ObjectClass::Road => (2.5, 10.0),
            ObjectClass::Ground => (2.0, 2.0),
            ObjectClass::Sky => (1.5, 1.5),
        }
    }

    /// Height in meters; also the painter's-order key for occlusion.
    pub fn height(self) -> f64 {
        match self {
            ObjectClass::Vehicle => 1.5,
            ObjectClass::Pedestrian => 1.75,
            ObjectClass::Building => 12.0,
            ObjectClass::Vegetation => 4.0,
            ObjectClass::Road => 0.05,
            ObjectClass::Ground => 0.02,
            ObjectClass::Sky => 0.01,
        }
    }

    /// Diffuse albedo used by the proxy renderer.
    pub fn albedo(self) -> f64 {
        match self {
            ObjectClass::Vehicle => 0.7,
            ObjectClass::Pedestrian => 0.6,
            ObjectClass::Building => 0.8,
            ObjectClass::Vegetation => 0.35,
            ObjectClass::Road => 0.45,
            ObjectClass::Ground => 0.55,
            ObjectClass::Sky => 0.95,
        }
    }
}

/// One marked point of the layout process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectMark {
    pub class: ObjectClass,
    pub position: (f64, f64),
    pub orientation: f64,
    pub scale: f64,
}

impl ObjectMark {
    pub fn half_extents(&self) -> (f64, f64) {
        let (w, d) = self.class.footprint();
        (w * self.scale, d * self.scale)
    }

    pub fn area(&self) -> f64 {
        let (w, d) = self.half_extents();
        4.0 * w * d
    }

    pub fn corners(&self) -> [geometry::Point; 4] {
        let (w, d) = self.half_extents();
        geometry::oriented_rect(self.position, w, d, self.orientation)
    }

    pub fn contains(&self, p: geometry::Point) -> bool {
        let (w, d) = self.half_extents();
        geometry::point_in_oriented_rect(p, self.position, w, d, self.orientation)
    }

    /// Radius of the circle circumscribing the footprint.
    pub fn bounding_radius(&self) -> f64 {
        let (w, d) = self.half_extents();
        w.hypot(d)
    }
}

/// Axis-aligned world region in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Default for Region {
    fn default() -> Self {
        Region {
            min_x: 0.0,
            min_y: 0.0,
            max_x: 30.0,
            max_y: 30.0,
        }
    }
}

impl Region {
    pub fn width(&self) -> f64 {
        self.max_x - self.min_x
    }

    pub fn depth(&self) -> f64 {
        self.max_y - self.min_y
    }

    pub fn area(&self) -> f64 {
        self.width() * self.depth()
    }

    pub fn center(&self) -> (f64, f64) {
        (
            0.5 * (self.min_x + self.max_x),
            0.5 * (self.min_y + self.max_y),
        )
    }

    pub fn contains(&self, (x, y): (f64, f64)) -> bool {
        x >= self.min_x && x <= self.max_x && y >= self.min_y && y <= self.max_y
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.min_x, self.min_y, self.max_x, self.max_y]
            .iter()
            .all(|v| v.is_finite());
        if !finite || self.width() <= 0.0 || self.depth() <= 0.0 {
            return Err(Error::Config(format!(
                "region must have positive finite extent, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Penalty settings for the pairwise overlap energy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    pub k: f64,
    pub energy_cap: f64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        GibbsConfig {
            k: 1000.0,
            energy_cap: 1e6,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("gibbs.k must be positive, got {}", self.k)));
        }
        if !(self.energy_cap > 0.0 && self.energy_cap.is_finite()) {
            return Err(Error::Config(format!(
                "gibbs.energy_cap must be positive and finite, got {}",
                self.energy_cap
            )));
        }
        Ok(())
    }
}

/// Name and permissible range of one scene-parameter dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParameterRange {
    pub name: &'static str,
    pub lower: f64,
    pub upper: f64,
}

const fn range(name: &'static str, lower: f64, upper: f64) -> ParameterRange {
    ParameterRange { name, lower, upper }
}

/// Fixed serialization order of [`SceneParameters`]. Index `i` of
/// [`SceneParameters::to_vector`] lives in `PARAMETER_RANGES[i]`.
///
/// Rates are Poisson intensities in objects per square meter.
pub const PARAMETER_RANGES: [ParameterRange; SceneParameters::DIM] = [
    range("light_intensity", 0.0, 6.0),
    range("sun_azimuth", 0.0, TAU),
    range("sun_elevation", 0.0, FRAC_PI_2),
    range("color_temperature", 0.0, 1.0),
    range("scatter_density", 0.0, 1.0),
    range("scatter_coefficient", 0.0, 1.0),
    range("camera_height", 1.0, 2.0),
    range("camera_pitch", 0.0, 0.6),
    range("camera_fov", 0.9, 1.1),
    range("rate_vehicle", 0.0, 0.008),
    range("rate_pedestrian", 0.0, 0.01),
    range("rate_building", 0.0, 0.002),
    range("rate_vegetation", 0.0, 0.005),
    range("rate_road", 0.0, 0.001),
    range("rate_ground", 0.0, 0.002),
    range("rate_sky", 0.0, 0.002),
];

/// One point in the scene-parameter space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParameters {
    pub light_intensity: f64,
    pub sun_azimuth: f64,
    pub sun_elevation: f64,
    pub color_temperature: f64,
    pub scatter_density: f64,
    pub scatter_coefficient: f64,
    pub camera_height: f64,
    pub camera_pitch: f64,
    pub camera_fov: f64,
    /// Indexed by [`ObjectClass::id`].
    pub object_rate_per_class: [f64; ObjectClass::COUNT],
}

impl SceneParameters {
    pub const DIM: usize = 9 + ObjectClass::COUNT;

    pub fn to_vector(&self) -> Vec<f64> {
        let mut v = vec![
            self.light_intensity,
            self.sun_azimuth,
            self.sun_elevation,
            self.color_temperature,
            self.scatter_density,
            self.scatter_coefficient,
            self.camera_height,
            self.camera_pitch,
            self.camera_fov,
        ];
        v.extend_from_slice(&self.object_rate_per_class);
        v
    }

    pub fn from_vector(v: &[f64]) -> Result<Self> {
        if v.len() != Self::DIM {
            return Err(Error::DimensionMismatch {
                expected: Self::DIM,
                actual: v.len(),
            });
        }
        let mut rates = [0.0; ObjectClass::COUNT];
        rates.copy_from_slice(&v[9..]);
        Ok(SceneParameters {
            light_intensity: v[0],
            sun_azimuth: v[1],
            sun_elevation: v[2],
            color_temperature: v[3],
            scatter_density: v[4],
            scatter_coefficient: v[5],
            camera_height: v[6],
            camera_pitch: v[7],
            camera_fov: v[8],
            object_rate_per_class: rates,
        })
    }

    /// Midpoint of every permissible range.
    pub fn midpoint() -> Self {
        let v: Vec<f64> = PARAMETER_RANGES
            .iter()
            .map(|r| 0.5 * (r.lower + r.upper))
            .collect();
        Self::from_vector(&v).expect("range table has DIM entries")
    }

    /// Checks every field against [`PARAMETER_RANGES`].
    pub fn validate(&self) -> Result<()> {
        for (value, r) in self.to_vector().iter().zip(PARAMETER_RANGES.iter()) {
            if !value.is_finite() || *value < r.lower || *value > r.upper {
                return Err(Error::InvalidArgument(format!(
                    "{} = {value} outside [{}, {}]",
                    r.name, r.lower, r.upper
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seven_classes_with_positive_extents() {
        assert_eq!(ObjectClass::ALL.len(), 7);
        for (i, c) in ObjectClass::ALL.iter().enumerate() {
            assert_eq!(c.id() as usize, i);
            assert_eq!(ObjectClass::from_id(i as u8), Some(*c));
            let (w, d) = c.footprint();
            assert!(w > 0.0 && d > 0.0 && c.height() > 0.0);
        }
        assert_eq!(ObjectClass::from_id(7), None);
    }

    #[test]
    fn vector_order_round_trips() {
        let mut p = SceneParameters::midpoint();
        p.camera_height = 1.25;
        p.object_rate_per_class[3] = 0.004;
        let v = p.to_vector();
        assert_eq!(v.len(), SceneParameters::DIM);
        assert_eq!(v[6], 1.25);
        assert_eq!(v[9 + 3], 0.004);
        assert_eq!(SceneParameters::from_vector(&v).unwrap(), p);
        assert!(matches!(
            SceneParameters::from_vector(&v[1..]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn permissible_ranges() {
        assert_eq!(PARAMETER_RANGES[0].name, "light_intensity");
        assert_eq!((PARAMETER_RANGES[0].lower, PARAMETER_RANGES[0].upper), (0.0, 6.0));
        assert_eq!(PARAMETER_RANGES[6].name, "camera_height");
        assert_eq!((PARAMETER_RANGES[6].lower, PARAMETER_RANGES[6].upper), (1.0, 2.0));
        SceneParameters::midpoint().validate().unwrap();
        let mut p = SceneParameters::midpoint();
        p.light_intensity = 6.5;
        assert!(p.validate().is_err());
    }
}
