use std::f64::consts::{FRAC_PI_2, TAU};
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::geometry::intersection_area;
use super::{GibbsConfig, ObjectClass, ObjectMark, Region, SceneParameters};
use crate::error::{Error, Result};

/// Mark distribution and rejection budget for [`sample_layout`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayoutConfig {
    pub scale_min: f64,
    pub scale_max: f64,
    pub retry_budget: usize,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        LayoutConfig {
            scale_min: 0.8,
            scale_max: 1.25,
            retry_budget: 20_000,
        }
    }
}

impl LayoutConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale_min > 0.0 && self.scale_min <= self.scale_max && self.scale_max.is_finite()) {
            return Err(Error::Config(format!(
                "layout scale band must satisfy 0 < min <= max, got [{}, {}]",
                self.scale_min, self.scale_max
            )));
        }
        if self.retry_budget == 0 {
            return Err(Error::Config("layout.retry_budget must be at least 1".into()));
        }
        Ok(())
    }
}

/// A sampled set of marked points and its cached Gibbs energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLayout {
    pub objects: Vec<ObjectMark>,
    pub energy: f64,
}

impl SceneLayout {
    pub fn new(objects: Vec<ObjectMark>, cfg: &GibbsConfig) -> Self {
        let energy = gibbs_energy(&objects, cfg);
        SceneLayout { objects, energy }
    }

    pub fn empty() -> Self {
        SceneLayout {
            objects: Vec::new(),
            energy: 0.0,
        }
    }

    /// Largest pairwise overlap fraction, 0 for fewer than two objects.
    pub fn max_overlap(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, a) in self.objects.iter().enumerate() {
            for b in &self.objects[i + 1..] {
                worst = worst.max(overlap_fraction(a, b));
            }
        }
        worst
    }
}

fn mark_key(m: &ObjectMark) -> (u8, f64, f64, f64, f64) {
    (m.class.id(), m.position.0, m.position.1, m.orientation, m.scale)
}

/// Intersection area of the two oriented footprints divided by the smaller
/// footprint area.
pub fn overlap_fraction(a: &ObjectMark, b: &ObjectMark) -> f64 {
    let dx = a.position.0 - b.position.0;
    let dy = a.position.1 - b.position.1;
    if dx.hypot(dy) > a.bounding_radius() + b.bounding_radius() {
        return 0.0;
    }
    // Clip in a canonical order so the result is bit-for-bit symmetric.
    let (first, second) = if mark_key(a) <= mark_key(b) { (a, b) } else { (b, a) };
    let inter = intersection_area(&first.corners(), &second.corners());
    let smaller = first.area().min(second.area());
    (inter / smaller).clamp(0.0, 1.0)
}

/// Pairwise overlap energy `sum (exp(k L) - 1)` with each term and the total
/// saturated at `cfg.energy_cap`.
pub fn gibbs_energy(objects: &[ObjectMark], cfg: &GibbsConfig) -> f64 {
    let mut total = 0.0;
    for (i, a) in objects.iter().enumerate() {
        for b in &objects[i + 1..] {
            let overlap = overlap_fraction(a, b);
            if overlap > 0.0 {
                total += (cfg.k * overlap).exp_m1().min(cfg.energy_cap);
                if total >= cfg.energy_cap {
                    return cfg.energy_cap;
                }
            }
        }
    }
    total
}

/// Unnormalized Gibbs density `exp(-E)`, in `[0, 1]`.
pub fn layout_density_unnorm(objects: &[ObjectMark], cfg: &GibbsConfig) -> f64 {
    (-gibbs_energy(objects, cfg)).exp()
}

fn draw_candidate<R: Rng + ?Sized>(
    theta: &SceneParameters,
    region: &Region,
    layout_cfg: &LayoutConfig,
    rng: &mut R,
) -> Vec<ObjectMark> {
    let area = region.area();
    let (ln_lo, ln_hi) = (layout_cfg.scale_min.ln(), layout_cfg.scale_max.ln());
    let mut objects = Vec::new();
    for class in ObjectClass::ALL {
        let lambda = theta.object_rate_per_class[class.id() as usize] * area;
        if lambda <= 0.0 {
            continue;
        }
        let count = Poisson::new(lambda)
            .expect("positive finite rate")
            .sample(rng) as usize;
        for _ in 0..count {
            let x = rng.gen_range(region.min_x..=region.max_x);
            let y = rng.gen_range(region.min_y..=region.max_y);
            let orientation = if class == ObjectClass::Road {
                if rng.gen_bool(0.5) {
                    0.0
                } else {
                    FRAC_PI_2
                }
            } else {
                rng.gen_range(0.0..TAU)
            };
            let scale = if ln_hi > ln_lo {
                rng.gen_range(ln_lo..ln_hi).exp()
            } else {
                layout_cfg.scale_min
            };
            objects.push(ObjectMark {
                class,
                position: (x, y),
                orientation,
                scale,
            });
        }
    }
    objects
}

/// Rejection sampler for the marked point process: independent Poisson
/// counts and marks are proposed and accepted with probability `exp(-E)`.
pub fn sample_layout<R: Rng + ?Sized>(
    theta: &SceneParameters,
    region: &Region,
    cfg: &GibbsConfig,
    layout_cfg: &LayoutConfig,
    rng: &mut R,
) -> Result<SceneLayout> {
    sample_layout_counted(theta, region, cfg, layout_cfg, rng).map(|(layout, _)| layout)
}

/// Like [`sample_layout`] but also returns the number of proposals drawn.
pub fn sample_layout_counted<R: Rng + ?Sized>(
    theta: &SceneParameters,
    region: &Region,
    cfg: &GibbsConfig,
    layout_cfg: &LayoutConfig,
    rng: &mut R,
) -> Result<(SceneLayout, usize)> {
    for attempt in 1..=layout_cfg.retry_budget {
        let objects = draw_candidate(theta, region, layout_cfg, rng);
        let energy = gibbs_energy(&objects, cfg);
        let u: f64 = rng.gen();
        if u < (-energy).exp() {
            return Ok((SceneLayout { objects, energy }, attempt));
        }
    }
    Err(Error::RetryExhausted {
        attempts: layout_cfg.retry_budget,
    })
}

const LAYOUT_MAGIC: &str = "#advtune-layout v1";
const LAYOUT_COLUMNS: &str = "class_id,x,y,orientation,scale";

/// Writes a layout as line-delimited text:
///
/// ```text
/// #advtune-layout v1
/// #region min_x,min_y,max_x,max_y
/// #seed N
/// class_id,x,y,orientation,scale
/// <one record per object>
/// ```
///
/// Floats use Rust's shortest round-trip representation.
pub fn write_layout<W: Write>(
    out: &mut W,
    layout: &SceneLayout,
    region: &Region,
    seed: u64,
) -> std::io::Result<()> {
    writeln!(out, "{LAYOUT_MAGIC}")?;
    writeln!(
        out,
        "#region {},{},{},{}",
        region.min_x, region.min_y, region.max_x, region.max_y
    )?;
    writeln!(out, "#seed {seed}")?;
    writeln!(out, "{LAYOUT_COLUMNS}")?;
    for m in &layout.objects {
        writeln!(
            out,
            "{},{},{},{},{}",
            m.class.id(),
            m.position.0,
            m.position.1,
            m.orientation,
            m.scale
        )?;
    }
    Ok(())
}

/// Parses the format produced by [`write_layout`]; the energy is recomputed
/// under `cfg`.
pub fn read_layout<R: BufRead>(input: R, cfg: &GibbsConfig) -> Result<(SceneLayout, Region, u64)> {
    let bad = |msg: String| Error::format("<layout>", msg);
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| bad("unexpected end of layout".into()))?
            .map_err(|e| Error::io("<layout>", e))
    };
    if next()?.trim_end() != LAYOUT_MAGIC {
        return Err(bad("missing layout header".into()));
    }
    let region_line = next()?;
    let coords: Vec<f64> = region_line
        .strip_prefix("#region ")
        .ok_or_else(|| bad("missing #region line".into()))?
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|e| bad(format!("bad region: {e}")))?;
    if coords.len() != 4 {
        return Err(bad("region needs four values".into()));
    }
    let region = Region {
        min_x: coords[0],
        min_y: coords[1],
        max_x: coords[2],
        max_y: coords[3],
    };
    let seed = next()?
        .strip_prefix("#seed ")
        .ok_or_else(|| bad("missing #seed line".into()))?
        .trim()
        .parse::<u64>()
        .map_err(|e| bad(format!("bad seed: {e}")))?;
    if next()?.trim_end() != LAYOUT_COLUMNS {
        return Err(bad("missing column header".into()));
    }
    let mut objects = Vec::new();
    for line in lines {
        let line = line.map_err(|e| Error::io("<layout>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(format!("expected 5 fields, got {}", fields.len())));
        }
        let id: u8 = fields[0]
            .trim()
            .parse()
            .map_err(|e| bad(format!("bad class id: {e}")))?;
        let class = ObjectClass::from_id(id).ok_or_else(|| bad(format!("unknown class id {id}")))?;
        let num = |s: &str| s.trim().parse::<f64>().map_err(|e| bad(format!("bad number {s:?}: {e}")));
        objects.push(ObjectMark {
            class,
            position: (num(fields[1])?, num(fields[2])?),
            orientation: num(fields[3])?,
            scale: num(fields[4])?,
        });
    }
    Ok((SceneLayout::new(objects, cfg), region, seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_for;
    use proptest::prelude::*;

    fn unit_square(x: f64, y: f64) -> ObjectMark {
        // Ground footprint is 4x4 m at scale 1; scale 0.25 gives a unit square.
        ObjectMark {
            class: ObjectClass::Ground,
            position: (x, y),
            orientation: 0.0,
            scale: 0.25,
        }
    }

    /// Overlap by rasterising both squares' bounding box on a fine grid.
    fn rasterized_overlap(a: &ObjectMark, b: &ObjectMark, n: usize) -> f64 {
        let pts = a.corners().into_iter().chain(b.corners());
        let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
        for (x, y) in pts {
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
        }
        let (dx, dy) = ((x1 - x0) / n as f64, (y1 - y0) / n as f64);
        let (mut in_a, mut in_b, mut both) = (0usize, 0usize, 0usize);
        for i in 0..n {
            for j in 0..n {
                let p = (x0 + (i as f64 + 0.5) * dx, y0 + (j as f64 + 0.5) * dy);
                let (ia, ib) = (a.contains(p), b.contains(p));
                in_a += ia as usize;
                in_b += ib as usize;
                both += (ia && ib) as usize;
            }
        }
        both as f64 / in_a.min(in_b) as f64
    }

    #[test]
    fn identical_squares_overlap_fully() {
        let a = unit_square(5.0, 5.0);
        assert_eq!(overlap_fraction(&a, &a), 1.0);
    }

    #[test]
    fn distant_squares_do_not_overlap() {
        assert_eq!(overlap_fraction(&unit_square(0.0, 0.0), &unit_square(10.0, 0.0)), 0.0);
    }

    #[test]
    fn half_offset_squares_match_raster_oracle() {
        let a = unit_square(0.0, 0.0);
        let b = unit_square(0.5, 0.0);
        let oracle = rasterized_overlap(&a, &b, 1000);
        assert!((oracle - 0.5).abs() < 1e-3, "oracle {oracle}");
        assert!((overlap_fraction(&a, &b) - oracle).abs() < 1e-3);
    }

    #[test]
    fn rotated_pair_matches_raster_oracle() {
        let a = ObjectMark {
            class: ObjectClass::Vehicle,
            position: (1.0, 2.0),
            orientation: 0.4,
            scale: 1.1,
        };
        let b = ObjectMark {
            class: ObjectClass::Vegetation,
            position: (1.8, 2.5),
            orientation: 1.3,
            scale: 0.9,
        };
        let oracle = rasterized_overlap(&a, &b, 1000);
        assert!((overlap_fraction(&a, &b) - oracle).abs() < 2e-3);
    }

    #[test]
    fn energy_examples() {
        let cfg = GibbsConfig::default();
        assert_eq!(gibbs_energy(&[], &cfg), 0.0);
        let disjoint = [unit_square(0.0, 0.0), unit_square(3.0, 0.0), unit_square(0.0, 3.0)];
        assert_eq!(gibbs_energy(&disjoint, &cfg), 0.0);
        assert_eq!(layout_density_unnorm(&disjoint, &cfg), 1.0);

        // Two unit squares offset by 1 - L along x overlap by exactly L.
        let tiny = [unit_square(0.0, 0.0), unit_square(1.0 - 0.001, 0.0)];
        let e = gibbs_energy(&tiny, &cfg);
        assert!((e - (1f64.exp() - 1.0)).abs() < 1e-6, "{e}");
        assert!((layout_density_unnorm(&tiny, &cfg) - (1.0 - 1f64.exp()).exp()).abs() < 1e-6);
        assert!((layout_density_unnorm(&tiny, &cfg) - 0.179374).abs() < 1e-6);

        let heavy = [unit_square(0.0, 0.0), unit_square(0.2, 0.0)];
        assert_eq!(gibbs_energy(&heavy, &cfg), cfg.energy_cap);

        let small = [unit_square(0.0, 0.0), unit_square(0.99, 0.0)];
        let d = layout_density_unnorm(&small, &cfg);
        assert!((0.0..1e-300).contains(&d));
    }

    #[test]
    fn total_energy_saturates_at_cap() {
        let cfg = GibbsConfig {
            k: 1000.0,
            energy_cap: 10.0,
        };
        let stack: Vec<_> = (0..5).map(|i| unit_square(0.01 * i as f64, 0.0)).collect();
        assert_eq!(gibbs_energy(&stack, &cfg), 10.0);
    }

    fn zero_rates() -> SceneParameters {
        let mut theta = SceneParameters::midpoint();
        theta.object_rate_per_class = [0.0; ObjectClass::COUNT];
        theta
    }

    #[test]
    fn zero_rates_give_empty_layout_first_try() {
        let mut rng = rng_for(1, 0, 0);
        let (layout, attempts) = sample_layout_counted(
            &zero_rates(),
            &Region::default(),
            &GibbsConfig::default(),
            &LayoutConfig::default(),
            &mut rng,
        )
        .unwrap();
        assert!(layout.objects.is_empty());
        assert_eq!(layout.energy, 0.0);
        assert_eq!(attempts, 1);
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let theta = SceneParameters::midpoint();
        let draw = |seed| {
            let mut rng = rng_for(seed, 0, 0);
            sample_layout(&theta, &Region::default(), &GibbsConfig::default(), &LayoutConfig::default(), &mut rng)
                .unwrap()
        };
        assert_eq!(draw(3), draw(3));
        assert_ne!(draw(3), draw(4));
    }

    #[test]
    fn sampled_layouts_respect_marks_contract() {
        let theta = SceneParameters::midpoint();
        let region = Region::default();
        let cfg = GibbsConfig::default();
        for i in 0..50 {
            let mut rng = rng_for(9, 0, i);
            let layout = sample_layout(&theta, &region, &cfg, &LayoutConfig::default(), &mut rng).unwrap();
            assert_eq!(layout.energy, gibbs_energy(&layout.objects, &cfg));
            for m in &layout.objects {
                assert!(region.contains(m.position));
                assert!(m.scale >= 0.8 && m.scale <= 1.25);
                assert!((0.0..TAU).contains(&m.orientation));
                if m.class == ObjectClass::Road {
                    assert!(m.orientation == 0.0 || m.orientation == FRAC_PI_2);
                }
            }
        }
    }

    #[test]
    fn hard_core_behavior_at_k_1000() {
        let theta = SceneParameters::midpoint();
        let cfg = GibbsConfig::default();
        let mut clean = 0;
        for i in 0..1000 {
            let mut rng = rng_for(11, 0, i);
            let layout = sample_layout(&theta, &Region::default(), &cfg, &LayoutConfig::default(), &mut rng).unwrap();
            if layout.max_overlap() < 1e-3 {
                clean += 1;
            }
        }
        assert!(clean >= 990, "{clean}");
    }

    #[test]
    fn overcrowded_region_exhausts_retries() {
        let mut theta = SceneParameters::midpoint();
        theta.object_rate_per_class = [1.0; ObjectClass::COUNT];
        let layout_cfg = LayoutConfig {
            retry_budget: 5,
            ..LayoutConfig::default()
        };
        let mut rng = rng_for(1, 0, 0);
        let err = sample_layout(&theta, &Region::default(), &GibbsConfig::default(), &layout_cfg, &mut rng)
            .unwrap_err();
        assert!(matches!(err, Error::RetryExhausted { attempts: 5 }));
    }

    #[test]
    fn layout_text_round_trip() {
        let theta = SceneParameters::midpoint();
        let cfg = GibbsConfig::default();
        let region = Region::default();
        let mut rng = rng_for(5, 0, 0);
        let layout = sample_layout(&theta, &region, &cfg, &LayoutConfig::default(), &mut rng).unwrap();
        let mut buf = Vec::new();
        write_layout(&mut buf, &layout, &region, 5).unwrap();
        let (back, back_region, seed) = read_layout(buf.as_slice(), &cfg).unwrap();
        assert_eq!(back, layout);
        assert_eq!(back_region, region);
        assert_eq!(seed, 5);
    }

    fn arb_mark() -> impl Strategy<Value = ObjectMark> {
        (0u8..7, -5.0..5.0f64, -5.0..5.0f64, 0.0..TAU, 0.8..1.25f64).prop_map(|(c, x, y, o, s)| ObjectMark {
            class: ObjectClass::from_id(c).unwrap(),
            position: (x, y),
            orientation: o,
            scale: s,
        })
    }

    proptest! {
        #[test]
        fn overlap_is_symmetric_and_bounded(a in arb_mark(), b in arb_mark()) {
            let ab = overlap_fraction(&a, &b);
            prop_assert_eq!(ab, overlap_fraction(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
        }

        #[test]
        fn energy_is_permutation_invariant(marks in prop::collection::vec(arb_mark(), 0..8), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            let cfg = GibbsConfig { k: 3.0, energy_cap: 1e6 };
            let mut shuffled = marks.clone();
            shuffled.shuffle(&mut rng_for(seed, 0, 0));
            let (e1, e2) = (gibbs_energy(&marks, &cfg), gibbs_energy(&shuffled, &cfg));
            prop_assert!((e1 - e2).abs() <= 1e-9 * e1.max(1.0));
            let d = layout_density_unnorm(&marks, &cfg);
            prop_assert!(d > 0.0 && d <= 1.0);
        }
    }
}
