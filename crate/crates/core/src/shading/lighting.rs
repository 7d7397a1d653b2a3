//! Lighting rigs for the four lighting categories, their sampling ranges and
//! text serialization.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::kv::{fmt_f64, fmt_vec3, parse_vec3, KvBlock};

pub const POINT_TOTAL_POWER: (f64, f64) = (900.0, 2400.0);
pub const POINT_COUNT: (usize, usize) = (1, 3);
pub const AREA_POWER: (f64, f64) = (1000.0, 2000.0);
pub const AREA_SIZE: (f64, f64) = (3.0, 10.0);
pub const ENV_STRENGTH: (f64, f64) = (0.5, 3.0);
pub const LIGHT_RADIUS: (f64, f64) = (4.0, 5.0);
pub const MAX_POLAR_DEG: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LightCategory {
    Point,
    Area,
    Environment,
    None,
}

impl LightCategory {
    pub const ALL: [LightCategory; 4] = [Self::Point, Self::Area, Self::Environment, Self::None];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Point => "point",
            Self::Area => "area",
            Self::Environment => "environment",
            Self::None => "none",
        }
    }
}

impl fmt::Display for LightCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LightCategory {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown lighting category '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLight {
    pub position: Vec3,
    /// Watts.
    pub power: f64,
}

/// Square emitter facing along `normal`, approximated by its four corners.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaLight {
    pub position: Vec3,
    pub normal: Vec3,
    /// Edge length in meters.
    pub size: f64,
    pub power: f64,
}

impl AreaLight {
    /// The four corner samples, each carrying a quarter of the power.
    pub fn corner_lights(&self) -> [PointLight; 4] {
        let n = self.normal.normalize();
        let helper = if n.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
        let a = helper.cross(&n).normalize();
        let b = n.cross(&a);
        let h = 0.5 * self.size;
        [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)].map(|(s, t)| PointLight {
            position: self.position + a * (s * h) + b * (t * h),
            power: 0.25 * self.power,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightingRig {
    pub category: LightCategory,
    pub points: Vec<PointLight>,
    pub area: Option<AreaLight>,
    pub env_strength: f64,
}

impl LightingRig {
    pub fn none() -> Self {
        Self {
            category: LightCategory::None,
            points: Vec::new(),
            area: None,
            env_strength: 0.0,
        }
    }

    pub fn point(lights: Vec<PointLight>) -> Self {
        Self {
            category: LightCategory::Point,
            points: lights,
            area: None,
            env_strength: 0.0,
        }
    }

    pub fn area(light: AreaLight) -> Self {
        Self {
            category: LightCategory::Area,
            points: Vec::new(),
            area: Some(light),
            env_strength: 0.0,
        }
    }

    pub fn environment(strength: f64) -> Self {
        Self {
            category: LightCategory::Environment,
            points: Vec::new(),
            area: None,
            env_strength: strength,
        }
    }

    /// Point emitters actually evaluated by the renderer.
    pub fn emitters(&self) -> Vec<PointLight> {
        match self.category {
            LightCategory::Point => self.points.clone(),
            LightCategory::Area => self.area.map(|a| a.corner_lights().to_vec()).unwrap_or_default(),
            _ => Vec::new(),
        }
    }

    pub fn total_point_power(&self) -> f64 {
        self.points.iter().map(|p| p.power).sum()
    }

    /// Same rig with every emitter's power multiplied by `k`.
    pub fn scaled_power(&self, k: f64) -> Self {
        let mut r = self.clone();
        for p in &mut r.points {
            p.power *= k;
        }
        if let Some(a) = &mut r.area {
            a.power *= k;
        }
        r
    }

    pub fn to_kv(&self) -> KvBlock {
        let mut b = KvBlock::new();
        b.push("category", self.category);
        match self.category {
            LightCategory::Point => {
                b.push("point_count", self.points.len());
                for (i, p) in self.points.iter().enumerate() {
                    b.push(format!("point{i}_position"), fmt_vec3(p.position.into()));
                    b.push(format!("point{i}_power"), fmt_f64(p.power));
                }
            }
            LightCategory::Area => {
                let a = self.area.expect("area rig carries an area light");
                b.push("area_position", fmt_vec3(a.position.into()));
                b.push("area_normal", fmt_vec3(a.normal.into()));
                b.push("area_size", fmt_f64(a.size));
                b.push("area_power", fmt_f64(a.power));
            }
            LightCategory::Environment => b.push("env_strength", fmt_f64(self.env_strength)),
            LightCategory::None => {}
        }
        b
    }

    pub fn to_text(&self) -> String {
        self.to_kv().to_text()
    }

    pub fn from_kv(b: &KvBlock) -> Result<Self> {
        let category: LightCategory = b.require("category")?.parse()?;
        let f = |k: &str| -> Result<f64> {
            b.parse_value::<f64>(k)?
                .ok_or_else(|| Error::Argument(format!("missing required key '{k}'")))
        };
        let v = |k: &str| -> Result<Vec3> { Ok(Vec3::from(parse_vec3(b.require(k)?)?)) };
        let rig = match category {
            LightCategory::Point => {
                let n: usize = b
                    .parse_value("point_count")?
                    .ok_or_else(|| Error::Argument("missing required key 'point_count'".into()))?;
                let mut allowed = vec!["category".to_string(), "point_count".to_string()];
                let mut pts = Vec::with_capacity(n);
                for i in 0..n {
                    pts.push(PointLight {
                        position: v(&format!("point{i}_position"))?,
                        power: f(&format!("point{i}_power"))?,
                    });
                    allowed.push(format!("point{i}_position"));
                    allowed.push(format!("point{i}_power"));
                }
                let allowed: Vec<&str> = allowed.iter().map(String::as_str).collect();
                b.reject_unknown(&allowed)?;
                Self::point(pts)
            }
            LightCategory::Area => {
                b.reject_unknown(&["category", "area_position", "area_normal", "area_size", "area_power"])?;
                Self::area(AreaLight {
                    position: v("area_position")?,
                    normal: v("area_normal")?,
                    size: f("area_size")?,
                    power: f("area_power")?,
                })
            }
            LightCategory::Environment => {
                b.reject_unknown(&["category", "env_strength"])?;
                Self::environment(f("env_strength")?)
            }
            LightCategory::None => {
                b.reject_unknown(&["category"])?;
                Self::none()
            }
        };
        Ok(rig)
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_kv(&KvBlock::parse(text)?)
    }
}

/// Uniformly distributed direction on the spherical cap of half-angle
/// `MAX_POLAR_DEG` around `axis`.
pub fn sample_cap_direction(axis: &Vec3, rng: &mut impl Rng) -> Vec3 {
    let axis = axis.try_normalize(1e-12).unwrap_or_else(Vec3::z);
    let cos_max = MAX_POLAR_DEG.to_radians().cos();
    let cos_t = rng.random_range(cos_max..=1.0);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let helper = if axis.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let a = helper.cross(&axis).normalize();
    let b = axis.cross(&a);
    (a * (sin_t * phi.cos()) + b * (sin_t * phi.sin()) + axis * cos_t).normalize()
}

/// Samples a rig of the given category. Emitters lie on a hemisphere of
/// radius `[4, 5]` m whose pole points from the object toward the camera.
pub fn sample_lighting(category: LightCategory, camera_dir: &Vec3, rng: &mut impl Rng) -> LightingRig {
    match category {
        LightCategory::None => LightingRig::none(),
        LightCategory::Environment => LightingRig::environment(rng.random_range(ENV_STRENGTH.0..=ENV_STRENGTH.1)),
        LightCategory::Point => {
            let n = rng.random_range(POINT_COUNT.0..=POINT_COUNT.1);
            let total = rng.random_range(POINT_TOTAL_POWER.0..=POINT_TOTAL_POWER.1);
            let shares: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
            let sum: f64 = shares.iter().sum();
            let mut lights: Vec<PointLight> = shares
                .iter()
                .map(|s| {
                    let dir = sample_cap_direction(camera_dir, rng);
                    let r = rng.random_range(LIGHT_RADIUS.0..=LIGHT_RADIUS.1);
                    PointLight {
                        position: dir * r,
                        power: total * s / sum,
                    }
                })
                .collect();
            // put the rounding residue on the last light so the total is exact
            let partial: f64 = lights[..n - 1].iter().map(|l| l.power).sum();
            lights[n - 1].power = total - partial;
            LightingRig::point(lights)
        }
        LightCategory::Area => {
            let dir = sample_cap_direction(camera_dir, rng);
            let r = rng.random_range(LIGHT_RADIUS.0..=LIGHT_RADIUS.1);
            LightingRig::area(AreaLight {
                position: dir * r,
                normal: -dir,
                size: rng.random_range(AREA_SIZE.0..=AREA_SIZE.1),
                power: rng.random_range(AREA_POWER.0..=AREA_POWER.1),
            })
        }
    }
}

/// Checks a rig against the sampling ranges; returns one message per violation.
pub fn rig_violations(rig: &LightingRig, camera_dir: &Vec3) -> Vec<String> {
    let mut out = Vec::new();
    let axis = camera_dir.normalize();
    let polar_ok = |p: &Vec3| {
        let c = (p.normalize().dot(&axis)).clamp(-1.0, 1.0);
        c.acos().to_degrees() <= MAX_POLAR_DEG + 1e-9
    };
    let radius_ok = |p: &Vec3| (LIGHT_RADIUS.0 - 1e-9..=LIGHT_RADIUS.1 + 1e-9).contains(&p.norm());
    match rig.category {
        LightCategory::Point => {
            if !(POINT_COUNT.0..=POINT_COUNT.1).contains(&rig.points.len()) {
                out.push(format!("point count {}", rig.points.len()));
            }
            let total = rig.total_point_power();
            if !(POINT_TOTAL_POWER.0 - 1e-9..=POINT_TOTAL_POWER.1 + 1e-9).contains(&total) {
                out.push(format!("total power {total}"));
            }
            for p in &rig.points {
                if !polar_ok(&p.position) {
                    out.push(format!("polar angle of {:?}", p.position));
                }
                if !radius_ok(&p.position) {
                    out.push(format!("radius {}", p.position.norm()));
                }
            }
        }
        LightCategory::Area => match rig.area {
            None => out.push("missing area light".into()),
            Some(a) => {
                if !(AREA_SIZE.0..=AREA_SIZE.1).contains(&a.size) {
                    out.push(format!("area size {}", a.size));
                }
                if !(AREA_POWER.0..=AREA_POWER.1).contains(&a.power) {
                    out.push(format!("area power {}", a.power));
                }
                if !polar_ok(&a.position) {
                    out.push("area polar angle".into());
                }
                if !radius_ok(&a.position) {
                    out.push(format!("area radius {}", a.position.norm()));
                }
            }
        },
        LightCategory::Environment => {
            if !(ENV_STRENGTH.0..=ENV_STRENGTH.1).contains(&rig.env_strength) {
                out.push(format!("environment strength {}", rig.env_strength));
            }
        }
        LightCategory::None => {
            if !rig.points.is_empty() || rig.area.is_some() {
                out.push("emitters in an unlit rig".into());
            }
        }
    }
    out
}
