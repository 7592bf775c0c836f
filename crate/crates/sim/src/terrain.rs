//! Analytic ground truth: C1 height fields with closed-form normals.

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

/// Width of the lateral blend between left and right profiles (|y| below
/// this mixes both).
pub const LATERAL_BLEND: f64 = 0.1;

/// Piecewise-linear height profile `h(x)` through `knots`, flat outside,
/// with every kink rounded by a quadratic over `[x_k - b, x_k + b]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    pub knots: Vec<[f64; 2]>,
    #[serde(default = "default_blend")]
    pub blend: f64,
}

fn default_blend() -> f64 {
    0.05
}

impl Profile {
    pub fn flat(height: f64) -> Self {
        Self { knots: vec![[0.0, height]], blend: default_blend() }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.knots.is_empty() {
            return Err("profile needs at least one knot".into());
        }
        if !(self.blend > 0.0) {
            return Err("profile blend must be positive".into());
        }
        for w in self.knots.windows(2) {
            if !(w[1][0] - w[0][0] > 2.0 * self.blend) {
                return Err("profile knots must be increasing in x and spaced by more than 2 * blend".into());
            }
        }
        if self.knots.iter().flatten().any(|v| !v.is_finite()) {
            return Err("profile knots must be finite".into());
        }
        Ok(())
    }

    /// Slope changes at each knot.
    fn kinks(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let slope = |i: usize| -> f64 {
            if i == 0 || i >= self.knots.len() {
                0.0
            } else {
                let (a, b) = (self.knots[i - 1], self.knots[i]);
                (b[1] - a[1]) / (b[0] - a[0])
            }
        };
        (0..self.knots.len()).map(move |k| (self.knots[k][0], slope(k + 1) - slope(k)))
    }

    /// `(h, dh/dx)`.
    pub fn eval(&self, x: f64) -> (f64, f64) {
        let b = self.blend;
        let mut h = self.knots[0][1];
        let mut dh = 0.0;
        for (xk, dm) in self.kinks() {
            let d = x - xk;
            let (r, dr) = if d <= -b {
                (0.0, 0.0)
            } else if d >= b {
                (d, 1.0)
            } else {
                ((d + b) * (d + b) / (4.0 * b), (d + b) / (2.0 * b))
            };
            h += dm * r;
            dh += dm * dr;
        }
        (h, dh)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TerrainKind {
    Flat {
        #[serde(default)]
        height: f64,
    },
    /// Flat up to `start_x`, then rising at `angle_deg` along +x for
    /// `length` metres (horizontal) before levelling off.
    Slope {
        angle_deg: f64,
        #[serde(default)]
        start_x: f64,
        #[serde(default = "default_slope_length")]
        length: f64,
        #[serde(default = "default_slope_blend")]
        blend: f64,
    },
    /// Independent profiles under the left (+y) and right (-y) wheels.
    AsymmetricSupport { left: Profile, right: Profile },
    /// One profile across the full width.
    Composite { profile: Profile },
}

fn default_slope_length() -> f64 {
    1.0e3
}

fn default_slope_blend() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table")]
pub struct Terrain {
    #[serde(flatten)]
    pub kind: TerrainKind,
    /// Lateral friction coefficient of the ground.
    #[serde(default = "default_friction")]
    pub friction: f64,
}

fn default_friction() -> f64 {
    0.8
}

// `flatten` cannot be combined with `deny_unknown_fields`, so split off
// `friction` by hand and let the tagged enum reject anything else.
impl TryFrom<toml::Table> for Terrain {
    type Error = String;

    fn try_from(mut table: toml::Table) -> Result<Self, String> {
        let friction = match table.remove("friction") {
            None => default_friction(),
            Some(toml::Value::Float(f)) => f,
            Some(toml::Value::Integer(i)) => i as f64,
            Some(other) => return Err(format!("friction must be a number, found {}", other.type_str())),
        };
        let kind = TerrainKind::deserialize(toml::Value::Table(table)).map_err(|e| e.to_string())?;
        Ok(Self { kind, friction })
    }
}

/// Smoothstep weight of the left profile at lateral position `y`.
fn left_weight(y: f64) -> (f64, f64) {
    let s = ((y + LATERAL_BLEND) / (2.0 * LATERAL_BLEND)).clamp(0.0, 1.0);
    let inside = s > 0.0 && s < 1.0;
    let w = s * s * (3.0 - 2.0 * s);
    let dw = if inside { 6.0 * s * (1.0 - s) / (2.0 * LATERAL_BLEND) } else { 0.0 };
    (w, dw)
}

impl Terrain {
    pub fn flat() -> Self {
        Self { kind: TerrainKind::Flat { height: 0.0 }, friction: default_friction() }
    }

    pub fn slope(angle_deg: f64, start_x: f64) -> Self {
        Self {
            kind: TerrainKind::Slope { angle_deg, start_x, length: default_slope_length(), blend: default_slope_blend() },
            friction: default_friction(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.friction >= 0.0) {
            return Err("terrain friction must be >= 0".into());
        }
        match &self.kind {
            TerrainKind::Flat { height } if !height.is_finite() => Err("terrain height must be finite".into()),
            TerrainKind::Slope { angle_deg, length, blend, .. } => {
                if !(angle_deg.abs() < 80.0) || !(*length > 2.0 * blend) || !(*blend > 0.0) {
                    Err("slope needs |angle_deg| < 80, blend > 0 and length > 2 * blend".into())
                } else {
                    Ok(())
                }
            }
            TerrainKind::AsymmetricSupport { left, right } => left.validate().and(right.validate()),
            TerrainKind::Composite { profile } => profile.validate(),
            _ => Ok(()),
        }
    }

    fn slope_profile(angle_deg: f64, start_x: f64, length: f64, blend: f64) -> Profile {
        let rise = length * angle_deg.to_radians().tan();
        Profile { knots: vec![[start_x, 0.0], [start_x + length, rise]], blend }
    }

    /// `(h, dh/dx, dh/dy)`.
    pub fn height_and_gradient(&self, x: f64, y: f64) -> (f64, f64, f64) {
        match &self.kind {
            TerrainKind::Flat { height } => (*height, 0.0, 0.0),
            TerrainKind::Slope { angle_deg, start_x, length, blend } => {
                let (h, dh) = Self::slope_profile(*angle_deg, *start_x, *length, *blend).eval(x);
                (h, dh, 0.0)
            }
            TerrainKind::Composite { profile } => {
                let (h, dh) = profile.eval(x);
                (h, dh, 0.0)
            }
            TerrainKind::AsymmetricSupport { left, right } => {
                let (hl, dl) = left.eval(x);
                let (hr, dr) = right.eval(x);
                let (w, dw) = left_weight(y);
                (w * hl + (1.0 - w) * hr, w * dl + (1.0 - w) * dr, dw * (hl - hr))
            }
        }
    }

    /// Hessian of the height field by central differences of the gradient.
    pub fn hessian(&self, x: f64, y: f64) -> nalgebra::Matrix2<f64> {
        let e = 1e-6;
        let g = |x: f64, y: f64| {
            let (_, hx, hy) = self.height_and_gradient(x, y);
            Vector2::new(hx, hy)
        };
        let dx = (g(x + e, y) - g(x - e, y)) / (2.0 * e);
        let dy = (g(x, y + e) - g(x, y - e)) / (2.0 * e);
        let m = nalgebra::Matrix2::from_columns(&[dx, dy]);
        (m + m.transpose()) * 0.5
    }

    /// Normal curvature of the surface at `(x, y)` along the tangent whose
    /// horizontal part is `t_xy` (any length; result scales with `|t|^2`).
    /// Positive where the surface bends towards its normal.
    pub fn normal_curvature(&self, x: f64, y: f64, t_xy: &Vector2<f64>) -> f64 {
        let (_, hx, hy) = self.height_and_gradient(x, y);
        (t_xy.transpose() * self.hessian(x, y) * t_xy)[0] / (1.0 + hx * hx + hy * hy).sqrt()
    }

    pub fn height(&self, x: f64, y: f64) -> f64 {
        self.height_and_gradient(x, y).0
    }

    /// Upward unit normal.
    pub fn normal(&self, x: f64, y: f64) -> Vector3<f64> {
        let (_, hx, hy) = self.height_and_gradient(x, y);
        Vector3::new(-hx, -hy, 1.0).normalize()
    }

    /// Incline of the surface at `(x, y)` in degrees.
    pub fn incline_deg(&self, x: f64, y: f64) -> f64 {
        let n = self.normal(x, y);
        n.xy().norm().atan2(n.z).to_degrees()
    }

    /// Point where a wheel of `radius` centred at `center` touches the
    /// surface: the fixed point of `p = center - r n(p)`.
    pub fn wheel_contact(&self, center: &Vector3<f64>, radius: f64) -> WheelContact {
        let mut xy = Vector2::new(center.x, center.y);
        let mut n = self.normal(xy.x, xy.y);
        for _ in 0..50 {
            let p = center - n * radius;
            let next = Vector2::new(p.x, p.y);
            let moved = (next - xy).norm();
            xy = next;
            n = self.normal(xy.x, xy.y);
            if moved < 1e-13 {
                break;
            }
        }
        let surface = Vector3::new(xy.x, xy.y, self.height(xy.x, xy.y));
        // Signed distance of the wheel rim from the surface along n.
        let gap = n.dot(&(center - surface)) - radius;
        WheelContact { point: center - n * radius, normal: n, gap }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WheelContact {
    pub point: Vector3<f64>,
    pub normal: Vector3<f64>,
    /// Positive when the wheel floats above the ground.
    pub gap: f64,
}
