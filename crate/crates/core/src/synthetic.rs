//! Analytic test worlds: signed-distance scenes rendered to RGB-D frames
//! along scripted trajectories, with exact geometry for use as ground truth.

use crate::config::{ConfigError, KvConfig};
use crate::dataset::RgbdFrame;
use crate::geometry::{Intrinsics, Mat3, Pose, Vec3};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Sphere-tracing surface tolerance in metres.
pub const TRACE_EPS: f64 = 1e-5;
const TRACE_MAX_STEPS: usize = 256;
const TRACE_MAX_DIST: f64 = 20.0;

/// Fixed world-frame light direction used for Lambert shading.
const LIGHT_DIR: [f64; 3] = [0.36, -0.48, 0.8];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shape {
    Sphere { radius: f64 },
    /// Axis-aligned (in its local frame) box with the given half extents.
    Box { half_extents: Vec3 },
    /// The local z=0 plane; positive side is +z.
    Plane,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Texture {
    Solid([u8; 3]),
    /// Two-colour checkerboard over the primitive's local frame.
    Checker([u8; 3], [u8; 3], f64),
}

#[derive(Debug, Clone)]
pub struct Primitive {
    pub shape: Shape,
    /// World-from-local transform.
    pub pose: Pose,
    pub texture: Texture,
}

impl Primitive {
    pub fn sphere(center: Vec3, radius: f64, texture: Texture) -> Self {
        Primitive {
            shape: Shape::Sphere { radius },
            pose: Pose::new(Mat3::identity(), center),
            texture,
        }
    }

    pub fn boxed(center: Vec3, half_extents: Vec3, texture: Texture) -> Self {
        Primitive {
            shape: Shape::Box { half_extents },
            pose: Pose::new(Mat3::identity(), center),
            texture,
        }
    }

    /// Plane through `point` with unit `normal` as its positive side.
    pub fn plane(point: Vec3, normal: Vec3, texture: Texture) -> Self {
        let z = normal.normalize();
        // Any right-handed frame with z as the normal.
        let seed = if z.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
        let x = seed.cross(&z).normalize();
        let y = z.cross(&x);
        let rot = Mat3::from_columns(&[x, y, z]);
        Primitive {
            shape: Shape::Plane,
            pose: Pose::new(rot, point),
            texture,
        }
    }

    /// Exact signed distance in the primitive's local frame (interior of a
    /// box is the exact negative distance to its nearest face).
    fn sdf_local(&self, p: &Vec3) -> f64 {
        match self.shape {
            Shape::Sphere { radius } => p.norm() - radius,
            Shape::Plane => p.z,
            Shape::Box { half_extents } => {
                let q = Vec3::new(
                    p.x.abs() - half_extents.x,
                    p.y.abs() - half_extents.y,
                    p.z.abs() - half_extents.z,
                );
                let outside = Vec3::new(q.x.max(0.0), q.y.max(0.0), q.z.max(0.0)).norm();
                let inside = q.x.max(q.y).max(q.z).min(0.0);
                outside + inside
            }
        }
    }

    pub fn sdf(&self, p: &Vec3) -> f64 {
        self.sdf_local(&self.pose.inverse().transform_point(p))
    }

    /// Outward unit normal by central differences of the exact local SDF.
    fn normal(&self, p: &Vec3) -> Vec3 {
        let local = self.pose.inverse().transform_point(p);
        let h = 1e-6;
        let g = Vec3::new(
            self.sdf_local(&(local + Vec3::new(h, 0.0, 0.0)))
                - self.sdf_local(&(local - Vec3::new(h, 0.0, 0.0))),
            self.sdf_local(&(local + Vec3::new(0.0, h, 0.0)))
                - self.sdf_local(&(local - Vec3::new(0.0, h, 0.0))),
            self.sdf_local(&(local + Vec3::new(0.0, 0.0, h)))
                - self.sdf_local(&(local - Vec3::new(0.0, 0.0, h))),
        );
        let g = if g.norm() < 1e-12 { Vec3::z() } else { g.normalize() };
        self.pose.rotate(&g)
    }

    fn albedo(&self, p: &Vec3) -> [u8; 3] {
        match self.texture {
            Texture::Solid(c) => c,
            Texture::Checker(a, b, scale) => {
                let local = self.pose.inverse().transform_point(p);
                let idx = (local.x / scale).floor() as i64
                    + (local.y / scale).floor() as i64
                    + (local.z / scale).floor() as i64;
                if idx.rem_euclid(2) == 0 {
                    a
                } else {
                    b
                }
            }
        }
    }
}

/// Union of signed-distance primitives.
#[derive(Debug, Clone, Default)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
}

impl AnalyticScene {
    pub fn new(primitives: Vec<Primitive>) -> Self {
        AnalyticScene { primitives }
    }

    /// Signed distance of the union (pointwise minimum).
    pub fn sdf(&self, p: &Vec3) -> f64 {
        self.primitives
            .iter()
            .map(|prim| prim.sdf(p))
            .fold(f64::INFINITY, f64::min)
    }

    fn closest_primitive(&self, p: &Vec3) -> Option<&Primitive> {
        self.primitives
            .iter()
            .min_by(|a, b| a.sdf(p).total_cmp(&b.sdf(p)))
    }

    pub fn normal(&self, p: &Vec3) -> Vec3 {
        self.closest_primitive(p)
            .map(|prim| prim.normal(p))
            .unwrap_or_else(Vec3::z)
    }

    /// Sphere-traces one world-space ray; returns hit distance along the ray.
    pub fn trace(&self, origin: &Vec3, dir: &Vec3) -> Option<f64> {
        if self.primitives.is_empty() {
            return None;
        }
        let mut t = 0.0;
        for _ in 0..TRACE_MAX_STEPS {
            let d = self.sdf(&(origin + dir * t));
            if d.abs() < TRACE_EPS {
                return Some(t);
            }
            t += d;
            if t > TRACE_MAX_DIST || t < 0.0 {
                return None;
            }
        }
        None
    }

    /// Renders a noiseless or depth-noisy RGB-D frame at `camera_pose`
    /// (world-from-camera). Depth noise is Gaussian with sigma
    /// `noise_sigma * d^2`, seeded for reproducibility; misses get depth 0.
    pub fn render_frame(
        &self,
        camera_pose: &Pose,
        k: &Intrinsics,
        noise_sigma: f64,
        seed: u64,
    ) -> RgbdFrame {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let light = Vec3::new(LIGHT_DIR[0], LIGHT_DIR[1], LIGHT_DIR[2]).normalize();
        let mut depth = vec![0.0f32; k.width * k.height];
        let mut color = vec![[0u8; 3]; k.width * k.height];
        let origin = camera_pose.translation;
        for y in 0..k.height {
            for x in 0..k.width {
                let dir_cam = Vec3::new(
                    (x as f64 - k.cx) / k.fx,
                    (y as f64 - k.cy) / k.fy,
                    1.0,
                )
                .normalize();
                let dir = camera_pose.rotate(&dir_cam);
                // One normal draw per pixel keeps the noise stream aligned
                // across noiseless and noisy renders of the same seed.
                let noise = gaussian(&mut rng);
                if let Some(t) = self.trace(&origin, &dir) {
                    let hit = origin + dir * t;
                    let n = self.normal(&hit);
                    let albedo = self
                        .closest_primitive(&hit)
                        .map(|prim| prim.albedo(&hit))
                        .unwrap_or([0, 0, 0]);
                    let lambert = 0.25 + 0.75 * n.dot(&light).max(0.0);
                    let c = [
                        (albedo[0] as f64 * lambert).round().min(255.0) as u8,
                        (albedo[1] as f64 * lambert).round().min(255.0) as u8,
                        (albedo[2] as f64 * lambert).round().min(255.0) as u8,
                    ];
                    let mut d = t * dir_cam.z;
                    if noise_sigma > 0.0 {
                        d += noise * noise_sigma * d * d;
                    }
                    let idx = y * k.width + x;
                    if d > 0.0 {
                        depth[idx] = d as f32;
                    }
                    color[idx] = c;
                }
            }
        }
        RgbdFrame {
            frame_id: 0,
            timestamp: 0.0,
            width: k.width,
            height: k.height,
            color,
            depth,
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one draw per call.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// World-from-camera pose looking from `eye` toward `target`, with the
/// camera convention x-right, y-down, z-forward and world +z up.
pub fn look_at(eye: Vec3, target: Vec3, up: Vec3) -> Pose {
    let forward = (target - eye).normalize();
    let side = forward.cross(&up);
    let side = if side.norm() < 1e-9 {
        // Degenerate when looking straight up/down; pick any lateral axis.
        forward.cross(&Vec3::x()).normalize()
    } else {
        side.normalize()
    };
    let cam_up = side.cross(&forward);
    let rot = Mat3::from_columns(&[side, -cam_up, forward]);
    Pose::new(rot, eye)
}

#[derive(Debug, Clone)]
pub enum TrajectoryKind {
    /// Circle of `radius` about `center` at `height` above it, camera always
    /// facing the centre.
    Orbit {
        center: Vec3,
        radius: f64,
        height: f64,
    },
    /// Straight segment with a fixed orientation facing `target`.
    Line {
        start: Vec3,
        end: Vec3,
        target: Vec3,
    },
    /// Closed rounded-rectangle path in the xy-plane, camera facing along
    /// the direction of travel; the last pose equals the first.
    Loop {
        center: Vec3,
        half_width: f64,
        half_height: f64,
        corner_radius: f64,
        height: f64,
    },
}

/// Generates `n_frames` world-from-camera poses along a scripted path.
pub fn scripted_trajectory(kind: &TrajectoryKind, n_frames: usize) -> Vec<Pose> {
    assert!(n_frames >= 2, "need at least two frames");
    match kind {
        TrajectoryKind::Orbit {
            center,
            radius,
            height,
        } => (0..n_frames)
            .map(|i| {
                let theta = 2.0 * std::f64::consts::PI * i as f64 / n_frames as f64;
                let eye = center
                    + Vec3::new(radius * theta.cos(), radius * theta.sin(), *height);
                look_at(eye, *center, Vec3::z())
            })
            .collect(),
        TrajectoryKind::Line { start, end, target } => {
            let pose0 = look_at(*start, *target, Vec3::z());
            (0..n_frames)
                .map(|i| {
                    let s = i as f64 / (n_frames - 1) as f64;
                    Pose::new(pose0.rotation, start + (end - start) * s)
                })
                .collect()
        }
        TrajectoryKind::Loop {
            center,
            half_width,
            half_height,
            corner_radius,
            height,
        } => {
            let mut poses: Vec<Pose> = (0..n_frames - 1)
                .map(|i| {
                    let s = i as f64 / (n_frames - 1) as f64;
                    loop_pose(*center, *half_width, *half_height, *corner_radius, *height, s)
                })
                .collect();
            // Closed by construction: reuse the exact starting pose.
            poses.push(poses[0]);
            poses
        }
    }
}

/// Position and tangent on a rounded rectangle at normalised arc length
/// `s` in [0,1), walked counterclockwise from the bottom-left edge start.
fn loop_pose(
    center: Vec3,
    half_width: f64,
    half_height: f64,
    corner_radius: f64,
    height: f64,
    s: f64,
) -> Pose {
    let rc = corner_radius.min(half_width).min(half_height);
    let a = half_width - rc;
    let b = half_height - rc;
    let quarter = std::f64::consts::FRAC_PI_2 * rc;
    let lengths = [
        2.0 * a, // bottom, +x
        quarter,
        2.0 * b, // right, +y
        quarter,
        2.0 * a, // top, -x
        quarter,
        2.0 * b, // left, -y
        quarter,
    ];
    let total: f64 = lengths.iter().sum();
    let mut dist = s.rem_euclid(1.0) * total;
    let mut piece = 0;
    while piece < 8 && dist > lengths[piece] {
        dist -= lengths[piece];
        piece += 1;
    }
    let (pos2, tan2) = match piece {
        0 => ((-a + dist, -half_height), (1.0, 0.0)),
        1 => corner_point((a, -b), rc, -std::f64::consts::FRAC_PI_2, dist),
        2 => ((half_width, -b + dist), (0.0, 1.0)),
        3 => corner_point((a, b), rc, 0.0, dist),
        4 => ((a - dist, half_height), (-1.0, 0.0)),
        5 => corner_point((-a, b), rc, std::f64::consts::FRAC_PI_2, dist),
        6 => ((-half_width, b - dist), (0.0, -1.0)),
        _ => corner_point((-a, -b), rc, std::f64::consts::PI, dist),
    };
    let eye = center + Vec3::new(pos2.0, pos2.1, height);
    let forward = Vec3::new(tan2.0, tan2.1, 0.0);
    look_at(eye, eye + forward, Vec3::z())
}

fn corner_point(
    c: (f64, f64),
    rc: f64,
    start_angle: f64,
    dist: f64,
) -> ((f64, f64), (f64, f64)) {
    let ang = start_angle + dist / rc;
    (
        (c.0 + rc * ang.cos(), c.1 + rc * ang.sin()),
        (-ang.sin(), ang.cos()),
    )
}

/// A randomly furnished room: floor, two walls, and a few coloured boxes
/// and spheres. Deterministic in the seed.
pub fn random_room(seed: u64) -> AnalyticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9).wrapping_add(17));
    let mut prims = vec![
        Primitive::plane(
            Vec3::zeros(),
            Vec3::z(),
            Texture::Checker([200, 200, 205], [90, 95, 110], 0.75),
        ),
        Primitive::plane(
            Vec3::new(0.0, 4.0, 0.0),
            Vec3::new(0.0, -1.0, 0.0),
            Texture::Checker([180, 140, 110], [120, 80, 60], 0.6),
        ),
        Primitive::plane(
            Vec3::new(4.0, 0.0, 0.0),
            Vec3::new(-1.0, 0.0, 0.0),
            Texture::Solid([140, 170, 150]),
        ),
    ];
    let n_boxes = rng.gen_range(2..=4);
    for _ in 0..n_boxes {
        let half = Vec3::new(
            rng.gen_range(0.15..0.5),
            rng.gen_range(0.15..0.5),
            rng.gen_range(0.2..0.7),
        );
        let center = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), half.z);
        let color = [
            rng.gen_range(60..250),
            rng.gen_range(60..250),
            rng.gen_range(60..250),
        ];
        let tex = if rng.gen_bool(0.5) {
            Texture::Checker(color, [255 - color[0], 255 - color[1], 255 - color[2]], 0.2)
        } else {
            Texture::Solid(color)
        };
        prims.push(Primitive::boxed(center, half, tex));
    }
    let n_spheres = rng.gen_range(1..=2);
    for _ in 0..n_spheres {
        let radius = rng.gen_range(0.2..0.5);
        let center = Vec3::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(radius..1.2),
        );
        let color = [
            rng.gen_range(60..250),
            rng.gen_range(60..250),
            rng.gen_range(60..250),
        ];
        prims.push(Primitive::sphere(center, radius, Texture::Solid(color)));
    }
    AnalyticScene::new(prims)
}

fn parse_vec3(parts: &mut std::slice::Iter<'_, &str>, key: &str) -> Result<Vec3, ConfigError> {
    let mut v = [0.0f64; 3];
    for slot in &mut v {
        *slot = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| ConfigError::BadValue {
                key: key.to_string(),
                expected: "3 floats",
                value: String::new(),
            })?;
    }
    Ok(Vec3::new(v[0], v[1], v[2]))
}

fn parse_color(parts: &mut std::slice::Iter<'_, &str>, key: &str) -> Result<[u8; 3], ConfigError> {
    let mut c = [0u8; 3];
    for slot in &mut c {
        *slot = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| ConfigError::BadValue {
                key: key.to_string(),
                expected: "3 bytes",
                value: String::new(),
            })?;
    }
    Ok(c)
}

fn parse_texture(
    parts: &mut std::slice::Iter<'_, &str>,
    key: &str,
    base: [u8; 3],
) -> Result<Texture, ConfigError> {
    match parts.next() {
        Some(&"checker") => {
            let second = parse_color(parts, key)?;
            let scale = parts
                .next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| ConfigError::BadValue {
                    key: key.to_string(),
                    expected: "checker scale",
                    value: String::new(),
                })?;
            Ok(Texture::Checker(base, second, scale))
        }
        Some(other) => Err(ConfigError::BadValue {
            key: key.to_string(),
            expected: "checker or end of line",
            value: other.to_string(),
        }),
        None => Ok(Texture::Solid(base)),
    }
}

/// Parses a scene from the key=value dialect:
/// `primitive_N = sphere cx cy cz radius r g b [checker r2 g2 b2 scale]`
/// (`box` takes half extents, `plane` a point and normal).
pub fn scene_from_config(cfg: &KvConfig) -> Result<AnalyticScene, ConfigError> {
    let count = cfg.get_usize("primitive_count")?.unwrap_or(0);
    let mut prims = Vec::with_capacity(count);
    for i in 0..count {
        let key = format!("primitive_{i}");
        let value = cfg.require(&key)?;
        let tokens: Vec<&str> = value.split_whitespace().collect();
        let mut parts = tokens.iter();
        let kind = *parts.next().ok_or_else(|| ConfigError::BadValue {
            key: key.clone(),
            expected: "primitive kind",
            value: value.to_string(),
        })?;
        let prim = match kind {
            "sphere" => {
                let center = parse_vec3(&mut parts, &key)?;
                let radius = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| ConfigError::BadValue {
                        key: key.clone(),
                        expected: "radius",
                        value: value.to_string(),
                    })?;
                let color = parse_color(&mut parts, &key)?;
                Primitive::sphere(center, radius, parse_texture(&mut parts, &key, color)?)
            }
            "box" => {
                let center = parse_vec3(&mut parts, &key)?;
                let half = parse_vec3(&mut parts, &key)?;
                let color = parse_color(&mut parts, &key)?;
                Primitive::boxed(center, half, parse_texture(&mut parts, &key, color)?)
            }
            "plane" => {
                let point = parse_vec3(&mut parts, &key)?;
                let normal = parse_vec3(&mut parts, &key)?;
                let color = parse_color(&mut parts, &key)?;
                Primitive::plane(point, normal, parse_texture(&mut parts, &key, color)?)
            }
            other => {
                return Err(ConfigError::BadValue {
                    key: key.clone(),
                    expected: "sphere|box|plane",
                    value: other.to_string(),
                })
            }
        };
        prims.push(prim);
    }
    Ok(AnalyticScene::new(prims))
}

/// Serialises a scene into the same dialect [`scene_from_config`] reads.
pub fn scene_to_config(scene: &AnalyticScene) -> KvConfig {
    let mut cfg = KvConfig::default();
    cfg.set("primitive_count", scene.primitives.len());
    for (i, prim) in scene.primitives.iter().enumerate() {
        let tex = |t: &Texture, base: &mut String| match *t {
            Texture::Solid(c) => {
                base.push_str(&format!(" {} {} {}", c[0], c[1], c[2]));
            }
            Texture::Checker(a, b, scale) => {
                base.push_str(&format!(
                    " {} {} {} checker {} {} {} {}",
                    a[0], a[1], a[2], b[0], b[1], b[2], scale
                ));
            }
        };
        let mut line = match prim.shape {
            Shape::Sphere { radius } => {
                let c = prim.pose.translation;
                format!("sphere {} {} {} {}", c.x, c.y, c.z, radius)
            }
            Shape::Box { half_extents } => {
                let c = prim.pose.translation;
                format!(
                    "box {} {} {} {} {} {}",
                    c.x, c.y, c.z, half_extents.x, half_extents.y, half_extents.z
                )
            }
            Shape::Plane => {
                let p = prim.pose.translation;
                let n = prim.pose.rotation.column(2);
                format!("plane {} {} {} {} {} {}", p.x, p.y, p.z, n[0], n[1], n[2])
            }
        };
        tex(&prim.texture, &mut line);
        cfg.set(&format!("primitive_{i}"), line);
    }
    cfg
}

/// Parses a trajectory description from the key=value dialect.
pub fn trajectory_from_config(cfg: &KvConfig) -> Result<TrajectoryKind, ConfigError> {
    let kind = cfg.get("trajectory").unwrap_or("orbit");
    let vec_key = |key: &str, default: Vec3| -> Result<Vec3, ConfigError> {
        match cfg.get(key) {
            None => Ok(default),
            Some(text) => {
                let tokens: Vec<&str> = text.split_whitespace().collect();
                let mut it = tokens.iter();
                parse_vec3(&mut it, key)
            }
        }
    };
    match kind {
        "orbit" => Ok(TrajectoryKind::Orbit {
            center: vec_key("center", Vec3::new(0.0, 0.0, 0.5))?,
            radius: cfg.get_f64("orbit_radius")?.unwrap_or(2.5),
            height: cfg.get_f64("orbit_height")?.unwrap_or(1.0),
        }),
        "line" => Ok(TrajectoryKind::Line {
            start: vec_key("line_start", Vec3::new(0.0, 0.0, 1.0))?,
            end: vec_key("line_end", Vec3::new(3.0, 0.0, 1.0))?,
            target: vec_key("line_target", Vec3::new(1.5, 3.0, 1.0))?,
        }),
        "loop" => Ok(TrajectoryKind::Loop {
            center: vec_key("center", Vec3::zeros())?,
            half_width: cfg.get_f64("loop_half_width")?.unwrap_or(1.0),
            half_height: cfg.get_f64("loop_half_height")?.unwrap_or(1.0),
            corner_radius: cfg.get_f64("loop_corner_radius")?.unwrap_or(0.3),
            height: cfg.get_f64("loop_height")?.unwrap_or(1.0),
        }),
        other => Err(ConfigError::BadValue {
            key: "trajectory".to_string(),
            expected: "orbit|line|loop",
            value: other.to_string(),
        }),
    }
}
