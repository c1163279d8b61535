//! Synthetic room scenes: static surfaces and boxes, one coloured sphere that
//! translates at constant velocity, and viewers orbiting the sphere while
//! looking at it.
//!
//! Head states are written for every frame from 0; point-cloud frames start
//! at `warmup`, so the trajectory model has history before the first frame.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::Rng;

use crate::cloud::{save_ply, Aabb, Point, PointCloudFrame, PlyFormat, SequenceManifest, Vec3};
use crate::error::{Error, Result};
use crate::seed::{self, tag};
use crate::trajectory::{HeadState, Trajectories};
use crate::viewport::look_angles;

pub const ROOM_MIN: Vec3 = [-2.0, 0.0, -2.0];
pub const ROOM_MAX: Vec3 = [2.0, 2.5, 2.0];

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    /// Point-cloud frames written.
    pub frames: usize,
    /// Index of the first point-cloud frame.
    pub warmup: usize,
    pub grid: [usize; 3],
    /// Points on walls, floor and ceiling.
    pub room_points: usize,
    pub static_objects: usize,
    pub object_points: usize,
    pub moving_points: usize,
    pub moving_color: [u8; 3],
    pub moving_radius: f64,
    pub moving_start: Vec3,
    /// Displacement per frame.
    pub velocity: Vec3,
    pub users: usize,
    pub orbit_radius: f64,
    /// Arc of starting orbit angles, degrees, centred on +z.
    pub arc: f64,
    /// Orbit speed, degrees per frame.
    pub orbit_speed: f64,
    /// Amplitude of the gaze wobble around the sphere centre, in scene units.
    pub noise: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            frames: 11,
            warmup: 48,
            grid: [2, 3, 2],
            room_points: 30_000,
            static_objects: 3,
            object_points: 1500,
            moving_points: 3000,
            moving_color: [220, 40, 30],
            moving_radius: 0.35,
            moving_start: [-0.3, 1.2, -0.8],
            velocity: [0.01, 0.0, 0.004],
            users: 8,
            orbit_radius: 1.5,
            arc: 120.0,
            orbit_speed: 0.8,
            noise: 0.15,
        }
    }
}

/// A generated scene held in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub frames: Vec<PointCloudFrame>,
    pub trajectories: Trajectories,
    pub bbox: Aabb,
    pub grid: [usize; 3],
}

fn inside(p: Vec3) -> Vec3 {
    const INSET: f64 = 1e-3;
    std::array::from_fn(|a| p[a].clamp(ROOM_MIN[a] + INSET, ROOM_MAX[a] - INSET))
}

fn jitter_color(base: [u8; 3], rng: &mut impl Rng) -> [u8; 3] {
    base.map(|c| (f64::from(c) + rng.gen_range(-12.0..12.0)).clamp(0.0, 255.0) as u8)
}

fn room_surfaces(n: usize, rng: &mut impl Rng) -> Vec<Point> {
    let [x0, y0, z0] = ROOM_MIN;
    let [x1, y1, z1] = ROOM_MAX;
    let (w, h, d) = (x1 - x0, y1 - y0, z1 - z0);
    let areas = [w * d, w * d, h * d, h * d, w * h, w * h];
    let colors = [
        [120, 90, 60],
        [235, 235, 230],
        [170, 180, 200],
        [200, 190, 160],
        [160, 200, 170],
        [190, 170, 200],
    ];
    let total: f64 = areas.iter().sum();
    let mut out = Vec::with_capacity(n);
    let mut placed = 0;
    for (s, area) in areas.iter().enumerate() {
        let count = if s + 1 == areas.len() {
            n - placed
        } else {
            (n as f64 * area / total).round() as usize
        };
        placed += count;
        for _ in 0..count {
            let (u, v): (f64, f64) = (rng.gen(), rng.gen());
            let p = match s {
                0 => [x0 + u * w, y0, z0 + v * d],
                1 => [x0 + u * w, y1, z0 + v * d],
                2 => [x0, y0 + u * h, z0 + v * d],
                3 => [x1, y0 + u * h, z0 + v * d],
                4 => [x0 + u * w, y0 + v * h, z0],
                _ => [x0 + u * w, y0 + v * h, z1],
            };
            out.push(Point::new(inside(p), jitter_color(colors[s], rng)));
        }
    }
    out
}

/// Points on the surface of an axis-aligned box resting on the floor.
fn box_points(center: Vec3, half: Vec3, n: usize, color: [u8; 3], rng: &mut impl Rng) -> Vec<Point> {
    (0..n)
        .map(|_| {
            let face = rng.gen_range(0..6);
            let axis = face / 2;
            let sign = if face % 2 == 0 { -1.0 } else { 1.0 };
            let p: Vec3 = std::array::from_fn(|a| {
                if a == axis {
                    center[a] + sign * half[a]
                } else {
                    center[a] + rng.gen_range(-half[a]..=half[a])
                }
            });
            Point::new(inside(p), jitter_color(color, rng))
        })
        .collect()
}

/// Unit-sphere surface offsets, uniformly distributed.
fn sphere_offsets(n: usize, rng: &mut impl Rng) -> Vec<Vec3> {
    (0..n)
        .map(|_| {
            let z: f64 = rng.gen_range(-1.0..=1.0);
            let phi = rng.gen_range(0.0..TAU);
            let r = (1.0 - z * z).sqrt();
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect()
}

fn static_points(spec: &SceneSpec, rng: &mut impl Rng) -> Vec<Point> {
    let mut pts = room_surfaces(spec.room_points, rng);
    let palette = [[40, 90, 200], [60, 160, 70], [210, 180, 40], [140, 60, 160], [40, 170, 170]];
    for k in 0..spec.static_objects {
        // Spread along the walls, away from the orbit.
        let angle = TAU * (k as f64 + 0.5) / spec.static_objects.max(1) as f64 + rng.gen_range(-0.2..0.2);
        let half = [rng.gen_range(0.15..0.3), rng.gen_range(0.2..0.5), rng.gen_range(0.15..0.3)];
        let center = [1.6 * angle.cos(), half[1], 1.6 * angle.sin()];
        pts.extend(box_points(center, half, spec.object_points, palette[k % palette.len()], rng));
    }
    pts
}

fn sphere_center(spec: &SceneSpec, frame: usize) -> Vec3 {
    let f = frame as f64 - spec.warmup as f64;
    std::array::from_fn(|a| spec.moving_start[a] + spec.velocity[a] * f)
}

fn head_states(spec: &SceneSpec, rng: &mut impl Rng) -> Trajectories {
    let mut t = Trajectories::default();
    for u in 0..spec.users {
        let spread = spec.arc.to_radians();
        let frac = if spec.users > 1 { u as f64 / (spec.users - 1) as f64 } else { 0.5 };
        let phase0 = TAU / 4.0 + spread * (frac - 0.5) + rng.gen_range(-0.1..0.1);
        let speed = spec.orbit_speed.to_radians() * rng.gen_range(0.7..1.3);
        let radius = spec.orbit_radius * rng.gen_range(0.85..1.15);
        let height = rng.gen_range(1.45..1.75);
        let wobble: [f64; 3] = std::array::from_fn(|_| rng.gen_range(0.0..TAU));
        let rate = rng.gen_range(0.04..0.09);
        for f in 0..spec.warmup + spec.frames {
            let c = sphere_center(spec, f);
            let phi = phase0 + speed * f as f64;
            let fr = f as f64;
            let pos = [
                c[0] + radius * phi.cos(),
                height + 0.05 * (rate * fr + wobble[0]).sin(),
                c[2] + radius * phi.sin(),
            ];
            let target: Vec3 = std::array::from_fn(|a| c[a] + spec.noise * (rate * fr * (1.0 + a as f64 * 0.3) + wobble[a]).sin());
            let dir: Vec3 = std::array::from_fn(|a| target[a] - pos[a]);
            t.insert(f, u, HeadState::new(pos, look_angles(dir)));
        }
    }
    t
}

/// Builds the scene in memory; identical specs give identical scenes.
pub fn generate(spec: &SceneSpec) -> Result<Scene> {
    if spec.frames == 0 || spec.users == 0 || spec.moving_points == 0 {
        return Err(Error::invalid("scene needs at least one frame, user and moving point"));
    }
    let mut rng = seed::rng(seed::derive(spec.seed, &[tag::SCENE]));
    let statics = static_points(spec, &mut rng);
    let offsets = sphere_offsets(spec.moving_points, &mut rng);
    let colors: Vec<[u8; 3]> = (0..spec.moving_points).map(|_| jitter_color(spec.moving_color, &mut rng)).collect();
    let trajectories = head_states(spec, &mut rng);

    let frames = (spec.warmup..spec.warmup + spec.frames)
        .map(|f| {
            let c = sphere_center(spec, f);
            let mut pts = statics.clone();
            pts.extend(offsets.iter().zip(&colors).map(|(o, &col)| {
                Point::new(inside(std::array::from_fn(|a| c[a] + spec.moving_radius * o[a])), col)
            }));
            PointCloudFrame::new(f, pts)
        })
        .collect();
    Ok(Scene {
        frames,
        trajectories,
        bbox: Aabb::new(ROOM_MIN, ROOM_MAX),
        grid: spec.grid,
    })
}

/// Writes `frames/frame_NNNN.ply`, `trajectories.csv` and `sequence.txt`
/// under `dir`, returning the manifest.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<SequenceManifest> {
    let frames_dir = dir.join("frames");
    fs::create_dir_all(&frames_dir).map_err(Error::with_path(&frames_dir))?;
    let mut entries = Vec::new();
    for f in &scene.frames {
        let path = frames_dir.join(format!("frame_{:04}.ply", f.frame_index));
        save_ply(&path, f, PlyFormat::BinaryLittleEndian)?;
        entries.push((f.frame_index, path));
    }
    let traj = dir.join("trajectories.csv");
    scene.trajectories.save(&traj)?;
    let manifest = SequenceManifest {
        grid: scene.grid,
        bbox: scene.bbox,
        frames: entries,
        trajectories: Some(traj),
    };
    let mpath = dir.join(MANIFEST_NAME);
    fs::write(&mpath, manifest.to_text(dir)).map_err(Error::with_path(&mpath))?;
    Ok(manifest)
}

pub const MANIFEST_NAME: &str = "sequence.txt";

pub fn gen_scene(spec: &SceneSpec, dir: &Path) -> Result<SequenceManifest> {
    write_scene(&generate(spec)?, dir)
}
