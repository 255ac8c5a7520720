//! Ground-truth 2.5D world: per-cell material, height and albedo, a ray-cast
//! top-down renderer with exact labels, a noisy infrared range sensor, and
//! soil removal on grip.
//!
//! The bed lives in the arm-base frame with z up; the undisturbed soil
//! surface sits near z = 0 and the bed floor at `-soil_depth`. All operations
//! are deterministic given (config, seed).

use nalgebra::Vector3;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{pixel_ray, CameraIntrinsics, Pose};
use crate::img::{DepthImage, Mask, RgbImage};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TerrainError {
    #[error("terrain dimensions must be at least 1x1 with positive cell size")]
    InvalidDims,
    #[error("rock fraction must lie in [0, 1], got {0}")]
    InvalidRockFraction(f64),
    #[error("{0} must be non-negative")]
    NegativeParameter(&'static str),
}

/// Material of one bed cell. Only soil may be sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialClass {
    Soil,
    Rock,
    Root,
    Grass,
}

impl MaterialClass {
    pub fn pickable(self) -> bool {
        self == MaterialClass::Soil
    }
}

/// Albedo distribution for one material: a base color, a per-cell brightness
/// factor and a small per-channel jitter. Bands for different materials are
/// disjoint in chromaticity under the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlbedoBand {
    pub base: [f64; 3],
    pub brightness_jitter: f64,
    pub channel_jitter: f64,
}

impl AlbedoBand {
    fn sample(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        let factor = 1.0 + self.brightness_jitter * rng.random_range(-1.0..=1.0);
        let mut rgb = [0.0; 3];
        for (out, base) in rgb.iter_mut().zip(self.base) {
            let jitter = self.channel_jitter * rng.random_range(-1.0..=1.0);
            *out = (base * factor + jitter).clamp(0.0, 1.0);
        }
        rgb
    }
}

/// Additive range-noise model of the infrared depth sensor. The standard
/// deviation grows linearly with range; readings off rock carry an extra bias.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthNoiseModel {
    pub sigma0: f64,
    pub sigma_slope: f64,
    pub rock_bias: f64,
}

impl DepthNoiseModel {
    pub const NOISELESS: DepthNoiseModel = DepthNoiseModel { sigma0: 0.0, sigma_slope: 0.0, rock_bias: 0.0 };

    pub fn validate(&self) -> Result<(), TerrainError> {
        if self.sigma0 < 0.0 {
            return Err(TerrainError::NegativeParameter("sigma0"));
        }
        if self.sigma_slope < 0.0 {
            return Err(TerrainError::NegativeParameter("sigma_slope"));
        }
        Ok(())
    }
}

impl Default for DepthNoiseModel {
    fn default() -> Self {
        // rock_bias is negative: rock returns read slightly short.
        DepthNoiseModel { sigma0: 0.003, sigma_slope: 0.005, rock_bias: -0.004 }
    }
}

/// Generation parameters for a synthetic bed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TerrainConfig {
    pub nx: u32,
    pub ny: u32,
    pub cell_size: f64,
    /// World xy of the bed's minimum corner.
    pub origin: [f64; 2],
    pub soil_depth: f64,
    pub rock_fraction: f64,
    pub rock_cluster_radius: f64,
    pub height_roughness: f64,
    pub rock_height_bump: f64,
    pub soil_albedo: AlbedoBand,
    pub rock_albedo: AlbedoBand,
    pub background: [f64; 3],
}

/// Bed matching the physical apparatus: 1.016 m (40 in) square, 0.152 m
/// (6 in) of soil, centered 0.55 m in front of the arm base.
impl Default for TerrainConfig {
    fn default() -> Self {
        TerrainConfig {
            nx: 128,
            ny: 128,
            cell_size: 1.016 / 128.0,
            origin: [0.55 - 1.016 / 2.0, -1.016 / 2.0],
            soil_depth: 0.152,
            rock_fraction: 0.0,
            rock_cluster_radius: 0.055,
            height_roughness: 0.012,
            rock_height_bump: 0.015,
            soil_albedo: AlbedoBand { base: [0.42, 0.30, 0.16], brightness_jitter: 0.12, channel_jitter: 0.02 },
            rock_albedo: AlbedoBand { base: [0.54, 0.53, 0.52], brightness_jitter: 0.15, channel_jitter: 0.015 },
            background: [0.05, 0.05, 0.08],
        }
    }
}

/// A ray/terrain intersection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RayHit {
    pub ix: u32,
    pub iy: u32,
    pub range: f64,
    pub point: Vector3<f64>,
}

/// One rendered capture: color, exact pickable labels and optical-axis depth,
/// all derived from the same per-pixel ray cast.
#[derive(Debug, Clone)]
pub struct RenderedView {
    pub rgb: RgbImage,
    pub mask: Mask,
    pub depth: DepthImage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainGrid {
    nx: u32,
    ny: u32,
    cell_size: f64,
    origin: [f64; 2],
    soil_depth: f64,
    background: [f64; 3],
    height: Vec<f64>,
    material: Vec<MaterialClass>,
    albedo: Vec<[f64; 3]>,
    /// Upper bound on cell heights; only lowered operations run after build.
    z_top: f64,
}

const LIGHT_DIR: [f64; 3] = [0.30, 0.20, 0.93];
const AMBIENT: f64 = 0.25;

/// Synthesizes a bed: smooth height relief, clustered rock placement hitting
/// the requested fraction exactly (cell-count rounded), and per-cell albedo
/// drawn from the configured bands.
pub fn generate_terrain(cfg: &TerrainConfig, seed: u64) -> Result<TerrainGrid, TerrainError> {
    if cfg.nx < 1 || cfg.ny < 1 || cfg.cell_size <= 0.0 {
        return Err(TerrainError::InvalidDims);
    }
    if !(0.0..=1.0).contains(&cfg.rock_fraction) {
        return Err(TerrainError::InvalidRockFraction(cfg.rock_fraction));
    }
    for (name, v) in [
        ("soil_depth", cfg.soil_depth),
        ("rock_cluster_radius", cfg.rock_cluster_radius),
        ("height_roughness", cfg.height_roughness),
        ("rock_height_bump", cfg.rock_height_bump),
    ] {
        if v < 0.0 {
            return Err(TerrainError::NegativeParameter(name));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (cfg.nx as usize) * (cfg.ny as usize);

    // Smooth relief: bilinearly interpolated value noise on a coarse lattice.
    let spacing = 8u32;
    let lx = cfg.nx / spacing + 2;
    let ly = cfg.ny / spacing + 2;
    let lattice: Vec<f64> =
        (0..(lx as usize) * (ly as usize)).map(|_| rng.random_range(-1.0..=1.0)).collect();
    let mut height = vec![0.0f64; n];
    for iy in 0..cfg.ny {
        for ix in 0..cfg.nx {
            let gx = ix as f64 / spacing as f64;
            let gy = iy as f64 / spacing as f64;
            let (x0, y0) = (gx.floor() as u32, gy.floor() as u32);
            let (fx, fy) = (gx - x0 as f64, gy - y0 as f64);
            let at = |x: u32, y: u32| lattice[(y.min(ly - 1) as usize) * lx as usize + x.min(lx - 1) as usize];
            let v = at(x0, y0) * (1.0 - fx) * (1.0 - fy)
                + at(x0 + 1, y0) * fx * (1.0 - fy)
                + at(x0, y0 + 1) * (1.0 - fx) * fy
                + at(x0 + 1, y0 + 1) * fx * fy;
            height[(iy as usize) * cfg.nx as usize + ix as usize] = v * cfg.height_roughness;
        }
    }

    // Clustered rock: stamp disks until the exact target count is covered,
    // then trim the tail of the last disk back to soil.
    let target = (cfg.rock_fraction * n as f64).round() as usize;
    let mut material = vec![MaterialClass::Soil; n];
    let mut placed: Vec<usize> = Vec::with_capacity(target);
    let bed_w = cfg.nx as f64 * cfg.cell_size;
    let bed_h = cfg.ny as f64 * cfg.cell_size;
    let mut stall = 0u32;
    while placed.len() < target {
        let cx = rng.random_range(0.0..bed_w);
        let cy = rng.random_range(0.0..bed_h);
        let radius = cfg.rock_cluster_radius * rng.random_range(0.7..=1.3);
        let before = placed.len();
        stamp_disk(cfg, &mut material, &mut placed, cx, cy, radius);
        if placed.len() == before {
            stall += 1;
            if stall > 300 {
                grow_rock(cfg, &mut material, &mut placed, target);
                break;
            }
        } else {
            stall = 0;
        }
    }
    for &idx in placed.iter().skip(target) {
        material[idx] = MaterialClass::Soil;
    }
    placed.truncate(target);

    for (h, m) in height.iter_mut().zip(&material) {
        if *m == MaterialClass::Rock {
            *h += cfg.rock_height_bump;
        }
    }

    let albedo: Vec<[f64; 3]> = material
        .iter()
        .map(|m| match m {
            MaterialClass::Rock => cfg.rock_albedo.sample(&mut rng),
            _ => cfg.soil_albedo.sample(&mut rng),
        })
        .collect();

    let z_top = height.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(TerrainGrid {
        nx: cfg.nx,
        ny: cfg.ny,
        cell_size: cfg.cell_size,
        origin: cfg.origin,
        soil_depth: cfg.soil_depth,
        background: cfg.background,
        height,
        material,
        albedo,
        z_top,
    })
}

fn stamp_disk(cfg: &TerrainConfig, material: &mut [MaterialClass], placed: &mut Vec<usize>, cx: f64, cy: f64, radius: f64) {
    let r_cells = (radius / cfg.cell_size).ceil() as i64;
    let ix0 = (cx / cfg.cell_size).floor() as i64;
    let iy0 = (cy / cfg.cell_size).floor() as i64;
    for iy in (iy0 - r_cells)..=(iy0 + r_cells) {
        for ix in (ix0 - r_cells)..=(ix0 + r_cells) {
            if ix < 0 || iy < 0 || ix >= cfg.nx as i64 || iy >= cfg.ny as i64 {
                continue;
            }
            let px = (ix as f64 + 0.5) * cfg.cell_size;
            let py = (iy as f64 + 0.5) * cfg.cell_size;
            let idx = (iy as usize) * cfg.nx as usize + ix as usize;
            let covers_center = ix == ix0 && iy == iy0;
            if (covers_center || (px - cx).hypot(py - cy) <= radius) && material[idx] == MaterialClass::Soil {
                material[idx] = MaterialClass::Rock;
                placed.push(idx);
            }
        }
    }
}

/// Fallback for extreme fractions: grow existing clusters (or start one at
/// the bed center) in raster order until the target count is reached.
fn grow_rock(cfg: &TerrainConfig, material: &mut [MaterialClass], placed: &mut Vec<usize>, target: usize) {
    let n = material.len();
    if placed.is_empty() && target > 0 {
        let idx = (cfg.ny as usize / 2) * cfg.nx as usize + cfg.nx as usize / 2;
        material[idx] = MaterialClass::Rock;
        placed.push(idx);
    }
    let mut cursor = 0usize;
    while placed.len() < target && cursor < placed.len() {
        let idx = placed[cursor];
        cursor += 1;
        let (ix, iy) = ((idx % cfg.nx as usize) as i64, (idx / cfg.nx as usize) as i64);
        for (dx, dy) in [(1i64, 0i64), (0, 1), (-1, 0), (0, -1)] {
            let (jx, jy) = (ix + dx, iy + dy);
            if jx < 0 || jy < 0 || jx >= cfg.nx as i64 || jy >= cfg.ny as i64 {
                continue;
            }
            let j = (jy as usize) * cfg.nx as usize + jx as usize;
            if material[j] == MaterialClass::Soil {
                material[j] = MaterialClass::Rock;
                placed.push(j);
                if placed.len() >= target {
                    return;
                }
            }
        }
        if cursor == placed.len() && placed.len() < target {
            // disconnected leftovers: fill raster order
            for j in 0..n {
                if material[j] == MaterialClass::Soil {
                    material[j] = MaterialClass::Rock;
                    placed.push(j);
                    if placed.len() >= target {
                        return;
                    }
                }
            }
        }
    }
}

impl TerrainGrid {
    pub fn nx(&self) -> u32 {
        self.nx
    }
    pub fn ny(&self) -> u32 {
        self.ny
    }
    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }
    pub fn origin(&self) -> [f64; 2] {
        self.origin
    }
    pub fn cell_area(&self) -> f64 {
        self.cell_size * self.cell_size
    }
    /// Lowest height excavation may reach.
    pub fn floor_z(&self) -> f64 {
        -self.soil_depth
    }

    fn idx(&self, ix: u32, iy: u32) -> usize {
        (iy as usize) * self.nx as usize + ix as usize
    }

    pub fn height_at(&self, ix: u32, iy: u32) -> f64 {
        self.height[self.idx(ix, iy)]
    }

    pub fn material_at(&self, ix: u32, iy: u32) -> MaterialClass {
        self.material[self.idx(ix, iy)]
    }

    pub fn albedo_at(&self, ix: u32, iy: u32) -> [f64; 3] {
        self.albedo[self.idx(ix, iy)]
    }

    pub fn rock_fraction(&self) -> f64 {
        let rocks = self.material.iter().filter(|m| **m == MaterialClass::Rock).count();
        rocks as f64 / self.material.len() as f64
    }

    /// Cell containing world (x, y), if inside the bed.
    pub fn cell_at_world(&self, x: f64, y: f64) -> Option<(u32, u32)> {
        let fx = (x - self.origin[0]) / self.cell_size;
        let fy = (y - self.origin[1]) / self.cell_size;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let (ix, iy) = (fx.floor() as u32, fy.floor() as u32);
        (ix < self.nx && iy < self.ny).then_some((ix, iy))
    }

    pub fn material_at_world(&self, x: f64, y: f64) -> Option<MaterialClass> {
        self.cell_at_world(x, y).map(|(ix, iy)| self.material_at(ix, iy))
    }

    pub fn surface_height_at(&self, x: f64, y: f64) -> Option<f64> {
        self.cell_at_world(x, y).map(|(ix, iy)| self.height_at(ix, iy))
    }

    /// First intersection of a ray with the height field, by quarter-cell
    /// marching refined with bisection. `dir` must be unit length.
    pub fn raycast(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<RayHit> {
        let below = |p: &Vector3<f64>| -> bool {
            match self.cell_at_world(p.x, p.y) {
                Some((ix, iy)) => p.z <= self.height_at(ix, iy),
                None => false,
            }
        };

        let step = self.cell_size / 4.0;
        let mut t = 0.0f64;
        // fast-forward a ray that starts above all terrain
        if origin.z > self.z_top {
            if dir.z >= -1e-12 {
                return None;
            }
            t = ((origin.z - self.z_top) / -dir.z - step).max(0.0);
        }
        let t_max = if dir.z < -1e-12 {
            (origin.z - (self.floor_z() - 0.5)) / -dir.z
        } else {
            50.0
        };

        let mut prev_t = t;
        let mut below_prev = below(&(origin + dir * t));
        if below_prev {
            // started at or under the surface
            let p = origin + dir * t;
            let (ix, iy) = self.cell_at_world(p.x, p.y)?;
            return Some(RayHit { ix, iy, range: t, point: p });
        }
        while t <= t_max {
            t += step;
            let p = origin + dir * t;
            if below(&p) {
                // bisect (prev_t, t] down to ~1e-9 m
                let (mut lo, mut hi) = (prev_t, t);
                for _ in 0..40 {
                    let mid = 0.5 * (lo + hi);
                    if below(&(origin + dir * mid)) {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                let point = origin + dir * hi;
                let (ix, iy) = self.cell_at_world(point.x, point.y)?;
                return Some(RayHit { ix, iy, range: hi, point });
            }
            prev_t = t;
            below_prev = false;
            let _ = below_prev;
        }
        None
    }

    /// Outward surface normal at a cell, from central height differences.
    fn normal_at(&self, ix: u32, iy: u32) -> Vector3<f64> {
        let xm = self.height_at(ix.saturating_sub(1), iy);
        let xp = self.height_at((ix + 1).min(self.nx - 1), iy);
        let ym = self.height_at(ix, iy.saturating_sub(1));
        let yp = self.height_at(ix, (iy + 1).min(self.ny - 1));
        Vector3::new((xm - xp) / (2.0 * self.cell_size), (ym - yp) / (2.0 * self.cell_size), 1.0).normalize()
    }

    /// Renders color, ground-truth pickable mask and depth in a single pass,
    /// so label and color always describe the same ray hit.
    pub fn render_view(&self, cam: &Pose, k: &CameraIntrinsics) -> RenderedView {
        let mut rgb = RgbImage::new(k.width, k.height).expect("validated intrinsics");
        let mut mask = Mask::new(k.width, k.height).expect("validated intrinsics");
        let mut depth = DepthImage::new(k.width, k.height).expect("validated intrinsics");
        let cam_inv = cam.invert();
        let light = Vector3::from_column_slice(&LIGHT_DIR).normalize();
        let origin = *cam.translation();
        for py in 0..k.height {
            for px in 0..k.width {
                let dir = cam.transform_direction(&pixel_ray(k, px as f64, py as f64));
                match self.raycast(&origin, &dir) {
                    Some(hit) => {
                        let shade = self.normal_at(hit.ix, hit.iy).dot(&light).clamp(AMBIENT, 1.0);
                        let a = self.albedo_at(hit.ix, hit.iy);
                        rgb.set(px, py, [a[0] * shade, a[1] * shade, a[2] * shade]);
                        mask.set(px, py, self.material_at(hit.ix, hit.iy).pickable() as u8);
                        depth.set(px, py, Some(cam_inv.transform_point(&hit.point).z));
                    }
                    None => {
                        rgb.set(px, py, self.background);
                        mask.set(px, py, 0);
                        depth.set(px, py, None);
                    }
                }
            }
        }
        RenderedView { rgb, mask, depth }
    }

    pub fn render_rgb(&self, cam: &Pose, k: &CameraIntrinsics) -> RgbImage {
        self.render_view(cam, k).rgb
    }

    pub fn ground_truth_mask(&self, cam: &Pose, k: &CameraIntrinsics) -> Mask {
        self.render_view(cam, k).mask
    }

    /// One range measurement along the sensor's +Z axis: true range plus
    /// range-dependent Gaussian noise plus a bias when the beam lands on
    /// rock, clamped at zero. `None` is a no-return (dropout).
    pub fn ir_depth_reading(&self, sensor: &Pose, noise: &DepthNoiseModel, rng: &mut ChaCha8Rng) -> Option<f64> {
        let dir = sensor.transform_direction(&Vector3::new(0.0, 0.0, 1.0));
        let hit = self.raycast(sensor.translation(), &dir)?;
        let mut reading = hit.range;
        let sigma = noise.sigma0 + noise.sigma_slope * hit.range;
        if sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("validated noise model");
            reading += normal.sample(rng);
        }
        if self.material_at(hit.ix, hit.iy) == MaterialClass::Rock {
            reading += noise.rock_bias;
        }
        Some(reading.max(0.0))
    }

    /// Removes soil in a disk: each soil cell whose center lies within
    /// `radius` of the world-frame center is lowered by up to `depth`
    /// (clamped at the bed floor). Rock cells are untouched. Returns the
    /// removed volume in cubic meters.
    pub fn excavate(&mut self, center: [f64; 2], radius: f64, depth: f64) -> Result<f64, TerrainError> {
        if radius < 0.0 {
            return Err(TerrainError::NegativeParameter("radius"));
        }
        if depth < 0.0 {
            return Err(TerrainError::NegativeParameter("depth"));
        }
        let floor = self.floor_z();
        let mut volume = 0.0;
        let r_cells = (radius / self.cell_size).ceil() as i64 + 1;
        let cx = ((center[0] - self.origin[0]) / self.cell_size).floor() as i64;
        let cy = ((center[1] - self.origin[1]) / self.cell_size).floor() as i64;
        for iy in (cy - r_cells)..=(cy + r_cells) {
            for ix in (cx - r_cells)..=(cx + r_cells) {
                if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
                    continue;
                }
                let px = self.origin[0] + (ix as f64 + 0.5) * self.cell_size;
                let py = self.origin[1] + (iy as f64 + 0.5) * self.cell_size;
                if (px - center[0]).hypot(py - center[1]) > radius {
                    continue;
                }
                let idx = (iy as usize) * self.nx as usize + ix as usize;
                if self.material[idx] != MaterialClass::Soil {
                    continue;
                }
                let delta = depth.min(self.height[idx] - floor).max(0.0);
                self.height[idx] -= delta;
                volume += delta * self.cell_area();
            }
        }
        Ok(volume)
    }
}
