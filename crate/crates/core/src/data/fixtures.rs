//! Procedural stand-in dataset. Each class has its own colour scheme and
//! texture, with per-image jitter and pixel noise, so the classes are
//! separable by simple colour statistics.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::image::write_ppm;
use crate::error::{Error, Result};
use crate::model::Task;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FixtureConfig {
    pub per_class: usize,
    pub size: usize,
    pub seed: u64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            per_class: 50,
            size: 32,
            seed: 0,
        }
    }
}

struct Canvas {
    size: usize,
    px: Vec<f32>,
}

impl Canvas {
    fn new(size: usize) -> Self {
        Self {
            size,
            px: vec![0.0; size * size * 3],
        }
    }

    fn set(&mut self, x: usize, y: usize, rgb: [f32; 3]) {
        let at = (y * self.size + x) * 3;
        self.px[at..at + 3].copy_from_slice(&rgb);
    }

    fn blend(&mut self, x: usize, y: usize, rgb: [f32; 3], alpha: f32) {
        let at = (y * self.size + x) * 3;
        for (p, v) in self.px[at..at + 3].iter_mut().zip(rgb) {
            *p += (v - *p) * alpha;
        }
    }

    /// Vertical gradient from `top` to `bottom`.
    fn gradient(&mut self, top: [f32; 3], bottom: [f32; 3]) {
        let n = self.size.max(2) - 1;
        for y in 0..self.size {
            let t = y as f32 / n as f32;
            let rgb = [0, 1, 2].map(|c| top[c] + (bottom[c] - top[c]) * t);
            for x in 0..self.size {
                self.set(x, y, rgb);
            }
        }
    }

    fn finish(self, rng: &mut ChaCha8Rng, noise: f32) -> Vec<u8> {
        let shift: f32 = rng.random_range(-12.0..12.0);
        self.px
            .into_iter()
            .map(|v| {
                (v + shift + rng.random_range(-noise..=noise))
                    .round()
                    .clamp(0.0, 255.0) as u8
            })
            .collect()
    }
}

fn jitter(rng: &mut ChaCha8Rng, rgb: [f32; 3], amount: f32) -> [f32; 3] {
    rgb.map(|v| v + rng.random_range(-amount..=amount))
}

/// Renders one `size`x`size` RGB image of `class` (an index into the task's
/// class list).
pub fn render(task: Task, class: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut c = Canvas::new(size);
    let s = size as f32;
    match (task, class) {
        // dawn / dusk: warm horizon glow
        (Task::NightNet, 0) => {
            let top = jitter(rng, [235.0, 140.0, 70.0], 15.0);
            let bottom = jitter(rng, [80.0, 45.0, 70.0], 15.0);
            c.gradient(top, bottom);
        }
        // day: blue sky over a grey road
        (Task::NightNet, 1) => {
            let sky = jitter(rng, [120.0, 185.0, 245.0], 15.0);
            let road = jitter(rng, [150.0, 150.0, 145.0], 15.0);
            let horizon = rng.random_range(0.4..0.6) * s;
            for y in 0..size {
                for x in 0..size {
                    c.set(x, y, if (y as f32) < horizon { sky } else { road });
                }
            }
        }
        // night: dark with a few point lights
        (Task::NightNet, _) => {
            let base = jitter(rng, [18.0, 18.0, 40.0], 8.0);
            c.gradient(base, [10.0, 10.0, 20.0]);
            for _ in 0..rng.random_range(1..4) {
                let (x, y) = (rng.random_range(0..size), rng.random_range(0..size));
                c.set(x, y, [255.0, 230.0, 160.0]);
            }
        }
        // glare: bright lens flare disc with a horizontal streak
        (Task::GlareNet, 0) => {
            c.gradient(
                jitter(rng, [170.0, 155.0, 115.0], 15.0),
                jitter(rng, [130.0, 115.0, 85.0], 15.0),
            );
            let (cx, cy) = (
                rng.random_range(0.3..0.7) * s,
                rng.random_range(0.25..0.6) * s,
            );
            let radius = rng.random_range(0.35..0.5) * s;
            for y in 0..size {
                for x in 0..size {
                    let (dx, dy) = (x as f32 - cx, y as f32 - cy);
                    let r = (dx * dx + dy * dy).sqrt() / radius;
                    let streak = (1.0 - dy.abs() / (0.06 * s + 1.0)).max(0.0);
                    let alpha = (1.0 - r).max(0.0).powf(0.5).max(streak * 0.8);
                    c.blend(x, y, [255.0, 250.0, 225.0], alpha);
                }
            }
        }
        // no glare: evenly lit muted scene
        (Task::GlareNet, _) => {
            c.gradient(
                jitter(rng, [60.0, 75.0, 100.0], 15.0),
                jitter(rng, [35.0, 40.0, 55.0], 15.0),
            );
        }
        // clear: saturated blue sky, green ground
        (Task::PrecipitationNet, 0) => {
            let sky = jitter(rng, [90.0, 160.0, 240.0], 15.0);
            let ground = jitter(rng, [70.0, 140.0, 60.0], 15.0);
            let horizon = rng.random_range(0.45..0.6) * s;
            for y in 0..size {
                for x in 0..size {
                    c.set(x, y, if (y as f32) < horizon { sky } else { ground });
                }
            }
        }
        // rain: dull blue-grey with dark diagonal streaks
        (Task::PrecipitationNet, 1) => {
            c.gradient(
                jitter(rng, [105.0, 115.0, 130.0], 12.0),
                jitter(rng, [70.0, 75.0, 85.0], 12.0),
            );
            let phase = rng.random_range(0..4);
            for y in 0..size {
                for x in 0..size {
                    if (x + y / 3 + phase) % 4 == 0 {
                        c.blend(x, y, [40.0, 45.0, 60.0], 0.7);
                    }
                }
            }
        }
        // snow: near-white ground with bright flakes
        (Task::PrecipitationNet, _) => {
            c.gradient(
                jitter(rng, [200.0, 205.0, 215.0], 12.0),
                jitter(rng, [235.0, 238.0, 245.0], 10.0),
            );
            for _ in 0..size * size / 8 {
                let (x, y) = (rng.random_range(0..size), rng.random_range(0..size));
                c.set(x, y, [255.0, 255.0, 255.0]);
            }
        }
        // fog: washed-out low-contrast grey
        (Task::FogNet, 0) => {
            let g = rng.random_range(175.0..205.0);
            c.gradient([g, g, g + 4.0], [g - 15.0, g - 15.0, g - 12.0]);
        }
        // no fog: high-contrast colour blocks
        (Task::FogNet, _) => {
            let block = (size / 4).max(1);
            let palette = [
                [200.0, 40.0, 40.0],
                [30.0, 30.0, 30.0],
                [40.0, 120.0, 200.0],
                [60.0, 160.0, 60.0],
            ];
            for y in 0..size {
                for x in 0..size {
                    let k = (x / block + 2 * (y / block)) % palette.len();
                    c.set(x, y, palette[k]);
                }
            }
            let offset: [f32; 3] = jitter(rng, [0.0; 3], 20.0);
            for p in c.px.chunks_mut(3) {
                for ch in 0..3 {
                    p[ch] += offset[ch];
                }
            }
        }
    }
    c.finish(rng, 10.0)
}

fn class_seed(seed: u64, task: Task, class: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ ((task as u64) << 32) ^ class as u64
}

/// Writes `root/<class>/<class>_NNNN.ppm` for every class of `task`.
pub fn write_task_fixtures(
    root: &Path,
    task: Task,
    config: &FixtureConfig,
) -> Result<Vec<PathBuf>> {
    if config.size == 0 || config.per_class == 0 {
        return Err(Error::invalid(
            "fixture size and per-class count must be positive",
        ));
    }
    let mut written = Vec::new();
    for (class, name) in task.classes().iter().enumerate() {
        let dir = root.join(name);
        fs::create_dir_all(&dir)?;
        let mut rng = ChaCha8Rng::seed_from_u64(class_seed(config.seed, task, class));
        for i in 0..config.per_class {
            let rgb = render(task, class, config.size, &mut rng);
            let path = dir.join(format!("{name}_{i:04}.ppm"));
            write_ppm(&path, config.size, config.size, &rgb)?;
            written.push(path);
        }
    }
    Ok(written)
}

/// Writes one dataset per task under `root/<task key>/`.
pub fn write_all_fixtures(root: &Path, config: &FixtureConfig) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for task in Task::ALL {
        written.extend(write_task_fixtures(&root.join(task.key()), task, config)?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::image::decode_file;

    #[test]
    fn fifty_per_class_for_night() {
        let dir = tempfile::tempdir().unwrap();
        let files =
            write_task_fixtures(dir.path(), Task::NightNet, &FixtureConfig::default()).unwrap();
        assert_eq!(files.len(), 150);
        for class in ["dawn_dusk", "day", "night"] {
            assert_eq!(fs::read_dir(dir.path().join(class)).unwrap().count(), 50);
        }
        let img = decode_file(&files[0]).unwrap();
        assert_eq!((img.width, img.height), (32, 32));
    }

    #[test]
    fn same_seed_same_bytes() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let cfg = FixtureConfig {
            per_class: 3,
            size: 8,
            seed: 4,
        };
        let fa = write_all_fixtures(a.path(), &cfg).unwrap();
        let fb = write_all_fixtures(b.path(), &cfg).unwrap();
        assert_eq!(fa.len(), 3 * 10);
        for (x, y) in fa.iter().zip(&fb) {
            assert_eq!(fs::read(x).unwrap(), fs::read(y).unwrap());
        }
    }

    #[test]
    fn class_means_differ() {
        // every pair of classes within a task differs in mean colour
        for task in Task::ALL {
            let means: Vec<[f64; 3]> = (0..task.classes().len())
                .map(|class| {
                    let mut rng = ChaCha8Rng::seed_from_u64(class as u64);
                    let mut acc = [0.0; 3];
                    for _ in 0..20 {
                        for p in render(task, class, 16, &mut rng).chunks(3) {
                            for c in 0..3 {
                                acc[c] += p[c] as f64 / (20.0 * 256.0);
                            }
                        }
                    }
                    acc
                })
                .collect();
            for i in 0..means.len() {
                for j in i + 1..means.len() {
                    let d: f64 = (0..3).map(|c| (means[i][c] - means[j][c]).abs()).sum();
                    assert!(d > 20.0, "{task:?} {i} vs {j}: {d}");
                }
            }
        }
    }
}
