//! Fixtures shared by the integration and acceptance suites: synthetic
//! manifests, directory snapshots, noise images and an independent angle oracle.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Write `n` small PNGs of mixed sizes plus a manifest; every other image is fake.
pub fn synthetic_dataset(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img_dir = dir.join("src");
    std::fs::create_dir_all(&img_dir).unwrap();
    let mut lines = Vec::new();
    for k in 0..n {
        let (w, h) = [(40, 40), (48, 32), (32, 56)][k % 3];
        let base: [u8; 3] = [rng.random(), rng.random(), rng.random()];
        let img = RgbImage::from_fn(w, h, |x, y| {
            Rgb([
                base[0].wrapping_add((x * 5) as u8),
                base[1].wrapping_add((y * 3) as u8),
                base[2] ^ ((x + y) as u8),
            ])
        });
        let name = format!("img{k:03}.png");
        img.save(img_dir.join(&name)).unwrap();
        let center = if k % 4 == 0 {
            format!(r#", "center": [{}, {}]"#, w / 3, h / 2)
        } else {
            String::new()
        };
        lines.push(format!(
            r#"{{"id": "img{k:03}", "path": "src/{name}", "label": {}{center}}}"#,
            k % 2
        ));
    }
    let manifest = dir.join("manifest.jsonl");
    std::fs::write(&manifest, lines.join("\n") + "\n").unwrap();
    manifest
}

/// Every regular file under `root`, keyed by relative path.
pub fn tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

pub fn noise(w: u32, h: u32, rng: &mut ChaCha8Rng) -> RgbImage {
    let mut img = RgbImage::new(w, h);
    for p in img.pixels_mut() {
        *p = Rgb([rng.random(), rng.random(), rng.random()]);
    }
    img
}

/// Angle of pixel `(i, j)` around `(cx, cy)` in degrees, in `[0, 360)`.
pub fn pixel_angle(i: u32, j: u32, cx: u32, cy: u32) -> f64 {
    let a = (cy as f64 - i as f64)
        .atan2(j as f64 - cx as f64)
        .to_degrees();
    if a < 0.0 {
        a + 360.0
    } else {
        a
    }
}

/// Is the counter-clockwise offset of `a` from `start`, modulo 360, at most `len`?
pub fn in_arc(a: f64, start: f64, len: f64) -> bool {
    let mut d = a - start;
    if d < 0.0 {
        d += 360.0;
    }
    if d >= 360.0 {
        d = 0.0;
    }
    d <= len
}
