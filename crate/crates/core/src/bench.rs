//! Throughput measurements for the two per-image hot paths.

use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::clockmix::{self, Label, LabeledImage};
use crate::error::{Error, Result};
use crate::geometry::FaceCenter;
use crate::shuffle::{self, GridPermutation};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    pub op: &'static str,
    pub size: u32,
    pub threads: usize,
    pub ops_per_sec: f64,
}

impl Throughput {
    pub const HEADER: &'static str = "op,size,threads,ops_per_sec";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{:.1}",
            self.op, self.size, self.threads, self.ops_per_sec
        )
    }
}

/// Run `op(k)` for `k = 0, 1, ...` until `duration` has passed; ops per second.
pub fn measure_single(duration: Duration, op: impl Fn(usize)) -> f64 {
    let start = Instant::now();
    let mut k = 0usize;
    while start.elapsed() < duration || k == 0 {
        op(k);
        k += 1;
    }
    k as f64 / start.elapsed().as_secs_f64()
}

/// Same as [`measure_single`], with every worker of a `threads`-sized pool
/// running the loop concurrently. Reports aggregate ops per second.
pub fn measure_parallel(
    threads: usize,
    duration: Duration,
    op: impl Fn(usize) + Sync,
) -> Result<f64> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::config(format!("cannot start {threads} threads: {e}")))?;
    let stop = AtomicBool::new(false);
    let start = Instant::now();
    let counts = pool.broadcast(|ctx| {
        let mut k = 0usize;
        loop {
            op(ctx.index() + k * threads);
            k += 1;
            if stop.load(Ordering::Relaxed) || start.elapsed() >= duration {
                stop.store(true, Ordering::Relaxed);
                break;
            }
        }
        k
    });
    Ok(counts.iter().sum::<usize>() as f64 / start.elapsed().as_secs_f64())
}

fn noise(size: u32, rng: &mut ChaCha8Rng) -> RgbImage {
    let mut img = RgbImage::new(size, size);
    for p in img.pixels_mut() {
        *p = Rgb([rng.random(), rng.random(), rng.random()]);
    }
    img
}

struct Fixture {
    a: LabeledImage,
    b: LabeledImage,
    sweeps: Vec<(f64, f64)>,
    perms: Vec<GridPermutation>,
    center: FaceCenter,
}

impl Fixture {
    fn new(size: u32) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(size as u64);
        let sweeps = (0..64)
            .map(|_| (rng.random_range(45.0..=315.0), rng.random_range(0.0..360.0)))
            .collect();
        let grans: Vec<u32> = [2, 4, 8].into_iter().filter(|g| size.is_multiple_of(*g)).collect();
        if grans.is_empty() {
            return Err(Error::config(format!(
                "size {size} is not divisible by 2, 4 or 8"
            )));
        }
        let perms = (0..64)
            .map(|k| shuffle::random_permutation(&mut rng, grans[k % grans.len()]))
            .collect::<Result<_>>()?;
        Ok(Self {
            a: LabeledImage::new(noise(size, &mut rng), Label::Real),
            b: LabeledImage::new(noise(size, &mut rng), Label::Fake),
            sweeps,
            perms,
            center: FaceCenter::new(size / 2, size / 2),
        })
    }

    fn mix(&self, k: usize) {
        let (rho, base) = self.sweeps[k % self.sweeps.len()];
        let out =
            clockmix::clockmix_pair(&self.a, &self.b, rho, base, self.center).expect("valid sweep");
        std::hint::black_box(out);
    }

    fn permute(&self, k: usize) {
        let out = shuffle::apply_permutation(&self.a.pixels, &self.perms[k % self.perms.len()])
            .expect("divisible size");
        std::hint::black_box(out);
    }
}

/// Single-thread and `threads`-way throughput of `clockmix_pair` and
/// `apply_permutation` on `size x size` images.
pub fn run(size: u32, threads: usize, duration: Duration) -> Result<Vec<Throughput>> {
    if size < 8 {
        return Err(Error::config("bench size must be at least 8"));
    }
    if threads == 0 {
        return Err(Error::config("threads must be >= 1"));
    }
    let fx = Fixture::new(size)?;
    // Warm the angle cache outside the timed region.
    fx.mix(0);
    let mut out = Vec::with_capacity(4);
    let ops: [(&'static str, &(dyn Fn(usize) + Sync)); 2] = [
        ("clockmix_pair", &|k| fx.mix(k)),
        ("apply_permutation", &|k| fx.permute(k)),
    ];
    for (name, op) in ops {
        out.push(Throughput {
            op: name,
            size,
            threads: 1,
            ops_per_sec: measure_single(duration, op),
        });
        out.push(Throughput {
            op: name,
            size,
            threads,
            ops_per_sec: measure_parallel(threads, duration, op)?,
        });
    }
    Ok(out)
}
