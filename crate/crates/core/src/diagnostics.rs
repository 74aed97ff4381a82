//! Slow reference computations used to cross-check the fast paths.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::simcore::raycast;
use crate::worldmap::{generate_map, Cell, GridMap, MapError, MapGenSpec, Point2, RoomStyle};

/// Distance to the first occupied cell found by fixed-step marching along
/// the ray, clipped at `max_range`. Accurate to within `step`.
pub fn march_ray(map: &GridMap, origin: Point2, angle: f64, max_range: f64, step: f64) -> f64 {
    let (dy, dx) = angle.sin_cos();
    let res = map.resolution();
    let mut k: u64 = 1;
    loop {
        let t = k as f64 * step;
        if t >= max_range {
            return max_range;
        }
        let col = ((origin.x + t * dx) / res).floor() as i64;
        let row = ((origin.y + t * dy) / res).floor() as i64;
        if map.is_occupied_at(col, row) {
            // the boundary lies in (t - step, t]
            return t - 0.5 * step;
        }
        k += 1;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaycastAgreement {
    pub rays: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    pub elapsed: Duration,
}

/// Compares [`raycast`] against [`march_ray`] on `maps` generated maps with
/// `rays` random free origins and headings in total.
pub fn raycast_agreement(
    seed: u64,
    maps: usize,
    rays: usize,
    step: f64,
) -> Result<RaycastAgreement, MapError> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut generated = Vec::with_capacity(maps);
    for i in 0..maps {
        let style = if i % 2 == 0 {
            RoomStyle::Open
        } else {
            RoomStyle::Rooms
        };
        generated.push(generate_map(
            seed.wrapping_add(i as u64),
            &MapGenSpec::new(20.0, 0.1, style),
        )?);
    }
    let (mut max_err, mut sum) = (0.0f64, 0.0);
    for k in 0..rays {
        let map = &generated[k % maps];
        let origin = loop {
            let p = Point2::new(
                rng.gen_range(0.0..map.width_m()),
                rng.gen_range(0.0..map.height_m()),
            );
            if map
                .world_to_cell(p)
                .is_some_and(|c| map.cell(c) == Cell::Free)
            {
                break p;
            }
        };
        let angle = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
        let fast = raycast(map, origin, angle, 10.0).expect("origin is free");
        let err = (fast - march_ray(map, origin, angle, 10.0, step)).abs();
        max_err = max_err.max(err);
        sum += err;
    }
    Ok(RaycastAgreement {
        rays,
        max_abs_error: max_err,
        mean_abs_error: sum / rays.max(1) as f64,
        elapsed: started.elapsed(),
    })
}
