use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::tensor::Tensor;

pub const HOLE_FRACTION: (f64, f64) = (0.02, 0.15);
pub const MAX_BLOBS: usize = 4;

/// Union of 1-4 random-walk blobs inside `silhouette` (`1 x H x W`),
/// covering between 2% and 15% of its area (at least one pixel).
///
/// Each blob is a lattice random walk confined to the silhouette that marks
/// every pixel it visits. A walk that keeps revisiting marked pixels jumps
/// to an unmarked silhouette pixel next to the hole, so the exact pixel
/// budget is always met.
pub fn irregular_hole_mask(rng: &mut RngState, silhouette: &Tensor) -> Result<Tensor> {
    let (h, w) = match *silhouette.shape() {
        [1, h, w] => (h, w),
        _ => return Err(Error::shape("irregular_hole_mask", silhouette.shape(), &[1, 0, 0])),
    };
    let inside: Vec<usize> = (0..h * w).filter(|&i| silhouette.data()[i] > 0.5).collect();
    if inside.is_empty() {
        return Err(Error::Degenerate("silhouette is empty".into()));
    }
    let area = inside.len() as f64;
    let lo = ((HOLE_FRACTION.0 * area).ceil() as usize).max(1);
    let hi = ((HOLE_FRACTION.1 * area).floor() as usize).max(lo).min(inside.len());
    let target = rng.range(lo as f64, hi as f64 + 1.0).floor().min(hi as f64) as usize;
    let blobs = (1 + rng.below(MAX_BLOBS)).min(target);

    let in_sil = |i: usize| silhouette.data()[i] > 0.5;
    let mut hole = vec![false; h * w];
    let mut filled = 0;
    let neighbours = |i: usize| {
        let (y, x) = (i / w, i % w);
        let mut n = Vec::with_capacity(4);
        if y > 0 {
            n.push(i - w);
        }
        if y + 1 < h {
            n.push(i + w);
        }
        if x > 0 {
            n.push(i - 1);
        }
        if x + 1 < w {
            n.push(i + 1);
        }
        n
    };

    for blob in 0..blobs {
        let quota = (target - filled) / (blobs - blob);
        let free: Vec<usize> = inside.iter().copied().filter(|&i| !hole[i]).collect();
        let mut pos = free[rng.below(free.len())];
        hole[pos] = true;
        let mut added = 1;
        let mut stale = 0;
        while added < quota {
            let options: Vec<usize> = neighbours(pos).into_iter().filter(|&n| in_sil(n)).collect();
            if !options.is_empty() {
                pos = options[rng.below(options.len())];
            }
            if !hole[pos] {
                hole[pos] = true;
                added += 1;
                stale = 0;
                continue;
            }
            stale += 1;
            if stale > 4 * (quota + 4) || options.is_empty() {
                let frontier: Vec<usize> = inside
                    .iter()
                    .copied()
                    .filter(|&i| !hole[i] && neighbours(i).into_iter().any(|n| hole[n]))
                    .collect();
                let pool = if frontier.is_empty() {
                    inside.iter().copied().filter(|&i| !hole[i]).collect()
                } else {
                    frontier
                };
                pos = pool[rng.below(pool.len())];
                hole[pos] = true;
                added += 1;
                stale = 0;
            }
        }
        filled += added;
    }
    Tensor::new(&[1, h, w], hole.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect())
}
