//! Exact squared Euclidean distance transform via the two-pass
//! lower-envelope-of-parabolas method (columns, then rows).

use alloc::vec;
use alloc::vec::Vec;

/// Stand-in for infinity that keeps parabola intersections finite.
const FAR: f64 = 1e20;

/// One-dimensional squared distance transform of a sampled function.
fn transform_1d(f: &[f64], d: &mut [f64]) {
    let n = f.len();
    let mut v = vec![0usize; n];
    let mut z = vec![0.0f64; n + 1];
    let mut k = 0usize;
    z[0] = -FAR;
    z[1] = FAR;
    for q in 1..n {
        let qf = q as f64;
        loop {
            let p = v[k] as f64;
            let s = ((f[q] + qf * qf) - (f[v[k]] + p * p)) / (2.0 * qf - 2.0 * p);
            if s <= z[k] {
                debug_assert!(k > 0);
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = FAR;
                break;
            }
        }
    }
    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let dq = q as f64 - v[k] as f64;
        d[q] = dq * dq + f[v[k]];
    }
}

/// Squared Euclidean distance from every grid cell to the nearest seed.
/// Cells with no seed anywhere map to a huge sentinel (≥ `1e20`).
pub fn squared_distance_transform(
    width: usize,
    height: usize,
    seeds: &[(usize, usize)],
) -> Vec<f64> {
    let mut grid = vec![FAR; width * height];
    for &(x, y) in seeds {
        debug_assert!(x < width && y < height, "seed out of bounds");
        grid[y * width + x] = 0.0;
    }
    if seeds.is_empty() {
        return grid;
    }
    // columns
    let mut col = vec![0.0f64; height];
    let mut out = vec![0.0f64; height];
    for x in 0..width {
        for y in 0..height {
            col[y] = grid[y * width + x];
        }
        transform_1d(&col, &mut out);
        for y in 0..height {
            grid[y * width + x] = out[y];
        }
    }
    // rows
    let mut row_out = vec![0.0f64; width];
    for y in 0..height {
        transform_1d(&grid[y * width..(y + 1) * width], &mut row_out);
        grid[y * width..(y + 1) * width].copy_from_slice(&row_out);
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(width: usize, height: usize, seeds: &[(usize, usize)]) -> Vec<f64> {
        let mut out = vec![FAR; width * height];
        for y in 0..height {
            for x in 0..width {
                for &(sx, sy) in seeds {
                    let dx = x as f64 - sx as f64;
                    let dy = y as f64 - sy as f64;
                    let d = dx * dx + dy * dy;
                    if d < out[y * width + x] {
                        out[y * width + x] = d;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn single_seed_matches_analytic_distances() {
        let d = squared_distance_transform(7, 5, &[(3, 2)]);
        assert_eq!(d[2 * 7 + 3], 0.0);
        assert_eq!(d[2 * 7], 9.0);
        assert_eq!(d[0], 13.0); // (3,2) to (0,0)
    }

    #[test]
    fn matches_brute_force_on_scattered_seeds() {
        let seeds = [(0, 0), (9, 3), (4, 7), (2, 6), (9, 9)];
        let d = squared_distance_transform(10, 10, &seeds);
        let expected = brute_force(10, 10, &seeds);
        for i in 0..d.len() {
            assert!(
                (d[i] - expected[i]).abs() < 1e-9,
                "pixel {i}: {} vs {}",
                d[i],
                expected[i]
            );
        }
    }

    #[test]
    fn no_seeds_yields_sentinel_everywhere() {
        let d = squared_distance_transform(4, 3, &[]);
        assert!(d.iter().all(|&v| v >= 1e19));
    }
}
