//! Graph-based superpixel segmentation (Felzenszwalb–Huttenlocher) over a
//! 4-connected RGB pixel grid, and the region adjacency graph built on top
//! of the resulting partition.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math;
use crate::model::ImagePlane;

#[derive(Debug, Clone, PartialEq)]
pub enum SuperpixelError {
    /// `min_size` must be at least 1.
    InvalidMinSize,
    /// `scale` must be a positive finite number.
    InvalidScale,
    /// `smoothing_sigma` must be finite and nonnegative.
    InvalidSigma,
}

impl fmt::Display for SuperpixelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SuperpixelError::InvalidMinSize => write!(f, "min_size must be at least 1"),
            SuperpixelError::InvalidScale => write!(f, "scale must be positive and finite"),
            SuperpixelError::InvalidSigma => {
                write!(f, "smoothing_sigma must be nonnegative and finite")
            }
        }
    }
}

impl core::error::Error for SuperpixelError {}

/// Pixel-count, bounding box and centroid of one region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionStats {
    pub pixel_count: usize,
    pub min_x: usize,
    pub min_y: usize,
    pub max_x: usize,
    pub max_y: usize,
    /// Mean pixel coordinate of the region, (x, y).
    pub centroid: (f64, f64),
}

/// A full partition of the pixel grid into connected regions. Region
/// indices are contiguous and assigned in row-major order of each region's
/// first pixel, so the map is canonical for a given segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperPixelPartition {
    width: usize,
    height: usize,
    region_of: Vec<u32>,
    regions: Vec<RegionStats>,
}

impl SuperPixelPartition {
    /// Builds a partition from an arbitrary row-major region map, used by
    /// tests and by callers that already have a labeling. Region ids are
    /// re-indexed to the canonical contiguous order.
    pub fn from_region_map(width: usize, height: usize, map: &[usize]) -> Self {
        assert_eq!(map.len(), width * height, "region map length mismatch");
        let mut remap: Vec<u32> = vec![u32::MAX; map.iter().max().map_or(0, |m| m + 1)];
        let mut region_of = vec![0u32; map.len()];
        let mut next = 0u32;
        for (i, &r) in map.iter().enumerate() {
            if remap[r] == u32::MAX {
                remap[r] = next;
                next += 1;
            }
            region_of[i] = remap[r];
        }
        let regions = compute_stats(width, height, &region_of, next as usize);
        Self {
            width,
            height,
            region_of,
            regions,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn region_count(&self) -> usize {
        self.regions.len()
    }

    pub fn region_of(&self) -> &[u32] {
        &self.region_of
    }

    pub fn region_at(&self, x: usize, y: usize) -> usize {
        self.region_of[y * self.width + x] as usize
    }

    pub fn regions(&self) -> &[RegionStats] {
        &self.regions
    }

    /// Row-major pixel indices of one region.
    pub fn pixels_of(&self, region: usize) -> impl Iterator<Item = usize> + '_ {
        let r = region as u32;
        self.region_of
            .iter()
            .enumerate()
            .filter_map(move |(i, &v)| (v == r).then_some(i))
    }
}

fn compute_stats(width: usize, height: usize, region_of: &[u32], count: usize) -> Vec<RegionStats> {
    let mut stats = vec![
        RegionStats {
            pixel_count: 0,
            min_x: usize::MAX,
            min_y: usize::MAX,
            max_x: 0,
            max_y: 0,
            centroid: (0.0, 0.0),
        };
        count
    ];
    for y in 0..height {
        for x in 0..width {
            let s = &mut stats[region_of[y * width + x] as usize];
            s.pixel_count += 1;
            s.min_x = s.min_x.min(x);
            s.min_y = s.min_y.min(y);
            s.max_x = s.max_x.max(x);
            s.max_y = s.max_y.max(y);
            s.centroid.0 += x as f64;
            s.centroid.1 += y as f64;
        }
    }
    for s in &mut stats {
        let n = s.pixel_count as f64;
        s.centroid.0 /= n;
        s.centroid.1 /= n;
    }
    stats
}

/// Undirected region adjacency: an edge joins two regions sharing at least
/// one 4-neighbor pixel pair. Edges are stored once with `a < b`, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    pub node_count: usize,
    pub edges: Vec<(u32, u32)>,
}

impl AdjacencyGraph {
    pub fn degree(&self, node: usize) -> usize {
        let n = node as u32;
        self.edges
            .iter()
            .filter(|&&(a, b)| a == n || b == n)
            .count()
    }
}

struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
    /// Internal difference Int(C): the largest edge weight merged into the
    /// component so far.
    int_diff: Vec<f64>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            int_diff: vec![0.0; n],
        }
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Joins the components of `a` and `b`; the surviving root is the larger
    /// component's root (ties keep `a`'s root).
    fn union(&mut self, a: u32, b: u32, weight: f64) {
        let (ra, rb) = (self.find(a), self.find(b));
        debug_assert_ne!(ra, rb);
        let (keep, drop) = if self.size[ra as usize] >= self.size[rb as usize] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        self.parent[drop as usize] = keep;
        self.size[keep as usize] += self.size[drop as usize];
        self.int_diff[keep as usize] = self.int_diff[keep as usize]
            .max(self.int_diff[drop as usize])
            .max(weight);
    }
}

/// Gaussian-smooths each channel into f64 planes; `sigma == 0` copies.
fn smooth(image: &ImagePlane, sigma: f64) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let mut planes = vec![0.0f64; w * h * 3];
    for i in 0..w * h {
        for c in 0..3 {
            planes[c * w * h + i] = image.pixels()[i * 3 + c] as f64;
        }
    }
    if sigma <= 0.0 {
        return planes;
    }
    let radius = math::ceil(3.0 * sigma) as usize;
    let mut kernel = Vec::with_capacity(2 * radius + 1);
    let mut sum = 0.0;
    for i in 0..=2 * radius {
        let d = i as f64 - radius as f64;
        let v = math::exp(-d * d / (2.0 * sigma * sigma));
        kernel.push(v);
        sum += v;
    }
    for v in &mut kernel {
        *v /= sum;
    }
    let mut out = planes.clone();
    // horizontal pass, then vertical, borders clamped
    for c in 0..3 {
        let plane = c * w * h;
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for (i, &k) in kernel.iter().enumerate() {
                    let sx = (x as isize + i as isize - radius as isize).clamp(0, w as isize - 1);
                    acc += k * planes[plane + y * w + sx as usize];
                }
                out[plane + y * w + x] = acc;
            }
        }
        for x in 0..w {
            let col: Vec<f64> = (0..h).map(|y| out[plane + y * w + x]).collect();
            for y in 0..h {
                let mut acc = 0.0;
                for (i, &k) in kernel.iter().enumerate() {
                    let sy = (y as isize + i as isize - radius as isize).clamp(0, h as isize - 1);
                    acc += k * col[sy as usize];
                }
                out[plane + y * w + x] = acc;
            }
        }
    }
    out
}

/// Felzenszwalb–Huttenlocher graph-based segmentation.
///
/// Edges connect 4-neighbor pixels, weighted by Euclidean RGB distance on
/// the smoothed image. Components merge while the joining edge weight stays
/// below both components' internal difference plus `scale / size`. A final
/// pass merges components smaller than `min_size` into the neighbor joined
/// by the cheapest edge (edges revisited in ascending weight order).
///
/// Deterministic: edge sorting ties break on (pixel index a, pixel index b).
pub fn segment_graph_based(
    image: &ImagePlane,
    scale: f64,
    min_size: usize,
    smoothing_sigma: f64,
) -> Result<SuperPixelPartition, SuperpixelError> {
    if min_size == 0 {
        return Err(SuperpixelError::InvalidMinSize);
    }
    if !(scale.is_finite() && scale > 0.0) {
        return Err(SuperpixelError::InvalidScale);
    }
    if !(smoothing_sigma.is_finite() && smoothing_sigma >= 0.0) {
        return Err(SuperpixelError::InvalidSigma);
    }

    let (w, h) = (image.width(), image.height());
    let planes = smooth(image, smoothing_sigma);
    let color = |i: usize, c: usize| planes[c * w * h + i];
    let weight = |a: usize, b: usize| {
        let mut sq = 0.0;
        for c in 0..3 {
            let d = color(a, c) - color(b, c);
            sq += d * d;
        }
        math::sqrt(sq)
    };

    // (weight, a, b) with a < b by construction
    let mut edges: Vec<(f64, u32, u32)> = Vec::with_capacity(2 * w * h);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if x + 1 < w {
                edges.push((weight(i, i + 1), i as u32, (i + 1) as u32));
            }
            if y + 1 < h {
                edges.push((weight(i, i + w), i as u32, (i + w) as u32));
            }
        }
    }
    edges.sort_unstable_by(|l, r| {
        l.0.total_cmp(&r.0)
            .then_with(|| l.1.cmp(&r.1))
            .then_with(|| l.2.cmp(&r.2))
    });

    let mut ds = DisjointSet::new(w * h);
    for &(wt, a, b) in &edges {
        let (ra, rb) = (ds.find(a), ds.find(b));
        if ra == rb {
            continue;
        }
        let thr_a = ds.int_diff[ra as usize] + scale / ds.size[ra as usize] as f64;
        let thr_b = ds.int_diff[rb as usize] + scale / ds.size[rb as usize] as f64;
        if wt <= thr_a.min(thr_b) {
            ds.union(ra, rb, wt);
        }
    }

    // small-component merge pass
    let min_size = min_size.min(w * h);
    for &(wt, a, b) in &edges {
        let (ra, rb) = (ds.find(a), ds.find(b));
        if ra != rb
            && ((ds.size[ra as usize] as usize) < min_size
                || (ds.size[rb as usize] as usize) < min_size)
        {
            ds.union(ra, rb, wt);
        }
    }

    // canonical contiguous region ids, in row-major first-pixel order
    let mut remap = vec![u32::MAX; w * h];
    let mut region_of = vec![0u32; w * h];
    let mut next = 0u32;
    for i in 0..w * h {
        let root = ds.find(i as u32) as usize;
        if remap[root] == u32::MAX {
            remap[root] = next;
            next += 1;
        }
        region_of[i] = remap[root];
    }
    let regions = compute_stats(w, h, &region_of, next as usize);
    Ok(SuperPixelPartition {
        width: w,
        height: h,
        region_of,
        regions,
    })
}

/// Builds the region adjacency graph: edge (i, j) iff some pixel of region
/// i is a 4-neighbor of some pixel of region j.
pub fn build_adjacency(partition: &SuperPixelPartition) -> AdjacencyGraph {
    let (w, h) = (partition.width(), partition.height());
    let map = partition.region_of();
    let mut edges: Vec<(u32, u32)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            let r = map[i];
            if x + 1 < w && map[i + 1] != r {
                edges.push((r.min(map[i + 1]), r.max(map[i + 1])));
            }
            if y + 1 < h && map[i + w] != r {
                edges.push((r.min(map[i + w]), r.max(map[i + w])));
            }
        }
    }
    edges.sort_unstable();
    edges.dedup();
    AdjacencyGraph {
        node_count: partition.region_count(),
        edges,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ImagePlane;

    fn half_and_half(w: usize, h: usize) -> ImagePlane {
        let mut pixels = Vec::new();
        for _y in 0..h {
            for x in 0..w {
                if x < w / 2 {
                    pixels.extend_from_slice(&[0, 0, 0]);
                } else {
                    pixels.extend_from_slice(&[255, 255, 255]);
                }
            }
        }
        ImagePlane::new(w, h, pixels).unwrap()
    }

    #[test]
    fn constant_image_is_one_region() {
        let image = ImagePlane::filled(32, 32, [90, 40, 10]).unwrap();
        let p = segment_graph_based(&image, 100.0, 1, 0.0).unwrap();
        assert_eq!(p.region_count(), 1);
        assert_eq!(p.regions()[0].pixel_count, 32 * 32);
    }

    #[test]
    fn black_white_halves_split_exactly() {
        let image = half_and_half(32, 32);
        let p = segment_graph_based(&image, 100.0, 10, 0.0).unwrap();
        assert_eq!(p.region_count(), 2);
        // compare against connected components of exact color equality
        for y in 0..32 {
            for x in 0..32 {
                let expected = usize::from(x >= 16);
                let got = p.region_at(x, y);
                let left_region = p.region_at(0, 0);
                let right_region = p.region_at(31, 0);
                assert_eq!(
                    got,
                    if expected == 0 {
                        left_region
                    } else {
                        right_region
                    }
                );
            }
        }
    }

    #[test]
    fn min_component_size_is_enforced() {
        // noisy-ish image: 3 vertical stripes of width 2 on a 16x16 grid
        let mut pixels = Vec::new();
        for _y in 0..16 {
            for x in 0..16 {
                let v = ((x / 2) % 3 * 100) as u8;
                pixels.extend_from_slice(&[v, v, v]);
            }
        }
        let image = ImagePlane::new(16, 16, pixels).unwrap();
        let p = segment_graph_based(&image, 1.0, 60, 0.0).unwrap();
        let min = p.regions().iter().map(|r| r.pixel_count).min().unwrap();
        assert!(min >= 60, "smallest region {min} below min_size");
    }

    #[test]
    fn partition_covers_every_pixel_once() {
        let image = half_and_half(20, 12);
        let p = segment_graph_based(&image, 50.0, 5, 0.5).unwrap();
        assert_eq!(p.region_of().len(), 20 * 12);
        assert!(p
            .region_of()
            .iter()
            .all(|&r| (r as usize) < p.region_count()));
        let total: usize = p.regions().iter().map(|r| r.pixel_count).sum();
        assert_eq!(total, 20 * 12);
    }

    #[test]
    fn segmentation_is_deterministic() {
        let image = half_and_half(24, 18);
        let a = segment_graph_based(&image, 80.0, 8, 0.5).unwrap();
        let b = segment_graph_based(&image, 80.0, 8, 0.5).unwrap();
        assert_eq!(a.region_of(), b.region_of());
    }

    #[test]
    fn rejects_bad_parameters() {
        let image = ImagePlane::filled(4, 4, [0, 0, 0]).unwrap();
        assert_eq!(
            segment_graph_based(&image, 100.0, 0, 0.0),
            Err(SuperpixelError::InvalidMinSize)
        );
        assert_eq!(
            segment_graph_based(&image, 0.0, 1, 0.0),
            Err(SuperpixelError::InvalidScale)
        );
        assert_eq!(
            segment_graph_based(&image, 1.0, 1, -1.0),
            Err(SuperpixelError::InvalidSigma)
        );
    }

    #[test]
    fn adjacency_single_region_has_no_edges() {
        let p = SuperPixelPartition::from_region_map(4, 4, &[0; 16]);
        let g = build_adjacency(&p);
        assert_eq!(g.node_count, 1);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn adjacency_two_pixel_split() {
        let p = SuperPixelPartition::from_region_map(2, 1, &[0, 1]);
        let g = build_adjacency(&p);
        assert_eq!(g.edges, vec![(0, 1)]);
    }

    #[test]
    fn adjacency_three_horizontal_strips() {
        // 3x3: rows are regions 0, 1, 2; only (0,1) and (1,2) touch
        let map = [0, 0, 0, 1, 1, 1, 2, 2, 2];
        let p = SuperPixelPartition::from_region_map(3, 3, &map);
        let g = build_adjacency(&p);
        assert_eq!(g.edges, vec![(0, 1), (1, 2)]);
        assert_eq!(g.degree(1), 2);
    }
}
