//! Exact nearest-vertex lookup and skinning of free points through their
//! nearest body vertex.

use super::{vertex_transforms, PoseParams, TPoseBody};
use crate::error::Result;
use crate::geometry::{Aabb, Point};

/// Uniform-grid index over a fixed vertex set. Queries return the exact
/// nearest vertex, lowest index on ties.
#[derive(Debug, Clone)]
pub struct VertexLocator {
    points: Vec<Point>,
    origin: Point,
    cell: f64,
    dims: [usize; 3],
    cell_start: Vec<u32>,
    items: Vec<u32>,
}

impl VertexLocator {
    pub fn new(points: &[Point]) -> Self {
        let bounds = Aabb::from_points(points.iter());
        let ext = if points.is_empty() {
            nalgebra::Vector3::zeros()
        } else {
            bounds.max - bounds.min
        };
        let vol = ext.x.max(1e-6) * ext.y.max(1e-6) * ext.z.max(1e-6);
        // about two points per occupied cell on surface-like sets
        let cell = (vol / (points.len().max(1) as f64))
            .cbrt()
            .max(ext.max() / 256.0)
            .max(1e-6);
        let dims = [0, 1, 2].map(|a| ((ext[a] / cell).floor() as usize + 1).max(1));
        let origin = if points.is_empty() {
            Point::origin()
        } else {
            bounds.min
        };
        let mut loc = VertexLocator {
            points: points.to_vec(),
            origin,
            cell,
            dims,
            cell_start: Vec::new(),
            items: Vec::new(),
        };
        let ncells = dims[0] * dims[1] * dims[2];
        let mut counts = vec![0u32; ncells + 1];
        let keys: Vec<usize> = points.iter().map(|p| loc.flat(loc.cell_of(p))).collect();
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..ncells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut items = vec![0u32; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            items[fill[k] as usize] = i as u32;
            fill[k] += 1;
        }
        loc.cell_start = counts;
        loc.items = items;
        loc
    }

    fn cell_of(&self, p: &Point) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let u = ((p[a] - self.origin[a]) / self.cell).floor();
            (u.max(0.0) as usize).min(self.dims[a] - 1)
        })
    }

    fn flat(&self, c: [usize; 3]) -> usize {
        c[0] + self.dims[0] * (c[1] + self.dims[1] * c[2])
    }

    /// Index of the nearest vertex, or `None` for an empty set.
    pub fn nearest(&self, p: &Point) -> Option<usize> {
        if self.points.is_empty() {
            return None;
        }
        let c = self.cell_of(p);
        let mut best = (f64::INFINITY, usize::MAX);
        let mut r = 0usize;
        loop {
            let lo = [0, 1, 2].map(|a| c[a].saturating_sub(r));
            let hi = [0, 1, 2].map(|a| (c[a] + r).min(self.dims[a] - 1));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let ring = [x, y, z]
                            .iter()
                            .zip(&c)
                            .map(|(&q, &cc)| q.abs_diff(cc))
                            .max()
                            .unwrap();
                        if ring != r {
                            continue;
                        }
                        let k = self.flat([x, y, z]);
                        for &i in &self.items
                            [self.cell_start[k] as usize..self.cell_start[k + 1] as usize]
                        {
                            let i = i as usize;
                            let d = (self.points[i] - p).norm_squared();
                            if d < best.0 || (d == best.0 && i < best.1) {
                                best = (d, i);
                            }
                        }
                    }
                }
            }
            // distance from p to anything outside the visited cube
            let mut bound = f64::INFINITY;
            let mut exhausted = true;
            for a in 0..3 {
                if c[a] >= r + 1 {
                    exhausted = false;
                    bound = bound.min(p[a] - (self.origin[a] + (c[a] - r) as f64 * self.cell));
                }
                if c[a] + r + 1 < self.dims[a] {
                    exhausted = false;
                    bound = bound.min(self.origin[a] + (c[a] + r + 1) as f64 * self.cell - p[a]);
                }
            }
            if exhausted {
                break;
            }
            if best.1 != usize::MAX && bound > 0.0 && best.0 < bound * bound {
                break;
            }
            r += 1;
        }
        Some(best.1)
    }
}

/// Brute-force nearest vertex, lowest index on ties.
pub fn nearest_vertex_brute(points: &[Point], p: &Point) -> Option<usize> {
    let mut best = (f64::INFINITY, None);
    for (i, q) in points.iter().enumerate() {
        let d = (q - p).norm_squared();
        if d < best.0 {
            best = (d, Some(i));
        }
    }
    best.1
}

/// Move canonical points with the blended skinning transform of their
/// nearest T-pose body vertex. Returns the posed points and the attachment.
pub fn pose_attached_points(
    tpose: &TPoseBody,
    theta: &PoseParams,
    points: &[Point],
) -> Result<(Vec<Point>, Vec<usize>)> {
    theta.validate()?;
    let locator = VertexLocator::new(&tpose.vertices);
    let attach: Vec<usize> = points
        .iter()
        .map(|p| locator.nearest(p).unwrap_or(0))
        .collect();
    if theta.is_identity() {
        return Ok((points.to_vec(), attach));
    }
    let transforms = vertex_transforms(tpose, theta);
    let posed = points
        .iter()
        .zip(&attach)
        .map(|(p, &v)| transforms[v].apply(p))
        .collect();
    Ok((posed, attach))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn grid_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts: Vec<Point> = (0..2000)
            .map(|_| {
                Point::new(
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(0.0..2.0),
                    rng.gen_range(-0.2..0.2),
                )
            })
            .collect();
        // exact duplicates exercise the tie rule
        pts.push(pts[17]);
        pts.push(pts[3]);
        let loc = VertexLocator::new(&pts);
        for _ in 0..3000 {
            let p = Point::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-1.0..3.0),
                rng.gen_range(-1.0..1.0),
            );
            assert_eq!(loc.nearest(&p), nearest_vertex_brute(&pts, &p));
        }
        assert_eq!(loc.nearest(&pts[17]), Some(17));
    }

    #[test]
    fn single_point_and_empty() {
        let loc = VertexLocator::new(&[Point::new(1.0, 2.0, 3.0)]);
        assert_eq!(loc.nearest(&Point::origin()), Some(0));
        assert_eq!(VertexLocator::new(&[]).nearest(&Point::origin()), None);
    }
}
