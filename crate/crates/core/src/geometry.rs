//! Point/triangle distance kernels and a bounding volume hierarchy for
//! nearest-surface queries.

use nalgebra::{Point3, Vector3};

pub type Point = Point3<f64>;
pub type Vec3 = Vector3<f64>;

/// Closest point on triangle `abc` to `p` (Ericson, Real-Time Collision Detection 5.1.5).
///
/// Zero-area triangles fall back to the closest point on their edges.
pub fn closest_point_on_triangle(p: &Point, a: &Point, b: &Point, c: &Point) -> Point {
    let ab = b - a;
    let ac = c - a;
    if ab.cross(&ac).norm_squared()
        <= f64::EPSILON * f64::EPSILON * ab.norm_squared().max(ac.norm_squared()).max(1e-300)
    {
        return closest_point_on_degenerate(p, a, b, c);
    }
    let ap = p - a;
    let d1 = ab.dot(&ap);
    let d2 = ac.dot(&ap);
    if d1 <= 0.0 && d2 <= 0.0 {
        return *a;
    }
    let bp = p - b;
    let d3 = ab.dot(&bp);
    let d4 = ac.dot(&bp);
    if d3 >= 0.0 && d4 <= d3 {
        return *b;
    }
    let vc = d1 * d4 - d3 * d2;
    if vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0 {
        let v = d1 / (d1 - d3);
        return a + ab * v;
    }
    let cp = p - c;
    let d5 = ab.dot(&cp);
    let d6 = ac.dot(&cp);
    if d6 >= 0.0 && d5 <= d6 {
        return *c;
    }
    let vb = d5 * d2 - d1 * d6;
    if vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0 {
        let w = d2 / (d2 - d6);
        return a + ac * w;
    }
    let va = d3 * d6 - d5 * d4;
    if va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0 {
        let w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        return b + (c - b) * w;
    }
    let denom = 1.0 / (va + vb + vc);
    let v = vb * denom;
    let w = vc * denom;
    a + ab * v + ac * w
}

fn closest_point_on_degenerate(p: &Point, a: &Point, b: &Point, c: &Point) -> Point {
    let candidates = [
        closest_point_on_segment(p, a, b),
        closest_point_on_segment(p, b, c),
        closest_point_on_segment(p, c, a),
    ];
    let mut best = candidates[0];
    let mut best_d = (best - p).norm_squared();
    for q in &candidates[1..] {
        let d = (q - p).norm_squared();
        if d < best_d {
            best_d = d;
            best = *q;
        }
    }
    best
}

pub fn closest_point_on_segment(p: &Point, a: &Point, b: &Point) -> Point {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return *a;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

pub fn point_triangle_distance_sq(p: &Point, a: &Point, b: &Point, c: &Point) -> f64 {
    (closest_point_on_triangle(p, a, b, c) - p).norm_squared()
}

pub fn point_triangle_distance(p: &Point, a: &Point, b: &Point, c: &Point) -> f64 {
    point_triangle_distance_sq(p, a, b, c).sqrt()
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point,
    pub max: Point,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb {
            min: Point::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Point>) -> Self {
        let mut b = Aabb::empty();
        for p in points {
            b.grow(p);
        }
        b
    }

    pub fn grow(&mut self, p: &Point) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        let mut b = *self;
        b.grow(&other.min);
        b.grow(&other.max);
        b
    }

    pub fn inflate(&self, r: f64) -> Aabb {
        Aabb {
            min: self.min - Vec3::repeat(r),
            max: self.max + Vec3::repeat(r),
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|k| self.min[k] > self.max[k])
    }

    pub fn center(&self) -> Point {
        Point::from((self.min.coords + self.max.coords) * 0.5)
    }

    pub fn distance_sq(&self, p: &Point) -> f64 {
        let mut d = 0.0;
        for k in 0..3 {
            let v = if p[k] < self.min[k] {
                self.min[k] - p[k]
            } else if p[k] > self.max[k] {
                p[k] - self.max[k]
            } else {
                0.0
            };
            d += v * v;
        }
        d
    }
}

#[derive(Debug, Clone)]
struct Node {
    bounds: Aabb,
    // Leaf when `count > 0`: primitives `order[start..start + count]`.
    // Interior: children at `start` and `start + 1`.
    start: usize,
    count: usize,
}

/// Static bounding volume hierarchy over primitive boxes.
///
/// Distances are supplied by the caller per query, so the same tree serves
/// plain triangle soups and primitives whose exact shape varies between
/// queries as long as it stays inside the stored box.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<usize>,
}

const LEAF_SIZE: usize = 4;

impl Bvh {
    pub fn build(boxes: &[Aabb]) -> Self {
        let mut order: Vec<usize> = (0..boxes.len()).collect();
        let centers: Vec<Point> = boxes.iter().map(|b| b.center()).collect();
        let mut nodes = Vec::with_capacity(2 * boxes.len() / LEAF_SIZE + 1);
        if boxes.is_empty() {
            return Bvh { nodes, order };
        }
        nodes.push(Node {
            bounds: Aabb::empty(),
            start: 0,
            count: 0,
        });
        // (node index, primitive range)
        let mut stack = vec![(0usize, 0usize, boxes.len())];
        while let Some((node, lo, hi)) = stack.pop() {
            let mut bounds = Aabb::empty();
            let mut cbounds = Aabb::empty();
            for &i in &order[lo..hi] {
                bounds = bounds.union(&boxes[i]);
                cbounds.grow(&centers[i]);
            }
            nodes[node].bounds = bounds;
            if hi - lo <= LEAF_SIZE {
                nodes[node].start = lo;
                nodes[node].count = hi - lo;
                continue;
            }
            let ext = cbounds.max - cbounds.min;
            let axis = if ext.x >= ext.y && ext.x >= ext.z {
                0
            } else if ext.y >= ext.z {
                1
            } else {
                2
            };
            let mid = (lo + hi) / 2;
            order[lo..hi].select_nth_unstable_by(mid - lo, |&a, &b| {
                centers[a][axis]
                    .total_cmp(&centers[b][axis])
                    .then(a.cmp(&b))
            });
            let left = nodes.len();
            nodes.push(Node {
                bounds: Aabb::empty(),
                start: 0,
                count: 0,
            });
            nodes.push(Node {
                bounds: Aabb::empty(),
                start: 0,
                count: 0,
            });
            nodes[node].start = left;
            stack.push((left, lo, mid));
            stack.push((left + 1, mid, hi));
        }
        Bvh { nodes, order }
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Smallest `dist_sq(prim)` over all primitives, or `None` when every
    /// primitive is at least `cap_sq` away. Equal distances resolve to the
    /// lowest primitive index.
    pub fn nearest<F>(&self, p: &Point, cap_sq: f64, mut dist_sq: F) -> Option<(f64, usize)>
    where
        F: FnMut(usize) -> f64,
    {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best = cap_sq;
        let mut best_idx = usize::MAX;
        let mut stack: Vec<(f64, usize)> = Vec::with_capacity(64);
        let root_d = self.nodes[0].bounds.distance_sq(p);
        if root_d > best {
            return None;
        }
        stack.push((root_d, 0));
        while let Some((d, n)) = stack.pop() {
            if d > best {
                continue;
            }
            let node = &self.nodes[n];
            if node.count > 0 {
                for &prim in &self.order[node.start..node.start + node.count] {
                    let dp = dist_sq(prim);
                    if dp < best || (dp == best && best_idx != usize::MAX && prim < best_idx) {
                        best = dp;
                        best_idx = prim;
                    }
                }
                continue;
            }
            let l = node.start;
            let r = l + 1;
            let dl = self.nodes[l].bounds.distance_sq(p);
            let dr = self.nodes[r].bounds.distance_sq(p);
            // Push the farther child first so the nearer one is visited next.
            if dl <= dr {
                if dr <= best {
                    stack.push((dr, r));
                }
                if dl <= best {
                    stack.push((dl, l));
                }
            } else {
                if dl <= best {
                    stack.push((dl, l));
                }
                if dr <= best {
                    stack.push((dr, r));
                }
            }
        }
        if best_idx == usize::MAX {
            None
        } else {
            Some((best, best_idx))
        }
    }
}

/// Triangle soup with an acceleration structure for exact point-to-surface distance.
#[derive(Debug, Clone)]
pub struct TriangleSurface {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    bvh: Bvh,
}

impl TriangleSurface {
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Self {
        let boxes: Vec<Aabb> = triangles
            .iter()
            .map(|t| Aabb::from_points(t.iter().map(|&i| &vertices[i])))
            .collect();
        let bvh = Bvh::build(&boxes);
        TriangleSurface {
            vertices,
            triangles,
            bvh,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Exact distance to the nearest triangle; `f64::INFINITY` for an empty surface.
    pub fn distance(&self, p: &Point) -> f64 {
        self.nearest(p, f64::INFINITY)
            .map_or(f64::INFINITY, |(d, _)| d)
    }

    /// `(distance, triangle)` of the nearest triangle closer than `cap`.
    pub fn nearest(&self, p: &Point, cap: f64) -> Option<(f64, usize)> {
        let cap_sq = if cap.is_finite() {
            cap * cap
        } else {
            f64::INFINITY
        };
        self.bvh
            .nearest(p, cap_sq, |i| {
                let [a, b, c] = self.triangles[i];
                point_triangle_distance_sq(
                    p,
                    &self.vertices[a],
                    &self.vertices[b],
                    &self.vertices[c],
                )
            })
            .map(|(d2, i)| (d2.sqrt(), i))
    }

    /// `min(distance, cap)`.
    pub fn distance_capped(&self, p: &Point, cap: f64) -> f64 {
        self.nearest(p, cap).map_or(cap, |(d, _)| d)
    }
}
