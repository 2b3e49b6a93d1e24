//! Regular scalar grids with trilinear interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Point, Vec3};

/// Axis-aligned lattice of samples, x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarGrid {
    pub origin: Point,
    /// Spacing along x, y and z.
    pub cell: Vec3,
    pub dims: [usize; 3],
    pub samples: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(origin: Point, cell: Vec3, dims: [usize; 3], samples: Vec<f64>) -> Result<Self> {
        let g = ScalarGrid {
            origin,
            cell,
            dims,
            samples,
        };
        g.validate()?;
        Ok(g)
    }

    /// Lattice of `dims` nodes spanning `region` corner to corner, filled with zeros.
    pub fn spanning(region: &Aabb, dims: [usize; 3]) -> Result<Self> {
        if dims.iter().any(|&n| n < 2) {
            return Err(Error::validation(format!(
                "grid needs at least 2 nodes per axis, got {dims:?}"
            )));
        }
        let ext = region.max - region.min;
        if !(ext.x > 0.0 && ext.y > 0.0 && ext.z > 0.0) {
            return Err(Error::validation("grid region must have positive extent"));
        }
        let cell = Vec3::new(
            ext.x / (dims[0] - 1) as f64,
            ext.y / (dims[1] - 1) as f64,
            ext.z / (dims[2] - 1) as f64,
        );
        Ok(ScalarGrid {
            origin: region.min,
            cell,
            dims,
            samples: vec![0.0; dims[0] * dims[1] * dims[2]],
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&n| n < 2) {
            return Err(Error::validation(format!(
                "grid needs at least 2 nodes per axis, got {:?}",
                self.dims
            )));
        }
        if !(self.cell.iter().all(|c| c.is_finite() && *c > 0.0)) {
            return Err(Error::validation("grid cell size must be positive"));
        }
        if self.samples.len() != self.len() {
            return Err(Error::validation("grid sample count does not match dims"));
        }
        if self.samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::validation("grid has non-finite samples"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.samples[self.index(i, j, k)]
    }

    pub fn node(&self, i: usize, j: usize, k: usize) -> Point {
        Point::new(
            self.origin.x + i as f64 * self.cell.x,
            self.origin.y + j as f64 * self.cell.y,
            self.origin.z + k as f64 * self.cell.z,
        )
    }

    /// All node positions in storage order.
    pub fn nodes(&self) -> Vec<Point> {
        let [nx, ny, nz] = self.dims;
        let mut out = Vec::with_capacity(self.len());
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    out.push(self.node(i, j, k));
                }
            }
        }
        out
    }

    pub fn bounds(&self) -> Aabb {
        let [nx, ny, nz] = self.dims;
        Aabb {
            min: self.origin,
            max: self.node(nx - 1, ny - 1, nz - 1),
        }
    }

    /// Trilinear interpolation. Points outside the lattice are clamped to
    /// its boundary first.
    pub fn interpolate(&self, p: &Point) -> f64 {
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = self.dims[a];
            let u = ((p[a] - self.origin[a]) / self.cell[a]).clamp(0.0, (n - 1) as f64);
            let i = (u.floor() as usize).min(n - 2);
            base[a] = i;
            frac[a] = u - i as f64;
        }
        let [i, j, k] = base;
        let [fx, fy, fz] = frac;
        let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
        let c00 = lerp(self.get(i, j, k), self.get(i + 1, j, k), fx);
        let c10 = lerp(self.get(i, j + 1, k), self.get(i + 1, j + 1, k), fx);
        let c01 = lerp(self.get(i, j, k + 1), self.get(i + 1, j, k + 1), fx);
        let c11 = lerp(self.get(i, j + 1, k + 1), self.get(i + 1, j + 1, k + 1), fx);
        lerp(lerp(c00, c10, fy), lerp(c01, c11, fy), fz)
    }
}

/// JSON header of a grid file; samples follow in a float32 sidecar.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridHeader {
    pub origin: [f64; 3],
    pub cell_size: [f64; 3],
    pub dims: [usize; 3],
    pub cloth_type: String,
    pub latent: Vec<f64>,
    pub samples: String,
}

pub fn encode_samples_f32(samples: &[f64]) -> Vec<u8> {
    samples
        .iter()
        .flat_map(|&s| (s as f32).to_le_bytes())
        .collect()
}

pub fn decode_samples_f32(bytes: &[u8], expected: usize) -> Result<Vec<f64>> {
    if bytes.len() != expected * 4 {
        return Err(Error::format(format!(
            "expected {} float32 samples, found {} bytes",
            expected,
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect())
}
