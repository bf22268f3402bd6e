//! Coloured point clouds with normals, plus a uniform-grid index for
//! radius and nearest-neighbour queries.

use crate::geometry::{Pose, Vec3};
use std::collections::HashMap;

#[derive(Debug, Clone, Default)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub colors: Vec<[u8; 3]>,
}

impl PointCloud {
    pub fn with_capacity(n: usize) -> Self {
        PointCloud {
            points: Vec::with_capacity(n),
            normals: Vec::with_capacity(n),
            colors: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, point: Vec3, normal: Vec3, color: [u8; 3]) {
        self.points.push(point);
        self.normals.push(normal);
        self.colors.push(color);
    }

    /// Rigidly transforms points and rotates normals.
    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| pose.transform_point(p)).collect(),
            normals: self.normals.iter().map(|n| pose.rotate(n)).collect(),
            colors: self.colors.clone(),
        }
    }

    /// Deterministic uniform subsample to at most `max_points`.
    pub fn subsampled(&self, max_points: usize) -> PointCloud {
        if self.len() <= max_points || max_points == 0 {
            return self.clone();
        }
        let mut out = PointCloud::with_capacity(max_points);
        // Evenly spaced indices over the original ordering.
        for i in 0..max_points {
            let idx = i * self.len() / max_points;
            out.push(self.points[idx], self.normals[idx], self.colors[idx]);
        }
        out
    }
}

/// Uniform-grid spatial index over a point set.
pub struct GridIndex {
    cell: f64,
    cells: HashMap<(i32, i32, i32), Vec<u32>>,
    points: Vec<Vec3>,
}

impl GridIndex {
    pub fn build(points: &[Vec3], cell: f64) -> Self {
        let mut cells: HashMap<(i32, i32, i32), Vec<u32>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            cells.entry(Self::key(p, cell)).or_default().push(i as u32);
        }
        GridIndex {
            cell,
            cells,
            points: points.to_vec(),
        }
    }

    fn key(p: &Vec3, cell: f64) -> (i32, i32, i32) {
        (
            (p.x / cell).floor() as i32,
            (p.y / cell).floor() as i32,
            (p.z / cell).floor() as i32,
        )
    }

    /// Indices of all points within `radius` of `q`.
    pub fn radius_neighbors(&self, q: &Vec3, radius: f64) -> Vec<u32> {
        let mut out = Vec::new();
        let r2 = radius * radius;
        let reach = (radius / self.cell).ceil() as i32;
        let (cx, cy, cz) = Self::key(q, self.cell);
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in ids {
                            if (self.points[i as usize] - q).norm_squared() <= r2 {
                                out.push(i);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Nearest point within `max_dist`, if any.
    pub fn nearest(&self, q: &Vec3, max_dist: f64) -> Option<(u32, f64)> {
        let mut best: Option<(u32, f64)> = None;
        let reach = (max_dist / self.cell).ceil() as i32;
        let (cx, cy, cz) = Self::key(q, self.cell);
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(ids) = self.cells.get(&(cx + dx, cy + dy, cz + dz)) {
                        for &i in ids {
                            let d2 = (self.points[i as usize] - q).norm_squared();
                            if d2 <= max_dist * max_dist
                                && best.map_or(true, |(_, b)| d2 < b)
                            {
                                best = Some((i, d2));
                            }
                        }
                    }
                }
            }
        }
        best.map(|(i, d2)| (i, d2.sqrt()))
    }
}
