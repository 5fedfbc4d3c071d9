//! Structured quadrilateral meshes for channel-type domains.
//!
//! Every mesh is a logical tensor grid of vertices with a mask of active
//! cells. Elements carry 9-node biquadratic geometry; local nodes are stored
//! in tensor order `3 * j + i` with `i` running along x.
//!
//! Default geometries:
//! * obstacle: channel `[0, L] x [-1, 1]` with a square obstacle
//!   `[1.75, 2.25] x [-0.25, 0.25]`, parabolic inflow `u = 1 - y^2`;
//! * symmetric step: inlet `[-1, 0] x [-0.5, 0.5]`, expansion
//!   `[0, 30] x [-1, 1]`, inflow `u = 1 - 4 y^2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary condition class of a boundary edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

/// Physical role of a boundary edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryKind {
    Inflow,
    Wall,
    Outflow,
}

impl BoundaryKind {
    pub fn tag(self) -> BoundaryTag {
        match self {
            BoundaryKind::Outflow => BoundaryTag::Neumann,
            _ => BoundaryTag::Dirichlet,
        }
    }
}

/// Element sides in the order bottom, right, top, left.
pub const SIDE_LOCAL_NODES: [[usize; 3]; 4] = [[0, 1, 2], [2, 5, 8], [6, 7, 8], [0, 3, 6]];

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BoundaryEdge {
    pub element: usize,
    pub side: usize,
    pub nodes: [usize; 3],
    pub kind: BoundaryKind,
    pub tag: BoundaryTag,
}

/// Parabolic inflow profile across `[y_min, y_max]` with peak `u_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InflowProfile {
    pub y_min: f64,
    pub y_max: f64,
    pub u_max: f64,
}

impl InflowProfile {
    pub fn velocity(&self, y: f64) -> f64 {
        let h = self.y_max - self.y_min;
        (4.0 * self.u_max * (y - self.y_min) * (self.y_max - y) / (h * h)).max(0.0)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Mesh {
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<[usize; 9]>,
    pub boundary: Vec<BoundaryEdge>,
    pub inflow: InflowProfile,
    /// Vertex coordinates of the underlying logical grid along each axis.
    pub x_lines: Vec<f64>,
    pub y_lines: Vec<f64>,
    /// Logical cell `(ix, iy)` of every element.
    pub cells: Vec<(usize, usize)>,
}

impl Mesh {
    /// Builds a mesh from vertex lines and an activity mask over cells.
    ///
    /// Sides on `x = x_min` are inflow, sides on `x = x_max` are outflow, and
    /// every other exterior side is a no-slip wall.
    pub fn from_masked_grid(
        x_lines: Vec<f64>,
        y_lines: Vec<f64>,
        active: impl Fn(usize, usize) -> bool,
        inflow: InflowProfile,
    ) -> Result<Self> {
        let nx = x_lines.len().checked_sub(1).unwrap_or(0);
        let ny = y_lines.len().checked_sub(1).unwrap_or(0);
        if nx == 0 || ny == 0 {
            return Err(Error::InvalidGeometry("grid needs at least one cell per axis".into()));
        }
        if x_lines.windows(2).any(|w| w[1] <= w[0]) || y_lines.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGeometry("grid lines must be strictly increasing".into()));
        }
        let is_active = |ix: isize, iy: isize| -> bool {
            ix >= 0 && iy >= 0 && (ix as usize) < nx && (iy as usize) < ny && active(ix as usize, iy as usize)
        };

        let qx: Vec<f64> = (0..=2 * nx)
            .map(|k| if k % 2 == 0 { x_lines[k / 2] } else { 0.5 * (x_lines[k / 2] + x_lines[k / 2 + 1]) })
            .collect();
        let qy: Vec<f64> = (0..=2 * ny)
            .map(|k| if k % 2 == 0 { y_lines[k / 2] } else { 0.5 * (y_lines[k / 2] + y_lines[k / 2 + 1]) })
            .collect();

        let qn = (2 * ny + 1) * (2 * nx + 1);
        let logical = |kx: usize, ky: usize| ky * (2 * nx + 1) + kx;
        let mut used = vec![false; qn];
        let mut cells = Vec::new();
        for iy in 0..ny {
            for ix in 0..nx {
                if is_active(ix as isize, iy as isize) {
                    cells.push((ix, iy));
                    for j in 0..3 {
                        for i in 0..3 {
                            used[logical(2 * ix + i, 2 * iy + j)] = true;
                        }
                    }
                }
            }
        }
        if cells.is_empty() {
            return Err(Error::InvalidGeometry("mask leaves no active cells".into()));
        }
        let mut number = vec![usize::MAX; qn];
        let mut nodes = Vec::new();
        for ky in 0..=2 * ny {
            for kx in 0..=2 * nx {
                let l = logical(kx, ky);
                if used[l] {
                    number[l] = nodes.len();
                    nodes.push([qx[kx], qy[ky]]);
                }
            }
        }
        let elements: Vec<[usize; 9]> = cells
            .iter()
            .map(|&(ix, iy)| {
                let mut e = [0usize; 9];
                for j in 0..3 {
                    for i in 0..3 {
                        e[3 * j + i] = number[logical(2 * ix + i, 2 * iy + j)];
                    }
                }
                e
            })
            .collect();

        let (x_min, x_max) = (x_lines[0], x_lines[nx]);
        let mut boundary = Vec::new();
        for (el, &(ix, iy)) in cells.iter().enumerate() {
            let (ix, iy) = (ix as isize, iy as isize);
            let neighbours = [(ix, iy - 1), (ix + 1, iy), (ix, iy + 1), (ix - 1, iy)];
            for (side, &(jx, jy)) in neighbours.iter().enumerate() {
                if is_active(jx, jy) {
                    continue;
                }
                let loc = SIDE_LOCAL_NODES[side];
                let e = &elements[el];
                let nodes3 = [e[loc[0]], e[loc[1]], e[loc[2]]];
                let xs = nodes3.map(|n| nodes[n][0]);
                let kind = if side == 3 && xs.iter().all(|&x| x == x_min) {
                    BoundaryKind::Inflow
                } else if side == 1 && xs.iter().all(|&x| x == x_max) {
                    BoundaryKind::Outflow
                } else {
                    BoundaryKind::Wall
                };
                boundary.push(BoundaryEdge {
                    element: el,
                    side,
                    nodes: nodes3,
                    kind,
                    tag: kind.tag(),
                });
            }
        }

        let mesh = Self {
            nodes,
            elements,
            boundary,
            inflow,
            x_lines,
            y_lines,
            cells,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Checks the structural invariants: positive Jacobians at the 3x3 Gauss
    /// points, contiguous node usage and one tag per boundary edge.
    pub fn validate(&self) -> Result<()> {
        let mut seen = vec![false; self.nodes.len()];
        for e in &self.elements {
            for &n in e {
                if n >= self.nodes.len() {
                    return Err(Error::InvalidGeometry(format!("node index {n} out of range")));
                }
                seen[n] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidGeometry("unreferenced node".into()));
        }
        let rule = crate::fem::reference::ReferenceQ2::new();
        for (k, e) in self.elements.iter().enumerate() {
            for q in 0..rule.n_points() {
                let det = rule.jacobian(self, e, q).det;
                if !(det > 0.0) {
                    return Err(Error::InvalidGeometry(format!("element {k} has Jacobian {det} at point {q}")));
                }
            }
        }
        let mut edges: Vec<(usize, usize)> = self.boundary.iter().map(|b| (b.element, b.side)).collect();
        edges.sort_unstable();
        if edges.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidGeometry("boundary edge tagged twice".into()));
        }
        Ok(())
    }

    pub fn bounding_box(&self) -> [f64; 4] {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &self.nodes {
            x0 = x0.min(p[0]);
            x1 = x1.max(p[0]);
            y0 = y0.min(p[1]);
            y1 = y1.max(p[1]);
        }
        [x0, x1, y0, y1]
    }

    /// Sum of element areas.
    pub fn area(&self) -> f64 {
        let rule = crate::fem::reference::ReferenceQ2::new();
        self.elements
            .iter()
            .map(|e| (0..rule.n_points()).map(|q| rule.weight(q) * rule.jacobian(self, e, q).det).sum::<f64>())
            .sum()
    }

    /// JSON document with nodes, elements and tagged boundary edges.
    pub fn to_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Export<'a> {
            nodes: &'a [[f64; 2]],
            elements: &'a [[usize; 9]],
            boundary: &'a [BoundaryEdge],
        }
        Ok(serde_json::to_string(&Export {
            nodes: &self.nodes,
            elements: &self.elements,
            boundary: &self.boundary,
        })?)
    }
}

/// `n` cells over `[a, b]`; with `ratio > 1` cell sizes grow geometrically
/// away from `toward` (either `a` or `b`).
fn graded_lines(a: f64, b: f64, n: usize, ratio: Option<f64>, fine_at_start: bool) -> Vec<f64> {
    let len = b - a;
    let sizes: Vec<f64> = match ratio {
        Some(r) if r > 1.0 && n > 1 => {
            let h0 = len * (r - 1.0) / (r.powi(n as i32) - 1.0);
            (0..n).map(|k| h0 * r.powi(k as i32)).collect()
        }
        _ => vec![len / n as f64; n],
    };
    let ordered: Vec<f64> = if fine_at_start { sizes } else { sizes.into_iter().rev().collect() };
    let mut lines = Vec::with_capacity(n + 1);
    let mut x = a;
    lines.push(a);
    for (k, h) in ordered.iter().enumerate() {
        x += h;
        lines.push(if k + 1 == n { b } else { x });
    }
    lines
}

/// Geometry of the flow-around-an-obstacle channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleGeometry {
    pub length: f64,
    /// Obstacle box `[x0, x1, y0, y1]`.
    pub obstacle: [f64; 4],
    /// Elements across the obstacle in x and y; the rest of the grid uses the
    /// same nominal spacing.
    pub nx: usize,
    pub ny: usize,
    /// Geometric growth ratio away from the obstacle; `None` keeps the grid
    /// uniform.
    pub stretch: Option<f64>,
}

/// Growth ratio used when a stretched obstacle grid is requested.
pub const DEFAULT_STRETCH_RATIO: f64 = 1.12;

impl Default for ObstacleGeometry {
    fn default() -> Self {
        Self {
            length: 8.0,
            obstacle: [1.75, 2.25, -0.25, 0.25],
            nx: 4,
            ny: 4,
            stretch: None,
        }
    }
}

impl ObstacleGeometry {
    pub fn build(&self) -> Result<Mesh> {
        let [x0, x1, y0, y1] = self.obstacle;
        let (ymin, ymax) = (-1.0, 1.0);
        if self.nx < 2 || self.ny < 2 {
            return Err(Error::InvalidGeometry("obstacle needs at least 2x2 elements".into()));
        }
        if !(0.0 < x0 && x0 < x1 && x1 < self.length && ymin < y0 && y0 < y1 && y1 < ymax) {
            return Err(Error::InvalidGeometry(format!(
                "obstacle {:?} is not interior to channel [0, {}] x [-1, 1]",
                self.obstacle, self.length
            )));
        }
        let hx = (x1 - x0) / self.nx as f64;
        let hy = (y1 - y0) / self.ny as f64;
        let count = |len: f64, h: f64| ((len / h).round() as usize).max(1);
        let (n_before, n_after) = (count(x0, hx), count(self.length - x1, hx));
        let (n_below, n_above) = (count(y0 - ymin, hy), count(ymax - y1, hy));

        let mut xs = graded_lines(0.0, x0, n_before, self.stretch, false);
        xs.extend(graded_lines(x0, x1, self.nx, None, true).into_iter().skip(1));
        xs.extend(graded_lines(x1, self.length, n_after, self.stretch, true).into_iter().skip(1));
        let mut ys = graded_lines(ymin, y0, n_below, self.stretch, false);
        ys.extend(graded_lines(y0, y1, self.ny, None, true).into_iter().skip(1));
        ys.extend(graded_lines(y1, ymax, n_above, self.stretch, true).into_iter().skip(1));

        let ox = n_before..n_before + self.nx;
        let oy = n_below..n_below + self.ny;
        Mesh::from_masked_grid(
            xs,
            ys,
            |ix, iy| !(ox.contains(&ix) && oy.contains(&iy)),
            InflowProfile {
                y_min: ymin,
                y_max: ymax,
                u_max: 1.0,
            },
        )
    }
}

/// Channel of length `length` with a square obstacle; `nx`, `ny` elements
/// across the obstacle. Full-scale density is `nx = ny = 4`.
pub fn build_obstacle_mesh(length: f64, stretch: bool, nx: usize, ny: usize) -> Result<Mesh> {
    ObstacleGeometry {
        length,
        nx,
        ny,
        stretch: stretch.then_some(DEFAULT_STRETCH_RATIO),
        ..ObstacleGeometry::default()
    }
    .build()
}

/// Geometry of the expansion flow around a symmetric step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepGeometry {
    pub inlet_length: f64,
    pub outlet_length: f64,
    /// Elements per unit length in x and y.
    pub nx: usize,
    pub ny: usize,
}

impl Default for StepGeometry {
    fn default() -> Self {
        Self {
            inlet_length: 1.0,
            outlet_length: 30.0,
            nx: 4,
            ny: 4,
        }
    }
}

impl StepGeometry {
    pub fn build(&self) -> Result<Mesh> {
        if self.nx == 0 || self.ny == 0 {
            return Err(Error::InvalidGeometry("step density must be positive".into()));
        }
        let n_in = (self.inlet_length * self.nx as f64).round() as usize;
        let n_out = (self.outlet_length * self.nx as f64).round() as usize;
        if n_in == 0 || n_out == 0 {
            return Err(Error::InvalidGeometry("inlet and outlet need at least one element".into()));
        }
        if (n_in as f64 - self.inlet_length * self.nx as f64).abs() > 1e-9
            || (n_out as f64 - self.outlet_length * self.nx as f64).abs() > 1e-9
        {
            return Err(Error::InvalidGeometry("channel lengths must be multiples of the x spacing".into()));
        }
        let mut xs = graded_lines(-self.inlet_length, 0.0, n_in, None, true);
        xs.extend(graded_lines(0.0, self.outlet_length, n_out, None, true).into_iter().skip(1));
        if self.ny % 2 != 0 {
            return Err(Error::InvalidGeometry("step y density must be even to resolve the inlet".into()));
        }
        // The inlet occupies the middle half of the outlet height.
        let ys = graded_lines(-1.0, 1.0, 2 * self.ny, None, true);
        let lo = self.ny / 2;
        let hi = lo + self.ny;
        Mesh::from_masked_grid(
            xs,
            ys,
            |ix, iy| ix >= n_in || (lo..hi).contains(&iy),
            InflowProfile {
                y_min: -0.5,
                y_max: 0.5,
                u_max: 1.0,
            },
        )
    }
}

/// Symmetric-step mesh with `nx`, `ny` elements per unit length.
pub fn build_step_mesh(nx: usize, ny: usize) -> Result<Mesh> {
    StepGeometry {
        nx,
        ny,
        ..StepGeometry::default()
    }
    .build()
}

/// Straight channel `[0, length] x [-1, 1]` with `u = 1 - y^2` inflow.
pub fn build_channel_mesh(length: f64, nx: usize, ny: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidGeometry("channel needs at least one element per axis".into()));
    }
    Mesh::from_masked_grid(
        graded_lines(0.0, length, nx, None, true),
        graded_lines(-1.0, 1.0, ny, None, true),
        |_, _| true,
        InflowProfile {
            y_min: -1.0,
            y_max: 1.0,
            u_max: 1.0,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obstacle_toy_mesh_is_valid() {
        let m = build_obstacle_mesh(8.0, true, 2, 2).unwrap();
        m.validate().unwrap();
        assert_eq!(m.n_elements(), 32 * 8 - 4);
        let area = m.area();
        assert!((area - (16.0 - 0.25)).abs() < 1e-10, "{area}");
        // boundary tags partition the boundary: inflow + outflow lengths
        let len = |kind| {
            m.boundary
                .iter()
                .filter(|b| b.kind == kind)
                .map(|b| {
                    let a = m.nodes[b.nodes[0]];
                    let c = m.nodes[b.nodes[2]];
                    ((a[0] - c[0]).powi(2) + (a[1] - c[1]).powi(2)).sqrt()
                })
                .sum::<f64>()
        };
        assert!((len(BoundaryKind::Inflow) - 2.0).abs() < 1e-12);
        assert!((len(BoundaryKind::Outflow) - 2.0).abs() < 1e-12);
        assert!((len(BoundaryKind::Wall) - (16.0 + 2.0)).abs() < 1e-12);
    }

    #[test]
    fn obstacle_outside_channel_is_rejected() {
        let g = ObstacleGeometry {
            obstacle: [7.5, 8.5, -0.25, 0.25],
            ..ObstacleGeometry::default()
        };
        assert!(matches!(g.build(), Err(Error::InvalidGeometry(_))));
    }

    #[test]
    fn full_density_element_counts() {
        assert_eq!(build_obstacle_mesh(8.0, true, 4, 4).unwrap().n_elements(), 1008);
        assert_eq!(build_obstacle_mesh(12.0, true, 4, 4).unwrap().n_elements(), 1520);
        assert_eq!(build_step_mesh(4, 4).unwrap().n_elements(), 976);
    }

    #[test]
    fn step_element_count_is_blocks_minus_void() {
        let g = StepGeometry {
            outlet_length: 3.0,
            nx: 2,
            ny: 2,
            ..StepGeometry::default()
        };
        let m = g.build().unwrap();
        // inlet 2x2 plus outlet 6x4
        assert_eq!(m.n_elements(), 4 + 24);
        assert!((m.area() - (1.0 + 6.0)).abs() < 1e-12);
    }

    #[test]
    fn stretched_lines_keep_counts_and_ends() {
        let l = graded_lines(2.25, 8.0, 46, Some(1.05), true);
        assert_eq!(l.len(), 47);
        assert_eq!(l[46], 8.0);
        assert!(l[1] - l[0] < l[46] - l[45]);
    }

    #[test]
    fn mesh_json_export() {
        let m = build_channel_mesh(2.0, 2, 1).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        assert_eq!(v["nodes"].as_array().unwrap().len(), 15);
        assert_eq!(v["elements"].as_array().unwrap().len(), 2);
    }
}
