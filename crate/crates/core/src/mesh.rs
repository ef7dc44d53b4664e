//! Planar triangulations of rectangles, disks and enclosing balls.
//!
//! Rectangles get a structured mesh whose cell diagonals alternate direction
//! (every triangle is right-angled, so the P1 Laplacian is an M-matrix).
//! Disks get concentric rings with `6k` vertices on ring `k`. Both can be
//! refined uniformly by edge bisection.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// Relative tolerance used for boundary and containment tests.
pub const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Rectangle { xmin: f64, xmax: f64, ymin: f64, ymax: f64 },
    Disk { center: Point, radius: f64 },
    /// Mesh read from a file; only the bounding box is known.
    Imported { xmin: f64, xmax: f64, ymin: f64, ymax: f64 },
}

impl Domain {
    pub fn area(&self) -> f64 {
        match *self {
            Domain::Rectangle { xmin, xmax, ymin, ymax }
            | Domain::Imported { xmin, xmax, ymin, ymax } => (xmax - xmin) * (ymax - ymin),
            Domain::Disk { radius, .. } => PI * radius * radius,
        }
    }

    pub fn diameter(&self) -> f64 {
        match *self {
            Domain::Rectangle { xmin, xmax, ymin, ymax }
            | Domain::Imported { xmin, xmax, ymin, ymax } => (xmax - xmin).hypot(ymax - ymin),
            Domain::Disk { radius, .. } => 2.0 * radius,
        }
    }

    pub fn center(&self) -> Point {
        match *self {
            Domain::Rectangle { xmin, xmax, ymin, ymax }
            | Domain::Imported { xmin, xmax, ymin, ymax } => {
                [0.5 * (xmin + xmax), 0.5 * (ymin + ymax)]
            }
            Domain::Disk { center, .. } => center,
        }
    }

    /// Closed-set membership with a relative tolerance.
    pub fn contains(&self, p: Point) -> bool {
        let tol = GEOM_TOL * self.diameter();
        match *self {
            Domain::Rectangle { xmin, xmax, ymin, ymax }
            | Domain::Imported { xmin, xmax, ymin, ymax } => {
                p[0] >= xmin - tol && p[0] <= xmax + tol && p[1] >= ymin - tol && p[1] <= ymax + tol
            }
            Domain::Disk { center, radius } => dist(p, center) <= radius + tol,
        }
    }

    /// Distance from `p` to the boundary curve; `None` for imported meshes.
    pub fn boundary_distance(&self, p: Point) -> Option<f64> {
        match *self {
            Domain::Rectangle { xmin, xmax, ymin, ymax } => {
                let dx = (p[0] - xmin).abs().min((p[0] - xmax).abs());
                let dy = (p[1] - ymin).abs().min((p[1] - ymax).abs());
                let inside_x = p[0] >= xmin && p[0] <= xmax;
                let inside_y = p[1] >= ymin && p[1] <= ymax;
                Some(match (inside_x, inside_y) {
                    (true, true) => dx.min(dy),
                    (true, false) => dy,
                    (false, true) => dx,
                    (false, false) => dx.hypot(dy),
                })
            }
            Domain::Disk { center, radius } => Some((dist(p, center) - radius).abs()),
            Domain::Imported { .. } => None,
        }
    }

    /// Farthest distance from `x0` to any point of the closed domain.
    pub fn max_distance_from(&self, x0: Point) -> f64 {
        match *self {
            Domain::Rectangle { xmin, xmax, ymin, ymax }
            | Domain::Imported { xmin, xmax, ymin, ymax } => [
                [xmin, ymin],
                [xmax, ymin],
                [xmax, ymax],
                [xmin, ymax],
            ]
            .iter()
            .map(|&c| dist(c, x0))
            .fold(0.0, f64::max),
            Domain::Disk { center, radius } => dist(center, x0) + radius,
        }
    }
}

pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Geometry of a single P1 triangle.
#[derive(Debug, Clone, Copy)]
pub struct Element {
    pub nodes: [usize; 3],
    pub coords: [Point; 3],
    pub area: f64,
    /// Constant gradients of the three barycentric (hat) functions.
    pub grads: [[f64; 2]; 3],
}

impl Element {
    pub fn map(&self, bary: [f64; 3]) -> Point {
        let c = &self.coords;
        [
            bary[0] * c[0][0] + bary[1] * c[1][0] + bary[2] * c[2][0],
            bary[0] * c[0][1] + bary[1] * c[1][1] + bary[2] * c[2][1],
        ]
    }

    /// Barycentric coordinates of `p` with respect to this triangle.
    pub fn barycentric(&self, p: Point) -> [f64; 3] {
        let c = &self.coords;
        // Each coordinate is the area of the sub-triangle opposite its vertex,
        // which makes the vertex case exact.
        [
            signed_area(p, c[1], c[2]) / self.area,
            signed_area(c[0], p, c[2]) / self.area,
            signed_area(c[0], c[1], p) / self.area,
        ]
    }

    /// Gradient of a P1 field given by its three nodal values.
    pub fn gradient(&self, vals: [f64; 3]) -> [f64; 2] {
        let (d1, d2) = (vals[1] - vals[0], vals[2] - vals[0]);
        [d1 * self.grads[1][0] + d2 * self.grads[2][0], d1 * self.grads[1][1] + d2 * self.grads[2][1]]
    }
}

fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * cross(sub(b, a), sub(c, a))
}

/// Planar triangulation with boundary metadata. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TriMesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary_vertex: Vec<bool>,
    boundary_edges: Vec<[usize; 2]>,
    domain: Domain,
    h_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MeshStats {
    pub vertices: usize,
    pub triangles: usize,
    pub edges: usize,
    pub boundary_edges: usize,
}

impl TriMesh {
    /// Assembles a mesh from raw connectivity; boundary edges and flags are
    /// derived from edge multiplicities and orientation is made counter-clockwise.
    pub fn from_parts(vertices: Vec<Point>, mut triangles: Vec<[usize; 3]>, domain: Domain) -> Result<Self> {
        for (t, tri) in triangles.iter_mut().enumerate() {
            if tri.iter().any(|&v| v >= vertices.len()) {
                return Err(Error::InvalidMesh(format!("triangle {t} references a missing vertex")));
            }
            let a = signed_area(vertices[tri[0]], vertices[tri[1]], vertices[tri[2]]);
            if a < 0.0 {
                tri.swap(1, 2);
            }
        }
        let counts = edge_counts(&triangles);
        let mut boundary_edges: Vec<[usize; 2]> = counts
            .iter()
            .filter(|(_, &n)| n == 1)
            .map(|(&(a, b), _)| [a, b])
            .collect();
        boundary_edges.sort_unstable();
        let mut boundary_vertex = vec![false; vertices.len()];
        for e in &boundary_edges {
            boundary_vertex[e[0]] = true;
            boundary_vertex[e[1]] = true;
        }
        let h_max = counts
            .keys()
            .map(|&(a, b)| dist(vertices[a], vertices[b]))
            .fold(0.0, f64::max);
        let mesh = TriMesh { vertices, triangles, boundary_vertex, boundary_edges, domain, h_max };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_vertex(&self) -> &[bool] {
        &self.boundary_vertex
    }

    pub fn is_boundary(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_edges(&self) -> usize {
        edge_counts(&self.triangles).len()
    }

    pub fn stats(&self) -> MeshStats {
        MeshStats {
            vertices: self.num_vertices(),
            triangles: self.num_triangles(),
            edges: self.num_edges(),
            boundary_edges: self.boundary_edges.len(),
        }
    }

    /// `V - E + T`, which is 1 for a simply connected triangulated region.
    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_triangles() as i64
    }

    pub fn total_area(&self) -> f64 {
        (0..self.num_triangles()).map(|t| self.element(t).area).sum()
    }

    pub fn element(&self, t: usize) -> Element {
        let nodes = self.triangles[t];
        let coords = nodes.map(|v| self.vertices[v]);
        let area = signed_area(coords[0], coords[1], coords[2]);
        let inv = 1.0 / (2.0 * area);
        // grad(lambda_i) = perp(edge opposite i) / (2 area)
        let mut grads = [[0.0; 2]; 3];
        for i in 0..3 {
            let a = coords[(i + 1) % 3];
            let b = coords[(i + 2) % 3];
            grads[i] = [(a[1] - b[1]) * inv, (b[0] - a[0]) * inv];
        }
        Element { nodes, coords, area, grads }
    }

    pub fn elements(&self) -> impl Iterator<Item = Element> + '_ {
        (0..self.num_triangles()).map(|t| self.element(t))
    }

    /// Checks every structural invariant: positive areas, edge manifoldness,
    /// the Euler relation and boundary-flag placement.
    pub fn validate(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::InvalidMesh("no triangles".into()));
        }
        for t in 0..self.num_triangles() {
            let e = self.element(t);
            if !(e.area > 0.0) {
                return Err(Error::InvalidMesh(format!("triangle {t} has non-positive area {}", e.area)));
            }
        }
        let counts = edge_counts(&self.triangles);
        let mut boundary = Vec::new();
        for (&(a, b), &n) in &counts {
            match n {
                1 => boundary.push([a, b]),
                2 => {}
                _ => return Err(Error::InvalidMesh(format!("edge ({a}, {b}) shared by {n} triangles"))),
            }
        }
        boundary.sort_unstable();
        if boundary != self.boundary_edges {
            return Err(Error::InvalidMesh("boundary edge list inconsistent with connectivity".into()));
        }
        let mut on_edge = vec![false; self.vertices.len()];
        for e in &boundary {
            on_edge[e[0]] = true;
            on_edge[e[1]] = true;
        }
        if on_edge != self.boundary_vertex {
            return Err(Error::InvalidMesh("boundary flags inconsistent with boundary edges".into()));
        }
        let chi = self.vertices.len() as i64 - counts.len() as i64 + self.triangles.len() as i64;
        if chi != 1 {
            return Err(Error::InvalidMesh(format!("Euler characteristic {chi} != 1")));
        }
        let tol = GEOM_TOL * self.domain.diameter();
        for (v, &b) in self.boundary_vertex.iter().enumerate() {
            if b {
                if let Some(d) = self.domain.boundary_distance(self.vertices[v]) {
                    if d > tol {
                        return Err(Error::InvalidMesh(format!(
                            "boundary vertex {v} is {d:e} away from the domain boundary"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Exports the plain-text format: `V T`, then `x y b` lines, then `i j k` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.num_vertices(), self.num_triangles());
        for (p, &b) in self.vertices.iter().zip(&self.boundary_vertex) {
            let _ = writeln!(s, "{:e} {:e} {}", p[0], p[1], b as u8);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    /// Parses the plain-text format and validates all invariants, including that
    /// the stored boundary flags match the connectivity.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let bad = |line: usize, msg: &str| Error::InvalidMesh(format!("line {}: {msg}", line + 1));
        let (hl, header) = lines.next().ok_or_else(|| Error::InvalidMesh("empty file".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(hl, "expected `V T`")))
            .collect::<Result<_>>()?;
        if head.len() != 2 {
            return Err(bad(hl, "expected `V T`"));
        }
        let (nv, nt) = (head[0], head[1]);
        let mut vertices = Vec::with_capacity(nv);
        let mut flags = Vec::with_capacity(nv);
        for _ in 0..nv {
            let (ln, l) = lines.next().ok_or_else(|| Error::InvalidMesh("truncated vertex block".into()))?;
            let tok: Vec<&str> = l.split_whitespace().collect();
            if tok.len() != 3 {
                return Err(bad(ln, "expected `x y b`"));
            }
            let x: f64 = tok[0].parse().map_err(|_| bad(ln, "bad x"))?;
            let y: f64 = tok[1].parse().map_err(|_| bad(ln, "bad y"))?;
            let b = match tok[2] {
                "0" => false,
                "1" => true,
                _ => return Err(bad(ln, "boundary flag must be 0 or 1")),
            };
            vertices.push([x, y]);
            flags.push(b);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let (ln, l) = lines.next().ok_or_else(|| Error::InvalidMesh("truncated triangle block".into()))?;
            let idx: Vec<usize> = l
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| bad(ln, "bad vertex index")))
                .collect::<Result<_>>()?;
            if idx.len() != 3 {
                return Err(bad(ln, "expected `i j k`"));
            }
            triangles.push([idx[0], idx[1], idx[2]]);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(bad(ln, "trailing data"));
        }
        let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
        for p in &vertices {
            xmin = xmin.min(p[0]);
            xmax = xmax.max(p[0]);
            ymin = ymin.min(p[1]);
            ymax = ymax.max(p[1]);
        }
        let mesh = TriMesh::from_parts(vertices, triangles, Domain::Imported { xmin, xmax, ymin, ymax })?;
        if mesh.boundary_vertex != flags {
            return Err(Error::InvalidMesh("boundary flags in file disagree with connectivity".into()));
        }
        Ok(mesh)
    }
}

fn edge_counts(triangles: &[[usize; 3]]) -> HashMap<(usize, usize), u32> {
    let mut counts = HashMap::with_capacity(triangles.len() * 2);
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
        }
    }
    counts
}

/// Structured rectangle mesh with `(nx+1)(ny+1)` vertices and `2 nx ny`
/// right triangles; the cell diagonal alternates in a checkerboard pattern.
pub fn build_rect_mesh(bounds: [f64; 4], nx: usize, ny: usize) -> Result<TriMesh> {
    let [xmin, xmax, ymin, ymax] = bounds;
    if !(xmax > xmin) || !(ymax > ymin) || bounds.iter().any(|b| !b.is_finite()) {
        return Err(Error::InvalidGeometry(format!("degenerate rectangle {bounds:?}")));
    }
    if nx == 0 || ny == 0 {
        return Err(Error::InvalidGeometry("nx and ny must be at least 1".into()));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        // Endpoints are assigned exactly so boundary vertices sit on the boundary.
        let y = if j == ny { ymax } else { ymin + (ymax - ymin) * j as f64 / ny as f64 };
        for i in 0..=nx {
            let x = if i == nx { xmax } else { xmin + (xmax - xmin) * i as f64 / nx as f64 };
            vertices.push([x, y]);
        }
    }
    let id = |i: usize, j: usize| j * (nx + 1) + i;
    let mut triangles = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v01, v11) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            if (i + j) % 2 == 0 {
                triangles.push([v00, v10, v11]);
                triangles.push([v00, v11, v01]);
            } else {
                triangles.push([v00, v10, v01]);
                triangles.push([v10, v11, v01]);
            }
        }
    }
    TriMesh::from_parts(vertices, triangles, Domain::Rectangle { xmin, xmax, ymin, ymax })
}

/// Concentric-ring disk mesh: ring `k` (radius `k R / rings`) carries `6k` vertices.
pub fn build_disk_mesh(center: Point, radius: f64, rings: usize) -> Result<TriMesh> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::InvalidGeometry(format!("disk radius must be positive, got {radius}")));
    }
    if rings == 0 {
        return Err(Error::InvalidGeometry("rings must be at least 1".into()));
    }
    let mut vertices = vec![center];
    let mut ring_start = vec![0usize];
    for k in 1..=rings {
        ring_start.push(vertices.len());
        let r = if k == rings { radius } else { radius * k as f64 / rings as f64 };
        let n = 6 * k;
        for j in 0..n {
            let a = 2.0 * PI * j as f64 / n as f64;
            vertices.push([center[0] + r * a.cos(), center[1] + r * a.sin()]);
        }
    }
    let mut triangles = Vec::with_capacity(6 * rings * rings);
    for j in 0..6 {
        triangles.push([0, 1 + j, 1 + (j + 1) % 6]);
    }
    for k in 2..=rings {
        let (n_in, n_out) = (6 * (k - 1), 6 * k);
        let inner = |a: usize| ring_start[k - 1] + a % n_in;
        let outer = |b: usize| ring_start[k] + b % n_out;
        let (mut a, mut b) = (0usize, 0usize);
        while a < n_in || b < n_out {
            // Advance along whichever ring has the next vertex at the smaller angle.
            let next_in = (a + 1) as f64 / n_in as f64;
            let next_out = (b + 1) as f64 / n_out as f64;
            if b < n_out && (a == n_in || next_out <= next_in) {
                triangles.push([inner(a), outer(b), outer(b + 1)]);
                b += 1;
            } else {
                triangles.push([inner(a), outer(b), inner(a + 1)]);
                a += 1;
            }
        }
    }
    TriMesh::from_parts(vertices, triangles, Domain::Disk { center, radius })
}

/// Splits every triangle into four through its edge midpoints. On disks the
/// boundary midpoints are projected onto the circle.
pub fn refine_uniform(mesh: &TriMesh) -> TriMesh {
    let mut vertices = mesh.vertices.clone();
    let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
    let boundary: std::collections::HashSet<(usize, usize)> =
        mesh.boundary_edges.iter().map(|e| (e[0], e[1])).collect();
    let mut mid = |a: usize, b: usize, vertices: &mut Vec<Point>| -> usize {
        let key = (a.min(b), a.max(b));
        *midpoint.entry(key).or_insert_with(|| {
            let (pa, pb) = (vertices[a], vertices[b]);
            let mut m = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            if let Domain::Disk { center, radius } = mesh.domain {
                if boundary.contains(&key) {
                    let d = dist(m, center);
                    m = [center[0] + (m[0] - center[0]) * radius / d, center[1] + (m[1] - center[1]) * radius / d];
                }
            }
            vertices.push(m);
            vertices.len() - 1
        })
    };
    let mut triangles = Vec::with_capacity(4 * mesh.triangles.len());
    for &[a, b, c] in &mesh.triangles {
        let ab = mid(a, b, &mut vertices);
        let bc = mid(b, c, &mut vertices);
        let ca = mid(c, a, &mut vertices);
        triangles.push([a, ab, ca]);
        triangles.push([ab, b, bc]);
        triangles.push([ca, bc, c]);
        triangles.push([ab, bc, ca]);
    }
    TriMesh::from_parts(vertices, triangles, mesh.domain).expect("refinement preserves mesh invariants")
}

/// Uniform background grid of triangle bins for point location.
#[derive(Debug, Clone)]
pub struct PointLocator<'a> {
    mesh: &'a TriMesh,
    origin: Point,
    cell: [f64; 2],
    dims: [usize; 2],
    bins: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    pub fn new(mesh: &'a TriMesh) -> Self {
        let (mut lo, mut hi) = ([f64::MAX; 2], [f64::MIN; 2]);
        for p in &mesh.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let n = ((mesh.num_triangles() as f64 / 2.0).sqrt().ceil() as usize).max(1);
        let dims = [n, n];
        let cell = [
            ((hi[0] - lo[0]) / n as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / n as f64).max(f64::MIN_POSITIVE),
        ];
        let mut loc = PointLocator { mesh, origin: lo, cell, dims, bins: vec![Vec::new(); n * n] };
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let (mut tlo, mut thi) = ([f64::MAX; 2], [f64::MIN; 2]);
            for &v in tri {
                for k in 0..2 {
                    tlo[k] = tlo[k].min(mesh.vertices[v][k]);
                    thi[k] = thi[k].max(mesh.vertices[v][k]);
                }
            }
            let (i0, j0) = loc.bin_of(tlo);
            let (i1, j1) = loc.bin_of(thi);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    loc.bins[j * dims[0] + i].push(t);
                }
            }
        }
        loc
    }

    fn bin_of(&self, p: Point) -> (usize, usize) {
        let f = |k: usize| {
            let x = ((p[k] - self.origin[k]) / self.cell[k]).floor();
            (x.max(0.0) as usize).min(self.dims[k] - 1)
        };
        (f(0), f(1))
    }

    /// Containing triangle and barycentric coordinates, or `None` if outside.
    pub fn locate(&self, p: Point) -> Option<(usize, [f64; 3])> {
        let tol = GEOM_TOL * (self.cell[0] + self.cell[1]).max(1.0);
        let (i, j) = self.bin_of(p);
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &t in &self.bins[j * self.dims[0] + i] {
            let bary = self.mesh.element(t).barycentric(p);
            let worst = bary.iter().copied().fold(f64::MAX, f64::min);
            if worst >= -tol && best.map_or(true, |b| worst > b.2) {
                best = Some((t, bary, worst));
            }
        }
        best.map(|(t, b, _)| (t, b))
    }

    /// P1 interpolation of nodal data at `p`.
    pub fn interpolate_at(&self, nodal: &[f64], p: Point) -> Result<f64> {
        let (t, bary) = self.locate(p).ok_or(Error::OutOfDomain(p))?;
        let v = self.mesh.triangles[t].map(|n| nodal[n]);
        if v[0] == v[1] && v[1] == v[2] {
            // constant data stays exact
            return Ok(v[0]);
        }
        Ok(bary[0] * v[0] + bary[1] * v[1] + bary[2] * v[2])
    }
}

/// Barycentric P1 interpolation of `nodal` at each query point.
pub fn interpolate(mesh: &TriMesh, nodal: &[f64], points: &[Point]) -> Result<Vec<f64>> {
    if nodal.len() != mesh.num_vertices() {
        return Err(Error::DimensionMismatch { expected: mesh.num_vertices(), found: nodal.len() });
    }
    let loc = PointLocator::new(mesh);
    points.iter().map(|&p| loc.interpolate_at(nodal, p)).collect()
}

/// Ball `B_r(x0)` containing the closed working domain, with the concentric
/// radii used by the weight construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Enclosure {
    pub x0: Point,
    pub r: f64,
}

impl Enclosure {
    /// Smallest centered ball around the domain, inflated by 1% so the
    /// closure sits strictly inside.
    pub fn around(domain: &Domain) -> Self {
        let x0 = domain.center();
        Enclosure { x0, r: 1.01 * domain.max_distance_from(x0) }
    }

    pub fn new(x0: Point, r: f64, mesh: &TriMesh) -> Result<Self> {
        if !(r > 0.0) {
            return Err(Error::InvalidGeometry(format!("enclosure radius must be positive, got {r}")));
        }
        let enc = Enclosure { x0, r };
        if let Some(v) = mesh.vertices.iter().find(|&&v| dist(v, x0) >= r) {
            return Err(Error::InvalidGeometry(format!(
                "vertex ({}, {}) is not inside B_r(x0) with r = {r}",
                v[0], v[1]
            )));
        }
        Ok(enc)
    }

    pub fn radius(&self, multiple: f64) -> f64 {
        multiple * self.r
    }

    pub fn measure_b3r(&self) -> f64 {
        let r3 = 3.0 * self.r;
        PI * r3 * r3
    }

    pub fn contains_mesh(&self, mesh: &TriMesh) -> bool {
        mesh.vertices.iter().all(|&v| dist(v, self.x0) < self.r)
    }
}
