//! Simplicial triangulations of polygonal domains in 2D.
//!
//! A [`Mesh`] owns its vertices and counter-clockwise triangles together with
//! the full face connectivity: every edge is enumerated once, interior edges
//! know both adjacent triangles (`plus` is always the lower triangle index),
//! boundary edges only `plus`. Local edge `i` of a triangle is the edge
//! opposite its local vertex `i`.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub type Point = [f64; 2];

/// An edge of the triangulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Face {
    /// Endpoints, ordered counter-clockwise with respect to `plus`.
    pub vertices: [usize; 2],
    pub plus: usize,
    pub minus: Option<usize>,
    /// Unit normal pointing out of `plus`.
    pub normal: [f64; 2],
    pub length: f64,
    /// Local edge index of this face in `plus`.
    pub plus_edge: usize,
    /// Local vertex indices in `plus` of `vertices[0]` and `vertices[1]`.
    pub plus_local: [usize; 2],
    pub minus_edge: Option<usize>,
    pub minus_local: Option<[usize; 2]>,
}

impl Face {
    pub fn is_boundary(&self) -> bool {
        self.minus.is_none()
    }

    /// `h_F`, the face diameter.
    pub fn diam(&self) -> f64 {
        self.length
    }

    /// The adjacent elements with their local vertex indices of the face
    /// endpoints and the sign of the outward normal relative to `normal`.
    pub fn sides(&self) -> impl Iterator<Item = (usize, [usize; 2], f64)> + '_ {
        std::iter::once((self.plus, self.plus_local, 1.0)).chain(
            self.minus
                .zip(self.minus_local)
                .map(|(k, loc)| (k, loc, -1.0)),
        )
    }
}

/// Axis-aligned square `(lo, hi)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Square {
    pub lo: f64,
    pub hi: f64,
}

impl Square {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn area(&self) -> f64 {
        (self.hi - self.lo).powi(2)
    }
}

#[derive(Debug, Clone)]
pub struct Mesh {
    vertices: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    faces: Vec<Face>,
    elem_faces: Vec<[usize; 3]>,
    area: Vec<f64>,
    elem_diam: Vec<f64>,
    inscribed_diam: Vec<f64>,
    grad_bary: Vec<[[f64; 2]; 3]>,
    boundary_vertex: Vec<bool>,
}

fn signed_area(a: Point, b: Point, c: Point) -> f64 {
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
}

fn dist(a: Point, b: Point) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

impl Mesh {
    /// Builds a mesh and its connectivity from counter-clockwise triangles.
    pub fn new(vertices: Vec<Point>, triangles: Vec<[usize; 3]>) -> Result<Self> {
        let nv = vertices.len();
        let mut area = Vec::with_capacity(triangles.len());
        for (k, t) in triangles.iter().enumerate() {
            if t.iter().any(|&v| v >= nv) {
                return Err(Error::MalformedMesh(format!(
                    "triangle {k} references a missing vertex"
                )));
            }
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(Error::MalformedMesh(format!("triangle {k} is degenerate")));
            }
            let a = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if a <= 0.0 {
                return Err(Error::MalformedMesh(format!(
                    "triangle {k} has non-positive signed area {a:e}"
                )));
            }
            area.push(a);
        }
        let mut mesh = Mesh {
            vertices,
            triangles,
            faces: Vec::new(),
            elem_faces: Vec::new(),
            area,
            elem_diam: Vec::new(),
            inscribed_diam: Vec::new(),
            grad_bary: Vec::new(),
            boundary_vertex: Vec::new(),
        };
        mesh.build_connectivity()?;
        Ok(mesh)
    }

    fn build_connectivity(&mut self) -> Result<()> {
        let nt = self.triangles.len();
        let mut map: HashMap<(usize, usize), usize> = HashMap::with_capacity(2 * nt);
        let mut faces: Vec<Face> = Vec::with_capacity(2 * nt);
        let mut elem_faces = vec![[usize::MAX; 3]; nt];
        for (k, t) in self.triangles.iter().enumerate() {
            for i in 0..3 {
                let la = (i + 1) % 3;
                let lb = (i + 2) % 3;
                let (a, b) = (t[la], t[lb]);
                let key = (a.min(b), a.max(b));
                match map.get(&key) {
                    None => {
                        let pa = self.vertices[a];
                        let pb = self.vertices[b];
                        let len = dist(pa, pb);
                        let normal = [(pb[1] - pa[1]) / len, -(pb[0] - pa[0]) / len];
                        map.insert(key, faces.len());
                        elem_faces[k][i] = faces.len();
                        faces.push(Face {
                            vertices: [a, b],
                            plus: k,
                            minus: None,
                            normal,
                            length: len,
                            plus_edge: i,
                            plus_local: [la, lb],
                            minus_edge: None,
                            minus_local: None,
                        });
                    }
                    Some(&f) => {
                        let face = &mut faces[f];
                        if face.minus.is_some() {
                            return Err(Error::NonManifoldEdge(key.0, key.1));
                        }
                        face.minus = Some(k);
                        face.minus_edge = Some(i);
                        // the neighbour traverses the edge in the opposite direction
                        face.minus_local = Some([lb, la]);
                        elem_faces[k][i] = f;
                    }
                }
            }
        }

        let mut boundary_vertex = vec![false; self.vertices.len()];
        for f in faces.iter().filter(|f| f.is_boundary()) {
            boundary_vertex[f.vertices[0]] = true;
            boundary_vertex[f.vertices[1]] = true;
        }

        let mut elem_diam = Vec::with_capacity(nt);
        let mut inscribed = Vec::with_capacity(nt);
        let mut grad_bary = Vec::with_capacity(nt);
        for (k, t) in self.triangles.iter().enumerate() {
            let lens = elem_faces[k].map(|f| faces[f].length);
            elem_diam.push(lens.iter().cloned().fold(0.0, f64::max));
            let perimeter: f64 = lens.iter().sum();
            inscribed.push(4.0 * self.area[k] / perimeter);
            let mut g = [[0.0; 2]; 3];
            for (i, gi) in g.iter_mut().enumerate() {
                let a = self.vertices[t[(i + 1) % 3]];
                let b = self.vertices[t[(i + 2) % 3]];
                // rotate the opposite edge by +90 degrees: inward normal times length
                let scale = 1.0 / (2.0 * self.area[k]);
                *gi = [-(b[1] - a[1]) * scale, (b[0] - a[0]) * scale];
            }
            grad_bary.push(g);
        }

        self.faces = faces;
        self.elem_faces = elem_faces;
        self.elem_diam = elem_diam;
        self.inscribed_diam = inscribed;
        self.grad_bary = grad_bary;
        self.boundary_vertex = boundary_vertex;
        Ok(())
    }

    /// Union-jack triangulation of `square` with `n_div` subdivisions per
    /// side. Diagonals alternate so that every even grid vertex, in
    /// particular the centre, is the common vertex of eight triangles.
    pub fn generate(n_div: usize, square: Square) -> Result<Self> {
        if n_div == 0 || n_div % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "n_div must be a positive even integer, got {n_div}"
            )));
        }
        if square.hi <= square.lo {
            return Err(Error::InvalidParameter("empty square".into()));
        }
        let n = n_div;
        let h = (square.hi - square.lo) / n as f64;
        let coord = |i: usize| {
            // exact centre for symmetric squares
            if 2 * i == n {
                0.5 * (square.lo + square.hi)
            } else {
                square.lo + i as f64 * h
            }
        };
        let mut vertices = Vec::with_capacity((n + 1) * (n + 1));
        for j in 0..=n {
            for i in 0..=n {
                vertices.push([coord(i), coord(j)]);
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut triangles = Vec::with_capacity(2 * n * n);
        for j in 0..n {
            for i in 0..n {
                let (p00, p10, p11, p01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
                if (i + j) % 2 == 0 {
                    triangles.push([p00, p10, p11]);
                    triangles.push([p00, p11, p01]);
                } else {
                    triangles.push([p00, p10, p01]);
                    triangles.push([p10, p11, p01]);
                }
            }
        }
        Mesh::new(vertices, triangles)
    }

    /// Red refinement: every triangle is split into four congruent children
    /// through its edge midpoints. Midpoint of face `f` gets vertex index
    /// `num_vertices() + f`.
    pub fn refine_uniform(&self) -> Mesh {
        let nv = self.vertices.len();
        let mut vertices = self.vertices.clone();
        vertices.extend(self.faces.iter().map(|f| {
            let a = self.vertices[f.vertices[0]];
            let b = self.vertices[f.vertices[1]];
            [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
        }));
        let mut triangles = Vec::with_capacity(4 * self.triangles.len());
        for (k, t) in self.triangles.iter().enumerate() {
            let m = self.elem_faces[k].map(|f| nv + f);
            triangles.push([t[0], m[2], m[1]]);
            triangles.push([m[2], t[1], m[0]]);
            triangles.push([m[1], m[0], t[2]]);
            triangles.push([m[0], m[1], m[2]]);
        }
        Mesh::new(vertices, triangles).expect("refinement of a valid mesh is valid")
    }

    /// Reads the triangles of an MSH 2.x ASCII file; every other element
    /// type is skipped and unreferenced nodes are dropped (keeping order).
    pub fn read_msh(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_msh(&text)
    }

    pub fn parse_msh(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::MalformedMesh(msg.to_string());
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let mut nodes: Vec<(i64, Point)> = Vec::new();
        let mut tris: Vec<[i64; 3]> = Vec::new();
        let (mut seen_nodes, mut seen_elements) = (false, false);

        while let Some(line) = lines.next() {
            match line {
                "$MeshFormat" => {
                    let v = lines.next().ok_or_else(|| bad("truncated $MeshFormat"))?;
                    let version = v.split_whitespace().next().unwrap_or("");
                    if !version.starts_with('2') {
                        return Err(bad(&format!("unsupported MSH version {version}")));
                    }
                    if v.split_whitespace().nth(1) != Some("0") {
                        return Err(bad("only ASCII MSH files are supported"));
                    }
                    expect_end(&mut lines, "$EndMeshFormat")?;
                }
                "$Nodes" => {
                    let n = parse_count(lines.next(), "$Nodes")?;
                    for _ in 0..n {
                        let l = lines.next().ok_or_else(|| bad("truncated $Nodes"))?;
                        let f: Vec<&str> = l.split_whitespace().collect();
                        if f.len() < 4 {
                            return Err(bad(&format!("bad node line '{l}'")));
                        }
                        let id: i64 = f[0].parse().map_err(|_| bad("bad node id"))?;
                        let xyz: Vec<f64> = f[1..4]
                            .iter()
                            .map(|s| s.parse::<f64>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| bad(&format!("bad node coordinates '{l}'")))?;
                        if xyz[2].abs() > 1e-12 {
                            return Err(bad(&format!("node {id} is not planar (z = {})", xyz[2])));
                        }
                        nodes.push((id, [xyz[0], xyz[1]]));
                    }
                    expect_end(&mut lines, "$EndNodes")?;
                    seen_nodes = true;
                }
                "$Elements" => {
                    let n = parse_count(lines.next(), "$Elements")?;
                    for _ in 0..n {
                        let l = lines.next().ok_or_else(|| bad("truncated $Elements"))?;
                        let f: Vec<i64> = l
                            .split_whitespace()
                            .map(str::parse)
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| bad(&format!("bad element line '{l}'")))?;
                        if f.len() < 3 {
                            return Err(bad(&format!("bad element line '{l}'")));
                        }
                        let ntags = f[2] as usize;
                        if f[1] == 2 {
                            if f.len() != 3 + ntags + 3 {
                                return Err(bad(&format!("bad triangle line '{l}'")));
                            }
                            let v = &f[3 + ntags..];
                            tris.push([v[0], v[1], v[2]]);
                        }
                    }
                    expect_end(&mut lines, "$EndElements")?;
                    seen_elements = true;
                }
                other if other.starts_with('$') => {
                    // unknown section: skip to its end marker
                    let end = format!("$End{}", &other[1..]);
                    for l in lines.by_ref() {
                        if l == end {
                            break;
                        }
                    }
                }
                _ => return Err(bad(&format!("unexpected line '{line}'"))),
            }
        }
        if !seen_nodes || !seen_elements {
            return Err(bad("missing $Nodes or $Elements section"));
        }
        if tris.is_empty() {
            return Err(bad("no triangles"));
        }

        let index: HashMap<i64, usize> = nodes.iter().enumerate().map(|(i, (id, _))| (*id, i)).collect();
        let mut used = vec![false; nodes.len()];
        let mut raw = Vec::with_capacity(tris.len());
        for t in &tris {
            let mut r = [0usize; 3];
            for (slot, id) in r.iter_mut().zip(t) {
                *slot = *index
                    .get(id)
                    .ok_or_else(|| bad(&format!("element references unknown node {id}")))?;
                used[*slot] = true;
            }
            raw.push(r);
        }
        let mut renumber = vec![usize::MAX; nodes.len()];
        let mut vertices = Vec::new();
        for (i, (_, p)) in nodes.iter().enumerate() {
            if used[i] {
                renumber[i] = vertices.len();
                vertices.push(*p);
            }
        }
        let mut triangles = Vec::with_capacity(raw.len());
        for (k, r) in raw.iter().enumerate() {
            let mut t = r.map(|v| renumber[v]);
            let a = signed_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if a.abs() <= 1e-14 * dist(vertices[t[0]], vertices[t[1]]).powi(2) {
                return Err(bad(&format!("triangle {k} has zero area")));
            }
            if a < 0.0 {
                t.swap(1, 2);
            }
            triangles.push(t);
        }
        Mesh::new(vertices, triangles)
    }

    /// Plain-text dump: a `vertices N` block of coordinates followed by a
    /// `triangles M` block of vertex indices.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        writeln!(s, "vertices {}", self.vertices.len()).unwrap();
        for v in &self.vertices {
            writeln!(s, "{} {}", v[0], v[1]).unwrap();
        }
        writeln!(s, "triangles {}", self.triangles.len()).unwrap();
        for t in &self.triangles {
            writeln!(s, "{} {} {}", t[0], t[1], t[2]).unwrap();
        }
        s
    }

    pub fn from_dump(text: &str) -> Result<Self> {
        let bad = |msg: &str| Error::MalformedMesh(msg.to_string());
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = |l: Option<&str>, key: &str| -> Result<usize> {
            let l = l.ok_or_else(|| bad("truncated dump"))?;
            let mut it = l.split_whitespace();
            if it.next() != Some(key) {
                return Err(bad(&format!("expected '{key}' block")));
            }
            it.next()
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| bad("bad block count"))
        };
        let nv = header(lines.next(), "vertices")?;
        let mut vertices = Vec::with_capacity(nv);
        for _ in 0..nv {
            let l = lines.next().ok_or_else(|| bad("truncated vertices"))?;
            let c: Vec<f64> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad vertex"))?;
            if c.len() != 2 {
                return Err(bad("bad vertex"));
            }
            vertices.push([c[0], c[1]]);
        }
        let nt = header(lines.next(), "triangles")?;
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let l = lines.next().ok_or_else(|| bad("truncated triangles"))?;
            let c: Vec<usize> = l
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad("bad triangle"))?;
            if c.len() != 3 {
                return Err(bad("bad triangle"));
            }
            triangles.push([c[0], c[1], c[2]]);
        }
        Mesh::new(vertices, triangles)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> Point {
        self.vertices[v]
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn triangle(&self, k: usize) -> [usize; 3] {
        self.triangles[k]
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    pub fn face(&self, f: usize) -> &Face {
        &self.faces[f]
    }

    /// Face indices of the local edges of triangle `k`.
    pub fn elem_faces(&self, k: usize) -> [usize; 3] {
        self.elem_faces[k]
    }

    pub fn area(&self, k: usize) -> f64 {
        self.area[k]
    }

    /// `h_K`: longest edge of triangle `k`.
    pub fn elem_diam(&self, k: usize) -> f64 {
        self.elem_diam[k]
    }

    /// `ρ_K`: diameter of the inscribed circle.
    pub fn inscribed_diam(&self, k: usize) -> f64 {
        self.inscribed_diam[k]
    }

    /// Constant gradients of the barycentric coordinates on triangle `k`.
    pub fn grad_bary(&self, k: usize) -> [[f64; 2]; 3] {
        self.grad_bary[k]
    }

    pub fn is_boundary_vertex(&self, v: usize) -> bool {
        self.boundary_vertex[v]
    }

    pub fn corners(&self, k: usize) -> [Point; 3] {
        self.triangles[k].map(|v| self.vertices[v])
    }

    /// Physical point of barycentric coordinates `bary` in triangle `k`.
    pub fn map_point(&self, k: usize, bary: [f64; 3]) -> Point {
        let c = self.corners(k);
        [
            bary[0] * c[0][0] + bary[1] * c[1][0] + bary[2] * c[2][0],
            bary[0] * c[0][1] + bary[1] * c[1][1] + bary[2] * c[2][1],
        ]
    }

    /// Point at parameter `t` along face `f` (from `vertices[0]` to `vertices[1]`).
    pub fn face_point(&self, f: usize, t: f64) -> Point {
        let [a, b] = self.faces[f].vertices.map(|v| self.vertices[v]);
        [(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]]
    }

    /// Maximal mesh size `h = max_K h_K`.
    pub fn h_max(&self) -> f64 {
        self.elem_diam.iter().cloned().fold(0.0, f64::max)
    }

    /// Chunkiness `max_K h_K / ρ_K`.
    pub fn chunkiness(&self) -> f64 {
        self.elem_diam
            .iter()
            .zip(&self.inscribed_diam)
            .map(|(h, r)| h / r)
            .fold(0.0, f64::max)
    }

    pub fn total_area(&self) -> f64 {
        self.area.iter().sum()
    }

    pub fn num_boundary_faces(&self) -> usize {
        self.faces.iter().filter(|f| f.is_boundary()).count()
    }

    /// Lowest-index triangle containing vertex `v`, with the local index of `v`.
    pub fn vertex_owners(&self) -> Vec<(usize, usize)> {
        let mut owner = vec![(usize::MAX, 0); self.vertices.len()];
        for (k, t) in self.triangles.iter().enumerate() {
            for (i, &v) in t.iter().enumerate() {
                if owner[v].0 == usize::MAX {
                    owner[v] = (k, i);
                }
            }
        }
        owner
    }
}

fn parse_count(line: Option<&str>, section: &str) -> Result<usize> {
    line.and_then(|l| l.trim().parse().ok())
        .ok_or_else(|| Error::MalformedMesh(format!("bad count in {section}")))
}

fn expect_end<'a>(lines: &mut impl Iterator<Item = &'a str>, end: &str) -> Result<()> {
    match lines.next() {
        Some(l) if l == end => Ok(()),
        _ => Err(Error::MalformedMesh(format!("missing {end}"))),
    }
}
