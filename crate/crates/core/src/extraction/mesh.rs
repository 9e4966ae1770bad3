use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point3;

/// Triangles with area at or below this are treated as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Point3>,
    pub triangles: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle(&self, t: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[t];
        [self.vertices[a as usize], self.vertices[b as usize], self.vertices[c as usize]]
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangle(t);
        0.5 * (b - a).cross(c - a).norm()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Number of triangles using each undirected edge.
    pub fn edge_uses(&self) -> HashMap<(u32, u32), u32> {
        let mut uses = HashMap::new();
        for &[a, b, c] in &self.triangles {
            for (p, q) in [(a, b), (b, c), (c, a)] {
                *uses.entry((p.min(q), p.max(q))).or_insert(0) += 1;
            }
        }
        uses
    }

    /// Edges used by exactly one triangle, sorted.
    pub fn boundary_edges(&self) -> Vec<(u32, u32)> {
        let mut e: Vec<_> = self.edge_uses().into_iter().filter(|&(_, n)| n == 1).map(|(k, _)| k).collect();
        e.sort_unstable();
        e
    }

    pub fn boundary_edge_count(&self) -> usize {
        self.edge_uses().values().filter(|&&n| n == 1).count()
    }

    /// Edges shared by more than two triangles.
    pub fn non_manifold_edge_count(&self) -> usize {
        self.edge_uses().values().filter(|&&n| n > 2).count()
    }

    pub fn is_watertight(&self) -> bool {
        !self.is_empty() && self.boundary_edge_count() == 0
    }

    /// Splits triangles into edge-connected components; returns the
    /// component id of each triangle and the component count.
    pub fn components(&self) -> (Vec<usize>, usize) {
        let n = self.triangles.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        let mut owner: HashMap<u32, usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for &v in tri {
                if let Some(&o) = owner.get(&v) {
                    let (ra, rb) = (find(&mut parent, o), find(&mut parent, t));
                    if ra != rb {
                        parent[ra.max(rb)] = ra.min(rb);
                    }
                } else {
                    owner.insert(v, t);
                }
            }
        }
        let mut ids = HashMap::new();
        let mut out = Vec::with_capacity(n);
        for t in 0..n {
            let r = find(&mut parent, t);
            let next = ids.len();
            out.push(*ids.entry(r).or_insert(next));
        }
        let count = ids.len();
        (out, count)
    }

    pub fn validate(&self) -> Result<()> {
        let nv = self.vertices.len() as u32;
        for (t, tri) in self.triangles.iter().enumerate() {
            if tri.iter().any(|&i| i >= nv) {
                return Err(Error::Contract(format!("triangle {t} references a missing vertex")));
            }
            if self.triangle_area(t) <= MIN_TRIANGLE_AREA {
                return Err(Error::Contract(format!("triangle {t} is degenerate")));
            }
        }
        Ok(())
    }

    /// Plain-text form: a comment header, `v x y z` lines and 1-based
    /// `f a b c` lines. Coordinates use the shortest exact decimal form.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(40 * (self.vertices.len() + self.triangles.len()) + 64);
        let _ = writeln!(s, "# udfrecon mesh: {} vertices, {} faces", self.vertices.len(), self.triangles.len());
        for v in &self.vertices {
            let _ = writeln!(s, "v {:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for t in &self.triangles {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
        s
    }

    pub fn from_text(text: &str, path: &Path) -> Result<Self> {
        let mut mesh = TriangleMesh::default();
        for (ln, line) in text.lines().enumerate() {
            let mut it = line.split_whitespace();
            let bad = |what: &str| Error::format(path, format!("line {}: {what}", ln + 1));
            match it.next() {
                None => {}
                Some(tok) if tok.starts_with('#') => {}
                Some("v") => {
                    let mut c = [0.0; 3];
                    for x in &mut c {
                        *x = it.next().and_then(|s| s.parse().ok()).ok_or_else(|| bad("bad vertex"))?;
                    }
                    mesh.vertices.push(Point3::from_array(c));
                }
                Some("f") => {
                    let mut f = [0u32; 3];
                    for x in &mut f {
                        // Accept `a/b/c` style references by keeping the vertex part.
                        let tok = it.next().ok_or_else(|| bad("bad face"))?;
                        let idx: u32 = tok.split('/').next().unwrap_or("").parse().map_err(|_| bad("bad face index"))?;
                        if idx == 0 {
                            return Err(bad("face indices are 1-based"));
                        }
                        *x = idx - 1;
                    }
                    mesh.triangles.push(f);
                }
                Some(_) => {}
            }
        }
        let nv = mesh.vertices.len() as u32;
        if mesh.triangles.iter().flatten().any(|&i| i >= nv) {
            return Err(Error::format(path, "face references a missing vertex"));
        }
        Ok(mesh)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }
}
