//! Level-set extraction on a regular grid.
//!
//! n = 3 uses marching tetrahedra on the 6-tetrahedron Kuhn split of each
//! cube (every tetrahedron contains the cube's main diagonal). All cube-face
//! diagonals produced by the split run between the local (0,0) and (1,1)
//! corners of the face, so adjacent cubes tile their shared face identically
//! and the extracted surface is watertight. n = 2 marches the 2-triangle
//! split of each square. Vertices are deduplicated by global grid-edge keys.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub enum MeshFaces {
    /// n = 3: triangles as vertex-index triples.
    Triangles(Vec<[usize; 3]>),
    /// n = 2: polyline segments as vertex-index pairs.
    Segments(Vec<[usize; 2]>),
}

impl MeshFaces {
    pub fn len(&self) -> usize {
        match self {
            MeshFaces::Triangles(t) => t.len(),
            MeshFaces::Segments(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct LevelSetComponent {
    pub vertices: Vec<Vec<f64>>,
    pub faces: MeshFaces,
    /// V - E + F (triangles) or V - E (segments).
    pub euler: i64,
    /// Any vertex lies on a face of the domain box.
    pub clipped: bool,
}

/// Extract the level set {f = level} inside the box as deduplicated meshes,
/// one per connected component, ordered deterministically.
///
/// `resolution` is the cell count per axis. Grid values within rounding
/// distance of the level are nudged to one side so no corner sits exactly on
/// the surface.
pub fn extract_level_set(
    eval: &dyn Fn(&[f64]) -> f64,
    domain: &[[f64; 2]],
    resolution: usize,
    level: f64,
) -> Result<Vec<LevelSetComponent>> {
    match domain.len() {
        3 => extract_3d(eval, domain, resolution, level),
        2 => extract_2d(eval, domain, resolution, level),
        n => Err(Error::UnsupportedDimension(format!(
            "level-set extraction supports n = 2 or 3, got {n}"
        ))),
    }
}

fn grid_values(
    eval: &dyn Fn(&[f64]) -> f64,
    domain: &[[f64; 2]],
    nodes: usize,
    level: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = domain.len();
    let steps: Vec<f64> = domain.iter().map(|r| (r[1] - r[0]) / (nodes - 1) as f64).collect();
    let total = nodes.pow(n as u32);
    let mut values = vec![0.0f64; total];
    let mut p = vec![0.0f64; n];
    for flat in 0..total {
        let mut rest = flat;
        for a in (0..n).rev() {
            let idx = rest % nodes;
            rest /= nodes;
            p[a] = domain[a][0] + steps[a] * idx as f64;
        }
        values[flat] = eval(&p);
    }
    // snap values that coincide with the level to the positive side
    let scale = values.iter().fold(level.abs(), |m, v| m.max(v.abs())) + 1.0;
    let snap = 1e-12 * scale;
    for v in values.iter_mut() {
        if (*v - level).abs() <= snap {
            *v = level + snap;
        }
    }
    (values, steps)
}

struct MeshBuilder<'a> {
    domain: &'a [[f64; 2]],
    steps: Vec<f64>,
    nodes: usize,
    values: &'a [f64],
    level: f64,
    eval: &'a dyn Fn(&[f64]) -> f64,
    edge_vertices: HashMap<(usize, usize), usize>,
    vertices: Vec<Vec<f64>>,
}

impl<'a> MeshBuilder<'a> {
    fn node_coord(&self, mut flat: usize) -> Vec<f64> {
        let n = self.domain.len();
        let mut p = vec![0.0; n];
        for a in (0..n).rev() {
            let idx = flat % self.nodes;
            flat /= self.nodes;
            p[a] = self.domain[a][0] + self.steps[a] * idx as f64;
        }
        p
    }

    /// Vertex on the grid edge (ga, gb), bisected onto the level crossing.
    ///
    /// Linear interpolation alone leaves an O(h²) residual on the long
    /// diagonal edges, so the crossing is refined against the true field.
    /// The snapped corner values fix the bracket orientation even when the
    /// exact field vanishes at a corner.
    fn edge_vertex(&mut self, ga: usize, gb: usize) -> usize {
        let key = (ga.min(gb), ga.max(gb));
        if let Some(&v) = self.edge_vertices.get(&key) {
            return v;
        }
        let (a, b) = key;
        let pa = self.node_coord(a);
        let pb = self.node_coord(b);
        let a_positive = self.values[a] > self.level;
        let mut scratch = vec![0.0f64; pa.len()];
        let g = |s: f64, scratch: &mut [f64]| -> f64 {
            for (i, x) in scratch.iter_mut().enumerate() {
                *x = pa[i] + s * (pb[i] - pa[i]);
            }
            (self.eval)(scratch) - self.level
        };
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut t = 0.5;
        for _ in 0..48 {
            t = 0.5 * (lo + hi);
            let gm = g(t, &mut scratch);
            if gm == 0.0 {
                break;
            }
            if (gm > 0.0) == a_positive {
                lo = t;
            } else {
                hi = t;
            }
        }
        let p: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x + t * (y - x)).collect();
        let id = self.vertices.len();
        self.vertices.push(p);
        self.edge_vertices.insert(key, id);
        id
    }
}

/// Kuhn split: 6 tetrahedra around the 0-7 main diagonal; corner bit code
/// b = dx + 2 dy + 4 dz.
const KUHN_TETS: [[usize; 4]; 6] = [
    [0, 1, 3, 7],
    [0, 3, 2, 7],
    [0, 2, 6, 7],
    [0, 6, 4, 7],
    [0, 4, 5, 7],
    [0, 5, 1, 7],
];

fn extract_3d(
    eval: &dyn Fn(&[f64]) -> f64,
    domain: &[[f64; 2]],
    resolution: usize,
    level: f64,
) -> Result<Vec<LevelSetComponent>> {
    let nodes = resolution + 1;
    let (values, steps) = grid_values(eval, domain, nodes, level);
    check_range(&values, level)?;

    let mut b = MeshBuilder {
        domain,
        steps,
        nodes,
        values: &values,
        level,
        eval,
        edge_vertices: HashMap::new(),
        vertices: Vec::new(),
    };
    let mut triangles: Vec<[usize; 3]> = Vec::new();

    let node_id =
        |ix: usize, iy: usize, iz: usize| -> usize { (ix * nodes + iy) * nodes + iz };

    for ix in 0..resolution {
        for iy in 0..resolution {
            for iz in 0..resolution {
                let mut corner = [0usize; 8];
                for (bit, c) in corner.iter_mut().enumerate() {
                    *c = node_id(ix + (bit & 1), iy + ((bit >> 1) & 1), iz + ((bit >> 2) & 1));
                }
                // early out: all corners on one side
                let mut pos = 0;
                for &c in &corner {
                    if values[c] > level {
                        pos += 1;
                    }
                }
                if pos == 0 || pos == 8 {
                    continue;
                }
                for tet in &KUHN_TETS {
                    march_tet(&mut b, [corner[tet[0]], corner[tet[1]], corner[tet[2]], corner[tet[3]]], &mut triangles);
                }
            }
        }
    }

    if triangles.is_empty() {
        return Err(Error::EmptyFiber { level });
    }
    Ok(split_components(b.vertices, MeshFaces::Triangles(triangles), domain))
}

fn march_tet(b: &mut MeshBuilder, c: [usize; 4], out: &mut Vec<[usize; 3]>) {
    let side = |i: usize| b.values[c[i]] > b.level;
    let mut pos: Vec<usize> = Vec::with_capacity(4);
    let mut neg: Vec<usize> = Vec::with_capacity(4);
    for i in 0..4 {
        if side(i) {
            pos.push(i);
        } else {
            neg.push(i);
        }
    }
    match pos.len() {
        0 | 4 => {}
        1 | 3 => {
            let (apex, base) = if pos.len() == 1 { (pos[0], neg) } else { (neg[0], pos) };
            let v0 = b.edge_vertex(c[apex], c[base[0]]);
            let v1 = b.edge_vertex(c[apex], c[base[1]]);
            let v2 = b.edge_vertex(c[apex], c[base[2]]);
            out.push([v0, v1, v2]);
        }
        2 => {
            // quad cycle: (p0,n0) -> (p0,n1) -> (p1,n1) -> (p1,n0)
            let q0 = b.edge_vertex(c[pos[0]], c[neg[0]]);
            let q1 = b.edge_vertex(c[pos[0]], c[neg[1]]);
            let q2 = b.edge_vertex(c[pos[1]], c[neg[1]]);
            let q3 = b.edge_vertex(c[pos[1]], c[neg[0]]);
            out.push([q0, q1, q2]);
            out.push([q0, q2, q3]);
        }
        _ => unreachable!(),
    }
}

fn extract_2d(
    eval: &dyn Fn(&[f64]) -> f64,
    domain: &[[f64; 2]],
    resolution: usize,
    level: f64,
) -> Result<Vec<LevelSetComponent>> {
    let nodes = resolution + 1;
    let (values, steps) = grid_values(eval, domain, nodes, level);
    check_range(&values, level)?;

    let mut b = MeshBuilder {
        domain,
        steps,
        nodes,
        values: &values,
        level,
        eval,
        edge_vertices: HashMap::new(),
        vertices: Vec::new(),
    };
    let mut segments: Vec<[usize; 2]> = Vec::new();
    let node_id = |ix: usize, iy: usize| -> usize { ix * nodes + iy };

    for ix in 0..resolution {
        for iy in 0..resolution {
            // corners bit-coded b = dx + 2 dy; triangles {0,1,3}, {0,3,2}
            let corner = [
                node_id(ix, iy),
                node_id(ix + 1, iy),
                node_id(ix, iy + 1),
                node_id(ix + 1, iy + 1),
            ];
            for tri in [[0usize, 1, 3], [0, 3, 2]] {
                let c = [corner[tri[0]], corner[tri[1]], corner[tri[2]]];
                let mut pos = Vec::with_capacity(3);
                let mut neg = Vec::with_capacity(3);
                for (i, &g) in c.iter().enumerate() {
                    if values[g] > level {
                        pos.push(i);
                    } else {
                        neg.push(i);
                    }
                }
                if pos.is_empty() || neg.is_empty() {
                    continue;
                }
                let (apex, base) = if pos.len() == 1 { (pos[0], &neg) } else { (neg[0], &pos) };
                let v0 = b.edge_vertex(c[apex], c[base[0]]);
                let v1 = b.edge_vertex(c[apex], c[base[1]]);
                segments.push([v0, v1]);
            }
        }
    }

    if segments.is_empty() {
        return Err(Error::EmptyFiber { level });
    }
    Ok(split_components(b.vertices, MeshFaces::Segments(segments), domain))
}

fn check_range(values: &[f64], level: f64) -> Result<()> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if level < min || level > max {
        return Err(Error::EmptyFiber { level });
    }
    Ok(())
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }
}

fn split_components(
    vertices: Vec<Vec<f64>>,
    faces: MeshFaces,
    domain: &[[f64; 2]],
) -> Vec<LevelSetComponent> {
    let mut uf = UnionFind::new(vertices.len());
    match &faces {
        MeshFaces::Triangles(tris) => {
            for t in tris {
                uf.union(t[0], t[1]);
                uf.union(t[1], t[2]);
            }
        }
        MeshFaces::Segments(segs) => {
            for s in segs {
                uf.union(s[0], s[1]);
            }
        }
    }

    // stable component ids in order of first vertex appearance
    let mut comp_of_root: HashMap<usize, usize> = HashMap::new();
    let mut vert_comp = vec![usize::MAX; vertices.len()];
    let mut n_comp = 0usize;
    for v in 0..vertices.len() {
        let r = uf.find(v);
        let c = *comp_of_root.entry(r).or_insert_with(|| {
            let c = n_comp;
            n_comp += 1;
            c
        });
        vert_comp[v] = c;
    }

    let extent: f64 = domain.iter().map(|r| r[1] - r[0]).fold(0.0, f64::max);
    let face_tol = 1e-9 * extent;
    let on_face = |p: &[f64]| -> bool {
        p.iter()
            .zip(domain)
            .any(|(x, r)| (x - r[0]).abs() <= face_tol || (x - r[1]).abs() <= face_tol)
    };

    let mut out: Vec<LevelSetComponent> = Vec::new();
    for c in 0..n_comp {
        let mut vmap: HashMap<usize, usize> = HashMap::new();
        let mut verts: Vec<Vec<f64>> = Vec::new();
        let map = |g: usize, verts: &mut Vec<Vec<f64>>, vmap: &mut HashMap<usize, usize>| -> usize {
            *vmap.entry(g).or_insert_with(|| {
                verts.push(vertices[g].clone());
                verts.len() - 1
            })
        };
        let mut edge_set: std::collections::HashSet<(usize, usize)> = std::collections::HashSet::new();
        let comp_faces = match &faces {
            MeshFaces::Triangles(tris) => {
                let mut list = Vec::new();
                for t in tris {
                    if vert_comp[t[0]] != c {
                        continue;
                    }
                    let a = map(t[0], &mut verts, &mut vmap);
                    let b2 = map(t[1], &mut verts, &mut vmap);
                    let d = map(t[2], &mut verts, &mut vmap);
                    list.push([a, b2, d]);
                    for (u, v) in [(a, b2), (b2, d), (d, a)] {
                        edge_set.insert((u.min(v), u.max(v)));
                    }
                }
                MeshFaces::Triangles(list)
            }
            MeshFaces::Segments(segs) => {
                let mut list = Vec::new();
                for s in segs {
                    if vert_comp[s[0]] != c {
                        continue;
                    }
                    let a = map(s[0], &mut verts, &mut vmap);
                    let b2 = map(s[1], &mut verts, &mut vmap);
                    list.push([a, b2]);
                    edge_set.insert((a.min(b2), a.max(b2)));
                }
                MeshFaces::Segments(list)
            }
        };
        if comp_faces.is_empty() {
            continue;
        }
        let v_count = verts.len() as i64;
        let e_count = edge_set.len() as i64;
        let euler = match &comp_faces {
            MeshFaces::Triangles(t) => v_count - e_count + t.len() as i64,
            MeshFaces::Segments(_) => v_count - e_count,
        };
        let clipped = verts.iter().any(|p| on_face(p));
        out.push(LevelSetComponent { vertices: verts, faces: comp_faces, euler, clipped });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sphere_eval(p: &[f64]) -> f64 {
        p.iter().map(|v| v * v).sum()
    }

    #[test]
    fn sphere_mesh_is_single_watertight_component_with_euler_two() {
        let domain = [[-2.0, 2.0]; 3];
        let comps = extract_level_set(&sphere_eval, &domain, 64, 1.0).unwrap();
        assert_eq!(comps.len(), 1);
        let c = &comps[0];
        assert!(!c.clipped);
        assert_eq!(c.euler, 2);
        assert!(c.vertices.len() > 1000);
        // vertex accuracy: linear interpolation error bound h^2/4 for f = |x|^2
        let h: f64 = 4.0 / 64.0;
        let bound = h * h / 4.0 + 1e-12;
        for v in &c.vertices {
            assert!((sphere_eval(v) - 1.0).abs() <= bound.max(1e-3));
        }
        // watertight: every edge borders exactly two triangles
        if let MeshFaces::Triangles(tris) = &c.faces {
            let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
            for t in tris {
                for (a, b) in [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])] {
                    *edge_count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
            assert!(edge_count.values().all(|&k| k == 2), "mesh not watertight");
        } else {
            panic!("expected triangles");
        }
    }

    #[test]
    fn vertex_interpolation_error_meets_grid_bound() {
        // spec-level sanity: 64^3 sphere vertices satisfy |f - 1| < 1e-3
        let domain = [[-2.0, 2.0]; 3];
        let comps = extract_level_set(&sphere_eval, &domain, 64, 1.0).unwrap();
        let worst = comps[0]
            .vertices
            .iter()
            .map(|v| (sphere_eval(v) - 1.0).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-3, "worst |f - c| = {worst}");
    }

    #[test]
    fn two_disjoint_spheres_give_two_components() {
        let eval = |p: &[f64]| {
            let d1: f64 =
                (p[0] - 1.0).powi(2) + p[1] * p[1] + p[2] * p[2];
            let d2: f64 =
                (p[0] + 1.0).powi(2) + p[1] * p[1] + p[2] * p[2];
            d1.min(d2)
        };
        let domain = [[-2.0, 2.0]; 3];
        let comps = extract_level_set(&eval, &domain, 48, 0.25).unwrap();
        assert_eq!(comps.len(), 2);
        for c in &comps {
            assert_eq!(c.euler, 2);
            assert!(!c.clipped);
        }
    }

    #[test]
    fn plane_is_clipped_and_snapping_handles_nodes_on_level() {
        // resolution 16 puts grid nodes exactly at x1 = 0
        let eval = |p: &[f64]| p[0];
        let domain = [[-2.0, 2.0]; 3];
        let comps = extract_level_set(&eval, &domain, 16, 0.0).unwrap();
        assert_eq!(comps.len(), 1);
        assert!(comps[0].clipped);
        for v in &comps[0].vertices {
            assert!(v[0].abs() < 1e-9, "plane vertex off the level: {v:?}");
            assert!(v.iter().all(|x| x.is_finite()));
        }
    }

    #[test]
    fn cylinder_level_set_is_one_clipped_tube() {
        let eval = |p: &[f64]| p[0] * p[0] + p[1] * p[1];
        let domain = [[-2.0, 2.0]; 3];
        let comps = extract_level_set(&eval, &domain, 32, 1.0).unwrap();
        assert_eq!(comps.len(), 1);
        assert!(comps[0].clipped);
        // open tube: Euler characteristic 0
        assert_eq!(comps[0].euler, 0);
    }

    #[test]
    fn out_of_range_level_is_empty_fiber() {
        let domain = [[-2.0, 2.0]; 3];
        match extract_level_set(&sphere_eval, &domain, 16, -1.0) {
            Err(Error::EmptyFiber { .. }) => {}
            other => panic!("expected EmptyFiber, got {other:?}"),
        }
    }

    #[test]
    fn planar_circle_is_closed_polyline_with_euler_zero() {
        let eval = |p: &[f64]| p[0] * p[0] + p[1] * p[1];
        let domain = [[-2.0, 2.0]; 2];
        let comps = extract_level_set(&eval, &domain, 64, 1.0).unwrap();
        assert_eq!(comps.len(), 1);
        let c = &comps[0];
        assert!(!c.clipped);
        assert_eq!(c.euler, 0);
        if let MeshFaces::Segments(segs) = &c.faces {
            // closed curve: every vertex has degree exactly 2
            let mut degree = vec![0usize; c.vertices.len()];
            for s in segs {
                degree[s[0]] += 1;
                degree[s[1]] += 1;
            }
            assert!(degree.iter().all(|&d| d == 2));
            assert_eq!(segs.len(), c.vertices.len());
        } else {
            panic!("expected segments");
        }
        for v in &c.vertices {
            assert!((eval(v) - 1.0).abs() < 2e-3);
        }
    }

    #[test]
    fn determinism_bitwise() {
        let domain = [[-2.0, 2.0]; 3];
        let a = extract_level_set(&sphere_eval, &domain, 24, 1.0).unwrap();
        let b = extract_level_set(&sphere_eval, &domain, 24, 1.0).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.vertices, y.vertices);
        }
    }
}
