//! Triangle surfaces of sampled implicit functions.
//!
//! Each grid cube is split into six tetrahedra around its main diagonal.
//! The split is the same in every cube, so neighbouring tetrahedra share
//! faces and the extracted surface is closed whenever the field is negative
//! on the grid boundary. Triangles are oriented with normals pointing
//! towards decreasing field values (outward for `g > 0` inside).

use std::collections::HashMap;

use crate::par;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<[f64; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_points(&self, t: usize) -> [[f64; 3]; 3] {
        self.triangles[t].map(|v| self.vertices[v as usize])
    }

    /// Area-weighted normal (twice the area in length).
    pub fn normal(&self, t: usize) -> [f64; 3] {
        let [a, b, c] = self.triangle_points(t);
        cross(sub(b, a), sub(c, a))
    }

    pub fn unit_normal(&self, t: usize) -> [f64; 3] {
        let n = self.normal(t);
        let len = dot(n, n).sqrt();
        if len > 0.0 {
            n.map(|x| x / len)
        } else {
            [0.0; 3]
        }
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| 0.5 * dot(self.normal(t), self.normal(t)).sqrt()).sum()
    }

    /// Signed enclosed volume; positive for an outward-oriented closed mesh.
    pub fn enclosed_volume(&self) -> f64 {
        (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangle_points(t);
                dot(a, cross(b, c)) / 6.0
            })
            .sum()
    }

    /// Every edge is used by exactly two triangles, once in each direction.
    pub fn is_watertight(&self) -> bool {
        let mut directed: HashMap<(u32, u32), u32> = HashMap::with_capacity(3 * self.triangles.len());
        for t in &self.triangles {
            if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return false;
            }
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_default() += 1;
            }
        }
        directed.iter().all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
    }
}

/// Samples on a regular point grid, `x` fastest.
#[derive(Debug, Clone)]
pub struct ScalarGrid {
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    /// Points per axis.
    pub dims: [usize; 3],
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn sample(origin: [f64; 3], spacing: [f64; 3], dims: [usize; 3], f: impl Fn([f64; 3]) -> f64 + Sync) -> Self {
        let len = dims.iter().product();
        let values = par::map_range(len, |idx| {
            let i = idx % dims[0];
            let j = (idx / dims[0]) % dims[1];
            let k = idx / (dims[0] * dims[1]);
            f([
                origin[0] + i as f64 * spacing[0],
                origin[1] + j as f64 * spacing[1],
                origin[2] + k as f64 * spacing[2],
            ])
        });
        Self { origin, spacing, dims, values }
    }

    fn index(&self, g: [usize; 3]) -> usize {
        g[0] + self.dims[0] * (g[1] + self.dims[1] * g[2])
    }

    fn point(&self, idx: usize) -> [f64; 3] {
        let i = idx % self.dims[0];
        let j = (idx / self.dims[0]) % self.dims[1];
        let k = idx / (self.dims[0] * self.dims[1]);
        [
            self.origin[0] + i as f64 * self.spacing[0],
            self.origin[1] + j as f64 * self.spacing[1],
            self.origin[2] + k as f64 * self.spacing[2],
        ]
    }
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

type EdgeKey = (usize, usize);

fn edge(a: usize, b: usize) -> EdgeKey {
    (a.min(b), a.max(b))
}

/// Surface `{g = 0}` of the sampled field with `g > 0` taken as inside.
pub fn marching_tetrahedra(grid: &ScalarGrid) -> TriangleMesh {
    let [nx, ny, nz] = grid.dims;
    if nx < 2 || ny < 2 || nz < 2 {
        return TriangleMesh::default();
    }
    let inside = |idx: usize| grid.values[idx] > 0.0;
    let midpoint = |e: EdgeKey| {
        let (a, b) = (grid.point(e.0), grid.point(e.1));
        [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1]), 0.5 * (a[2] + b[2])]
    };
    // orientation from edge midpoints: sign-equivalent to the true crossing
    // points and never degenerate
    let oriented = |tri: [EdgeKey; 3], inner: [f64; 3], outer: [f64; 3]| -> [EdgeKey; 3] {
        let [a, b, c] = tri.map(midpoint);
        let n = cross(sub(b, a), sub(c, a));
        if dot(n, sub(outer, inner)) < 0.0 {
            [tri[0], tri[2], tri[1]]
        } else {
            tri
        }
    };
    let centroid = |pts: &[usize]| {
        let mut c = [0.0; 3];
        for &p in pts {
            let q = grid.point(p);
            for a in 0..3 {
                c[a] += q[a] / pts.len() as f64;
            }
        }
        c
    };

    let slabs: Vec<Vec<[EdgeKey; 3]>> = par::map_range(nz - 1, |k| {
        let mut out = Vec::new();
        for j in 0..ny - 1 {
            for i in 0..nx - 1 {
                let corner = |d: [usize; 3]| grid.index([i + d[0], j + d[1], k + d[2]]);
                let all = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0, 0, 1], [1, 0, 1], [0, 1, 1], [1, 1, 1]].map(corner);
                let count = all.iter().filter(|&&p| inside(p)).count();
                if count == 0 || count == 8 {
                    continue;
                }
                for perm in PERMUTATIONS {
                    let mut d = [0usize; 3];
                    let mut tet = [corner(d); 4];
                    for (s, &axis) in perm.iter().enumerate() {
                        d[axis] = 1;
                        tet[s + 1] = corner(d);
                    }
                    let (ins, outs): (Vec<usize>, Vec<usize>) = tet.iter().partition(|&&p| inside(p));
                    let (ci, co) = (centroid(&ins), centroid(&outs));
                    match ins.len() {
                        1 => out.push(oriented([edge(ins[0], outs[0]), edge(ins[0], outs[1]), edge(ins[0], outs[2])], ci, co)),
                        3 => out.push(oriented([edge(outs[0], ins[0]), edge(outs[0], ins[1]), edge(outs[0], ins[2])], ci, co)),
                        2 => {
                            let quad = [edge(ins[0], outs[0]), edge(ins[0], outs[1]), edge(ins[1], outs[1]), edge(ins[1], outs[0])];
                            let first = oriented([quad[0], quad[1], quad[2]], ci, co);
                            if first[1] == quad[1] {
                                out.push([quad[0], quad[1], quad[2]]);
                                out.push([quad[0], quad[2], quad[3]]);
                            } else {
                                out.push([quad[0], quad[2], quad[1]]);
                                out.push([quad[0], quad[3], quad[2]]);
                            }
                        }
                        _ => {}
                    }
                }
            }
        }
        out
    });

    let mut mesh = TriangleMesh::default();
    let mut ids: HashMap<EdgeKey, u32> = HashMap::new();
    for tri in slabs.into_iter().flatten() {
        let t = tri.map(|e| {
            *ids.entry(e).or_insert_with(|| {
                let (ga, gb) = (grid.values[e.0], grid.values[e.1]);
                let s = (ga / (ga - gb)).clamp(0.0, 1.0);
                let (a, b) = (grid.point(e.0), grid.point(e.1));
                mesh.vertices.push([a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1]), a[2] + s * (b[2] - a[2])]);
                (mesh.vertices.len() - 1) as u32
            })
        });
        mesh.triangles.push(t);
    }
    mesh
}
