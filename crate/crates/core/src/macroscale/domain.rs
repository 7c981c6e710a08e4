//! Structured hexahedral proxy of a long-bone defect: a cylinder along `x`
//! made of a distal bone segment, the defect and a proximal bone segment,
//! with a fixator bar bolted to both segments by nails.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::hex::{HexBasis, NODE_OFFSETS};
use super::MacroError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Defect,
    Cortical,
    Marrow,
    Fixator,
    Nail,
}

impl Region {
    pub fn code(self) -> i32 {
        match self {
            Region::Defect => 1,
            Region::Cortical => 2,
            Region::Marrow => 3,
            Region::Fixator => 4,
            Region::Nail => 5,
        }
    }

    fn is_bone(self) -> bool {
        matches!(self, Region::Cortical | Region::Marrow)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixatorConfig {
    pub enabled: bool,
    /// Axial extent of the bar.
    pub bar_x: [f64; 2],
    /// Lateral (`y`) extent of the bar.
    pub bar_y: [f64; 2],
    pub bar_half_width: f64,
    /// Axial nail positions.
    pub nails: Vec<f64>,
    pub nail_half_width: f64,
}

impl Default for FixatorConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            bar_x: [1.0, 12.0],
            bar_y: [1.65, 2.4],
            bar_half_width: 0.4,
            nails: vec![1.5, 3.0, 10.0, 11.5],
            nail_half_width: 0.25,
        }
    }
}

/// Dimensions in mm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DomainConfig {
    pub defect_length: f64,
    pub bone_length: f64,
    pub radius: f64,
    pub marrow_radius: f64,
    pub defect_elements: usize,
    pub bone_elements: usize,
    pub y_range: [f64; 2],
    pub z_range: [f64; 2],
    pub cross_elements: [usize; 2],
    /// Progenitor source on the lateral surface of the defect.
    pub periosteum: bool,
    pub fixator: FixatorConfig,
}

impl Default for DomainConfig {
    fn default() -> Self {
        Self {
            defect_length: 5.0,
            bone_length: 4.0,
            radius: 1.0,
            marrow_radius: 0.55,
            defect_elements: 24,
            bone_elements: 18,
            y_range: [-1.2, 2.4],
            z_range: [-1.2, 1.2],
            cross_elements: [24, 24],
            periosteum: true,
            fixator: FixatorConfig::default(),
        }
    }
}

impl DomainConfig {
    pub fn validate(&self) -> Result<(), MacroError> {
        let bad = |what: &str| Err(MacroError::InvalidDomain(what.to_string()));
        if !(self.defect_length > 0.0 && self.bone_length > 0.0) {
            return bad("segment lengths must be positive");
        }
        if !(self.radius > 0.0 && self.marrow_radius > 0.0 && self.marrow_radius < self.radius) {
            return bad("require 0 < marrow_radius < radius");
        }
        if self.defect_elements == 0 || self.bone_elements == 0 || self.cross_elements.contains(&0) {
            return bad("element counts must be positive");
        }
        if !(self.y_range[0] < self.y_range[1] && self.z_range[0] < self.z_range[1]) {
            return bad("empty cross-section range");
        }
        Ok(())
    }

    pub fn total_length(&self) -> f64 {
        2.0 * self.bone_length + self.defect_length
    }
}

#[derive(Debug, Clone)]
pub struct Element {
    pub cell: [usize; 3],
    pub region: Region,
    /// Active node indices in [`NODE_OFFSETS`] order.
    pub nodes: [usize; 8],
    pub basis: usize,
}

/// Quadrilateral face on the loaded boundary.
#[derive(Debug, Clone)]
pub struct LoadedFace {
    pub nodes: [usize; 4],
    pub area: f64,
}

/// Cell-transport mesh restricted to defect elements.
#[derive(Debug, Clone)]
pub struct DefectMesh {
    /// Indices into [`MacroDomain::elements`].
    pub elements: Vec<usize>,
    /// Active node index of each defect node.
    pub nodes: Vec<usize>,
    /// Defect-local node indices of each defect element.
    pub connectivity: Vec<[usize; 8]>,
    /// Number of defect elements sharing each node.
    pub valence: Vec<usize>,
    /// Lumped (row-sum) mass.
    pub mass: Vec<f64>,
    /// Nodes held at the progenitor source value.
    pub progenitor_source: Vec<bool>,
    /// Nodes held at full osteoblast occupation.
    pub osteoblast_source: Vec<bool>,
}

impl DefectMesh {
    pub fn volume(&self) -> f64 {
        self.mass.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct MacroDomain {
    /// Grid-line coordinates along each axis.
    pub lines: [Vec<f64>; 3],
    pub elements: Vec<Element>,
    pub bases: Vec<HexBasis>,
    pub node_coords: Vec<[f64; 3]>,
    /// Grid indices `(i, j, k)` of each active node.
    pub node_grid: Vec<[usize; 3]>,
    /// Nodes with all displacement components fixed.
    pub clamped: Vec<usize>,
    pub loaded: Vec<LoadedFace>,
    pub defect: DefectMesh,
}

fn uniform_lines(start: f64, stop: f64, count: usize) -> Vec<f64> {
    (0..=count).map(|i| start + (stop - start) * i as f64 / count as f64).collect()
}

impl MacroDomain {
    /// Bone-defect-bone cylinder with the fixator proxy.
    pub fn cylinder(config: &DomainConfig) -> Result<Self, MacroError> {
        config.validate()?;
        let b = config.bone_length;
        let d = config.defect_length;
        let mut xs = uniform_lines(0.0, b, config.bone_elements);
        xs.extend(uniform_lines(b, b + d, config.defect_elements).into_iter().skip(1));
        xs.extend(uniform_lines(b + d, 2.0 * b + d, config.bone_elements).into_iter().skip(1));
        let ys = uniform_lines(config.y_range[0], config.y_range[1], config.cross_elements[0]);
        let zs = uniform_lines(config.z_range[0], config.z_range[1], config.cross_elements[1]);
        let fix = &config.fixator;
        let eps = 1e-9;
        let label = |c: [f64; 3], span_x: [f64; 2]| -> Option<Region> {
            let [x, y, z] = c;
            let r = y.hypot(z);
            let in_bone_segment = x < b || x > b + d;
            if fix.enabled {
                let nail_x = fix.nails.iter().any(|&p| {
                    (x - p).abs() <= fix.nail_half_width + eps || (span_x[0] <= p && p < span_x[1])
                });
                if in_bone_segment && nail_x && z.abs() <= fix.nail_half_width + eps && y >= -eps && y < fix.bar_y[0] {
                    return Some(Region::Nail);
                }
                if x >= fix.bar_x[0] - eps
                    && x <= fix.bar_x[1] + eps
                    && y >= fix.bar_y[0] - eps
                    && y <= fix.bar_y[1] + eps
                    && z.abs() <= fix.bar_half_width + eps
                {
                    return Some(Region::Fixator);
                }
            }
            if r > config.radius {
                None
            } else if !in_bone_segment {
                Some(Region::Defect)
            } else if r <= config.marrow_radius {
                Some(Region::Marrow)
            } else {
                Some(Region::Cortical)
            }
        };
        let dims = [xs.len() - 1, ys.len() - 1, zs.len() - 1];
        let mut labels = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let c = [0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]), 0.5 * (zs[k] + zs[k + 1])];
                    labels.push(label(c, [xs[i], xs[i + 1]]));
                }
            }
        }
        Self::from_labels([xs, ys, zs], labels, config.periosteum)
    }

    /// Builds a domain from grid lines and per-cell labels (`None` = not
    /// meshed), cells ordered with `z` fastest.
    pub fn from_labels(lines: [Vec<f64>; 3], labels: Vec<Option<Region>>, periosteum: bool) -> Result<Self, MacroError> {
        let dims = [lines[0].len() - 1, lines[1].len() - 1, lines[2].len() - 1];
        if labels.len() != dims[0] * dims[1] * dims[2] {
            return Err(MacroError::InvalidDomain("label count does not match the grid".into()));
        }
        for axis in &lines {
            if axis.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(MacroError::InvalidDomain("grid lines must increase".into()));
            }
        }
        let cell_index = |i: usize, j: usize, k: usize| (i * dims[1] + j) * dims[2] + k;
        let node_index = |i: usize, j: usize, k: usize| (i * (dims[1] + 1) + j) * (dims[2] + 1) + k;
        let label_at = |i: isize, j: isize, k: isize| -> Option<Region> {
            if i < 0 || j < 0 || k < 0 || i >= dims[0] as isize || j >= dims[1] as isize || k >= dims[2] as isize {
                None
            } else {
                labels[cell_index(i as usize, j as usize, k as usize)]
            }
        };

        let mut compact: HashMap<usize, usize> = HashMap::new();
        let mut node_coords = Vec::new();
        let mut node_grid = Vec::new();
        let mut basis_keys: HashMap<[u64; 3], usize> = HashMap::new();
        let mut bases = Vec::new();
        let mut elements = Vec::new();
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    let Some(region) = labels[cell_index(i, j, k)] else { continue };
                    let size = [lines[0][i + 1] - lines[0][i], lines[1][j + 1] - lines[1][j], lines[2][k + 1] - lines[2][k]];
                    let basis = *basis_keys.entry(size.map(f64::to_bits)).or_insert_with(|| {
                        bases.push(HexBasis::new(size));
                        bases.len() - 1
                    });
                    let nodes = NODE_OFFSETS.map(|o| {
                        let (a, b, c) = (i + o[0], j + o[1], k + o[2]);
                        *compact.entry(node_index(a, b, c)).or_insert_with(|| {
                            node_coords.push([lines[0][a], lines[1][b], lines[2][c]]);
                            node_grid.push([a, b, c]);
                            node_coords.len() - 1
                        })
                    });
                    elements.push(Element { cell: [i, j, k], region, nodes, basis });
                }
            }
        }
        if elements.is_empty() {
            return Err(MacroError::InvalidDomain("no elements".into()));
        }

        // Regions of the (up to) eight cells around a node.
        let around = |[a, b, c]: [usize; 3]| {
            let mut out = [None; 8];
            for (slot, o) in NODE_OFFSETS.iter().enumerate() {
                out[slot] = label_at(a as isize - o[0] as isize, b as isize - o[1] as isize, c as isize - o[2] as isize);
            }
            out
        };

        let clamped: Vec<usize> = (0..node_coords.len())
            .filter(|&v| node_grid[v][0] == 0 && around(node_grid[v]).iter().flatten().any(|r| r.is_bone()))
            .collect();
        if clamped.is_empty() {
            return Err(MacroError::InvalidDomain("no bone on the distal face".into()));
        }

        let mut loaded = Vec::new();
        for e in &elements {
            if e.region == Region::Cortical && e.cell[0] == dims[0] - 1 {
                let area = (lines[1][e.cell[1] + 1] - lines[1][e.cell[1]]) * (lines[2][e.cell[2] + 1] - lines[2][e.cell[2]]);
                // local nodes with di = 1
                loaded.push(LoadedFace { nodes: [e.nodes[1], e.nodes[2], e.nodes[5], e.nodes[6]], area });
            }
        }

        let defect_elements: Vec<usize> =
            elements.iter().enumerate().filter(|(_, e)| e.region == Region::Defect).map(|(i, _)| i).collect();
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut defect_nodes = Vec::new();
        let connectivity: Vec<[usize; 8]> = defect_elements
            .iter()
            .map(|&e| {
                elements[e].nodes.map(|v| {
                    *local.entry(v).or_insert_with(|| {
                        defect_nodes.push(v);
                        defect_nodes.len() - 1
                    })
                })
            })
            .collect();
        let mut valence = vec![0; defect_nodes.len()];
        let mut mass = vec![0.0; defect_nodes.len()];
        for (conn, &e) in connectivity.iter().zip(&defect_elements) {
            let vol = bases[elements[e].basis].volume;
            for &v in conn {
                valence[v] += 1;
                mass[v] += vol / 8.0;
            }
        }
        let mut progenitor_source = vec![false; defect_nodes.len()];
        let mut osteoblast_source = vec![false; defect_nodes.len()];
        for (l, &v) in defect_nodes.iter().enumerate() {
            let regions = around(node_grid[v]);
            // the cortical rim takes precedence where both sources meet
            if regions.iter().flatten().any(|r| *r == Region::Cortical) {
                osteoblast_source[l] = true;
                continue;
            }
            let marrow = regions.iter().flatten().any(|r| *r == Region::Marrow);
            let outside = regions.iter().any(|r| !matches!(r, Some(Region::Defect | Region::Cortical | Region::Marrow)));
            if marrow || (periosteum && outside) {
                progenitor_source[l] = true;
            }
        }

        Ok(Self {
            lines,
            elements,
            bases,
            node_coords,
            node_grid,
            clamped,
            loaded,
            defect: DefectMesh {
                elements: defect_elements,
                nodes: defect_nodes,
                connectivity,
                valence,
                mass,
                progenitor_source,
                osteoblast_source,
            },
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_coords.len()
    }

    pub fn dims(&self) -> [usize; 3] {
        self.lines.each_ref().map(|l| l.len() - 1)
    }

    pub fn loaded_area(&self) -> f64 {
        self.loaded.iter().map(|f| f.area).sum()
    }

    pub fn element_volume(&self, e: usize) -> f64 {
        self.bases[self.elements[e].basis].volume
    }

    pub fn element_center(&self, e: usize) -> [f64; 3] {
        let c = self.elements[e].cell;
        [0, 1, 2].map(|a| 0.5 * (self.lines[a][c[a]] + self.lines[a][c[a] + 1]))
    }

    pub fn region_count(&self, region: Region) -> usize {
        self.elements.iter().filter(|e| e.region == region).count()
    }
}
