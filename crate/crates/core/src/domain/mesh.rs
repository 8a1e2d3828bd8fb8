//! Heart + torso strip, periodic in the transverse direction.
//!
//! The heart occupies `x ∈ [x0, x0 + heart_length]`, the torso the adjacent
//! slab `[x0 + heart_length, x0 + heart_length + torso_length]`, and both are
//! periodic in `y` with period `y_period`. The left heart face is the
//! endocardium, the heart/torso interface the epicardium and the right torso
//! face the outer torso boundary. With `torso_length = 0` the epicardium and
//! the outer boundary coincide and no torso elements exist.
//!
//! Nodes are numbered column by column, `node(i, j) = i * ny + j`, so the
//! heart nodes are exactly the first `(nx_heart + 1) * ny` nodes.

use std::collections::HashMap;

use crate::error::{Error, Result};

const GAUSS_2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StripGeometry {
    pub x0: f64,
    pub heart_length: f64,
    pub torso_length: f64,
    pub y_period: f64,
    pub nx_heart: usize,
    pub nx_torso: usize,
    pub ny: usize,
}

impl Default for StripGeometry {
    fn default() -> Self {
        StripGeometry {
            x0: 0.0,
            heart_length: 1.0,
            torso_length: 1.0,
            y_period: 1.0,
            nx_heart: 16,
            nx_torso: 16,
            ny: 16,
        }
    }
}

impl StripGeometry {
    /// Heart-only strip (`torso_length = 0`) with `n x n` heart elements on the
    /// unit square.
    pub fn heart_only(n: usize) -> Self {
        StripGeometry {
            torso_length: 0.0,
            nx_heart: n,
            nx_torso: 0,
            ny: n,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.heart_length) {
            return Err(Error::Config(format!(
                "heart_length must be positive, got {}",
                self.heart_length
            )));
        }
        if !positive(self.y_period) {
            return Err(Error::Config(format!(
                "y_period must be positive, got {}",
                self.y_period
            )));
        }
        if !self.x0.is_finite() {
            return Err(Error::Config("x0 must be finite".into()));
        }
        if !(self.torso_length.is_finite() && self.torso_length >= 0.0) {
            return Err(Error::Config(format!(
                "torso_length must be non-negative, got {}",
                self.torso_length
            )));
        }
        if self.nx_heart == 0 {
            return Err(Error::Config("nx_heart must be at least 1".into()));
        }
        if self.ny == 0 {
            return Err(Error::Config("ny must be at least 1".into()));
        }
        match (self.torso_length > 0.0, self.nx_torso > 0) {
            (true, false) => Err(Error::Config(
                "a torso of positive width needs nx_torso >= 1".into(),
            )),
            (false, true) => Err(Error::Config(
                "nx_torso must be 0 when torso_length is 0".into(),
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Region {
    Heart,
    Torso,
}

/// Axis-aligned bilinear quadrilateral. Nodes run counter-clockwise from the
/// lower-left corner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Quad {
    pub nodes: [usize; 4],
    pub region: Region,
    pub origin: [f64; 2],
    pub hx: f64,
    pub hy: f64,
    /// Column index of the element (`0..nx_heart + nx_torso`).
    pub column: usize,
}

impl Quad {
    pub fn area(&self) -> f64 {
        self.hx * self.hy
    }
}

/// Edge of the endocardial face, between `nodes[0]` (lower) and `nodes[1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub y0: f64,
    pub length: f64,
}

/// Identification of the virtual node `(column, y_period)` with the node at
/// `(column, 0)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PeriodicPair {
    pub column: usize,
    pub image: usize,
}

/// Quadrature point on the endocardium.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EndoPoint {
    pub y: f64,
    pub weight: f64,
    pub edge: usize,
    /// Values of the two edge shape functions at this point.
    pub shape: [f64; 2],
}

#[derive(Clone, Debug)]
pub struct CoupledMesh {
    pub geometry: StripGeometry,
    pub nodes: Vec<[f64; 2]>,
    pub elements: Vec<Quad>,
    pub endo_nodes: Vec<usize>,
    pub epi_nodes: Vec<usize>,
    pub outer_nodes: Vec<usize>,
    pub endo_edges: Vec<BoundaryEdge>,
    pub periodic_map: Vec<PeriodicPair>,
}

/// Build the strip mesh described by `geometry`.
pub fn build_strip_mesh(geometry: &StripGeometry) -> Result<CoupledMesh> {
    geometry.validate()?;
    let g = *geometry;
    let ny = g.ny;
    let nx = g.nx_heart + g.nx_torso;
    let hx_heart = g.heart_length / g.nx_heart as f64;
    let hx_torso = if g.nx_torso > 0 {
        g.torso_length / g.nx_torso as f64
    } else {
        0.0
    };
    let hy = g.y_period / ny as f64;
    let heart_end = g.x0 + g.heart_length;
    let column_x = |i: usize| {
        if i <= g.nx_heart {
            g.x0 + i as f64 * hx_heart
        } else {
            heart_end + (i - g.nx_heart) as f64 * hx_torso
        }
    };
    let node = |i: usize, j: usize| i * ny + (j % ny);

    let mut nodes = Vec::with_capacity((nx + 1) * ny);
    for i in 0..=nx {
        for j in 0..ny {
            nodes.push([column_x(i), j as f64 * hy]);
        }
    }

    let mut elements = Vec::with_capacity(nx * ny);
    for i in 0..nx {
        let (region, hx) = if i < g.nx_heart {
            (Region::Heart, hx_heart)
        } else {
            (Region::Torso, hx_torso)
        };
        for j in 0..ny {
            elements.push(Quad {
                nodes: [node(i, j), node(i + 1, j), node(i + 1, j + 1), node(i, j + 1)],
                region,
                origin: [column_x(i), j as f64 * hy],
                hx,
                hy,
                column: i,
            });
        }
    }

    let column_nodes = |i: usize| (0..ny).map(|j| node(i, j)).collect::<Vec<_>>();
    let endo_edges = (0..ny)
        .map(|j| BoundaryEdge {
            nodes: [node(0, j), node(0, j + 1)],
            y0: j as f64 * hy,
            length: hy,
        })
        .collect();
    let periodic_map = (0..=nx)
        .map(|i| PeriodicPair {
            column: i,
            image: node(i, 0),
        })
        .collect();

    let mesh = CoupledMesh {
        geometry: g,
        nodes,
        elements,
        endo_nodes: column_nodes(0),
        epi_nodes: column_nodes(g.nx_heart),
        outer_nodes: column_nodes(nx),
        endo_edges,
        periodic_map,
    };
    mesh.check_invariants()?;
    Ok(mesh)
}

impl CoupledMesh {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of heart degrees of freedom; heart nodes are `0..n_heart_nodes()`.
    pub fn n_heart_nodes(&self) -> usize {
        (self.geometry.nx_heart + 1) * self.geometry.ny
    }

    pub fn has_torso(&self) -> bool {
        self.geometry.nx_torso > 0
    }

    pub fn heart_elements(&self) -> impl Iterator<Item = (usize, &Quad)> {
        self.elements
            .iter()
            .enumerate()
            .filter(|(_, q)| q.region == Region::Heart)
    }

    pub fn heart_volume(&self) -> f64 {
        self.geometry.heart_length * self.geometry.y_period
    }

    pub fn endo_measure(&self) -> f64 {
        self.geometry.y_period
    }

    /// Two-point Gauss rule on every endocardial edge, in edge order.
    pub fn endo_quadrature(&self) -> Vec<EndoPoint> {
        let mut points = Vec::with_capacity(2 * self.endo_edges.len());
        for (e, edge) in self.endo_edges.iter().enumerate() {
            for xi in GAUSS_2 {
                points.push(EndoPoint {
                    y: edge.y0 + xi * edge.length,
                    weight: 0.5 * edge.length,
                    edge: e,
                    shape: [1.0 - xi, xi],
                });
            }
        }
        points
    }

    /// Sample `s(y)` at the endocardial quadrature points.
    pub fn sample_endo<F: Fn(f64) -> f64>(&self, s: F) -> Vec<f64> {
        self.endo_quadrature().iter().map(|p| s(p.y)).collect()
    }

    /// Edges (as node pairs) lying on the boundary of the heart region after
    /// periodic identification.
    pub fn heart_boundary_edges(&self) -> Vec<[usize; 2]> {
        // Edges are keyed by their logical position (orientation, column, row)
        // because with few rows two distinct periodic edges can share a node
        // pair.
        let ny = self.geometry.ny;
        let mut count: HashMap<(bool, usize, usize), ([usize; 2], usize)> = HashMap::new();
        for (e, q) in self.heart_elements() {
            let (i, j) = (q.column, e % ny);
            let sides = [
                ((false, i, j), [q.nodes[0], q.nodes[1]]),
                ((true, i + 1, j), [q.nodes[1], q.nodes[2]]),
                ((false, i, (j + 1) % ny), [q.nodes[3], q.nodes[2]]),
                ((true, i, j), [q.nodes[0], q.nodes[3]]),
            ];
            for (key, nodes) in sides {
                count.entry(key).or_insert((nodes, 0)).1 += 1;
            }
        }
        let mut edges: Vec<_> = count
            .into_values()
            .filter(|&(_, c)| c == 1)
            .map(|(e, _)| e)
            .collect();
        edges.sort_unstable();
        edges
    }

    pub fn check_invariants(&self) -> Result<()> {
        let g = &self.geometry;
        let ny = g.ny;
        let nx = g.nx_heart + g.nx_torso;
        if self.nodes.len() != (nx + 1) * ny {
            return Err(Error::Numerical(format!(
                "node count {} != {}",
                self.nodes.len(),
                (nx + 1) * ny
            )));
        }
        let heart = self.heart_elements().count();
        let torso = self
            .elements
            .iter()
            .filter(|q| q.region == Region::Torso)
            .count();
        if heart != g.nx_heart * ny || torso != g.nx_torso * ny || heart + torso != self.elements.len()
        {
            return Err(Error::Numerical("region tags do not partition the mesh".into()));
        }
        // Conforming interface: every epicardial node belongs to a heart element
        // and, when a torso exists, to a torso element as well.
        let mut in_heart = vec![false; self.nodes.len()];
        let mut in_torso = vec![false; self.nodes.len()];
        for q in &self.elements {
            let flags = match q.region {
                Region::Heart => &mut in_heart,
                Region::Torso => &mut in_torso,
            };
            for &n in &q.nodes {
                flags[n] = true;
            }
        }
        for &n in &self.epi_nodes {
            if !in_heart[n] || (self.has_torso() && !in_torso[n]) {
                return Err(Error::Numerical(format!(
                    "epicardial node {n} is not shared by heart and torso"
                )));
            }
        }
        let mut images: Vec<usize> = self.periodic_map.iter().map(|p| p.image).collect();
        images.sort_unstable();
        images.dedup();
        if images.len() != nx + 1 {
            return Err(Error::Numerical("periodic map is not a bijection".into()));
        }
        for p in &self.periodic_map {
            if p.image != p.column * ny || self.nodes[p.image][1] != 0.0 {
                return Err(Error::Numerical(format!(
                    "periodic image of column {} is misplaced",
                    p.column
                )));
            }
        }
        let endo: Vec<usize> = self.endo_nodes.clone();
        let epi: Vec<usize> = self.epi_nodes.clone();
        for e in self.heart_boundary_edges() {
            let on = |set: &[usize]| set.contains(&e[0]) && set.contains(&e[1]);
            if !(on(&endo) || on(&epi)) {
                return Err(Error::Numerical(format!(
                    "heart boundary edge {e:?} is neither endocardial nor epicardial"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip(nx_heart: usize, nx_torso: usize, ny: usize) -> StripGeometry {
        StripGeometry {
            nx_heart,
            nx_torso,
            ny,
            ..Default::default()
        }
    }

    #[test]
    fn node_count_after_identification() {
        let mesh = build_strip_mesh(&strip(8, 8, 8)).unwrap();
        assert_eq!(mesh.n_nodes(), 136);
        assert_eq!(mesh.elements.len(), 16 * 8);
        assert_eq!(mesh.n_heart_nodes(), 72);
    }

    #[test]
    fn heart_only_mode_has_no_torso() {
        let mesh = build_strip_mesh(&StripGeometry::heart_only(4)).unwrap();
        assert!(!mesh.has_torso());
        assert_eq!(mesh.epi_nodes, mesh.outer_nodes);
        assert!(mesh.elements.iter().all(|q| q.region == Region::Heart));
        assert_eq!(mesh.n_nodes(), mesh.n_heart_nodes());
    }

    #[test]
    fn rejects_bad_configuration() {
        assert!(matches!(
            build_strip_mesh(&strip(0, 8, 8)),
            Err(Error::Config(_))
        ));
        assert!(build_strip_mesh(&strip(8, 8, 0)).is_err());
        let mut g = strip(8, 0, 8);
        assert!(build_strip_mesh(&g).is_err());
        g.torso_length = 0.0;
        assert!(build_strip_mesh(&g).is_ok());
        g.heart_length = -1.0;
        assert!(build_strip_mesh(&g).is_err());
    }

    #[test]
    fn heart_boundary_is_endo_and_epi() {
        for ny in [1, 2, 5] {
            let mesh = build_strip_mesh(&strip(3, 2, ny)).unwrap();
            let edges = mesh.heart_boundary_edges();
            // one vertical edge per row on each face
            assert_eq!(edges.len(), 2 * ny);
        }
    }

    #[test]
    fn endo_quadrature_measures_the_face() {
        let mesh = build_strip_mesh(&strip(4, 4, 6)).unwrap();
        let q = mesh.endo_quadrature();
        assert_eq!(q.len(), 12);
        let total: f64 = q.iter().map(|p| p.weight).sum();
        assert!((total - mesh.endo_measure()).abs() < 1e-14);
    }

    #[test]
    fn elements_wrap_periodically() {
        let mesh = build_strip_mesh(&strip(2, 1, 4)).unwrap();
        let top = &mesh.elements[3];
        assert_eq!(top.nodes[3], 0);
        assert_eq!(top.nodes[2], 4);
    }
}
