//! Masked rectangular grids over planar regions.
//!
//! A grid is a uniform lattice covering the bounding box of a disk, annulus
//! or square region. Nodes inside the region are masked in and split into
//! interior nodes (all four stencil neighbours masked in) and boundary nodes
//! (at least one stencil neighbour masked out). Field data is stored
//! compactly, one value per masked-in node.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Planar region kinds. Disks and annuli may be centered away from the
/// origin; squares are always centered at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Region {
    /// Open disk |z - center| < radius.
    Disk { radius: f64, center: (f64, f64) },
    /// Open annulus inner < |z - center| < outer.
    Annulus {
        inner: f64,
        outer: f64,
        center: (f64, f64),
    },
    /// Square [-half, half]^2.
    Square { half: f64 },
}

impl Region {
    pub fn disk(radius: f64) -> Self {
        Region::Disk {
            radius,
            center: (0.0, 0.0),
        }
    }

    pub fn disk_at(radius: f64, center: Complex64) -> Self {
        Region::Disk {
            radius,
            center: (center.re, center.im),
        }
    }

    pub fn annulus(inner: f64, outer: f64) -> Self {
        Region::Annulus {
            inner,
            outer,
            center: (0.0, 0.0),
        }
    }

    pub fn annulus_at(inner: f64, outer: f64, center: Complex64) -> Self {
        Region::Annulus {
            inner,
            outer,
            center: (center.re, center.im),
        }
    }

    pub fn square(half: f64) -> Self {
        Region::Square { half }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Region::Disk { radius, .. } => radius > 0.0,
            Region::Annulus { inner, outer, .. } => inner >= 0.0 && outer > inner,
            Region::Square { half } => half > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("degenerate region {self:?}")))
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Region::Disk { .. } => "disk",
            Region::Annulus { .. } => "annulus",
            Region::Square { .. } => "square",
        }
    }
}

/// Node classification on the lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Out,
    Interior,
    Boundary,
}

/// A masked uniform grid. Construct with [`DomainGrid::new`].
#[derive(Debug)]
pub struct DomainGrid {
    pub region: Region,
    pub spacing: f64,
    /// Lattice extents.
    pub nx: usize,
    pub ny: usize,
    /// Coordinates of lattice node (0, 0).
    pub x0: f64,
    pub y0: f64,
    kinds: Vec<NodeKind>,
    /// Lattice index -> compact index over masked-in nodes.
    compact: Vec<u32>,
    /// Compact index -> lattice (i, j).
    nodes: Vec<(u32, u32)>,
    interior: Vec<u32>,
    boundary: Vec<u32>,
    /// Compact neighbour indices (+x, -x, +y, -y) for every interior node,
    /// aligned with `interior`.
    stencil: Vec<[u32; 4]>,
}

const NO_NODE: u32 = u32::MAX;

impl DomainGrid {
    /// Build a grid for `region` with (approximately) the requested spacing.
    ///
    /// The lattice is symmetric about the region center so that the center
    /// is always a node. Disk and annulus masks follow the half-spacing
    /// rule: a node is in-domain iff it is at least spacing/2 inside the
    /// circle(s), which keeps stencils off the curved rim.
    pub fn new(region: Region, spacing: f64) -> Result<DomainGrid> {
        region.validate()?;
        if !(spacing > 0.0) || !spacing.is_finite() {
            return Err(Error::Config(format!("spacing must be positive, got {spacing}")));
        }
        let (cx, cy, rx, ry) = match region {
            Region::Disk { radius, center } => (center.0, center.1, radius, radius),
            Region::Annulus { outer, center, .. } => (center.0, center.1, outer, outer),
            Region::Square { half } => (0.0, 0.0, half, half),
        };
        // Number of steps from the center to the bounding edge.
        let mx = (rx / spacing + 0.5).floor() as usize;
        let my = (ry / spacing + 0.5).floor() as usize;
        let nx = 2 * mx + 1;
        let ny = 2 * my + 1;
        if nx < 3 || ny < 3 {
            return Err(Error::EmptyDomain);
        }
        let x0 = cx - (mx as f64) * spacing;
        let y0 = cy - (my as f64) * spacing;

        let inside = |i: usize, j: usize| -> bool {
            let x = x0 + i as f64 * spacing;
            let y = y0 + j as f64 * spacing;
            match region {
                Region::Disk { radius, center } => {
                    let d = ((x - center.0).powi(2) + (y - center.1).powi(2)).sqrt();
                    d < radius - spacing / 2.0
                }
                Region::Annulus {
                    inner,
                    outer,
                    center,
                } => {
                    let d = ((x - center.0).powi(2) + (y - center.1).powi(2)).sqrt();
                    d > inner + spacing / 2.0 && d < outer - spacing / 2.0
                }
                Region::Square { .. } => true,
            }
        };

        let idx = |i: usize, j: usize| j * nx + i;
        let mut kinds = vec![NodeKind::Out; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                if inside(i, j) {
                    kinds[idx(i, j)] = NodeKind::Interior; // provisional
                }
            }
        }
        // A masked-in node with any masked-out stencil neighbour is boundary.
        for j in 0..ny {
            for i in 0..nx {
                if kinds[idx(i, j)] == NodeKind::Out {
                    continue;
                }
                let mut edge = false;
                if i == 0 || kinds[idx(i - 1, j)] == NodeKind::Out {
                    edge = true;
                }
                if i + 1 == nx || kinds[idx(i + 1, j)] == NodeKind::Out {
                    edge = true;
                }
                if j == 0 || kinds[idx(i, j - 1)] == NodeKind::Out {
                    edge = true;
                }
                if j + 1 == ny || kinds[idx(i, j + 1)] == NodeKind::Out {
                    edge = true;
                }
                if edge {
                    kinds[idx(i, j)] = NodeKind::Boundary;
                }
            }
        }

        let mut compact = vec![NO_NODE; nx * ny];
        let mut nodes = Vec::new();
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for j in 0..ny {
            for i in 0..nx {
                match kinds[idx(i, j)] {
                    NodeKind::Out => {}
                    k => {
                        let c = nodes.len() as u32;
                        compact[idx(i, j)] = c;
                        nodes.push((i as u32, j as u32));
                        match k {
                            NodeKind::Interior => interior.push(c),
                            NodeKind::Boundary => boundary.push(c),
                            NodeKind::Out => unreachable!(),
                        }
                    }
                }
            }
        }
        if interior.is_empty() {
            return Err(Error::EmptyDomain);
        }
        let mut stencil = Vec::with_capacity(interior.len());
        for &c in &interior {
            let (i, j) = nodes[c as usize];
            let (i, j) = (i as usize, j as usize);
            stencil.push([
                compact[idx(i + 1, j)],
                compact[idx(i - 1, j)],
                compact[idx(i, j + 1)],
                compact[idx(i, j - 1)],
            ]);
        }
        Ok(DomainGrid {
            region,
            spacing,
            nx,
            ny,
            x0,
            y0,
            kinds,
            compact,
            nodes,
            interior,
            boundary,
            stencil,
        })
    }

    #[inline]
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    #[inline]
    pub fn interior_count(&self) -> usize {
        self.interior.len()
    }

    #[inline]
    pub fn boundary_count(&self) -> usize {
        self.boundary.len()
    }

    /// Lattice coordinates of a compact node index.
    #[inline]
    pub fn lattice_of(&self, c: usize) -> (usize, usize) {
        let (i, j) = self.nodes[c];
        (i as usize, j as usize)
    }

    /// Complex coordinate of a compact node index.
    #[inline]
    pub fn z_of(&self, c: usize) -> Complex64 {
        let (i, j) = self.nodes[c];
        Complex64::new(
            self.x0 + i as f64 * self.spacing,
            self.y0 + j as f64 * self.spacing,
        )
    }

    #[inline]
    pub fn kind_of(&self, c: usize) -> NodeKind {
        let (i, j) = self.lattice_of(c);
        self.kinds[j * self.nx + i]
    }

    /// Compact index of lattice node (i, j), if masked in.
    #[inline]
    pub fn compact_at(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.nx || j >= self.ny {
            return None;
        }
        let c = self.compact[j * self.nx + i];
        (c != NO_NODE).then_some(c as usize)
    }

    /// Compact interior node indices.
    #[inline]
    pub fn interior_nodes(&self) -> &[u32] {
        &self.interior
    }

    /// Compact boundary node indices.
    #[inline]
    pub fn boundary_nodes(&self) -> &[u32] {
        &self.boundary
    }

    /// Stencil neighbours (+x, -x, +y, -y) of interior node `interior[k]`.
    #[inline]
    pub fn stencil(&self, k: usize) -> [u32; 4] {
        self.stencil[k]
    }

    /// All masked-in nodes as compact indices.
    pub fn all_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        0..self.node_count()
    }

    /// Bilinear interpolation weights for an arbitrary point, if the four
    /// surrounding lattice nodes are all masked in. Returns compact indices
    /// and weights.
    pub fn bilinear(&self, z: Complex64) -> Option<([usize; 4], [f64; 4])> {
        let fx = (z.re - self.x0) / self.spacing;
        let fy = (z.im - self.y0) / self.spacing;
        if fx < 0.0 || fy < 0.0 {
            return None;
        }
        let i = fx.floor() as usize;
        let j = fy.floor() as usize;
        if i + 1 >= self.nx || j + 1 >= self.ny {
            return None;
        }
        let tx = fx - i as f64;
        let ty = fy - j as f64;
        let c00 = self.compact_at(i, j)?;
        let c10 = self.compact_at(i + 1, j)?;
        let c01 = self.compact_at(i, j + 1)?;
        let c11 = self.compact_at(i + 1, j + 1)?;
        Some((
            [c00, c10, c01, c11],
            [
                (1.0 - tx) * (1.0 - ty),
                tx * (1.0 - ty),
                (1.0 - tx) * ty,
                tx * ty,
            ],
        ))
    }
}
