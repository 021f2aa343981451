//! Structured P1 meshes of an interval and a rectangle.
//!
//! Degrees of freedom are the mesh nodes. The boundary node list is sorted by
//! global index so that every boundary-space matrix has a fixed ordering.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

/// A mesh cell, given by its node indices.
///
/// Triangles are stored counter-clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Element {
    Segment([usize; 2]),
    Triangle([usize; 3]),
}

impl Element {
    pub fn nodes(&self) -> &[usize] {
        match self {
            Element::Segment(n) => n,
            Element::Triangle(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDomain {
    dimension: usize,
    nodes: Vec<[f64; 2]>,
    elements: Vec<Element>,
    boundary_edges: Vec<[usize; 2]>,
    boundary_nodes: Vec<usize>,
    interior_nodes: Vec<usize>,
    h_max: f64,
}

impl DiscreteDomain {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Node coordinates; the second coordinate is zero in 1D.
    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    /// Boundary edges of a 2D mesh (empty in 1D, where the boundary consists
    /// of the two end points).
    pub fn boundary_edges(&self) -> &[[usize; 2]] {
        &self.boundary_edges
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    /// Largest element diameter.
    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    /// Length (1D) or area (2D) of element `e`.
    pub fn element_measure(&self, e: usize) -> f64 {
        match self.elements[e] {
            Element::Segment([a, b]) => (self.nodes[b][0] - self.nodes[a][0]).abs(),
            Element::Triangle(t) => signed_area(&self.nodes, t).abs(),
        }
    }

    pub fn measure(&self) -> f64 {
        (0..self.elements.len())
            .map(|e| self.element_measure(e))
            .sum()
    }

    /// Position of a global node in the boundary ordering.
    pub fn boundary_position(&self, node: usize) -> Option<usize> {
        self.boundary_nodes.binary_search(&node).ok()
    }
}

pub(crate) fn signed_area(nodes: &[[f64; 2]], t: [usize; 3]) -> f64 {
    let [p0, p1, p2] = [nodes[t[0]], nodes[t[1]], nodes[t[2]]];
    0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1]))
}

/// Uniform mesh of `[0, length]` with `n` segments.
pub fn build_interval_mesh(n: usize, length: f64) -> Result<DiscreteDomain> {
    if n < 2 {
        return Err(Error::InvalidMesh(format!(
            "interval needs at least 2 segments, got {n}"
        )));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidMesh(format!(
            "interval length must be positive, got {length}"
        )));
    }
    let h = length / n as f64;
    let nodes = (0..=n).map(|i| [i as f64 * h, 0.0]).collect();
    let elements = (0..n).map(|i| Element::Segment([i, i + 1])).collect();
    Ok(DiscreteDomain {
        dimension: 1,
        nodes,
        elements,
        boundary_edges: Vec::new(),
        boundary_nodes: alloc::vec![0, n],
        interior_nodes: (1..n).collect(),
        h_max: h,
    })
}

/// Structured triangulation of `[0, width] × [0, height]`: each of the
/// `nx × ny` grid cells is split along its lower-left to upper-right diagonal.
pub fn build_rectangle_mesh(
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
) -> Result<DiscreteDomain> {
    if nx < 2 || ny < 2 {
        return Err(Error::InvalidMesh(format!(
            "rectangle needs at least 2 cells per direction, got {nx}×{ny}"
        )));
    }
    if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
        return Err(Error::InvalidMesh(format!(
            "rectangle sides must be positive, got {width}×{height}"
        )));
    }
    let (dx, dy) = (width / nx as f64, height / ny as f64);
    let id = |i: usize, j: usize| j * (nx + 1) + i;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    let mut boundary_nodes = Vec::new();
    let mut interior_nodes = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([i as f64 * dx, j as f64 * dy]);
            if i == 0 || i == nx || j == 0 || j == ny {
                boundary_nodes.push(id(i, j));
            } else {
                interior_nodes.push(id(i, j));
            }
        }
    }

    let mut elements = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (p00, p10, p11, p01) = (id(i, j), id(i + 1, j), id(i + 1, j + 1), id(i, j + 1));
            elements.push(Element::Triangle([p00, p10, p11]));
            elements.push(Element::Triangle([p00, p11, p01]));
        }
    }

    let mut boundary_edges = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary_edges.push([id(i, 0), id(i + 1, 0)]);
        boundary_edges.push([id(i, ny), id(i + 1, ny)]);
    }
    for j in 0..ny {
        boundary_edges.push([id(0, j), id(0, j + 1)]);
        boundary_edges.push([id(nx, j), id(nx, j + 1)]);
    }

    Ok(DiscreteDomain {
        dimension: 2,
        nodes,
        elements,
        boundary_edges,
        boundary_nodes,
        interior_nodes,
        h_max: libm::hypot(dx, dy),
    })
}

/// Interior and boundary node lists, both ascending.
pub fn classify_dofs(domain: &DiscreteDomain) -> (Vec<usize>, Vec<usize>) {
    (domain.interior_nodes.clone(), domain.boundary_nodes.clone())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_two_segments() {
        let d = build_interval_mesh(2, 1.0).unwrap();
        let xs: Vec<f64> = d.nodes().iter().map(|p| p[0]).collect();
        assert_eq!(xs, [0.0, 0.5, 1.0]);
        assert_eq!(classify_dofs(&d), (alloc::vec![1], alloc::vec![0, 2]));
    }

    #[test]
    fn interval_four_segments() {
        let d = build_interval_mesh(4, 2.0).unwrap();
        assert_eq!(d.num_nodes(), 5);
        assert_eq!(d.h_max(), 0.5);
        assert_eq!(d.boundary_nodes(), &[0, 4]);
        assert_eq!(d.interior_nodes(), &[1, 2, 3]);
    }

    #[test]
    fn interval_too_coarse() {
        assert!(matches!(
            build_interval_mesh(1, 1.0),
            Err(Error::InvalidMesh(_))
        ));
    }

    #[test]
    fn rectangle_counts() {
        let d = build_rectangle_mesh(2, 2, 1.0, 1.0).unwrap();
        assert_eq!((d.num_nodes(), d.elements().len()), (9, 8));
        assert_eq!((d.boundary_nodes().len(), d.interior_nodes().len()), (8, 1));
        let d = build_rectangle_mesh(3, 2, 1.0, 1.0).unwrap();
        assert_eq!((d.num_nodes(), d.elements().len()), (12, 12));
        assert_eq!(
            (d.boundary_nodes().len(), d.interior_nodes().len()),
            (10, 2)
        );
        assert!(build_rectangle_mesh(1, 2, 1.0, 1.0).is_err());
    }

    #[test]
    fn measures_sum_to_domain() {
        let d = build_rectangle_mesh(5, 3, 2.0, 0.7).unwrap();
        assert!((d.measure() - 1.4).abs() < 1e-14);
        for e in 0..d.elements().len() {
            if let Element::Triangle(t) = d.elements()[e] {
                assert!(signed_area(d.nodes(), t) > 0.0);
            }
        }
        let d = build_interval_mesh(7, 3.0).unwrap();
        assert!((d.measure() - 3.0).abs() < 1e-14);
    }

    #[test]
    fn classification_is_partition() {
        let d = build_rectangle_mesh(4, 3, 1.0, 1.0).unwrap();
        let (i, b) = classify_dofs(&d);
        let mut all: Vec<usize> = i.iter().chain(b.iter()).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..d.num_nodes()).collect::<Vec<_>>());
        assert_eq!(classify_dofs(&d), (i, b));
        for &n in d.boundary_nodes() {
            let [x, y] = d.nodes()[n];
            assert!(x == 0.0 || y == 0.0 || (x - 1.0).abs() < 1e-14 || (y - 1.0).abs() < 1e-14);
        }
    }
}
