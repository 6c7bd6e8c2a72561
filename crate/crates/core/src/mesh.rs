//! Reference-configuration geometry: a periodic-in-x strip split by a flat
//! interface into a fluid layer below and a solid layer above.
//!
//! The strip [0,L) x [-H_f, H_s] is meshed with crossed triangles (each grid
//! square is cut into four triangles through its centre). Tags:
//!
//! * subdomains: `Fluid` for y < 0, `Solid` for y > 0,
//! * facets: `Interface` on y = 0, `Wall` on y = -H_f, `Outer` on y = H_s,
//!   `Periodic` on the lateral sides x = 0 and x = L.
//!
//! Interface normals point from the fluid into the solid. Lateral facets are
//! paired by an involution that identifies x = L with x = 0 at equal y.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("strip dimensions must be positive: L={0}, H_f={1}, H_s={2}")]
    NonpositiveDimension(f64, f64, f64),
    #[error("resolution n must be even and at least 4, got {0}")]
    BadResolution(usize),
    #[error("layer thinner than one cell row: H_f={0}, H_s={1} at n={2}")]
    DegenerateLayer(f64, f64, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subdomain {
    Fluid,
    Solid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacetTag {
    /// The fluid/solid interface at y = 0.
    Interface,
    /// Outer solid boundary at y = H_s.
    Outer,
    /// Artificial fluid wall at y = -H_f (no-slip / no-flux).
    Wall,
    /// Lateral facet identified with its partner on the opposite side.
    Periodic,
}

/// A tagged mesh facet (an edge of one or two simplices).
#[derive(Debug, Clone)]
pub struct Facet {
    /// Endpoint vertex indices, ordered along +x for horizontal facets and
    /// along +y for lateral ones.
    pub vertices: [usize; 2],
    pub tag: FacetTag,
    /// Simplex on the fluid side (interface) or the only adjacent simplex.
    pub simplex: usize,
    /// Solid-side simplex for interface facets.
    pub simplex_other: Option<usize>,
    /// Unit normal; for `Interface` it points from fluid into solid, for
    /// `Wall`/`Outer` it points out of the domain, for `Periodic` out of the
    /// adjacent simplex.
    pub normal: [f64; 2],
    /// Partner facet index for `Periodic` facets (an involution).
    pub partner: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub simplices: Vec<[usize; 3]>,
    pub subdomain: Vec<Subdomain>,
    pub facets: Vec<Facet>,
    /// Canonical representative of each vertex under the periodic
    /// identification (identity except for vertices on x = L).
    pub periodic_vertex: Vec<usize>,
    /// Undirected edges as sorted vertex pairs.
    pub edges: Vec<[usize; 2]>,
    /// Edge index opposite each local vertex of each simplex.
    pub simplex_edges: Vec<[usize; 3]>,
    /// Canonical representative of each edge under the periodic
    /// identification (identity except for lateral boundary edges on x = L).
    pub periodic_edge: Vec<usize>,
    pub length: f64,
    pub height_fluid: f64,
    pub height_solid: f64,
    pub cells_x: usize,
    pub cells_y_fluid: usize,
    pub cells_y_solid: usize,
}

/// Builds the periodic strip mesh. `n` is the number of grid cells per unit
/// length; it must be even and at least 4.
pub fn build_strip_mesh(l: f64, h_f: f64, h_s: f64, n: usize) -> Result<Mesh, MeshError> {
    if !(l > 0.0 && h_f > 0.0 && h_s > 0.0) {
        return Err(MeshError::NonpositiveDimension(l, h_f, h_s));
    }
    if n < 4 || n % 2 != 0 {
        return Err(MeshError::BadResolution(n));
    }
    let nx = (l * n as f64).round() as usize;
    let nyf = (h_f * n as f64).round() as usize;
    let nys = (h_s * n as f64).round() as usize;
    if nx == 0 || nyf == 0 || nys == 0 {
        return Err(MeshError::DegenerateLayer(h_f, h_s, n));
    }
    let ny = nyf + nys;
    let hx = l / nx as f64;
    let hyf = h_f / nyf as f64;
    let hys = h_s / nys as f64;

    let y_of = |j: usize| -> f64 {
        if j <= nyf {
            -h_f + j as f64 * hyf
        } else {
            (j - nyf) as f64 * hys
        }
    };

    // grid vertices, then cell centres
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1) + nx * ny);
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([i as f64 * hx, y_of(j)]);
        }
    }
    let grid = |i: usize, j: usize| j * (nx + 1) + i;
    let centre_base = vertices.len();
    for j in 0..ny {
        for i in 0..nx {
            let yc = 0.5 * (y_of(j) + y_of(j + 1));
            vertices.push([(i as f64 + 0.5) * hx, yc]);
        }
    }
    let centre = |i: usize, j: usize| centre_base + j * nx + i;

    // four triangles per grid cell, all counter-clockwise
    let mut simplices = Vec::with_capacity(4 * nx * ny);
    let mut subdomain = Vec::with_capacity(4 * nx * ny);
    // local order within a cell: bottom, right, top, left
    let mut cell_tri = vec![[0usize; 4]; nx * ny];
    for j in 0..ny {
        for i in 0..nx {
            let a = grid(i, j);
            let b = grid(i + 1, j);
            let c = grid(i + 1, j + 1);
            let d = grid(i, j + 1);
            let m = centre(i, j);
            let sd = if j < nyf {
                Subdomain::Fluid
            } else {
                Subdomain::Solid
            };
            let base = simplices.len();
            simplices.push([a, b, m]);
            simplices.push([b, c, m]);
            simplices.push([c, d, m]);
            simplices.push([d, a, m]);
            for _ in 0..4 {
                subdomain.push(sd);
            }
            cell_tri[j * nx + i] = [base, base + 1, base + 2, base + 3];
        }
    }

    // tagged facets
    let mut facets = Vec::new();
    for i in 0..nx {
        // wall, bottom row j = 0, bottom triangle of the cell
        facets.push(Facet {
            vertices: [grid(i, 0), grid(i + 1, 0)],
            tag: FacetTag::Wall,
            simplex: cell_tri[i][0],
            simplex_other: None,
            normal: [0.0, -1.0],
            partner: None,
        });
    }
    for i in 0..nx {
        // interface at j = nyf: fluid simplex below (top triangle of the last
        // fluid row), solid simplex above (bottom triangle of the first solid
        // row); normal (0, 1) points fluid -> solid
        facets.push(Facet {
            vertices: [grid(i, nyf), grid(i + 1, nyf)],
            tag: FacetTag::Interface,
            simplex: cell_tri[(nyf - 1) * nx + i][2],
            simplex_other: Some(cell_tri[nyf * nx + i][0]),
            normal: [0.0, 1.0],
            partner: None,
        });
    }
    for i in 0..nx {
        // outer solid boundary, top row
        facets.push(Facet {
            vertices: [grid(i, ny), grid(i + 1, ny)],
            tag: FacetTag::Outer,
            simplex: cell_tri[(ny - 1) * nx + i][2],
            simplex_other: None,
            normal: [0.0, 1.0],
            partner: None,
        });
    }
    let periodic_base = facets.len();
    for j in 0..ny {
        // left x = 0, then right x = L, paired by equal j
        facets.push(Facet {
            vertices: [grid(0, j), grid(0, j + 1)],
            tag: FacetTag::Periodic,
            simplex: cell_tri[j * nx][3],
            simplex_other: None,
            normal: [-1.0, 0.0],
            partner: Some(periodic_base + 2 * j + 1),
        });
        facets.push(Facet {
            vertices: [grid(nx, j), grid(nx, j + 1)],
            tag: FacetTag::Periodic,
            simplex: cell_tri[j * nx + nx - 1][1],
            simplex_other: None,
            normal: [1.0, 0.0],
            partner: Some(periodic_base + 2 * j),
        });
    }

    // periodic vertex identification: x = L maps onto x = 0
    let mut periodic_vertex: Vec<usize> = (0..vertices.len()).collect();
    for j in 0..=ny {
        periodic_vertex[grid(nx, j)] = grid(0, j);
    }

    // undirected edge list
    let mut edge_of = std::collections::HashMap::new();
    let mut edges: Vec<[usize; 2]> = Vec::new();
    let mut simplex_edges = Vec::with_capacity(simplices.len());
    for tri in &simplices {
        let mut es = [0usize; 3];
        for (loc, e) in es.iter_mut().enumerate() {
            let a = tri[(loc + 1) % 3];
            let b = tri[(loc + 2) % 3];
            let key = [a.min(b), a.max(b)];
            *e = *edge_of.entry(key).or_insert_with(|| {
                edges.push(key);
                edges.len() - 1
            });
        }
        simplex_edges.push(es);
    }
    let mut periodic_edge: Vec<usize> = (0..edges.len()).collect();
    for j in 0..ny {
        let right = [grid(nx, j).min(grid(nx, j + 1)), grid(nx, j).max(grid(nx, j + 1))];
        let left = [grid(0, j).min(grid(0, j + 1)), grid(0, j).max(grid(0, j + 1))];
        let er = edge_of[&right];
        periodic_edge[er] = edge_of[&left];
    }

    Ok(Mesh {
        vertices,
        simplices,
        subdomain,
        facets,
        periodic_vertex,
        edges,
        simplex_edges,
        periodic_edge,
        length: l,
        height_fluid: h_f,
        height_solid: h_s,
        cells_x: nx,
        cells_y_fluid: nyf,
        cells_y_solid: nys,
    })
}

impl Mesh {
    pub fn n_simplices(&self) -> usize {
        self.simplices.len()
    }

    pub fn simplices_of(&self, sd: Subdomain) -> impl Iterator<Item = usize> + '_ {
        (0..self.simplices.len()).filter(move |&k| self.subdomain[k] == sd)
    }

    pub fn facets_of(&self, tag: FacetTag) -> impl Iterator<Item = (usize, &Facet)> {
        self.facets
            .iter()
            .enumerate()
            .filter(move |(_, f)| f.tag == tag)
    }

    pub fn simplex_coords(&self, k: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.simplices[k];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn simplex_area(&self, k: usize) -> f64 {
        let [p0, p1, p2] = self.simplex_coords(k);
        0.5 * ((p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])).abs()
    }

    pub fn simplex_barycentre(&self, k: usize) -> [f64; 2] {
        let [p0, p1, p2] = self.simplex_coords(k);
        [
            (p0[0] + p1[0] + p2[0]) / 3.0,
            (p0[1] + p1[1] + p2[1]) / 3.0,
        ]
    }

    pub fn facet_length(&self, f: &Facet) -> f64 {
        let a = self.vertices[f.vertices[0]];
        let b = self.vertices[f.vertices[1]];
        ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
    }

    /// Shortest distance between two points respecting the periodic seam.
    pub fn periodic_distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let mut dx = (a[0] - b[0]).abs();
        if dx > self.length / 2.0 {
            dx = self.length - dx;
        }
        (dx * dx + (a[1] - b[1]).powi(2)).sqrt()
    }

    /// Plain-text export. Record types, one per line:
    /// `v <id> <x> <y>`, `s <id> <v0> <v1> <v2> <FLUID|SOLID>`,
    /// `f <id> <v0> <v1> <TAG> <partner-or-dash>`.
    pub fn export_text(&self) -> String {
        let mut out = String::new();
        out.push_str("# plaquefsi mesh v1\n");
        out.push_str("# v <id> <x> <y>\n");
        out.push_str("# s <id> <v0> <v1> <v2> <FLUID|SOLID>\n");
        out.push_str("# f <id> <v0> <v1> <INTERFACE|OUTER|WALL|PERIODIC> <partner-or-dash>\n");
        for (i, v) in self.vertices.iter().enumerate() {
            out.push_str(&format!("v {} {:.17e} {:.17e}\n", i, v[0], v[1]));
        }
        for (k, tri) in self.simplices.iter().enumerate() {
            let sd = match self.subdomain[k] {
                Subdomain::Fluid => "FLUID",
                Subdomain::Solid => "SOLID",
            };
            out.push_str(&format!("s {} {} {} {} {}\n", k, tri[0], tri[1], tri[2], sd));
        }
        for (i, f) in self.facets.iter().enumerate() {
            let tag = match f.tag {
                FacetTag::Interface => "INTERFACE",
                FacetTag::Outer => "OUTER",
                FacetTag::Wall => "WALL",
                FacetTag::Periodic => "PERIODIC",
            };
            let partner = f
                .partner
                .map(|p| p.to_string())
                .unwrap_or_else(|| "-".into());
            out.push_str(&format!(
                "f {} {} {} {} {}\n",
                i, f.vertices[0], f.vertices[1], tag, partner
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_crossed_construction() {
        // 4 * (nx * ny) simplices for the crossed triangulation
        let m = build_strip_mesh(1.0, 0.5, 0.5, 8).unwrap();
        assert_eq!(m.n_simplices(), 4 * 8 * 8);
        let m = build_strip_mesh(1.0, 0.5, 0.5, 4).unwrap();
        assert_eq!(m.n_simplices(), 4 * 4 * 4);
    }

    #[test]
    fn interface_facets_flat_with_unit_upward_normals() {
        let m = build_strip_mesh(1.0, 0.5, 0.5, 4).unwrap();
        let ifacets: Vec<_> = m.facets_of(FacetTag::Interface).collect();
        assert_eq!(ifacets.len(), 4);
        for (_, f) in &ifacets {
            let norm = (f.normal[0].powi(2) + f.normal[1].powi(2)).sqrt();
            assert!((norm - 1.0).abs() < 1e-14);
            assert_eq!(f.normal, [0.0, 1.0]);
            assert_eq!(m.vertices[f.vertices[0]][1], 0.0);
            assert_eq!(m.vertices[f.vertices[1]][1], 0.0);
            // separates exactly one fluid and one solid simplex
            assert_eq!(m.subdomain[f.simplex], Subdomain::Fluid);
            assert_eq!(m.subdomain[f.simplex_other.unwrap()], Subdomain::Solid);
        }
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(matches!(
            build_strip_mesh(1.0, 0.0, 0.5, 4),
            Err(MeshError::NonpositiveDimension(..))
        ));
        assert!(matches!(
            build_strip_mesh(1.0, 0.5, 0.5, 5),
            Err(MeshError::BadResolution(5))
        ));
        assert!(matches!(
            build_strip_mesh(1.0, 0.5, 0.5, 2),
            Err(MeshError::BadResolution(2))
        ));
    }

    #[test]
    fn subdomains_partition_and_boundary_tags_consistent() {
        let m = build_strip_mesh(2.0, 0.5, 0.25, 4).unwrap();
        for (_, f) in m.facets_of(FacetTag::Outer) {
            assert_eq!(m.subdomain[f.simplex], Subdomain::Solid);
        }
        for (_, f) in m.facets_of(FacetTag::Wall) {
            assert_eq!(m.subdomain[f.simplex], Subdomain::Fluid);
        }
        let nf = m.simplices_of(Subdomain::Fluid).count();
        let ns = m.simplices_of(Subdomain::Solid).count();
        assert_eq!(nf + ns, m.n_simplices());
    }

    #[test]
    fn periodic_pairing_is_involution_at_equal_y() {
        let m = build_strip_mesh(1.0, 0.5, 0.5, 6).unwrap();
        for (i, f) in m.facets_of(FacetTag::Periodic) {
            let p = f.partner.unwrap();
            assert_eq!(m.facets[p].partner, Some(i));
            let ya: Vec<f64> = f.vertices.iter().map(|&v| m.vertices[v][1]).collect();
            let yb: Vec<f64> = m.facets[p]
                .vertices
                .iter()
                .map(|&v| m.vertices[v][1])
                .collect();
            assert_eq!(ya, yb);
        }
    }

    #[test]
    fn interface_length_invariant_under_refinement() {
        for n in [4usize, 8, 16] {
            let m = build_strip_mesh(1.0, 0.5, 0.5, n).unwrap();
            let total: f64 = m
                .facets_of(FacetTag::Interface)
                .map(|(_, f)| m.facet_length(f))
                .sum();
            assert!((total - 1.0).abs() < 1e-14, "n={n}: {total}");
        }
    }

    #[test]
    fn export_round_trips_counts() {
        let m = build_strip_mesh(1.0, 0.5, 0.5, 4).unwrap();
        let txt = m.export_text();
        let nv = txt.lines().filter(|l| l.starts_with("v ")).count();
        let ns = txt.lines().filter(|l| l.starts_with("s ")).count();
        assert_eq!(nv, m.vertices.len());
        assert_eq!(ns, m.n_simplices());
    }
}
