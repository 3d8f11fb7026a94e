//! Geometrical graphs: the discrete domains all schemes are posed on.
//!
//! A [`GridGraph`] stores node coordinates, disjoint interior/boundary index
//! sets, per-node neighbor lists with edge lengths, and the nominal spacing.
//! Neighbor lists follow a fixed ordering — sorted by axis, negative offset
//! before positive — which the Hamiltonian evaluators and the Jacobian
//! assembly rely on for their finite-difference slot layout.
//!
//! Node indices are row-major over the generating lattice and boundary nodes
//! keep their lattice indices, so the interior/boundary sets are index sets,
//! not contiguous ranges.

use std::io::{self, Write};

use crate::error::{HjError, Result};

/// Interior/boundary classification of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeClass {
    Interior,
    Boundary,
}

/// Lattice metadata kept by the Cartesian builders; needed for prolongation
/// between grids of the same family.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub lo: Vec<f64>,
    /// Number of cells per axis (nodes per axis = steps + 1).
    pub steps: Vec<usize>,
    pub spacing: Vec<f64>,
}

impl Lattice {
    pub fn nodes_per_axis(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s + 1).collect()
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let mut idx = 0;
        for (a, &i) in multi.iter().enumerate() {
            idx = idx * (self.steps[a] + 1) + i;
        }
        idx
    }

    pub fn multi_index(&self, flat: usize) -> Vec<usize> {
        let d = self.steps.len();
        let mut multi = vec![0usize; d];
        let mut rest = flat;
        for a in (0..d).rev() {
            let m = self.steps[a] + 1;
            multi[a] = rest % m;
            rest /= m;
        }
        multi
    }

    /// Flat index of the node shifted by `offset` cells along `axis`, when it
    /// stays inside the lattice.
    pub fn shifted(&self, flat: usize, axis: usize, offset: isize) -> Option<usize> {
        let mut multi = self.multi_index(flat);
        let i = multi[axis] as isize + offset;
        if i < 0 || i > self.steps[axis] as isize {
            return None;
        }
        multi[axis] = i as usize;
        Some(self.flat_index(&multi))
    }
}

/// A finite geometrical graph embedded in `R^d`.
#[derive(Debug, Clone)]
pub struct GridGraph {
    dim: usize,
    h: f64,
    degree: usize,
    coords: Vec<f64>,
    class: Vec<NodeClass>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    // CSR neighbor storage.
    nbr_off: Vec<usize>,
    nbr_idx: Vec<usize>,
    nbr_len: Vec<f64>,
    /// For edge (j, k) at slot s of j, the slot of j within k's list.
    nbr_rev: Vec<usize>,
    c1: f64,
    c2: f64,
    lattice: Option<Lattice>,
}

impl GridGraph {
    pub fn n_nodes(&self) -> usize {
        self.class.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Nominal spacing Δx.
    pub fn h(&self) -> f64 {
        self.h
    }

    /// Uniform interior degree K.
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    pub fn is_interior(&self, j: usize) -> bool {
        self.class[j] == NodeClass::Interior
    }

    pub fn class(&self, j: usize) -> NodeClass {
        self.class[j]
    }

    pub fn coord(&self, j: usize) -> &[f64] {
        &self.coords[j * self.dim..(j + 1) * self.dim]
    }

    pub fn neighbors(&self, j: usize) -> &[usize] {
        &self.nbr_idx[self.nbr_off[j]..self.nbr_off[j + 1]]
    }

    /// Edge lengths Δx_{jk}, aligned with [`Self::neighbors`].
    pub fn edge_lengths(&self, j: usize) -> &[f64] {
        &self.nbr_len[self.nbr_off[j]..self.nbr_off[j + 1]]
    }

    /// For each neighbor k of j (slot s), the slot of j inside k's list.
    pub fn reverse_slots(&self, j: usize) -> &[usize] {
        &self.nbr_rev[self.nbr_off[j]..self.nbr_off[j + 1]]
    }

    /// Computed quasi-uniformity constants: `c1*h <= Δx_{jk} <= c2*h`.
    pub fn uniformity_constants(&self) -> (f64, f64) {
        (self.c1, self.c2)
    }

    pub fn lattice(&self) -> Option<&Lattice> {
        self.lattice.as_ref()
    }

    /// Checks every structural invariant over all nodes and edges.
    pub fn validate(&self) -> Result<()> {
        let n = self.n_nodes();
        let mut seen = vec![false; n];
        for &j in self.interior.iter().chain(self.boundary.iter()) {
            if seen[j] {
                return Err(HjError::InvalidGrid(format!(
                    "node {j} appears in both index sets"
                )));
            }
            seen[j] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(HjError::InvalidGrid(
                "interior and boundary sets do not cover all nodes".into(),
            ));
        }
        for j in 0..n {
            let nbrs = self.neighbors(j);
            let lens = self.edge_lengths(j);
            if self.is_interior(j) && nbrs.len() != self.degree {
                return Err(HjError::InvalidGrid(format!(
                    "interior node {j} has degree {} != K = {}",
                    nbrs.len(),
                    self.degree
                )));
            }
            for (s, (&k, &len)) in nbrs.iter().zip(lens).enumerate() {
                if k == j {
                    return Err(HjError::InvalidGrid(format!("node {j} is its own neighbor")));
                }
                if !(len > 0.0) {
                    return Err(HjError::InvalidGrid(format!(
                        "edge ({j},{k}) has non-positive length {len}"
                    )));
                }
                if len < self.c1 * self.h - 1e-12 || len > self.c2 * self.h + 1e-12 {
                    return Err(HjError::InvalidGrid(format!(
                        "edge ({j},{k}) violates quasi-uniformity"
                    )));
                }
                // Symmetry of the relation and of the lengths.
                let rev = self.reverse_slots(j)[s];
                if self.neighbors(k).get(rev) != Some(&j) {
                    return Err(HjError::InvalidGrid(format!(
                        "edge ({j},{k}) is not symmetric"
                    )));
                }
                if (self.edge_lengths(k)[rev] - len).abs() > 1e-15 {
                    return Err(HjError::InvalidGrid(format!(
                        "edge ({j},{k}) has asymmetric lengths"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// An axis-aligned collocation stencil attached to a free point.
#[derive(Debug, Clone)]
pub struct Stencil {
    pub center: Vec<f64>,
    pub offsets: Vec<Vec<f64>>,
    pub h: f64,
}

impl Stencil {
    /// Stencil point for a given offset slot.
    pub fn point(&self, slot: usize) -> Vec<f64> {
        self.center
            .iter()
            .zip(&self.offsets[slot])
            .map(|(c, o)| c + o)
            .collect()
    }
}

/// Axis stencil `{p ± h e_i}` with the same slot ordering as grid neighbor
/// lists (per axis, negative offset first). Used by the grid-free network
/// training, where neighbor values come from network evaluation.
pub fn collocation_stencil(p: &[f64], h: f64) -> Stencil {
    let d = p.len();
    let mut offsets = Vec::with_capacity(2 * d);
    for a in 0..d {
        for sign in [-1.0, 1.0] {
            let mut o = vec![0.0; d];
            o[a] = sign * h;
            offsets.push(o);
        }
    }
    Stencil {
        center: p.to_vec(),
        offsets,
        h,
    }
}

/// Finite differences `(u_j - u_k)/Δx_{kj}` over the neighbors of an interior
/// node, in neighbor-list order.
pub fn graph_gradient(u: &[f64], j: usize, g: &GridGraph) -> Result<Vec<f64>> {
    if !g.is_interior(j) {
        return Err(HjError::NotInterior(j));
    }
    if u.len() != g.n_nodes() {
        return Err(HjError::SizeMismatch(format!(
            "field has {} entries, grid has {} nodes",
            u.len(),
            g.n_nodes()
        )));
    }
    Ok(g.neighbors(j)
        .iter()
        .zip(g.edge_lengths(j))
        .map(|(&k, &len)| (u[j] - u[k]) / len)
        .collect())
}

/// Fills finite differences into a caller-provided buffer (hot path).
pub(crate) fn graph_gradient_into(u: &[f64], j: usize, g: &GridGraph, out: &mut Vec<f64>) {
    out.clear();
    for (&k, &len) in g.neighbors(j).iter().zip(g.edge_lengths(j)) {
        out.push((u[j] - u[k]) / len);
    }
}

/// Writes a node field in the plain-text dump format:
/// one line per node, `index x1 … xd tag value`, tag ∈ {I, B}.
pub fn dump_field<W: Write>(g: &GridGraph, u: &[f64], mut w: W) -> io::Result<()> {
    for j in 0..g.n_nodes() {
        write!(w, "{j}")?;
        for x in g.coord(j) {
            write!(w, " {x}")?;
        }
        let tag = if g.is_interior(j) { 'I' } else { 'B' };
        writeln!(w, " {tag} {}", u[j])?;
    }
    Ok(())
}

fn finish_graph(
    dim: usize,
    h: f64,
    degree: usize,
    coords: Vec<f64>,
    class: Vec<NodeClass>,
    neighbors: Vec<Vec<usize>>,
    lattice: Option<Lattice>,
) -> GridGraph {
    let n = class.len();
    let mut interior = Vec::new();
    let mut boundary = Vec::new();
    for (j, c) in class.iter().enumerate() {
        match c {
            NodeClass::Interior => interior.push(j),
            NodeClass::Boundary => boundary.push(j),
        }
    }
    let mut nbr_off = Vec::with_capacity(n + 1);
    nbr_off.push(0);
    for nb in &neighbors {
        nbr_off.push(nbr_off.last().unwrap() + nb.len());
    }
    let total = *nbr_off.last().unwrap();
    let mut nbr_idx = Vec::with_capacity(total);
    let mut nbr_len = Vec::with_capacity(total);
    let mut c1 = f64::INFINITY;
    let mut c2 = 0.0f64;
    for (j, nb) in neighbors.iter().enumerate() {
        for &k in nb {
            let len: f64 = coords[j * dim..(j + 1) * dim]
                .iter()
                .zip(&coords[k * dim..(k + 1) * dim])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            nbr_idx.push(k);
            nbr_len.push(len);
            c1 = c1.min(len / h);
            c2 = c2.max(len / h);
        }
    }
    // Reverse slots: position of j within each neighbor's list.
    let mut nbr_rev = vec![usize::MAX; total];
    for j in 0..n {
        for s in nbr_off[j]..nbr_off[j + 1] {
            let k = nbr_idx[s];
            let pos = nbr_idx[nbr_off[k]..nbr_off[k + 1]]
                .iter()
                .position(|&m| m == j)
                .expect("neighbor relation must be symmetric");
            nbr_rev[s] = nbr_off[k] + pos;
        }
    }
    // Store rev as slot within k's list rather than a flat offset.
    for j in 0..n {
        for s in nbr_off[j]..nbr_off[j + 1] {
            let k = nbr_idx[s];
            nbr_rev[s] -= nbr_off[k];
        }
    }
    GridGraph {
        dim,
        h,
        degree,
        coords,
        class,
        interior,
        boundary,
        nbr_off,
        nbr_idx,
        nbr_len,
        nbr_rev,
        c1,
        c2,
        lattice,
    }
}

fn lattice_coords(lat: &Lattice) -> Vec<f64> {
    let dim = lat.lo.len();
    let npa = lat.nodes_per_axis();
    let n: usize = npa.iter().product();
    let mut coords = Vec::with_capacity(n * dim);
    let mut multi = vec![0usize; dim];
    for _ in 0..n {
        for a in 0..dim {
            coords.push(lat.lo[a] + multi[a] as f64 * lat.spacing[a]);
        }
        // Row-major increment: last axis fastest.
        for a in (0..dim).rev() {
            multi[a] += 1;
            if multi[a] < npa[a] {
                break;
            }
            multi[a] = 0;
        }
    }
    coords
}

fn lattice_neighbors(lat: &Lattice) -> Vec<Vec<usize>> {
    let dim = lat.lo.len();
    let npa = lat.nodes_per_axis();
    let n: usize = npa.iter().product();
    let mut strides = vec![1usize; dim];
    for a in (0..dim.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * npa[a + 1];
    }
    let mut neighbors = Vec::with_capacity(n);
    let mut multi = vec![0usize; dim];
    for j in 0..n {
        let mut nb = Vec::with_capacity(2 * dim);
        for a in 0..dim {
            if multi[a] > 0 {
                nb.push(j - strides[a]);
            }
            if multi[a] + 1 < npa[a] {
                nb.push(j + strides[a]);
            }
        }
        neighbors.push(nb);
        for a in (0..dim).rev() {
            multi[a] += 1;
            if multi[a] < npa[a] {
                break;
            }
            multi[a] = 0;
        }
    }
    neighbors
}

/// Uniform grid on the unit interval with `n` cells: nodes at `j/n`,
/// boundary `{0, n}`, interior `{1, …, n-1}`.
pub fn build_interval_grid(n: usize) -> Result<GridGraph> {
    if n < 2 {
        return Err(HjError::InvalidGrid(format!(
            "interval grid needs n >= 2 cells, got {n}"
        )));
    }
    build_box_grid(&[0.0], &[1.0], 1.0 / n as f64)
}

/// Axis-aligned lattice on the box `[lo, hi]` with requested spacing `h`.
/// Interior nodes have all `2d` axis neighbors; face nodes are boundary.
pub fn build_box_grid(lo: &[f64], hi: &[f64], h: f64) -> Result<GridGraph> {
    let dim = lo.len();
    if dim == 0 || hi.len() != dim {
        return Err(HjError::InvalidGrid("lo/hi dimension mismatch".into()));
    }
    if !(h > 0.0) {
        return Err(HjError::InvalidGrid(format!("spacing h = {h} must be positive")));
    }
    let mut steps = Vec::with_capacity(dim);
    let mut spacing = Vec::with_capacity(dim);
    for a in 0..dim {
        let ext = hi[a] - lo[a];
        if ext < 2.0 * h - 1e-12 * h {
            return Err(HjError::InvalidGrid(format!(
                "degenerate box: extent {ext} on axis {a} is below 2h = {}",
                2.0 * h
            )));
        }
        let s = (ext / h).round().max(2.0) as usize;
        steps.push(s);
        spacing.push(ext / s as f64);
    }
    let lat = Lattice {
        lo: lo.to_vec(),
        steps,
        spacing,
    };
    let coords = lattice_coords(&lat);
    let neighbors = lattice_neighbors(&lat);
    let npa = lat.nodes_per_axis();
    let n: usize = npa.iter().product();
    let mut class = vec![NodeClass::Interior; n];
    let mut multi = vec![0usize; dim];
    for c in class.iter_mut() {
        if multi
            .iter()
            .zip(&npa)
            .any(|(&i, &m)| i == 0 || i + 1 == m)
        {
            *c = NodeClass::Boundary;
        }
        for a in (0..dim).rev() {
            multi[a] += 1;
            if multi[a] < npa[a] {
                break;
            }
            multi[a] = 0;
        }
    }
    Ok(finish_graph(dim, h, 2 * dim, coords, class, neighbors, Some(lat)))
}

/// Annulus problem grid with its Dirichlet tags.
#[derive(Debug, Clone)]
pub struct AnnulusGrid {
    pub graph: GridGraph,
    /// Node-indexed boundary values: 0 on and inside the inner circle,
    /// 1 outside the open annulus on the outer side. Interior slots are 0.
    pub bvals: Vec<f64>,
}

/// Embeds the annulus `r < |x| < R` into the box `[-2, 2]^2`. Lattice nodes
/// strictly inside the open annulus are interior; every other node is a
/// pinned boundary node, tagged 0 when `x^2 + y^2 <= r^2` and 1 otherwise.
pub fn build_annulus_grid(r: f64, big_r: f64, h: f64) -> Result<AnnulusGrid> {
    if !(r > 0.0 && big_r > r) {
        return Err(HjError::InvalidGrid(format!(
            "annulus radii must satisfy 0 < r < R, got r = {r}, R = {big_r}"
        )));
    }
    if !(h < (big_r - r) / 4.0) {
        return Err(HjError::InvalidGrid(format!(
            "spacing h = {h} too coarse to separate circles r = {r}, R = {big_r}"
        )));
    }
    if big_r + h >= 2.0 {
        return Err(HjError::InvalidGrid(format!(
            "outer circle R = {big_r} does not fit inside [-2,2]^2 with one-cell margin"
        )));
    }
    let boxed = build_box_grid(&[-2.0, -2.0], &[2.0, 2.0], h)?;
    let n = boxed.n_nodes();
    let inside = |j: usize| {
        let c = boxed.coord(j);
        let rho2 = c[0] * c[0] + c[1] * c[1];
        rho2 > r * r && rho2 < big_r * big_r
    };
    let mut class = vec![NodeClass::Boundary; n];
    for j in 0..n {
        if inside(j) && boxed.neighbors(j).len() == 4 {
            class[j] = NodeClass::Interior;
        }
    }
    let mut bvals = vec![0.0; n];
    for j in 0..n {
        if class[j] == NodeClass::Boundary {
            let c = boxed.coord(j);
            let rho2 = c[0] * c[0] + c[1] * c[1];
            bvals[j] = if rho2 <= r * r { 0.0 } else { 1.0 };
        }
    }
    let neighbors: Vec<Vec<usize>> = (0..n).map(|j| boxed.neighbors(j).to_vec()).collect();
    let lat = boxed.lattice().cloned();
    let coords = (0..n).flat_map(|j| boxed.coord(j).to_vec()).collect();
    let graph = finish_graph(2, h, 4, coords, class, neighbors, lat);
    Ok(AnnulusGrid { graph, bvals })
}
