//! Communication graph of the convoy and the cost matrices it induces.
//!
//! Vertices are zero-based. Edge `k = (i, j)` relates tail `i` to head `j`;
//! the incidence matrix has `D[i,k] = −1`, `D[j,k] = +1`, so `−Dᵀ` maps stacked
//! positions to `q_i − q_j`. The relative state of an edge is `Dᵀq − d`,
//! i.e. `q_j − q_i − d_ij`, which is exactly the quantity the Laplacian cost
//! blocks penalize.

use nalgebra::DVector;

use crate::numerics::{kron, Matrix};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub tail: usize,
    pub head: usize,
    /// Running weight μ.
    pub mu: f64,
    /// Terminal weight ω.
    pub omega: f64,
    /// Desired displacement d.
    pub offset: [f64; 2],
}

impl Edge {
    pub fn new(tail: usize, head: usize, mu: f64, omega: f64, offset: [f64; 2]) -> Self {
        Self {
            tail,
            head,
            mu,
            omega,
            offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvoyGraph {
    m: usize,
    edges: Vec<Edge>,
}

impl ConvoyGraph {
    /// Validates and builds a graph on `m` vertices.
    pub fn new(m: usize, edges: Vec<Edge>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidGraph("graph has no vertices".into()));
        }
        for (k, e) in edges.iter().enumerate() {
            if e.tail >= m || e.head >= m {
                return Err(Error::InvalidGraph(format!(
                    "edge {k} ({}, {}) references a vertex outside 0..{m}",
                    e.tail, e.head
                )));
            }
            if e.tail == e.head {
                return Err(Error::InvalidGraph(format!(
                    "edge {k} is a self-loop at vertex {}",
                    e.tail
                )));
            }
            if !(e.mu > 0.0 && e.mu.is_finite()) || !(e.omega > 0.0 && e.omega.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "edge {k} weights must be positive and finite (mu = {}, omega = {})",
                    e.mu, e.omega
                )));
            }
            if !e.offset.iter().all(|v| v.is_finite()) {
                return Err(Error::InvalidGraph(format!(
                    "edge {k} offset is not finite"
                )));
            }
            for (l, f) in edges[..k].iter().enumerate() {
                let same = f.tail == e.tail && f.head == e.head;
                let reversed = f.tail == e.head && f.head == e.tail;
                if same || reversed {
                    return Err(Error::InvalidGraph(format!(
                        "edge {k} ({}, {}) duplicates edge {l}",
                        e.tail, e.head
                    )));
                }
            }
        }
        let mut parent: Vec<usize> = (0..m).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for e in &edges {
            let (a, b) = (find(&mut parent, e.tail), find(&mut parent, e.head));
            parent[a] = b;
        }
        let root = find(&mut parent, 0);
        if (1..m).any(|v| find(&mut parent, v) != root) {
            return Err(Error::InvalidGraph("graph is not connected".into()));
        }
        Ok(Self { m, edges })
    }

    pub fn vehicle_count(&self) -> usize {
        self.m
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// `𝒩_i`: heads of the edges leaving `i`.
    pub fn neighbors(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|e| e.tail == i)
            .map(|e| e.head)
            .collect()
    }

    /// Indices of the edges whose cost vehicle `i` carries.
    pub fn owned_edges(&self, i: usize) -> Vec<usize> {
        (0..self.edges.len())
            .filter(|&k| self.edges[k].tail == i)
            .collect()
    }

    pub fn is_tree(&self) -> bool {
        self.edges.len() + 1 == self.m
    }

    /// Stacked offsets `d ∈ ℝ^{2n}` in edge order.
    pub fn offsets(&self) -> DVector<f64> {
        DVector::from_iterator(
            2 * self.edges.len(),
            self.edges.iter().flat_map(|e| e.offset),
        )
    }

    /// `diag(μ_1, …, μ_n)`.
    pub fn mu_weights(&self) -> Matrix {
        Matrix::from_diagonal(&DVector::from_iterator(
            self.edges.len(),
            self.edges.iter().map(|e| e.mu),
        ))
    }

    /// `diag(ω_1, …, ω_n)`.
    pub fn omega_weights(&self) -> Matrix {
        Matrix::from_diagonal(&DVector::from_iterator(
            self.edges.len(),
            self.edges.iter().map(|e| e.omega),
        ))
    }
}

pub fn incidence(graph: &ConvoyGraph) -> Matrix {
    let mut d = Matrix::zeros(graph.m, graph.edges.len());
    for (k, e) in graph.edges.iter().enumerate() {
        d[(e.tail, k)] = -1.0;
        d[(e.head, k)] = 1.0;
    }
    d
}

/// `L = D W Dᵀ` for a diagonal, nonnegative `W`.
pub fn laplacian(d: &Matrix, w: &Matrix) -> Result<Matrix> {
    let n = d.ncols();
    if w.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "weight matrix is {}x{}, expected {n}x{n}",
            w.nrows(),
            w.ncols()
        )));
    }
    for r in 0..n {
        for c in 0..n {
            if r != c && w[(r, c)] != 0.0 {
                return Err(Error::Domain("weight matrix must be diagonal".into()));
            }
        }
        if !(w[(r, r)] >= 0.0) {
            return Err(Error::Domain(format!(
                "negative weight {} at edge {r}",
                w[(r, r)]
            )));
        }
    }
    Ok(d * w * d.transpose())
}

/// Cost data of one vehicle in the stacked coordinates
/// `z = [q_1, …, q_m, 1, q̇_1, …, q̇_m]`.
#[derive(Debug, Clone)]
pub struct CostMatrices {
    pub q: Matrix,
    pub q_f: Matrix,
    pub d: Matrix,
    pub w: Matrix,
    pub w_f: Matrix,
    pub offsets: DVector<f64>,
}

fn stacked_cost(d: &Matrix, w: &Matrix, offsets: &DVector<f64>) -> Result<Matrix> {
    let m = d.nrows();
    let i2 = Matrix::identity(2, 2);
    let l = kron(&laplacian(d, w)?, &i2);
    let dw = kron(&(d * w), &i2);
    let coupling = -(&dw * offsets);
    let constant = offsets.dot(&(kron(w, &i2) * offsets));
    let size = 4 * m + 1;
    let mut q = Matrix::zeros(size, size);
    q.view_mut((0, 0), (2 * m, 2 * m)).copy_from(&l);
    q.view_mut((0, 2 * m), (2 * m, 1)).copy_from(&coupling);
    q.view_mut((2 * m, 0), (1, 2 * m))
        .copy_from(&coupling.transpose());
    q[(2 * m, 2 * m)] = constant;
    q.view_mut((2 * m + 1, 2 * m + 1), (2 * m, 2 * m))
        .copy_from(&l);
    Ok(q)
}

/// `Q_i` and `Q_if` for `vehicle`, which owns the edges it is the tail of.
pub fn build_cost_matrices(graph: &ConvoyGraph, vehicle: usize) -> Result<CostMatrices> {
    if vehicle >= graph.m {
        return Err(Error::Domain(format!(
            "vehicle {vehicle} out of range for a {}-vehicle graph",
            graph.m
        )));
    }
    let n = graph.edges.len();
    let mut w = Matrix::zeros(n, n);
    let mut w_f = Matrix::zeros(n, n);
    for k in graph.owned_edges(vehicle) {
        w[(k, k)] = graph.edges[k].mu;
        w_f[(k, k)] = graph.edges[k].omega;
    }
    let d = incidence(graph);
    let offsets = graph.offsets();
    Ok(CostMatrices {
        q: stacked_cost(&d, &w, &offsets)?,
        q_f: stacked_cost(&d, &w_f, &offsets)?,
        d,
        w,
        w_f,
        offsets,
    })
}
