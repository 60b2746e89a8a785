//! Sensor-network topology and the interconnection matrices entering the
//! feasibility conditions of both design steps.

use crate::error::{Error, Result};
use crate::matlin::{lambda_min, solve_spd, Matrix};

/// A directed in-edge `j -> i`: node `i` receives `c_ij = W_ij xhat_j + H_ij v_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Sending node `j`.
    pub from: usize,
    /// `p_ij x n`.
    pub w: Matrix,
    /// `p_ij x m_ij`, channel noise gain.
    pub h: Matrix,
    /// `p_ij x p_ij` symmetric positive definite weight.
    pub z: Matrix,
}

impl Edge {
    pub fn p(&self) -> usize {
        self.w.rows()
    }

    pub fn noise_dim(&self) -> usize {
        self.h.cols()
    }

    /// `U_ij = H_ij H_ij' + Z_ij`.
    pub fn u(&self) -> Matrix {
        &(&self.h * &self.h.transpose()) + &self.z
    }
}

/// Directed neighbor graph. `neighbors[i]` lists the in-edges of node `i` in a
/// fixed order; that order fixes the column blocks of every partitioned gain.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    state_dim: usize,
    neighbors: Vec<Vec<Edge>>,
}

impl Topology {
    pub fn new(state_dim: usize, neighbors: Vec<Vec<Edge>>) -> Result<Self> {
        let topo = Topology { state_dim, neighbors };
        topo.validate()?;
        Ok(topo)
    }

    fn validate(&self) -> Result<()> {
        let n_nodes = self.neighbors.len();
        if n_nodes == 0 {
            return Err(Error::Parameter("topology has no nodes".into()));
        }
        for (i, edges) in self.neighbors.iter().enumerate() {
            for e in edges {
                let tag = format!("edge ({i},{})", e.from);
                if e.from >= n_nodes {
                    return Err(Error::Parameter(format!("{tag}: sender out of range")));
                }
                if e.from == i {
                    return Err(Error::Parameter(format!("{tag}: self loop")));
                }
                if e.w.cols() != self.state_dim {
                    return Err(Error::dim(format!(
                        "{tag}: W has {} columns, state dimension is {}",
                        e.w.cols(),
                        self.state_dim
                    )));
                }
                if e.h.rows() != e.p() || e.z.shape() != (e.p(), e.p()) {
                    return Err(Error::dim(format!(
                        "{tag}: H must have {p} rows and Z must be {p}x{p}",
                        p = e.p()
                    )));
                }
                if (&e.z - &e.z.transpose()).max_abs() > 1e-12 * e.z.max_abs().max(1.0) {
                    return Err(Error::Parameter(format!("{tag}: Z is not symmetric")));
                }
                if !(lambda_min(&e.z)? > 0.0) {
                    return Err(Error::NotPositiveDefinite {
                        context: format!("{tag}: Z"),
                        pivot: 0,
                    });
                }
            }
            let mut senders: Vec<usize> = edges.iter().map(|e| e.from).collect();
            senders.sort_unstable();
            if senders.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Parameter(format!("node {i}: duplicate in-edge")));
            }
        }
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.neighbors.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn edges(&self, i: usize) -> &[Edge] {
        &self.neighbors[i]
    }

    /// `q_i = |N_i|`.
    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    /// Same graph with every `Z_ij` replaced; `z[i][k]` pairs with `edges(i)[k]`.
    pub fn with_weights(&self, z: &[Vec<Matrix>]) -> Result<Topology> {
        if z.len() != self.node_count() || z.iter().zip(&self.neighbors).any(|(a, b)| a.len() != b.len()) {
            return Err(Error::dim("weight override does not match the edge list"));
        }
        let neighbors = self
            .neighbors
            .iter()
            .zip(z)
            .map(|(edges, zs)| {
                edges
                    .iter()
                    .zip(zs)
                    .map(|(e, zk)| Edge {
                        z: zk.clone(),
                        ..e.clone()
                    })
                    .collect()
            })
            .collect();
        Topology::new(self.state_dim, neighbors)
    }

    /// `Z_ij -> alpha Z_ij` on every edge.
    pub fn scale_weights(&self, alpha: f64) -> Result<Topology> {
        let z: Vec<Vec<Matrix>> = self
            .neighbors
            .iter()
            .map(|edges| edges.iter().map(|e| e.z.scale(alpha)).collect())
            .collect();
        self.with_weights(&z)
    }
}

#[derive(Debug, Clone)]
pub struct InterconnectionMatrices {
    pub n: usize,
    /// `nN x nN`.
    pub phi: Matrix,
    /// Block diagonal, `nN x nN`.
    pub delta: Matrix,
    /// Diagonal blocks of `delta`, one per node.
    pub delta_blocks: Vec<Matrix>,
    /// `u[i][k]` is `U_ij` for the `k`-th in-edge of node `i`.
    pub u: Vec<Vec<Matrix>>,
}

impl InterconnectionMatrices {
    pub fn node_count(&self) -> usize {
        self.delta_blocks.len()
    }

    /// `Phi + Phi' - Delta`, the matrix shared by both feasibility conditions.
    pub fn coupling(&self) -> Matrix {
        (&(&self.phi + &self.phi.transpose()) - &self.delta).symmetrize()
    }
}

/// Builds `Phi`, `Delta` and `U_ij` from the topology.
pub fn build_interconnection(topo: &Topology) -> Result<InterconnectionMatrices> {
    let n = topo.state_dim();
    let n_nodes = topo.node_count();
    let mut phi = Matrix::zeros(n * n_nodes, n * n_nodes);
    let mut delta = Matrix::zeros(n * n_nodes, n * n_nodes);
    let mut delta_blocks = Vec::with_capacity(n_nodes);
    let mut u_all = Vec::with_capacity(n_nodes);

    for i in 0..n_nodes {
        let mut d_i = Matrix::zeros(n, n);
        let mut u_i = Vec::new();
        for e in topo.edges(i) {
            let u = e.u();
            let singular = |err: Error| match err {
                Error::NotPositiveDefinite { pivot, .. } => Error::NotPositiveDefinite {
                    context: format!("U for edge ({i},{})", e.from),
                    pivot,
                },
                other => other,
            };
            // U^{-1} W
            let uinv_w = solve_spd(&u, &e.w).map_err(singular)?;
            let wt = e.w.transpose();
            d_i = &d_i + &(&(&uinv_w.transpose() * &e.z) * &uinv_w);
            let off = -&(&wt * &uinv_w);
            phi.set_block(i * n, e.from * n, &off);
            u_i.push(u);
        }
        let d_i = d_i.symmetrize();
        phi.set_block(i * n, i * n, &d_i);
        delta.set_block(i * n, i * n, &d_i);
        delta_blocks.push(d_i);
        u_all.push(u_i);
    }

    Ok(InterconnectionMatrices {
        n,
        phi,
        delta,
        delta_blocks,
        u: u_all,
    })
}

#[cfg(test)]
pub(crate) mod tests_support {
    use super::*;

    /// Two scalar nodes observing each other with `W = H = Z = 1`.
    pub(crate) fn two_node_scalar() -> Topology {
        let edge = |from| Edge {
            from,
            w: Matrix::column(&[1.0]),
            h: Matrix::column(&[1.0]),
            z: Matrix::column(&[1.0]),
        };
        Topology::new(1, vec![vec![edge(1)], vec![edge(0)]]).unwrap()
    }
}
