//! Design of the resilient observer network.
//!
//! The design runs in three steps:
//!
//! 1. A central pre-pass solves the two LMI feasibility conditions. It only
//!    touches the communication graph (`W_ij`, `H_ij`, `Z_ij`), never the
//!    plant, and produces the weights `R_i`, `Rcheck_i` and `Rbar_i`.
//! 2. Each node then integrates two differential Riccati equations from
//!    node-local data alone: one for the extended detector error `(z_i,
//!    delta_i)` and one for the controlled observer error `e_i`. The gains
//!    `Lhat, Khat, Lcheck, Kcheck` and `L, K` follow by partitioning
//!    `Y C' E^{-1}`.
//! 3. The detector innovation gains are the difference `Lbar = Lhat - L`,
//!    `Kbar = Khat - K`.
//!
//! Both LMIs are solved by a scaled-identity construction: `R = r I` with
//! `r` chosen from the extreme eigenvalue of the coupling matrix, then
//! certified by recomputing the minimum eigenvalue.

use serde::Serialize;

use crate::attack::AttackShaper;
use crate::error::{Error, Result};
use crate::matlin::{cholesky, inverse_spd, lambda_max, lambda_min, rk4_step, solve_spd, sqrt_psd, sym_eig, Matrix};
use crate::network::{build_interconnection, InterconnectionMatrices, Topology};
use crate::plant::PlantModel;

pub const DEFAULT_MARGIN: f64 = 0.01;
pub const DEFAULT_BOUND_CAP_FACTOR: f64 = 1e6;
const STATIONARY_TOL: f64 = 1e-6;

/// Uniform grid `t_k = k * step`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    pub step: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(step: f64, horizon: f64) -> Result<Self> {
        if !(step > 0.0) || !(horizon >= 0.0) || !step.is_finite() || !horizon.is_finite() {
            return Err(Error::Parameter(format!(
                "grid needs step > 0 and horizon >= 0, got step {step}, horizon {horizon}"
            )));
        }
        let steps = (horizon / step).round() as usize;
        Ok(TimeGrid { step, steps })
    }

    #[inline]
    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.t(self.steps)
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DetectorLmi {
    pub r: f64,
    #[serde(skip)]
    pub r_blocks: Vec<Matrix>,
    #[serde(skip)]
    pub r_check: Vec<Matrix>,
    /// `lambda_min(R + gamma^2 (Phi + Phi' - Delta))`.
    pub certificate: f64,
    /// `lambda_min(Rcheck_i - Upsilon_i' Upsilon_i)` per node.
    pub check_certificates: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ObserverLmi {
    pub r_bar: f64,
    #[serde(skip)]
    pub r_bar_blocks: Vec<Matrix>,
    /// `lambda_min(Rbar + gamma_bar^2 (Phi + Phi' - Delta) - P)`.
    pub certificate: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Parameter(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

pub fn solve_detector_lmi(
    inter: &InterconnectionMatrices,
    gamma: f64,
    upsilons: &[Matrix],
    margin: f64,
) -> Result<DetectorLmi> {
    check_positive("gamma", gamma)?;
    check_positive("margin", margin)?;
    if upsilons.len() != inter.node_count() {
        return Err(Error::dim("one Upsilon per node is required"));
    }
    let n = inter.n;
    let coupling = inter.coupling().scale(gamma * gamma);
    let r = (-lambda_min(&coupling)?).max(0.0) + margin;
    let big_r = Matrix::scaled_identity(coupling.rows(), r);
    let certificate = lambda_min(&(&big_r + &coupling))?;

    let mut r_check = Vec::with_capacity(upsilons.len());
    let mut check_certificates = Vec::with_capacity(upsilons.len());
    for u in upsilons {
        let utu = &u.transpose() * u;
        let rc = &utu + &Matrix::scaled_identity(utu.rows(), margin);
        check_certificates.push(lambda_min(&(&rc - &utu))?);
        r_check.push(rc);
    }
    Ok(DetectorLmi {
        r,
        r_blocks: vec![Matrix::scaled_identity(n, r); inter.node_count()],
        r_check,
        certificate,
        check_certificates,
    })
}

pub fn solve_observer_lmi(
    inter: &InterconnectionMatrices,
    gamma_bar: f64,
    p: &Matrix,
    margin: f64,
) -> Result<ObserverLmi> {
    check_positive("gamma_bar", gamma_bar)?;
    check_positive("margin", margin)?;
    let coupling = inter.coupling().scale(gamma_bar * gamma_bar);
    if p.shape() != coupling.shape() {
        return Err(Error::dim(format!(
            "P must be {0}x{0}, got {1}x{2}",
            coupling.rows(),
            p.rows(),
            p.cols()
        )));
    }
    if (p - &p.transpose()).max_abs() > 1e-12 * p.max_abs().max(1.0) || lambda_min(p)? < -1e-12 {
        return Err(Error::Parameter("P must be symmetric positive semidefinite".into()));
    }
    let r_bar = lambda_max(&(p - &coupling))?.max(0.0) + margin;
    let big = Matrix::scaled_identity(coupling.rows(), r_bar);
    let certificate = lambda_min(&(&(&big + &coupling) - p))?;
    Ok(ObserverLmi {
        r_bar,
        r_bar_blocks: vec![Matrix::scaled_identity(inter.n, r_bar); inter.node_count()],
        certificate,
    })
}

/// Coefficients of `Y' = A Y + Y A' - Y (C' E^{-1} C - gamma^{-2} R) Y + B B'`
/// at one time instant.
#[derive(Debug, Clone)]
pub struct RiccatiCoefficients {
    pub a: Matrix,
    pub b: Matrix,
    pub c: Matrix,
    pub e: Matrix,
}

/// Time-varying coefficients for one node. Implementations see only that
/// node's own data; no neighbor state crosses this interface.
pub trait LocalRiccati: Sync {
    fn coefficients(&self, t: f64) -> Result<RiccatiCoefficients>;
}

/// Column widths `(p_i, p_ij1, ..., p_ijq)` of the stacked output map of node `i`.
pub fn partition_widths(model: &PlantModel, topo: &Topology, i: usize) -> Vec<usize> {
    std::iter::once(model.nodes[i].output_dim())
        .chain(topo.edges(i).iter().map(|e| e.p()))
        .collect()
}

/// Node `i`'s extended detector-error system.
#[derive(Debug, Clone, Copy)]
pub struct DetectorSystem<'a> {
    model: &'a PlantModel,
    topo: &'a Topology,
    shaper: &'a AttackShaper,
    node: usize,
}

/// Per-node matrices of the extended detector-error system.
#[derive(Debug, Clone)]
pub struct DetectorMatrices {
    /// `[[A, -F Upsilon], [0, Omega]]`.
    pub a: Matrix,
    /// `[[B, F], [0, Gamma]]`.
    pub b: Matrix,
    /// `[C_i; W_ij1; ...; W_ijq]` padded with zero columns for the shaper state.
    pub c: Matrix,
    pub d: Matrix,
    /// `D D' = blockdiag(D_i D_i', U_ij1, ..., U_ijq)`.
    pub e: Matrix,
}

impl<'a> DetectorSystem<'a> {
    pub fn node(&self) -> usize {
        self.node
    }

    pub fn widths(&self) -> Vec<usize> {
        partition_widths(self.model, self.topo, self.node)
    }

    pub fn at(&self, t: f64) -> Result<DetectorMatrices> {
        let node = &self.model.nodes[self.node];
        let n = self.model.n();
        let nf = node.attack_dim();
        let a_t = self.model.a.at(t);
        let b_t = self.model.b.at(t);
        let m = b_t.cols();

        let mut a = Matrix::zeros(n + nf, n + nf);
        a.set_block(0, 0, a_t);
        a.set_block(0, n, &-&(&node.f * &self.shaper.upsilon));
        a.set_block(n, n, &self.shaper.omega);

        let mut b = Matrix::zeros(n + nf, m + nf);
        b.set_block(0, 0, b_t);
        b.set_block(0, m, &node.f);
        b.set_block(n, m, &self.shaper.gamma);

        let c1 = stacked_output(node.c.at(t), self.topo, self.node)?;
        let mut c = Matrix::zeros(c1.rows(), n + nf);
        c.set_block(0, 0, &c1);

        let d = stacked_noise_map(node.d.at(t), self.topo, self.node)?;
        let e = stacked_noise_covariance(node.d.at(t), self.topo, self.node);
        cholesky(&e).map_err(|err| match err {
            Error::NotPositiveDefinite { pivot, .. } => Error::NotPositiveDefinite {
                context: format!("E for node {} at t = {t}", self.node),
                pivot,
            },
            other => other,
        })?;
        Ok(DetectorMatrices { a, b, c, d, e })
    }
}

impl LocalRiccati for DetectorSystem<'_> {
    fn coefficients(&self, t: f64) -> Result<RiccatiCoefficients> {
        let m = self.at(t)?;
        Ok(RiccatiCoefficients {
            a: m.a,
            b: m.b,
            c: m.c,
            e: m.e,
        })
    }
}

pub fn assemble_detector_system<'a>(
    model: &'a PlantModel,
    topo: &'a Topology,
    shaper: &'a AttackShaper,
    node: usize,
) -> Result<DetectorSystem<'a>> {
    if node >= model.node_count() || node >= topo.node_count() {
        return Err(Error::dim(format!("node {node} does not exist")));
    }
    if shaper.dim() != model.nodes[node].attack_dim() {
        return Err(Error::dim(format!(
            "node {node}: shaper dimension {} differs from attack channel dimension {}",
            shaper.dim(),
            model.nodes[node].attack_dim()
        )));
    }
    Ok(DetectorSystem {
        model,
        topo,
        shaper,
        node,
    })
}

/// Node `i`'s controlled observer-error system.
#[derive(Debug, Clone, Copy)]
pub struct ObserverSystem<'a> {
    model: &'a PlantModel,
    topo: &'a Topology,
    node: usize,
}

impl<'a> ObserverSystem<'a> {
    pub fn new(model: &'a PlantModel, topo: &'a Topology, node: usize) -> Result<Self> {
        if node >= model.node_count() || node >= topo.node_count() {
            return Err(Error::dim(format!("node {node} does not exist")));
        }
        Ok(ObserverSystem { model, topo, node })
    }

    pub fn widths(&self) -> Vec<usize> {
        partition_widths(self.model, self.topo, self.node)
    }
}

impl LocalRiccati for ObserverSystem<'_> {
    fn coefficients(&self, t: f64) -> Result<RiccatiCoefficients> {
        let node = &self.model.nodes[self.node];
        let b = Matrix::hstack(&[self.model.b.at(t), &node.f])?;
        let c = stacked_output(node.c.at(t), self.topo, self.node)?;
        let e = stacked_noise_covariance(node.d.at(t), self.topo, self.node);
        Ok(RiccatiCoefficients {
            a: self.model.a.at(t).clone(),
            b,
            c,
            e,
        })
    }
}

fn stacked_output(c_i: &Matrix, topo: &Topology, i: usize) -> Result<Matrix> {
    let mut blocks = vec![c_i];
    blocks.extend(topo.edges(i).iter().map(|e| &e.w));
    Matrix::vstack(&blocks)
}

fn stacked_noise_covariance(d_i: &Matrix, topo: &Topology, i: usize) -> Matrix {
    let dd = d_i * &d_i.transpose();
    let us: Vec<Matrix> = topo.edges(i).iter().map(|e| e.u()).collect();
    let mut blocks = vec![&dd];
    blocks.extend(us.iter());
    Matrix::block_diag(&blocks)
}

fn stacked_noise_map(d_i: &Matrix, topo: &Topology, i: usize) -> Result<Matrix> {
    let edges = topo.edges(i);
    let rows = d_i.rows() + edges.iter().map(|e| e.p()).sum::<usize>();
    let noise_cols: usize = edges.iter().map(|e| e.noise_dim()).sum();
    let link_cols: usize = edges.iter().map(|e| e.p()).sum();
    let mut d = Matrix::zeros(rows, d_i.cols() + noise_cols + link_cols);
    d.set_block(0, 0, d_i);
    let mut r = d_i.rows();
    let mut c_noise = d_i.cols();
    let mut c_link = d_i.cols() + noise_cols;
    for e in edges {
        d.set_block(r, c_noise, &e.h);
        d.set_block(r, c_link, &sqrt_psd(&e.z)?);
        r += e.p();
        c_noise += e.noise_dim();
        c_link += e.p();
    }
    Ok(d)
}

/// Inputs of one node's detector Riccati equation.
pub struct DetectorDesignInputs<'a> {
    pub gamma: f64,
    /// `blockdiag(R_i, Rcheck_i)`.
    pub weight: Matrix,
    /// `blockdiag(X_i, Xcheck_i)`; the equation starts from its inverse.
    pub initial_weight: Matrix,
    pub system: DetectorSystem<'a>,
    pub bound_cap_factor: f64,
}

/// Inputs of one node's observer Riccati equation.
pub struct ObserverDesignInputs<'a> {
    pub gamma_bar: f64,
    /// `Rbar_i`.
    pub weight: Matrix,
    /// `Xbar_i`.
    pub initial_weight: Matrix,
    pub system: ObserverSystem<'a>,
    pub bound_cap_factor: f64,
}

#[derive(Debug, Clone)]
pub struct RiccatiTrajectory {
    pub values: Vec<Matrix>,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub bound_cap: f64,
    /// `||Y'||_F` at the final grid point.
    pub final_derivative_norm: f64,
}

impl RiccatiTrajectory {
    pub fn stationary(&self) -> bool {
        self.final_derivative_norm < STATIONARY_TOL
    }
}

/// Why a Riccati trajectory was rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiFailure {
    pub t: f64,
    pub reason: String,
}

/// Right-hand side of the Riccati equation; `weight_scaled = gamma^{-2} R`.
pub fn riccati_rhs(coef: &RiccatiCoefficients, weight_scaled: &Matrix, y: &Matrix) -> Result<Matrix> {
    let einv_c = solve_spd(&coef.e, &coef.c)?;
    let s = &coef.c.transpose() * &einv_c;
    let ay = &coef.a * y;
    let mid = &s - weight_scaled;
    let quad = &(y * &mid) * y;
    let bb = &coef.b * &coef.b.transpose();
    Ok(&(&(&ay + &ay.transpose()) - &quad) + &bb)
}

/// RK4 integration of the Riccati equation on `grid`, symmetrizing after
/// every step and rejecting the trajectory as soon as it leaves
/// `0 < Y < bound_cap`.
pub fn integrate_riccati(
    system: &dyn LocalRiccati,
    weight: &Matrix,
    gamma: f64,
    y0: &Matrix,
    grid: TimeGrid,
    bound_cap_factor: f64,
) -> Result<std::result::Result<RiccatiTrajectory, RiccatiFailure>> {
    check_positive("gamma", gamma)?;
    let weight_scaled = weight.scale(1.0 / (gamma * gamma));
    let y0 = y0.symmetrize();
    let first = sym_eig(&y0)?;
    if first.min() < -1e-12 * first.max().abs().max(1.0) {
        return Err(Error::NotPositiveDefinite {
            context: "initial Riccati value".into(),
            pivot: 0,
        });
    }
    // A zero initial value has no scale of its own; fall back to the bare factor.
    let bound_cap = if first.max() > 0.0 {
        bound_cap_factor * first.max()
    } else {
        bound_cap_factor
    };
    let mut values = Vec::with_capacity(grid.len());
    let mut lmin = first.min();
    let mut lmax = first.max();
    values.push(y0.clone());
    let mut y = y0;
    for k in 0..grid.steps {
        let t = grid.t(k);
        let step = rk4_step(
            |s, yy| riccati_rhs(&system.coefficients(s)?, &weight_scaled, yy),
            t,
            &y,
            grid.step,
        );
        let next = match step {
            Ok(v) => v.symmetrize(),
            Err(Error::Integration { t, reason }) => return Ok(Err(RiccatiFailure { t, reason })),
            Err(other) => return Err(other),
        };
        let t1 = grid.t(k + 1);
        if !next.is_finite() {
            return Ok(Err(RiccatiFailure {
                t: t1,
                reason: "non-finite solution".into(),
            }));
        }
        let eig = sym_eig(&next)?;
        if !(eig.min() > 0.0) {
            return Ok(Err(RiccatiFailure {
                t: t1,
                reason: format!("lost positive definiteness (lambda_min = {:.3e})", eig.min()),
            }));
        }
        if !(eig.max() < bound_cap) {
            return Ok(Err(RiccatiFailure {
                t: t1,
                reason: format!(
                    "no bounded solution (lambda_max = {:.3e} >= {bound_cap:.3e})",
                    eig.max()
                ),
            }));
        }
        lmin = lmin.min(eig.min());
        lmax = lmax.max(eig.max());
        values.push(next.clone());
        y = next;
    }
    let last_coef = system.coefficients(grid.horizon())?;
    let final_derivative_norm = riccati_rhs(&last_coef, &weight_scaled, &y)?.frobenius_norm();
    Ok(Ok(RiccatiTrajectory {
        values,
        lambda_min: lmin,
        lambda_max: lmax,
        bound_cap,
        final_derivative_norm,
    }))
}

fn infeasible(stage: &'static str, node: usize, gamma: f64, f: RiccatiFailure) -> Error {
    Error::Infeasible {
        stage,
        node,
        t: f.t,
        gamma,
        reason: f.reason,
    }
}

pub fn integrate_detector_riccati(inputs: &DetectorDesignInputs<'_>, grid: TimeGrid) -> Result<RiccatiTrajectory> {
    let y0 = inverse_spd(&inputs.initial_weight)?;
    integrate_riccati(
        &inputs.system,
        &inputs.weight,
        inputs.gamma,
        &y0,
        grid,
        inputs.bound_cap_factor,
    )?
    .map_err(|f| infeasible("detector", inputs.system.node, inputs.gamma, f))
}

pub fn integrate_observer_riccati(inputs: &ObserverDesignInputs<'_>, grid: TimeGrid) -> Result<RiccatiTrajectory> {
    let y0 = inverse_spd(&inputs.initial_weight)?;
    integrate_riccati(
        &inputs.system,
        &inputs.weight,
        inputs.gamma_bar,
        &y0,
        grid,
        inputs.bound_cap_factor,
    )?
    .map_err(|f| infeasible("observer", inputs.system.node, inputs.gamma_bar, f))
}

fn split_columns(m: &Matrix, widths: &[usize]) -> Result<Vec<Matrix>> {
    if widths.iter().sum::<usize>() != m.cols() {
        return Err(Error::dim(format!(
            "partition widths {widths:?} do not cover {} columns",
            m.cols()
        )));
    }
    let mut out = Vec::with_capacity(widths.len());
    let mut c = 0;
    for &w in widths {
        out.push(m.block(0, c, m.rows(), w));
        c += w;
    }
    Ok(out)
}

/// `Y C' E^{-1}`, computed as `(E^{-1} C Y)'` for symmetric `Y`.
fn filter_gain(y: &Matrix, c: &Matrix, e: &Matrix) -> Result<Matrix> {
    let cy = c.matmul(y)?;
    Ok(solve_spd(e, &cy)?.transpose())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorGains {
    pub l_hat: Matrix,
    pub k_hat: Vec<Matrix>,
    pub l_check: Matrix,
    pub k_check: Vec<Matrix>,
}

/// Splits `Y C' E^{-1}` into the top `n` rows `[Lhat | Khat_ij...]` and the
/// bottom rows `[Lcheck | Kcheck_ij...]`.
pub fn extract_detector_gains(y: &Matrix, c: &Matrix, e: &Matrix, widths: &[usize], n: usize) -> Result<DetectorGains> {
    let gain = filter_gain(y, c, e)?;
    if n > gain.rows() {
        return Err(Error::dim("state dimension exceeds the gain height"));
    }
    let top = split_columns(&gain.block(0, 0, n, gain.cols()), widths)?;
    let bottom = split_columns(&gain.block(n, 0, gain.rows() - n, gain.cols()), widths)?;
    let mut top = top.into_iter();
    let mut bottom = bottom.into_iter();
    Ok(DetectorGains {
        l_hat: top.next().expect("width list starts with p_i"),
        k_hat: top.collect(),
        l_check: bottom.next().expect("width list starts with p_i"),
        k_check: bottom.collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObserverGains {
    pub l: Matrix,
    pub k: Vec<Matrix>,
}

pub fn extract_observer_gains(y: &Matrix, c1: &Matrix, e: &Matrix, widths: &[usize]) -> Result<ObserverGains> {
    let gain = filter_gain(y, c1, e)?;
    let mut parts = split_columns(&gain, widths)?.into_iter();
    Ok(ObserverGains {
        l: parts.next().expect("width list starts with p_i"),
        k: parts.collect(),
    })
}

/// `Lbar = Lhat - L`, `Kbar_ij = Khat_ij - K_ij`.
pub fn compute_bar_gains(l_hat: &Matrix, k_hat: &[Matrix], l: &Matrix, k: &[Matrix]) -> Result<(Matrix, Vec<Matrix>)> {
    if k_hat.len() != k.len() {
        return Err(Error::dim("neighbor gain lists differ in length"));
    }
    let l_bar = l_hat.try_sub(l)?;
    let k_bar = k_hat
        .iter()
        .zip(k)
        .map(|(a, b)| a.try_sub(b))
        .collect::<Result<Vec<_>>>()?;
    Ok((l_bar, k_bar))
}

/// Every gain of one node at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeGains {
    pub l: Matrix,
    pub k: Vec<Matrix>,
    pub l_hat: Matrix,
    pub k_hat: Vec<Matrix>,
    pub l_check: Matrix,
    pub k_check: Vec<Matrix>,
    pub l_bar: Matrix,
    pub k_bar: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub struct NodeDesign {
    pub node: usize,
    pub detector: RiccatiTrajectory,
    pub observer: RiccatiTrajectory,
    /// Indexed by grid point.
    pub gains: Vec<NodeGains>,
}

/// Initial-condition weights of one node.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialWeights {
    /// `X_i`, `n x n`.
    pub x: Matrix,
    /// `Xcheck_i`, `n_fi x n_fi`.
    pub x_check: Matrix,
    /// `Xbar_i`, `n x n`.
    pub x_bar: Matrix,
}

impl InitialWeights {
    pub fn identity(n: usize, n_fi: usize) -> Self {
        InitialWeights {
            x: Matrix::identity(n),
            x_check: Matrix::identity(n_fi),
            x_bar: Matrix::identity(n),
        }
    }
}

#[derive(Debug, Clone)]
pub struct DesignParams {
    pub gamma: f64,
    pub gamma_bar: f64,
    /// `nN x nN` performance weight.
    pub p: Matrix,
    pub margin: f64,
    pub grid: TimeGrid,
    pub bound_cap_factor: f64,
    pub weights: Vec<InitialWeights>,
    /// Optional `Z_ij` used only by the observer step.
    pub observer_z: Option<Vec<Vec<Matrix>>>,
}

#[derive(Debug, Clone)]
pub struct DesignArtifacts {
    pub grid: TimeGrid,
    pub gamma: f64,
    pub gamma_bar: f64,
    pub margin: f64,
    pub p: Matrix,
    pub detector_lmi: DetectorLmi,
    pub observer_lmi: ObserverLmi,
    pub weights: Vec<InitialWeights>,
    pub nodes: Vec<NodeDesign>,
    pub shapers: Vec<AttackShaper>,
    /// Topology used by the observer step (differs when `observer_z` is set).
    pub observer_topology: Topology,
}

impl DesignArtifacts {
    pub fn gains(&self, node: usize, k: usize) -> &NodeGains {
        &self.nodes[node].gains[k.min(self.grid.steps)]
    }

    pub fn report(&self) -> DesignReport {
        DesignReport {
            schema: 1,
            gamma: self.gamma,
            gamma_bar: self.gamma_bar,
            margin: self.margin,
            grid: GridReport {
                step: self.grid.step,
                steps: self.grid.steps,
                horizon: self.grid.horizon(),
            },
            detector_lmi: self.detector_lmi.clone(),
            observer_lmi: self.observer_lmi.clone(),
            nodes: self
                .nodes
                .iter()
                .map(|nd| NodeReport {
                    node: nd.node,
                    detector: RiccatiReport::from(&nd.detector),
                    observer: RiccatiReport::from(&nd.observer),
                })
                .collect(),
            gamma_min: None,
            gamma_bar_min: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignReport {
    pub schema: u32,
    pub gamma: f64,
    pub gamma_bar: f64,
    pub margin: f64,
    pub grid: GridReport,
    pub detector_lmi: DetectorLmi,
    pub observer_lmi: ObserverLmi,
    pub nodes: Vec<NodeReport>,
    /// Smallest feasible levels, present when a search was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_min: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_bar_min: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct GridReport {
    pub step: f64,
    pub steps: usize,
    pub horizon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeReport {
    pub node: usize,
    pub detector: RiccatiReport,
    pub observer: RiccatiReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct RiccatiReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub bound_cap: f64,
    pub final_derivative_norm: f64,
    pub stationary: bool,
}

impl From<&RiccatiTrajectory> for RiccatiReport {
    fn from(t: &RiccatiTrajectory) -> Self {
        RiccatiReport {
            lambda_min: t.lambda_min,
            lambda_max: t.lambda_max,
            bound_cap: t.bound_cap,
            final_derivative_norm: t.final_derivative_norm,
            stationary: t.stationary(),
        }
    }
}

struct CentralSetup {
    detector_lmi: DetectorLmi,
    observer_lmi: ObserverLmi,
    observer_topology: Topology,
}

fn check_inputs(model: &PlantModel, topo: &Topology, shapers: &[AttackShaper], params: &DesignParams) -> Result<()> {
    let n_nodes = model.node_count();
    if topo.node_count() != n_nodes || shapers.len() != n_nodes || params.weights.len() != n_nodes {
        return Err(Error::dim(
            "plant, topology, shapers and initial weights must all describe the same number of nodes",
        ));
    }
    if topo.state_dim() != model.n() {
        return Err(Error::dim("topology and plant disagree on the state dimension"));
    }
    let n = model.n();
    for (i, w) in params.weights.iter().enumerate() {
        let nf = model.nodes[i].attack_dim();
        if w.x.shape() != (n, n) || w.x_bar.shape() != (n, n) || w.x_check.shape() != (nf, nf) {
            return Err(Error::dim(format!("node {i}: initial weight shapes are inconsistent")));
        }
    }
    check_positive("bound_cap_factor", params.bound_cap_factor)?;
    Ok(())
}

fn central_setup(topo: &Topology, shapers: &[AttackShaper], params: &DesignParams) -> Result<CentralSetup> {
    let inter = build_interconnection(topo)?;
    let upsilons: Vec<Matrix> = shapers.iter().map(|s| s.upsilon.clone()).collect();
    let detector_lmi = solve_detector_lmi(&inter, params.gamma, &upsilons, params.margin)?;
    let observer_topology = match &params.observer_z {
        Some(z) => topo.with_weights(z)?,
        None => topo.clone(),
    };
    let obs_inter = if params.observer_z.is_some() {
        build_interconnection(&observer_topology)?
    } else {
        inter
    };
    let observer_lmi = solve_observer_lmi(&obs_inter, params.gamma_bar, &params.p, params.margin)?;
    Ok(CentralSetup {
        detector_lmi,
        observer_lmi,
        observer_topology,
    })
}

fn detector_inputs<'a>(
    model: &'a PlantModel,
    topo: &'a Topology,
    shapers: &'a [AttackShaper],
    lmi: &DetectorLmi,
    params: &DesignParams,
    i: usize,
) -> Result<DetectorDesignInputs<'a>> {
    let w = &params.weights[i];
    Ok(DetectorDesignInputs {
        gamma: params.gamma,
        weight: Matrix::block_diag(&[&lmi.r_blocks[i], &lmi.r_check[i]]),
        initial_weight: Matrix::block_diag(&[&w.x, &w.x_check]),
        system: assemble_detector_system(model, topo, &shapers[i], i)?,
        bound_cap_factor: params.bound_cap_factor,
    })
}

fn observer_inputs<'a>(
    model: &'a PlantModel,
    obs_topo: &'a Topology,
    lmi: &ObserverLmi,
    params: &DesignParams,
    i: usize,
) -> Result<ObserverDesignInputs<'a>> {
    Ok(ObserverDesignInputs {
        gamma_bar: params.gamma_bar,
        weight: lmi.r_bar_blocks[i].clone(),
        initial_weight: params.weights[i].x_bar.clone(),
        system: ObserverSystem::new(model, obs_topo, i)?,
        bound_cap_factor: params.bound_cap_factor,
    })
}

fn design_node(
    det: &DetectorDesignInputs<'_>,
    obs: &ObserverDesignInputs<'_>,
    grid: TimeGrid,
    n: usize,
) -> Result<NodeDesign> {
    let detector = integrate_detector_riccati(det, grid)?;
    let observer = integrate_observer_riccati(obs, grid)?;
    let det_widths = det.system.widths();
    let obs_widths = obs.system.widths();
    let mut gains = Vec::with_capacity(grid.len());
    for k in 0..grid.len() {
        let t = grid.t(k);
        let dm = det.system.at(t)?;
        let dg = extract_detector_gains(&detector.values[k], &dm.c, &dm.e, &det_widths, n)?;
        let oc = obs.system.coefficients(t)?;
        let og = extract_observer_gains(&observer.values[k], &oc.c, &oc.e, &obs_widths)?;
        let (l_bar, k_bar) = compute_bar_gains(&dg.l_hat, &dg.k_hat, &og.l, &og.k)?;
        gains.push(NodeGains {
            l: og.l,
            k: og.k,
            l_hat: dg.l_hat,
            k_hat: dg.k_hat,
            l_check: dg.l_check,
            k_check: dg.k_check,
            l_bar,
            k_bar,
        });
    }
    Ok(NodeDesign {
        node: det.system.node,
        detector,
        observer,
        gains,
    })
}

/// Full three-step design. The LMI pre-pass runs first; the per-node Riccati
/// integrations then run concurrently, one worker per node.
pub fn design(
    model: &PlantModel,
    topo: &Topology,
    shapers: &[AttackShaper],
    params: &DesignParams,
) -> Result<DesignArtifacts> {
    check_inputs(model, topo, shapers, params)?;
    let setup = central_setup(topo, shapers, params)?;
    let n = model.n();
    let n_nodes = model.node_count();

    let mut inputs = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let det = detector_inputs(model, topo, shapers, &setup.detector_lmi, params, i)?;
        let obs = observer_inputs(model, &setup.observer_topology, &setup.observer_lmi, params, i)?;
        inputs.push((det, obs));
    }

    let grid = params.grid;
    let results: Vec<Result<NodeDesign>> = std::thread::scope(|scope| {
        let handles: Vec<_> = inputs
            .iter()
            .map(|(det, obs)| scope.spawn(move || design_node(det, obs, grid, n)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("design worker panicked"))
            .collect()
    });
    let nodes = results.into_iter().collect::<Result<Vec<_>>>()?;

    Ok(DesignArtifacts {
        grid,
        gamma: params.gamma,
        gamma_bar: params.gamma_bar,
        margin: params.margin,
        p: params.p.clone(),
        detector_lmi: setup.detector_lmi,
        observer_lmi: setup.observer_lmi,
        weights: params.weights.clone(),
        nodes,
        shapers: shapers.to_vec(),
        observer_topology: setup.observer_topology,
    })
}

/// Which attenuation level a bisection search targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DesignStep {
    Detector,
    Observer,
}

fn step_feasible(
    model: &PlantModel,
    topo: &Topology,
    shapers: &[AttackShaper],
    params: &DesignParams,
    which: DesignStep,
) -> Result<bool> {
    let setup = central_setup(topo, shapers, params)?;
    for i in 0..model.node_count() {
        let outcome = match which {
            DesignStep::Detector => {
                let det = detector_inputs(model, topo, shapers, &setup.detector_lmi, params, i)?;
                integrate_detector_riccati(&det, params.grid)
            }
            DesignStep::Observer => {
                let obs = observer_inputs(model, &setup.observer_topology, &setup.observer_lmi, params, i)?;
                integrate_observer_riccati(&obs, params.grid)
            }
        };
        match outcome {
            Ok(_) => {}
            Err(Error::Infeasible { .. }) => return Ok(false),
            Err(e) => return Err(e),
        }
    }
    Ok(true)
}

/// Smallest feasible `gamma` (or `gamma_bar`) found by factor-2 bracketing
/// from the value in `params` followed by 20 bisection iterations.
pub fn search_min_gamma(
    model: &PlantModel,
    topo: &Topology,
    shapers: &[AttackShaper],
    params: &DesignParams,
    which: DesignStep,
) -> Result<f64> {
    check_inputs(model, topo, shapers, params)?;
    let with = |g: f64| {
        let mut p = params.clone();
        match which {
            DesignStep::Detector => p.gamma = g,
            DesignStep::Observer => p.gamma_bar = g,
        }
        step_feasible(model, topo, shapers, &p, which)
    };
    let start = match which {
        DesignStep::Detector => params.gamma,
        DesignStep::Observer => params.gamma_bar,
    };
    check_positive("gamma", start)?;
    const MAX_BRACKET: usize = 40;
    let (mut lo, mut hi);
    if with(start)? {
        hi = start;
        lo = start / 2.0;
        let mut tries = 0;
        while with(lo)? {
            hi = lo;
            lo /= 2.0;
            tries += 1;
            if tries > MAX_BRACKET {
                return Ok(hi);
            }
        }
    } else {
        lo = start;
        hi = start * 2.0;
        let mut tries = 0;
        while !with(hi)? {
            lo = hi;
            hi *= 2.0;
            tries += 1;
            if tries > MAX_BRACKET {
                return Err(Error::Infeasible {
                    stage: match which {
                        DesignStep::Detector => "detector",
                        DesignStep::Observer => "observer",
                    },
                    node: 0,
                    t: 0.0,
                    gamma: hi,
                    reason: "no feasible attenuation level found while bracketing".into(),
                });
            }
        }
    }
    for _ in 0..20 {
        let mid = 0.5 * (lo + hi);
        if with(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attack::make_shaper;
    use crate::network::{tests_support::two_node_scalar, Edge};
    use crate::plant::{NodeModel, Schedule};

    fn s(v: f64) -> Matrix {
        Matrix::column(&[v])
    }

    struct Scalar {
        a: f64,
        b: f64,
        c: f64,
        e: f64,
    }

    impl LocalRiccati for Scalar {
        fn coefficients(&self, _t: f64) -> Result<RiccatiCoefficients> {
            Ok(RiccatiCoefficients {
                a: s(self.a),
                b: s(self.b),
                c: s(self.c),
                e: s(self.e),
            })
        }
    }

    fn scalar_model(a: f64, f: f64, nodes: usize) -> PlantModel {
        PlantModel::new(
            s(a).into(),
            s(1.0).into(),
            (0..nodes)
                .map(|_| NodeModel {
                    c: s(1.0).into(),
                    d: s(1.0).into(),
                    f: s(f),
                })
                .collect(),
            vec![1.0],
        )
        .unwrap()
    }

    #[test]
    fn detector_lmi_zero_interconnection() {
        let topo = Topology::new(1, vec![vec![]]).unwrap();
        let inter = build_interconnection(&topo).unwrap();
        let lmi = solve_detector_lmi(&inter, 1.0, &[Matrix::identity(1)], 0.01).unwrap();
        assert_eq!(lmi.r, 0.01);
        assert!((lmi.certificate - 0.01).abs() < 1e-15);
    }

    #[test]
    fn detector_lmi_two_node() {
        let inter = build_interconnection(&two_node_scalar()).unwrap();
        let lmi = solve_detector_lmi(&inter, 1.0, &[s(1.0), s(1.0)], 0.01).unwrap();
        assert!((lmi.r - 0.76).abs() < 1e-12);
        assert!((lmi.certificate - 0.01).abs() < 1e-12);
    }

    #[test]
    fn detector_lmi_check_weight() {
        let topo = Topology::new(1, vec![vec![]]).unwrap();
        let inter = build_interconnection(&topo).unwrap();
        let lmi = solve_detector_lmi(&inter, 1.0, &[Matrix::identity(2)], 0.01).unwrap();
        assert!((&lmi.r_check[0] - &Matrix::scaled_identity(2, 1.01)).max_abs() < 1e-15);
        assert!(lmi.check_certificates[0] > 0.0);
    }

    #[test]
    fn observer_lmi_cases() {
        let topo = Topology::new(1, vec![vec![]]).unwrap();
        let inter = build_interconnection(&topo).unwrap();
        let lmi = solve_observer_lmi(&inter, 2.0, &Matrix::zeros(1, 1), 0.01).unwrap();
        assert_eq!(lmi.r_bar, 0.01);
        let lmi = solve_observer_lmi(&inter, 7.0, &Matrix::identity(1), 0.01).unwrap();
        assert!((lmi.r_bar - 1.01).abs() < 1e-15);

        let inter = build_interconnection(&two_node_scalar()).unwrap();
        let lmi = solve_observer_lmi(&inter, 1.0, &Matrix::identity(2), 0.01).unwrap();
        assert!((lmi.r_bar - 1.76).abs() < 1e-12);
        assert!((lmi.certificate - 0.01).abs() < 1e-12);
    }

    #[test]
    fn lmi_rejects_bad_inputs() {
        let topo = Topology::new(1, vec![vec![]]).unwrap();
        let inter = build_interconnection(&topo).unwrap();
        assert!(solve_detector_lmi(&inter, 0.0, &[s(1.0)], 0.01).is_err());
        assert!(solve_observer_lmi(&inter, 1.0, &s(-1.0), 0.01).is_err());
        assert!(solve_observer_lmi(&inter, 1.0, &Matrix::identity(2), 0.01).is_err());
    }

    #[test]
    fn detector_block_placement() {
        let model = scalar_model(-0.7, 2.0, 2);
        let topo = two_node_scalar();
        let shaper = make_shaper(1, 1.0).unwrap();
        let sys = assemble_detector_system(&model, &topo, &shaper, 0).unwrap();
        let m = sys.at(0.0).unwrap();
        assert_eq!(m.a, Matrix::from_rows(&[vec![-0.7, -2.0], vec![0.0, 0.0]]).unwrap());
        assert_eq!(m.b, Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, -1.0]]).unwrap());
        assert_eq!(m.c, Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap());
        assert_eq!(m.e, Matrix::diag(&[1.0, 2.0]));
        assert!((&(&m.d * &m.d.transpose()) - &m.e).max_abs() < 1e-15);
    }

    #[test]
    fn detector_without_neighbors() {
        let model = scalar_model(0.0, 1.0, 1);
        let topo = Topology::new(1, vec![vec![]]).unwrap();
        let shaper = make_shaper(1, 1.0).unwrap();
        let m = assemble_detector_system(&model, &topo, &shaper, 0)
            .unwrap()
            .at(0.0)
            .unwrap();
        assert_eq!(m.c, Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap());
        assert_eq!(m.e, s(1.0));
    }

    #[test]
    fn observer_input_map() {
        let model = PlantModel::new(
            s(0.0).into(),
            s(1.0).into(),
            vec![NodeModel {
                c: s(1.0).into(),
                d: s(1.0).into(),
                f: s(2.0),
            }],
            vec![0.0],
        )
        .unwrap();
        let topo = Topology::new(1, vec![vec![]]).unwrap();
        let c = ObserverSystem::new(&model, &topo, 0)
            .unwrap()
            .coefficients(0.0)
            .unwrap();
        assert_eq!(&c.b * &c.b.transpose(), s(5.0));
    }

    fn integrate_scalar(y0: f64, step: f64, horizon: f64) -> RiccatiTrajectory {
        let sys = Scalar {
            a: 0.0,
            b: 1.0,
            c: 1.0,
            e: 1.0,
        };
        let grid = TimeGrid::new(step, horizon).unwrap();
        integrate_riccati(&sys, &s(0.0), 1.0, &s(y0), grid, 1e6)
            .unwrap()
            .unwrap()
    }

    #[test]
    fn scalar_stationary_point() {
        let tr = integrate_scalar(1.0, 1e-3, 2.0);
        assert!(tr.values.iter().all(|y| (y[(0, 0)] - 1.0).abs() < 1e-15));
        assert!(tr.stationary());
    }

    #[test]
    fn scalar_tanh_from_zero() {
        let tr = integrate_scalar(0.0, 0.01, 1.0);
        assert_eq!(tr.values.len(), 101);
        assert!((tr.values[100][(0, 0)] - 1f64.tanh()).abs() < 1e-6);
        let fine = integrate_scalar(0.0, 1e-3, 1.0);
        assert!((fine.values[1000][(0, 0)] - 1f64.tanh()).abs() < 1e-8);
    }

    #[test]
    fn finite_difference_residual() {
        let sys = Scalar {
            a: -0.5,
            b: 0.6,
            c: 1.0,
            e: 1.0,
        };
        let weight = s(0.2);
        let gamma = 2.0;
        let h = 1e-3;
        let grid = TimeGrid::new(h, 3.0).unwrap();
        let tr = integrate_riccati(&sys, &weight, gamma, &s(0.5), grid, 1e6)
            .unwrap()
            .unwrap();
        let scaled = weight.scale(1.0 / (gamma * gamma));
        let mut worst: f64 = 0.0;
        for k in 1..grid.steps {
            let fd = (&tr.values[k + 1] - &tr.values[k - 1]).scale(0.5 / h);
            let rhs = riccati_rhs(&sys.coefficients(0.0).unwrap(), &scaled, &tr.values[k]).unwrap();
            worst = worst.max((&fd - &rhs).max_abs());
        }
        assert!(worst < 1e-4, "residual {worst}");
    }

    #[test]
    fn blowup_is_reported_as_infeasible() {
        // Unobserved weight term dominates: Y' = Y^2 (gamma^{-2} R) + 1 escapes in finite time.
        let sys = Scalar {
            a: 0.0,
            b: 1.0,
            c: 0.0,
            e: 1.0,
        };
        let grid = TimeGrid::new(1e-3, 5.0).unwrap();
        let out = integrate_riccati(&sys, &s(1.0), 1.0, &s(1.0), grid, 1e6).unwrap();
        let fail = out.unwrap_err();
        assert!(fail.t < 5.0 && fail.reason.contains("bounded"), "{fail:?}");
    }

    #[test]
    fn detector_gain_partition() {
        let y = Matrix::diag(&[2.0, 3.0]);
        let c = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let g = extract_detector_gains(&y, &c, &s(1.0), &[1], 1).unwrap();
        assert_eq!(g.l_hat, s(2.0));
        assert_eq!(g.l_check, s(0.0));
        assert!(g.k_hat.is_empty());

        let z = extract_detector_gains(&Matrix::zeros(2, 2), &c, &s(1.0), &[1], 1).unwrap();
        assert_eq!(z.l_hat.max_abs() + z.l_check.max_abs(), 0.0);
    }

    #[test]
    fn detector_gain_widths() {
        // n = 1, n_f = 1, p_i = 2, one neighbor with p_ij = 3.
        let c = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.5, 0.0],
            vec![1.0, 0.0],
            vec![0.0, 0.0],
            vec![2.0, 0.0],
        ])
        .unwrap();
        let e = Matrix::identity(5);
        let g = extract_detector_gains(&Matrix::identity(2), &c, &e, &[2, 3], 1).unwrap();
        assert_eq!(g.l_hat.shape(), (1, 2));
        assert_eq!(g.k_hat[0].shape(), (1, 3));
        assert_eq!(g.k_check[0].shape(), (1, 3));
    }

    #[test]
    fn observer_gain_cases() {
        let g = extract_observer_gains(&Matrix::identity(2), &Matrix::identity(2), &Matrix::identity(2), &[2]).unwrap();
        assert_eq!(g.l, Matrix::identity(2));
        assert!(g.k.is_empty());
        let g = extract_observer_gains(&s(2.0), &s(3.0), &s(9.0), &[1]).unwrap();
        assert!((g.l[(0, 0)] - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn bar_gain_cases() {
        let (lb, _) = compute_bar_gains(&s(2.0), &[], &s(2.0), &[]).unwrap();
        assert_eq!(lb, s(0.0));
        let (lb, kb) = compute_bar_gains(&s(2.0), &[s(1.0)], &s(0.5), &[s(0.25)]).unwrap();
        assert_eq!(lb, s(1.5));
        assert_eq!(kb[0], s(0.75));
        assert!(compute_bar_gains(&s(2.0), &[s(1.0)], &s(0.5), &[]).is_err());
        assert!(compute_bar_gains(&s(2.0), &[], &Matrix::zeros(1, 2), &[]).is_err());
    }

    fn two_node_design(gamma: f64) -> Result<DesignArtifacts> {
        let model = scalar_model(-1.0, 1.0, 2);
        let topo = two_node_scalar();
        let shapers = vec![make_shaper(1, 1.0).unwrap(); 2];
        let params = DesignParams {
            gamma,
            gamma_bar: 3.0,
            p: Matrix::identity(2),
            margin: DEFAULT_MARGIN,
            grid: TimeGrid::new(1e-3, 2.0).unwrap(),
            bound_cap_factor: DEFAULT_BOUND_CAP_FACTOR,
            weights: vec![InitialWeights::identity(1, 1); 2],
            observer_z: None,
        };
        design(&model, &topo, &shapers, &params)
    }

    #[test]
    fn full_design_gain_identity_and_symmetry() {
        let art = two_node_design(4.0).unwrap();
        assert_eq!(art.nodes.len(), 2);
        for nd in &art.nodes {
            assert_eq!(nd.gains.len(), art.grid.len());
            for g in &nd.gains {
                let recon = &g.l + &g.l_bar;
                let tol = 4.0 * f64::EPSILON * g.l_hat.max_abs().max(g.l.max_abs());
                assert!((&recon - &g.l_hat).max_abs() <= tol);
            }
            for y in nd.detector.values.iter().chain(&nd.observer.values) {
                assert!((y - &y.transpose()).frobenius_norm() <= 1e-10 * y.frobenius_norm());
            }
        }
    }

    #[test]
    fn tiny_gamma_is_infeasible() {
        match two_node_design(1e-6) {
            Err(Error::Infeasible { stage, .. }) => assert_eq!(stage, "detector"),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn feasibility_is_monotone_in_gamma() {
        let model = scalar_model(-1.0, 1.0, 2);
        let topo = two_node_scalar();
        let shapers = vec![make_shaper(1, 1.0).unwrap(); 2];
        let params = DesignParams {
            gamma: 4.0,
            gamma_bar: 3.0,
            p: Matrix::identity(2),
            margin: DEFAULT_MARGIN,
            grid: TimeGrid::new(1e-2, 5.0).unwrap(),
            bound_cap_factor: DEFAULT_BOUND_CAP_FACTOR,
            weights: vec![InitialWeights::identity(1, 1); 2],
            observer_z: None,
        };
        let g_min = search_min_gamma(&model, &topo, &shapers, &params, DesignStep::Detector).unwrap();
        let feasible = |g: f64| {
            let mut p = params.clone();
            p.gamma = g;
            step_feasible(&model, &topo, &shapers, &p, DesignStep::Detector).unwrap()
        };
        assert!(feasible(g_min));
        for factor in [1.1, 1.5, 3.0, 10.0] {
            assert!(feasible(g_min * factor), "gamma {}", g_min * factor);
        }
        assert!(!feasible(g_min * 0.9));
    }

    #[test]
    fn observer_weight_override_changes_observer_topology_only() {
        let model = scalar_model(-1.0, 1.0, 2);
        let topo = two_node_scalar();
        let shapers = vec![make_shaper(1, 1.0).unwrap(); 2];
        let params = DesignParams {
            gamma: 4.0,
            gamma_bar: 3.0,
            p: Matrix::identity(2),
            margin: DEFAULT_MARGIN,
            grid: TimeGrid::new(1e-2, 1.0).unwrap(),
            bound_cap_factor: DEFAULT_BOUND_CAP_FACTOR,
            weights: vec![InitialWeights::identity(1, 1); 2],
            observer_z: Some(vec![vec![s(3.0)], vec![s(3.0)]]),
        };
        let art = design(&model, &topo, &shapers, &params).unwrap();
        assert_eq!(art.observer_topology.edges(0)[0].z, s(3.0));
        let _ = Edge::u(&art.observer_topology.edges(0)[0]);
        let _ = Schedule::Constant(s(0.0));
    }
}
