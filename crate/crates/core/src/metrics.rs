//! Checks of the performance guarantees against simulated traces.
//!
//! Integrals use the trapezoid rule on the simulation grid. Every bound is
//! declared satisfied when `lhs <= (1 + BOUND_SLACK) rhs`, since the bounds
//! hold exactly only in continuous time.

use serde::Serialize;

use crate::designer::DesignArtifacts;
use crate::error::{Error, Result};
use crate::matlin::{inverse_spd, Matrix};
use crate::network::Topology;
use crate::plant::PlantModel;
use crate::simulator::{OracleTrace, Series, SimTrace};

pub const BOUND_SLACK: f64 = 0.01;
pub const DETECTION_FACTOR: f64 = 5.0;
pub const DETECTION_FLOOR: f64 = 1e-9;
pub const DETECTION_DWELL: usize = 10;
/// Leading share of the horizon excluded from calibration and detection, so
/// the initial-estimate transient is not mistaken for an attack.
pub const DETECTION_WARMUP: f64 = 0.25;
pub const ORACLE_TOLERANCE: f64 = 1e-6;

/// Trapezoid rule over uniformly spaced samples.
pub fn trapezoid(values: &[f64], step: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Parameter("cannot integrate an empty signal".into()));
    }
    Ok(values.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() * step)
}

/// `int ||s(t)||^2 dt`.
pub fn l2_norm_sq(signal: &Series, step: f64) -> Result<f64> {
    trapezoid(&signal.norms_sq(), step)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`.
    pub margin: f64,
    pub satisfied: bool,
}

impl BoundCheck {
    pub fn new(lhs: f64, rhs: f64) -> Self {
        BoundCheck {
            lhs,
            rhs,
            margin: rhs - lhs,
            satisfied: lhs <= (1.0 + BOUND_SLACK) * rhs,
        }
    }
}

fn check_lengths(trace: &SimTrace, oracle: Option<&OracleTrace>, design: &DesignArtifacts) -> Result<()> {
    if trace.nodes.len() != design.nodes.len() {
        return Err(Error::dim("trace and design disagree on the node count"));
    }
    if let Some(o) = oracle {
        if o.t.len() != trace.len() || (o.step - trace.step).abs() > 1e-15 * trace.step.max(1.0) {
            return Err(Error::Parameter("trace and oracle grids differ".into()));
        }
    }
    if trace.is_empty() {
        return Err(Error::Parameter("empty trace".into()));
    }
    Ok(())
}

fn initial_error(model: &PlantModel, xi: &[f64]) -> Vec<f64> {
    model.x0.iter().zip(xi).map(|(a, b)| a - b).collect()
}

/// `int (||w||^2 + ||v_i||^2 + sum_j ||v_ij||^2) dt` for node `i`.
fn noise_energy(trace: &SimTrace, i: usize) -> Result<f64> {
    let nd = &trace.nodes[i];
    let mut total = l2_norm_sq(&trace.w, trace.step)? + l2_norm_sq(&nd.v, trace.step)?;
    for ve in &nd.v_edges {
        total += l2_norm_sq(ve, trace.step)?;
    }
    Ok(total)
}

/// Global resilience bound on `int e' P e dt`.
pub fn check_resilience_bound(trace: &SimTrace, design: &DesignArtifacts, model: &PlantModel) -> Result<BoundCheck> {
    check_lengths(trace, None, design)?;
    let n = model.n();
    let nodes = trace.nodes.len();
    let mut stacked = vec![0.0; n * nodes];
    let integrand: Vec<f64> = (0..trace.len())
        .map(|r| {
            for (i, nd) in trace.nodes.iter().enumerate() {
                stacked[i * n..(i + 1) * n].copy_from_slice(nd.e.row(r));
            }
            design.p.quad_form(&stacked)
        })
        .collect();
    let lhs = trapezoid(&integrand, trace.step)?;

    let g2 = design.gamma * design.gamma;
    let gb2 = design.gamma_bar * design.gamma_bar;
    let mut rhs = 0.0;
    for i in 0..nodes {
        let w = &design.weights[i];
        let weight = &inverse_spd(&w.x_bar)? + &inverse_spd(&w.x)?.scale(2.0 * g2);
        let e0 = initial_error(model, &trace.xi[i]);
        rhs += gb2 * (weight.quad_form(&e0) + (1.0 + 2.0 * g2) * noise_energy(trace, i)?);
        rhs += 2.0 * gb2 * (1.0 + g2) * l2_norm_sq(&trace.nodes[i].nu, trace.step)?;
    }
    Ok(BoundCheck::new(lhs, rhs))
}

/// `eta_ij = -W_ij z_j` for every in-edge of node `i`.
pub fn interconnection_signals(oracle: &OracleTrace, topo: &Topology, i: usize) -> Vec<Series> {
    topo.edges(i)
        .iter()
        .map(|e| {
            let mut s = Series::with_capacity(e.p(), oracle.t.len());
            for r in oracle.nodes[e.from].z.rows() {
                let v: Vec<f64> = e.w.mul_vec(r).iter().map(|x| -x).collect();
                s.push(&v);
            }
            s
        })
        .collect()
}

fn weighted_energy(series: &Series, weight: &Matrix, step: f64) -> Result<f64> {
    let v: Vec<f64> = series.rows().map(|r| weight.quad_form(r)).collect();
    trapezoid(&v, step)
}

/// Node-local attenuation bound on `int (||z_i||^2_R + ||delta_i||^2_Rcheck) dt`.
pub fn check_local_bounds(
    trace: &SimTrace,
    oracle: &OracleTrace,
    design: &DesignArtifacts,
    model: &PlantModel,
    topo: &Topology,
) -> Result<Vec<BoundCheck>> {
    check_lengths(trace, Some(oracle), design)?;
    let g2 = design.gamma * design.gamma;
    let step = trace.step;
    (0..trace.nodes.len())
        .map(|i| {
            let on = &oracle.nodes[i];
            let lhs = weighted_energy(&on.z, &design.detector_lmi.r_blocks[i], step)?
                + weighted_energy(&on.delta, &design.detector_lmi.r_check[i], step)?;
            let z0 = initial_error(model, &trace.xi[i]);
            let mut inputs = noise_energy(trace, i)? + l2_norm_sq(&on.nu, step)?;
            for (eta, e) in interconnection_signals(oracle, topo, i).iter().zip(topo.edges(i)) {
                inputs += weighted_energy(eta, &inverse_spd(&e.z)?, step)?;
            }
            let rhs = g2 * (inverse_spd(&design.weights[i].x)?.quad_form(&z0) + inputs);
            Ok(BoundCheck::new(lhs, rhs))
        })
        .collect()
}

/// Network bound on `sum_i int ||fhat_i - phi_i||^2 dt`, with `fhat_i - phi_i = Upsilon_i delta_i`.
pub fn check_detector_bound(
    trace: &SimTrace,
    oracle: &OracleTrace,
    design: &DesignArtifacts,
    model: &PlantModel,
) -> Result<BoundCheck> {
    check_lengths(trace, Some(oracle), design)?;
    let g2 = design.gamma * design.gamma;
    let step = trace.step;
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for i in 0..trace.nodes.len() {
        let on = &oracle.nodes[i];
        let ups = &design.shapers[i].upsilon;
        let utu = &ups.transpose() * ups;
        lhs += weighted_energy(&on.delta, &utu, step)?;
        let z0 = initial_error(model, &trace.xi[i]);
        rhs += g2
            * (inverse_spd(&design.weights[i].x)?.quad_form(&z0) + noise_energy(trace, i)? + l2_norm_sq(&on.nu, step)?);
    }
    Ok(BoundCheck::new(lhs, rhs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tracking {
    /// `int ||phi_i - f_i||^2 dt`.
    pub l2_err: f64,
    /// Share of `l2_err` accumulated over the last 10% of the horizon.
    pub tail_fraction: f64,
    /// `||phi_i(T) - f_i(T)||`.
    pub final_err: f64,
    pub f_sup: f64,
    pub tracks: bool,
}

pub fn check_tracking(trace: &SimTrace) -> Result<Vec<Tracking>> {
    if trace.is_empty() {
        return Err(Error::Parameter("empty trace".into()));
    }
    let len = trace.len();
    let tail_start = ((0.9 * (len - 1) as f64).floor() as usize).min(len - 1);
    trace
        .nodes
        .iter()
        .map(|nd| {
            let err: Vec<f64> = nd
                .phi
                .rows()
                .zip(nd.f.rows())
                .map(|(p, f)| p.iter().zip(f).map(|(a, b)| (a - b) * (a - b)).sum())
                .collect();
            let l2_err = trapezoid(&err, trace.step)?;
            let tail = trapezoid(&err[tail_start..], trace.step)?;
            let tail_fraction = if l2_err > 0.0 { tail / l2_err } else { 0.0 };
            let final_err = err[len - 1].sqrt();
            let f_sup = nd.f.norms().into_iter().fold(0.0, f64::max);
            Ok(Tracking {
                l2_err,
                tail_fraction,
                final_err,
                f_sup,
                tracks: tail_fraction < 0.01 && final_err < 1e-2 * (1.0 + f_sup),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    /// Least-squares slope of `ln ||e(t)||`; `-inf` (JSON `null`) when the
    /// norm is exactly zero.
    pub rate: f64,
    pub r_squared: f64,
    pub note: Option<String>,
}

impl DecayFit {
    /// Exponential decay is certified by a negative slope with `r^2 > 0.95`.
    pub fn certified(&self) -> bool {
        self.rate == f64::NEG_INFINITY || (self.rate < 0.0 && self.r_squared > 0.95)
    }
}

/// Log-linear least squares on `(t, norms)`.
pub fn fit_decay_rate(t: &[f64], norms: &[f64]) -> Result<DecayFit> {
    if t.len() != norms.len() || t.len() < 2 {
        return Err(Error::Parameter("decay fit needs at least two matching samples".into()));
    }
    if norms.iter().all(|&v| v == 0.0) {
        return Ok(DecayFit {
            rate: f64::NEG_INFINITY,
            r_squared: 1.0,
            note: Some("error is identically zero".into()),
        });
    }
    if let Some(k) = norms.iter().position(|&v| !(v > 0.0)) {
        return Ok(DecayFit {
            rate: f64::NEG_INFINITY,
            r_squared: 1.0,
            note: Some(format!("error reaches exact zero at t = {}", t[k])),
        });
    }
    let logs: Vec<f64> = norms.iter().map(|v| v.ln()).collect();
    let m = t.len() as f64;
    let tm = t.iter().sum::<f64>() / m;
    let lm = logs.iter().sum::<f64>() / m;
    let stt: f64 = t.iter().map(|x| (x - tm) * (x - tm)).sum();
    let stl: f64 = t.iter().zip(&logs).map(|(x, y)| (x - tm) * (y - lm)).sum();
    let sll: f64 = logs.iter().map(|y| (y - lm) * (y - lm)).sum();
    let rate = stl / stt;
    let r_squared = if sll > 0.0 { (stl * stl) / (stt * sll) } else { 0.0 };
    Ok(DecayFit {
        rate,
        r_squared,
        note: None,
    })
}

/// Fits the decay of `norms` after skipping the first `skip_fraction` of the
/// samples and stopping where the norm falls below `floor * norms[0]`, so
/// round-off at the end is not fitted.
pub fn fit_decay_window(t: &[f64], norms: &[f64], skip_fraction: f64, floor: f64) -> Result<DecayFit> {
    if norms.is_empty() {
        return Err(Error::Parameter("empty norm series".into()));
    }
    let start = ((skip_fraction * norms.len() as f64) as usize).min(norms.len() - 1);
    let limit = floor * norms[0];
    let end = norms[start..]
        .iter()
        .position(|&v| v < limit)
        .map(|p| start + p)
        .unwrap_or(norms.len());
    if norms.iter().all(|&v| v == 0.0) || end < start + 2 {
        return fit_decay_rate(&t[start..], &norms[start..]);
    }
    fit_decay_rate(&t[start..end], &norms[start..end])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub threshold: f64,
    pub flagged: bool,
    pub first_time: Option<f64>,
}

fn warmup_len(len: usize) -> usize {
    ((DETECTION_WARMUP * len as f64) as usize).min(len.saturating_sub(1))
}

/// Per-node thresholds `max(5 sup ||phi_i||, 1e-9)`, the supremum taken over
/// an attack-free run after the warm-up window.
pub fn calibrate_thresholds(calibration: &SimTrace) -> Vec<f64> {
    let skip = warmup_len(calibration.len());
    calibration
        .nodes
        .iter()
        .map(|nd| {
            let floor = nd.phi.norms()[skip..].iter().cloned().fold(0.0, f64::max);
            (DETECTION_FACTOR * floor).max(DETECTION_FLOOR)
        })
        .collect()
}

/// Flags node `i` once `||phi_i|| > threshold_i` for `dwell` consecutive
/// samples after the warm-up window.
pub fn detect(trace: &SimTrace, thresholds: &[f64], dwell: usize) -> Result<Vec<Detection>> {
    if thresholds.len() != trace.nodes.len() {
        return Err(Error::dim("one detection threshold per node is required"));
    }
    Ok(trace
        .nodes
        .iter()
        .zip(thresholds)
        .map(|(nd, &th)| {
            let mut run = 0;
            let mut first_time = None;
            let skip = warmup_len(trace.len());
            for (r, v) in nd.phi.norms().into_iter().enumerate().skip(skip) {
                run = if v > th { run + 1 } else { 0 };
                if run >= dwell.max(1) {
                    first_time = Some(trace.t[r + 1 - dwell.max(1)]);
                    break;
                }
            }
            Detection {
                threshold: th,
                flagged: first_time.is_some(),
                first_time,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeVerification {
    pub node: usize,
    pub tracking: Tracking,
    pub decay: DecayFit,
    pub decay_certified: bool,
    pub local_bound: BoundCheck,
    pub detection: Detection,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub schema: u32,
    pub resilience_bound: BoundCheck,
    pub detector_bound: BoundCheck,
    pub oracle_deviation: f64,
    pub nodes: Vec<NodeVerification>,
    /// All bounds hold and the oracle matches the closed loop.
    pub passed: bool,
}

pub struct VerificationInputs<'a> {
    pub trace: &'a SimTrace,
    pub oracle: &'a OracleTrace,
    /// Attack-free run of the same scenario, used for detection thresholds.
    pub calibration: &'a SimTrace,
    pub design: &'a DesignArtifacts,
    pub model: &'a PlantModel,
    pub topo: &'a Topology,
}

pub fn verify(inp: &VerificationInputs<'_>) -> Result<VerificationReport> {
    let resilience_bound = check_resilience_bound(inp.trace, inp.design, inp.model)?;
    let detector_bound = check_detector_bound(inp.trace, inp.oracle, inp.design, inp.model)?;
    let local = check_local_bounds(inp.trace, inp.oracle, inp.design, inp.model, inp.topo)?;
    let tracking = check_tracking(inp.trace)?;
    let detection = detect(inp.trace, &calibrate_thresholds(inp.calibration), DETECTION_DWELL)?;
    let oracle_deviation = crate::simulator::oracle_deviation(inp.trace, inp.oracle)?;
    let nodes = (0..inp.trace.nodes.len())
        .map(|i| {
            let decay = fit_decay_window(&inp.trace.t, &inp.trace.nodes[i].e.norms(), 0.1, 1e-10)?;
            Ok(NodeVerification {
                node: i,
                tracking: tracking[i],
                decay_certified: decay.certified(),
                decay,
                local_bound: local[i],
                detection: detection[i].clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let passed = resilience_bound.satisfied
        && detector_bound.satisfied
        && local.iter().all(|b| b.satisfied)
        && oracle_deviation <= ORACLE_TOLERANCE;
    Ok(VerificationReport {
        schema: 1,
        resilience_bound,
        detector_bound,
        oracle_deviation,
        nodes,
        passed,
    })
}
