//! Fixed-step simulation of the plant, the controlled observers and the
//! attack detectors, plus a direct integration of the detector-error
//! system used as an independent oracle.
//!
//! The whole network shares one RK4 step. Gains are held constant over each
//! design interval: every stage of a step uses the gains of the interval
//! that contains the step's start time. Schedules, disturbances and attacks
//! are evaluated at the stage times.

use std::io::Write;

use crate::attack::AttackScenario;
use crate::designer::DesignArtifacts;
use crate::error::{Error, Result};
use crate::matlin::{rk4_step, Matrix};
use crate::network::Topology;
use crate::plant::{DisturbanceRealization, PlantModel};

/// Everything a run needs besides the step size.
#[derive(Clone, Copy)]
pub struct SimInputs<'a> {
    pub model: &'a PlantModel,
    pub topo: &'a Topology,
    pub design: &'a DesignArtifacts,
    pub dist: &'a DisturbanceRealization,
    pub attacks: &'a AttackScenario,
    /// Initial estimates `xi_i`.
    pub xi: &'a [Vec<f64>],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub horizon: f64,
    pub step: f64,
    /// When false, `u_i` is forced to zero.
    pub feedback: bool,
}

impl<'a> SimInputs<'a> {
    pub fn validate(&self) -> Result<()> {
        let n = self.model.n();
        let nodes = self.model.node_count();
        if self.topo.node_count() != nodes || self.design.nodes.len() != nodes || self.design.shapers.len() != nodes {
            return Err(Error::dim("plant, topology and design disagree on the node count"));
        }
        if self.xi.len() != nodes || self.xi.iter().any(|x| x.len() != n) {
            return Err(Error::dim(format!(
                "one initial estimate of length {n} per node is required"
            )));
        }
        if self.dist.w.dim() != self.model.m() {
            return Err(Error::dim("w has the wrong dimension"));
        }
        if self.dist.v.len() != nodes || self.dist.v_edges.len() != nodes {
            return Err(Error::dim("one measurement noise channel per node is required"));
        }
        for i in 0..nodes {
            if self.dist.v[i].dim() != self.model.nodes[i].noise_dim() {
                return Err(Error::dim(format!("node {i}: v has the wrong dimension")));
            }
            let edges = self.topo.edges(i);
            if self.dist.v_edges[i].len() != edges.len()
                || self.dist.v_edges[i]
                    .iter()
                    .zip(edges)
                    .any(|(s, e)| s.dim() != e.noise_dim())
            {
                return Err(Error::dim(format!(
                    "node {i}: channel noise does not match the in-edges"
                )));
            }
        }
        for s in &self.attacks.signals {
            if s.node >= nodes {
                return Err(Error::Parameter(format!("attack targets node {} of {nodes}", s.node)));
            }
            if s.dim() != self.model.nodes[s.node].attack_dim() {
                return Err(Error::dim(format!("attack on node {} has the wrong dimension", s.node)));
            }
        }
        Ok(())
    }

    fn gain_index(&self, t: f64) -> usize {
        ((t / self.design.grid.step) + 1e-9).floor() as usize
    }
}

/// Offsets of each node's `[xhat, ehat, epshat, eps]` block in the global state.
#[derive(Debug, Clone, PartialEq)]
struct Layout {
    n: usize,
    nf: Vec<usize>,
    offsets: Vec<usize>,
    len: usize,
}

impl Layout {
    fn closed_loop(model: &PlantModel) -> Self {
        let n = model.n();
        let nf: Vec<usize> = model.nodes.iter().map(|nd| nd.attack_dim()).collect();
        let mut offsets = Vec::with_capacity(nf.len());
        let mut off = n;
        for &f in &nf {
            offsets.push(off);
            off += 2 * n + 2 * f;
        }
        Layout {
            n,
            nf,
            offsets,
            len: off,
        }
    }

    fn node_of(&self, idx: usize) -> Option<usize> {
        if idx < self.n {
            return None;
        }
        Some(self.offsets.partition_point(|&o| o <= idx) - 1)
    }
}

/// Full closed-loop state at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub t: f64,
    layout: Layout,
    y: Vec<f64>,
}

impl SimState {
    /// `x(0) = x0`, `xhat_i(0) = xi_i`, every detector and shaper state zero.
    pub fn initial(model: &PlantModel, xi: &[Vec<f64>]) -> Result<Self> {
        let layout = Layout::closed_loop(model);
        if xi.len() != model.node_count() || xi.iter().any(|x| x.len() != layout.n) {
            return Err(Error::dim("one initial estimate per node is required"));
        }
        let mut y = vec![0.0; layout.len];
        y[..layout.n].copy_from_slice(&model.x0);
        for (i, x) in xi.iter().enumerate() {
            let o = layout.offsets[i];
            y[o..o + layout.n].copy_from_slice(x);
        }
        Ok(SimState { t: 0.0, layout, y })
    }

    pub fn x(&self) -> &[f64] {
        &self.y[..self.layout.n]
    }

    pub fn xhat(&self, i: usize) -> &[f64] {
        let o = self.layout.offsets[i];
        &self.y[o..o + self.layout.n]
    }

    pub fn ehat(&self, i: usize) -> &[f64] {
        let o = self.layout.offsets[i] + self.layout.n;
        &self.y[o..o + self.layout.n]
    }

    pub fn eps_hat(&self, i: usize) -> &[f64] {
        let o = self.layout.offsets[i] + 2 * self.layout.n;
        &self.y[o..o + self.layout.nf[i]]
    }

    /// True shaper state driven by the actual attack; used only by the oracle comparison.
    pub fn eps(&self, i: usize) -> &[f64] {
        let o = self.layout.offsets[i] + 2 * self.layout.n + self.layout.nf[i];
        &self.y[o..o + self.layout.nf[i]]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.y
    }
}

fn add(a: &mut [f64], b: &[f64]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Signals observable at node `i` at one instant.
#[derive(Debug, Clone)]
pub struct NodeSignals {
    pub v: Vec<f64>,
    pub v_edges: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    pub c_edges: Vec<Vec<f64>>,
    pub zeta: Vec<f64>,
    pub zeta_edges: Vec<Vec<f64>>,
    pub phi: Vec<f64>,
    pub u: Vec<f64>,
    pub f: Vec<f64>,
    /// `Upsilon eps - f`, from the true shaper state.
    pub nu: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Signals {
    pub w: Vec<f64>,
    pub nodes: Vec<NodeSignals>,
}

fn eval_signals(inp: &SimInputs<'_>, feedback: bool, t: f64, st: &SimState) -> Signals {
    let model = inp.model;
    let w = inp.dist.w.eval(t);
    let nodes = (0..model.node_count())
        .map(|i| {
            let node = &model.nodes[i];
            let shaper = &inp.design.shapers[i];
            let v = inp.dist.v[i].eval(t);
            let mut y = node.c.at(t).mul_vec(st.x());
            node.d.at(t).mul_vec_acc(&v, &mut y);
            let zeta = sub(&y, &node.c.at(t).mul_vec(st.xhat(i)));
            let mut v_edges = Vec::new();
            let mut c_edges = Vec::new();
            let mut zeta_edges = Vec::new();
            for (k, e) in inp.topo.edges(i).iter().enumerate() {
                let ve = inp.dist.v_edges[i][k].eval(t);
                let mut c = e.w.mul_vec(st.xhat(e.from));
                e.h.mul_vec_acc(&ve, &mut c);
                zeta_edges.push(sub(&c, &e.w.mul_vec(st.xhat(i))));
                c_edges.push(c);
                v_edges.push(ve);
            }
            let phi = shaper.upsilon.mul_vec(st.eps_hat(i));
            let u = if feedback {
                node.f.mul_vec(&phi).iter().map(|x| -x).collect()
            } else {
                vec![0.0; model.n()]
            };
            let mut f = vec![0.0; node.attack_dim()];
            inp.attacks.eval_node_into(i, t, &mut f);
            let nu = sub(&shaper.upsilon.mul_vec(st.eps(i)), &f);
            NodeSignals {
                v,
                v_edges,
                y,
                c_edges,
                zeta,
                zeta_edges,
                phi,
                u,
                f,
                nu,
            }
        })
        .collect();
    Signals { w, nodes }
}

fn closed_loop_rhs(inp: &SimInputs<'_>, feedback: bool, k: usize, t: f64, st: &SimState) -> Vec<f64> {
    let model = inp.model;
    let lay = &st.layout;
    let n = lay.n;
    let sig = eval_signals(inp, feedback, t, st);
    let a = model.a.at(t);
    let mut dy = vec![0.0; lay.len];

    let mut dx = a.mul_vec(st.x());
    model.b.at(t).mul_vec_acc(&sig.w, &mut dx);
    dy[..n].copy_from_slice(&dx);

    for i in 0..model.node_count() {
        let g = inp.design.gains(i, k);
        let node = &model.nodes[i];
        let shaper = &inp.design.shapers[i];
        let s = &sig.nodes[i];
        let c = node.c.at(t);
        let edges = inp.topo.edges(i);
        let ehat = st.ehat(i);

        let mut dxhat = a.mul_vec(st.xhat(i));
        g.l.mul_vec_acc(&s.zeta, &mut dxhat);
        for (kk, z) in g.k.iter().zip(&s.zeta_edges) {
            kk.mul_vec_acc(z, &mut dxhat);
        }
        node.f.mul_vec_acc(&s.f, &mut dxhat);
        add(&mut dxhat, &s.u);

        // Detector innovations in error coordinates.
        let c_ehat = c.mul_vec(ehat);
        let r = sub(&s.zeta, &c_ehat);
        let mut w_diff = Vec::with_capacity(edges.len());
        let mut r_edges = Vec::with_capacity(edges.len());
        for (e, z) in edges.iter().zip(&s.zeta_edges) {
            let wd = e.w.mul_vec(&sub(ehat, st.ehat(e.from)));
            r_edges.push(sub(z, &wd));
            w_diff.push(wd);
        }

        let mut dehat = a.mul_vec(ehat);
        let lc = g.l.mul_vec(&c_ehat);
        dehat.iter_mut().zip(&lc).for_each(|(d, x)| *d -= x);
        for (kk, wd) in g.k.iter().zip(&w_diff) {
            let t = kk.mul_vec(wd);
            dehat.iter_mut().zip(&t).for_each(|(d, x)| *d -= x);
        }
        g.l_bar.mul_vec_acc(&r, &mut dehat);
        for (kk, re) in g.k_bar.iter().zip(&r_edges) {
            kk.mul_vec_acc(re, &mut dehat);
        }

        let mut deps_hat = shaper.omega.mul_vec(st.eps_hat(i));
        g.l_check.mul_vec_acc(&r, &mut deps_hat);
        for (kk, re) in g.k_check.iter().zip(&r_edges) {
            kk.mul_vec_acc(re, &mut deps_hat);
        }

        let mut deps = shaper.omega.mul_vec(st.eps(i));
        shaper.gamma.mul_vec_acc(&s.nu, &mut deps);

        let o = lay.offsets[i];
        let nf = lay.nf[i];
        dy[o..o + n].copy_from_slice(&dxhat);
        dy[o + n..o + 2 * n].copy_from_slice(&dehat);
        dy[o + 2 * n..o + 2 * n + nf].copy_from_slice(&deps_hat);
        dy[o + 2 * n + nf..o + 2 * n + 2 * nf].copy_from_slice(&deps);
    }
    dy
}

fn divergence_check(layout: &Layout, y: &[f64], t: f64) -> Result<()> {
    if let Some(idx) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::Divergence {
            t,
            node: layout.node_of(idx),
        });
    }
    Ok(())
}

/// One RK4 step of the coupled network from `state` to `state.t + h`.
pub fn step_closed_loop(inp: &SimInputs<'_>, state: &SimState, h: f64, feedback: bool) -> Result<SimState> {
    let k = inp.gain_index(state.t);
    let y0 = Matrix::from_vec(state.y.len(), 1, state.y.clone())?;
    let layout = &state.layout;
    let next = rk4_step(
        |s, y| {
            let st = SimState {
                t: s,
                layout: layout.clone(),
                y: y.as_slice().to_vec(),
            };
            let dy = closed_loop_rhs(inp, feedback, k, s, &st);
            Matrix::from_vec(dy.len(), 1, dy)
        },
        state.t,
        &y0,
        h,
    );
    let next = match next {
        Ok(m) => m.into_vec(),
        Err(Error::Integration { t, .. }) => {
            return Err(Error::Divergence { t, node: None });
        }
        Err(e) => return Err(e),
    };
    let t1 = state.t + h;
    divergence_check(layout, &next, t1)?;
    Ok(SimState {
        t: t1,
        layout: layout.clone(),
        y: next,
    })
}

/// Row-major samples of a vector signal on the simulation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    dim: usize,
    data: Vec<f64>,
}

impl Series {
    pub fn new(dim: usize) -> Self {
        Series { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, len: usize) -> Self {
        Series {
            dim,
            data: Vec::with_capacity(dim * len),
        }
    }

    pub fn push(&mut self, row: &[f64]) {
        debug_assert_eq!(row.len(), self.dim);
        self.data.extend_from_slice(row);
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.dim.max(1))
    }

    /// Pointwise squared Euclidean norm.
    pub fn norms_sq(&self) -> Vec<f64> {
        self.rows().map(|r| r.iter().map(|v| v * v).sum()).collect()
    }

    pub fn norms(&self) -> Vec<f64> {
        self.norms_sq().into_iter().map(f64::sqrt).collect()
    }

    pub fn last(&self) -> Option<&[f64]> {
        if self.is_empty() {
            None
        } else {
            Some(self.row(self.data.len() / self.dim - 1))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeTrace {
    pub xhat: Series,
    pub e: Series,
    pub ehat: Series,
    pub eps_hat: Series,
    pub eps: Series,
    pub phi: Series,
    pub u: Series,
    pub f: Series,
    pub nu: Series,
    pub zeta: Series,
    pub zeta_edges: Vec<Series>,
    pub v: Series,
    pub v_edges: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub step: f64,
    pub t: Vec<f64>,
    pub x: Series,
    pub w: Series,
    pub nodes: Vec<NodeTrace>,
    pub feedback: bool,
    pub xi: Vec<Vec<f64>>,
}

impl SimTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Writes the trace as CSV: `t, x[k], xhat{i}[k], e{i}[k], phi{i}[k], f{i}[k], u{i}[k]`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((0..self.x.dim()).map(|k| format!("x[{k}]")));
        type Column = fn(&NodeTrace) -> &Series;
        let groups: [(&str, Column); 5] = [
            ("xhat", |n| &n.xhat),
            ("e", |n| &n.e),
            ("phi", |n| &n.phi),
            ("f", |n| &n.f),
            ("u", |n| &n.u),
        ];
        for (name, get) in &groups {
            for (i, nd) in self.nodes.iter().enumerate() {
                header.extend((0..get(nd).dim()).map(|k| format!("{name}{i}[{k}]")));
            }
        }
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for r in 0..self.len() {
            line.clear();
            line.push_str(&format!("{:.17e}", self.t[r]));
            for v in self.x.row(r) {
                line.push_str(&format!(",{v:.17e}"));
            }
            for (_, get) in &groups {
                for nd in &self.nodes {
                    for v in get(nd).row(r) {
                        line.push_str(&format!(",{v:.17e}"));
                    }
                }
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

fn check_grid(inp: &SimInputs<'_>, opts: &SimOptions) -> Result<usize> {
    if !(opts.step > 0.0) || !(opts.horizon >= 0.0) {
        return Err(Error::Parameter("simulation needs step > 0 and horizon >= 0".into()));
    }
    let grid = inp.design.grid;
    let ratio = grid.step / opts.step;
    if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
        return Err(Error::Parameter(format!(
            "simulation step {} must divide the design step {} an integer number of times",
            opts.step, grid.step
        )));
    }
    if opts.horizon > grid.horizon() * (1.0 + 1e-12) + 1e-12 {
        return Err(Error::Parameter(format!(
            "simulation horizon {} exceeds the design horizon {}",
            opts.horizon,
            grid.horizon()
        )));
    }
    Ok((opts.horizon / opts.step).round() as usize)
}

fn record(trace: &mut SimTrace, st: &SimState, sig: &Signals, t: f64) {
    trace.t.push(t);
    trace.x.push(st.x());
    trace.w.push(&sig.w);
    for (i, nd) in trace.nodes.iter_mut().enumerate() {
        let s = &sig.nodes[i];
        nd.xhat.push(st.xhat(i));
        nd.e.push(&sub(st.x(), st.xhat(i)));
        nd.ehat.push(st.ehat(i));
        nd.eps_hat.push(st.eps_hat(i));
        nd.eps.push(st.eps(i));
        nd.phi.push(&s.phi);
        nd.u.push(&s.u);
        nd.f.push(&s.f);
        nd.nu.push(&s.nu);
        nd.zeta.push(&s.zeta);
        for (series, z) in nd.zeta_edges.iter_mut().zip(&s.zeta_edges) {
            series.push(z);
        }
        nd.v.push(&s.v);
        for (series, v) in nd.v_edges.iter_mut().zip(&s.v_edges) {
            series.push(v);
        }
    }
}

/// Simulates the controlled observer network with its attack detectors.
pub fn simulate(inp: &SimInputs<'_>, opts: &SimOptions) -> Result<SimTrace> {
    inp.validate()?;
    let steps = check_grid(inp, opts)?;
    let model = inp.model;
    let len = steps + 1;
    let n = model.n();
    let mut trace = SimTrace {
        step: opts.step,
        t: Vec::with_capacity(len),
        x: Series::with_capacity(n, len),
        w: Series::with_capacity(model.m(), len),
        nodes: (0..model.node_count())
            .map(|i| {
                let nd = &model.nodes[i];
                let nf = nd.attack_dim();
                let edges = inp.topo.edges(i);
                NodeTrace {
                    xhat: Series::with_capacity(n, len),
                    e: Series::with_capacity(n, len),
                    ehat: Series::with_capacity(n, len),
                    eps_hat: Series::with_capacity(nf, len),
                    eps: Series::with_capacity(nf, len),
                    phi: Series::with_capacity(nf, len),
                    u: Series::with_capacity(n, len),
                    f: Series::with_capacity(nf, len),
                    nu: Series::with_capacity(nf, len),
                    zeta: Series::with_capacity(nd.output_dim(), len),
                    zeta_edges: edges.iter().map(|e| Series::with_capacity(e.p(), len)).collect(),
                    v: Series::with_capacity(nd.noise_dim(), len),
                    v_edges: edges
                        .iter()
                        .map(|e| Series::with_capacity(e.noise_dim(), len))
                        .collect(),
                }
            })
            .collect(),
        feedback: opts.feedback,
        xi: inp.xi.to_vec(),
    };
    let mut st = SimState::initial(model, inp.xi)?;
    for s in 0..=steps {
        let t = s as f64 * opts.step;
        st.t = t;
        let sig = eval_signals(inp, opts.feedback, t, &st);
        record(&mut trace, &st, &sig, t);
        if s < steps {
            st = step_closed_loop(inp, &st, opts.step, opts.feedback)?;
        }
    }
    Ok(trace)
}

/// Per-node trajectories of the detector-error system.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleNode {
    pub z: Series,
    pub delta: Series,
    pub eps: Series,
    pub nu: Series,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrace {
    pub step: f64,
    pub t: Vec<f64>,
    pub nodes: Vec<OracleNode>,
}

fn oracle_offsets(model: &PlantModel) -> (Vec<usize>, usize) {
    let n = model.n();
    let mut offs = Vec::with_capacity(model.node_count());
    let mut o = 0;
    for nd in &model.nodes {
        offs.push(o);
        o += n + 2 * nd.attack_dim();
    }
    (offs, o)
}

fn oracle_rhs(inp: &SimInputs<'_>, offs: &[usize], k: usize, t: f64, y: &[f64]) -> Vec<f64> {
    let model = inp.model;
    let n = model.n();
    let a = model.a.at(t);
    let b = model.b.at(t);
    let w = inp.dist.w.eval(t);
    let z_of = |i: usize| &y[offs[i]..offs[i] + n];
    let mut dy = vec![0.0; y.len()];
    for (i, (node, &o)) in model.nodes.iter().zip(offs.iter()).enumerate() {
        let nf = node.attack_dim();
        let shaper = &inp.design.shapers[i];
        let g = inp.design.gains(i, k);
        let z = z_of(i);
        let delta = &y[o + n..o + n + nf];
        let eps = &y[o + n + nf..o + n + 2 * nf];

        let mut f = vec![0.0; nf];
        inp.attacks.eval_node_into(i, t, &mut f);
        let nu = sub(&shaper.upsilon.mul_vec(eps), &f);

        // q = C z + D v, q_e = W (z_i - z_j) + H v_ij
        let v = inp.dist.v[i].eval(t);
        let mut q = node.c.at(t).mul_vec(z);
        node.d.at(t).mul_vec_acc(&v, &mut q);
        let q_edges: Vec<Vec<f64>> = inp
            .topo
            .edges(i)
            .iter()
            .enumerate()
            .map(|(kk, e)| {
                let mut qe = e.w.mul_vec(&sub(z, z_of(e.from)));
                e.h.mul_vec_acc(&inp.dist.v_edges[i][kk].eval(t), &mut qe);
                qe
            })
            .collect();

        let mut dz = a.mul_vec(z);
        let mut corr = g.l_hat.mul_vec(&q);
        for (kk, qe) in g.k_hat.iter().zip(&q_edges) {
            kk.mul_vec_acc(qe, &mut corr);
        }
        dz.iter_mut().zip(&corr).for_each(|(d, c)| *d -= c);
        let fud = node.f.mul_vec(&shaper.upsilon.mul_vec(delta));
        dz.iter_mut().zip(&fud).for_each(|(d, c)| *d -= c);
        b.mul_vec_acc(&w, &mut dz);
        node.f.mul_vec_acc(&nu, &mut dz);

        let mut dd = shaper.omega.mul_vec(delta);
        let mut corr = g.l_check.mul_vec(&q);
        for (kk, qe) in g.k_check.iter().zip(&q_edges) {
            kk.mul_vec_acc(qe, &mut corr);
        }
        dd.iter_mut().zip(&corr).for_each(|(d, c)| *d -= c);
        shaper.gamma.mul_vec_acc(&nu, &mut dd);

        let mut de = shaper.omega.mul_vec(eps);
        shaper.gamma.mul_vec_acc(&nu, &mut de);

        dy[o..o + n].copy_from_slice(&dz);
        dy[o + n..o + n + nf].copy_from_slice(&dd);
        dy[o + n + nf..o + n + 2 * nf].copy_from_slice(&de);
    }
    dy
}

/// Integrates the detector-error dynamics directly, starting from
/// `z_i(0) = x0 - xi_i`, `delta_i(0) = 0`, and the true shaper at rest.
pub fn simulate_error_system_oracle(inp: &SimInputs<'_>, opts: &SimOptions) -> Result<OracleTrace> {
    inp.validate()?;
    let steps = check_grid(inp, opts)?;
    let model = inp.model;
    let n = model.n();
    let (offs, total) = oracle_offsets(model);
    let mut y = vec![0.0; total];
    for (i, xi) in inp.xi.iter().enumerate() {
        y[offs[i]..offs[i] + n].copy_from_slice(&sub(&model.x0, xi));
    }
    let len = steps + 1;
    let mut trace = OracleTrace {
        step: opts.step,
        t: Vec::with_capacity(len),
        nodes: model
            .nodes
            .iter()
            .map(|nd| OracleNode {
                z: Series::with_capacity(n, len),
                delta: Series::with_capacity(nd.attack_dim(), len),
                eps: Series::with_capacity(nd.attack_dim(), len),
                nu: Series::with_capacity(nd.attack_dim(), len),
            })
            .collect(),
    };
    for s in 0..=steps {
        let t = s as f64 * opts.step;
        trace.t.push(t);
        for (i, nd) in trace.nodes.iter_mut().enumerate() {
            let nf = model.nodes[i].attack_dim();
            let o = offs[i];
            let eps = &y[o + n + nf..o + n + 2 * nf];
            let mut f = vec![0.0; nf];
            inp.attacks.eval_node_into(i, t, &mut f);
            nd.z.push(&y[o..o + n]);
            nd.delta.push(&y[o + n..o + n + nf]);
            nd.eps.push(eps);
            nd.nu.push(&sub(&inp.design.shapers[i].upsilon.mul_vec(eps), &f));
        }
        if s == steps {
            break;
        }
        let k = inp.gain_index(t);
        let cur = Matrix::from_vec(total, 1, y)?;
        let next = rk4_step(
            |tt, yy| {
                let d = oracle_rhs(inp, &offs, k, tt, yy.as_slice());
                Matrix::from_vec(d.len(), 1, d)
            },
            t,
            &cur,
            opts.step,
        )
        .map_err(|e| match e {
            Error::Integration { t, .. } => Error::Divergence { t, node: None },
            other => other,
        })?;
        y = next.into_vec();
        if let Some(idx) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                t: t + opts.step,
                node: Some(offs.partition_point(|&o| o <= idx) - 1),
            });
        }
    }
    Ok(trace)
}

/// Largest pointwise deviation between the closed-loop differences
/// `(e_i - ehat_i, eps_i - epshat_i)` and the oracle's `(z_i, delta_i)`.
pub fn oracle_deviation(trace: &SimTrace, oracle: &OracleTrace) -> Result<f64> {
    if trace.len() != oracle.t.len() || trace.nodes.len() != oracle.nodes.len() {
        return Err(Error::dim("trace and oracle grids differ"));
    }
    let mut worst: f64 = 0.0;
    for (nd, on) in trace.nodes.iter().zip(&oracle.nodes) {
        for r in 0..trace.len() {
            for ((e, eh), z) in nd.e.row(r).iter().zip(nd.ehat.row(r)).zip(on.z.row(r)) {
                worst = worst.max((e - eh - z).abs());
            }
            for ((ep, eh), d) in nd.eps.row(r).iter().zip(nd.eps_hat.row(r)).zip(on.delta.row(r)) {
                worst = worst.max((ep - eh - d).abs());
            }
        }
    }
    Ok(worst)
}
