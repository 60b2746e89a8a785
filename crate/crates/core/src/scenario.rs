//! TOML scenario files.
//!
//! ```toml
//! [plant]
//! A = [[-1.0]]
//! B = [[1.0]]
//! x0 = [1.0]
//!
//! [[nodes]]
//! C = [[1.0]]
//! D = [[1.0]]
//! F = [[1.0]]
//! xi = [0.0]
//! shaper_gain = 2.0
//!
//! [design]
//! gamma = 5.0
//! gamma_bar = 5.0
//! step = 0.01
//!
//! [sim]
//! horizon = 10.0
//! ```
//!
//! A, B, C and D also accept `{ breakpoints = [...], values = [...] }` for
//! piecewise-constant schedules. Validation runs before any computation and
//! every failure names the offending field.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::attack::{make_shaper, AttackComponent, AttackScenario, AttackShaper, AttackSignal};
use crate::designer::{DesignParams, InitialWeights, TimeGrid, DEFAULT_BOUND_CAP_FACTOR, DEFAULT_MARGIN};
use crate::error::{Error, Result};
use crate::matlin::{lambda_min, Matrix};
use crate::network::{Edge, Topology};
use crate::plant::{DisturbanceRealization, NodeModel, PlantModel, Primitive, Schedule, Signal};
use crate::simulator::SimOptions;

type Rows = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScheduleSpec {
    Constant(Rows),
    Piecewise { breakpoints: Vec<f64>, values: Vec<Rows> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantSpec {
    #[serde(rename = "A")]
    pub a: ScheduleSpec,
    #[serde(rename = "B")]
    pub b: ScheduleSpec,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NoiseSpec {
    /// Seeded Gaussian samples held for `hold` seconds, zero after `window`.
    WhiteNoise {
        amplitude: f64,
        hold: f64,
        window: f64,
    },
    DecayingExp {
        amplitude: Vec<f64>,
        rate: f64,
    },
    WindowedSine {
        amplitude: Vec<f64>,
        freq: f64,
        #[serde(default)]
        phase: f64,
        start: f64,
        end: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    #[serde(rename = "C")]
    pub c: ScheduleSpec,
    #[serde(rename = "D")]
    pub d: ScheduleSpec,
    #[serde(rename = "F")]
    pub f: Rows,
    pub xi: Vec<f64>,
    #[serde(default = "default_gain")]
    pub shaper_gain: f64,
    #[serde(rename = "X", default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Rows>,
    #[serde(rename = "X_check", default, skip_serializing_if = "Option::is_none")]
    pub x_check: Option<Rows>,
    #[serde(rename = "X_bar", default, skip_serializing_if = "Option::is_none")]
    pub x_bar: Option<Rows>,
    /// Measurement noise `v_i`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub v: Vec<NoiseSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub to: usize,
    pub from: usize,
    #[serde(rename = "W")]
    pub w: Rows,
    #[serde(rename = "H")]
    pub h: Rows,
    #[serde(rename = "Z")]
    pub z: Rows,
    /// Replaces `Z` in the observer step only.
    #[serde(rename = "Z_observer", default, skip_serializing_if = "Option::is_none")]
    pub z_observer: Option<Rows>,
    /// Channel noise `v_ij`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub v: Vec<NoiseSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum AttackComponentSpec {
    Constant {
        level: Vec<f64>,
    },
    Decaying {
        amplitude: Vec<f64>,
        rate: f64,
    },
    Pulse {
        amplitude: Vec<f64>,
        delay: f64,
        width: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackSpec {
    pub node: usize,
    pub onset: f64,
    pub components: Vec<AttackComponentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceSpec {
    /// Process noise `w`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub w: Vec<NoiseSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    pub gamma: f64,
    pub gamma_bar: f64,
    #[serde(rename = "P", default, skip_serializing_if = "Option::is_none")]
    pub p: Option<Rows>,
    #[serde(default = "default_margin")]
    pub margin: f64,
    pub step: f64,
    /// Defaults to the simulation horizon.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default = "default_cap")]
    pub bound_cap_factor: f64,
    /// Also report the smallest feasible `gamma` and `gamma_bar`.
    #[serde(default)]
    pub gamma_search: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub horizon: f64,
    /// Defaults to the design step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// Required whenever a white-noise disturbance is present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_true")]
    pub feedback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

fn default_gain() -> f64 {
    1.0
}

fn default_margin() -> f64 {
    DEFAULT_MARGIN
}

fn default_cap() -> f64 {
    DEFAULT_BOUND_CAP_FACTOR
}

fn default_true() -> bool {
    true
}

/// The scenario file as written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub plant: PlantSpec,
    pub nodes: Vec<NodeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub edges: Vec<EdgeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub attacks: Vec<AttackSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disturbance: Option<DisturbanceSpec>,
    pub design: DesignSpec,
    pub sim: SimSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

/// A validated scenario with every model object built.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub model: PlantModel,
    pub topology: Topology,
    pub shapers: Vec<AttackShaper>,
    pub attacks: AttackScenario,
    pub xi: Vec<Vec<f64>>,
    pub weights: Vec<InitialWeights>,
    pub p: Matrix,
    pub observer_z: Option<Vec<Vec<Matrix>>>,
}

fn field_err(field: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Scenario { .. } => e,
        other => Error::scenario(field, other.to_string()),
    }
}

fn matrix(field: &str, rows: &Rows) -> Result<Matrix> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::scenario(field, "matrix must be non-empty"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::scenario(field, "matrix entries must be finite"));
    }
    Matrix::from_rows(rows).map_err(field_err(field))
}

fn schedule(field: &str, spec: &ScheduleSpec) -> Result<Schedule> {
    match spec {
        ScheduleSpec::Constant(rows) => Ok(Schedule::Constant(matrix(field, rows)?)),
        ScheduleSpec::Piecewise { breakpoints, values } => {
            let ms = values
                .iter()
                .enumerate()
                .map(|(k, v)| matrix(&format!("{field}.values[{k}]"), v))
                .collect::<Result<Vec<_>>>()?;
            Schedule::piecewise(breakpoints.clone(), ms).map_err(field_err(field))
        }
    }
}

fn expect_shape(field: &str, m: &Matrix, shape: (usize, usize)) -> Result<()> {
    if m.shape() != shape {
        return Err(Error::scenario(
            field,
            format!("expected {}x{}, got {}x{}", shape.0, shape.1, m.rows(), m.cols()),
        ));
    }
    Ok(())
}

fn spd(field: &str, m: &Matrix) -> Result<()> {
    if (m - &m.transpose()).max_abs() > 1e-12 * m.max_abs().max(1.0) {
        return Err(Error::scenario(field, "matrix must be symmetric"));
    }
    if !(lambda_min(m).map_err(field_err(field))? > 0.0) {
        return Err(Error::scenario(field, "matrix must be positive definite"));
    }
    Ok(())
}

fn positive(field: &str, v: f64) -> Result<()> {
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::scenario(field, format!("must be positive, got {v}")));
    }
    Ok(())
}

fn is_stochastic(terms: &[NoiseSpec]) -> bool {
    terms.iter().any(|t| matches!(t, NoiseSpec::WhiteNoise { .. }))
}

/// Independent stream per noise channel, derived from the scenario seed.
fn channel_seed(seed: u64, channel: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ channel.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn realize(field: &str, terms: &[NoiseSpec], dim: usize, seed: Option<u64>, channel: u64) -> Result<Signal> {
    let prims = terms
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let f = format!("{field}[{k}]");
            match t {
                NoiseSpec::WhiteNoise {
                    amplitude,
                    hold,
                    window,
                } => {
                    let seed =
                        seed.ok_or_else(|| Error::scenario("sim.seed", "required for white-noise disturbances"))?;
                    Primitive::white_noise(
                        dim,
                        *amplitude,
                        *hold,
                        *window,
                        channel_seed(seed, channel * 64 + k as u64),
                    )
                    .map_err(field_err(&f))
                }
                NoiseSpec::DecayingExp { amplitude, rate } => {
                    positive(&format!("{f}.rate"), *rate)?;
                    Ok(Primitive::DecayingExp {
                        amplitude: amplitude.clone(),
                        rate: *rate,
                    })
                }
                NoiseSpec::WindowedSine {
                    amplitude,
                    freq,
                    phase,
                    start,
                    end,
                } => {
                    if !(end >= start) || !end.is_finite() {
                        return Err(Error::scenario(&f, "window must satisfy start <= end < inf"));
                    }
                    Ok(Primitive::WindowedSine {
                        amplitude: amplitude.clone(),
                        freq: *freq,
                        phase: *phase,
                        start: *start,
                        end: *end,
                    })
                }
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Signal::new(dim, prims).map_err(field_err(field))
}

impl Scenario {
    pub fn from_spec(spec: ScenarioSpec) -> Result<Self> {
        let a = schedule("plant.A", &spec.plant.a)?;
        let n = a.shape().0;
        if a.shape() != (n, n) {
            return Err(Error::scenario("plant.A", "must be square"));
        }
        let b = schedule("plant.B", &spec.plant.b)?;
        if b.shape().0 != n {
            return Err(Error::scenario("plant.B", format!("must have {n} rows")));
        }
        if spec.plant.x0.len() != n {
            return Err(Error::scenario("plant.x0", format!("must have {n} entries")));
        }
        if spec.nodes.is_empty() {
            return Err(Error::scenario("nodes", "at least one node is required"));
        }
        let n_nodes = spec.nodes.len();

        let mut nodes = Vec::with_capacity(n_nodes);
        let mut shapers = Vec::with_capacity(n_nodes);
        let mut xi = Vec::with_capacity(n_nodes);
        let mut weights = Vec::with_capacity(n_nodes);
        for (i, nd) in spec.nodes.iter().enumerate() {
            let f = |s: &str| format!("nodes[{i}].{s}");
            let c = schedule(&f("C"), &nd.c)?;
            if c.shape().1 != n {
                return Err(Error::scenario(f("C"), format!("must have {n} columns")));
            }
            let d = schedule(&f("D"), &nd.d)?;
            if d.shape().0 != c.shape().0 {
                return Err(Error::scenario(f("D"), format!("must have {} rows", c.shape().0)));
            }
            for dm in d.values() {
                spd(&f("D"), &(dm * &dm.transpose()))
                    .map_err(|_| Error::scenario(f("D"), "D D' must be positive definite"))?;
            }
            let fm = matrix(&f("F"), &nd.f)?;
            if fm.rows() != n {
                return Err(Error::scenario(f("F"), format!("must have {n} rows")));
            }
            if nd.xi.len() != n {
                return Err(Error::scenario(f("xi"), format!("must have {n} entries")));
            }
            positive(&f("shaper_gain"), nd.shaper_gain)?;
            let nf = fm.cols();
            shapers.push(make_shaper(nf, nd.shaper_gain).map_err(field_err(&f("shaper_gain")))?);
            let weight = |name: &str, rows: &Option<Rows>, dim: usize| -> Result<Matrix> {
                match rows {
                    None => Ok(Matrix::identity(dim)),
                    Some(r) => {
                        let m = matrix(&f(name), r)?;
                        expect_shape(&f(name), &m, (dim, dim))?;
                        spd(&f(name), &m)?;
                        Ok(m)
                    }
                }
            };
            weights.push(InitialWeights {
                x: weight("X", &nd.x, n)?,
                x_check: weight("X_check", &nd.x_check, nf)?,
                x_bar: weight("X_bar", &nd.x_bar, n)?,
            });
            xi.push(nd.xi.clone());
            nodes.push(NodeModel { c, d, f: fm });
        }
        let model = PlantModel::new(a, b, nodes, spec.plant.x0.clone()).map_err(field_err("plant"))?;

        let mut neighbors: Vec<Vec<Edge>> = vec![Vec::new(); n_nodes];
        let mut z_obs: Vec<Vec<Matrix>> = vec![Vec::new(); n_nodes];
        let any_obs = spec.edges.iter().any(|e| e.z_observer.is_some());
        for (k, e) in spec.edges.iter().enumerate() {
            let f = |s: &str| format!("edges[{k}].{s}");
            let tag = format!("edge ({},{})", e.to, e.from);
            if e.to >= n_nodes {
                return Err(Error::scenario(f("to"), format!("{tag}: node index out of range")));
            }
            if e.from >= n_nodes {
                return Err(Error::scenario(f("from"), format!("{tag}: node index out of range")));
            }
            if e.to == e.from {
                return Err(Error::scenario(f("from"), format!("{tag}: self loop")));
            }
            if neighbors[e.to].iter().any(|x| x.from == e.from) {
                return Err(Error::scenario(f("from"), format!("{tag}: duplicate edge")));
            }
            let w = matrix(&f("W"), &e.w)?;
            if w.cols() != n {
                return Err(Error::scenario(
                    f("W"),
                    format!("{tag}: W has {} columns, state dimension is {n}", w.cols()),
                ));
            }
            let h = matrix(&f("H"), &e.h)?;
            if h.rows() != w.rows() {
                return Err(Error::scenario(f("H"), format!("{tag}: must have {} rows", w.rows())));
            }
            let z = matrix(&f("Z"), &e.z)?;
            expect_shape(&f("Z"), &z, (w.rows(), w.rows()))?;
            spd(&f("Z"), &z).map_err(|err| Error::scenario(f("Z"), format!("{tag}: {err}")))?;
            let zo = match &e.z_observer {
                Some(r) => {
                    let m = matrix(&f("Z_observer"), r)?;
                    expect_shape(&f("Z_observer"), &m, (w.rows(), w.rows()))?;
                    spd(&f("Z_observer"), &m)?;
                    m
                }
                None => z.clone(),
            };
            neighbors[e.to].push(Edge { from: e.from, w, h, z });
            z_obs[e.to].push(zo);
        }
        let topology = Topology::new(n, neighbors).map_err(field_err("edges"))?;

        let mut signals = Vec::with_capacity(spec.attacks.len());
        for (k, a) in spec.attacks.iter().enumerate() {
            let f = |s: &str| format!("attacks[{k}].{s}");
            if a.node >= n_nodes {
                return Err(Error::scenario(f("node"), "node index out of range"));
            }
            let dim = model.nodes[a.node].attack_dim();
            let comps = a
                .components
                .iter()
                .map(|c| match c {
                    AttackComponentSpec::Constant { level } => AttackComponent::Constant { level: level.clone() },
                    AttackComponentSpec::Decaying { amplitude, rate } => AttackComponent::Decaying {
                        amplitude: amplitude.clone(),
                        rate: *rate,
                    },
                    AttackComponentSpec::Pulse {
                        amplitude,
                        delay,
                        width,
                    } => AttackComponent::Pulse {
                        amplitude: amplitude.clone(),
                        delay: *delay,
                        width: *width,
                    },
                })
                .collect();
            signals.push(AttackSignal::new(a.node, a.onset, dim, comps).map_err(field_err(&f("components")))?);
        }

        let p = match &spec.design.p {
            Some(r) => {
                let m = matrix("design.P", r)?;
                expect_shape("design.P", &m, (n * n_nodes, n * n_nodes))?;
                if (&m - &m.transpose()).max_abs() > 1e-12 * m.max_abs().max(1.0) || lambda_min(&m)? < -1e-12 {
                    return Err(Error::scenario("design.P", "must be symmetric positive semidefinite"));
                }
                m
            }
            None => Matrix::identity(n * n_nodes),
        };
        positive("design.gamma", spec.design.gamma)?;
        positive("design.gamma_bar", spec.design.gamma_bar)?;
        positive("design.margin", spec.design.margin)?;
        positive("design.step", spec.design.step)?;
        positive("design.bound_cap_factor", spec.design.bound_cap_factor)?;
        if let Some(hz) = spec.design.horizon {
            positive("design.horizon", hz)?;
            if hz < spec.sim.horizon {
                return Err(Error::scenario("design.horizon", "must cover the simulation horizon"));
            }
        }
        if !(spec.sim.horizon >= 0.0) || !spec.sim.horizon.is_finite() {
            return Err(Error::scenario("sim.horizon", "must be >= 0"));
        }
        if let Some(h) = spec.sim.step {
            positive("sim.step", h)?;
            let ratio = spec.design.step / h;
            if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) || ratio.round() < 1.0 {
                return Err(Error::scenario(
                    "sim.step",
                    "must divide design.step an integer number of times",
                ));
            }
        }

        let stochastic = spec.disturbance.as_ref().is_some_and(|d| is_stochastic(&d.w))
            || spec.nodes.iter().any(|n| is_stochastic(&n.v))
            || spec.edges.iter().any(|e| is_stochastic(&e.v));
        if stochastic && spec.sim.seed.is_none() {
            return Err(Error::scenario("sim.seed", "required for white-noise disturbances"));
        }
        // TOML integers are signed 64-bit.
        if spec.sim.seed.is_some_and(|s| s > i64::MAX as u64) {
            return Err(Error::scenario("sim.seed", "must not exceed 9223372036854775807"));
        }

        let scenario = Scenario {
            model,
            topology,
            shapers,
            attacks: AttackScenario { signals },
            xi,
            weights,
            p,
            observer_z: if any_obs { Some(z_obs) } else { None },
            spec,
        };
        // Realize once so that disturbance errors surface during loading.
        scenario.disturbance()?;
        Ok(scenario)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Scenario::from_spec(spec)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(&self.spec).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn node_count(&self) -> usize {
        self.model.node_count()
    }

    pub fn sim_step(&self) -> f64 {
        self.spec.sim.step.unwrap_or(self.spec.design.step)
    }

    pub fn design_horizon(&self) -> f64 {
        self.spec.design.horizon.unwrap_or(self.spec.sim.horizon)
    }

    pub fn design_params(&self) -> Result<DesignParams> {
        Ok(DesignParams {
            gamma: self.spec.design.gamma,
            gamma_bar: self.spec.design.gamma_bar,
            p: self.p.clone(),
            margin: self.spec.design.margin,
            grid: TimeGrid::new(self.spec.design.step, self.design_horizon())?,
            bound_cap_factor: self.spec.design.bound_cap_factor,
            weights: self.weights.clone(),
            observer_z: self.observer_z.clone(),
        })
    }

    pub fn sim_options(&self) -> SimOptions {
        SimOptions {
            horizon: self.spec.sim.horizon,
            step: self.sim_step(),
            feedback: self.spec.sim.feedback,
        }
    }

    /// Disturbance paths realized from `sim.seed`.
    pub fn disturbance(&self) -> Result<DisturbanceRealization> {
        let seed = self.spec.sim.seed;
        let w_terms = self.spec.disturbance.as_ref().map(|d| d.w.as_slice()).unwrap_or(&[]);
        let w = realize("disturbance.w", w_terms, self.model.m(), seed, 0)?;
        let v = self
            .spec
            .nodes
            .iter()
            .enumerate()
            .map(|(i, nd)| {
                realize(
                    &format!("nodes[{i}].v"),
                    &nd.v,
                    self.model.nodes[i].noise_dim(),
                    seed,
                    1 + i as u64,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let mut v_edges: Vec<Vec<Signal>> = vec![Vec::new(); self.node_count()];
        let base = 1 + self.node_count() as u64;
        for (k, e) in self.spec.edges.iter().enumerate() {
            let dim = self.spec_edge_noise_dim(e);
            v_edges[e.to].push(realize(&format!("edges[{k}].v"), &e.v, dim, seed, base + k as u64)?);
        }
        Ok(DisturbanceRealization { w, v, v_edges })
    }

    fn spec_edge_noise_dim(&self, e: &EdgeSpec) -> usize {
        e.h.first().map(Vec::len).unwrap_or(0)
    }

    /// Same scenario with attenuation levels or seed replaced.
    pub fn with_overrides(&self, gamma: Option<f64>, gamma_bar: Option<f64>, seed: Option<u64>) -> Result<Scenario> {
        let mut spec = self.spec.clone();
        if let Some(g) = gamma {
            spec.design.gamma = g;
        }
        if let Some(g) = gamma_bar {
            spec.design.gamma_bar = g;
        }
        if let Some(s) = seed {
            spec.sim.seed = Some(s);
        }
        Scenario::from_spec(spec)
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::parse(&text)
}
