//! The observed plant, its node measurements and the exogenous disturbances.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::matlin::{lambda_min, Matrix};

/// A matrix-valued function of time: constant, or piecewise constant with a
/// right-continuous value at each breakpoint.
#[derive(Debug, Clone, PartialEq)]
pub enum Schedule {
    Constant(Matrix),
    Piecewise {
        /// Strictly increasing.
        breakpoints: Vec<f64>,
        /// `breakpoints.len() + 1` values, all the same shape.
        values: Vec<Matrix>,
    },
}

impl Schedule {
    pub fn piecewise(breakpoints: Vec<f64>, values: Vec<Matrix>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::Parameter(format!(
                "{} breakpoints need {} values, got {}",
                breakpoints.len(),
                breakpoints.len() + 1,
                values.len()
            )));
        }
        if breakpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Parameter("breakpoints must increase strictly".into()));
        }
        let shape = values[0].shape();
        if values.iter().any(|v| v.shape() != shape) {
            return Err(Error::dim("schedule values differ in shape"));
        }
        Ok(Schedule::Piecewise { breakpoints, values })
    }

    pub fn at(&self, t: f64) -> &Matrix {
        match self {
            Schedule::Constant(m) => m,
            Schedule::Piecewise { breakpoints, values } => {
                let k = breakpoints.partition_point(|b| *b <= t);
                &values[k]
            }
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.at(0.0).shape()
    }

    /// Every distinct value the schedule takes.
    pub fn values(&self) -> Vec<&Matrix> {
        match self {
            Schedule::Constant(m) => vec![m],
            Schedule::Piecewise { values, .. } => values.iter().collect(),
        }
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Schedule::Constant(_))
    }
}

impl From<Matrix> for Schedule {
    fn from(m: Matrix) -> Self {
        Schedule::Constant(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeModel {
    /// `p_i x n`.
    pub c: Schedule,
    /// `p_i x m_i`.
    pub d: Schedule,
    /// `n x n_fi` attack input channel.
    pub f: Matrix,
}

impl NodeModel {
    pub fn output_dim(&self) -> usize {
        self.c.shape().0
    }

    pub fn noise_dim(&self) -> usize {
        self.d.shape().1
    }

    pub fn attack_dim(&self) -> usize {
        self.f.cols()
    }
}

/// `x' = A(t) x + B(t) w`, `y_i = C_i(t) x + D_i(t) v_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantModel {
    pub a: Schedule,
    pub b: Schedule,
    pub nodes: Vec<NodeModel>,
    pub x0: Vec<f64>,
}

impl PlantModel {
    pub fn new(a: Schedule, b: Schedule, nodes: Vec<NodeModel>, x0: Vec<f64>) -> Result<Self> {
        let model = PlantModel { a, b, nodes, x0 };
        model.validate()?;
        Ok(model)
    }

    fn validate(&self) -> Result<()> {
        let n = self.n();
        if self.a.shape() != (n, n) {
            return Err(Error::dim("A must be square"));
        }
        if self.b.shape().0 != n {
            return Err(Error::dim(format!("B must have {n} rows")));
        }
        if self.x0.len() != n {
            return Err(Error::dim(format!("x0 must have {n} entries")));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.c.shape().1 != n {
                return Err(Error::dim(format!("node {i}: C must have {n} columns")));
            }
            if node.d.shape().0 != node.output_dim() {
                return Err(Error::dim(format!("node {i}: D must have {} rows", node.output_dim())));
            }
            if node.f.rows() != n {
                return Err(Error::dim(format!("node {i}: F must have {n} rows")));
            }
            for d in node.d.values() {
                let dd = d * &d.transpose();
                if !(lambda_min(&dd)? > 0.0) {
                    return Err(Error::NotPositiveDefinite {
                        context: format!("node {i}: D D'"),
                        pivot: 0,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.a.shape().0
    }

    pub fn m(&self) -> usize {
        self.b.shape().1
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn derivative(&self, t: f64, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        eval_plant_derivative(self, t, x, w)
    }
}

pub fn eval_plant_derivative(model: &PlantModel, t: f64, x: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if x.len() != model.n() || w.len() != model.m() {
        return Err(Error::dim(format!(
            "plant expects x in R^{} and w in R^{}, got {} and {}",
            model.n(),
            model.m(),
            x.len(),
            w.len()
        )));
    }
    let mut dx = model.a.at(t).mul_vec(x);
    model.b.at(t).mul_vec_acc(w, &mut dx);
    Ok(dx)
}

pub fn eval_measurement(model: &PlantModel, i: usize, t: f64, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    let node = model
        .nodes
        .get(i)
        .ok_or_else(|| Error::dim(format!("node {i} does not exist")))?;
    if x.len() != model.n() || v.len() != node.noise_dim() {
        return Err(Error::dim(format!(
            "node {i} expects x in R^{} and v in R^{}, got {} and {}",
            model.n(),
            node.noise_dim(),
            x.len(),
            v.len()
        )));
    }
    let mut y = node.c.at(t).mul_vec(x);
    node.d.at(t).mul_vec_acc(v, &mut y);
    Ok(y)
}

/// Square-integrable disturbance building blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    Zero,
    /// Seeded Gaussian samples held constant over `hold` seconds, zero after `window`.
    WhiteNoise {
        samples: Vec<Vec<f64>>,
        hold: f64,
        window: f64,
    },
    /// `amplitude * exp(-rate t)`.
    DecayingExp {
        amplitude: Vec<f64>,
        rate: f64,
    },
    /// `amplitude * sin(2 pi freq t + phase)` on `[start, end)`.
    WindowedSine {
        amplitude: Vec<f64>,
        freq: f64,
        phase: f64,
        start: f64,
        end: f64,
    },
}

impl Primitive {
    pub fn white_noise(dim: usize, amplitude: f64, hold: f64, window: f64, seed: u64) -> Result<Self> {
        if !(hold > 0.0) || !(window >= 0.0) {
            return Err(Error::Parameter("white noise needs hold > 0 and window >= 0".into()));
        }
        let count = (window / hold).ceil() as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let samples = (0..count)
            .map(|_| {
                (0..dim)
                    .map(|_| amplitude * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                    .collect()
            })
            .collect();
        Ok(Primitive::WhiteNoise { samples, hold, window })
    }

    fn add_to(&self, t: f64, out: &mut [f64]) {
        match self {
            Primitive::Zero => {}
            Primitive::WhiteNoise { samples, hold, window } => {
                if t < 0.0 || t >= *window {
                    return;
                }
                // Grid times are k*h in floating point; nudge so t = k*hold lands in slot k.
                let k = (t / hold + 1e-9).floor() as usize;
                if let Some(s) = samples.get(k) {
                    for (o, v) in out.iter_mut().zip(s) {
                        *o += v;
                    }
                }
            }
            Primitive::DecayingExp { amplitude, rate } => {
                if t < 0.0 {
                    return;
                }
                let g = (-rate * t).exp();
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o += a * g;
                }
            }
            Primitive::WindowedSine {
                amplitude,
                freq,
                phase,
                start,
                end,
            } => {
                if t < *start || t >= *end {
                    return;
                }
                let s = (2.0 * std::f64::consts::PI * freq * t + phase).sin();
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o += a * s;
                }
            }
        }
    }

    fn dim(&self) -> Option<usize> {
        match self {
            Primitive::Zero => None,
            Primitive::WhiteNoise { samples, .. } => samples.first().map(Vec::len),
            Primitive::DecayingExp { amplitude, .. } => Some(amplitude.len()),
            Primitive::WindowedSine { amplitude, .. } => Some(amplitude.len()),
        }
    }
}

/// A vector-valued disturbance, the sum of its primitives.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    dim: usize,
    terms: Vec<Primitive>,
}

impl Signal {
    pub fn zero(dim: usize) -> Self {
        Signal { dim, terms: vec![] }
    }

    pub fn new(dim: usize, terms: Vec<Primitive>) -> Result<Self> {
        for t in &terms {
            if let Some(d) = t.dim() {
                if d != dim {
                    return Err(Error::dim(format!(
                        "disturbance term has dimension {d}, channel has {dim}"
                    )));
                }
            }
        }
        Ok(Signal { dim, terms })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_zero(&self) -> bool {
        self.terms.iter().all(|t| matches!(t, Primitive::Zero))
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        out
    }

    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for term in &self.terms {
            term.add_to(t, out);
        }
    }
}

/// Realized `w`, `v_i` and `v_ij` for one run.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceRealization {
    pub w: Signal,
    pub v: Vec<Signal>,
    /// `v_edges[i][k]` pairs with the `k`-th in-edge of node `i`.
    pub v_edges: Vec<Vec<Signal>>,
}

impl DisturbanceRealization {
    pub fn is_zero(&self) -> bool {
        self.w.is_zero() && self.v.iter().all(Signal::is_zero) && self.v_edges.iter().flatten().all(Signal::is_zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matlin::rk4_step;
    use rand::Rng;

    fn scalar(v: f64) -> Matrix {
        Matrix::column(&[v])
    }

    fn node(c: Matrix, d: Matrix, n: usize) -> NodeModel {
        NodeModel {
            c: c.into(),
            d: d.into(),
            f: Matrix::column(&vec![1.0; n]),
        }
    }

    #[test]
    fn static_plant_derivative_is_zero() {
        let m = PlantModel::new(
            Matrix::zeros(2, 2).into(),
            Matrix::zeros(2, 1).into(),
            vec![node(Matrix::identity(2), Matrix::identity(2), 2)],
            vec![1.0, 2.0],
        )
        .unwrap();
        assert_eq!(m.derivative(0.0, &[1.0, 2.0], &[4.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn scalar_arithmetic() {
        let m = PlantModel::new(
            scalar(-1.0).into(),
            scalar(1.0).into(),
            vec![node(scalar(1.0), scalar(1.0), 1)],
            vec![2.0],
        )
        .unwrap();
        assert_eq!(m.derivative(0.0, &[2.0], &[3.0]).unwrap(), vec![1.0]);
        assert!(matches!(
            m.derivative(0.0, &[2.0, 1.0], &[3.0]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn rotation_conserves_norm() {
        let omega = 1.3;
        let a = Matrix::from_rows(&[vec![0.0, omega], vec![-omega, 0.0]]).unwrap();
        let m = PlantModel::new(
            a.into(),
            Matrix::zeros(2, 1).into(),
            vec![node(Matrix::identity(2), Matrix::identity(2), 2)],
            vec![1.0, 0.5],
        )
        .unwrap();
        let h = 1e-3;
        let mut x = Matrix::column(&m.x0);
        let n0 = x.frobenius_norm();
        for k in 0..10_000 {
            x = rk4_step(
                |t, y| Ok(Matrix::column(&m.derivative(t, y.as_slice(), &[0.0])?)),
                k as f64 * h,
                &x,
                h,
            )
            .unwrap();
            assert!((x.frobenius_norm() - n0).abs() < 1e-6);
        }
    }

    #[test]
    fn measurement_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = Matrix::from_vec(2, 3, (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let d = Matrix::from_rows(&[vec![1.0, 0.2], vec![0.0, 1.5]]).unwrap();
        let m = PlantModel::new(
            Matrix::zeros(3, 3).into(),
            Matrix::zeros(3, 1).into(),
            vec![
                node(Matrix::identity(3), Matrix::identity(3), 3),
                node(c.clone(), d.clone(), 3),
            ],
            vec![0.0; 3],
        )
        .unwrap();
        let x = [0.3, -1.0, 2.0];
        assert_eq!(eval_measurement(&m, 0, 0.0, &x, &[0.0; 3]).unwrap(), x.to_vec());
        let v = [0.7, -0.4];
        assert_eq!(eval_measurement(&m, 1, 0.0, &[0.0; 3], &v).unwrap(), d.mul_vec(&v));
        let y = eval_measurement(&m, 1, 0.0, &x, &v).unwrap();
        for r in 0..2 {
            let expect: f64 =
                (0..3).map(|k| c[(r, k)] * x[k]).sum::<f64>() + (0..2).map(|k| d[(r, k)] * v[k]).sum::<f64>();
            assert!((y[r] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_singular_measurement_noise() {
        let err = PlantModel::new(
            scalar(0.0).into(),
            scalar(0.0).into(),
            vec![node(scalar(1.0), scalar(0.0), 1)],
            vec![0.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NotPositiveDefinite { .. }));
    }

    #[test]
    fn piecewise_schedule_uses_right_limit() {
        let s = Schedule::piecewise(vec![1.0, 2.0], vec![scalar(0.0), scalar(1.0), scalar(2.0)]).unwrap();
        assert_eq!(s.at(0.999)[(0, 0)], 0.0);
        assert_eq!(s.at(1.0)[(0, 0)], 1.0);
        assert_eq!(s.at(2.5)[(0, 0)], 2.0);
        // Deterministic: repeated evaluation is bit-identical.
        assert_eq!(s.at(1.5).as_slice().to_vec(), s.at(1.5).as_slice().to_vec());
    }

    #[test]
    fn white_noise_is_seeded_and_windowed() {
        let p = Primitive::white_noise(2, 0.5, 0.01, 1.0, 42).unwrap();
        let q = Primitive::white_noise(2, 0.5, 0.01, 1.0, 42).unwrap();
        assert_eq!(p, q);
        let s = Signal::new(2, vec![p]).unwrap();
        assert_eq!(s.eval(0.005), s.eval(0.0));
        assert_ne!(s.eval(0.01), s.eval(0.0));
        assert_eq!(s.eval(1.0), vec![0.0, 0.0]);
        // Slot boundaries computed as k*h in floating point land in slot k.
        assert_eq!(s.eval(3.0 * 0.01), s.eval(0.0305));
    }

    #[test]
    fn signal_rejects_wrong_dimension() {
        assert!(Signal::new(
            2,
            vec![Primitive::DecayingExp {
                amplitude: vec![1.0],
                rate: 1.0
            }]
        )
        .is_err());
    }
}
