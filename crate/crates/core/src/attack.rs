//! Biasing attack inputs and the input-tracking shaper used to model them.
//!
//! An admissible attack is a steady level plus exponentially vanishing and
//! finite-energy terms, switched on at an onset time. Such a signal has a
//! rational Laplace transform with at most one pole at the origin, so the
//! constant-gain tracking loop `fhat' = -g (fhat - f)` follows it with a
//! square-integrable mismatch that also vanishes asymptotically.

use crate::error::{Error, Result};
use crate::matlin::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub enum AttackComponent {
    Constant {
        level: Vec<f64>,
    },
    /// `amplitude * exp(-rate (t - onset))`, `rate > 0`.
    Decaying {
        amplitude: Vec<f64>,
        rate: f64,
    },
    /// Rectangular pulse on `[onset + delay, onset + delay + width)`.
    Pulse {
        amplitude: Vec<f64>,
        delay: f64,
        width: f64,
    },
}

impl AttackComponent {
    fn dim(&self) -> usize {
        match self {
            AttackComponent::Constant { level } => level.len(),
            AttackComponent::Decaying { amplitude, .. } | AttackComponent::Pulse { amplitude, .. } => amplitude.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttackSignal {
    pub node: usize,
    pub onset: f64,
    dim: usize,
    components: Vec<AttackComponent>,
}

impl AttackSignal {
    pub fn new(node: usize, onset: f64, dim: usize, components: Vec<AttackComponent>) -> Result<Self> {
        if !(onset >= 0.0) || !onset.is_finite() {
            return Err(Error::Parameter(format!("attack onset must be >= 0, got {onset}")));
        }
        for c in &components {
            if c.dim() != dim {
                return Err(Error::dim(format!(
                    "attack component has dimension {}, node {node} attack channel has {dim}",
                    c.dim()
                )));
            }
            match c {
                AttackComponent::Decaying { rate, .. } if !(*rate > 0.0) => {
                    return Err(Error::Parameter(format!("decay rate must be > 0, got {rate}")));
                }
                AttackComponent::Pulse { delay, width, .. } if !(*delay >= 0.0 && *width >= 0.0) => {
                    return Err(Error::Parameter("pulse delay and width must be >= 0".into()));
                }
                _ => {}
            }
        }
        Ok(AttackSignal {
            node,
            onset,
            dim,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[AttackComponent] {
        &self.components
    }

    /// Sup-norm of the steady level, used to scale tracking tolerances.
    pub fn steady_level(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for c in &self.components {
            if let AttackComponent::Constant { level } = c {
                for (o, l) in out.iter_mut().zip(level) {
                    *o += l;
                }
            }
        }
        out
    }

    pub fn add_to(&self, t: f64, out: &mut [f64]) {
        if t < self.onset {
            return;
        }
        let s = t - self.onset;
        for c in &self.components {
            match c {
                AttackComponent::Constant { level } => {
                    for (o, l) in out.iter_mut().zip(level) {
                        *o += l;
                    }
                }
                AttackComponent::Decaying { amplitude, rate } => {
                    let g = (-rate * s).exp();
                    for (o, a) in out.iter_mut().zip(amplitude) {
                        *o += a * g;
                    }
                }
                AttackComponent::Pulse {
                    amplitude,
                    delay,
                    width,
                } => {
                    if s >= *delay && s < delay + width {
                        for (o, a) in out.iter_mut().zip(amplitude) {
                            *o += a;
                        }
                    }
                }
            }
        }
    }
}

pub fn eval_attack(sig: &AttackSignal, t: f64) -> Vec<f64> {
    let mut out = vec![0.0; sig.dim];
    sig.add_to(t, &mut out);
    out
}

/// All attack signals of a run; several signals may target one node.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttackScenario {
    pub signals: Vec<AttackSignal>,
}

impl AttackScenario {
    pub fn none() -> Self {
        AttackScenario::default()
    }

    pub fn is_empty(&self) -> bool {
        self.signals.is_empty()
    }

    pub fn is_attacked(&self, node: usize) -> bool {
        self.signals.iter().any(|s| s.node == node)
    }

    /// `f_i(t)` written into `out` (zeroed first).
    pub fn eval_node_into(&self, node: usize, t: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for s in self.signals.iter().filter(|s| s.node == node) {
            s.add_to(t, out);
        }
    }
}

/// State-space realization `eps' = Omega eps + Gamma nu`, `fhat = Upsilon eps`
/// of the tracking loop integrator `(1/s) G(s)` with `G(s) = g I`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackShaper {
    pub omega: Matrix,
    pub gamma: Matrix,
    pub upsilon: Matrix,
    pub gain: f64,
}

impl AttackShaper {
    pub fn dim(&self) -> usize {
        self.omega.rows()
    }

    /// Right-hand side of the tracking loop with `nu = fhat - f`.
    pub fn tracking_derivative(&self, eps: &[f64], f: &[f64]) -> Vec<f64> {
        let fhat = self.upsilon.mul_vec(eps);
        let nu: Vec<f64> = fhat.iter().zip(f).map(|(a, b)| a - b).collect();
        let mut d = self.omega.mul_vec(eps);
        self.gamma.mul_vec_acc(&nu, &mut d);
        d
    }
}

pub fn make_shaper(n_fi: usize, g: f64) -> Result<AttackShaper> {
    if !(g > 0.0) || !g.is_finite() {
        return Err(Error::Parameter(format!("shaper gain must be positive, got {g}")));
    }
    if n_fi == 0 {
        return Err(Error::Parameter("attack channel dimension must be >= 1".into()));
    }
    Ok(AttackShaper {
        omega: Matrix::zeros(n_fi, n_fi),
        gamma: Matrix::scaled_identity(n_fi, -g),
        upsilon: Matrix::identity(n_fi),
        gain: g,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matlin::rk4_step;

    fn track(shaper: &AttackShaper, sig: &AttackSignal, horizon: f64, h: f64) -> (Vec<f64>, Vec<f64>) {
        let steps = (horizon / h).round() as usize;
        let mut eps = Matrix::zeros(shaper.dim(), 1);
        let mut err_sq = Vec::with_capacity(steps + 1);
        let mut err = Vec::with_capacity(steps + 1);
        for k in 0..=steps {
            let t = k as f64 * h;
            let f = eval_attack(sig, t);
            let e: f64 = eps.as_slice().iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum();
            err_sq.push(e);
            err.push(e.sqrt());
            if k < steps {
                eps = rk4_step(
                    |s, y| {
                        Ok(Matrix::column(
                            &shaper.tracking_derivative(y.as_slice(), &eval_attack(sig, s)),
                        ))
                    },
                    t,
                    &eps,
                    h,
                )
                .unwrap();
            }
        }
        (err_sq, err)
    }

    fn trapz(v: &[f64], h: f64) -> f64 {
        v.windows(2).map(|w| 0.5 * (w[0] + w[1]) * h).sum()
    }

    #[test]
    fn scalar_and_vector_shapers() {
        let s = make_shaper(1, 1.0).unwrap();
        assert_eq!(s.omega, Matrix::column(&[0.0]));
        assert_eq!(s.gamma, Matrix::column(&[-1.0]));
        assert_eq!(s.upsilon, Matrix::column(&[1.0]));
        let s = make_shaper(2, 3.0).unwrap();
        assert_eq!(s.omega, Matrix::zeros(2, 2));
        assert_eq!(s.gamma, Matrix::scaled_identity(2, -3.0));
        assert_eq!(s.upsilon, Matrix::identity(2));
    }

    #[test]
    fn shaper_rejects_non_positive_gain() {
        assert!(make_shaper(1, 0.0).is_err());
        assert!(make_shaper(1, -1.0).is_err());
    }

    #[test]
    fn first_order_step_response() {
        let shaper = make_shaper(1, 2.0).unwrap();
        let sig = AttackSignal::new(0, 0.0, 1, vec![AttackComponent::Constant { level: vec![1.0] }]).unwrap();
        let h = 1e-3;
        let mut eps = Matrix::zeros(1, 1);
        for k in 0..2000 {
            eps = rk4_step(
                |s, y| {
                    Ok(Matrix::column(
                        &shaper.tracking_derivative(y.as_slice(), &eval_attack(&sig, s)),
                    ))
                },
                k as f64 * h,
                &eps,
                h,
            )
            .unwrap();
        }
        let analytic = 1.0 - (-4.0f64).exp();
        assert!((eps[(0, 0)] - analytic).abs() < 1e-6);
        assert!((eps[(0, 0)] - 0.98168).abs() <= 1e-4);
    }

    #[test]
    fn evaluation_cases() {
        let sig = AttackSignal::new(
            0,
            2.0,
            1,
            vec![
                AttackComponent::Constant { level: vec![1.0] },
                AttackComponent::Decaying {
                    amplitude: vec![2.0],
                    rate: 1.0,
                },
            ],
        )
        .unwrap();
        assert_eq!(eval_attack(&sig, 1.999), vec![0.0]);
        let v = eval_attack(&sig, 3.0)[0];
        assert!((v - (1.0 + 2.0 / std::f64::consts::E)).abs() < 1e-15);
        assert!((v - 1.73576).abs() < 1e-5);

        let c = AttackSignal::new(1, 0.5, 1, vec![AttackComponent::Constant { level: vec![5.0] }]).unwrap();
        assert_eq!(eval_attack(&c, 0.5), vec![5.0]);
        assert_eq!(eval_attack(&c, 100.0), vec![5.0]);
    }

    #[test]
    fn rejects_non_decaying_component() {
        let bad = AttackSignal::new(
            0,
            0.0,
            1,
            vec![AttackComponent::Decaying {
                amplitude: vec![1.0],
                rate: 0.0,
            }],
        );
        assert!(bad.is_err());
    }

    #[test]
    fn tracking_error_energy_converges() {
        let g = 1.5;
        let shaper = make_shaper(1, g).unwrap();
        let sig = AttackSignal::new(
            0,
            1.0,
            1,
            vec![
                AttackComponent::Constant { level: vec![0.8] },
                AttackComponent::Decaying {
                    amplitude: vec![-2.0],
                    rate: 0.7,
                },
                AttackComponent::Pulse {
                    amplitude: vec![3.0],
                    delay: 2.0,
                    width: 0.5,
                },
            ],
        )
        .unwrap();
        let h = 1e-3;
        let horizon = 40.0;
        let (err_sq, err) = track(&shaper, &sig, horizon, h);
        let half = err_sq.len() / 2;
        let total = trapz(&err_sq, h);
        let tail = trapz(&err_sq[half..], h);
        assert!(total > 0.0);
        assert!(tail < 0.01 * total, "tail {tail} total {total}");

        // Asymptotic tracking once 20/g has elapsed since the last transient.
        assert!(*err.last().unwrap() <= 1e-3 * 0.8);
    }
}
