//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use resobs::scenario::{load_scenario, Scenario, ScenarioSpec};

pub const SCENARIOS: [&str; 5] = [
    "single_scalar",
    "scalar_pair",
    "oscillator_three",
    "three_state_four",
    "switching_pair",
];

pub fn scenario_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/scenarios")
        .join(format!("{name}.toml"))
}

pub fn scenario(name: &str) -> Scenario {
    load_scenario(&scenario_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn rebuild(sc: &Scenario, edit: impl FnOnce(&mut ScenarioSpec)) -> Scenario {
    let mut spec = sc.spec.clone();
    edit(&mut spec);
    Scenario::from_spec(spec).expect("edited scenario is valid")
}

/// Same scenario with every attack, disturbance and noise term removed.
pub fn quiet(sc: &Scenario) -> Scenario {
    rebuild(sc, |s| {
        s.attacks.clear();
        s.disturbance = None;
        for nd in &mut s.nodes {
            nd.v.clear();
        }
        for e in &mut s.edges {
            e.v.clear();
        }
    })
}

/// Dense row-major matrices used by the test-side oracles, kept independent
/// of the library's linear algebra.
pub type Dense = Vec<Vec<f64>>;

pub fn zeros(r: usize, c: usize) -> Dense {
    vec![vec![0.0; c]; r]
}

pub fn eye(n: usize) -> Dense {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

pub fn mul(a: &Dense, b: &Dense) -> Dense {
    let (r, k, c) = (a.len(), b.len(), b.first().map_or(0, Vec::len));
    let mut out = zeros(r, c);
    for i in 0..r {
        for l in 0..k {
            let x = a[i][l];
            for j in 0..c {
                out[i][j] += x * b[l][j];
            }
        }
    }
    out
}

pub fn tr(a: &Dense) -> Dense {
    let c = a.first().map_or(0, Vec::len);
    (0..c).map(|j| a.iter().map(|row| row[j]).collect()).collect()
}

pub fn lin(a: &Dense, s: f64, b: &Dense) -> Dense {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + s * q).collect())
        .collect()
}

pub fn scale(a: &Dense, s: f64) -> Dense {
    a.iter().map(|r| r.iter().map(|x| s * x).collect()).collect()
}

pub fn put(dst: &mut Dense, r0: usize, c0: usize, b: &Dense) {
    for (i, row) in b.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            dst[r0 + i][c0 + j] = *v;
        }
    }
}

pub fn block_diag(blocks: &[Dense]) -> Dense {
    let r: usize = blocks.iter().map(Vec::len).sum();
    let c: usize = blocks.iter().map(|b| b.first().map_or(0, Vec::len)).sum();
    let mut out = zeros(r, c);
    let (mut i, mut j) = (0, 0);
    for b in blocks {
        put(&mut out, i, j, b);
        i += b.len();
        j += b.first().map_or(0, Vec::len);
    }
    out
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inv(a: &Dense) -> Dense {
    let n = a.len();
    let mut m: Dense = a
        .iter()
        .zip(eye(n))
        .map(|(r, e)| r.iter().copied().chain(e).collect())
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| m[x][col].abs().partial_cmp(&m[y][col].abs()).unwrap())
            .unwrap();
        m.swap(col, piv);
        let p = m[col][col];
        assert!(p.abs() > 1e-300, "singular matrix");
        for v in m[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = m[r][col];
                if f != 0.0 {
                    let pivot_row = m[col].clone();
                    for (v, pv) in m[r].iter_mut().zip(pivot_row) {
                        *v -= f * pv;
                    }
                }
            }
        }
    }
    m.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// Whether a symmetric matrix admits a Cholesky factorization.
pub fn is_positive_definite(a: &Dense) -> bool {
    let n = a.len();
    let mut l = zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d.is_nan() || d <= 0.0 {
                    return false;
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    true
}

pub fn frob(a: &Dense) -> f64 {
    a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `Phi + Phi' - Delta` rebuilt from the edge data.
pub fn coupling_oracle(topo: &resobs::network::Topology) -> Dense {
    let n = topo.state_dim();
    let nn = topo.node_count();
    let mut phi = zeros(n * nn, n * nn);
    let mut delta = zeros(n * nn, n * nn);
    for i in 0..nn {
        let mut d = zeros(n, n);
        for e in topo.edges(i) {
            let (w, h, z) = (e.w.to_rows(), e.h.to_rows(), e.z.to_rows());
            let u_inv = inv(&lin(&mul(&h, &tr(&h)), 1.0, &z));
            let wt = tr(&w);
            d = lin(&d, 1.0, &mul(&mul(&mul(&mul(&wt, &u_inv), &z), &u_inv), &w));
            put(&mut phi, i * n, e.from * n, &scale(&mul(&mul(&wt, &u_inv), &w), -1.0));
        }
        put(&mut phi, i * n, i * n, &d);
        put(&mut delta, i * n, i * n, &d);
    }
    lin(&lin(&phi, 1.0, &tr(&phi)), -1.0, &delta)
}
