//! `design -> simulate -> verify` orchestration and artifact files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::attack::AttackScenario;
use crate::designer::{design, search_min_gamma, DesignArtifacts, DesignReport, DesignStep};
use crate::error::{Error, Result};
use crate::metrics::{verify, VerificationInputs, VerificationReport};
use crate::scenario::Scenario;
use crate::simulator::{simulate, simulate_error_system_oracle, SimInputs, SimOptions, SimTrace};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;
pub const EXIT_VERIFICATION_FAILED: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Design,
    Simulate,
    Verify,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub artifacts: DesignArtifacts,
    pub design_report: DesignReport,
    pub trace: Option<SimTrace>,
    pub verification: Option<VerificationReport>,
    pub written: Vec<PathBuf>,
}

impl PipelineOutput {
    pub fn exit_code(&self) -> i32 {
        match &self.verification {
            Some(v) if !v.passed => EXIT_VERIFICATION_FAILED,
            _ => EXIT_OK,
        }
    }
}

pub fn exit_code_for_error(err: &Error) -> i32 {
    match err {
        Error::Infeasible { .. } => EXIT_INFEASIBLE,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_USAGE,
    }
}

pub fn run_design(sc: &Scenario) -> Result<(DesignArtifacts, DesignReport)> {
    let params = sc.design_params()?;
    let art = design(&sc.model, &sc.topology, &sc.shapers, &params)?;
    let mut report = art.report();
    if sc.spec.design.gamma_search {
        let step = |w| search_min_gamma(&sc.model, &sc.topology, &sc.shapers, &params, w);
        report.gamma_min = Some(step(DesignStep::Detector)?);
        report.gamma_bar_min = Some(step(DesignStep::Observer)?);
    }
    Ok((art, report))
}

fn write_file(
    dir: &Path,
    name: &str,
    written: &mut Vec<PathBuf>,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<()>,
) -> Result<()> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path)?);
    body(&mut w)?;
    w.flush()?;
    written.push(path);
    Ok(())
}

/// Gains on the design grid, one row per grid point; every matrix entry is a
/// column named like `Lbar1[0][2]` or `K0.2[1][0]` (node 0, edge from node 2).
pub fn write_gains_csv<W: Write>(art: &DesignArtifacts, sc: &Scenario, mut out: W) -> Result<()> {
    let mut header = vec!["t".to_string()];
    let name = |prefix: &str, i: usize, from: Option<usize>, m: &crate::Matrix, header: &mut Vec<String>| {
        for r in 0..m.rows() {
            for c in 0..m.cols() {
                match from {
                    Some(j) => header.push(format!("{prefix}{i}.{j}[{r}][{c}]")),
                    None => header.push(format!("{prefix}{i}[{r}][{c}]")),
                }
            }
        }
    };
    for (i, nd) in art.nodes.iter().enumerate() {
        let g = &nd.gains[0];
        let edges = sc.topology.edges(i);
        for (prefix, l, ks) in [
            ("L", &g.l, &g.k),
            ("Lbar", &g.l_bar, &g.k_bar),
            ("Lcheck", &g.l_check, &g.k_check),
        ] {
            name(prefix, i, None, l, &mut header);
            let kp = prefix.replacen('L', "K", 1);
            for (e, k) in edges.iter().zip(ks) {
                name(&kp, i, Some(e.from), k, &mut header);
            }
        }
    }
    writeln!(out, "{}", header.join(","))?;
    let mut line = String::new();
    for k in 0..art.grid.len() {
        line.clear();
        line.push_str(&format!("{:.17e}", art.grid.t(k)));
        for nd in &art.nodes {
            let g = &nd.gains[k];
            for (l, ks) in [(&g.l, &g.k), (&g.l_bar, &g.k_bar), (&g.l_check, &g.k_check)] {
                for m in std::iter::once(l).chain(ks.iter()) {
                    for v in m.as_slice() {
                        line.push_str(&format!(",{v:.17e}"));
                    }
                }
            }
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Closed-loop run of `sc` with the designed gains.
pub fn simulate_scenario(sc: &Scenario, art: &DesignArtifacts) -> Result<SimTrace> {
    let dist = sc.disturbance()?;
    simulate(&sim_inputs(sc, art, &dist, &sc.attacks), &sc.sim_options())
}

fn sim_inputs<'a>(
    sc: &'a Scenario,
    art: &'a DesignArtifacts,
    dist: &'a crate::plant::DisturbanceRealization,
    attacks: &'a AttackScenario,
) -> SimInputs<'a> {
    SimInputs {
        model: &sc.model,
        topo: &sc.topology,
        design: art,
        dist,
        attacks,
        xi: &sc.xi,
    }
}

/// Checks `trace` against the oracle run and an attack-free calibration run
/// of the same scenario.
pub fn verify_trace(sc: &Scenario, art: &DesignArtifacts, trace: &SimTrace) -> Result<VerificationReport> {
    let dist = sc.disturbance()?;
    let opts = SimOptions {
        feedback: trace.feedback,
        ..sc.sim_options()
    };
    let oracle = simulate_error_system_oracle(&sim_inputs(sc, art, &dist, &sc.attacks), &opts)?;
    let none = AttackScenario::none();
    let calibration = simulate(&sim_inputs(sc, art, &dist, &none), &opts)?;
    verify(&VerificationInputs {
        trace,
        oracle: &oracle,
        calibration: &calibration,
        design: art,
        model: &sc.model,
        topo: &sc.topology,
    })
}

/// Runs the pipeline up to `cmd`, writing artifacts to `out_dir` when given.
pub fn run_pipeline(sc: &Scenario, cmd: Command, out_dir: Option<&Path>) -> Result<PipelineOutput> {
    let mut written = Vec::new();
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let (artifacts, design_report) = run_design(sc)?;
    if let Some(dir) = out_dir {
        write_file(dir, "design_report.json", &mut written, |w| {
            serde_json::to_writer_pretty(&mut *w, &design_report)?;
            writeln!(w)?;
            Ok(())
        })?;
        write_file(dir, "gains.csv", &mut written, |w| write_gains_csv(&artifacts, sc, w))?;
    }
    let mut out = PipelineOutput {
        artifacts,
        design_report,
        trace: None,
        verification: None,
        written,
    };
    if cmd == Command::Design {
        return Ok(out);
    }

    let trace = simulate_scenario(sc, &out.artifacts)?;
    if let Some(dir) = out_dir {
        write_file(dir, "trace.csv", &mut out.written, |w| trace.write_csv(w))?;
    }

    if cmd == Command::Verify {
        let report = verify_trace(sc, &out.artifacts, &trace)?;
        if let Some(dir) = out_dir {
            write_file(dir, "verification.json", &mut out.written, |w| {
                serde_json::to_writer_pretty(&mut *w, &report)?;
                writeln!(w)?;
                Ok(())
            })?;
        }
        out.verification = Some(report);
    }
    out.trace = Some(trace);
    Ok(out)
}
