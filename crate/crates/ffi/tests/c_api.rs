use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use resobs_ffi::*;

fn scenario_path(name: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join(format!("../core/tests/scenarios/{name}.toml"));
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = resobs_last_error();
    assert!(!p.is_null(), "no error message recorded");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    assert!(!p.is_null());
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { resobs_string_free(p) };
    s
}

#[test]
fn full_round_trip_through_handles() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let mut sc = ptr::null_mut();
        assert_eq!(
            resobs_scenario_load(scenario_path("scalar_pair").as_ptr(), &mut sc),
            ResobsStatus::Ok
        );
        assert_eq!(resobs_scenario_node_count(sc), 2);

        let mut d = ptr::null_mut();
        assert_eq!(resobs_design(sc, &mut d), ResobsStatus::Ok);
        let mut json = ptr::null_mut();
        assert_eq!(resobs_design_report_json(d, &mut json), ResobsStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        assert_eq!(report["schema"], 1);
        assert_eq!(report["gamma"], 5.0);

        let gains = CString::new(dir.path().join("gains.csv").to_str().unwrap()).unwrap();
        assert_eq!(resobs_design_write_gains_csv(sc, d, gains.as_ptr()), ResobsStatus::Ok);

        let mut t = ptr::null_mut();
        assert_eq!(resobs_simulate(sc, d, &mut t), ResobsStatus::Ok);
        assert_eq!(resobs_trace_len(t), 1001);
        let mut x = [0.0f64; 1];
        assert_eq!(resobs_trace_state(t, 0, x.as_mut_ptr(), 1), ResobsStatus::Ok);
        assert_eq!(x[0], 2.0);
        assert_eq!(
            resobs_trace_state(t, 5000, x.as_mut_ptr(), 1),
            ResobsStatus::InvalidArgument
        );
        let csv = dir.path().join("trace.csv");
        let csv_c = CString::new(csv.to_str().unwrap()).unwrap();
        assert_eq!(resobs_trace_write_csv(t, csv_c.as_ptr()), ResobsStatus::Ok);
        assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1002);

        let mut r = ptr::null_mut();
        assert_eq!(resobs_verify(sc, d, t, &mut r), ResobsStatus::Ok);
        assert!(resobs_report_passed(r));
        let mut json = ptr::null_mut();
        assert_eq!(resobs_report_json(r, &mut json), ResobsStatus::Ok);
        let v: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        assert_eq!(v["passed"], true);
        assert_eq!(v["nodes"].as_array().unwrap().len(), 2);

        resobs_report_free(r);
        resobs_trace_free(t);
        resobs_design_free(d);
        resobs_scenario_free(sc);
    }
}

#[test]
fn errors_carry_status_and_message() {
    unsafe {
        let mut sc = ptr::null_mut();
        let missing = CString::new("/nonexistent/scenario.toml").unwrap();
        assert_eq!(resobs_scenario_load(missing.as_ptr(), &mut sc), ResobsStatus::Usage);
        assert!(sc.is_null());
        assert!(!last_error().is_empty());

        let bad = CString::new("[plant]\nA = [[1.0]]\n").unwrap();
        assert_eq!(resobs_scenario_parse(bad.as_ptr(), &mut sc), ResobsStatus::Usage);
        assert!(last_error().contains("parse"));

        assert_eq!(
            resobs_scenario_load(ptr::null(), &mut sc),
            ResobsStatus::InvalidArgument
        );
        assert_eq!(resobs_scenario_node_count(ptr::null()), 0);
        assert!(!resobs_report_passed(ptr::null()));

        assert_eq!(
            resobs_scenario_load(scenario_path("single_scalar").as_ptr(), &mut sc),
            ResobsStatus::Ok
        );
        assert!(resobs_last_error().is_null());
        assert_eq!(
            resobs_scenario_override(sc, true, 1e-6, false, 0.0, false, 0),
            ResobsStatus::Ok
        );
        let mut d = ptr::null_mut();
        assert_eq!(resobs_design(sc, &mut d), ResobsStatus::Infeasible);
        assert!(d.is_null());
        assert!(last_error().contains("infeasible"));
        assert_eq!(resobs_design(sc, ptr::null_mut()), ResobsStatus::Infeasible);
        resobs_scenario_free(sc);

        // Releasing NULL is a no-op.
        resobs_scenario_free(ptr::null_mut());
        resobs_design_free(ptr::null_mut());
        resobs_trace_free(ptr::null_mut());
        resobs_report_free(ptr::null_mut());
        resobs_string_free(ptr::null_mut());
    }
}

#[test]
fn pipeline_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let status = unsafe {
        resobs_run_pipeline(
            scenario_path("single_scalar").as_ptr(),
            ResobsCommand::Verify,
            out.as_ptr(),
        )
    };
    assert_eq!(status, ResobsStatus::Ok);
    for f in ["design_report.json", "gains.csv", "trace.csv", "verification.json"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/resobs.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in [
        "resobs_last_error",
        "resobs_scenario_load",
        "resobs_design",
        "resobs_simulate",
        "resobs_verify",
        "resobs_run_pipeline",
        "RESOBS_STATUS_INFEASIBLE = 2",
        "typedef struct ResobsScenario ResobsScenario;",
    ] {
        assert!(text.contains(name), "{name} missing from header");
    }
    // A syntax check with the system C compiler, when one is installed.
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"resobs.h\"\nint main(void) { ResobsScenario *s = NULL; \
         ResobsStatus st = resobs_scenario_load(\"x\", &s); resobs_scenario_free(s); return (int)st; }\n",
    )
    .unwrap();
    match std::process::Command::new("cc")
        .arg("-fsyntax-only")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    {
        Ok(out) => assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr)),
        Err(e) => eprintln!("skipping C compile check: {e}"),
    }
}
