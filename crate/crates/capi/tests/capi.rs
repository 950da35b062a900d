//! Exercise the C ABI end to end: configuration, data generation, trace
//! round trip, reconstruction, accessors and error reporting.

use std::ffi::{CStr, CString};

use emrecon_capi::*;

fn set(cfg: *mut EmrConfig, key: &str, value: &str) {
    let k = CString::new(key).unwrap();
    let v = CString::new(value).unwrap();
    let status = unsafe { emr_config_set(cfg, k.as_ptr(), v.as_ptr()) };
    assert_eq!(status, EmrStatus::Ok, "setting {key} = {value}");
}

fn last_error() -> String {
    let mut buf = vec![0i8; 256];
    unsafe { emr_last_error(buf.as_mut_ptr(), buf.len()) };
    unsafe { CStr::from_ptr(buf.as_ptr()) }
        .to_string_lossy()
        .into_owned()
}

fn tiny_config() -> *mut EmrConfig {
    let cfg = emr_config_new();
    assert!(!cfg.is_null());
    set(cfg, "outer", "[[0.0, 1.2], [0.0, 1.0], [0.0, 0.8]]");
    set(cfg, "inner", "[[0.2, 1.0], [0.2, 0.8], [0.2, 0.6]]");
    set(
        cfg,
        "inclusions",
        "[{ extents = [[0.4, 0.8], [0.4, 0.6], [0.3, 0.5]], eps = 6.0, mu = 1.8 }]",
    );
    set(cfg, "tau", "0.01");
    set(cfg, "t_final", "1.0");
    set(cfg, "omega", "9.0");
    set(cfg, "delta", "0.1");
    set(cfg, "max_iter", "2");
    cfg
}

#[test]
fn full_pipeline_through_the_abi() {
    let cfg = tiny_config();

    // Data generation and trace file round trip.
    let mut trace: *mut EmrTrace = std::ptr::null_mut();
    let status = unsafe { emr_generate_data(cfg, true, &mut trace) };
    assert_eq!(status, EmrStatus::Ok, "{}", last_error());
    let dir = std::env::temp_dir().join(format!("emrecon_capi_{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = CString::new(dir.join("trace.csv").to_str().unwrap()).unwrap();
    assert_eq!(
        unsafe { emr_trace_write_csv(trace, path.as_ptr()) },
        EmrStatus::Ok
    );
    let mut loaded: *mut EmrTrace = std::ptr::null_mut();
    assert_eq!(
        unsafe { emr_trace_load_csv(path.as_ptr(), &mut loaded) },
        EmrStatus::Ok
    );

    // Reconstruct against the loaded trace.
    let mut result: *mut EmrResult = std::ptr::null_mut();
    let status = unsafe { emr_reconstruct(cfg, loaded, &mut result) };
    assert_eq!(status, EmrStatus::Ok, "{}", last_error());

    let iters = unsafe { emr_result_iterations(result) };
    assert!(iters >= 1 && iters <= 2);
    let objective = unsafe { emr_result_objective(result) };
    assert!(objective.is_finite() && objective >= 0.0);
    let max_eps = unsafe { emr_result_max_eps(result) };
    let max_mu = unsafe { emr_result_max_mu(result) };
    assert!((1.0..=15.0).contains(&max_eps));
    assert!((1.0..=3.0).contains(&max_mu));

    let mut dims = [0usize; 3];
    assert_eq!(
        unsafe { emr_result_dims(result, dims.as_mut_ptr()) },
        EmrStatus::Ok
    );
    assert_eq!(dims, [13, 11, 9]);
    let len = dims[0] * dims[1] * dims[2];
    let mut field = vec![0.0f64; len];
    assert_eq!(
        unsafe { emr_result_field(result, EmrField::EpsRaw, field.as_mut_ptr(), len) },
        EmrStatus::Ok
    );
    assert!(field.iter().all(|v| (1.0..=15.0).contains(v)));
    // Too-small buffer is rejected.
    assert_eq!(
        unsafe { emr_result_field(result, EmrField::EpsRaw, field.as_mut_ptr(), len - 1) },
        EmrStatus::OutOfRange
    );

    unsafe {
        emr_result_free(result);
        emr_trace_free(loaded);
        emr_trace_free(trace);
        emr_config_free(cfg);
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn adjoint_check_through_the_abi() {
    let mut d = f64::NAN;
    let mut m = f64::NAN;
    assert_eq!(
        unsafe { emr_adjoint_check(5, &mut d, &mut m) },
        EmrStatus::Ok
    );
    assert!(d < 1e-10, "discrepancy {d}");
    assert!(m > 1e-6, "mutated {m}");
}

#[test]
fn error_paths_report_messages() {
    // Null arguments.
    let mut out: *mut EmrConfig = std::ptr::null_mut();
    assert_eq!(
        unsafe { emr_config_load(std::ptr::null(), &mut out) },
        EmrStatus::NullArgument
    );

    // Unknown key is a config error with a readable message.
    let cfg = emr_config_new();
    let k = CString::new("no_such_key").unwrap();
    let v = CString::new("1.0").unwrap();
    assert_eq!(
        unsafe { emr_config_set(cfg, k.as_ptr(), v.as_ptr()) },
        EmrStatus::Config
    );
    assert!(last_error().contains("no_such_key"), "{}", last_error());

    // Physically invalid values pass the structural set and fail at use.
    let k = CString::new("tau").unwrap();
    let v = CString::new("0.2").unwrap();
    assert_eq!(
        unsafe { emr_config_set(cfg, k.as_ptr(), v.as_ptr()) },
        EmrStatus::Ok
    );
    let mut trace: *mut EmrTrace = std::ptr::null_mut();
    assert_eq!(
        unsafe { emr_generate_data(cfg, true, &mut trace) },
        EmrStatus::Solver
    );
    assert!(last_error().contains("CFL") || last_error().contains("exceeds"));
    unsafe { emr_config_free(cfg) };
}
