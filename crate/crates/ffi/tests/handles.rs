use std::ffi::{CStr, CString};
use std::ptr;

use pca_phasefield_ffi::*;

const DECAY: &str = include_str!("../../core/configs/decay.toml");
const STEADY: &str = include_str!("../../core/configs/steady.toml");

fn last_error() -> String {
    let p = pca_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(text: &str) -> *mut PcaConfig {
    let text = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { pca_config_from_toml(text.as_ptr(), &mut cfg) }, PcaStatus::Ok);
    assert!(!cfg.is_null());
    cfg
}

#[test]
fn decay_run_round_trip() {
    let cfg = config(DECAY);
    let (key, value) = (CString::new("run.t_end").unwrap(), CString::new("10.0").unwrap());
    assert_eq!(unsafe { pca_config_set(cfg, key.as_ptr(), value.as_ptr()) }, PcaStatus::Ok);

    let mut run = ptr::null_mut();
    assert_eq!(unsafe { pca_run_new(cfg, &mut run) }, PcaStatus::Ok);
    let n = unsafe { pca_run_sample_count(run) };
    // 1000 steps, one sample every 10 plus the initial one
    assert_eq!(n, 101);

    let mut buf = [0.0; PCA_SAMPLE_LEN];
    assert_eq!(unsafe { pca_run_sample(run, n - 1, buf.as_mut_ptr(), buf.len()) }, PcaStatus::Ok);
    assert!((buf[0] - 10.0).abs() < 1e-9);
    assert!(buf.iter().all(|v| v.is_finite()));
    let header = unsafe { CStr::from_ptr(pca_series_header()) }.to_str().unwrap();
    assert_eq!(header.split(',').count(), PCA_SAMPLE_LEN);

    let mut report = ptr::null_mut();
    assert_eq!(unsafe { pca_run_analyze(run, &mut report) }, PcaStatus::Ok);
    assert!(unsafe { pca_report_passed(report) });
    let mut beta = 0.0;
    assert_eq!(unsafe { pca_report_beta_predicted(report, &mut beta) }, PcaStatus::Ok);
    assert_eq!(beta, 0.5);

    let count = unsafe { pca_report_check_count(report) };
    assert_eq!(count, 8);
    let mut names = Vec::new();
    for k in 0..count {
        let mut c = PcaCheck::default();
        assert_eq!(unsafe { pca_report_check(report, k, &mut c) }, PcaStatus::Ok);
        assert!(c.passed);
        names.push(unsafe { CStr::from_ptr(pca_report_check_name(report, k)) }.to_str().unwrap().to_string());
    }
    assert!(names.iter().any(|n| n == "exponential_decay"));
    assert!(unsafe { pca_report_check_name(report, count) }.is_null());

    unsafe {
        pca_report_free(report);
        pca_run_free(run);
        pca_config_free(cfg);
    }
}

#[test]
fn errors_carry_status_and_message() {
    let bad = CString::new("[params]\nlambda = ").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { pca_config_from_toml(bad.as_ptr(), &mut cfg) }, PcaStatus::Config);
    assert!(cfg.is_null());
    assert!(last_error().contains("parse"));

    assert_eq!(unsafe { pca_config_from_toml(ptr::null(), &mut cfg) }, PcaStatus::NullPointer);
    assert_eq!(unsafe { pca_run_new(ptr::null(), &mut ptr::null_mut()) }, PcaStatus::NullPointer);

    let cfg = config(DECAY);
    let key = CString::new("therapy.s").unwrap();
    let value = CString::new("[{ start = 0.0, value = -1.0 }]").unwrap();
    assert_eq!(unsafe { pca_config_set(cfg, key.as_ptr(), value.as_ptr()) }, PcaStatus::Config);
    assert!(last_error().contains("negative"));

    // the failed override left the handle usable
    let t = CString::new("run.t_end").unwrap();
    let v = CString::new("0.5").unwrap();
    assert_eq!(unsafe { pca_config_set(cfg, t.as_ptr(), v.as_ptr()) }, PcaStatus::Ok);
    assert!(pca_last_error_message().is_null());
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { pca_run_new(cfg, &mut run) }, PcaStatus::Ok);
    let mut short = [0.0; 4];
    assert_eq!(unsafe { pca_run_sample(run, 0, short.as_mut_ptr(), short.len()) }, PcaStatus::InvalidArgument);
    let mut buf = [0.0; PCA_SAMPLE_LEN];
    assert_eq!(unsafe { pca_run_sample(run, 10_000, buf.as_mut_ptr(), buf.len()) }, PcaStatus::InvalidArgument);

    unsafe {
        pca_run_free(run);
        pca_config_free(cfg);
        pca_run_free(ptr::null_mut());
        pca_report_free(ptr::null_mut());
        pca_config_free(ptr::null_mut());
    }
}

#[test]
fn beta_unavailable_when_condition_fails() {
    let cfg = config(DECAY);
    for (k, v) in [("lambda", "0.02"), ("run.t_end", "1.0")] {
        let (k, v) = (CString::new(k).unwrap(), CString::new(v).unwrap());
        assert_eq!(unsafe { pca_config_set(cfg, k.as_ptr(), v.as_ptr()) }, PcaStatus::Ok);
    }
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { pca_run_new(cfg, &mut run) }, PcaStatus::Ok);
    let mut report = ptr::null_mut();
    assert_eq!(unsafe { pca_run_analyze(run, &mut report) }, PcaStatus::Ok);
    let mut beta = f64::NAN;
    assert_eq!(unsafe { pca_report_beta_predicted(report, &mut beta) }, PcaStatus::Unavailable);
    unsafe {
        pca_report_free(report);
        pca_run_free(run);
        pca_config_free(cfg);
    }
}

#[test]
fn steady_routes_agree_through_the_abi() {
    let cfg = config(STEADY);
    let mut d = f64::NAN;
    assert_eq!(unsafe { pca_steady_max_disagreement(cfg, 1e-10, &mut d) }, PcaStatus::Ok);
    assert!(d <= 1e-8, "{d}");
    assert_eq!(unsafe { pca_steady_max_disagreement(cfg, 0.0, &mut d) }, PcaStatus::Config);
    unsafe { pca_config_free(cfg) };
}
