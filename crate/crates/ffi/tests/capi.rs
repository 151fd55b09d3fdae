use std::ffi::{CStr, CString};
use std::ptr;

use gp_rvm_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(gp_rvm_last_error()) }
        .to_string_lossy()
        .into_owned()
}

unsafe fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = CStr::from_ptr(p).to_string_lossy().into_owned();
    gp_rvm_string_free(p);
    s
}

#[test]
fn dataset_lifecycle() {
    let x = [1.0, 2.0, 3.0, 4.0];
    let t = [1.0, 4.0, 9.0, 16.0];
    let mut d = ptr::null_mut();
    unsafe {
        assert_eq!(
            gp_rvm_dataset_new(x.as_ptr(), t.as_ptr(), 4, 1, &mut d),
            GpRvmStatus::Ok
        );
        assert_eq!(gp_rvm_dataset_len(d), 4);
        gp_rvm_dataset_free(d);
        gp_rvm_dataset_free(ptr::null_mut());
        assert_eq!(gp_rvm_dataset_len(ptr::null()), 0);
    }
}

#[test]
fn bad_arguments_set_status_and_message() {
    let mut d = ptr::null_mut();
    let t = [f64::NAN, 1.0];
    let x = [0.0, 1.0];
    unsafe {
        let s = gp_rvm_dataset_new(x.as_ptr(), t.as_ptr(), 2, 1, &mut d);
        assert_eq!(s, GpRvmStatus::InvalidArgument);
        assert!(last_error().contains("non-finite"));
        let s = gp_rvm_dataset_new(ptr::null(), t.as_ptr(), 2, 1, &mut d);
        assert_eq!(s, GpRvmStatus::NullPointer);
        let name = CString::new("keijzer99").unwrap();
        let s = gp_rvm_benchmark_dataset(name.as_ptr(), 0, &mut d, ptr::null_mut());
        assert_eq!(s, GpRvmStatus::InvalidArgument);
        assert!(last_error().contains("keijzer99"));
    }
}

#[test]
fn run_predict_and_round_trip_json() {
    let name = CString::new("keijzer8").unwrap();
    let (mut train, mut test) = (ptr::null_mut(), ptr::null_mut());
    unsafe {
        assert_eq!(
            gp_rvm_benchmark_dataset(name.as_ptr(), 3, &mut train, &mut test),
            GpRvmStatus::Ok
        );
        assert!(gp_rvm_dataset_len(train) > 0);
        let opts = gp_rvm_run_options_default(GpRvmMode::Keijzer);
        assert_eq!(opts.max_generations, 2000);
        let mut model = ptr::null_mut();
        assert_eq!(gp_rvm_run(train, &opts, 3, &mut model), GpRvmStatus::Ok);
        assert!(gp_rvm_model_success(model));
        assert!(gp_rvm_model_fitness(model) > 0.99999);
        assert_eq!(gp_rvm_model_dims(model), 1);

        let pts = [9.0, 16.0];
        let mut y = [0.0; 2];
        assert_eq!(
            gp_rvm_model_predict(model, pts.as_ptr(), 2, 1, y.as_mut_ptr()),
            GpRvmStatus::Ok
        );
        assert!(
            (y[0] - 3.0).abs() < 1e-2 && (y[1] - 4.0).abs() < 1e-2,
            "{y:?}"
        );
        let s = gp_rvm_model_predict(model, pts.as_ptr(), 1, 2, y.as_mut_ptr());
        assert_eq!(s, GpRvmStatus::InvalidArgument);

        let mut expr = ptr::null_mut();
        assert_eq!(gp_rvm_model_expression(model, &mut expr), GpRvmStatus::Ok);
        let expr = take_string(expr);
        let cexpr = CString::new(expr).unwrap();
        let mut z = [0.0; 2];
        assert_eq!(
            gp_rvm_expr_eval(cexpr.as_ptr(), pts.as_ptr(), 2, 1, z.as_mut_ptr()),
            GpRvmStatus::Ok
        );
        assert_eq!(y, z);

        let mut json = ptr::null_mut();
        assert_eq!(gp_rvm_model_to_json(model, &mut json), GpRvmStatus::Ok);
        let json = CString::new(take_string(json)).unwrap();
        let mut loaded = ptr::null_mut();
        assert_eq!(
            gp_rvm_model_from_json(json.as_ptr(), &mut loaded),
            GpRvmStatus::Ok
        );
        assert!(gp_rvm_model_fitness(loaded).is_nan());
        let mut w = [0.0; 2];
        assert_eq!(
            gp_rvm_model_predict(loaded, pts.as_ptr(), 2, 1, w.as_mut_ptr()),
            GpRvmStatus::Ok
        );
        assert_eq!(w, y);

        gp_rvm_model_free(loaded);
        gp_rvm_model_free(model);
        gp_rvm_dataset_free(train);
        gp_rvm_dataset_free(test);
    }
}

#[test]
fn malformed_inputs_are_parse_errors() {
    let mut m = ptr::null_mut();
    let bad = CString::new("{\"dims\": 1,").unwrap();
    let e = CString::new("(+ x").unwrap();
    let mut out = [0.0];
    unsafe {
        assert_eq!(
            gp_rvm_model_from_json(bad.as_ptr(), &mut m),
            GpRvmStatus::ParseError
        );
        assert!(last_error().contains("line 1"));
        let s = gp_rvm_expr_eval(e.as_ptr(), [1.0].as_ptr(), 1, 1, out.as_mut_ptr());
        assert_eq!(s, GpRvmStatus::ParseError);
    }
}

#[test]
fn rvm_fit_recovers_sparse_weights() {
    let n = 40;
    let a: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
    let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
    let c: Vec<f64> = (0..n).map(|i| i as f64 / n as f64).collect();
    let t: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 2.0 * x - 0.5 * y).collect();
    let cols: Vec<f64> = [a, b, c.clone(), c].concat();
    let mut w = [f64::NAN; 4];
    let mut lml = f64::NAN;
    unsafe {
        let s = gp_rvm_rvm_fit(cols.as_ptr(), n, 4, t.as_ptr(), w.as_mut_ptr(), &mut lml);
        assert_eq!(s, GpRvmStatus::Ok, "{}", last_error());
    }
    assert!(
        (w[0] - 2.0).abs() < 1e-6 && (w[1] + 0.5).abs() < 1e-6,
        "{w:?}"
    );
    assert!(w[2] == 0.0 || w[3] == 0.0);
    assert!(lml.is_finite());
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/gp_rvm.h")).unwrap();
    for name in [
        "gp_rvm_version",
        "gp_rvm_last_error",
        "gp_rvm_string_free",
        "gp_rvm_dataset_new",
        "gp_rvm_dataset_free",
        "gp_rvm_benchmark_dataset",
        "gp_rvm_run",
        "gp_rvm_model_from_json",
        "gp_rvm_model_predict",
        "gp_rvm_expr_eval",
        "gp_rvm_rvm_fit",
        "typedef struct GpRvmModel GpRvmModel",
        "GP_RVM_STATUS_PANIC = 6",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}
