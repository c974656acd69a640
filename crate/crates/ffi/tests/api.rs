use std::ffi::{c_int, c_void, CStr, CString};
use std::ptr;

use ibd_ffi::*;

fn last_error() -> String {
    let p = ibd_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take_string(p: *mut std::ffi::c_char) -> String {
    let s = unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned();
    unsafe { ibd_string_free(p) };
    s
}

fn synth(name: &str, n: usize) -> *mut IbdDataset {
    let name = CString::new(name).unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(unsafe { ibd_dataset_synth(name.as_ptr(), n, 3, &mut ds) }, IbdStatus::Ok);
    ds
}

unsafe extern "C" fn failing(_: *const f64, _: usize, _: usize, _: *mut f64, _: *mut c_void) -> c_int {
    1
}

unsafe extern "C" fn product(rows: *const f64, n: usize, p: usize, out: *mut f64, _: *mut c_void) -> c_int {
    let rows = std::slice::from_raw_parts(rows, n * p);
    let out = std::slice::from_raw_parts_mut(out, n);
    for (o, r) in out.iter_mut().zip(rows.chunks_exact(p)) {
        *o = r.iter().product();
    }
    0
}

#[test]
fn null_arguments_are_reported() {
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { ibd_dataset_synth(ptr::null(), 10, 0, &mut ds) },
        IbdStatus::NullPointer
    );
    assert!(last_error().contains("name"));
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { ibd_model_train_linear(ptr::null(), &mut m) }, IbdStatus::NullPointer);
    unsafe {
        ibd_dataset_free(ptr::null_mut());
        ibd_model_free(ptr::null_mut());
        ibd_explanation_free(ptr::null_mut());
        ibd_string_free(ptr::null_mut());
    }
}

#[test]
fn unknown_generator_is_invalid() {
    let name = CString::new("spiral").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { ibd_dataset_synth(name.as_ptr(), 10, 0, &mut ds) },
        IbdStatus::InvalidArgument
    );
    assert!(ds.is_null());
}

#[test]
fn grid4_product_callback_matches_hand_values() {
    let ds = synth("grid4", 4);
    let mut m = ptr::null_mut();
    let name = CString::new("prod").unwrap();
    assert_eq!(
        unsafe { ibd_model_from_callback(name.as_ptr(), Some(product), ptr::null_mut(), &mut m) },
        IbdStatus::Ok
    );
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { ibd_explain(m, ds, 3, ptr::null(), &mut e) }, IbdStatus::Ok);
    let (mut base, mut pred, mut steps, mut pairs) = (0.0, 0.0, 0, 0);
    unsafe { ibd_explanation_summary(e, &mut base, &mut pred, &mut steps, &mut pairs) };
    assert_eq!((base, pred), (0.25, 1.0));

    let mut svg = ptr::null_mut();
    assert_eq!(unsafe { ibd_explanation_to_svg(e, 0, &mut svg) }, IbdStatus::Ok);
    assert!(take_string(svg).starts_with("<svg"));

    let mut json = ptr::null_mut();
    assert_eq!(
        unsafe { ibd_uncertainty_json(m, ds, 3, 10, 1, ptr::null(), &mut json) },
        IbdStatus::Ok
    );
    assert!(take_string(json).contains("\"K\": 10"));
    unsafe {
        ibd_explanation_free(e);
        ibd_model_free(m);
        ibd_dataset_free(ds);
    }
}

#[test]
fn callback_failure_is_a_model_failure() {
    let ds = synth("grid4", 4);
    let mut m = ptr::null_mut();
    unsafe { ibd_model_from_callback(ptr::null(), Some(failing), ptr::null_mut(), &mut m) };
    let mut e = ptr::null_mut();
    assert_eq!(unsafe { ibd_explain(m, ds, 0, ptr::null(), &mut e) }, IbdStatus::ModelFailure);
    assert!(last_error().contains("callback returned 1"));
    unsafe {
        ibd_model_free(m);
        ibd_dataset_free(ds);
    }
}

#[test]
fn bad_order_is_invalid() {
    let ds = synth("grid4", 4);
    let mut m = ptr::null_mut();
    unsafe { ibd_model_from_callback(ptr::null(), Some(product), ptr::null_mut(), &mut m) };
    let mut e = ptr::null_mut();
    let order = [0usize, 0];
    assert_eq!(
        unsafe { ibd_explain_with_order(m, ds, 3, order.as_ptr(), 2, ptr::null(), &mut e) },
        IbdStatus::InvalidArgument
    );
    let order = [1usize, 0];
    assert_eq!(
        unsafe { ibd_explain_with_order(m, ds, 3, order.as_ptr(), 2, ptr::null(), &mut e) },
        IbdStatus::Ok
    );
    let mut attr = [0.0; 2];
    assert_eq!(unsafe { ibd_explanation_per_feature(e, attr.as_mut_ptr(), 2) }, IbdStatus::Ok);
    assert_eq!(attr, [0.5, 0.25]);
    unsafe {
        ibd_explanation_free(e);
        ibd_model_free(m);
        ibd_dataset_free(ds);
    }
}

#[test]
fn trained_models_round_trip_through_files() {
    let ds = synth("additive", 200);
    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("m.json").to_str().unwrap()).unwrap();
    let mut scores = Vec::new();
    for kind in 0..3 {
        let mut m = ptr::null_mut();
        let st = unsafe {
            match kind {
                0 => ibd_model_train_gbm(ds, 1, 20, 0.1, 5, 0, &mut m),
                1 => ibd_model_train_rf(ds, 10, 4, 5, 0, 0, &mut m),
                _ => ibd_model_train_linear(ds, &mut m),
            }
        };
        assert_eq!(st, IbdStatus::Ok);
        assert_eq!(unsafe { ibd_model_save(m, path.as_ptr()) }, IbdStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(unsafe { ibd_model_load(path.as_ptr(), &mut back) }, IbdStatus::Ok);
        let mut a = vec![0.0; 200];
        let mut b = vec![0.0; 200];
        unsafe {
            assert_eq!(ibd_model_predict(m, ds, a.as_mut_ptr(), a.len()), IbdStatus::Ok);
            assert_eq!(ibd_model_predict(back, ds, b.as_mut_ptr(), b.len()), IbdStatus::Ok);
            assert_eq!(ibd_model_predict(back, ds, b.as_mut_ptr(), 3), IbdStatus::InvalidArgument);
            ibd_model_free(m);
            ibd_model_free(back);
        }
        assert_eq!(a, b);
        scores.push(a);
    }
    assert_ne!(scores[0], scores[2]);
    unsafe { ibd_dataset_free(ds) };
}

#[test]
fn csv_loading_and_missing_files() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("d.csv");
    std::fs::write(&file, "a,b,label\n1,x,yes\n2,y,no\n3,x,yes\n").unwrap();
    let path = CString::new(file.to_str().unwrap()).unwrap();
    let target = CString::new("label").unwrap();
    let mut ds = ptr::null_mut();
    assert_eq!(
        unsafe { ibd_dataset_load_csv(path.as_ptr(), target.as_ptr(), ptr::null(), &mut ds) },
        IbdStatus::Ok
    );
    let (mut n, mut p) = (0, 0);
    unsafe { ibd_dataset_shape(ds, &mut n, &mut p) };
    assert_eq!((n, p), (3, 2));
    unsafe { ibd_dataset_free(ds) };

    let missing = CString::new(dir.path().join("nope.csv").to_str().unwrap()).unwrap();
    let st = unsafe { ibd_dataset_load_csv(missing.as_ptr(), ptr::null(), ptr::null(), &mut ds) };
    assert_eq!(st, IbdStatus::Io);
}

#[test]
fn success_clears_last_error() {
    let mut ds = ptr::null_mut();
    unsafe { ibd_dataset_synth(ptr::null(), 1, 0, &mut ds) };
    assert!(!ibd_last_error_message().is_null());
    let ds = synth("grid4", 4);
    assert!(ibd_last_error_message().is_null());
    unsafe { ibd_dataset_free(ds) };
}
