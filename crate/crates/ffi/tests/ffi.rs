use std::ffi::{c_int, CStr, CString};
use std::ptr;

use rloco::pwl::{first_order_pwl, generate, ModelId, SyntheticSpec};
use rloco::regions::{RlocoConfig, RlocoPipeline as Pipeline};
use rloco::Dataset;
use rloco_ffi::*;

fn last_error() -> String {
    let p = rloco_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn to_handle(d: &Dataset) -> *mut RlocoDataset {
    let x: Vec<f64> = d.features().iter().copied().collect();
    let y = d.target().to_vec();
    let mut h = ptr::null_mut();
    let s = unsafe { rloco_dataset_new(x.as_ptr(), d.n(), d.p(), y.as_ptr(), RlocoTask::Regression as c_int, &mut h) };
    assert_eq!(s, RlocoStatus::Ok);
    h
}

fn small_config() -> String {
    r#"{"learner": {"kind": "random-forest", "n_trees": 10, "max_depth": null, "min_leaf": 3,
        "feature_subsample": null, "seed": 0}, "seed": 11}"#
        .to_string()
}

#[test]
fn dataset_lifecycle_and_errors() {
    let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
    let y = [1.0, 2.0, 3.0];
    let mut h = ptr::null_mut();
    unsafe {
        assert_eq!(rloco_dataset_new(x.as_ptr(), 3, 2, y.as_ptr(), 0, &mut h), RlocoStatus::Ok);
        let (mut n, mut p) = (0, 0);
        assert_eq!(rloco_dataset_shape(h, &mut n, &mut p), RlocoStatus::Ok);
        assert_eq!((n, p), (3, 2));
        rloco_dataset_free(h);
        rloco_dataset_free(ptr::null_mut());

        let mut h = ptr::null_mut();
        assert_eq!(rloco_dataset_new(ptr::null(), 3, 2, y.as_ptr(), 0, &mut h), RlocoStatus::NullPointer);
        assert!(last_error().contains("features"));
        assert_eq!(rloco_dataset_new(x.as_ptr(), 3, 2, y.as_ptr(), 7, &mut h), RlocoStatus::InvalidArgument);
        assert!(last_error().contains("task"));
        let bad = [0.1, f64::NAN, 0.3, 0.4, 0.5, 0.6];
        assert_eq!(rloco_dataset_new(bad.as_ptr(), 3, 2, y.as_ptr(), 0, &mut h), RlocoStatus::Numerical);
        assert_eq!(rloco_dataset_new(x.as_ptr(), 3, 2, y.as_ptr(), 1, &mut h), RlocoStatus::InvalidArgument);
        assert!(h.is_null());
    }
}

#[test]
fn pwl_models_and_exact_shapley_values() {
    let model = first_order_pwl();
    let json = CString::new(model.to_json().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    unsafe {
        assert_eq!(rloco_pwl_from_json(json.as_ptr(), &mut m), RlocoStatus::Ok);
        let mut p = 0;
        assert_eq!(rloco_pwl_dim(m, &mut p), RlocoStatus::Ok);
        assert_eq!(p, 6);
        let x = [0.3, -0.2, 0.9, 0.1, -0.5, 0.4];
        let mut f = 0.0;
        assert_eq!(rloco_pwl_evaluate(m, x.as_ptr(), 6, &mut f), RlocoStatus::Ok);
        assert_eq!(f, model.evaluate(&x).unwrap());

        let (mut a, mut b) = ([0.0; 6], [0.0; 6]);
        assert_eq!(rloco_lsv_closed_form(m, x.as_ptr(), 6, a.as_mut_ptr()), RlocoStatus::Ok);
        assert_eq!(rloco_lsv_enumeration(m, x.as_ptr(), 6, b.as_mut_ptr()), RlocoStatus::Ok);
        for j in 0..6 {
            assert!((a[j] - b[j]).abs() < 1e-12);
        }
        assert_eq!(a.to_vec(), rloco::shapley::lsv_closed_form(&model, &x).unwrap().scores);

        assert_eq!(rloco_lsv_closed_form(m, x.as_ptr(), 5, a.as_mut_ptr()), RlocoStatus::DimensionMismatch);
        assert_eq!(rloco_lsv_closed_form(ptr::null(), x.as_ptr(), 6, a.as_mut_ptr()), RlocoStatus::NullPointer);
        rloco_pwl_free(m);

        let bad = CString::new("{\"regions\": 3}").unwrap();
        let mut m = ptr::null_mut();
        assert_eq!(rloco_pwl_from_json(bad.as_ptr(), &mut m), RlocoStatus::Parse);
        assert!(m.is_null());
    }
}

#[test]
fn pipeline_matches_the_library_and_survives_json() {
    let (data, _, _) = generate(&SyntheticSpec::new(ModelId::FirstOrder, 400, 5)).unwrap();
    let split = data.split(1).unwrap();
    let (fit, cal) = (to_handle(&split.fit), to_handle(&split.calibration));
    let cfg = CString::new(small_config()).unwrap();
    let mut pipe = ptr::null_mut();
    unsafe {
        assert_eq!(rloco_pipeline_fit(fit, cal, cfg.as_ptr(), &mut pipe), RlocoStatus::Ok);
        let mut k = 0;
        assert_eq!(rloco_pipeline_n_clusters(pipe, &mut k), RlocoStatus::Ok);
        assert!(k >= 1);

        let reference: RlocoConfig = serde_json::from_str(&small_config()).unwrap();
        let lib = Pipeline::fit(&split.fit, &split.calibration, &reference, None).unwrap();
        assert_eq!(lib.n_regions(), k);

        let x = split.test.row(0);
        let y = split.test.y(0);
        let mut scores = [0.0; 6];
        let (mut cluster, mut undecidable) = (usize::MAX, -1);
        let s = rloco_pipeline_explain(pipe, x.as_ptr(), 6, &y, scores.as_mut_ptr(), &mut cluster, &mut undecidable);
        assert_eq!(s, RlocoStatus::Ok);
        let e = lib.explain(x, Some(y)).unwrap();
        assert_eq!(scores.to_vec(), e.attribution.scores);
        assert_eq!(cluster, e.region);
        assert_eq!(undecidable, c_int::from(e.undecidable.is_some()));

        let s = rloco_pipeline_explain(pipe, x.as_ptr(), 6, ptr::null(), scores.as_mut_ptr(), &mut cluster, &mut undecidable);
        assert_eq!(s, RlocoStatus::Ok);
        let s = rloco_pipeline_explain(pipe, x.as_ptr(), 4, &y, scores.as_mut_ptr(), &mut cluster, &mut undecidable);
        assert_eq!(s, RlocoStatus::DimensionMismatch);

        let mut json = ptr::null_mut();
        assert_eq!(rloco_pipeline_to_json(pipe, &mut json), RlocoStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(rloco_pipeline_from_json(json, &mut back), RlocoStatus::Ok);
        rloco_string_free(json);
        let mut again = [0.0; 6];
        let s = rloco_pipeline_explain(back, x.as_ptr(), 6, &y, again.as_mut_ptr(), &mut cluster, &mut undecidable);
        assert_eq!(s, RlocoStatus::Ok);
        assert_eq!(again, scores);

        rloco_pipeline_free(back);
        rloco_pipeline_free(pipe);
        rloco_dataset_free(fit);
        rloco_dataset_free(cal);
    }
}

#[test]
fn pipeline_config_errors_are_reported() {
    let (data, _, _) = generate(&SyntheticSpec::new(ModelId::FirstOrder, 100, 2)).unwrap();
    let h = to_handle(&data);
    let mut pipe = ptr::null_mut();
    let bad = CString::new("{\"learnr\": 1}").unwrap();
    unsafe {
        assert_eq!(rloco_pipeline_fit(h, h, bad.as_ptr(), &mut pipe), RlocoStatus::Parse);
        assert!(last_error().contains("learnr"));
        assert_eq!(rloco_pipeline_fit(h, ptr::null(), ptr::null(), &mut pipe), RlocoStatus::NullPointer);
        assert!(pipe.is_null());
        rloco_dataset_free(h);
    }
}

#[test]
fn normalize_shares_and_degenerate_input() {
    let mut out = [0.0; 2];
    let mut deg = -1;
    unsafe {
        assert_eq!(rloco_normalize([1.0, -3.0].as_ptr(), 2, out.as_mut_ptr(), &mut deg), RlocoStatus::Ok);
        assert_eq!((out, deg), ([0.25, 0.75], 0));
        assert_eq!(rloco_normalize([0.0, 0.0].as_ptr(), 2, out.as_mut_ptr(), &mut deg), RlocoStatus::Ok);
        assert_eq!((out, deg), ([0.5, 0.5], 1));
        assert_eq!(rloco_normalize([f64::INFINITY, 0.0].as_ptr(), 2, out.as_mut_ptr(), &mut deg), RlocoStatus::Numerical);
    }
    let v = unsafe { CStr::from_ptr(rloco_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
