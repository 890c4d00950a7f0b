use std::ffi::{CStr, CString};
use std::ptr;

use satgate::dialog_model::session_to_line;
use satgate::satformer::{Predictor, PredictorConfig};
use satgate::synthcorpus::{generate, CorpusConfig};
use satgate::weaklabel::features::FeatureExtractor;
use satgate::weaklabel::{labeled_pairs, train_weak_labeler, WeakLabeler};
use satgate_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(satgate_last_error()) }.to_string_lossy().into_owned()
}

#[test]
fn predictor_round_trip_through_handles() {
    let corpus = generate(&CorpusConfig { num_sessions: 20, seed: 2, ..CorpusConfig::default() }).unwrap();
    let model = Predictor::new(PredictorConfig::tiny(), &corpus, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    model.save(&path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();

    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { satgate_predictor_load(cpath.as_ptr(), &mut handle) }, SATGATE_OK);
    assert!(!handle.is_null());
    let session = corpus.iter().find(|s| s.len() >= 2).unwrap();
    let line = CString::new(session_to_line(session)).unwrap();

    let mut p = 0.0;
    assert_eq!(unsafe { satgate_predictor_score(handle, line.as_ptr(), 1, &mut p) }, SATGATE_OK);
    assert_eq!(p, model.predict(session, 1).unwrap());

    let mut buf = vec![0.0; session.len()];
    let mut len = 0usize;
    assert_eq!(unsafe { satgate_predictor_score_session(handle, line.as_ptr(), ptr::null_mut(), 0, &mut len) }, SATGATE_ERR_BUFFER);
    assert_eq!(len, session.len());
    assert_eq!(
        unsafe { satgate_predictor_score_session(handle, line.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut len) },
        SATGATE_OK
    );
    assert_eq!(buf, model.predict_session(session).unwrap());

    let mut t = 0.0;
    assert_eq!(unsafe { satgate_predictor_threshold(handle, &mut t) }, SATGATE_OK);
    assert_eq!(t, 0.7);

    assert_eq!(unsafe { satgate_predictor_score(handle, line.as_ptr(), 999, &mut p) }, SATGATE_ERR_BOUNDS);
    assert!(last_error().contains("999"));
    unsafe { satgate_predictor_free(handle) };
}

#[test]
fn load_errors_report_codes() {
    let missing = CString::new("/nonexistent/model.ckpt").unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { satgate_predictor_load(missing.as_ptr(), &mut handle) }, SATGATE_ERR_IO);
    assert!(handle.is_null());
    assert!(last_error().contains("nonexistent"));
    assert_eq!(unsafe { satgate_predictor_load(ptr::null(), &mut handle) }, SATGATE_ERR_NULL);

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.ckpt");
    std::fs::write(&junk, b"not a checkpoint").unwrap();
    let cjunk = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { satgate_predictor_load(cjunk.as_ptr(), &mut handle) }, SATGATE_ERR_CHECKPOINT);
    unsafe { satgate_predictor_free(ptr::null_mut()) };
}

#[test]
fn weak_labeler_matches_library() {
    let corpus = generate(&CorpusConfig { num_sessions: 200, seed: 3, ..CorpusConfig::default() }).unwrap();
    let extractor = FeatureExtractor::fit(&corpus);
    let (f, l) = labeled_pairs(&extractor, &corpus);
    let labeler = WeakLabeler { model: train_weak_labeler(&f, &l, 1e-3).unwrap(), extractor };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("weak.json");
    labeler.save(&path).unwrap();
    let cpath = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = ptr::null_mut();
    assert_eq!(unsafe { satgate_weak_labeler_load(cpath.as_ptr(), &mut handle) }, SATGATE_OK);
    let line = CString::new(session_to_line(&corpus[0])).unwrap();
    let mut w = 0.0;
    assert_eq!(unsafe { satgate_weak_label(handle, line.as_ptr(), 0, &mut w) }, SATGATE_OK);
    let expect = satgate::weaklabel::weak_label(&labeler.model, &labeler.extractor.extract(&corpus[0], 0).unwrap());
    assert_eq!(w, expect);
    let bad = CString::new("{not json").unwrap();
    assert_eq!(unsafe { satgate_weak_label(handle, bad.as_ptr(), 0, &mut w) }, SATGATE_ERR_PARSE);
    unsafe { satgate_weak_labeler_free(handle) };
}

#[test]
fn gate_cus_and_auc() {
    let mut d = -1;
    assert_eq!(unsafe { satgate_gate(0.5, 0.7, &mut d) }, SATGATE_OK);
    assert_eq!(d, SATGATE_CLARIFY);
    assert_eq!(unsafe { satgate_gate(0.7, 0.7, &mut d) }, SATGATE_OK);
    assert_eq!(d, SATGATE_RESPOND);
    assert_eq!(unsafe { satgate_gate(1.5, 0.7, &mut d) }, SATGATE_ERR_DOMAIN);

    let mut c = 0.0;
    assert_eq!(unsafe { satgate_cus(0.87, 0.4, &mut c) }, SATGATE_OK);
    assert!((c - 0.348).abs() < 1e-12);
    assert_eq!(unsafe { satgate_cus(0.5, 2.0, &mut c) }, SATGATE_ERR_DOMAIN);

    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 1];
    let mut a = 0.0;
    assert_eq!(unsafe { satgate_auc(scores.as_ptr(), labels.as_ptr(), 4, &mut a) }, SATGATE_OK);
    assert!((a - 0.75).abs() < 1e-12);
    assert_eq!(unsafe { satgate_auc(scores.as_ptr(), [1u8; 4].as_ptr(), 4, &mut a) }, SATGATE_ERR_UNDEFINED_METRIC);
    assert_eq!(unsafe { satgate_auc(scores.as_ptr(), labels.as_ptr(), 4, ptr::null_mut()) }, SATGATE_ERR_NULL);
    let v = unsafe { CStr::from_ptr(satgate_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_the_whole_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/satgate.h")).unwrap();
    for name in [
        "satgate_last_error",
        "satgate_version",
        "satgate_predictor_load",
        "satgate_predictor_free",
        "satgate_predictor_threshold",
        "satgate_predictor_score",
        "satgate_predictor_score_session",
        "satgate_weak_labeler_load",
        "satgate_weak_labeler_free",
        "satgate_weak_label",
        "satgate_gate",
        "satgate_cus",
        "satgate_auc",
        "SATGATE_OK",
        "SATGATE_ERR_PANIC",
        "SATGATE_CLARIFY",
        "typedef struct SatgatePredictor SatgatePredictor",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

/// Compiles a small C program against the header when a C compiler exists.
#[test]
fn header_compiles_as_c() {
    let Ok(cc) = which_cc() else { return };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"satgate.h\"\nint main(void) { int d; return satgate_gate(0.5, 0.7, &d) == SATGATE_OK ? d : -1; }\n",
    )
    .unwrap();
    let out = std::process::Command::new(cc)
        .args(["-fsyntax-only", "-Wall", "-Werror", "-I", concat!(env!("CARGO_MANIFEST_DIR"), "/include")])
        .arg(&src)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn which_cc() -> Result<&'static str, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if std::process::Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc);
        }
    }
    Err(())
}
