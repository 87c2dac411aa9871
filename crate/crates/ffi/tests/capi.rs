use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use gesture_core::descriptor::FeatureStats;
use gesture_core::evaluation::{mean_jaccard, LabelPair};
use gesture_core::recurrent::{extract_train_windows, label_sequence, train_rnn, RnnConfig};
use gesture_core::rng::SplitMix64;
use gesture_core::segmenter::{build_binary_training_set, segment, train_segmenter, SegmenterConfig};
use gesture_core::synth::{generate_synthetic, SynthConfig, SyntheticSequence};
use gesture_core::FrameLabels;
use gesture_ffi::*;

fn data() -> Vec<SyntheticSequence> {
    let cfg = SynthConfig {
        n_sequences: 3,
        gestures_per_sequence: 2,
        seed: 5,
        ..SynthConfig::default()
    };
    generate_synthetic(&cfg).unwrap()
}

fn flat(s: &SyntheticSequence) -> Vec<f64> {
    s.sequence.frames().iter().flat_map(|f| f.iter().flatten().copied()).collect()
}

fn stats(seqs: &[SyntheticSequence]) -> FeatureStats {
    let refs: Vec<_> = seqs.iter().map(|s| &s.sequence).collect();
    FeatureStats::fit(&refs).unwrap()
}

fn segmenter_file(dir: &Path, seqs: &[SyntheticSequence]) -> (std::path::PathBuf, SegmenterConfig) {
    let st = stats(seqs);
    let desc: Vec<_> = seqs.iter().map(|s| st.descriptors(&s.sequence).unwrap()).collect();
    let pairs: Vec<_> = desc.iter().zip(seqs).map(|(d, s)| (d.view(), &s.labels)).collect();
    let cfg = SegmenterConfig {
        hidden: (8, 6),
        max_iterations: 40,
        ..SegmenterConfig::default()
    };
    let (x, t) = build_binary_training_set(&pairs, &cfg, &mut SplitMix64::new(1)).unwrap();
    let (model, _) = train_segmenter(x.view(), t.view(), Some(st), &cfg).unwrap();
    let path = dir.join("segmenter.gmodel");
    model.save(&path).unwrap();
    (path, cfg)
}

fn rnn_file(dir: &Path, seqs: &[SyntheticSequence]) -> std::path::PathBuf {
    let st = stats(seqs);
    let mut cfg = RnnConfig {
        hidden: vec![4, 3],
        ..RnnConfig::default()
    };
    cfg.sgdm.max_epochs = 1;
    cfg.sgdm.batch_size = 32;
    let mut windows = Vec::new();
    for s in seqs {
        let d = st.descriptors(&s.sequence).unwrap();
        windows.extend(extract_train_windows(d.view(), &s.labels, &cfg).unwrap());
    }
    let (model, _) = train_rnn(&windows, Some(st), &cfg, |_, _| {}).unwrap();
    let path = dir.join("rnn.gmodel");
    model.save(&path).unwrap();
    path
}

fn load(path: &Path) -> *mut GestureModel {
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { gesture_model_load(c.as_ptr(), &mut m) }, GestureStatus::Ok);
    assert!(!m.is_null());
    m
}

fn last_error() -> String {
    let p = gesture_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn version_and_width() {
    let v = unsafe { CStr::from_ptr(gesture_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
    assert_eq!(gesture_descriptor_width(), 183);
}

#[test]
fn segmentation_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let seqs = data();
    let (path, cfg) = segmenter_file(dir.path(), &seqs);
    let model = load(&path);
    assert_eq!(unsafe { gesture_model_input_width(model) }, 183);

    let lib = gesture_core::nn::NetworkModel::load(&path).unwrap();
    for s in &seqs {
        let coords = flat(s);
        let n = s.sequence.len();
        let d = lib.stats().unwrap().descriptors(&s.sequence).unwrap();
        let expected = segment(&lib, d.view(), &cfg).unwrap();

        let mut out = vec![0.0; n * 183];
        let st = unsafe { gesture_descriptors(model, coords.as_ptr(), n, out.as_mut_ptr(), out.len()) };
        assert_eq!(st, GestureStatus::Ok);
        assert_eq!(out, d.iter().copied().collect::<Vec<_>>());

        let mut count = 0;
        let mut periods = vec![GesturePeriod::default(); 16];
        let st = unsafe { gesture_segment(model, coords.as_ptr(), n, 0.0, periods.as_mut_ptr(), periods.len(), &mut count) };
        assert_eq!(st, GestureStatus::Ok);
        assert_eq!(count, expected.len());
        for (p, e) in periods.iter().zip(&expected) {
            assert_eq!((p.start, p.end), (e.start, e.end));
        }

        // Counting only.
        let mut count2 = 0;
        let st = unsafe { gesture_segment(model, coords.as_ptr(), n, -1.0, ptr::null_mut(), 0, &mut count2) };
        assert_eq!(count2, count);
        let want = if count == 0 { GestureStatus::Ok } else { GestureStatus::BufferTooSmall };
        assert_eq!(st, want);
    }
    unsafe { gesture_model_free(model) };
}

#[test]
fn labeling_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let seqs = data();
    let path = rnn_file(dir.path(), &seqs);
    let model = load(&path);
    let lib = gesture_core::nn::NetworkModel::load(&path).unwrap();
    let s = &seqs[0];
    let d = lib.stats().unwrap().descriptors(&s.sequence).unwrap();
    let expected = label_sequence(&lib, d.view(), &RnnConfig::default()).unwrap();
    let mut labels = vec![255u8; s.sequence.len()];
    let st = unsafe { gesture_label_sequence(model, flat(s).as_ptr(), s.sequence.len(), labels.as_mut_ptr()) };
    assert_eq!(st, GestureStatus::Ok);
    assert_eq!(labels, expected.as_slice());

    // A recurrent model is not a segmenter.
    let mut count = 0;
    let st = unsafe { gesture_segment(model, flat(s).as_ptr(), s.sequence.len(), 0.0, ptr::null_mut(), 0, &mut count) };
    assert_eq!(st, GestureStatus::ModelMismatch);
    assert!(last_error().starts_with("model-mismatch:"));
    unsafe { gesture_model_free(model) };
}

#[test]
fn jaccard_matches_library() {
    let t = [0u8, 1, 1, 1, 0, 2, 2, 0];
    let p = [0u8, 0, 1, 1, 1, 2, 0, 3];
    let (tl, pl) = (FrameLabels::new(t.to_vec()).unwrap(), FrameLabels::new(p.to_vec()).unwrap());
    let expected = mean_jaccard(&[LabelPair {
        sequence_id: "x",
        truth: &tl,
        predicted: &pl,
    }])
    .unwrap()
    .overall
    .unwrap();
    let mut out = f64::NAN;
    assert_eq!(unsafe { gesture_jaccard(t.as_ptr(), p.as_ptr(), t.len(), &mut out) }, GestureStatus::Ok);
    assert_eq!(out, expected);
    // classes 1: 2/4, 2: 1/2, 3: 0/1
    assert!((out - 1.0 / 3.0).abs() < 1e-15);

    let rest = [0u8; 4];
    assert_eq!(unsafe { gesture_jaccard(rest.as_ptr(), rest.as_ptr(), 4, &mut out) }, GestureStatus::Missing);
    let bad = [0u8, 21];
    assert_eq!(unsafe { gesture_jaccard(bad.as_ptr(), rest.as_ptr(), 2, &mut out) }, GestureStatus::InvalidArgument);
}

#[test]
fn errors_are_reported() {
    let mut m = ptr::null_mut();
    let missing = CString::new("/nonexistent/model.gmodel").unwrap();
    assert_eq!(unsafe { gesture_model_load(missing.as_ptr(), &mut m) }, GestureStatus::Io);
    assert!(m.is_null());
    assert!(last_error().starts_with("io:"));

    assert_eq!(unsafe { gesture_model_load(ptr::null(), &mut m) }, GestureStatus::NullPointer);

    let dir = tempfile::tempdir().unwrap();
    let junk = dir.path().join("junk.gmodel");
    std::fs::write(&junk, "not a model").unwrap();
    let c = CString::new(junk.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { gesture_model_load(c.as_ptr(), &mut m) }, GestureStatus::Parse);

    let mut out = [0.0; 4];
    let coords = [0.0; 33];
    let st = unsafe { gesture_descriptors(ptr::null(), coords.as_ptr(), 1, out.as_mut_ptr(), 4) };
    assert_eq!(st, GestureStatus::NullPointer);

    // a successful call clears the message
    let v = [1u8];
    let mut j = 0.0;
    assert_eq!(unsafe { gesture_jaccard(v.as_ptr(), v.as_ptr(), 1, &mut j) }, GestureStatus::Ok);
    assert!(gesture_last_error().is_null());
    unsafe { gesture_model_free(ptr::null_mut()) };
}
