//! Exercises the C ABI from Rust the way a C caller would: raw
//! pointers in, owned buffers out, explicit frees.

use std::ffi::{c_char, CStr, CString};
use std::ptr;

use halluc_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

unsafe fn take_string(ptr: *mut c_char) -> String {
    let s = CStr::from_ptr(ptr).to_str().unwrap().to_string();
    hl_string_free(ptr);
    s
}

unsafe fn take_spans(ptr: *mut HlSpan, len: usize) -> Vec<HlSpan> {
    let spans = std::slice::from_raw_parts(ptr, len).to_vec();
    hl_spans_free(ptr, len);
    spans
}

unsafe fn last_error() -> String {
    CStr::from_ptr(hl_last_error()).to_str().unwrap().to_string()
}

#[test]
fn class_table_round_trips() {
    unsafe {
        assert_eq!(hl_class_count(), 11);
        for i in 0..hl_class_count() {
            let name = CStr::from_ptr(hl_class_name(i)).to_str().unwrap();
            assert_eq!(hl_class_parse(name.as_ptr().cast()), i, "{name}");
        }
        assert!(hl_class_name(11).is_null());
        assert_eq!(hl_class_parse(c("no_such_class").as_ptr()), -1);
        let med = hl_class_parse(c("unsupported_medication").as_ptr());
        assert_eq!(med, 2);
    }
}

#[test]
fn parse_and_render_tagged() {
    unsafe {
        let text = c("You were given <error class=\"unsupported_medication\">vancomycin</error> daily.");
        let mut plain: *mut c_char = ptr::null_mut();
        let mut spans: *mut HlSpan = ptr::null_mut();
        let mut len = 0usize;
        let rc = hl_parse_tagged(text.as_ptr(), 1, &mut plain, &mut spans, &mut len);
        assert_eq!(rc, HL_OK);
        let plain = take_string(plain);
        assert_eq!(plain, "You were given vancomycin daily.");
        let spans = take_spans(spans, len);
        assert_eq!(spans, vec![HlSpan { start: 15, end: 25, class_: 2 }]);

        let mut rendered: *mut c_char = ptr::null_mut();
        let plain_c = c(&plain);
        let rc = hl_render_tagged(plain_c.as_ptr(), spans.as_ptr(), spans.len(), &mut rendered);
        assert_eq!(rc, HL_OK);
        assert_eq!(take_string(rendered), text.to_str().unwrap());
    }
}

#[test]
fn parse_tagged_rejects_malformed_input() {
    unsafe {
        let text = c("an <error>unclosed tag");
        let mut plain: *mut c_char = ptr::null_mut();
        let mut spans: *mut HlSpan = ptr::null_mut();
        let mut len = 0usize;
        let rc = hl_parse_tagged(text.as_ptr(), 0, &mut plain, &mut spans, &mut len);
        assert_eq!(rc, HL_ERR_PARSE);
        assert!(!hl_last_error().is_null());
        assert!(last_error().contains("unclosed"), "{}", last_error());
    }
}

#[test]
fn match_spans_and_scores() {
    unsafe {
        // one exact match, one half-overlap, one missed gold span
        let gold = [
            HlSpan { start: 0, end: 4, class_: -1 },
            HlSpan { start: 10, end: 20, class_: -1 },
            HlSpan { start: 30, end: 34, class_: -1 },
        ];
        let pred = [
            HlSpan { start: 0, end: 4, class_: -1 },
            HlSpan { start: 15, end: 25, class_: -1 },
        ];
        let mut counts = HlEvalCounts::default();
        let rc = hl_match_spans(gold.as_ptr(), gold.len(), pred.as_ptr(), pred.len(), 0, &mut counts);
        assert_eq!(rc, HL_OK);
        assert_eq!(
            counts,
            HlEvalCounts { correct: 1, partial: 1, incorrect: 0, missed: 1, spurious: 0 }
        );
        let (mut p, mut r, mut f) = (0.0, 0.0, 0.0);
        assert_eq!(hl_eval_scores(&counts, &mut p, &mut r, &mut f), HL_OK);
        assert_eq!(p, 1.5 / 2.0);
        assert_eq!(r, 1.5 / 3.0);
        assert_eq!(f, 2.0 * p * r / (p + r));
    }
}

#[test]
fn krippendorff_over_ragged_units() {
    unsafe {
        // units: [1, 2], [3, 3, 4], [5]
        let values = [1.0, 2.0, 3.0, 3.0, 4.0, 5.0];
        let lens = [2usize, 3, 1];
        let (mut alpha, mut degenerate) = (0.0, 0);
        let rc = hl_krippendorff_interval(
            values.as_ptr(),
            lens.as_ptr(),
            lens.len(),
            &mut alpha,
            &mut degenerate,
        );
        assert_eq!(rc, HL_OK);
        assert_eq!(degenerate, 0);
        assert!(alpha.is_finite());

        // all identical values: degenerate, alpha 1.0
        let same = [2.0, 2.0, 2.0, 2.0];
        let same_lens = [2usize, 2];
        let rc = hl_krippendorff_interval(
            same.as_ptr(),
            same_lens.as_ptr(),
            same_lens.len(),
            &mut alpha,
            &mut degenerate,
        );
        assert_eq!(rc, HL_OK);
        assert_eq!((alpha, degenerate), (1.0, 1));

        // a single usable unit is an error, not a crash
        let rc = hl_krippendorff_interval(
            values.as_ptr(),
            [2usize].as_ptr(),
            1,
            &mut alpha,
            &mut degenerate,
        );
        assert_eq!(rc, HL_ERR_INVALID);
    }
}

#[test]
fn text_metrics() {
    unsafe {
        let mut prf = HlPrf::default();
        let rc = hl_rouge_n(c("the cat sat").as_ptr(), c("the cat").as_ptr(), 1, &mut prf);
        assert_eq!(rc, HL_OK);
        assert!((prf.recall - 1.0).abs() < 1e-12);
        assert!((prf.precision - 2.0 / 3.0).abs() < 1e-12);

        let rc = hl_rouge_l(c("a b c d").as_ptr(), c("a c d e").as_ptr(), &mut prf);
        assert_eq!(rc, HL_OK);
        assert!((prf.f1 - 0.75).abs() < 1e-12);

        let src = c("the patient was discharged home");
        let cand = c("the patient went home");
        let reference = c("the patient returned home");
        let refs = [reference.as_ptr()];
        let mut score = 0.0;
        let rc = hl_sari(src.as_ptr(), cand.as_ptr(), refs.as_ptr(), 1, &mut score);
        assert_eq!(rc, HL_OK);
        let expected = halluc::metrics::sari(
            "the patient was discharged home",
            "the patient went home",
            &["the patient returned home"],
        );
        assert!((score - expected).abs() < 1e-12, "{score} vs {expected}");

        let rc = hl_sari(src.as_ptr(), cand.as_ptr(), ptr::null(), 0, &mut score);
        assert_eq!(rc, HL_ERR_INVALID);
    }
}

#[test]
fn detector_handle_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let lexicon = dir.path().join("lexicon.tsv");
    std::fs::write(&lexicon, "metformin\tC_MET\tmedication\nlisinopril\tC_LIS\tmedication\n")
        .unwrap();
    let lexicon_c = c(lexicon.to_str().unwrap());
    unsafe {
        let detector = hl_detector_new(lexicon_c.as_ptr(), ptr::null(), 0.85);
        assert!(!detector.is_null());
        let mut spans: *mut HlSpan = ptr::null_mut();
        let mut len = 0usize;
        let rc = hl_detector_detect(
            detector,
            c("Started metformin for glucose control.").as_ptr(),
            c("Continue metformin and lisinopril at home.").as_ptr(),
            &mut spans,
            &mut len,
        );
        assert_eq!(rc, HL_OK);
        let spans = take_spans(spans, len);
        // lisinopril never appears in the context; the baseline assigns
        // no class
        assert_eq!(spans, vec![HlSpan { start: 23, end: 33, class_: -1 }]);
        hl_detector_free(detector);

        let missing = c(dir.path().join("absent.tsv").to_str().unwrap());
        assert!(hl_detector_new(missing.as_ptr(), ptr::null(), 0.85).is_null());
        assert!(last_error().contains("absent.tsv"));
    }
}

#[test]
fn null_and_invalid_arguments_set_errors() {
    unsafe {
        let mut prf = HlPrf::default();
        assert_eq!(hl_rouge_n(ptr::null(), c("x").as_ptr(), 1, &mut prf), HL_ERR_NULL);
        assert_eq!(hl_rouge_n(c("x").as_ptr(), c("y").as_ptr(), 0, &mut prf), HL_ERR_INVALID);

        let bad = [HlSpan { start: 0, end: 4, class_: 99 }];
        let mut counts = HlEvalCounts::default();
        let rc = hl_match_spans(bad.as_ptr(), 1, ptr::null(), 0, 1, &mut counts);
        assert_eq!(rc, HL_ERR_INVALID);
        assert!(last_error().contains("99"));

        let invalid_utf8 = [0xffu8, 0];
        assert_eq!(hl_class_parse(invalid_utf8.as_ptr().cast()), -1);
    }
}
