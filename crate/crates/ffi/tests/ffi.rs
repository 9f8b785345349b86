use std::ffi::{CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use vrag::synthetic::{write_planted, PlantedSpec};
use vrag_ffi::*;

fn c(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    let p = vrag_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn planted(dir: &Path) -> vrag::synthetic::SyntheticCorpus {
    let spec = PlantedSpec {
        n_videos: 20,
        dim: 8,
        frames: 4,
        ..PlantedSpec::default()
    };
    write_planted(dir, &spec, 3).unwrap()
}

#[test]
fn build_retrieve_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let files = planted(dir.path());
    unsafe {
        let mut corpus = ptr::null_mut();
        assert_eq!(vrag_corpus_open(c(&files.manifest_path).as_ptr(), &mut corpus), VragStatus::Ok);
        assert!(vrag_last_error_message().is_null());
        assert_eq!(vrag_corpus_len(corpus), 20);
        assert_eq!(vrag_corpus_dim(corpus), 8);

        let mut index = ptr::null_mut();
        assert_eq!(vrag_index_build(corpus, 0.6, 4, true, 0, &mut index), VragStatus::Ok);
        vrag_corpus_free(corpus);
        assert_eq!(vrag_index_len(index), 20);

        let path = dir.path().join("index.vidx");
        assert_eq!(vrag_index_write(index, c(&path).as_ptr()), VragStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(vrag_index_read(c(&path).as_ptr(), &mut loaded), VragStatus::Ok);
        assert_eq!(vrag_index_dim(loaded), 8);

        let q = &files.queries[5];
        let emb = q.embedding.as_ref().unwrap();
        let mut hits = [VragHit { position: 0, score: 0.0 }; 3];
        let mut n = 0;
        for h in [index, loaded] {
            let st = vrag_index_retrieve(h, emb.as_ptr(), emb.len(), 3, hits.as_mut_ptr(), hits.len(), &mut n);
            assert_eq!(st, VragStatus::Ok);
            assert_eq!(n, 3);
            let top = CStr::from_ptr(vrag_index_video_id(h, hits[0].position)).to_str().unwrap();
            assert_eq!(top, q.source_video_id.as_deref().unwrap());
            assert!(hits[0].score >= hits[1].score && hits[1].score >= hits[2].score);
        }
        assert!(vrag_index_video_id(index, 20).is_null());
        vrag_index_free(index);
        vrag_index_free(loaded);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let files = planted(dir.path());
    unsafe {
        let mut corpus = ptr::null_mut();
        assert_eq!(vrag_corpus_open(ptr::null(), &mut corpus), VragStatus::NullPointer);
        assert!(last_error().contains("manifest_path"));

        let missing = dir.path().join("nope.json");
        assert_eq!(vrag_corpus_open(c(&missing).as_ptr(), &mut corpus), VragStatus::Invalid);

        let bad = dir.path().join("bad.vidx");
        std::fs::write(&bad, b"XXXXnot an index").unwrap();
        let mut index = ptr::null_mut();
        assert_eq!(vrag_index_read(c(&bad).as_ptr(), &mut index), VragStatus::Corrupt);
        assert!(index.is_null());

        assert_eq!(vrag_corpus_open(c(&files.manifest_path).as_ptr(), &mut corpus), VragStatus::Ok);
        assert_eq!(vrag_index_build(corpus, 1.5, 4, true, 0, &mut index), VragStatus::Invalid);
        assert!(last_error().contains("1.5"));
        assert_eq!(vrag_index_build(corpus, 0.6, 4, true, 0, &mut index), VragStatus::Ok);
        vrag_corpus_free(corpus);

        let q = [1.0; 8];
        let mut hits = [VragHit { position: 0, score: 0.0 }; 2];
        let mut n = 0;
        let st = vrag_index_retrieve(index, q.as_ptr(), 8, 5, hits.as_mut_ptr(), 2, &mut n);
        assert_eq!(st, VragStatus::BufferTooSmall);
        assert_eq!(n, 5);
        let st = vrag_index_retrieve(index, q.as_ptr(), 7, 1, hits.as_mut_ptr(), 2, &mut n);
        assert_eq!(st, VragStatus::Invalid);
        let zero = [0.0; 8];
        let st = vrag_index_retrieve(index, zero.as_ptr(), 8, 1, hits.as_mut_ptr(), 2, &mut n);
        assert_eq!(st, VragStatus::Invalid);
        vrag_index_free(index);

        vrag_corpus_free(ptr::null_mut());
        vrag_index_free(ptr::null_mut());
        assert_eq!(vrag_index_len(ptr::null()), 0);
    }
}

#[test]
fn metrics_and_version() {
    let r = CString::new("the cat sat on the mat").unwrap();
    let mut v = 0.0;
    unsafe {
        assert_eq!(vrag_rouge_l(r.as_ptr(), r.as_ptr(), &mut v), VragStatus::Ok);
        assert_eq!(v, 1.0);
        assert_eq!(vrag_bleu_4(r.as_ptr(), r.as_ptr(), &mut v), VragStatus::Ok);
        assert_eq!(v, 1.0);
        let h = CString::new("a dog stood").unwrap();
        assert_eq!(vrag_rouge_l(r.as_ptr(), h.as_ptr(), &mut v), VragStatus::Ok);
        assert_eq!(v, 0.0);
        assert_eq!(vrag_bleu_4(r.as_ptr(), h.as_ptr(), ptr::null_mut()), VragStatus::NullPointer);
        let version = CStr::from_ptr(vrag_version()).to_str().unwrap();
        assert_eq!(version, env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/vrag.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["vrag_corpus_open", "vrag_index_retrieve", "vrag_last_error_message", "VRAG_STATUS_CORRUPT"] {
        assert!(text.contains(f), "{f} missing from header");
    }
    let Ok(out) = Command::new("cc").args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c"]).arg(&header).output() else {
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}
