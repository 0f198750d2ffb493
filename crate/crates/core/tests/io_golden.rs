//! Embedding files produced outside this crate (tests/fixtures/make_fixtures.py
//! writes them the way word2vec.c does).

use std::path::PathBuf;

use wordvec::io::{Embeddings, Format};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn expected() -> Vec<(String, Vec<f32>)> {
    std::fs::read_to_string(fixture("golden_values.txt"))
        .unwrap()
        .lines()
        .map(|l| {
            let mut it = l.split(' ');
            let w = it.next().unwrap().to_owned();
            (w, it.map(|v| v.parse().unwrap()).collect())
        })
        .collect()
}

#[test]
fn reads_word2vec_binary() {
    let emb = Embeddings::load(fixture("golden.bin"), Format::Binary, false).unwrap();
    let want = expected();
    assert_eq!((emb.len(), emb.dim()), (want.len(), 3));
    for (i, (w, v)) in want.iter().enumerate() {
        assert_eq!(&emb.words()[i], w);
        assert_eq!(emb.row(i), v.as_slice(), "row {w}");
    }
}

#[test]
fn binary_write_is_byte_identical() {
    let emb = Embeddings::load(fixture("golden.bin"), Format::Binary, false).unwrap();
    let mut out = Vec::new();
    emb.write(&mut out, Format::Binary).unwrap();
    assert_eq!(out, std::fs::read(fixture("golden.bin")).unwrap());
}

#[test]
fn reads_crlf_text_with_trailing_spaces() {
    let emb = Embeddings::load(fixture("golden_crlf.txt"), Format::Text, false).unwrap();
    let bin = Embeddings::load(fixture("golden.bin"), Format::Binary, false).unwrap();
    assert_eq!(emb.words(), bin.words());
    // six printed decimals: agreement to 5e-7 absolute
    for (a, b) in emb.data().iter().zip(bin.data()) {
        assert!((a - b).abs() <= 5e-7, "{a} vs {b}");
    }
}

#[test]
fn text_round_trip_is_exact() {
    let bin = Embeddings::load(fixture("golden.bin"), Format::Binary, false).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.txt");
    bin.save(&path, Format::Text).unwrap();
    let back = Embeddings::load(&path, Format::Text, false).unwrap();
    assert_eq!(back, bin);
}
