use std::fs;

use polyg2p::dataset::load_cpp_dir;
use tempfile::tempdir;

#[test]
fn mixed_layouts_and_optional_dev() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("train.sent"), "▂长▂城很长\n校▂长▂来了\n").unwrap();
    fs::write(dir.path().join("train.lb"), "chang2\nzhang3\n").unwrap();
    fs::write(dir.path().join("test.tsv"), "红▂红▂火火\thong2\n").unwrap();
    let split = load_cpp_dir(dir.path()).unwrap().unwrap();
    assert_eq!((split.train.len(), split.dev.len(), split.test.len()), (2, 0, 1));
    assert_eq!(split.train[1].target_char, '长');
    assert_eq!(split.train[1].gold_pinyin.as_ref().unwrap().to_string(), "zhang3");

    fs::write(dir.path().join("dev.tsv"), "▂长▂江\tchang2\n").unwrap();
    assert_eq!(load_cpp_dir(dir.path()).unwrap().unwrap().dev.len(), 1);
}

#[test]
fn missing_test_split_is_none_and_orphan_sent_is_ignored() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("train.tsv"), "▂长▂城\tchang2\n").unwrap();
    fs::write(dir.path().join("test.sent"), "▂长▂城\n").unwrap();
    assert!(load_cpp_dir(dir.path()).unwrap().is_none());
}

#[test]
fn label_count_mismatch_is_an_error() {
    let dir = tempdir().unwrap();
    fs::write(dir.path().join("train.sent"), "▂长▂城\n▂长▂江\n").unwrap();
    fs::write(dir.path().join("train.lb"), "chang2\n").unwrap();
    fs::write(dir.path().join("test.tsv"), "▂长▂城\tchang2\n").unwrap();
    assert!(load_cpp_dir(dir.path()).is_err());
}
