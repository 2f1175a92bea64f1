#![allow(dead_code)]

use std::path::PathBuf;

use tmk_core::{load_bundle_dir, TmkModel};

pub const CONFORMANT: [&str; 5] = ["sortlist", "nomenclature", "binarysearch", "bfs", "gcd"];
pub const RAW_PAIRS: [&str; 4] = ["sortlist", "nomenclature", "binarysearch", "bfs"];

pub fn fixture_dir(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(rel)
}

pub fn load(rel: &str) -> TmkModel {
    load_bundle_dir(&fixture_dir(rel)).unwrap_or_else(|e| panic!("{rel}: {e}"))
}

pub fn transcript(rel: &str) -> String {
    std::fs::read_to_string(fixture_dir(rel).join("transcript.txt")).unwrap()
}
