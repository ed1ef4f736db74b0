#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use capmf::synthetic::{planted_interactions, planted_pois, write_checkins, write_movielens_tab, write_pois, PlantedSpec};

pub fn capmf(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_capmf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("failed to launch capmf")
}

/// Runs `capmf` and panics with its stderr on failure.
pub fn capmf_ok(args: &[&str]) -> String {
    let out = capmf(args);
    assert!(
        out.status.success(),
        "capmf {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Star ratings in MovieLens tab format.
pub fn ratings_file(dir: &Path, spec: &PlantedSpec) -> PathBuf {
    let path = dir.join("ratings.tsv");
    write_movielens_tab(&path, &planted_interactions(spec).unwrap()).unwrap();
    path
}

/// Check-ins plus POI coordinates.
pub fn checkin_files(dir: &Path, spec: &PlantedSpec) -> (PathBuf, PathBuf) {
    let checkins = dir.join("checkins.tsv");
    let pois = dir.join("pois.tsv");
    write_checkins(&checkins, &planted_interactions(spec).unwrap()).unwrap();
    write_pois(&pois, &planted_pois(spec.items, 3, spec.seed)).unwrap();
    (checkins, pois)
}

pub fn write_config(path: &Path, pairs: &[(&str, String)]) -> PathBuf {
    let text: String = pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect();
    fs::write(path, text).unwrap();
    path.to_path_buf()
}

pub fn small_spec() -> PlantedSpec {
    PlantedSpec {
        users: 40,
        items: 50,
        min_per_user: 12,
        max_per_user: 25,
        ..PlantedSpec::default()
    }
}

pub struct Csv {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Csv {
    pub fn read(path: &Path) -> Csv {
        let text = fs::read_to_string(path).unwrap();
        let mut lines = text.lines();
        let split = |l: &str| l.split(',').map(str::to_string).collect::<Vec<_>>();
        Csv {
            header: split(lines.next().unwrap()),
            rows: lines.map(split).collect(),
        }
    }

    pub fn col(&self, name: &str) -> usize {
        self.header
            .iter()
            .position(|h| h == name)
            .unwrap_or_else(|| panic!("no column {name}"))
    }

    pub fn get<'a>(&self, row: &'a [String], name: &str) -> &'a str {
        &row[self.col(name)]
    }

    pub fn num(&self, row: &[String], name: &str) -> f64 {
        self.get(row, name).parse().unwrap()
    }
}
