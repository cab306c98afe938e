//! Every checked-in fuzz seed must parse, so the corpora stay useful as
//! the formats evolve.

use std::path::{Path, PathBuf};

use wrinkle_core::classify::SvmModel;
use wrinkle_core::config::PipelineConfig;
use wrinkle_core::gridio::{FloatGrid, GrayImage, LabelMask};
use wrinkle_core::report::Report;
use wrinkle_core::synth::SceneSpec;

fn seeds(target: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<_> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            let bytes = std::fs::read(&p).unwrap();
            (p, bytes)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(p: &Path, b: &[u8]) -> String {
    String::from_utf8(b.to_vec()).unwrap_or_else(|_| panic!("{} is not utf-8", p.display()))
}

#[test]
fn fgrid_seeds_parse() {
    for (p, b) in seeds("fgrid") {
        let g = FloatGrid::from_fgrid_bytes(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(g.to_fgrid_bytes(), b);
    }
}

#[test]
fn pgm_seeds_parse() {
    for (p, b) in seeds("pgm") {
        let img = GrayImage::from_pgm_bytes(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        let again = GrayImage::from_pgm_bytes(&img.to_pgm_bytes()).unwrap();
        for (x, y) in img.data().iter().zip(again.data()) {
            assert!((x - y).abs() <= 0.5 / 65535.0 + 1e-12);
        }
    }
}

#[test]
fn label_mask_seeds_parse() {
    for (p, b) in seeds("label_mask") {
        let m = LabelMask::from_pgm_bytes(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(m.to_pgm_bytes(), b);
    }
}

#[test]
fn svm_model_seeds_parse() {
    for (p, b) in seeds("svm_model") {
        let m = SvmModel::from_bytes(&b).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(m.to_bytes(), b);
    }
}

#[test]
fn scene_spec_seeds_parse() {
    for (p, b) in seeds("scene_spec") {
        SceneSpec::from_toml_str(&text(&p, &b)).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
    }
}

#[test]
fn config_seeds_parse() {
    for (p, b) in seeds("config") {
        let c = PipelineConfig::from_toml_str(&text(&p, &b))
            .unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(
            PipelineConfig::from_toml_str(&c.to_toml_string()).unwrap(),
            c
        );
    }
}

#[test]
fn report_seeds_parse() {
    for (p, b) in seeds("report") {
        let t = text(&p, &b);
        let r = Report::from_json(&t).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        assert_eq!(r.to_json().unwrap(), t);
    }
}
