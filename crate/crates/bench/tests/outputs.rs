//! Determinism of generated problems and rendered figures.

use std::path::PathBuf;

use hd_bench::config::ProblemConfig;
use hd_bench::experiments::{bench_ls_affine, LsAffineConfig};
use hd_bench::search::log_grid;
use hd_bench::svg::{render_svg, PlotStyle, Series};

fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name)
}

fn toy_plot() -> String {
    let series = vec![
        Series::new(
            "geometric",
            (1..=40).map(|k| (k as f64, 0.7f64.powi(k))).collect(),
            0,
        ),
        Series::new(
            "sublinear",
            (1..=40).map(|k| (k as f64, 1.0 / k as f64)).collect(),
            1,
        )
        .with_opacity(0.6),
        Series::new(
            "with gap",
            vec![(1.0, 0.5), (2.0, 0.0), (3.0, 0.05), (4.0, 0.01)],
            2,
        ),
    ];
    render_svg(
        &series,
        &PlotStyle::new("Toy convergence", "iteration", "error"),
    )
    .unwrap()
}

#[test]
fn svg_matches_golden_file() {
    let path = golden("toy.svg");
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, toy_plot()).unwrap();
    }
    let expected =
        std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(toy_plot(), expected);
}

#[test]
fn configs_build_bit_identical_problems() {
    for text in [
        r#"{"family":"ls","n":9,"m":7,"lambda":0.3,"seed":5,"conditioning":{"j":3}}"#,
        r#"{"family":"logreg","n":30,"m":10,"target_cond":100,"seed":1}"#,
        r#"{"family":"toy1d"}"#,
    ] {
        let config = ProblemConfig::from_json(text).unwrap();
        let (a, b) = (config.build().unwrap(), config.build().unwrap());
        assert_eq!(a.problem.a(), b.problem.a(), "{text}");
        assert_eq!(a.cert.y_star, b.cert.y_star, "{text}");
        assert_eq!(a.cert.f_star.to_bits(), b.cert.f_star.to_bits(), "{text}");
    }
}

#[test]
fn sweep_outputs_are_reproducible() {
    let cfg = LsAffineConfig {
        n: 10,
        m: 8,
        jmax: 2,
        budget: 60,
        grid: log_grid(1e-3, 1.0, 8),
        ..LsAffineConfig::default()
    };
    let read_all = |dir: &std::path::Path| {
        let mut files: Vec<(String, Vec<u8>)> = walk(dir)
            .into_iter()
            .map(|p| {
                (
                    p.strip_prefix(dir).unwrap().display().to_string(),
                    std::fs::read(&p).unwrap(),
                )
            })
            .collect();
        files.sort();
        files
    };
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    bench_ls_affine(&cfg, Some(d1.path())).unwrap();
    bench_ls_affine(&cfg, Some(d2.path())).unwrap();
    let (f1, f2) = (read_all(d1.path()), read_all(d2.path()));
    assert!(f1.len() >= 3 + 5 * 3);
    assert_eq!(f1, f2);
}

fn walk(dir: &std::path::Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.is_dir() {
            out.extend(walk(&path));
        } else {
            out.push(path);
        }
    }
    out
}
