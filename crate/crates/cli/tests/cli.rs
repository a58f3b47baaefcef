use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use factor_machine::apps::REDUNDANT_PARITY_CHECK;
use factor_machine::apps::{
    build_coloring, build_ising_chain, build_parity_code_with, codewords, write_manifest,
};
use factor_machine::graph::{serialize_uai, FactorGraph, FactorKind};
use factor_machine::image::MachineImage;
use factor_machine::machine::Machine;
use tempfile::TempDir;

fn fmach(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fmach"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_graph(dir: &Path, name: &str, g: &FactorGraph) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, serialize_uai(g).unwrap()).unwrap();
    p
}

fn chain(n: usize) -> FactorGraph {
    let mut g = FactorGraph::with_variables(&vec![2; n]);
    g.add_factor(vec![0], FactorKind::Table(vec![0.7, 0.3]));
    for i in 0..n - 1 {
        g.add_factor(vec![i, i + 1], FactorKind::Table(vec![2.0, 1.0, 1.0, 3.0]));
    }
    g
}

fn tree() -> FactorGraph {
    let mut g = FactorGraph::with_variables(&[2, 3, 2, 3, 2]);
    g.add_factor(
        vec![0, 1],
        FactorKind::Table(vec![1.0, 2.0, 0.5, 0.3, 1.5, 2.5]),
    );
    g.add_factor(
        vec![1, 2],
        FactorKind::Table(vec![0.2, 1.0, 1.0, 0.4, 3.0, 1.0]),
    );
    g.add_factor(
        vec![1, 3, 4],
        FactorKind::Table((1..=18).map(|x| x as f64 / 7.0).collect()),
    );
    g.add_factor(vec![4], FactorKind::Table(vec![0.9, 0.1]));
    g
}

fn parse_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .map(|l| {
            l.split_whitespace()
                .skip(1)
                .map(|t| t.parse().unwrap())
                .collect()
        })
        .collect()
}

fn compile_chain(dir: &Path, mode: &str) -> PathBuf {
    let g = write_graph(dir, "chain.uai", &chain(6));
    let img = dir.join(format!("chain-{mode}.fmimg"));
    let o = fmach(&[
        "compile",
        s(&g),
        "--mode",
        mode,
        "--cap-vars",
        "2",
        "--cap-rels",
        "2",
        "-o",
        s(&img),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    img
}

#[test]
fn triangle_colouring_compiles_to_one_cell() {
    let dir = TempDir::new().unwrap();
    let bench = build_coloring(&[(0, 1), (1, 2), (0, 2)], 3);
    let manifest = write_manifest(&bench, dir.path(), "triangle").unwrap();
    let uai = manifest.with_extension("uai");
    let img = dir.path().join("triangle.fmimg");
    let o = fmach(&[
        "compile",
        s(&uai),
        "--mode",
        "minsum",
        "--rows",
        "4",
        "--cols",
        "4",
        "-o",
        s(&img),
    ]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("clusters=1\n"), "{out}");
    assert!(out.contains("cost_final=0\n"), "{out}");
    let image: MachineImage = fs::read_to_string(&img).unwrap().parse().unwrap();
    assert_eq!(image.cells.len(), 1);
}

#[test]
fn graph_too_big_for_grid_is_a_mapping_error() {
    let dir = TempDir::new().unwrap();
    let g = write_graph(dir.path(), "chain.uai", &chain(30));
    let o = fmach(&[
        "compile",
        s(&g),
        "--rows",
        "2",
        "--cols",
        "2",
        "--cap-vars",
        "1",
        "--cap-rels",
        "1",
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("do not fit"));
}

#[test]
fn compile_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let g = write_graph(dir.path(), "chain.uai", &chain(10));
    let mut images = Vec::new();
    for i in 0..2 {
        let img = dir.path().join(format!("{i}.fmimg"));
        let o = fmach(&[
            "compile",
            s(&g),
            "--seed",
            "9",
            "--cap-vars",
            "1",
            "--cap-rels",
            "1",
            "-o",
            s(&img),
        ]);
        assert_eq!(code(&o), 0);
        images.push(fs::read(&img).unwrap());
    }
    assert_eq!(images[0], images[1]);
}

#[test]
fn input_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.uai");
    fs::write(&bad, "MARKOV\n2\n2 x\n").unwrap();
    assert_eq!(code(&fmach(&["compile", s(&bad)])), 2);
    assert_eq!(code(&fmach(&["golden", s(&bad), "--alg", "exact"])), 2);
    let img = dir.path().join("bad.fmimg");
    fs::write(&img, "not an image\n").unwrap();
    assert_eq!(code(&fmach(&["run", s(&img)])), 2);
    assert_eq!(
        code(&fmach(&["run", s(&dir.path().join("missing.fmimg"))])),
        2
    );
    assert_eq!(code(&fmach(&["frobnicate"])), 2);
    let g = write_graph(dir.path(), "chain.uai", &chain(3));
    assert_eq!(
        code(&fmach(&[
            "golden",
            s(&g),
            "--alg",
            "sumprod",
            "--damping",
            "1.5"
        ])),
        2
    );
}

#[test]
fn evidence_out_of_domain_exits_2() {
    let dir = TempDir::new().unwrap();
    let g = write_graph(dir.path(), "chain.uai", &chain(3));
    let ev = dir.path().join("e.evid");
    fs::write(&ev, "1 0 5\n").unwrap();
    assert_eq!(code(&fmach(&["compile", s(&g), "--evidence", s(&ev)])), 2);
}

#[test]
fn single_variable_image_quiesces() {
    let dir = TempDir::new().unwrap();
    let mut g = FactorGraph::with_variables(&[3]);
    g.add_factor(vec![0], FactorKind::Table(vec![0.2, 0.5, 0.3]));
    let uai = write_graph(dir.path(), "one.uai", &g);
    let img = dir.path().join("one.fmimg");
    assert_eq!(code(&fmach(&["compile", s(&uai), "-o", s(&img)])), 0);
    let stats = dir.path().join("one.stats");
    let beliefs = dir.path().join("one.beliefs");
    let assignment = dir.path().join("one.assignment");
    let o = fmach(&[
        "run",
        s(&img),
        "--stats",
        s(&stats),
        "--beliefs",
        s(&beliefs),
        "--assignment",
        s(&assignment),
    ]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("quiescent=true\n"));
    assert_eq!(fs::read_to_string(&stats).unwrap(), stdout(&o));
    assert_eq!(fs::read_to_string(&assignment).unwrap(), "0 1\n");
    let m = parse_rows(&fs::read_to_string(&beliefs).unwrap());
    for (got, want) in m[0].iter().zip([0.2, 0.5, 0.3]) {
        assert!((got - want).abs() < 1e-3, "{got} vs {want}");
    }
}

#[test]
fn gibbs_run_completes_without_quiescence() {
    let dir = TempDir::new().unwrap();
    let bench = build_ising_chain(4, 0.5, 0.2);
    let uai = write_manifest(&bench, dir.path(), "ising")
        .unwrap()
        .with_extension("uai");
    let img = dir.path().join("ising.fmimg");
    assert_eq!(
        code(&fmach(&[
            "compile",
            s(&uai),
            "--mode",
            "gibbs",
            "--cap-vars",
            "2",
            "-o",
            s(&img)
        ])),
        0
    );
    let o = fmach(&["run", s(&img), "--max-cycles", "5000"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("quiescent=false\n"), "{out}");
    assert!(out.contains("late_ticks=0\n"), "{out}");
}

#[test]
fn cycle_budget_exhausted_in_converging_mode_exits_4() {
    let dir = TempDir::new().unwrap();
    let img = compile_chain(dir.path(), "sumprod");
    let o = fmach(&["run", s(&img), "--max-cycles", "1"]);
    assert_eq!(code(&o), 4);
    assert!(stdout(&o).contains("quiescent=false\n"));
}

#[test]
fn rerun_gives_identical_trace_and_stats_never_print_the_trace() {
    let dir = TempDir::new().unwrap();
    let img = compile_chain(dir.path(), "sumprod");
    let mut files = Vec::new();
    for i in 0..2 {
        let trace = dir.path().join(format!("{i}.csv"));
        let beliefs = dir.path().join(format!("{i}.beliefs"));
        let o = fmach(&[
            "run",
            s(&img),
            "--trace",
            s(&trace),
            "--beliefs",
            s(&beliefs),
        ]);
        assert_eq!(code(&o), 0);
        assert!(!stdout(&o).contains("SEND"));
        files.push((
            fs::read(&trace).unwrap(),
            fs::read(&beliefs).unwrap(),
            o.stdout,
        ));
    }
    assert_eq!(files[0], files[1]);
    assert!(files[0]
        .0
        .starts_with(b"cycle,cell_row,cell_col,event,var_id,detail\n"));
}

#[test]
fn trace_summary_matches_simulator_link_counts() {
    let dir = TempDir::new().unwrap();
    for mode in ["sumprod", "minsum"] {
        let img = compile_chain(dir.path(), mode);
        let trace = dir.path().join(format!("{mode}.csv"));
        let o = fmach(&["run", s(&img), "--trace", s(&trace)]);
        assert_eq!(code(&o), 0);
        let run_stats = stdout(&o);

        let image: MachineImage = fs::read_to_string(&img).unwrap().parse().unwrap();
        let mut mach = Machine::load_image(&image).unwrap();
        mach.run_until_quiescent(1_000_000);
        let mut want: Vec<String> = mach
            .link_counts()
            .iter()
            .map(|((r, c), p, n)| format!("link {r} {c} {p} {n}"))
            .collect();
        want.sort();

        let o = fmach(&["stats", s(&trace), "--bins", "4"]);
        assert_eq!(code(&o), 0);
        let out = stdout(&o);
        let mut got: Vec<String> = out
            .lines()
            .filter(|l| l.starts_with("link "))
            .map(String::from)
            .collect();
        got.sort();
        assert_eq!(got, want, "{out}");
        assert!(out.contains("in_flight=0\n") && out.contains("unmatched_deliveries=0\n"));
        let field = |text: &str, key: &str| -> u64 {
            text.lines()
                .find_map(|l| l.strip_prefix(key))
                .unwrap()
                .parse()
                .unwrap()
        };
        assert_eq!(field(&out, "send="), field(&run_stats, "packets="));
        assert_eq!(field(&out, "hops="), field(&run_stats, "hops="));
        let binned: u64 = out
            .lines()
            .filter(|l| l.starts_with("bin "))
            .map(|l| l.rsplit(' ').next().unwrap().parse::<u64>().unwrap())
            .sum();
        assert_eq!(binned, field(&run_stats, "packets="));
    }
}

#[test]
fn exact_on_thirty_variables_exceeds_the_bound() {
    let dir = TempDir::new().unwrap();
    let g = write_graph(dir.path(), "big.uai", &chain(30));
    let o = fmach(&["golden", s(&g), "--alg", "exact"]);
    assert_eq!(code(&o), 5);
    assert_eq!(code(&fmach(&["golden", s(&g), "--alg", "map"])), 5);
    assert_eq!(code(&fmach(&["golden", s(&g), "--alg", "sumprod"])), 0);
}

#[test]
fn sumprod_on_tree_matches_exact() {
    let dir = TempDir::new().unwrap();
    let g = write_graph(dir.path(), "tree.uai", &tree());
    let ev = dir.path().join("tree.evid");
    fs::write(&ev, "1 2 1\n").unwrap();
    let exact = parse_rows(&stdout(&fmach(&[
        "golden",
        s(&g),
        "--evidence",
        s(&ev),
        "--alg",
        "exact",
    ])));
    let out = dir.path().join("sp.txt");
    let o = fmach(&[
        "golden",
        s(&g),
        "--evidence",
        s(&ev),
        "--alg",
        "sumprod",
        "--tol",
        "1e-14",
        "-o",
        s(&out),
    ]);
    assert_eq!(code(&o), 0);
    assert!(o.stdout.is_empty());
    let sp = parse_rows(&fs::read_to_string(&out).unwrap());
    assert_eq!(sp.len(), 5);
    assert_eq!(exact[2], vec![0.0, 1.0]);
    for (a, b) in exact.iter().zip(&sp) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-9, "{x} vs {y}");
        }
    }
    let seq = parse_rows(&stdout(&fmach(&[
        "golden",
        s(&g),
        "--evidence",
        s(&ev),
        "--alg",
        "sumprod",
        "--schedule",
        "sequential",
        "--tol",
        "1e-14",
    ])));
    for (a, b) in exact.iter().zip(&seq) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-9);
        }
    }
}

#[test]
fn gibbs_with_a_seed_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let g = write_graph(dir.path(), "tree.uai", &tree());
    let run = |seed: &str| {
        stdout(&fmach(&[
            "golden",
            s(&g),
            "--alg",
            "gibbs",
            "--seed",
            seed,
            "--samples",
            "2000",
        ]))
    };
    let a = run("7");
    assert_eq!(a, run("7"));
    assert_ne!(a, run("8"));
    assert_eq!(parse_rows(&a).len(), 5);
}

#[test]
fn verify_exit_codes() {
    let dir = TempDir::new().unwrap();
    let cw = codewords()[9];
    let mut received = cw;
    received[4] ^= 1;
    let bench = build_parity_code_with(&REDUNDANT_PARITY_CHECK, &received, 0.05);
    let manifest = write_manifest(&bench, dir.path(), "ham").unwrap();
    let uai = manifest.with_extension("uai");
    let ev = manifest.with_extension("evid");
    let results = dir.path().join("ham.results");
    let o = fmach(&[
        "golden",
        s(&uai),
        "--evidence",
        s(&ev),
        "--alg",
        "sumprod",
        "-o",
        s(&results),
    ]);
    assert_eq!(code(&o), 0);
    let o = fmach(&["verify", s(&manifest), s(&results)]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    assert!(stdout(&o).ends_with("RESULT PASS 7/7\n"));

    let text = fs::read_to_string(&results).unwrap();
    let swapped: String = text
        .lines()
        .map(|l| {
            let t: Vec<&str> = l.split_whitespace().collect();
            if t[0] == "4" {
                format!("4 {} {}\n", t[2], t[1])
            } else {
                format!("{l}\n")
            }
        })
        .collect();
    let corrupt = dir.path().join("corrupt.results");
    fs::write(&corrupt, swapped).unwrap();
    let o = fmach(&["verify", s(&manifest), s(&corrupt)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("var 4 FAIL"));

    let short = dir.path().join("short.results");
    fs::write(
        &short,
        text.lines()
            .take(6)
            .map(|l| format!("{l}\n"))
            .collect::<String>(),
    )
    .unwrap();
    let o = fmach(&["verify", s(&manifest), s(&short)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing variable 6"));

    let garbage = dir.path().join("garbage.results");
    fs::write(&garbage, "0 x\n").unwrap();
    assert_eq!(code(&fmach(&["verify", s(&manifest), s(&garbage)])), 2);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let g = write_graph(dir.path(), "chain.uai", &chain(8));
    let cfg = dir.path().join("small.cfg");
    fs::write(
        &cfg,
        "# tiny grid\nrows 1\ncols 2\ncap-vars 1\ncap-rels 1\n",
    )
    .unwrap();
    let img = dir.path().join("c.fmimg");
    assert_eq!(
        code(&fmach(&[
            "--config",
            s(&cfg),
            "compile",
            s(&g),
            "-o",
            s(&img)
        ])),
        3
    );
    let o = fmach(&[
        "compile",
        s(&g),
        "--config",
        s(&cfg),
        "--rows",
        "4",
        "--cols",
        "4",
        "-o",
        s(&img),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("max_vars=1/1\n"));

    let run_cfg = dir.path().join("run.cfg");
    fs::write(&run_cfg, "max-cycles 1\n").unwrap();
    assert_eq!(code(&fmach(&["run", s(&img), "--config", s(&run_cfg)])), 4);
    assert_eq!(
        code(&fmach(&[
            "run",
            s(&img),
            "--config",
            s(&run_cfg),
            "--max-cycles",
            "1000000"
        ])),
        0
    );

    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "rowz 3\n").unwrap();
    assert_eq!(code(&fmach(&["--config", s(&bad), "compile", s(&g)])), 2);
}
