use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hetmed::cli::{EXIT_DATA, EXIT_OK, EXIT_USAGE};
use hetmed::evalkit::CSV_HEADER;
use tempfile::TempDir;

fn hetmed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hetmed"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Workspace {
            dir: TempDir::new().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let path = self.path(name);
        fs::write(&path, text).unwrap();
        path
    }

    fn synth_graph(&self) -> PathBuf {
        let (t, l, g) = (self.path("t.tsv"), self.path("l.tsv"), self.path("g.txt"));
        let out = hetmed(&[
            "synth",
            "--groups",
            "3",
            "--seed",
            "4",
            "--triplets-out",
            p(&t),
            "--labels-out",
            p(&l),
        ]);
        assert_eq!(code(&out), EXIT_OK, "{}", stderr(&out));
        let out = hetmed(&["build", "--triplets", p(&t), "--out", p(&g)]);
        assert_eq!(code(&out), EXIT_OK, "{}", stderr(&out));
        g
    }
}

#[test]
fn build_prints_type_counts() {
    let ws = Workspace::new();
    let t = ws.write("one.tsv", "flu\tfever\thigh\n");
    let out = hetmed(&["build", "--triplets", p(&t), "--out", p(&ws.path("g.txt"))]);
    assert_eq!(code(&out), EXIT_OK);
    assert!(stdout(&out).contains("D:1 S:1 N:1 W:1"), "{}", stdout(&out));
}

#[test]
fn malformed_triplets_name_the_line() {
    let ws = Workspace::new();
    let t = ws.write("bad.tsv", "flu\tfever\thigh\ncold\tcough\n");
    let out = hetmed(&["build", "--triplets", p(&t)]);
    assert_eq!(code(&out), EXIT_DATA);
    assert!(stderr(&out).contains("line 2"), "{}", stderr(&out));
}

#[test]
fn missing_input_is_a_data_error() {
    let ws = Workspace::new();
    let out = hetmed(&["build", "--triplets", p(&ws.path("absent.tsv"))]);
    assert_eq!(code(&out), EXIT_DATA);
}

#[test]
fn unknown_flags_are_usage_errors() {
    assert_eq!(code(&hetmed(&["build", "--bogus"])), EXIT_USAGE);
    assert_eq!(code(&hetmed(&[])), EXIT_USAGE);
}

#[test]
fn dump_is_idempotent() {
    let ws = Workspace::new();
    let g = ws.synth_graph();
    let t = ws.path("t.tsv");
    let g2 = ws.path("g2.txt");
    assert_eq!(
        code(&hetmed(&["build", "--triplets", p(&t), "--out", p(&g2)])),
        EXIT_OK
    );
    assert_eq!(fs::read(&g).unwrap(), fs::read(&g2).unwrap());
    let reread = hetmed::diagnet::HetNet::read_dump(fs::read(&g).unwrap().as_slice()).unwrap();
    let mut again = Vec::new();
    reread.write_dump(&mut again).unwrap();
    assert_eq!(fs::read(&g).unwrap(), again);
}

#[test]
fn metapaths_are_validated_against_the_schema() {
    let ws = Workspace::new();
    let g = ws.synth_graph();
    let c = ws.path("c.txt");
    let out = hetmed(&[
        "walk",
        "--graph",
        p(&g),
        "--metapath",
        "D,N,D",
        "--out",
        p(&c),
    ]);
    assert_eq!(code(&out), EXIT_USAGE, "{}", stderr(&out));
    let out = hetmed(&[
        "walk",
        "--graph",
        p(&g),
        "--metapath",
        "D,S,D",
        "-r",
        "2",
        "-l",
        "5",
        "--out",
        p(&c),
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", stderr(&out));
    let out = hetmed(&["walk", "--graph", p(&g), "--out", p(&c)]);
    assert_eq!(code(&out), EXIT_USAGE);
}

#[test]
fn embed_requires_a_corpus() {
    let ws = Workspace::new();
    let g = ws.synth_graph();
    let out = hetmed(&[
        "embed",
        "--graph",
        p(&g),
        "--corpus",
        p(&ws.path("none.txt")),
        "--out",
        p(&ws.path("e.txt")),
    ]);
    assert_ne!(code(&out), EXIT_OK);
}

#[test]
fn walk_and_embed_pipeline() {
    let ws = Workspace::new();
    let g = ws.synth_graph();
    let (c, e) = (ws.path("c.txt"), ws.path("e.txt"));
    let out = hetmed(&[
        "walk",
        "--graph",
        p(&g),
        "--metapath",
        "D,S,N,S,D",
        "--metapath",
        "D,S,W,S,D",
        "-r",
        "4",
        "-l",
        "20",
        "--seed",
        "1",
        "--out",
        p(&c),
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", stderr(&out));
    let out = hetmed(&[
        "embed",
        "--graph",
        p(&g),
        "--corpus",
        p(&c),
        "--dim",
        "8",
        "--pairs",
        "5000",
        "--seed",
        "1",
        "--out",
        p(&e),
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", stderr(&out));
    assert!(stdout(&out).contains("pairs seen: 5000"));
    let (keys, m) = hetmed::embed::import_embeddings(fs::read(&e).unwrap().as_slice()).unwrap();
    assert_eq!(m.cols(), 8);
    assert_eq!(keys.len(), m.rows());
}

#[test]
fn synth_output_builds() {
    let ws = Workspace::new();
    let g = ws.synth_graph();
    let net = hetmed::diagnet::HetNet::read_dump(fs::read(&g).unwrap().as_slice()).unwrap();
    let labels = fs::read_to_string(ws.path("l.tsv")).unwrap();
    let (labels, classes) = hetmed::evalkit::read_labels(&net, labels.as_bytes()).unwrap();
    assert_eq!(classes.len(), 6);
    assert_eq!(
        net.stats().node_count(hetmed::diagnet::NodeType::Disease),
        15
    );
    assert!(!labels.is_empty());
}

fn run_experiment(ws: &Workspace, name: &str) -> PathBuf {
    let csv = ws.path(name);
    let out = hetmed(&[
        "experiment",
        "--task",
        "classify",
        "--method",
        "none",
        "--method",
        "multimetapath",
        "--levels",
        "0:90:45",
        "--repeats",
        "3",
        "--groups",
        "3",
        "-r",
        "2",
        "-l",
        "10",
        "--dim",
        "8",
        "--pairs",
        "2000",
        "--head-epochs",
        "2",
        "--seed",
        "7",
        "--out",
        p(&csv),
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", stderr(&out));
    csv
}

#[test]
fn experiment_writes_one_row_per_level_and_method() {
    let ws = Workspace::new();
    let csv = run_experiment(&ws, "r.csv");
    let text = fs::read_to_string(&csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert_eq!(lines.len(), 1 + 2 * 3);
    assert!(lines[1].starts_with("none,classify,0,"));
    assert!(ws.path("r.f1_micro.tsv").exists());
    assert!(ws.path("r.f1_macro.tsv").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let ws = Workspace::new();
    let a = run_experiment(&ws, "a.csv");
    let b = run_experiment(&ws, "b.csv");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(ws.path("a.f1_micro.tsv")).unwrap(),
        fs::read(ws.path("b.f1_micro.tsv")).unwrap()
    );
}

#[test]
fn bad_levels_are_usage_errors() {
    let ws = Workspace::new();
    let out = hetmed(&[
        "experiment",
        "--task",
        "predict",
        "--levels",
        "a:b",
        "--out",
        p(&ws.path("x.csv")),
    ]);
    assert_eq!(code(&out), EXIT_USAGE);
}

#[test]
fn prediction_accepts_sum_pooling() {
    let ws = Workspace::new();
    let csv = ws.path("p.csv");
    let out = hetmed(&[
        "experiment",
        "--task",
        "predict",
        "--method",
        "none",
        "--pooling",
        "sum",
        "--levels",
        "0",
        "--repeats",
        "2",
        "--groups",
        "2",
        "--dim",
        "4",
        "--head-epochs",
        "1",
        "--out",
        p(&csv),
    ]);
    assert_eq!(code(&out), EXIT_OK, "{}", stderr(&out));
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 2);
    assert_eq!(
        code(&hetmed(&[
            "experiment",
            "--task",
            "predict",
            "--pooling",
            "max",
            "--out",
            p(&csv)
        ])),
        EXIT_USAGE
    );
}
