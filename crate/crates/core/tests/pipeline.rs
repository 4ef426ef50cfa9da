use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use lidbench::config::Config;
use lidbench::pipeline::{self, PipelineError, RunDir};
use lidbench::tasks::corpus::read_corpus;
use lidbench::tasks::{CellKey, Placement};

const SMALL: &str = r#"
encodings = ["incident"]

[tasks.edge_existence]
samples = 12

[tasks.edge_existence.graphs]
node_count = 200
density = 0.1
seed = 1
samples_per_graph = 4

[tasks.common_connection]
samples = 20

[tasks.common_connection.graphs]
node_count = 200
density = 0.1
seed = 2
samples_per_graph = 4

[tasks.similarity]
quota = 2

[tasks.similarity.graphs]
node_count = 1000
density = 0.1
seed = 3
samples_per_graph = 100

[backend]
kind = "mock"
model = "mock"
parallelism = 2

[backend.mock]
gamma = 0.9
degeneration_rate = 0.05
seed = 5
planted_g = { kind = "table", points = [[0.0, 0.9], [0.5, 0.5], [1.0, 0.9]] }
planted_h = { kind = "inverse_distance" }
"#;

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let path = dir.join("config.toml");
    fs::write(&path, text).unwrap();
    path
}

fn files_under(root: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.insert(path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out
}

#[test]
fn full_mock_pipeline_records_every_artifact_and_stays_inside_the_run_dir() {
    let inputs = tempfile::tempdir().unwrap();
    let outer = tempfile::tempdir().unwrap();
    let config = write_config(inputs.path(), SMALL);
    let root = outer.path().join("run");
    let dir = RunDir::new(&root);
    let summaries = pipeline::run_all(&dir, &config).unwrap();
    assert_eq!(summaries.len(), 5);

    assert_eq!(fs::read_dir(outer.path()).unwrap().count(), 1, "only the run directory is created");
    assert_eq!(files_under(inputs.path()).len(), 1, "the input directory is untouched");

    let manifest = dir.manifest().unwrap();
    let recorded: BTreeSet<String> = manifest
        .stages
        .values()
        .flat_map(|s| s.outputs.keys().cloned())
        .chain([manifest.config_file.clone(), "manifest.json".to_string()])
        .collect();
    assert_eq!(files_under(&root), recorded);
    assert!(pipeline::verify(&dir).unwrap() > 10);

    for name in ["report/cells.csv", "report/cells.jsonl", "report/summary.json", "report/lineplot-edge_existence.svg"] {
        assert!(root.join(name).exists(), "{name}");
    }
    assert!(root.join("report/heatmap-common_connection-incident.svg").exists());
    assert!(root.join("fit/fit-incident.json").exists());
    let fit = pipeline::read_fit(&root.join("fit/fit-incident.json")).unwrap();
    assert!(fit.position_model.test >= 0.0 && fit.distance_model.test >= 0.0);
}

#[test]
fn edge_existence_corpus_has_three_equal_placement_strata() {
    let inputs = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    let config = write_config(inputs.path(), &SMALL.replace("[tasks.similarity]\nquota = 2", "[tasks.similarity]\nquota = 2\nmax_attempts = 1"));
    let config_text = fs::read_to_string(&config).unwrap();
    let only_ee: String = config_text.split("[tasks.common_connection]").next().unwrap().to_string()
        + &config_text[config_text.find("[backend]").unwrap()..];
    let config = write_config(inputs.path(), &only_ee);
    pipeline::generate(&RunDir::new(run.path()), &config).unwrap();
    let (_, instances) = read_corpus(&run.path().join("corpus/edge_existence-incident.jsonl")).unwrap();
    for placement in Placement::ALL {
        let n = instances.iter().filter(|i| i.cell == CellKey::Placement { placement }).count();
        assert_eq!(n, 12);
    }
}

#[test]
fn generate_is_idempotent_and_score_rerun_is_byte_identical() {
    let inputs = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    let config = write_config(inputs.path(), SMALL);
    let dir = RunDir::new(run.path());
    pipeline::generate(&dir, &config).unwrap();
    let first = fs::read(run.path().join("manifest.json")).unwrap();
    let corpus = fs::read(run.path().join("corpus/common_connection-incident.jsonl")).unwrap();
    pipeline::generate(&dir, &config).unwrap();
    assert_eq!(first, fs::read(run.path().join("manifest.json")).unwrap());
    assert_eq!(corpus, fs::read(run.path().join("corpus/common_connection-incident.jsonl")).unwrap());

    pipeline::run(&dir).unwrap();
    pipeline::score(&dir).unwrap();
    let cells = fs::read(run.path().join("scores/cells.csv")).unwrap();
    pipeline::score(&dir).unwrap();
    assert_eq!(cells, fs::read(run.path().join("scores/cells.csv")).unwrap());
    pipeline::verify(&dir).unwrap();
}

#[test]
fn tampered_inputs_are_refused_with_exit_code_2() {
    let inputs = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    let config = write_config(inputs.path(), SMALL);
    let dir = RunDir::new(run.path());
    pipeline::generate(&dir, &config).unwrap();
    let corpus = run.path().join("corpus/edge_existence-incident.jsonl");
    let mut bytes = fs::read(&corpus).unwrap();
    bytes.extend_from_slice(b"\n");
    fs::write(&corpus, bytes).unwrap();

    let err = pipeline::run(&dir).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    match &err {
        PipelineError::HashMismatch(m) => assert_eq!(m[0].path, "corpus/edge_existence-incident.jsonl"),
        other => panic!("unexpected {other}"),
    }
    assert_eq!(pipeline::verify(&dir).unwrap_err().exit_code(), 2);

    pipeline::generate(&dir, &config).unwrap();
    pipeline::verify(&dir).unwrap();
    let stored = run.path().join("config.toml");
    fs::write(&stored, SMALL.replace("seed = 5", "seed = 6")).unwrap();
    assert_eq!(pipeline::run(&dir).unwrap_err().exit_code(), 2);
    assert_eq!(pipeline::verify(&dir).unwrap_err().exit_code(), 2);
}

#[test]
fn rerunning_an_upstream_stage_with_new_outputs_marks_downstream_stale() {
    let inputs = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    let dir = RunDir::new(run.path());
    pipeline::generate(&dir, &write_config(inputs.path(), SMALL)).unwrap();
    pipeline::run(&dir).unwrap();
    pipeline::verify(&dir).unwrap();
    pipeline::generate(&dir, &write_config(inputs.path(), &SMALL.replace("seed = 1\n", "seed = 9\n"))).unwrap();
    let err = pipeline::verify(&dir).unwrap_err();
    assert!(err.to_string().contains("corpus/edge_existence-incident.jsonl"), "{err}");
}

#[test]
fn stages_need_their_upstream() {
    let run = tempfile::tempdir().unwrap();
    let dir = RunDir::new(run.path());
    let err = pipeline::run(&dir).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("generate"));

    let inputs = tempfile::tempdir().unwrap();
    pipeline::generate(&dir, &write_config(inputs.path(), SMALL)).unwrap();
    let err = pipeline::score(&dir).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("`run`"), "{err}");
}

#[test]
fn zero_density_surfaces_a_generation_error() {
    let inputs = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    let config = write_config(inputs.path(), &SMALL.replace("density = 0.1\nseed = 1", "density = 0.0\nseed = 1"));
    let err = pipeline::generate(&RunDir::new(run.path()), &config).unwrap_err();
    assert!(matches!(err, PipelineError::Task(_)), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn validation_lists_every_offending_key() {
    let bad = SMALL
        .replace("quota = 2", "quota = 3")
        .replace("parallelism = 2", "parallelism = 0\ntemperature = 0.7")
        .replace("gamma = 0.9", "gamma = 1.5");
    let err = Config::parse(&bad).unwrap_err();
    let keys = err.keys();
    for key in ["tasks.similarity.quota", "backend.parallelism", "backend.temperature", "backend.mock"] {
        assert!(keys.iter().any(|k| k == key), "{key} missing from {keys:?}");
    }
    let text = err.to_string();
    assert!(text.contains("non_paper_mode"), "{text}");

    let permitted = format!("non_paper_mode = true\n{}", SMALL.replace("parallelism = 2", "parallelism = 2\ntemperature = 0.7"));
    assert_eq!(Config::parse(&permitted).unwrap().backend.temperature, 0.7);

    let unknown = SMALL.replace("[backend]\n", "[backend]\ncolour = 1\n");
    let err = Config::parse(&unknown).unwrap_err().to_string();
    assert!(err.contains("colour"), "{err}");
}

#[test]
fn secrets_in_config_files_are_rejected() {
    let text = SMALL.replace("kind = \"mock\"", "kind = \"mock\"\napi_key = \"sk-123\"");
    let err = Config::parse(&text).unwrap_err();
    assert_eq!(err.keys(), vec!["backend.api_key".to_string()]);
    assert!(!err.to_string().contains("sk-123"));
}

#[test]
fn live_mode_without_the_key_variable_names_it() {
    let inputs = tempfile::tempdir().unwrap();
    let run = tempfile::tempdir().unwrap();
    let live = SMALL
        .replace("kind = \"mock\"", "kind = \"live\"\nendpoint = \"http://127.0.0.1:9\"\napi_key_env = \"LIDBENCH_TEST_UNSET_KEY\"")
        .split("[backend.mock]")
        .next()
        .unwrap()
        .to_string();
    let dir = RunDir::new(run.path());
    pipeline::generate(&dir, &write_config(inputs.path(), &live)).unwrap();
    let err = pipeline::run(&dir).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("LIDBENCH_TEST_UNSET_KEY"), "{err}");
}
