//! End-to-end runs of the `iblab` binary on small worlds.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use iblab::nnkit::{Activation, Mlp, MlpSpec};
use iblab::rewardmodels::{checkpoint_bytes, RewardModel, StandardRm};
use iblab::synthworld::WorldConfig;
use serde_json::Value;
use sha2::{Digest, Sha256};

const SMALL: &str = "schema_version = 1
seed = 3
n_train_pairs = 600
n_eval_pairs = 300
n_sft_samples = 500

[world]
n_prompts = 40
n_eval_prompts = 20
";

fn iblab(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_iblab")).args(args).env("IBLAB_OUT", root).output().expect("spawn iblab")
}

fn ok(root: &Path, args: &[&str]) -> Output {
    let out = iblab(root, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path.as_ref()).unwrap()).unwrap()
}

fn hash(path: impl AsRef<Path>) -> String {
    hex::encode(Sha256::digest(std::fs::read(path.as_ref()).unwrap()))
}

fn write(root: &Path, name: &str, text: &str) -> PathBuf {
    let p = root.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

/// Small dataset plus standard and InfoRM checkpoints.
fn small_setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path();
    write(r, "small.toml", SMALL);
    ok(r, &["gen-data", "--config", "small.toml", "--out", "data"]);
    ok(r, &["train-rm", "--data", "data", "--kind", "standard", "--out", "std"]);
    ok(r, &["train-rm", "--data", "data", "--kind", "inform", "--out", "info"]);
    dir
}

fn write_linear_checkpoint(dir: &Path, world: &WorldConfig, weights: &[f64]) {
    let mut net = Mlp::zeros(MlpSpec::new(vec![world.feature_dim(), 1], Activation::Tanh).unwrap());
    net.params_mut()[..weights.len()].copy_from_slice(weights);
    let model = RewardModel::Standard(StandardRm::from_net(net).unwrap());
    let hash = hex::encode(Sha256::digest(serde_json::to_vec(world).unwrap()));
    let (bytes, meta) = checkpoint_bytes(&model, &hash);
    std::fs::create_dir_all(dir).unwrap();
    std::fs::write(dir.join("model.bin"), bytes).unwrap();
    std::fs::write(dir.join("model.json"), serde_json::to_vec(&meta).unwrap()).unwrap();
}

fn world_of(data: &Path) -> WorldConfig {
    serde_json::from_value(json(data.join("pools.json"))["world_config"].clone()).unwrap()
}

#[test]
fn gen_data_writes_requested_counts_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path();
    write(r, "small.toml", SMALL);
    ok(r, &["gen-data", "--config", "small.toml", "--out", "a"]);
    ok(r, &["gen-data", "--config", "small.toml", "--out", "b"]);
    for (file, n) in [("train.jsonl", 600), ("eval.jsonl", 300), ("ood.jsonl", 300), ("sft_samples.jsonl", 500)] {
        let text = std::fs::read_to_string(r.join("a").join(file)).unwrap();
        let header = usize::from(file != "sft_samples.jsonl");
        assert_eq!(text.lines().count(), n + header, "{file}");
        assert_eq!(hash(r.join("a").join(file)), hash(r.join("b").join(file)));
    }
    let first: Value = serde_json::from_str(std::fs::read_to_string(r.join("a/train.jsonl")).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(first["world_config"]["seed"], 3);
    let m = json(r.join("a/manifest.json"));
    assert_eq!(m["command"], "gen-data");
    assert_eq!(m["outputs"].as_array().unwrap().len(), 5);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path();
    write(r, "p1.toml", "schema_version = 1\n[world]\npool_size = 1\n");
    let out = iblab(r, &["gen-data", "--config", "p1.toml", "--out", "x"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("pool_size"));

    write(r, "typo.toml", "schema_version = 1\n[world]\nanotator_bias = 2.0\n");
    let out = iblab(r, &["gen-data", "--config", "typo.toml", "--out", "x"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("anotator_bias"), "{}", stderr(&out));

    write(r, "nover.toml", "seed = 1\n");
    let out = iblab(r, &["gen-data", "--config", "nover.toml", "--out", "x"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("schema_version"));

    let out = iblab(r, &["gen-data", "--config", "absent.toml", "--out", "x"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn printed_defaults_are_valid_configs() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path();
    for kind in ["gen-data", "train-rm", "rl-run", "sweep"] {
        let out = ok(r, &["print-config", kind, "--seed", "2"]);
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.starts_with("schema_version = 1\n"), "{kind}");
    }
    let text = String::from_utf8(ok(r, &["print-config", "gen-data", "--seed", "2"]).stdout).unwrap();
    write(r, "g.toml", &text);
    ok(r, &["gen-data", "--config", "g.toml", "--out", "a"]);
    write(r, "s.toml", "schema_version = 1\nseed = 2\n");
    ok(r, &["gen-data", "--config", "s.toml", "--out", "b"]);
    assert_eq!(hash(r.join("a/train.jsonl")), hash(r.join("b/train.jsonl")));
}

#[test]
fn train_rm_outputs_and_edge_cases() {
    let dir = small_setup();
    let r = dir.path();
    for m in ["std", "info"] {
        for f in ["model.bin", "model.json", "loss.csv", "loss.json"] {
            assert!(r.join(m).join(f).is_file());
        }
    }
    assert_eq!(json(r.join("info/model.json"))["kind"], "inform");
    assert_eq!(json(r.join("info/model.json"))["latent_dim"], 8);

    ok(r, &["train-rm", "--data", "data", "--kind", "inform", "--out", "info2"]);
    assert_eq!(hash(r.join("info/model.bin")), hash(r.join("info2/model.bin")));
    assert_eq!(hash(r.join("info/loss.csv")), hash(r.join("info2/loss.csv")));

    write(r, "zero.toml", "schema_version = 1\n[train]\nepochs = 0\n");
    ok(r, &["train-rm", "--data", "data", "--config", "zero.toml", "--out", "zero"]);
    let summary = json(r.join("zero/loss.json"));
    assert_eq!(summary["n_steps"], 0);
    assert!(summary["final_loss"].is_null());

    write(r, "huge.toml", "schema_version = 1\n[train]\nlr = 1e308\n");
    let out = iblab(r, &["train-rm", "--data", "data", "--config", "huge.toml", "--out", "huge"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("step"));

    let out = iblab(r, &["train-rm", "--data", "nowhere", "--out", "x"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn default_world_training_beats_chance_loss() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path();
    ok(r, &["gen-data", "--out", "data"]);
    for kind in ["standard", "inform"] {
        ok(r, &["train-rm", "--data", "data", "--kind", kind, "--out", kind]);
        let summary = json(r.join(kind).join("loss.json"));
        let bt = summary["train_bt_loss"].as_f64().unwrap();
        assert!(bt < 2f64.ln(), "{kind}: {bt}");
        assert!(summary["train_accuracy"].as_f64().unwrap() > 0.6);
    }
}

#[test]
fn eval_rm_constant_oracle_and_schema() {
    let dir = small_setup();
    let r = dir.path();
    let world = world_of(&r.join("data"));

    write_linear_checkpoint(&r.join("const"), &world, &[]);
    ok(r, &["eval-rm", "--checkpoint", "const", "--data", "data", "--out", "ev_const"]);
    assert_eq!(json(r.join("ev_const/accuracy.json"))["accuracy"], 0.0);

    write_linear_checkpoint(&r.join("gold"), &world, &world.gold_weights);
    for split in ["id", "ood"] {
        let out = format!("ev_gold_{split}");
        ok(r, &["eval-rm", "--checkpoint", "gold", "--data", "data", "--split", split, "--out", &out]);
        let acc = json(r.join(&out).join("accuracy.json"))["accuracy"].as_f64().unwrap();
        assert!(acc > 0.5, "{split}: {acc}");
    }

    #[derive(serde::Deserialize, serde::Serialize, PartialEq, Debug)]
    #[serde(deny_unknown_fields)]
    struct Report {
        split: String,
        kind: String,
        n_pairs: usize,
        accuracy: f64,
    }
    ok(r, &["eval-rm", "--checkpoint", "std", "--data", "data", "--split", "ood", "--out", "ev"]);
    let rep: Report = serde_json::from_str(&std::fs::read_to_string(r.join("ev/accuracy.json")).unwrap()).unwrap();
    assert_eq!((rep.split.as_str(), rep.kind.as_str(), rep.n_pairs), ("ood", "standard", 300));
    let back: Report = serde_json::from_value(serde_json::to_value(&rep).unwrap()).unwrap();
    assert_eq!(back, rep);
    let csv = std::fs::read_to_string(r.join("ev/accuracy.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "split,kind,n_pairs,accuracy");

    let mut other = world.clone();
    other.annotator_bias += 1.0;
    write_linear_checkpoint(&r.join("foreign"), &other, &[]);
    let out = iblab(r, &["eval-rm", "--checkpoint", "foreign", "--data", "data", "--out", "x"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn detect_calibration_mean_point_and_missing_input() {
    use iblab::numkit::standard_normal_vec;
    use iblab::seeding::rng_for;

    let dir = small_setup();
    let r = dir.path();
    let mut rng = rng_for(21, 0);
    let rows = |n: usize, rng: &mut iblab::seeding::Rng| {
        let mut s = String::from("z0,z1,z2,z3,z4,z5,z6,z7\n");
        for _ in 0..n {
            let v: Vec<String> = standard_normal_vec(8, rng).iter().map(|x| x.to_string()).collect();
            s.push_str(&v.join(","));
            s.push('\n');
        }
        s
    };
    write(r, "sft.csv", &rows(5000, &mut rng));
    write(r, "rlhf.csv", &rows(10_000, &mut rng));
    ok(r, &["detect", "--detector", "info", "--sft", "sft.csv", "--rlhf", "rlhf.csv", "--filter-quantile", "1", "--out", "cal"]);
    let mop = json(r.join("cal/report.json"))["summary"]["mop"].as_f64().unwrap();
    assert!((mop - 0.01).abs() <= 0.004, "{mop}");

    let mean: Vec<f64> = serde_json::from_value(json(r.join("cal/stats.json"))["mean"].clone()).unwrap();
    let line: Vec<String> = mean.iter().map(|x| x.to_string()).collect();
    write(r, "mean.csv", &format!("z0,z1,z2,z3,z4,z5,z6,z7\n{}\n", line.join(",")));
    ok(r, &["detect", "--detector", "info", "--sft", "sft.csv", "--rlhf", "mean.csv", "--filter-quantile", "1", "--out", "m"]);
    let rep = json(r.join("m/report.json"));
    assert_eq!(rep["p_values"][0].as_f64().unwrap(), 1.0);
    assert_eq!(rep["flags"][0], false);

    let out = iblab(r, &["detect", "--detector", "info", "--sft", "sft.csv", "--rlhf", "gone.csv", "--out", "x"]);
    assert_eq!(code(&out), 2);
    let out = iblab(r, &["detect", "--detector", "std", "--sft", "sft.csv", "--rlhf", "rlhf.csv", "--out", "x"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn detect_on_responses_dumps_latents_in_both_formats() {
    let dir = small_setup();
    let r = dir.path();
    let s = "data/sft_samples.jsonl";
    ok(r, &["detect", "--detector", "info", "--sft", s, "--rlhf", s, "--out", "bin"]);
    ok(r, &["detect", "--detector", "info", "--sft", s, "--rlhf", s, "--latent-format", "csv", "--out", "csv"]);
    assert!(r.join("bin/sft_latents.iblat").is_file());
    assert_eq!(&std::fs::read(r.join("bin/sft_latents.iblat")).unwrap()[..6], b"IBLAT\0");
    assert!(r.join("csv/rlhf_latents.csv").is_file());
    // the dumped latents are valid detector inputs and give the same report
    ok(r, &["detect", "--detector", "info", "--sft", "bin/sft_latents.iblat", "--rlhf", "csv/rlhf_latents.csv", "--out", "again"]);
    assert_eq!(hash(r.join("bin/report.json")), hash(r.join("again/report.json")));
}

#[test]
fn rl_run_contracts() {
    let dir = small_setup();
    let r = dir.path();
    write(r, "zero.toml", "schema_version = 1\n[rl]\nsteps = 0\n");
    ok(r, &["rl-run", "--rm", "std", "--detector", "info", "--data", "data", "--config", "zero.toml", "--out", "z"]);
    let csv = std::fs::read_to_string(r.join("z/record.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "step,proxy_reward,gold_reward,mop,regularizer_mean");
    assert_eq!(csv.lines().count(), 2);

    write(r, "none.toml", "schema_version = 1\nn_sft_samples = 500\n[rl]\nsteps = 300\n");
    write(r, "ibl0.toml", "schema_version = 1\nn_sft_samples = 500\n[rl]\nsteps = 300\nregularizer = \"ibl\"\ngamma = 0.0\n");
    ok(r, &["rl-run", "--rm", "std", "--detector", "info", "--data", "data", "--config", "none.toml", "--out", "none"]);
    ok(r, &["rl-run", "--rm", "std", "--detector", "info", "--data", "data", "--config", "ibl0.toml", "--out", "ibl0"]);
    for f in ["record.csv", "policy.json", "policy_samples.jsonl"] {
        assert_eq!(hash(r.join("none").join(f)), hash(r.join("ibl0").join(f)), "{f}");
    }
    let rec = json(r.join("none/record.json"));
    assert_eq!(rec["stop_reason"], "completed");
    assert_eq!(rec["rows"].as_array().unwrap().len(), 4);

    // the exported policy samples reproduce the final recorded MOP
    ok(r, &["detect", "--detector", "info", "--sft", "data/sft_samples.jsonl", "--rlhf", "none/policy_samples.jsonl", "--out", "d"]);
    let mop = json(r.join("d/report.json"))["summary"]["mop"].clone();
    assert_eq!(mop, rec["summary"]["final_mop"]);

    write(r, "stop.toml", "schema_version = 1\n[rl]\nsteps = 300\neval_every = 25\nearly_stop_mop = 0.02\n");
    ok(r, &["rl-run", "--rm", "std", "--detector", "info", "--data", "data", "--config", "stop.toml", "--out", "stop"]);
    let rec = json(r.join("stop/record.json"));
    if rec["stop_reason"] == "early_stop_mop" && !rec["returned_row"].is_null() {
        let i = rec["returned_row"].as_u64().unwrap() as usize;
        assert!(rec["rows"][i]["mop"].as_f64().unwrap() <= 0.02);
    }

    write(r, "blow.toml", "schema_version = 1\n[rl]\nsteps = 5\nlr = 1e308\n");
    let out = iblab(r, &["rl-run", "--rm", "std", "--detector", "info", "--data", "data", "--config", "blow.toml", "--out", "blow"]);
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert_eq!(json(r.join("blow/record.json"))["stop_reason"], "diverged");
    assert_eq!(json(r.join("blow/manifest.json"))["exit_code"], 3);
    ok(r, &["replay", "--manifest", "blow/manifest.json"]);

    let out = iblab(r, &["rl-run", "--rm", "std", "--detector", "std", "--data", "data", "--out", "x"]);
    assert_eq!(code(&out), 2);
    write(r, "bad.toml", "schema_version = 1\n[rl]\nregularizer = \"ppo\"\n");
    let out = iblab(r, &["rl-run", "--rm", "std", "--detector", "info", "--data", "data", "--config", "bad.toml", "--out", "x"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn pessimism_check_report() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path();
    ok(r, &["pessimism-check", "--seeds", "20", "--out", "p"]);
    let rep = json(r.join("p/pessimism.json"));
    assert!(rep["max_deviation"].as_f64().unwrap() < 1e-6);
    assert_eq!(rep["zero_h"]["closed"], 0.0);
    assert_eq!(rep["zero_h"]["numeric"], 0.0);
    assert!(rep["sigma_rel_error_zero_mean"].as_f64().unwrap() < 0.05);
    assert!(rep["sigma_rel_error_mean2"].as_f64().unwrap() > 0.5);
    assert_eq!(std::fs::read_to_string(r.join("p/pessimism.csv")).unwrap().lines().count(), 22);
    let out = iblab(r, &["pessimism-check", "--b", "0", "--out", "x"]);
    assert_eq!(code(&out), 2);
}

const SWEEP_BASE: &str = "schema_version = 1
n_train_pairs = 600
n_eval_pairs = 300
n_sft_samples = 500

[world]
n_prompts = 40
n_eval_prompts = 20

[rl]
steps = 300
";

#[test]
fn single_point_sweep_equals_rl_run() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path();
    write(r, "base.toml", SWEEP_BASE);
    write(r, "data.toml", "schema_version = 1\nseed = 4\nn_train_pairs = 600\nn_eval_pairs = 300\nn_sft_samples = 500\n[world]\nn_prompts = 40\nn_eval_prompts = 20\n");
    write(r, "rl.toml", "schema_version = 1\nn_sft_samples = 500\n[rl]\nsteps = 300\nregularizer = \"ibl\"\ngamma = 0.05\n");
    ok(r, &["gen-data", "--config", "data.toml", "--out", "data"]);
    ok(r, &["train-rm", "--data", "data", "--kind", "inform", "--out", "info"]);
    ok(r, &["rl-run", "--rm", "info", "--detector", "info", "--data", "data", "--config", "rl.toml", "--out", "rl"]);
    ok(r, &["sweep", "--param", "gamma", "--grid", "0.05", "--seeds", "4", "--config", "base.toml", "--out", "sw"]);
    let rec = json(r.join("rl/record.json"));
    let sw = json(r.join("sw/summary.json"));
    for key in ["final_gold", "final_mop", "peak_mop"] {
        assert_eq!(sw["points"][0][key], rec["summary"][key], "{key}");
    }
    let csv = std::fs::read_to_string(r.join("sw/summary.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "value,final_gold,final_mop,peak_mop");

    ok(r, &["sweep", "--param", "beta", "--grid", "0.01,0.1", "--seeds", "4,5", "--config", "base.toml", "--out", "swb"]);
    let runs = std::fs::read_to_string(r.join("swb/runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 5);
    ok(r, &["replay", "--manifest", "swb/manifest.json"]);

    write(r, "none.toml", "schema_version = 1\n[rl]\nregularizer = \"none\"\n");
    let out = iblab(r, &["sweep", "--param", "gamma", "--grid", "0.1", "--config", "none.toml", "--out", "x"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn replay_verifies_every_command() {
    let dir = small_setup();
    let r = dir.path();
    ok(r, &["eval-rm", "--checkpoint", "std", "--data", "data", "--out", "ev"]);
    let s = "data/sft_samples.jsonl";
    ok(r, &["detect", "--detector", "info", "--sft", s, "--rlhf", s, "--out", "det"]);
    write(r, "rl.toml", "schema_version = 1\n[rl]\nsteps = 200\n");
    ok(r, &["rl-run", "--rm", "std", "--detector", "info", "--data", "data", "--config", "rl.toml", "--out", "rl"]);
    ok(r, &["pessimism-check", "--seeds", "5", "--sigma-pairs", "1000", "--out", "pc"]);
    for d in ["data", "std", "info", "ev", "det", "rl", "pc"] {
        ok(r, &["replay", "--manifest", &format!("{d}/manifest.json")]);
        let rep = json(r.join(format!("{d}.replay/replay.json")));
        assert_eq!(rep["identical"], true, "{d}");
    }

    // a changed input is refused, a changed recorded hash is a mismatch
    let m = r.join("ev/manifest.json");
    let mut v = json(&m);
    v["outputs"][0]["sha256"] = Value::from("00");
    std::fs::write(&m, serde_json::to_vec(&v).unwrap()).unwrap();
    let out = iblab(r, &["replay", "--manifest", "ev/manifest.json", "--out", "ev2"]);
    assert_eq!(code(&out), 4);

    let mut pairs = std::fs::read_to_string(r.join("data/eval.jsonl")).unwrap();
    pairs.push('\n');
    std::fs::write(r.join("data/eval.jsonl"), pairs).unwrap();
    let out = iblab(r, &["replay", "--manifest", "rl/manifest.json", "--out", "rl3"]);
    assert!(out.status.success(), "rl-run does not read eval pairs");
    let out = iblab(r, &["replay", "--manifest", "ev/manifest.json", "--out", "ev3"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("changed"));
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path();
    write(r, "small.toml", SMALL);
    ok(r, &["gen-data", "--config", "small.toml"]);
    assert!(r.join("gen-data/train.jsonl").is_file());
    let m = json(r.join("gen-data/manifest.json"));
    assert_eq!(Path::new(m["out_dir"].as_str().unwrap()), r.join("gen-data").canonicalize().unwrap());
}
