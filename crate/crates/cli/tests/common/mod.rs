//! Fixture builders and process helpers for the CLI tests.
#![allow(dead_code)] // not every test target uses every helper

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use trajforge_core::model::{
    save_episode, save_manifest, DatasetManifest, Episode, EpisodeRef, FieldSeries, FieldSpec,
    Kind, Prefix, Role, Suffix, SCHEMA_VERSION,
};

pub fn trajforge() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trajforge"))
}

pub fn run_in(dir: &Path, args: &[&str]) -> Output {
    trajforge()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("failed to spawn trajforge")
}

pub fn assert_success(output: &Output, what: &str) {
    assert!(
        output.status.success(),
        "{what} failed (status {:?})\nstdout: {}\nstderr: {}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr),
    );
}

fn joint_series(name: &str, role: Role, values: Vec<Vec<f64>>) -> (String, FieldSeries) {
    let dims = values[0].len();
    (
        name.to_string(),
        FieldSeries {
            spec: FieldSpec {
                name: name.into(),
                role,
                kind: Kind::NonEef,
                prefix: Prefix::Abs,
                suffix: Suffix::Joint,
                dims,
            },
            values,
        },
    )
}

/// One perfect-log episode: actions are the exact next-frame states, so
/// the consistency gate scores zero.
pub fn perfect_episode(id: &str, task: &str, base: f64, offset: f64, frames: usize) -> Episode {
    let states: Vec<Vec<f64>> = (0..frames)
        .map(|t| vec![base + offset + 0.01 * t as f64, base - offset])
        .collect();
    let actions: Vec<Vec<f64>> = (0..frames)
        .map(|t| states[(t + 1).min(frames - 1)].clone())
        .collect();
    let mut fields = BTreeMap::new();
    for (name, series) in [
        joint_series("state", Role::State, states),
        joint_series("action", Role::Action, actions),
    ] {
        fields.insert(name, series);
    }
    Episode {
        episode_id: id.into(),
        task_id: task.into(),
        fps: 30.0,
        raw_instruction: format!("perform {task}"),
        fg_instruction: Some(vec![
            format!("approach the target of {task}"),
            "grasp and lift".into(),
        ]),
        fields,
        frame_count: frames,
        frame_stats: None,
        source_dataset: String::new(),
    }
}

/// 12-episode fixture: 3 tasks × 4 near-duplicate demonstrations (three
/// tight variants plus one looser execution per task). Writes episode
/// files and the manifest; returns the manifest path.
pub fn write_pipeline_fixture(dir: &Path) -> PathBuf {
    let mut refs = Vec::new();
    for task_idx in 0..3 {
        let task = format!("task{task_idx}");
        let base = 10.0 * task_idx as f64;
        for member in 0..4 {
            let offset = match member {
                0 => 0.005,
                1 => 0.010,
                2 => 0.015,
                _ => 1.0,
            };
            let id = format!("{task}-e{member}");
            let ep = perfect_episode(&id, &task, base, offset, 6 + member % 2);
            let file = format!("{id}.json");
            save_episode(&ep, dir.join(&file)).unwrap();
            refs.push(EpisodeRef {
                id,
                path: file,
                task_id: task.clone(),
            });
        }
    }
    let manifest = DatasetManifest {
        dataset_name: "fixture".into(),
        schema_version: SCHEMA_VERSION.into(),
        episodes: refs,
        task_index: BTreeMap::new(),
        base_dir: dir.to_path_buf(),
    };
    let path = dir.join("manifest.json");
    save_manifest(&manifest, &path).unwrap();
    path
}

pub fn write_config(dir: &Path, manifest: &Path, output_dir: &str) -> PathBuf {
    let config = serde_json::json!({
        "manifest": manifest.to_str().unwrap(),
        "output_dir": output_dir,
        "mixture": {"fg_weight": 2.0, "raw_weight": 1.0, "seed": 7, "draws": 200}
    });
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
    path
}

/// Relative path → file bytes for every file under `root`.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    out
}
