//! The CLI, run twice with the same arguments, writes identical bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;

use madbal_core::SelectionMode;

use crate::Outcome;

fn madbal(session: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_madbal"))
        .arg("--session")
        .arg(session)
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(out.status.success(), "madbal {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr).trim());
    Ok(())
}

/// Every file under `root` by relative path. Reports lose their wall-clock field.
fn snapshot(root: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let path = entry.map_err(|e| e.to_string())?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
            let mut bytes = fs::read(&path).map_err(|e| e.to_string())?;
            if rel.ends_with("report.json") {
                let mut v: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
                v.as_object_mut().unwrap().remove("wall_time_seconds");
                bytes = serde_json::to_vec(&v).unwrap();
            }
            out.insert(rel, bytes);
        }
    }
    Ok(out)
}

fn run_twice(script: &[Vec<String>]) -> Result<usize, String> {
    let mut snaps = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let session = dir.path().join("s");
        for args in script {
            let args: Vec<&str> = args.iter().map(String::as_str).collect();
            madbal(&session, &args)?;
        }
        snaps.push(snapshot(&session)?);
    }
    let (a, b) = (&snaps[0], &snaps[1]);
    let queries = a.keys().filter(|k| k.ends_with("queries.json")).count();
    ensure!(queries > 0, "no queries.json written by {script:?}");
    ensure!(a.keys().eq(b.keys()), "runs wrote different files: {:?} vs {:?}", a.keys(), b.keys());
    for (name, bytes) in a {
        ensure!(&b[name] == bytes, "{name} differs between runs of {script:?}");
    }
    Ok(queries)
}

fn words(s: &str) -> Vec<String> {
    s.split_whitespace().map(String::from).collect()
}

pub fn run() -> Outcome {
    let synth = words("synth --images 3 --height 40 --width 48 --classes 4 --budget 6 --seed 5");
    let mut scripts = Vec::new();
    for mode in SelectionMode::ALL {
        scripts.push(vec![synth.clone(), words(&format!("select --mode {mode} --clusters 4 --seed 7"))]);
    }
    scripts.push(vec![
        synth.clone(),
        words("seed --n 5 --seed 3"),
        words("superpixels --clusters 5 --seed 2"),
        words("round --oracle sim --seed 2"),
        words("round --mode random-breakdown --oracle sim --seed 9"),
        words("round --mode vanilla --oracle human --seed 1"),
    ]);
    let mut files = 0;
    for script in &scripts {
        files += run_twice(script)?;
    }
    Ok(format!("{} command scripts, {files} queries.json files byte-identical across runs", scripts.len()))
}
