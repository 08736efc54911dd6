#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use depthforge::io::{write_depth, write_mask};
use depthforge::manifest::write_manifest;
use depthforge::synth::{corrupt, preset, render, Preset};
use depthforge::ImageRecord;
use sha2::{Digest, Sha256};

pub fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_depthforge"));
    cmd.env_remove("DEPTHFORGE_CONFIG");
    cmd
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

/// Writes a manifest of `n` images cycling through the presets, each with a
/// directory of noisy iterations, under `dir`. Returns the manifest path.
pub fn batch_inputs(dir: &Path, n: usize) -> PathBuf {
    let kinds = [Preset::Bleed, Preset::Transient, Preset::Speckle, Preset::Mixed];
    let mut records = Vec::new();
    for k in 0..n {
        let mut fx = preset(kinds[k % kinds.len()]);
        fx.noise.seed += k as u64;
        let (clean, mask) = render(&fx.scene).unwrap();
        let its = corrupt(&clean, &mask, &fx.noise).unwrap();
        let id = format!("img{k:02}");
        let it_dir = dir.join(&id);
        fs::create_dir_all(&it_dir).unwrap();
        for (t, it) in its.iter().enumerate() {
            write_depth(it_dir.join(format!("{t}.dfd")), it).unwrap();
        }
        write_mask(dir.join(format!("{id}.dfm")), &mask).unwrap();
        records.push(ImageRecord::new(&id, id.clone(), format!("{id}.dfm")));
    }
    let path = dir.join("manifest.jsonl");
    write_manifest(fs::File::create(&path).unwrap(), &records).unwrap();
    path
}

/// SHA-256 over every file under `dir`, by relative path in sorted order.
pub fn tree_digest(dir: &Path) -> String {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<(String, Vec<u8>)>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, fs::read(&p).unwrap()));
            }
        }
    }
    let mut files = Vec::new();
    walk(dir, dir, &mut files);
    files.sort();
    let mut h = Sha256::new();
    for (name, bytes) in files {
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
