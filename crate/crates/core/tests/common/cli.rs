use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn csna(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csna"))
        .args(args)
        .env_remove("CSNA_OUTPUT_ROOT")
        .output()
        .expect("binary runs")
}

pub fn ok(args: &[&str]) -> String {
    let out = csna(args);
    assert!(
        out.status.success(),
        "{args:?} failed ({:?}):\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

pub fn code(args: &[&str]) -> (i32, String) {
    let out = csna(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file in `dir` except the wall-clock record.
pub fn payload(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if name != "timing.json" {
            out.insert(name, fs::read(&path).unwrap());
        }
    }
    out
}

/// Runs `args` twice into separate output directories under `root` and
/// compares the payloads byte for byte. Returns the first run's directory.
pub fn rerun(root: &Path, name: &str, args: &[&str]) -> Result<PathBuf, String> {
    let (a, b) = (root.join(format!("{name}-a")), root.join(format!("{name}-b")));
    for dir in [&a, &b] {
        let mut full = args.to_vec();
        full.extend(["--out", s(dir)]);
        let out = csna(&full);
        if !out.status.success() {
            return Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
        }
    }
    let (pa, pb) = (payload(&a), payload(&b));
    if !pa.contains_key("config_echo.json") {
        return Err(format!("{name}: no config echo"));
    }
    if pa.keys().ne(pb.keys()) {
        return Err(format!("{name}: different file sets"));
    }
    match pa.iter().find(|(file, bytes)| **bytes != pb[*file]) {
        Some((file, _)) => Err(format!("{name}: {file} differs between reruns")),
        None => Ok(a),
    }
}

pub fn twice(root: &Path, name: &str, args: &[&str]) -> PathBuf {
    rerun(root, name, args).unwrap_or_else(|e| panic!("{e}"))
}

pub fn dataset(root: &Path) -> PathBuf {
    let dir = root.join("data");
    ok(&["generate", "--n", "160", "--p", "0.05", "--q", "0.15", "--mu", "2", "--seed", "3", "--out", s(&dir)]);
    dir
}
