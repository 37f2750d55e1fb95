//! Plain-TSV dataset serialization.
//!
//! A dataset directory holds four files:
//!
//! * `edges.tsv`    — `u \t v` per line, 0-based node ids; each undirected
//!   edge may appear once (the loader symmetrizes) or twice.
//! * `features.tsv` — `node \t feature` per line (COO of ones).
//! * `labels.tsv`   — `node \t label` per line, one line per node.
//! * `meta.tsv`     — a single line `N \t F \t Y`.
//!
//! Prepared datasets additionally carry `splits.tsv` (`node \t
//! {train|val|test}`) and `targets.tsv` (one node id per line).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{Graph, SplitSpec};
use crate::error::{Result, SniaError};

fn parse_error(path: &Path, line: usize, msg: impl Into<String>) -> SniaError {
    SniaError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let file = File::open(path).map_err(|e| parse_error(path, 0, format!("cannot open: {e}")))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        let a = it
            .next()
            .ok_or_else(|| parse_error(path, i + 1, "missing first field"))?
            .trim();
        let b = it
            .next()
            .ok_or_else(|| parse_error(path, i + 1, "missing second field"))?
            .trim();
        if it.next().is_some() {
            return Err(parse_error(path, i + 1, "expected exactly two tab-separated fields"));
        }
        let a: usize = a
            .parse()
            .map_err(|_| parse_error(path, i + 1, format!("not an integer: {a:?}")))?;
        let b: usize = b
            .parse()
            .map_err(|_| parse_error(path, i + 1, format!("not an integer: {b:?}")))?;
        out.push((a, b));
    }
    Ok(out)
}

fn read_meta(path: &Path) -> Result<(usize, usize, usize)> {
    let file = File::open(path).map_err(|e| parse_error(path, 0, format!("cannot open: {e}")))?;
    let mut lines = BufReader::new(file).lines();
    let line = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "empty meta file"))??;
    let fields: Vec<&str> = line.trim_end().split('\t').collect();
    if fields.len() != 3 {
        return Err(parse_error(path, 1, "expected `N \\t F \\t Y`"));
    }
    let parse = |s: &str| -> Result<usize> {
        s.trim()
            .parse()
            .map_err(|_| parse_error(path, 1, format!("not an integer: {s:?}")))
    };
    Ok((parse(fields[0])?, parse(fields[1])?, parse(fields[2])?))
}

/// Load a dataset from explicit file paths.
pub fn load_dataset_files(edge_path: &Path, feature_path: &Path, label_path: &Path, meta_path: &Path) -> Result<Graph> {
    let (n, f, y) = read_meta(meta_path)?;
    let edges = read_pairs(edge_path)?;
    let features = read_pairs(feature_path)?;
    let label_pairs = read_pairs(label_path)?;
    let mut labels = vec![usize::MAX; n];
    for &(node, label) in &label_pairs {
        if node >= n {
            return Err(SniaError::Validation(format!("label line names node {node}, out of range [0, {n})")));
        }
        labels[node] = label;
    }
    if let Some(missing) = labels.iter().position(|&l| l == usize::MAX) {
        return Err(SniaError::Validation(format!("node {missing} has no label line")));
    }
    Graph::build(n, f, y, &edges, &features, labels)
}

/// Load `edges.tsv`, `features.tsv`, `labels.tsv` and `meta.tsv` from a
/// dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Graph> {
    load_dataset_files(
        &dir.join("edges.tsv"),
        &dir.join("features.tsv"),
        &dir.join("labels.tsv"),
        &dir.join("meta.tsv"),
    )
}

/// Write the canonical TSV form of a graph: edges once per undirected pair
/// with `u < v`, ordered lexicographically; features and labels ordered by
/// node id.
pub fn write_dataset(g: &Graph, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut edges = BufWriter::new(File::create(dir.join("edges.tsv"))?);
    for u in 0..g.num_nodes() {
        for &v in g.neighbors(u) {
            if u < v {
                writeln!(edges, "{u}\t{v}")?;
            }
        }
    }
    edges.flush()?;
    let mut feats = BufWriter::new(File::create(dir.join("features.tsv"))?);
    for u in 0..g.num_nodes() {
        for &f in g.features(u) {
            writeln!(feats, "{u}\t{f}")?;
        }
    }
    feats.flush()?;
    let mut labels = BufWriter::new(File::create(dir.join("labels.tsv"))?);
    for u in 0..g.num_nodes() {
        writeln!(labels, "{u}\t{}", g.label(u))?;
    }
    labels.flush()?;
    let mut meta = BufWriter::new(File::create(dir.join("meta.tsv"))?);
    writeln!(meta, "{}\t{}\t{}", g.num_nodes(), g.num_features(), g.num_labels())?;
    meta.flush()?;
    Ok(())
}

/// Write `splits.tsv` and `targets.tsv` next to a prepared dataset.
pub fn write_splits(split: &SplitSpec, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let n = split.train_ids.len() + split.val_ids.len() + split.test_ids.len();
    let mut role = vec![""; n];
    for &u in &split.train_ids {
        role[u] = "train";
    }
    for &u in &split.val_ids {
        role[u] = "val";
    }
    for &u in &split.test_ids {
        role[u] = "test";
    }
    let mut f = BufWriter::new(File::create(dir.join("splits.tsv"))?);
    for (u, r) in role.iter().enumerate() {
        writeln!(f, "{u}\t{r}")?;
    }
    f.flush()?;
    let mut t = BufWriter::new(File::create(dir.join("targets.tsv"))?);
    for &u in &split.target_ids {
        writeln!(t, "{u}")?;
    }
    t.flush()?;
    Ok(())
}

/// Read `splits.tsv` and `targets.tsv` from a prepared dataset directory.
pub fn load_splits(dir: &Path, seed: u64, g: &Graph) -> Result<SplitSpec> {
    let path = dir.join("splits.tsv");
    let file = File::open(&path).map_err(|e| parse_error(&path, 0, format!("cannot open: {e}")))?;
    let mut train_ids = Vec::new();
    let mut val_ids = Vec::new();
    let mut test_ids = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        let node: usize = it
            .next()
            .unwrap_or("")
            .trim()
            .parse()
            .map_err(|_| parse_error(&path, i + 1, "bad node id"))?;
        match it.next().map(str::trim) {
            Some("train") => train_ids.push(node),
            Some("val") => val_ids.push(node),
            Some("test") => test_ids.push(node),
            other => return Err(parse_error(&path, i + 1, format!("bad role {other:?}"))),
        }
    }
    let tpath = dir.join("targets.tsv");
    let tfile = File::open(&tpath).map_err(|e| parse_error(&tpath, 0, format!("cannot open: {e}")))?;
    let mut target_ids = Vec::new();
    for (i, line) in BufReader::new(tfile).lines().enumerate() {
        let line = line?;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        target_ids.push(
            line.trim()
                .parse()
                .map_err(|_| parse_error(&tpath, i + 1, "bad node id"))?,
        );
    }
    train_ids.sort_unstable();
    val_ids.sort_unstable();
    test_ids.sort_unstable();
    // target order is meaningful (sampled order); do not sort
    let spec = SplitSpec {
        train_ids,
        val_ids,
        test_ids,
        target_ids,
        seed,
    };
    spec.validate(g)?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::make_splits;

    fn tmp_dir(tag: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("snia-io-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn write_then_load_round_trips_byte_identically() {
        let g = Graph::build(
            4,
            3,
            2,
            &[(2, 0), (0, 1), (1, 2)],
            &[(1, 2), (1, 0), (3, 1)],
            vec![0, 1, 1, 0],
        )
        .unwrap();
        let dir = tmp_dir("roundtrip");
        write_dataset(&g, &dir).unwrap();
        let loaded = load_dataset(&dir).unwrap();
        assert_eq!(loaded, g);
        // canonical form is a fixed point
        let dir2 = tmp_dir("roundtrip2");
        write_dataset(&loaded, &dir2).unwrap();
        for f in ["edges.tsv", "features.tsv", "labels.tsv", "meta.tsv"] {
            assert_eq!(
                std::fs::read(dir.join(f)).unwrap(),
                std::fs::read(dir2.join(f)).unwrap(),
                "{f} differs"
            );
        }
        std::fs::remove_dir_all(&dir).unwrap();
        std::fs::remove_dir_all(&dir2).unwrap();
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tmp_dir("badline");
        std::fs::write(dir.join("meta.tsv"), "3\t2\t1\n").unwrap();
        std::fs::write(dir.join("edges.tsv"), "0\t1\nnot-a-number\t2\n").unwrap();
        std::fs::write(dir.join("features.tsv"), "").unwrap();
        std::fs::write(dir.join("labels.tsv"), "0\t0\n1\t0\n2\t0\n").unwrap();
        let err = load_dataset(&dir).unwrap_err();
        match err {
            SniaError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn splits_round_trip() {
        let edges: Vec<(usize, usize)> = (0..29).map(|i| (i, i + 1)).collect();
        let g = Graph::build(30, 2, 1, &edges, &[], vec![0; 30]).unwrap();
        let split = make_splits(&g, 3).unwrap();
        let dir = tmp_dir("splits");
        write_splits(&split, &dir).unwrap();
        let loaded = load_splits(&dir, 3, &g).unwrap();
        assert_eq!(loaded, split);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
