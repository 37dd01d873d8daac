//! Four-file TSV bundle reader/writer and the LINQS citation converter.
//!
//! Bundle layout (tab separated, `#` comment lines and blank lines ignored):
//!
//! - `edges.tsv`    `src  dst`
//! - `features.tsv` `id   f_1 .. f_d`
//! - `labels.tsv`   `id   class`
//! - `splits.tsv`   `id   train|val|test`

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Graph, Splits};
use crate::error::{io_err, Error, Result};

/// Original id of every compacted node, indexed by compact id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdMap(pub Vec<u64>);

impl IdMap {
    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &o)| o == i as u64)
    }
}

fn content_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .enumerate()
        .filter_map(|(i, l)| {
            let t = l.trim();
            (!t.is_empty() && !t.starts_with('#')).then(|| (i + 1, t.to_string()))
        })
        .collect())
}

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_field<T: std::str::FromStr>(file: &Path, line: usize, field: Option<&str>, what: &str) -> Result<T> {
    let s = field.ok_or_else(|| parse_err(file, line, format!("missing {what}")))?;
    s.trim()
        .parse()
        .map_err(|_| parse_err(file, line, format!("cannot parse {what} from `{s}`")))
}

/// Loads a canonical bundle whose node ids are `0..N`.
pub fn load_citation_bundle(dir: impl AsRef<Path>) -> Result<Graph> {
    let (graph, map) = read_bundle(dir.as_ref(), true)?;
    debug_assert!(map.is_identity());
    Ok(graph)
}

/// Loads a bundle with arbitrary (possibly non-contiguous) integer ids,
/// compacting them in ascending order of the original id.
pub fn ingest_bundle(dir: impl AsRef<Path>) -> Result<(Graph, IdMap)> {
    read_bundle(dir.as_ref(), false)
}

fn read_bundle(dir: &Path, strict: bool) -> Result<(Graph, IdMap)> {
    let feat_path = dir.join("features.tsv");
    let mut rows: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    let mut dim: Option<usize> = None;
    for (ln, line) in content_lines(&feat_path)? {
        let mut fields = line.split('\t');
        let id: u64 = parse_field(&feat_path, ln, fields.next(), "node id")?;
        let vals = fields
            .map(|f| {
                f.trim()
                    .parse::<f64>()
                    .map_err(|_| parse_err(&feat_path, ln, format!("cannot parse feature `{f}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        match dim {
            None => dim = Some(vals.len()),
            Some(d) if d != vals.len() => {
                return Err(parse_err(
                    &feat_path,
                    ln,
                    format!("expected {d} features, found {}", vals.len()),
                ))
            }
            _ => {}
        }
        if rows.insert(id, vals).is_some() {
            return Err(Error::Format(format!(
                "{}:{ln}: duplicate node id {id}",
                feat_path.display()
            )));
        }
    }

    let original: Vec<u64> = rows.keys().copied().collect();
    let n = original.len();
    if strict {
        if let Some((i, &o)) = original.iter().enumerate().find(|(i, &o)| o != *i as u64) {
            return Err(Error::Format(format!(
                "{}: node ids must be contiguous from 0; expected {i}, found {o}",
                feat_path.display()
            )));
        }
    }
    let index: HashMap<u64, usize> = original.iter().enumerate().map(|(i, &o)| (o, i)).collect();
    let lookup = |id: u64| -> Result<usize> {
        index.get(&id).copied().ok_or(Error::Range {
            what: "node id",
            value: id as usize,
            limit: n,
        })
    };

    let d = dim.unwrap_or(0);
    let mut features = Array2::<f64>::zeros((n, d));
    for (i, vals) in rows.values().enumerate() {
        for (j, &v) in vals.iter().enumerate() {
            features[[i, j]] = v;
        }
    }

    let edge_path = dir.join("edges.tsv");
    let mut edges = Vec::new();
    for (ln, line) in content_lines(&edge_path)? {
        let mut fields = line.split('\t');
        let a: u64 = parse_field(&edge_path, ln, fields.next(), "source id")?;
        let b: u64 = parse_field(&edge_path, ln, fields.next(), "target id")?;
        if fields.next().is_some() {
            return Err(parse_err(&edge_path, ln, "expected exactly two columns"));
        }
        edges.push((lookup(a)?, lookup(b)?));
    }
    if edges.is_empty() && n > 1 {
        log::warn!("{} holds no edges", edge_path.display());
    }

    let label_path = dir.join("labels.tsv");
    let mut labels: Vec<Option<usize>> = vec![None; n];
    for (ln, line) in content_lines(&label_path)? {
        let mut fields = line.split('\t');
        let id: u64 = parse_field(&label_path, ln, fields.next(), "node id")?;
        let class: usize = parse_field(&label_path, ln, fields.next(), "class id")?;
        let slot = &mut labels[lookup(id)?];
        if slot.replace(class).is_some() {
            return Err(Error::Format(format!(
                "{}:{ln}: duplicate label for node {id}",
                label_path.display()
            )));
        }
    }
    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            l.ok_or_else(|| {
                Error::Format(format!(
                    "{}: node {} has no label",
                    label_path.display(),
                    original[i]
                ))
            })
        })
        .collect::<Result<Vec<usize>>>()?;

    let split_path = dir.join("splits.tsv");
    let mut splits = Splits::default();
    for (ln, line) in content_lines(&split_path)? {
        let mut fields = line.split('\t');
        let id: u64 = parse_field(&split_path, ln, fields.next(), "node id")?;
        let name: String = parse_field(&split_path, ln, fields.next(), "split name")?;
        let v = lookup(id)?;
        match name.as_str() {
            "train" => splits.train.push(v),
            "val" => splits.val.push(v),
            "test" => splits.test.push(v),
            other => return Err(parse_err(&split_path, ln, format!("unknown split `{other}`"))),
        }
    }

    let graph = Graph::new(n, edges, features, labels, splits)?;
    Ok((graph, IdMap(original)))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path).map_err(io_err(path))?))
}

/// Writes `graph` as a canonical bundle into `dir` (created if missing).
pub fn write_bundle(graph: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let write_all = |name: &str, body: &dyn Fn(&mut BufWriter<fs::File>) -> std::io::Result<()>| -> Result<()> {
        let path = dir.join(name);
        let mut w = create(&path)?;
        body(&mut w).and_then(|_| w.flush()).map_err(io_err(&path))
    };

    write_all("edges.tsv", &|w| {
        for (a, b) in graph.edges() {
            writeln!(w, "{a}\t{b}")?;
        }
        Ok(())
    })?;
    write_all("features.tsv", &|w| {
        for (i, row) in graph.features().rows().into_iter().enumerate() {
            write!(w, "{i}")?;
            for x in row {
                write!(w, "\t{x}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    })?;
    write_all("labels.tsv", &|w| {
        for (i, l) in graph.labels().iter().enumerate() {
            writeln!(w, "{i}\t{l}")?;
        }
        Ok(())
    })?;
    write_all("splits.tsv", &|w| {
        let s = graph.splits();
        for (name, ids) in [("train", &s.train), ("val", &s.val), ("test", &s.test)] {
            for id in ids {
                writeln!(w, "{id}\t{name}")?;
            }
        }
        Ok(())
    })
}

pub fn write_id_map(map: &IdMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "# compact_id\toriginal_id")?;
        for (i, o) in map.0.iter().enumerate() {
            writeln!(w, "{i}\t{o}")?;
        }
        w.flush()
    };
    body().map_err(io_err(path))
}

/// Converts the public LINQS layout (`<name>.content`: `paper_id  w_1..w_d
/// label`, `<name>.cites`: `cited  citing`) into a graph.
///
/// The split follows the usual semi-supervised layout: 20 training nodes per
/// class, then 500 validation and 1000 test nodes, drawn with a seeded
/// shuffle. Citations naming papers absent from the content file are dropped.
pub fn convert_linqs(content: impl AsRef<Path>, cites: impl AsRef<Path>, seed: u64) -> Result<Graph> {
    let content = content.as_ref();
    let cites = cites.as_ref();
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut feats: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (ln, line) in content_lines(content)? {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(parse_err(content, ln, "expected id, features and label"));
        }
        let id = fields[0].to_string();
        let vals = fields[1..fields.len() - 1]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(content, ln, format!("cannot parse feature `{f}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = feats.first() {
            if first.len() != vals.len() {
                return Err(parse_err(
                    content,
                    ln,
                    format!("expected {} features, found {}", first.len(), vals.len()),
                ));
            }
        }
        if ids.insert(id.clone(), feats.len()).is_some() {
            return Err(Error::Format(format!(
                "{}:{ln}: duplicate paper id {id}",
                content.display()
            )));
        }
        feats.push(vals);
        raw_labels.push(fields[fields.len() - 1].to_string());
    }

    let classes: Vec<&String> = {
        let set: std::collections::BTreeSet<&String> = raw_labels.iter().collect();
        set.into_iter().collect()
    };
    let class_of: HashMap<&String, usize> = classes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|l| class_of[l]).collect();

    let mut edges = Vec::new();
    let mut dropped = 0usize;
    for (ln, line) in content_lines(cites)? {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 2 {
            return Err(parse_err(cites, ln, "expected two paper ids"));
        }
        match (ids.get(fields[0]), ids.get(fields[1])) {
            (Some(&a), Some(&b)) => edges.push((a, b)),
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} citations to unknown papers");
    }

    let n = feats.len();
    let d = feats.first().map_or(0, Vec::len);
    let mut features = Array2::<f64>::zeros((n, d));
    for (i, row) in feats.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            features[[i, j]] = v;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut per_class = vec![0usize; classes.len()];
    let mut splits = Splits::default();
    let mut used = HashSet::new();
    for &v in &order {
        if per_class[labels[v]] < 20 {
            per_class[labels[v]] += 1;
            splits.train.push(v);
            used.insert(v);
        }
    }
    for &v in order.iter().filter(|v| !used.contains(*v)) {
        if splits.val.len() < 500 {
            splits.val.push(v);
        } else if splits.test.len() < 1000 {
            splits.test.push(v);
        }
    }
    splits.train.sort_unstable();
    splits.val.sort_unstable();
    splits.test.sort_unstable();

    Graph::new(n, edges, features, labels, splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;

    fn write(dir: &Path, name: &str, body: &str) {
        fs::write(dir.join(name), body).unwrap();
    }

    fn bundle(dir: &Path, edges: &str, features: &str, labels: &str, splits: &str) {
        write(dir, "edges.tsv", edges);
        write(dir, "features.tsv", features);
        write(dir, "labels.tsv", labels);
        write(dir, "splits.tsv", splits);
    }

    #[test]
    fn single_node_bundle() {
        let dir = tempfile::tempdir().unwrap();
        bundle(dir.path(), "", "0\t1.5\t2\n", "0\t0\n", "0\ttrain\n");
        let g = load_citation_bundle(dir.path()).unwrap();
        assert_eq!(g.num_nodes(), 1);
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.feature_dim(), 2);
    }

    #[test]
    fn symmetric_duplicates_collapse() {
        let dir = tempfile::tempdir().unwrap();
        bundle(
            dir.path(),
            "# comment\n0\t1\n1\t0\n1\t1\n",
            "0\t1\n1\t0\n",
            "0\t0\n1\t1\n",
            "0\ttrain\n1\ttest\n",
        );
        let g = load_citation_bundle(dir.path()).unwrap();
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.num_classes(), 2);
        assert_eq!(g.splits().test, vec![1]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        bundle(dir.path(), "0\t1\n0\tx\n", "0\t1\n1\t1\n", "0\t0\n1\t0\n", "");
        match load_citation_bundle(dir.path()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn endpoint_out_of_range() {
        let dir = tempfile::tempdir().unwrap();
        bundle(dir.path(), "0\t5\n", "0\t1\n1\t1\n", "0\t0\n1\t0\n", "");
        assert!(matches!(
            load_citation_bundle(dir.path()),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn duplicate_feature_id() {
        let dir = tempfile::tempdir().unwrap();
        bundle(dir.path(), "", "0\t1\n0\t2\n", "0\t0\n", "");
        assert!(matches!(
            load_citation_bundle(dir.path()),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn non_contiguous_ids_are_compacted_on_ingest() {
        let dir = tempfile::tempdir().unwrap();
        bundle(
            dir.path(),
            "10\t30\n",
            "30\t1\n10\t2\n20\t3\n",
            "10\t0\n20\t1\n30\t0\n",
            "20\tval\n",
        );
        assert!(load_citation_bundle(dir.path()).is_err());
        let (g, map) = ingest_bundle(dir.path()).unwrap();
        assert_eq!(map.0, vec![10, 20, 30]);
        assert!(!map.is_identity());
        assert_eq!(g.edges(), &[(0, 2)]);
        assert_eq!(g.features()[[0, 0]], 2.0);
        assert_eq!(g.splits().val, vec![1]);
    }

    #[test]
    fn write_then_load_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let g = Graph::new(
            3,
            [(0, 1), (2, 1)],
            ndarray::array![[0.1, 1e-17], [3.0, -2.5], [0.0, 1.0 / 3.0]],
            vec![0, 1, 1],
            Splits {
                train: vec![0],
                val: vec![1],
                test: vec![2],
            },
        )
        .unwrap();
        write_bundle(&g, dir.path()).unwrap();
        let back = load_citation_bundle(dir.path()).unwrap();
        assert_eq!(back.edges(), g.edges());
        assert_eq!(back.features(), g.features());
        assert_eq!(back.labels(), g.labels());
        assert_eq!(back.splits(), g.splits());
    }

    #[test]
    fn linqs_conversion() {
        let dir = tempfile::tempdir().unwrap();
        let mut content = String::new();
        for i in 0..60 {
            let label = if i % 2 == 0 { "Theory" } else { "Neural_Networks" };
            content.push_str(&format!("p{i}\t{}\t0\t1\t{label}\n", i % 3));
        }
        write(dir.path(), "x.content", &content);
        write(dir.path(), "x.cites", "p0\tp1\np1\tp0\np2\tmissing\n");
        let g = convert_linqs(dir.path().join("x.content"), dir.path().join("x.cites"), 7).unwrap();
        assert_eq!(g.num_nodes(), 60);
        assert_eq!(g.num_edges(), 1);
        assert_eq!(g.feature_dim(), 3);
        assert_eq!(g.num_classes(), 2);
        assert_eq!(g.splits().train.len(), 40);
        assert_eq!(g.splits().val.len(), 20);
        assert!(g.splits().test.is_empty());
    }
}
