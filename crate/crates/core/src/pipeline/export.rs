//! Embedding export as TSV plus a 2-D PCA companion file.
//!
//! Embedding file: optional `#` header, then one line per node:
//! `node<TAB>label<TAB>e_0<TAB>...<TAB>e_{d-1}`, values with 12 significant
//! digits. The PCA file has the same first two columns followed by `pc1` and
//! `pc2`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};

use crate::error::{io_err, Error, Result};

/// `embeddings.tsv` -> `embeddings.pca.tsv`.
pub fn pca_path(path: &Path) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.pca.tsv"))
}

fn fmt12(v: f64) -> String {
    format!("{v:.11e}")
}

/// Projection onto the top two principal components. Each component's sign
/// is fixed so its largest-magnitude loading is positive.
pub fn pca_2d(x: ArrayView2<'_, f64>) -> Array2<f64> {
    let (n, d) = x.dim();
    let mut out = Array2::zeros((n, 2));
    if n == 0 || d == 0 {
        return out;
    }
    let mean = x.mean_axis(ndarray::Axis(0)).expect("n > 0");
    let centered = &x - &mean;
    let cov = centered.t().dot(&centered) / n as f64;
    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    for (c, &k) in order.iter().take(2).enumerate() {
        let col = eig.eigenvectors.column(k);
        let pivot = (0..d)
            .max_by(|&a, &b| col[a].abs().total_cmp(&col[b].abs()))
            .expect("d > 0");
        let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out[[i, c]] = sign * (0..d).map(|j| centered[[i, j]] * col[j]).sum::<f64>();
        }
    }
    out
}

/// Writes the embedding table and its PCA companion. Returns the PCA path.
pub fn export_embeddings(embeddings: ArrayView2<'_, f64>, labels: &[usize], path: impl AsRef<Path>) -> Result<PathBuf> {
    let path = path.as_ref();
    if labels.len() != embeddings.nrows() {
        return Err(Error::Contract(format!(
            "{} labels for {} embeddings",
            labels.len(),
            embeddings.nrows()
        )));
    }
    let mut body = String::new();
    let header: Vec<String> = (0..embeddings.ncols()).map(|j| format!("e{j}")).collect();
    let _ = writeln!(body, "# node\tlabel\t{}", header.join("\t"));
    for (i, row) in embeddings.outer_iter().enumerate() {
        let _ = write!(body, "{i}\t{}", labels[i]);
        for &v in row {
            let _ = write!(body, "\t{}", fmt12(v));
        }
        body.push('\n');
    }
    std::fs::write(path, body).map_err(io_err(path))?;

    let proj = pca_2d(embeddings);
    let mut pca = String::from("# node\tlabel\tpc1\tpc2\n");
    for (i, row) in proj.outer_iter().enumerate() {
        let _ = writeln!(pca, "{i}\t{}\t{}\t{}", labels[i], fmt12(row[0]), fmt12(row[1]));
    }
    let pp = pca_path(path);
    std::fs::write(&pp, pca).map_err(io_err(&pp))?;
    Ok(pp)
}

/// Reads an embedding file back: node ids, labels and the matrix.
pub fn read_embeddings(path: impl AsRef<Path>) -> Result<(Vec<usize>, Vec<usize>, Array2<f64>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let parse_err = |line: usize, msg: String| Error::Parse {
        file: path.to_path_buf(),
        line,
        msg,
    };
    let (mut ids, mut labels, mut data) = (Vec::new(), Vec::new(), Vec::new());
    let mut width = None;
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 {
            return Err(parse_err(i + 1, "expected node and label columns".into()));
        }
        let d = fields.len() - 2;
        if *width.get_or_insert(d) != d {
            return Err(parse_err(i + 1, format!("expected {} values, found {d}", width.unwrap())));
        }
        ids.push(fields[0].parse().map_err(|e| parse_err(i + 1, format!("node id: {e}")))?);
        labels.push(fields[1].parse().map_err(|e| parse_err(i + 1, format!("label: {e}")))?);
        for f in &fields[2..] {
            data.push(f.parse::<f64>().map_err(|e| parse_err(i + 1, format!("value `{f}`: {e}")))?);
        }
    }
    let n = ids.len();
    let m = Array2::from_shape_vec((n, width.unwrap_or(0)), data).expect("rows have equal width");
    Ok((ids, labels, m))
}
