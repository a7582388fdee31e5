//! LIBSVM-format datasets, even partitioning across agents and synthetic
//! least-squares instances.

use std::fmt::Write as _;

use hippo_core::linalg::{Matrix, Vector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub message: String,
}

/// One sample: a label and sparse features `(index, value)` with 0-based,
/// strictly increasing indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: f64,
    pub features: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub rows: Vec<Row>,
    pub dim: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Dense feature matrix and label vector for the given rows.
    pub fn densify(&self, rows: &[usize]) -> (Matrix, Vector) {
        let mut a = Matrix::zeros(rows.len(), self.dim);
        let mut b = Vector::zeros(rows.len());
        for (r, &idx) in rows.iter().enumerate() {
            let row = &self.rows[idx];
            b[r] = row.label;
            for &(j, v) in &row.features {
                a[(r, j)] = v;
            }
        }
        (a, b)
    }

    /// Rescales every feature column to zero mean and unit variance
    /// (constant columns are only centered). Produces dense rows.
    pub fn standardize(&mut self) {
        let n = self.rows.len();
        if n == 0 {
            return;
        }
        let all: Vec<usize> = (0..n).collect();
        let (mut a, _) = self.densify(&all);
        for mut col in a.column_iter_mut() {
            let mean = col.sum() / n as f64;
            col.add_scalar_mut(-mean);
            let sd = (col.norm_squared() / n as f64).sqrt();
            if sd > 0.0 {
                col /= sd;
            }
        }
        for (r, row) in self.rows.iter_mut().enumerate() {
            row.features = (0..self.dim).map(|j| (j, a[(r, j)])).filter(|&(_, v)| v != 0.0).collect();
        }
    }
}

fn parse_index_value(tok: &str) -> Result<(usize, f64), String> {
    let (i, v) = tok.split_once(':').ok_or_else(|| format!("expected index:value, got {tok:?}"))?;
    let idx: usize = i.parse().map_err(|_| format!("invalid feature index {i:?}"))?;
    if idx == 0 {
        return Err("feature indices start at 1".into());
    }
    let val: f64 = v.parse().map_err(|_| format!("invalid feature value {v:?}"))?;
    Ok((idx - 1, val))
}

/// Parses `label idx:val idx:val ...` lines (1-based, strictly increasing
/// indices). Blank lines are skipped. The dimension is the larger of
/// `declared_dim` and the largest index seen; an index above `declared_dim`
/// is an error.
pub fn parse_libsvm(text: &str, declared_dim: Option<usize>) -> Result<Dataset, ParseError> {
    let mut rows = Vec::new();
    let mut dim = declared_dim.unwrap_or(0);
    for (no, line) in text.lines().enumerate() {
        let err = |message: String| ParseError { line: no + 1, message };
        let mut toks = line.split_whitespace();
        let Some(label) = toks.next() else { continue };
        let label: f64 = label.parse().map_err(|_| err(format!("invalid label {label:?}")))?;
        let mut features: Vec<(usize, f64)> = Vec::new();
        for tok in toks {
            let (idx, val) = parse_index_value(tok).map_err(&err)?;
            if let Some(&(prev, _)) = features.last() {
                if idx <= prev {
                    return Err(err(format!("feature index {} does not increase", idx + 1)));
                }
            }
            if let Some(d) = declared_dim {
                if idx >= d {
                    return Err(err(format!("feature index {} exceeds declared dimension {d}", idx + 1)));
                }
            }
            dim = dim.max(idx + 1);
            features.push((idx, val));
        }
        rows.push(Row { label, features });
    }
    Ok(Dataset { rows, dim })
}

/// Writes one line per row with 1-based indices; values use the shortest
/// representation that parses back to the same `f64`.
pub fn serialize_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    for row in &ds.rows {
        let _ = write!(out, "{:?}", row.label);
        for &(j, v) in &row.features {
            let _ = write!(out, " {}:{:?}", j + 1, v);
        }
        out.push('\n');
    }
    out
}

/// Row indices per agent: sizes differ by at most one, the first
/// `len mod m` agents getting the extra row. With a seed the rows are
/// shuffled first.
pub fn partition_indices(len: usize, agents: usize, shuffle: Option<u64>) -> Vec<Vec<usize>> {
    assert!(agents >= 1, "need at least one agent");
    let mut order: Vec<usize> = (0..len).collect();
    if let Some(seed) = shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let (base, extra) = (len / agents, len % agents);
    let mut out = Vec::with_capacity(agents);
    let mut start = 0;
    for i in 0..agents {
        let size = base + usize::from(i < extra);
        out.push(order[start..start + size].to_vec());
        start += size;
    }
    out
}

pub fn partition_even(ds: &Dataset, agents: usize, shuffle: Option<u64>) -> Vec<(Matrix, Vector)> {
    partition_indices(ds.len(), agents, shuffle).iter().map(|rows| ds.densify(rows)).collect()
}

/// Synthetic blocks with standard normal `A_i`, a standard normal planted
/// `x♮`, and `b_i = A_i x♮ + N(0, σ²)` noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticInstance {
    pub blocks: Vec<(Matrix, Vector)>,
    pub planted: Vector,
}

pub fn synth_least_squares(agents: usize, dim: usize, rows: usize, noise: f64, seed: u64) -> SyntheticInstance {
    assert!(agents >= 1 && dim >= 1 && rows >= 1, "sizes must be positive");
    assert!(noise >= 0.0, "noise level must be non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let planted = Vector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
    let noise_dist = Normal::new(0.0, noise).expect("finite non-negative sigma");
    let blocks = (0..agents)
        .map(|_| {
            let a = Matrix::from_fn(rows, dim, |_, _| StandardNormal.sample(&mut rng));
            let eps = Vector::from_fn(rows, |_, _| noise_dist.sample(&mut rng));
            let b = &a * &planted + eps;
            (a, b)
        })
        .collect();
    SyntheticInstance { blocks, planted }
}

/// Scales feature `j` by `condition^(−j/(d−1))`, so the columns span a
/// `condition`-fold range of magnitudes.
pub fn grade_columns(ds: &mut Dataset, condition: f64) {
    if ds.dim < 2 {
        return;
    }
    let scale: Vec<f64> = (0..ds.dim).map(|j| condition.powf(-(j as f64) / (ds.dim - 1) as f64)).collect();
    for row in &mut ds.rows {
        for (j, v) in row.features.iter_mut() {
            *v *= scale[*j];
        }
    }
}

/// Flattens blocks back into one dataset (dense rows, zeros dropped).
pub fn blocks_to_dataset(blocks: &[(Matrix, Vector)]) -> Dataset {
    let dim = blocks.first().map_or(0, |(a, _)| a.ncols());
    let mut rows = Vec::new();
    for (a, b) in blocks {
        for r in 0..a.nrows() {
            let features = (0..dim).map(|j| (j, a[(r, j)])).filter(|&(_, v)| v != 0.0).collect();
            rows.push(Row { label: b[r], features });
        }
    }
    Dataset { rows, dim }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_line_example() {
        let ds = parse_libsvm("1.5 1:2.0 3:-1.0\n", None).unwrap();
        assert_eq!(ds.rows, vec![Row { label: 1.5, features: vec![(0, 2.0), (2, -1.0)] }]);
        assert_eq!(ds.dim, 3);
    }

    #[test]
    fn empty_input() {
        assert_eq!(parse_libsvm("", None).unwrap(), Dataset::default());
        assert_eq!(parse_libsvm("\n\n", Some(4)).unwrap().dim, 4);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("1 1:2\nx 1:1\n", 2, "label"),
            ("1 1:2\n2 1:1 1:3\n", 2, "increase"),
            ("1 2:1 1:3\n", 1, "increase"),
            ("1 0:2\n", 1, "start at 1"),
            ("\n\n1 1-2\n", 3, "index:value"),
            ("1 1:abc\n", 1, "value"),
            ("1 7:1\n", 1, "declared"),
        ];
        for (text, line, needle) in cases {
            let e = parse_libsvm(text, Some(6)).unwrap_err();
            assert_eq!(e.line, line, "{text:?}");
            assert!(e.message.contains(needle), "{e}");
        }
    }

    #[test]
    fn partition_sizes() {
        let sizes: Vec<usize> = partition_indices(5, 3, None).iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
        assert!(partition_indices(3000, 50, Some(1)).iter().all(|p| p.len() == 60));
    }

    #[test]
    fn shuffled_partition_is_a_permutation_of_rows() {
        let ds = blocks_to_dataset(&synth_least_squares(1, 3, 23, 0.1, 4).blocks);
        let plain = partition_even(&ds, 4, None);
        let shuffled = partition_even(&ds, 4, Some(9));
        let collect = |parts: &[(Matrix, Vector)]| {
            let mut rows: Vec<Vec<u64>> = parts
                .iter()
                .flat_map(|(a, b)| {
                    (0..a.nrows()).map(move |r| {
                        let mut v: Vec<u64> = a.row(r).iter().map(|x| x.to_bits()).collect();
                        v.push(b[r].to_bits());
                        v
                    })
                })
                .collect();
            rows.sort();
            rows
        };
        assert_eq!(collect(&plain), collect(&shuffled));
        assert_ne!(plain, shuffled);
    }

    #[test]
    fn synthetic_generation_is_deterministic() {
        assert_eq!(synth_least_squares(3, 4, 5, 0.2, 7), synth_least_squares(3, 4, 5, 0.2, 7));
        assert_ne!(synth_least_squares(3, 4, 5, 0.2, 7), synth_least_squares(3, 4, 5, 0.2, 8));
    }

    #[test]
    fn graded_columns_span_the_condition_range() {
        let mut ds = Dataset { rows: vec![Row { label: 0.0, features: vec![(0, 1.0), (1, 1.0), (2, 1.0)] }], dim: 3 };
        grade_columns(&mut ds, 100.0);
        assert_eq!(ds.rows[0].features, vec![(0, 1.0), (1, 0.1), (2, 0.01)]);
    }

    #[test]
    fn noiseless_normal_equations_recover_planted_point() {
        let inst = synth_least_squares(2, 3, 10, 0.0, 5);
        let mut q = Matrix::zeros(3, 3);
        let mut c = Vector::zeros(3);
        for (a, b) in &inst.blocks {
            q += a.transpose() * a;
            c += a.transpose() * b;
        }
        let x = q.cholesky().unwrap().solve(&c);
        assert!((x - &inst.planted).amax() < 1e-8);
    }

    #[test]
    fn standardize_gives_unit_columns() {
        let mut ds = blocks_to_dataset(&synth_least_squares(1, 3, 50, 0.1, 2).blocks);
        ds.standardize();
        let (a, _) = ds.densify(&(0..50).collect::<Vec<_>>());
        for col in a.column_iter() {
            assert!(col.mean().abs() < 1e-12);
            assert!((col.norm_squared() / 50.0 - 1.0).abs() < 1e-12);
        }
    }

    fn row_strategy() -> impl Strategy<Value = Row> {
        (-1e6f64..1e6, prop::collection::btree_map(0usize..20, -1e3f64..1e3, 0..6))
            .prop_map(|(label, m)| Row { label, features: m.into_iter().collect() })
    }

    proptest! {
        #[test]
        fn libsvm_round_trip(rows in prop::collection::vec(row_strategy(), 0..10)) {
            let dim = rows.iter().flat_map(|r| r.features.iter().map(|f| f.0 + 1)).max().unwrap_or(0);
            let ds = Dataset { rows, dim };
            prop_assert_eq!(parse_libsvm(&serialize_libsvm(&ds), None).unwrap(), ds);
        }

        #[test]
        fn partition_covers_every_row_once(len in 0usize..200, agents in 1usize..20, seed in any::<u64>()) {
            let parts = partition_indices(len, agents, Some(seed));
            let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            let mut all: Vec<usize> = parts.concat();
            all.sort_unstable();
            prop_assert_eq!(all, (0..len).collect::<Vec<_>>());
        }
    }
}
