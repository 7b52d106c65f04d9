//! Synthetic datasets, non-IID client partitioning and attack injection.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::{Rng, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(features: Tensor, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::dim(format!(
                "{} feature rows vs {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= class_count) {
            return Err(Error::domain(format!("label {y} outside 0..{class_count}")));
        }
        Ok(Dataset { features, labels, class_count })
    }

    /// A dataset with no rows but a known feature width.
    pub fn empty(dim: usize, class_count: usize) -> Self {
        Dataset { features: Tensor::zeros(0, dim), labels: Vec::new(), class_count }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    /// Rows whose index and label satisfy `keep`.
    pub fn filter(&self, keep: impl Fn(usize, usize) -> bool) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(i, self.labels[i])).collect();
        self.subset(&idx)
    }

    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Dataset> {
        Dataset::new(self.features.clone(), labels, self.class_count)
    }

    pub fn concat(parts: &[&Dataset]) -> Result<Dataset> {
        let first = parts.first().ok_or_else(|| Error::domain("nothing to concatenate"))?;
        let dim = first.dim();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.dim() != dim || p.class_count != first.class_count {
                return Err(Error::dim("datasets disagree on feature width or class count"));
            }
            data.extend_from_slice(p.features.data());
            labels.extend_from_slice(&p.labels);
        }
        Dataset::new(Tensor::from_vec(labels.len(), dim, data)?, labels, first.class_count)
    }

    pub fn class_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.class_count];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }

    /// Header `f0,...,f{d-1},label`, one sample per line. Values use the
    /// shortest representation that round-trips exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for j in 0..self.dim() {
            let _ = write!(out, "f{j},");
        }
        out.push_str("label\n");
        for (i, y) in self.labels.iter().enumerate() {
            for v in self.features.row(i) {
                let _ = write!(out, "{v:?},");
            }
            let _ = writeln!(out, "{y}");
        }
        out
    }

    /// Parse the [`Dataset::to_csv`] layout. `class_count` defaults to
    /// `max(label) + 1` when not given.
    pub fn from_csv(text: &str, class_count: Option<usize>) -> Result<Dataset> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| Error::Parse("empty csv".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.last() != Some(&"label") {
            return Err(Error::Parse("last column must be `label`".into()));
        }
        let dim = cols.len() - 1;
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (n, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 1 {
                return Err(Error::Parse(format!("row {} has {} fields", n + 1, fields.len())));
            }
            for f in &fields[..dim] {
                let v: f64 = f.parse().map_err(|_| Error::Parse(format!("bad number `{f}`")))?;
                data.push(v);
            }
            labels.push(
                fields[dim]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad label `{}`", fields[dim])))?,
            );
        }
        let classes = class_count.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
        Dataset::new(Tensor::from_vec(labels.len(), dim, data)?, labels, classes)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load_csv(path: &Path, class_count: Option<usize>) -> Result<Dataset> {
        Dataset::from_csv(&fs::read_to_string(path)?, class_count)
    }
}

/// One client's local data plus its role in the unlearning experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    pub client_id: usize,
    pub data: Dataset,
    pub is_unlearn_target: bool,
    /// Local row indices that were tampered with.
    pub attacked_indices: BTreeSet<usize>,
    /// Row index of each local sample in the dataset that was partitioned.
    pub source_indices: Vec<usize>,
}

impl ClientShard {
    pub fn new(client_id: usize, data: Dataset) -> Self {
        let n = data.len();
        ClientShard {
            client_id,
            data,
            is_unlearn_target: false,
            attacked_indices: BTreeSet::new(),
            source_indices: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Samples that were never tampered with.
    pub fn clean_part(&self) -> Dataset {
        self.data.filter(|i, _| !self.attacked_indices.contains(&i))
    }

    pub fn attacked_part(&self) -> Dataset {
        self.data.filter(|i, _| self.attacked_indices.contains(&i))
    }
}

/// Gaussian blobs: one mean per class with coordinates uniform in `[-1, 1]`,
/// isotropic noise of standard deviation `spread`, rows shuffled.
pub fn gen_synthetic(
    classes: usize,
    dim: usize,
    per_class: usize,
    spread: f64,
    rng: &mut Rng,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::config("need at least two classes"));
    }
    if dim < 2 || per_class == 0 {
        return Err(Error::config("dim must be >= 2 and per_class positive"));
    }
    if !(spread >= 0.0) || !spread.is_finite() {
        return Err(Error::config("spread must be finite and non-negative"));
    }
    let means: Vec<Vec<f64>> =
        (0..classes).map(|_| (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
    let n = classes * per_class;
    let order = rng.permutation(n);
    let mut data = vec![0.0; n * dim];
    let mut labels = vec![0; n];
    for (slot, &k) in order.iter().enumerate() {
        let c = k / per_class;
        labels[slot] = c;
        for (j, m) in means[c].iter().enumerate() {
            data[slot * dim + j] = m + spread * rng.normal();
        }
    }
    Dataset::new(Tensor::from_vec(n, dim, data)?, labels, classes)
}

/// Random split into `(train, test)` with `round(test_fraction * n)` test rows.
pub fn train_test_split(ds: &Dataset, test_fraction: f64, rng: &mut Rng) -> Result<(Dataset, Dataset)> {
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(Error::config("test_fraction must lie in [0, 1)"));
    }
    let perm = rng.permutation(ds.len());
    let n_test = (test_fraction * ds.len() as f64).round() as usize;
    let mut test: Vec<usize> = perm[..n_test].to_vec();
    let mut train: Vec<usize> = perm[n_test..].to_vec();
    test.sort_unstable();
    train.sort_unstable();
    Ok((ds.subset(&train), ds.subset(&test)))
}

fn shards_from_assignment(ds: &Dataset, mut assign: Vec<Vec<usize>>) -> Vec<ClientShard> {
    assign
        .iter_mut()
        .enumerate()
        .map(|(id, idx)| {
            idx.sort_unstable();
            ClientShard {
                client_id: id,
                data: ds.subset(idx),
                is_unlearn_target: false,
                attacked_indices: BTreeSet::new(),
                source_indices: idx.clone(),
            }
        })
        .collect()
}

/// Label-skewed partition: for every class, client proportions are drawn
/// from a symmetric Dirichlet(`alpha`). Any client left empty receives one
/// random sample taken from a client holding more than one.
pub fn dirichlet_partition(
    ds: &Dataset,
    n_clients: usize,
    alpha: f64,
    rng: &mut Rng,
) -> Result<Vec<ClientShard>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::config(format!("alpha must be positive, got {alpha}")));
    }
    if n_clients < 2 {
        return Err(Error::config("need at least two clients"));
    }
    if ds.len() < n_clients {
        return Err(Error::config(format!(
            "{} samples cannot fill {n_clients} clients",
            ds.len()
        )));
    }
    let mut assign: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
    for c in 0..ds.class_count {
        let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == c).collect();
        if idx.is_empty() {
            continue;
        }
        rng.shuffle(&mut idx);
        let mut props: Vec<f64> = (0..n_clients).map(|_| rng.gamma(alpha)).collect();
        let total: f64 = props.iter().sum();
        if total > 0.0 && total.is_finite() {
            props.iter_mut().for_each(|p| *p /= total);
        } else {
            // every gamma draw underflowed; put the class on one client
            props = vec![0.0; n_clients];
            props[rng.index(n_clients)] = 1.0;
        }
        let n_c = idx.len();
        let mut start = 0;
        let mut cum = 0.0;
        for (k, p) in props.iter().enumerate() {
            cum += p;
            let end = if k + 1 == n_clients {
                n_c
            } else {
                ((cum * n_c as f64).round() as usize).clamp(start, n_c)
            };
            assign[k].extend_from_slice(&idx[start..end]);
            start = end;
        }
    }
    for k in 0..n_clients {
        if !assign[k].is_empty() {
            continue;
        }
        let donors: Vec<usize> = (0..n_clients).filter(|&d| assign[d].len() > 1).collect();
        let donor = donors[rng.index(donors.len())];
        let pos = rng.index(assign[donor].len());
        let sample = assign[donor].swap_remove(pos);
        assign[k].push(sample);
    }
    Ok(shards_from_assignment(ds, assign))
}

/// Split used by the knowledge-interference experiment: the target client
/// receives `target_share` of `overlap_class` and all of `unique_class`;
/// everything else is spread uniformly at random over the other clients.
pub fn interference_partition(
    ds: &Dataset,
    n_clients: usize,
    target: usize,
    overlap_class: usize,
    unique_class: usize,
    target_share: f64,
    rng: &mut Rng,
) -> Result<Vec<ClientShard>> {
    if n_clients < 2 || target >= n_clients {
        return Err(Error::config("target client must be one of at least two clients"));
    }
    if overlap_class >= ds.class_count || unique_class >= ds.class_count || overlap_class == unique_class {
        return Err(Error::config("overlap and unique classes must be distinct valid classes"));
    }
    if !(0.0..=1.0).contains(&target_share) {
        return Err(Error::config("target_share must lie in [0, 1]"));
    }
    let mut assign: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
    let others: Vec<usize> = (0..n_clients).filter(|&k| k != target).collect();
    let mut overlap: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == overlap_class).collect();
    rng.shuffle(&mut overlap);
    let cut = (target_share * overlap.len() as f64).round() as usize;
    assign[target].extend_from_slice(&overlap[..cut]);
    let mut rest: Vec<usize> = overlap[cut..].to_vec();
    for i in 0..ds.len() {
        let y = ds.labels[i];
        if y == unique_class {
            assign[target].push(i);
        } else if y != overlap_class {
            rest.push(i);
        }
    }
    for i in rest {
        assign[others[rng.index(others.len())]].push(i);
    }
    let mut shards = shards_from_assignment(ds, assign);
    shards[target].is_unlearn_target = true;
    Ok(shards)
}

/// Byzantine label flip: every label `y` becomes `(y + 1) mod C` and the
/// whole shard is marked as an unlearning target.
pub fn apply_label_flip(shard: &ClientShard) -> Result<ClientShard> {
    let c = shard.data.class_count;
    if c < 2 {
        return Err(Error::config("label flipping needs at least two classes"));
    }
    if shard.is_empty() {
        return Err(Error::domain("cannot flip an empty shard"));
    }
    let labels = shard.data.labels.iter().map(|&y| (y + 1) % c).collect();
    Ok(ClientShard {
        client_id: shard.client_id,
        data: shard.data.with_labels(labels)?,
        is_unlearn_target: true,
        attacked_indices: (0..shard.len()).collect(),
        source_indices: shard.source_indices.clone(),
    })
}

/// Set the last feature of `ceil(fraction * n)` random rows to
/// `trigger_value` and relabel them as `target_label`. Returns the poisoned
/// dataset and the sorted list of poisoned rows.
pub fn apply_backdoor(
    ds: &Dataset,
    fraction: f64,
    trigger_value: f64,
    target_label: usize,
    rng: &mut Rng,
) -> Result<(Dataset, Vec<usize>)> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::config(format!("backdoor fraction must lie in (0, 1], got {fraction}")));
    }
    if target_label >= ds.class_count {
        return Err(Error::config("backdoor target label outside class range"));
    }
    let count = ((fraction * ds.len() as f64).ceil() as usize).min(ds.len());
    let mut idx = rng.permutation(ds.len());
    idx.truncate(count);
    idx.sort_unstable();
    let mut out = ds.clone();
    let last = ds.dim() - 1;
    for &i in &idx {
        out.features.set(i, last, trigger_value);
        out.labels[i] = target_label;
    }
    Ok((out, idx))
}

/// Stamp the trigger onto every row, leaving labels untouched.
pub fn with_trigger(ds: &Dataset, trigger_value: f64) -> Dataset {
    let mut out = ds.clone();
    let last = ds.dim() - 1;
    for i in 0..ds.len() {
        out.features.set(i, last, trigger_value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(seed: u64) -> Dataset {
        gen_synthetic(4, 6, 100, 0.3, &mut Rng::new(seed)).unwrap()
    }

    #[test]
    fn synthetic_histogram_and_size() {
        let ds = blobs(1);
        assert_eq!(ds.len(), 400);
        assert_eq!(ds.class_histogram(), vec![100; 4]);
        assert_eq!(ds, blobs(1));
    }

    #[test]
    fn zero_spread_collapses_to_means() {
        let ds = gen_synthetic(2, 3, 10, 0.0, &mut Rng::new(2)).unwrap();
        for c in 0..2 {
            let rows: Vec<&[f64]> =
                (0..ds.len()).filter(|&i| ds.labels[i] == c).map(|i| ds.features.row(i)).collect();
            assert!(rows.windows(2).all(|w| w[0] == w[1]));
        }
    }

    #[test]
    fn synthetic_rejects_bad_config() {
        let mut rng = Rng::new(0);
        assert!(matches!(gen_synthetic(1, 4, 10, 0.1, &mut rng), Err(Error::Config(_))));
        assert!(gen_synthetic(3, 4, 0, 0.1, &mut rng).is_err());
        assert!(gen_synthetic(3, 1, 5, 0.1, &mut rng).is_err());
    }

    #[test]
    fn partition_is_exact() {
        let ds = blobs(3);
        for &alpha in &[0.1, 1.0, 10.0] {
            let shards = dirichlet_partition(&ds, 7, alpha, &mut Rng::new(4)).unwrap();
            let mut all: Vec<usize> = shards.iter().flat_map(|s| s.source_indices.clone()).collect();
            assert_eq!(all.len(), ds.len());
            all.sort_unstable();
            assert_eq!(all, (0..ds.len()).collect::<Vec<_>>());
            assert!(shards.iter().all(|s| !s.is_empty()));
            for s in &shards {
                for (local, &src) in s.source_indices.iter().enumerate() {
                    assert_eq!(s.data.labels[local], ds.labels[src]);
                }
            }
        }
    }

    #[test]
    fn tiny_alpha_leaves_no_empty_client() {
        let ds = gen_synthetic(2, 3, 10, 0.1, &mut Rng::new(5)).unwrap();
        let shards = dirichlet_partition(&ds, 15, 0.01, &mut Rng::new(6)).unwrap();
        assert!(shards.iter().all(|s| !s.is_empty()));
        assert_eq!(shards.iter().map(ClientShard::len).sum::<usize>(), 20);
    }

    #[test]
    fn huge_alpha_is_nearly_iid() {
        let ds = gen_synthetic(4, 4, 500, 0.3, &mut Rng::new(7)).unwrap();
        let global: Vec<f64> = ds.class_histogram().iter().map(|&c| c as f64 / ds.len() as f64).collect();
        let shards = dirichlet_partition(&ds, 5, 1e6, &mut Rng::new(8)).unwrap();
        for s in shards {
            let h = s.data.class_histogram();
            for (c, &g) in global.iter().enumerate() {
                let local = h[c] as f64 / s.len() as f64;
                assert!((local - g).abs() < 0.05, "class {c}: {local} vs {g}");
            }
        }
    }

    #[test]
    fn partition_rejects_bad_alpha() {
        let ds = blobs(1);
        assert!(matches!(dirichlet_partition(&ds, 3, 0.0, &mut Rng::new(0)), Err(Error::Config(_))));
        assert!(dirichlet_partition(&ds, 1, 1.0, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn binary_label_flip() {
        let ds = Dataset::new(Tensor::from_rows(&[&[0.0, 1.0], &[2.0, 3.0], &[4.0, 5.0]]), vec![0, 1, 0], 2)
            .unwrap();
        let flipped = apply_label_flip(&ClientShard::new(0, ds.clone())).unwrap();
        assert_eq!(flipped.data.labels, vec![1, 0, 1]);
        assert_eq!(flipped.data.features, ds.features);
        assert!(flipped.is_unlearn_target);
        assert_eq!(flipped.attacked_indices.len(), 3);
    }

    #[test]
    fn backdoor_full_and_partial() {
        let ds = blobs(9);
        let (all, idx) = apply_backdoor(&ds, 1.0, 5.0, 0, &mut Rng::new(1)).unwrap();
        assert_eq!(idx.len(), ds.len());
        assert!((0..all.len()).all(|i| all.features.get(i, 5) == 5.0 && all.labels[i] == 0));

        let (part, idx) = apply_backdoor(&ds, 0.1, 5.0, 0, &mut Rng::new(1)).unwrap();
        assert_eq!(idx.len(), 40);
        for i in 0..ds.len() {
            if idx.binary_search(&i).is_err() {
                assert_eq!(part.features.row(i), ds.features.row(i));
                assert_eq!(part.labels[i], ds.labels[i]);
            }
        }
        assert!(apply_backdoor(&ds, 0.0, 5.0, 0, &mut Rng::new(1)).is_err());
        assert!(apply_backdoor(&ds, 1.5, 5.0, 0, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn backdoor_is_idempotent_under_fixed_rng() {
        let ds = blobs(10);
        let (once, idx1) = apply_backdoor(&ds, 0.2, 4.0, 0, &mut Rng::new(3)).unwrap();
        let (twice, idx2) = apply_backdoor(&once, 0.2, 4.0, 0, &mut Rng::new(3)).unwrap();
        assert_eq!(idx1, idx2);
        assert_eq!(once, twice);
    }

    #[test]
    fn interference_split_shape() {
        let ds = blobs(11);
        let shards = interference_partition(&ds, 5, 0, 0, 1, 0.9, &mut Rng::new(2)).unwrap();
        let h = shards[0].data.class_histogram();
        assert_eq!(h[0], 90);
        assert_eq!(h[1], 100);
        assert_eq!(h[2] + h[3], 0);
        let rest0: usize = shards[1..].iter().map(|s| s.data.class_histogram()[0]).sum();
        assert_eq!(rest0, 10);
        assert!(shards[0].is_unlearn_target);
    }

    #[test]
    fn csv_round_trip() {
        let ds = blobs(12).subset(&[0, 5, 7]);
        let text = ds.to_csv();
        assert!(text.starts_with("f0,f1,f2,f3,f4,f5,label\n"));
        assert_eq!(Dataset::from_csv(&text, Some(4)).unwrap(), ds);
        assert!(matches!(Dataset::from_csv("a,b\n1,2\n", None), Err(Error::Parse(_))));
    }
}
