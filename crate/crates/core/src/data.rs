//! Rating-file parsing, dense reindexing and deterministic train/validation/test
//! partitioning of the known-entry set.
//!
//! All shuffles use [`ChaCha8Rng`] seeded through `SeedableRng::seed_from_u64`,
//! with `Rng::shuffle` (Fisher-Yates, rand 0.8). Repeats of a k-fold run draw
//! from independent ChaCha streams (`set_stream(repeat)`) of the same seed.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::DataError;

/// One known entry `r[user, item]` with dense indices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatingTriple {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

impl RatingTriple {
    pub fn new(user: usize, item: usize, value: f64) -> Self {
        Self { user, item, value }
    }
}

/// Field separator of an input rating file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `user<TAB>item<TAB>rating[...]` (MovieLens 100K `u.data`).
    Tsv,
    /// `user::item::rating[::...]` (MovieLens 1M/10M).
    Colons,
    /// `user,item,rating[,...]` (MovieLens 20M, header line tolerated).
    Csv,
}

impl Format {
    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Format::Tsv => line.split('\t').collect(),
            Format::Colons => line.split("::").collect(),
            Format::Csv => line.split(',').collect(),
        }
    }
}

impl FromStr for Format {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tsv" | "tab" => Ok(Format::Tsv),
            "colons" | "dat" => Ok(Format::Colons),
            "csv" => Ok(Format::Csv),
            other => Err(DataError::UnknownFormat(other.to_string())),
        }
    }
}

impl fmt::Display for Format {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Format::Tsv => "tsv",
            Format::Colons => "colons",
            Format::Csv => "csv",
        })
    }
}

/// A sparse rating matrix: the known-entry set over `n_users x n_items`.
#[derive(Debug, Clone)]
pub struct HdiDataset {
    n_users: usize,
    n_items: usize,
    entries: Vec<RatingTriple>,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
}

impl HdiDataset {
    /// Builds a dataset from already-dense triples. Original ids are the
    /// decimal dense indices.
    pub fn from_triples(
        n_users: usize,
        n_items: usize,
        entries: Vec<RatingTriple>,
    ) -> Result<Self, DataError> {
        if entries.is_empty() {
            return Err(DataError::Empty);
        }
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for (i, t) in entries.iter().enumerate() {
            if t.user >= n_users || t.item >= n_items {
                return Err(DataError::IndexOutOfRange {
                    entry: i,
                    user: t.user,
                    item: t.item,
                });
            }
            if !t.value.is_finite() {
                return Err(DataError::Malformed {
                    line: i + 1,
                    reason: format!("non-finite rating {}", t.value),
                });
            }
            if !seen.insert((t.user, t.item)) {
                return Err(DataError::Duplicate {
                    line: i + 1,
                    user: t.user.to_string(),
                    item: t.item.to_string(),
                });
            }
        }
        Ok(Self {
            n_users,
            n_items,
            entries,
            user_ids: (0..n_users).map(|u| u.to_string()).collect(),
            item_ids: (0..n_items).map(|i| i.to_string()).collect(),
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn entries(&self) -> &[RatingTriple] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// |known| / (M * N).
    pub fn density(&self) -> f64 {
        self.entries.len() as f64 / (self.n_users as f64 * self.n_items as f64)
    }

    pub fn user_id(&self, user: usize) -> &str {
        &self.user_ids[user]
    }

    pub fn item_id(&self, item: usize) -> &str {
        &self.item_ids[item]
    }

    /// Copies the entries at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Vec<RatingTriple> {
        indices.iter().map(|&i| self.entries[i]).collect()
    }

    /// Writes `user<TAB>item<TAB>rating` lines using the original ids.
    /// Ratings use the shortest representation that parses back to the same `f64`.
    pub fn write_canonical<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for t in &self.entries {
            writeln!(
                out,
                "{}\t{}\t{}",
                self.user_ids[t.user], self.item_ids[t.item], t.value
            )?;
        }
        Ok(())
    }
}

/// Parses a rating file. Users and items get dense indices in order of first
/// appearance; fields past the third are ignored.
pub fn parse_ratings<R: BufRead>(source: R, format: Format) -> Result<HdiDataset, DataError> {
    let mut user_index: HashMap<String, usize> = HashMap::new();
    let mut item_index: HashMap<String, usize> = HashMap::new();
    let mut user_ids = Vec::new();
    let mut item_ids = Vec::new();
    let mut entries = Vec::new();
    let mut seen = std::collections::HashSet::new();

    for (lineno, line) in source.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields = format.split(line);
        if fields.len() < 3 {
            return Err(DataError::Malformed {
                line: lineno,
                reason: format!("expected at least 3 fields, found {}", fields.len()),
            });
        }
        let (user, item) = (fields[0].trim(), fields[1].trim());
        let value: f64 = match fields[2].trim().parse() {
            Ok(v) => v,
            // a leading "userId,movieId,rating,..." header is common in CSV dumps
            Err(_) if format == Format::Csv && entries.is_empty() && lineno == 1 => continue,
            Err(_) => {
                return Err(DataError::Malformed {
                    line: lineno,
                    reason: format!("rating {:?} is not a number", fields[2]),
                })
            }
        };
        if !value.is_finite() {
            return Err(DataError::Malformed {
                line: lineno,
                reason: format!("non-finite rating {value}"),
            });
        }
        if user.is_empty() || item.is_empty() {
            return Err(DataError::Malformed {
                line: lineno,
                reason: "empty user or item id".into(),
            });
        }
        let u = *user_index.entry(user.to_string()).or_insert_with(|| {
            user_ids.push(user.to_string());
            user_ids.len() - 1
        });
        let i = *item_index.entry(item.to_string()).or_insert_with(|| {
            item_ids.push(item.to_string());
            item_ids.len() - 1
        });
        if !seen.insert((u, i)) {
            return Err(DataError::Duplicate {
                line: lineno,
                user: user.to_string(),
                item: item.to_string(),
            });
        }
        entries.push(RatingTriple::new(u, i, value));
    }

    if entries.is_empty() {
        return Err(DataError::Empty);
    }
    Ok(HdiDataset {
        n_users: user_ids.len(),
        n_items: item_ids.len(),
        entries,
        user_ids,
        item_ids,
    })
}

/// Integer train/validation/test weights, e.g. `7:1:2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SplitRatio {
    pub train: u32,
    pub validation: u32,
    pub test: u32,
}

impl SplitRatio {
    pub const fn new(train: u32, validation: u32, test: u32) -> Self {
        Self {
            train,
            validation,
            test,
        }
    }

    pub fn total(&self) -> u64 {
        self.train as u64 + self.validation as u64 + self.test as u64
    }

    fn weights(&self) -> [u32; 3] {
        [self.train, self.validation, self.test]
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.weights().contains(&0) {
            return Err(DataError::InvalidRatio(self.to_string()));
        }
        Ok(())
    }

    /// Largest-remainder apportionment of `n` items over the three weights.
    /// Ties on the remainder go to the earlier role.
    fn apportion(&self, n: usize) -> [usize; 3] {
        let w = self.weights();
        let total = self.total();
        let mut counts = [0usize; 3];
        let mut remainders = [(0u64, 0usize); 3];
        for (r, &wr) in w.iter().enumerate() {
            let exact = n as u64 * wr as u64;
            counts[r] = (exact / total) as usize;
            remainders[r] = (exact % total, r);
        }
        let mut left = n - counts.iter().sum::<usize>();
        remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, r) in remainders.iter() {
            if left == 0 {
                break;
            }
            counts[r] += 1;
            left -= 1;
        }
        counts
    }
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self::new(7, 1, 2)
    }
}

impl FromStr for SplitRatio {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || DataError::InvalidRatio(s.to_string());
        if parts.len() != 3 {
            return Err(bad());
        }
        let p = |x: &str| x.trim().parse::<u32>().map_err(|_| bad());
        Ok(Self::new(p(parts[0])?, p(parts[1])?, p(parts[2])?))
    }
}

impl fmt::Display for SplitRatio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.train, self.validation, self.test)
    }
}

/// Entry-index lists for the three roles.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
    pub seed: u64,
}

/// Shuffles all entry indices with `seed` and cuts them by `ratio`.
pub fn split_dataset(
    ds: &HdiDataset,
    ratio: SplitRatio,
    seed: u64,
) -> Result<DataSplit, DataError> {
    ratio.validate()?;
    let n = ds.len();
    if (n as u64) < ratio.total() {
        return Err(DataError::TooFewEntries {
            entries: n,
            needed: ratio.total() as usize,
        });
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);

    let [a, b, _] = ratio.apportion(n);
    let test = idx.split_off(a + b);
    let validation = idx.split_off(a);
    Ok(DataSplit {
        train: idx,
        validation,
        test,
        seed,
    })
}

/// Repeated k-fold partitioning. Each repeat shuffles the entries, cuts them
/// into `k` folds whose sizes differ by at most one, and emits `k` splits by
/// rotating the fold-to-role assignment (fold counts per role follow `ratio`).
pub fn k_fold_partitions(
    ds: &HdiDataset,
    k: usize,
    repeats: usize,
    ratio: SplitRatio,
    seed: u64,
) -> Result<Vec<DataSplit>, DataError> {
    ratio.validate()?;
    if k < 3 {
        return Err(DataError::InvalidFolds(format!("k = {k}, need k >= 3")));
    }
    if repeats == 0 {
        return Err(DataError::InvalidFolds("repeats must be >= 1".into()));
    }
    let n = ds.len();
    if k > n {
        return Err(DataError::TooFewEntries {
            entries: n,
            needed: k,
        });
    }

    let roles = fold_roles(ratio, k);
    let mut out = Vec::with_capacity(k * repeats);
    for rep in 0..repeats {
        let mut idx: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(rep as u64);
        idx.shuffle(&mut rng);

        let folds = cut_folds(&idx, k);
        for shift in 0..k {
            let mut split = DataSplit {
                train: Vec::new(),
                validation: Vec::new(),
                test: Vec::new(),
                seed,
            };
            for (pos, role) in roles.iter().enumerate() {
                let fold = &folds[(pos + shift) % k];
                match role {
                    0 => split.train.extend_from_slice(fold),
                    1 => split.validation.extend_from_slice(fold),
                    _ => split.test.extend_from_slice(fold),
                }
            }
            out.push(split);
        }
    }
    Ok(out)
}

/// Role (0 train, 1 validation, 2 test) of each fold position. Every role gets
/// at least one fold.
fn fold_roles(ratio: SplitRatio, k: usize) -> Vec<u8> {
    let mut counts = ratio.apportion(k);
    for r in 0..3 {
        if counts[r] == 0 {
            let donor = (0..3)
                .max_by_key(|&d| (counts[d], std::cmp::Reverse(d)))
                .unwrap();
            counts[donor] -= 1;
            counts[r] = 1;
        }
    }
    let mut roles = Vec::with_capacity(k);
    for (r, &c) in counts.iter().enumerate() {
        roles.extend(std::iter::repeat_n(r as u8, c));
    }
    roles
}

fn cut_folds(idx: &[usize], k: usize) -> Vec<&[usize]> {
    let n = idx.len();
    let (base, extra) = (n / k, n % k);
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let len = base + usize::from(f < extra);
        folds.push(&idx[start..start + len]);
        start += len;
    }
    folds
}
