//! Pairwise PERMANOVA between segments with Benjamini-Hochberg correction.

use std::collections::BTreeMap;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::CustomerFeatureMatrix;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::mix;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Manhattan,
}

impl Metric {
    fn dist(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => crate::matrix::euclidean(a, b),
            Metric::Manhattan => a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermanovaResult {
    pub pseudo_f: f64,
    pub p_value: f64,
    pub permutations: usize,
}

/// Squared pairwise distances, row-major `N x N`.
fn squared_distances(rows: &[&[f64]], metric: Metric) -> Vec<f64> {
    let n = rows.len();
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let d = metric.dist(rows[i], rows[j]);
            d2[i * n + j] = d * d;
            d2[j * n + i] = d * d;
        }
    }
    d2
}

/// Two-group pseudo-F from the squared distance matrix. `in_a[i]` marks
/// membership of the first group.
fn pseudo_f(d2: &[f64], n: usize, in_a: &[bool], total_ss: f64) -> f64 {
    let na = in_a.iter().filter(|&&x| x).count();
    let nb = n - na;
    let (mut wa, mut wb) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            match (in_a[i], in_a[j]) {
                (true, true) => wa += d2[i * n + j],
                (false, false) => wb += d2[i * n + j],
                _ => {}
            }
        }
    }
    let within = wa / na as f64 + wb / nb as f64;
    let between = total_ss - within;
    if within <= 0.0 {
        return if between > 0.0 { f64::INFINITY } else { 0.0 };
    }
    between / (within / (n - 2) as f64)
}

pub fn permanova_with(
    xa: &Matrix,
    xb: &Matrix,
    permutations: usize,
    metric: Metric,
    seed: u64,
) -> Result<PermanovaResult> {
    if xa.nrows() < 2 || xb.nrows() < 2 {
        return Err(Error::param("each group needs at least 2 rows"));
    }
    if xa.ncols() != xb.ncols() {
        return Err(Error::param("groups have different column counts"));
    }
    if permutations < 99 {
        return Err(Error::param(format!("{permutations} permutations; at least 99 required")));
    }
    let rows: Vec<&[f64]> = xa.rows_iter().chain(xb.rows_iter()).collect();
    let n = rows.len();
    let d2 = squared_distances(&rows, metric);
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += d2[i * n + j];
        }
    }
    let total_ss = total / n as f64;
    let labels: Vec<bool> = (0..n).map(|i| i < xa.nrows()).collect();
    let observed = pseudo_f(&d2, n, &labels, total_ss);
    let tol = 1e-10 * observed.abs().max(1.0);
    let hits = (0..permutations)
        .into_par_iter()
        .filter(|&b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64);
            let mut perm = labels.clone();
            perm.shuffle(&mut rng);
            let f = pseudo_f(&d2, n, &perm, total_ss);
            f >= observed - tol
        })
        .count();
    Ok(PermanovaResult { pseudo_f: observed, p_value: (1 + hits) as f64 / (1 + permutations) as f64, permutations })
}

pub fn permanova(xa: &Matrix, xb: &Matrix, permutations: usize, seed: u64) -> Result<PermanovaResult> {
    permanova_with(xa, xb, permutations, Metric::Euclidean, seed)
}

/// Benjamini-Hochberg step-up adjustment, returned in input order.
pub fn fdr_correct(raw: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = raw.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::param(format!("p-value {p} outside [0, 1]")));
    }
    let m = raw.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| raw[a].total_cmp(&raw[b]).then(a.cmp(&b)));
    let mut out = vec![0.0; m];
    let mut running = 1.0_f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        // m / rank >= 1, so rounding can never take the product below raw p
        running = running.min(raw[i] * (m as f64 / (rank + 1) as f64));
        out[i] = running.min(1.0);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceRow {
    pub community_a: usize,
    pub community_b: usize,
    pub pseudo_f: f64,
    pub raw_p: f64,
    pub corrected_p: f64,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceTable {
    pub rows: Vec<SignificanceRow>,
    pub alpha: f64,
    pub permutations: usize,
    /// `(community, size)` of communities too small to test.
    pub excluded: Vec<(usize, usize)>,
}

impl SignificanceTable {
    pub fn all_significant(&self) -> bool {
        self.rows.iter().all(|r| r.significant)
    }

    pub fn row(&self, a: usize, b: usize) -> Option<&SignificanceRow> {
        let (a, b) = (a.min(b), a.max(b));
        self.rows.iter().find(|r| r.community_a == a && r.community_b == b)
    }
}

/// Pairwise tests between the communities in `assignment`. Every assigned
/// customer must have a feature row.
pub fn pairwise_significance_with(
    features: &CustomerFeatureMatrix,
    assignment: &BTreeMap<String, usize>,
    alpha: f64,
    permutations: usize,
    metric: Metric,
    seed: u64,
) -> Result<SignificanceTable> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::param(format!("alpha {alpha} outside [0, 1]")));
    }
    let index: BTreeMap<&str, usize> = features.customer_ids.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (c, &k) in assignment {
        let &i = index.get(c.as_str()).ok_or_else(|| Error::UnknownCustomer(c.clone()))?;
        groups.entry(k).or_default().push(i);
    }
    let mut excluded = Vec::new();
    let mut testable = Vec::new();
    for (k, rows) in groups {
        if rows.len() < 2 {
            excluded.push((k, rows.len()));
        } else {
            testable.push((k, features.values.select_rows(&rows)));
        }
    }
    let mut pairs = Vec::new();
    for a in 0..testable.len() {
        for b in a + 1..testable.len() {
            pairs.push((a, b));
        }
    }
    let tests: Vec<(usize, usize, PermanovaResult)> = pairs
        .iter()
        .map(|&(a, b)| {
            let (ka, xa) = &testable[a];
            let (kb, xb) = &testable[b];
            let s = mix(mix(seed, *ka as u64), *kb as u64);
            permanova_with(xa, xb, permutations, metric, s).map(|r| (*ka, *kb, r))
        })
        .collect::<Result<_>>()?;
    let raw: Vec<f64> = tests.iter().map(|t| t.2.p_value).collect();
    let corrected = fdr_correct(&raw)?;
    let rows = tests
        .into_iter()
        .zip(corrected)
        .map(|((a, b, r), q)| SignificanceRow {
            community_a: a,
            community_b: b,
            pseudo_f: r.pseudo_f,
            raw_p: r.p_value,
            corrected_p: q,
            significant: q <= alpha,
        })
        .collect();
    Ok(SignificanceTable { rows, alpha, permutations, excluded })
}

pub fn pairwise_significance(
    features: &CustomerFeatureMatrix,
    assignment: &BTreeMap<String, usize>,
    alpha: f64,
    permutations: usize,
    seed: u64,
) -> Result<SignificanceTable> {
    pairwise_significance_with(features, assignment, alpha, permutations, Metric::Euclidean, seed)
}

/// CSV with one row per pair; excluded communities go into `#` footer lines.
pub fn write_significance_csv<W: Write>(writer: W, table: &SignificanceTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["community_a", "community_b", "pseudo_f", "raw_p", "corrected_p", "significant"])?;
    for r in &table.rows {
        w.write_record([
            r.community_a.to_string(),
            r.community_b.to_string(),
            format!("{:?}", r.pseudo_f),
            format!("{:?}", r.raw_p),
            format!("{:?}", r.corrected_p),
            r.significant.to_string(),
        ])?;
    }
    w.flush()?;
    let mut out = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    for (k, n) in &table.excluded {
        writeln!(out, "# excluded community {k}: {n} member(s)")?;
    }
    Ok(())
}
