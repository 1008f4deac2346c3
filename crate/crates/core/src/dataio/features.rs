use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Transaction, TransactionTable, TxType};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Column names of the default per-customer feature set, in order.
pub const DEFAULT_FEATURES: [&str; 12] = [
    "in_count",
    "out_count",
    "in_sum",
    "out_sum",
    "net_flow",
    "max_in",
    "max_out",
    "distinct_countries",
    "country_entropy",
    "max_daily_tx",
    "atm_count",
    "mean_gap_days",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    /// z-score every column (population standard deviation).
    pub standardize: bool,
    /// Append `in_out_ratio` (inbound sum / outbound sum) as a 13th column.
    pub include_ratio: bool,
    /// Upper bound applied to ratio features.
    pub ratio_cap: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { standardize: true, include_ratio: false, ratio_cap: 1e6 }
    }
}

/// One numeric row per customer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerFeatureMatrix {
    pub customer_ids: Vec<String>,
    pub feature_names: Vec<String>,
    pub values: Matrix,
    pub standardized: bool,
}

impl CustomerFeatureMatrix {
    pub fn new(
        customer_ids: Vec<String>,
        feature_names: Vec<String>,
        values: Matrix,
        standardized: bool,
    ) -> Result<Self> {
        if values.nrows() != customer_ids.len() || values.ncols() != feature_names.len() {
            return Err(Error::param(format!(
                "feature matrix is {}x{} but has {} ids and {} names",
                values.nrows(),
                values.ncols(),
                customer_ids.len(),
                feature_names.len()
            )));
        }
        if !values.is_finite() {
            return Err(Error::param("feature matrix contains NaN or Inf"));
        }
        Ok(CustomerFeatureMatrix { customer_ids, feature_names, values, standardized })
    }

    pub fn len(&self) -> usize {
        self.customer_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.customer_ids.is_empty()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    pub fn select(&self, idx: &[usize]) -> CustomerFeatureMatrix {
        CustomerFeatureMatrix {
            customer_ids: idx.iter().map(|&i| self.customer_ids[i].clone()).collect(),
            feature_names: self.feature_names.clone(),
            values: self.values.select_rows(idx),
            standardized: self.standardized,
        }
    }

    /// Rows whose id satisfies `keep`, in original order.
    pub fn filter_ids(&self, mut keep: impl FnMut(&str) -> bool) -> CustomerFeatureMatrix {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep(&self.customer_ids[i])).collect();
        self.select(&idx)
    }

    /// Per-column z-score with population standard deviation; constant
    /// columns become all zeros.
    pub fn standardized(&self) -> CustomerFeatureMatrix {
        let mut values = self.values.clone();
        let m = values.nrows();
        for j in 0..values.ncols() {
            let col = values.column(j);
            let mu = crate::stats::mean(&col);
            let sd = crate::stats::std_dev(&col);
            for i in 0..m {
                let z = if sd > 0.0 { (col[i] - mu) / sd } else { 0.0 };
                values.set(i, j, z);
            }
        }
        CustomerFeatureMatrix { values, standardized: true, ..self.clone() }
    }
}

fn entropy(counts: impl Iterator<Item = usize>) -> f64 {
    let counts: Vec<usize> = counts.collect();
    let total: usize = counts.iter().sum();
    if total == 0 {
        return 0.0;
    }
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / total as f64;
            -p * p.ln()
        })
        .sum()
}

fn customer_row(txs: &[&Transaction], cfg: &FeatureConfig) -> Vec<f64> {
    let mut in_count = 0.0;
    let mut out_count = 0.0;
    let mut in_sum = 0.0;
    let mut out_sum = 0.0;
    let mut max_in: f64 = 0.0;
    let mut max_out: f64 = 0.0;
    let mut atm = 0.0;
    let mut countries: BTreeMap<&str, usize> = BTreeMap::new();
    let mut per_day: BTreeMap<NaiveDate, usize> = BTreeMap::new();
    for t in txs {
        if t.is_inbound() {
            in_count += 1.0;
            in_sum += t.amount_received;
            max_in = max_in.max(t.amount_received);
        } else {
            let out = -t.amount_sent;
            out_count += 1.0;
            out_sum += out;
            max_out = max_out.max(out);
        }
        if t.tx_type == TxType::Atm {
            atm += 1.0;
        }
        *countries.entry(t.contraent_country.as_str()).or_default() += 1;
        *per_day.entry(t.date).or_default() += 1;
    }
    let days: Vec<NaiveDate> = per_day.keys().copied().collect();
    // gaps between consecutive transactions; same-day transactions add zero gaps
    let n_tx = txs.len();
    let mean_gap = if n_tx > 1 {
        let span = (days[days.len() - 1] - days[0]).num_days() as f64;
        span / (n_tx - 1) as f64
    } else {
        0.0
    };
    let mut row = vec![
        in_count,
        out_count,
        in_sum,
        out_sum,
        in_sum - out_sum,
        max_in,
        max_out,
        countries.len() as f64,
        entropy(countries.values().copied()),
        per_day.values().copied().max().unwrap_or(0) as f64,
        atm,
        mean_gap,
    ];
    if cfg.include_ratio {
        let ratio = if out_sum > 0.0 { in_sum / out_sum } else { cfg.ratio_cap };
        row.push(ratio.min(cfg.ratio_cap));
    }
    row
}

/// One row per distinct customer, customers in sorted id order.
pub fn build_customer_features(tx: &TransactionTable, cfg: &FeatureConfig) -> Result<CustomerFeatureMatrix> {
    if tx.is_empty() {
        return Err(Error::Empty("transaction table has no rows".into()));
    }
    let mut by_customer: BTreeMap<&str, Vec<&Transaction>> = BTreeMap::new();
    for t in &tx.rows {
        by_customer.entry(t.customer_id.as_str()).or_default().push(t);
    }
    let mut names: Vec<String> = DEFAULT_FEATURES.iter().map(|s| s.to_string()).collect();
    if cfg.include_ratio {
        names.push("in_out_ratio".into());
    }
    let rows: Vec<Vec<f64>> = by_customer.values().map(|txs| customer_row(txs, cfg)).collect();
    let ids = by_customer.keys().map(|s| s.to_string()).collect();
    let raw = CustomerFeatureMatrix::new(ids, names, Matrix::from_rows(&rows), false)?;
    Ok(if cfg.standardize { raw.standardized() } else { raw })
}

pub fn write_features_csv<W: Write>(writer: W, fm: &CustomerFeatureMatrix) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["customer_id".to_owned()];
    header.extend(fm.feature_names.iter().cloned());
    w.write_record(&header)?;
    for (i, id) in fm.customer_ids.iter().enumerate() {
        let mut rec = vec![id.clone()];
        rec.extend(fm.values.row(i).iter().map(|v| format!("{v:?}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_features_csv`]. The file does not carry
/// the standardization flag, so the caller states it.
pub fn read_features_csv<R: Read>(reader: R, standardized: bool) -> Result<CustomerFeatureMatrix> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.get(0) != Some("customer_id") {
        return Err(Error::MissingColumn("customer_id".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut ids = Vec::new();
    let mut data = Vec::new();
    let mut seen = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_owned();
        if !seen.insert(id.clone()) {
            return Err(Error::param(format!("duplicate customer id `{id}`")));
        }
        for j in 0..names.len() {
            let raw = rec.get(j + 1).unwrap_or_default();
            let v: f64 = raw.parse().map_err(|_| Error::param(format!("bad feature value `{raw}` for `{id}`")))?;
            data.push(v);
        }
        ids.push(id);
    }
    let values = Matrix::from_vec(ids.len(), names.len(), data);
    CustomerFeatureMatrix::new(ids, names, values, standardized)
}
