//! Transaction ingestion, per-customer feature derivation and the seeded
//! synthetic data generator.

mod features;
mod parse;
mod synth;

pub use features::{
    build_customer_features, read_features_csv, write_features_csv, CustomerFeatureMatrix, FeatureConfig,
    DEFAULT_FEATURES,
};
pub use parse::{
    parse_transactions, write_rejects_csv, write_transactions, ColumnMap, ParseOptions, ParseOutcome, Reject,
};
pub use synth::{generate_synthetic, Regime, SyntheticConfig, SyntheticGroundTruth};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxType {
    Transfer,
    Atm,
    Commission,
    Other,
}

impl TxType {
    /// Case-insensitive; anything unrecognised is `Other`.
    pub fn parse(s: &str) -> TxType {
        match s.trim().to_ascii_lowercase().as_str() {
            "transfer" => TxType::Transfer,
            "atm" => TxType::Atm,
            "commission" => TxType::Commission,
            _ => TxType::Other,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            TxType::Transfer => "transfer",
            TxType::Atm => "ATM",
            TxType::Commission => "commission",
            TxType::Other => "other",
        }
    }
}

/// One transaction record. Amounts follow the sign convention of the source
/// statements: sent amounts are `<= 0`, received amounts `>= 0`, and exactly
/// one of them is nonzero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub customer_id: String,
    pub date: NaiveDate,
    pub tx_type: TxType,
    pub amount_sent: f64,
    pub amount_received: f64,
    pub contraent_country: String,
}

impl Transaction {
    /// Returns the reason the record breaks the amount invariants, if any.
    pub fn violation(&self) -> Option<&'static str> {
        if !self.amount_sent.is_finite() || !self.amount_received.is_finite() {
            return Some("non-finite amount");
        }
        if self.amount_sent > 0.0 || self.amount_received < 0.0 {
            return Some("sign convention violated");
        }
        match (self.amount_sent != 0.0, self.amount_received != 0.0) {
            (false, false) => Some("both amounts zero"),
            (true, true) => Some("both amounts nonzero"),
            _ => None,
        }
    }

    pub fn is_inbound(&self) -> bool {
        self.amount_received > 0.0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TransactionTable {
    pub rows: Vec<Transaction>,
}

impl TransactionTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Distinct customer ids in sorted order.
    pub fn customer_ids(&self) -> Vec<String> {
        let set: std::collections::BTreeSet<&str> = self.rows.iter().map(|t| t.customer_id.as_str()).collect();
        set.into_iter().map(str::to_owned).collect()
    }
}
