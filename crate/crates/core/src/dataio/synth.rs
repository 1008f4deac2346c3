//! Seeded synthetic banking data: normal customers drawn from per-community
//! behavioural regimes, plus planted money-mule and smurfing customers.
//!
//! Mules receive a burst of inbound transfers, mostly from one foreign
//! country, and then push everything out in a single large transfer to a
//! country they never received from. Smurfers receive many small transfers on
//! one day and drain the account through ATM withdrawals shortly after.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{Duration, NaiveDate};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Transaction, TransactionTable, TxType};
use crate::error::{Error, Result};

/// Behavioural regime of one normal community. Rates are per 30 days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub inbound_rate: f64,
    pub outbound_rate: f64,
    pub atm_rate: f64,
    /// Median inbound transfer amount.
    pub inbound_scale: f64,
    /// Median outbound transfer amount.
    pub outbound_scale: f64,
    /// Probability that a counterparty sits in the home country.
    pub home_share: f64,
    /// Home country first, then the foreign countries this community deals with.
    pub countries: Vec<String>,
}

impl Regime {
    /// Geometric interpolation of rates and scales towards `other`; the
    /// country mix stays with `self`.
    fn towards(&self, other: &Regime, w: f64) -> Regime {
        let mix = |a: f64, b: f64| a.max(1e-9).powf(1.0 - w) * b.max(1e-9).powf(w);
        Regime {
            inbound_rate: mix(self.inbound_rate, other.inbound_rate),
            outbound_rate: mix(self.outbound_rate, other.outbound_rate),
            atm_rate: mix(self.atm_rate, other.atm_rate),
            inbound_scale: mix(self.inbound_scale, other.inbound_scale),
            outbound_scale: mix(self.outbound_scale, other.outbound_scale),
            home_share: self.home_share * (1.0 - w) + other.home_share * w,
            countries: self.countries.clone(),
        }
    }

    /// Built-in regimes. The first three are hand-tuned; further communities
    /// interpolate between them.
    pub fn default_for(index: usize) -> Regime {
        let names = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        match index {
            0 => Regime {
                inbound_rate: 2.0,
                outbound_rate: 6.0,
                atm_rate: 3.0,
                inbound_scale: 900.0,
                outbound_scale: 80.0,
                home_share: 0.97,
                countries: names(&["Germany", "Austria"]),
            },
            1 => Regime {
                inbound_rate: 5.0,
                outbound_rate: 9.0,
                atm_rate: 1.0,
                inbound_scale: 400.0,
                outbound_scale: 150.0,
                home_share: 0.6,
                countries: names(&["Switzerland", "Germany", "France", "Italy", "Austria"]),
            },
            2 => Regime {
                inbound_rate: 9.0,
                outbound_rate: 16.0,
                atm_rate: 7.0,
                inbound_scale: 120.0,
                outbound_scale: 35.0,
                home_share: 0.85,
                countries: names(&["Italy", "Spain", "France"]),
            },
            k => {
                let base = Regime::default_for(k % 3);
                let f = 1.0 + 0.35 * (k / 3) as f64;
                Regime {
                    inbound_rate: base.inbound_rate * f,
                    outbound_rate: base.outbound_rate * f,
                    inbound_scale: base.inbound_scale * f,
                    outbound_scale: base.outbound_scale * f,
                    ..base
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub communities: usize,
    pub customers_per_community: usize,
    pub mules: usize,
    pub smurfers: usize,
    /// Length of the observation window.
    pub days: u32,
    pub start_date: NaiveDate,
    /// Log-normal spread applied per customer to rates and scales.
    pub heterogeneity: f64,
    /// Share of normal customers whose regime is pulled part of the way
    /// towards the next community's regime. Keeps the communities connected.
    pub blend: f64,
    /// Explicit regimes; when shorter than `communities` the remainder use
    /// [`Regime::default_for`].
    pub regimes: Vec<Regime>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            communities: 3,
            customers_per_community: 200,
            mules: 10,
            smurfers: 10,
            days: 92,
            start_date: NaiveDate::from_ymd_opt(2012, 7, 1).expect("valid date"),
            heterogeneity: 0.25,
            blend: 0.15,
            regimes: Vec::new(),
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.communities == 0 {
            return Err(Error::Config("synthetic config needs at least one community".into()));
        }
        if self.customers_per_community == 0 {
            return Err(Error::Config("synthetic config needs customers per community".into()));
        }
        if self.days < 31 {
            return Err(Error::Config("synthetic window must span at least 31 days".into()));
        }
        if !(self.heterogeneity >= 0.0 && self.heterogeneity.is_finite()) {
            return Err(Error::Config("heterogeneity must be finite and >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.blend) {
            return Err(Error::Config("blend must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn regime(&self, c: usize) -> Regime {
        self.regimes.get(c).cloned().unwrap_or_else(|| Regime::default_for(c))
    }

    pub fn total_customers(&self) -> usize {
        self.communities * self.customers_per_community + self.mules + self.smurfers
    }
}

/// Labels for every generated customer. Normal customers carry their
/// community index `0..communities`; mules carry `communities` and smurfers
/// `communities + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGroundTruth {
    pub anomaly_labels: BTreeMap<String, bool>,
    pub community_labels: BTreeMap<String, usize>,
    pub generator_config: SyntheticConfig,
    pub seed: u64,
}

impl SyntheticGroundTruth {
    pub fn mule_label(&self) -> usize {
        self.generator_config.communities
    }

    pub fn smurf_label(&self) -> usize {
        self.generator_config.communities + 1
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Normal(usize),
    Mule,
    Smurf,
}

const MULE_SOURCES: [&str; 4] = ["Austria", "Belgium", "Estonia", "Italy"];
const MULE_SINKS: [&str; 4] = ["China", "Hong Kong", "United Arab Emirates", "Panama"];

fn cents(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

struct Gen<'a> {
    cfg: &'a SyntheticConfig,
    rng: ChaCha8Rng,
}

impl Gen<'_> {
    fn day(&self, offset: i64) -> NaiveDate {
        self.cfg.start_date + Duration::days(offset)
    }

    fn jitter(&mut self) -> f64 {
        if self.cfg.heterogeneity == 0.0 {
            return 1.0;
        }
        let n = Normal::new(0.0, self.cfg.heterogeneity).expect("finite sd");
        n.sample(&mut self.rng).exp()
    }

    fn poisson(&mut self, mean: f64) -> usize {
        if mean <= 0.0 {
            return 0;
        }
        Poisson::new(mean).expect("positive mean").sample(&mut self.rng) as usize
    }

    fn lognormal(&mut self, median: f64, sigma: f64) -> f64 {
        LogNormal::new(median.ln(), sigma).expect("valid lognormal").sample(&mut self.rng)
    }

    fn country(&mut self, regime: &Regime) -> String {
        if regime.countries.len() == 1 || self.rng.random::<f64>() < regime.home_share {
            regime.countries[0].clone()
        } else {
            regime.countries[1..].choose(&mut self.rng).expect("non-empty").clone()
        }
    }

    fn inbound(&self, id: &str, offset: i64, amount: f64, country: String) -> Transaction {
        Transaction {
            customer_id: id.to_owned(),
            date: self.day(offset),
            tx_type: TxType::Transfer,
            amount_sent: 0.0,
            amount_received: cents(amount).max(0.01),
            contraent_country: country,
        }
    }

    fn outbound(&self, id: &str, offset: i64, kind: TxType, amount: f64, country: String) -> Transaction {
        Transaction {
            customer_id: id.to_owned(),
            date: self.day(offset),
            tx_type: kind,
            amount_sent: -cents(amount).max(0.01),
            amount_received: 0.0,
            contraent_country: country,
        }
    }

    fn normal(&mut self, id: &str, regime: &Regime) -> Vec<Transaction> {
        let days = self.cfg.days as i64;
        let months = days as f64 / 30.0;
        let in_rate = regime.inbound_rate * self.jitter() * months;
        let out_rate = regime.outbound_rate * self.jitter() * months;
        let atm_rate = regime.atm_rate * self.jitter() * months;
        let in_scale = regime.inbound_scale * self.jitter();
        let out_scale = regime.outbound_scale * self.jitter();
        let mut out = Vec::new();
        let n_in = self.poisson(in_rate).max(1);
        for _ in 0..n_in {
            let d = self.rng.random_range(0..days);
            let a = self.lognormal(in_scale, 0.35);
            let c = self.country(regime);
            out.push(self.inbound(id, d, a, c));
        }
        for _ in 0..self.poisson(out_rate) {
            let d = self.rng.random_range(0..days);
            let a = self.lognormal(out_scale, 0.5);
            let c = self.country(regime);
            out.push(self.outbound(id, d, TxType::Transfer, a, c));
        }
        for _ in 0..self.poisson(atm_rate) {
            let d = self.rng.random_range(0..days);
            let a = 20.0 * self.rng.random_range(1..=10) as f64;
            out.push(self.outbound(id, d, TxType::Atm, a, regime.countries[0].clone()));
        }
        // monthly account fee
        for m in 0..(days / 30).max(1) {
            out.push(self.outbound(id, m * 30 + 1, TxType::Commission, 4.5, regime.countries[0].clone()));
        }
        out
    }

    fn mule(&mut self, id: &str) -> Vec<Transaction> {
        let days = self.cfg.days as i64;
        let span = 25;
        let start = self.rng.random_range(0..(days - span - 1).max(1));
        let primary = (*MULE_SOURCES.choose(&mut self.rng).expect("non-empty")).to_owned();
        let secondary = loop {
            let c = *MULE_SOURCES.choose(&mut self.rng).expect("non-empty");
            if c != primary {
                break c.to_owned();
            }
        };
        let n_in = 17;
        let n_secondary = n_in / 5;
        let mut out = Vec::new();
        let mut amounts = Vec::with_capacity(n_in);
        let mut seen_countries = BTreeSet::new();
        for i in 0..n_in {
            let d = start + self.rng.random_range(0..span);
            let a = self.lognormal(900.0, 0.1).clamp(100.0, 2500.0);
            let c = if i < n_secondary { secondary.clone() } else { primary.clone() };
            seen_countries.insert(c.clone());
            let t = self.inbound(id, d, a, c);
            amounts.push(t.amount_received);
            out.push(t);
        }
        amounts.sort_by(f64::total_cmp);
        let median = crate::stats::percentile_sorted(&amounts, 50.0);
        let total: f64 = amounts.iter().sum();
        let push = (total * 1.5).max(10.5 * median);
        // sinks and sources are disjoint lists
        let sink = (*MULE_SINKS.choose(&mut self.rng).expect("non-empty")).to_owned();
        debug_assert!(!seen_countries.contains(&sink));
        out.push(self.outbound(id, start + span, TxType::Transfer, push, sink));
        out
    }

    fn smurf(&mut self, id: &str, home: &str) -> Vec<Transaction> {
        let days = self.cfg.days as i64;
        let day = self.rng.random_range(3..(days - 31).max(4));
        let mut out = Vec::new();
        out.push(self.outbound(id, day - 2, TxType::Commission, 18.2, home.to_owned()));
        out.push(self.outbound(id, day - 2, TxType::Atm, 30.0, home.to_owned()));
        let n_in = self.rng.random_range(18..=20);
        for _ in 0..n_in {
            let a = self.lognormal(110.0, 0.25).clamp(20.0, 300.0);
            out.push(self.inbound(id, day, a, home.to_owned()));
        }
        let n_atm = 4;
        for i in 0..n_atm {
            let a = *[100.0, 200.0, 300.0, 500.0].choose(&mut self.rng).expect("non-empty");
            let d = day + 3 + 2 * i as i64 + self.rng.random_range(0..2);
            out.push(self.outbound(id, d, TxType::Atm, a, home.to_owned()));
        }
        let late = (day + 30).min(days - 1);
        let a = self.lognormal(250.0, 0.3);
        out.push(self.inbound(id, late, a, home.to_owned()));
        out
    }
}

/// Generates a dataset deterministically from `(cfg, seed)`.
pub fn generate_synthetic(cfg: &SyntheticConfig, seed: u64) -> Result<(TransactionTable, SyntheticGroundTruth)> {
    cfg.validate()?;
    let mut gen = Gen { cfg, rng: ChaCha8Rng::seed_from_u64(seed) };

    let mut kinds: Vec<Kind> = Vec::with_capacity(cfg.total_customers());
    for c in 0..cfg.communities {
        kinds.extend(std::iter::repeat_n(Kind::Normal(c), cfg.customers_per_community));
    }
    kinds.extend(std::iter::repeat_n(Kind::Mule, cfg.mules));
    kinds.extend(std::iter::repeat_n(Kind::Smurf, cfg.smurfers));
    kinds.shuffle(&mut gen.rng);

    let width = kinds.len().to_string().len().max(4);
    let mut rows = Vec::new();
    let mut anomaly_labels = BTreeMap::new();
    let mut community_labels = BTreeMap::new();
    for (i, kind) in kinds.iter().enumerate() {
        let id = format!("C{:0width$}", i + 1, width = width);
        let (txs, label, anomalous) = match *kind {
            Kind::Normal(c) => {
                let mut regime = cfg.regime(c);
                if cfg.communities > 1 && gen.rng.random::<f64>() < cfg.blend {
                    let w = gen.rng.random_range(0.2..0.6);
                    regime = regime.towards(&cfg.regime((c + 1) % cfg.communities), w);
                }
                (gen.normal(&id, &regime), c, false)
            }
            Kind::Mule => (gen.mule(&id), cfg.communities, true),
            Kind::Smurf => {
                let home = cfg.regime(0).countries[0].clone();
                (gen.smurf(&id, &home), cfg.communities + 1, true)
            }
        };
        rows.extend(txs);
        anomaly_labels.insert(id.clone(), anomalous);
        community_labels.insert(id, label);
    }
    rows.sort_by(|a, b| a.customer_id.cmp(&b.customer_id).then(a.date.cmp(&b.date)));
    debug_assert!(rows.iter().all(|t| t.violation().is_none()));

    Ok((
        TransactionTable { rows },
        SyntheticGroundTruth { anomaly_labels, community_labels, generator_config: cfg.clone(), seed },
    ))
}
