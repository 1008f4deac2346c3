use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Transaction, TransactionTable, TxType};
use crate::error::{Error, Result};

/// Header names for each transaction field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub customer_id: String,
    pub date: String,
    pub tx_type: String,
    pub amount_sent: String,
    pub amount_received: String,
    pub contraent_country: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        ColumnMap {
            customer_id: "customer_id".into(),
            date: "date".into(),
            tx_type: "type".into(),
            amount_sent: "amount_sent".into(),
            amount_received: "amount_received".into(),
            contraent_country: "contraent_country".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParseOptions {
    pub delimiter: char,
    /// chrono format string; default `%d.%m.%Y`.
    pub date_format: String,
    pub columns: ColumnMap,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { delimiter: ',', date_format: "%d.%m.%Y".into(), columns: ColumnMap::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    /// 1-based line number in the input, header included.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct ParseOutcome {
    pub table: TransactionTable,
    pub rejects: Vec<Reject>,
}

struct Positions {
    customer_id: usize,
    date: usize,
    tx_type: usize,
    amount_sent: usize,
    amount_received: usize,
    contraent_country: usize,
}

fn locate(headers: &csv::StringRecord, cols: &ColumnMap) -> Result<Positions> {
    let find =
        |name: &str| headers.iter().position(|h| h.trim() == name).ok_or_else(|| Error::MissingColumn(name.to_owned()));
    Ok(Positions {
        customer_id: find(&cols.customer_id)?,
        date: find(&cols.date)?,
        tx_type: find(&cols.tx_type)?,
        amount_sent: find(&cols.amount_sent)?,
        amount_received: find(&cols.amount_received)?,
        contraent_country: find(&cols.contraent_country)?,
    })
}

fn parse_amount(s: &str) -> Option<f64> {
    let v: f64 = s.trim().parse().ok()?;
    v.is_finite().then_some(v)
}

/// Reads delimiter-separated transactions. Malformed rows are collected as
/// rejects rather than failing the whole parse; a missing column is fatal.
pub fn parse_transactions<R: Read>(reader: R, opts: &ParseOptions) -> Result<ParseOutcome> {
    let mut rdr = csv::ReaderBuilder::new().delimiter(opts.delimiter as u8).flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() {
        return Ok(ParseOutcome::default());
    }
    let pos = locate(&headers, &opts.columns)?;

    let mut out = ParseOutcome::default();
    for (i, rec) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                out.rejects.push(Reject { line, reason: format!("malformed record: {e}") });
                continue;
            }
        };
        match parse_row(&rec, &pos, opts) {
            Ok(tx) => out.table.rows.push(tx),
            Err(reason) => out.rejects.push(Reject { line, reason }),
        }
    }
    Ok(out)
}

fn parse_row(
    rec: &csv::StringRecord,
    pos: &Positions,
    opts: &ParseOptions,
) -> std::result::Result<Transaction, String> {
    let field = |i: usize| rec.get(i).ok_or_else(|| format!("missing field {}", i + 1));
    let customer_id = field(pos.customer_id)?.trim().to_owned();
    if customer_id.is_empty() {
        return Err("empty customer id".into());
    }
    let date_raw = field(pos.date)?.trim();
    let date =
        NaiveDate::parse_from_str(date_raw, &opts.date_format).map_err(|_| format!("unparseable date `{date_raw}`"))?;
    let amount_sent =
        field(pos.amount_sent).and_then(|s| parse_amount(s).ok_or_else(|| format!("unparseable amount `{s}`")))?;
    let amount_received =
        field(pos.amount_received).and_then(|s| parse_amount(s).ok_or_else(|| format!("unparseable amount `{s}`")))?;
    let tx = Transaction {
        customer_id,
        date,
        tx_type: TxType::parse(field(pos.tx_type)?),
        amount_sent,
        amount_received,
        contraent_country: field(pos.contraent_country)?.trim().to_owned(),
    };
    match tx.violation() {
        Some(reason) => Err(reason.to_owned()),
        None => Ok(tx),
    }
}

/// Writes the table with the header names and date format from `opts`.
pub fn write_transactions<W: Write>(writer: W, table: &TransactionTable, opts: &ParseOptions) -> Result<()> {
    let mut w = csv::WriterBuilder::new().delimiter(opts.delimiter as u8).from_writer(writer);
    let c = &opts.columns;
    w.write_record([&c.customer_id, &c.date, &c.tx_type, &c.amount_sent, &c.amount_received, &c.contraent_country])?;
    for t in &table.rows {
        w.write_record([
            t.customer_id.clone(),
            t.date.format(&opts.date_format).to_string(),
            t.tx_type.as_str().to_owned(),
            format_amount(t.amount_sent),
            format_amount(t.amount_received),
            t.contraent_country.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_rejects_csv<W: Write>(writer: W, rejects: &[Reject]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["line", "reason"])?;
    for r in rejects {
        w.write_record([r.line.to_string(), r.reason.clone()])?;
    }
    w.flush()?;
    Ok(())
}

// shortest representation that parses back to the same f64
fn format_amount(v: f64) -> String {
    if v == 0.0 {
        "0".to_owned()
    } else {
        format!("{v}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "customer_id,date,type,amount_sent,amount_received,contraent_country\n";

    #[test]
    fn header_only_gives_empty_table() {
        let out = parse_transactions(HEADER.as_bytes(), &ParseOptions::default()).unwrap();
        assert!(out.table.is_empty());
        assert!(out.rejects.is_empty());
    }

    #[test]
    fn completely_empty_input_is_not_an_error() {
        let out = parse_transactions("".as_bytes(), &ParseOptions::default()).unwrap();
        assert!(out.table.is_empty());
    }

    #[test]
    fn positive_sent_amount_is_rejected() {
        let src = format!("{HEADER}c1,01.07.2012,transfer,10.00,0.00,Germany\n");
        let out = parse_transactions(src.as_bytes(), &ParseOptions::default()).unwrap();
        assert!(out.table.is_empty());
        assert_eq!(out.rejects.len(), 1);
        assert_eq!(out.rejects[0].reason, "sign convention violated");
        assert_eq!(out.rejects[0].line, 2);
    }

    #[test]
    fn zero_zero_and_bad_fields_are_row_level() {
        let src = format!(
            "{HEADER}c1,01.07.2012,transfer,0,0,Germany\n\
             c1,2012-07-01,transfer,0,5,Germany\n\
             c1,01.07.2012,transfer,abc,5,Germany\n\
             c1,02.07.2012,ATM,-30,0,Germany\n"
        );
        let out = parse_transactions(src.as_bytes(), &ParseOptions::default()).unwrap();
        assert_eq!(out.table.len(), 1);
        assert_eq!(out.table.rows[0].tx_type, TxType::Atm);
        let reasons: Vec<_> = out.rejects.iter().map(|r| r.reason.as_str()).collect();
        assert_eq!(reasons[0], "both amounts zero");
        let mut buf = Vec::new();
        write_rejects_csv(&mut buf, &out.rejects).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), out.rejects.len() + 1);
        assert!(text.starts_with("line,reason\n2,both amounts zero\n"));
        assert!(reasons[1].starts_with("unparseable date"));
        assert!(reasons[2].starts_with("unparseable amount"));
    }

    #[test]
    fn missing_column_is_schema_error() {
        let src = "customer_id,date,type,amount_sent,amount_received\n";
        let err = parse_transactions(src.as_bytes(), &ParseOptions::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn(c) if c == "contraent_country"));
    }

    #[test]
    fn custom_column_map_and_delimiter() {
        let opts = ParseOptions {
            delimiter: ';',
            date_format: "%Y-%m-%d".into(),
            columns: ColumnMap {
                customer_id: "id".into(),
                date: "Date".into(),
                tx_type: "Type".into(),
                amount_sent: "Sent".into(),
                amount_received: "Received".into(),
                contraent_country: "Country".into(),
            },
        };
        let src = "Country;Received;Sent;Type;Date;id\nItaly;12.5;0;transfer;2020-01-02;x\n";
        let out = parse_transactions(src.as_bytes(), &opts).unwrap();
        assert_eq!(out.table.len(), 1);
        assert_eq!(out.table.rows[0].amount_received, 12.5);
        assert_eq!(out.table.rows[0].contraent_country, "Italy");
    }
}
