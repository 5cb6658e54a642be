//! LOBSTER message and orderbook CSV files.
//!
//! Message rows are `time,type,order_id,size,price,direction` with time in
//! seconds after midnight (up to nanosecond decimals) and prices in 1e-4
//! dollars. Orderbook rows hold `ask_p, ask_s, bid_p, bid_s` per level.

use crate::book::{BookSnapshot, OrderId, Price, Side, Timestamp, AGENT_ID_BASE, NANOS_PER_SECOND};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: time {time} precedes previous message time {prev}")]
    NonMonotoneTime {
        line: usize,
        time: Timestamp,
        prev: Timestamp,
    },
}

fn parse_err(line: usize, msg: impl Into<String>) -> FormatError {
    FormatError::Parse {
        line,
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MessageKind {
    Add,
    PartialCancel,
    Delete,
    ExecuteVisible,
    ExecuteHidden,
    Cross,
    Halt,
}

impl MessageKind {
    pub fn code(self) -> u8 {
        match self {
            MessageKind::Add => 1,
            MessageKind::PartialCancel => 2,
            MessageKind::Delete => 3,
            MessageKind::ExecuteVisible => 4,
            MessageKind::ExecuteHidden => 5,
            MessageKind::Cross => 6,
            MessageKind::Halt => 7,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => MessageKind::Add,
            2 => MessageKind::PartialCancel,
            3 => MessageKind::Delete,
            4 => MessageKind::ExecuteVisible,
            5 => MessageKind::ExecuteHidden,
            6 => MessageKind::Cross,
            7 => MessageKind::Halt,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarketMessage {
    pub time: Timestamp,
    pub kind: MessageKind,
    pub order_id: OrderId,
    pub size: u64,
    pub price: Price,
    /// Side of the order the message refers to.
    pub direction: Side,
}

/// Dummy values for unoccupied orderbook levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentinels {
    pub ask_price: i64,
    pub bid_price: i64,
    pub size: i64,
}

impl Default for Sentinels {
    fn default() -> Self {
        Sentinels {
            ask_price: 9_999_999_999,
            bid_price: -9_999_999_999,
            size: 0,
        }
    }
}

/// Parses `34200.000123` into nanoseconds after midnight.
pub fn parse_time(field: &str) -> Option<Timestamp> {
    let (secs, frac) = match field.split_once('.') {
        Some((s, f)) => (s, f),
        None => (field, ""),
    };
    if secs.is_empty() || frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let secs: u64 = secs.parse().ok()?;
    let mut nanos = 0u64;
    for (i, b) in frac.bytes().enumerate() {
        nanos += u64::from(b - b'0') * 10u64.pow(8 - i as u32);
    }
    secs.checked_mul(NANOS_PER_SECOND)?.checked_add(nanos)
}

pub fn format_time(t: Timestamp) -> String {
    format!("{}.{:09}", t / NANOS_PER_SECOND, t % NANOS_PER_SECOND)
}

pub fn parse_message_line(line: &str, lineno: usize) -> Result<MarketMessage, FormatError> {
    let fields: Vec<&str> = line.trim().split(',').map(str::trim).collect();
    if fields.len() != 6 {
        return Err(parse_err(
            lineno,
            format!("expected 6 columns, found {}", fields.len()),
        ));
    }
    let time = parse_time(fields[0])
        .ok_or_else(|| parse_err(lineno, format!("bad time `{}`", fields[0])))?;
    let code: u8 = fields[1]
        .parse()
        .map_err(|_| parse_err(lineno, format!("bad event type `{}`", fields[1])))?;
    let kind = MessageKind::from_code(code)
        .ok_or_else(|| parse_err(lineno, format!("unknown event type {code}")))?;
    let order_id: OrderId = fields[2]
        .parse()
        .map_err(|_| parse_err(lineno, format!("bad order id `{}`", fields[2])))?;
    if order_id >= AGENT_ID_BASE {
        return Err(parse_err(
            lineno,
            "order id collides with the agent id namespace",
        ));
    }
    let size: u64 = fields[3]
        .parse()
        .map_err(|_| parse_err(lineno, format!("bad size `{}`", fields[3])))?;
    let price: i64 = fields[4]
        .parse()
        .map_err(|_| parse_err(lineno, format!("bad price `{}`", fields[4])))?;
    let direction = match fields[5] {
        "1" => Side::Buy,
        "-1" => Side::Sell,
        other => return Err(parse_err(lineno, format!("bad direction `{other}`"))),
    };
    Ok(MarketMessage {
        time,
        kind,
        order_id,
        size,
        price: Price(price),
        direction,
    })
}

pub fn format_message(m: &MarketMessage) -> String {
    format!(
        "{},{},{},{},{},{}",
        format_time(m.time),
        m.kind.code(),
        m.order_id,
        m.size,
        m.price.0,
        m.direction.sign()
    )
}

fn open(path: &Path) -> Result<BufReader<File>, FormatError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| FormatError::Io {
            path: path.display().to_string(),
            source,
        })
}

fn io_err(path: &Path) -> impl Fn(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn read_messages_from<R: BufRead>(reader: R) -> Result<Vec<MarketMessage>, FormatError> {
    let mut out = Vec::new();
    let mut prev = 0;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let msg = parse_message_line(&line, lineno)?;
        if msg.time < prev {
            return Err(FormatError::NonMonotoneTime {
                line: lineno,
                time: msg.time,
                prev,
            });
        }
        prev = msg.time;
        out.push(msg);
    }
    Ok(out)
}

pub fn read_messages(path: &Path) -> Result<Vec<MarketMessage>, FormatError> {
    read_messages_from(open(path)?)
}

/// Reads an orderbook file; every row must have `4 * depth` columns.
pub fn read_orderbook_from<R: BufRead>(reader: R) -> Result<(usize, Vec<Vec<i64>>), FormatError> {
    let mut rows = Vec::new();
    let mut width = None;
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .trim()
            .split(',')
            .map(|f| f.trim().parse::<i64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| parse_err(lineno, format!("bad integer: {e}")))?;
        if row.is_empty() || row.len() % 4 != 0 {
            return Err(parse_err(
                lineno,
                format!("{} columns is not a multiple of 4", row.len()),
            ));
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(parse_err(
                    lineno,
                    format!("expected {w} columns, found {}", row.len()),
                ))
            }
            _ => {}
        }
        rows.push(row);
    }
    Ok((width.unwrap_or(0) / 4, rows))
}

pub fn read_orderbook(path: &Path) -> Result<(usize, Vec<Vec<i64>>), FormatError> {
    read_orderbook_from(open(path)?)
}

/// The LOBSTER row for a snapshot, padded with sentinels to `depth` levels.
pub fn snapshot_row(snap: &BookSnapshot, depth: usize, s: &Sentinels) -> Vec<i64> {
    let mut row = Vec::with_capacity(4 * depth);
    for i in 0..depth {
        match snap.asks.get(i) {
            Some(q) => row.extend([q.price.0, q.size as i64]),
            None => row.extend([s.ask_price, s.size]),
        }
        match snap.bids.get(i) {
            Some(q) => row.extend([q.price.0, q.size as i64]),
            None => row.extend([s.bid_price, s.size]),
        }
    }
    row
}

pub fn format_row(row: &[i64]) -> String {
    let mut s = String::with_capacity(row.len() * 8);
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        write!(s, "{v}").expect("writing to a String");
    }
    s
}

pub fn write_messages(path: &Path, messages: &[MarketMessage]) -> Result<(), FormatError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for m in messages {
        writeln!(w, "{}", format_message(m)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_orderbook(path: &Path, rows: &[Vec<i64>]) -> Result<(), FormatError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        writeln!(w, "{}", format_row(row)).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// LOBSTER file names, e.g. `AAPL_2012-06-21_34200000_37800000_message_5.csv`.
pub fn file_names(
    symbol: &str,
    date: &str,
    start: Timestamp,
    end: Timestamp,
    depth: usize,
) -> (String, String) {
    let ms = |t: Timestamp| t / 1_000_000;
    let stem = format!("{symbol}_{date}_{}_{}", ms(start), ms(end));
    (
        format!("{stem}_message_{depth}.csv"),
        format!("{stem}_orderbook_{depth}.csv"),
    )
}
