//! Market files and outcome reports.
//!
//! A market file is either JSON (the serde form of [`Market`]) or CSV with
//! one record per line and the record type in the first column:
//!
//! ```text
//! market,<K>,<currency>,<quantity unit>,<label>
//! curve,<agent>,<bid>,<hour>,<price>,<quantity>,<stepwise|interpolated>
//! block,<agent>,<bid>,<price>,<mar>,<group>,<parent>,<loop>,<q_0>,...,<q_{K-1}>
//! ```
//!
//! Curves take one row per breakpoint, in increasing price order. Hours are
//! zero-based. Quantities are signed (negative = sell); a block's price is
//! the total money for its whole profile. Empty group/parent/loop cells mean
//! "none". Lines starting with `#` are comments.

mod report;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{Agent, Bid, BidKind, BlockBid, CurveMode, CurvePoint, HourlyCurveBid, Market, ViolationKind};

pub use report::{emit_figure_csv, figure_data, AgentOutcome, BidOutcome, FigureRow, OutcomeReport, Ratio, Totals};

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn number(field: Option<&str>, line: usize, what: &str) -> Result<f64> {
    let raw = field.ok_or_else(|| parse_err(line, format!("missing {what}")))?.trim();
    let v: f64 = raw.parse().map_err(|_| parse_err(line, format!("invalid {what} `{raw}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite {what} `{raw}`")));
    }
    Ok(v)
}

fn required<'a>(field: Option<&'a str>, line: usize, what: &str) -> Result<&'a str> {
    let v = field.ok_or_else(|| parse_err(line, format!("missing {what}")))?.trim();
    if v.is_empty() {
        return Err(parse_err(line, format!("empty {what}")));
    }
    Ok(v)
}

fn optional(field: Option<&str>) -> Option<String> {
    field.map(str::trim).filter(|s| !s.is_empty()).map(str::to_string)
}

/// Parses and validates a market from CSV or JSON bytes.
pub fn parse_market(bytes: &[u8]) -> Result<Market> {
    let text = std::str::from_utf8(bytes).map_err(|e| parse_err(0, format!("input is not UTF-8: {e}")))?;
    let market = if text.trim_start().starts_with('{') { serde_json::from_str(text)? } else { parse_csv(text)? };
    check(&market)?;
    Ok(market)
}

fn check(market: &Market) -> Result<()> {
    let report = market.validate();
    if report.is_empty() {
        return Ok(());
    }
    if report.has(&ViolationKind::UnresolvedReference) {
        return Err(Error::Reference(report.to_string()));
    }
    if report.has(&ViolationKind::DimensionMismatch) {
        if let Some(v) = report.violations.iter().find(|v| v.kind == ViolationKind::DimensionMismatch) {
            return Err(Error::InvalidMarket(format!("dimension mismatch: {v}")));
        }
    }
    Err(Error::InvalidMarket(report.to_string()))
}

fn parse_csv(input: &str) -> Result<Market> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(input.as_bytes());
    let mut header: Option<(usize, String, String, String)> = None;
    let mut agents: Vec<Agent> = Vec::new();
    let mut agent_pos: HashMap<String, usize> = HashMap::new();
    let mut bid_pos: HashMap<String, (usize, usize)> = HashMap::new();

    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let mut fields = record.iter();
        let kind = fields.next().unwrap_or_default();
        match kind {
            "market" => {
                if header.is_some() {
                    return Err(parse_err(line, "duplicate market header"));
                }
                let k = required(fields.next(), line, "commodity count")?;
                let k: usize = k.parse().map_err(|_| parse_err(line, format!("invalid commodity count `{k}`")))?;
                let currency = optional(fields.next()).unwrap_or_else(|| "EUR".into());
                let unit = optional(fields.next()).unwrap_or_else(|| "MW".into());
                let label = fields.next().unwrap_or_default().to_string();
                header = Some((k, currency, unit, label));
            }
            "curve" | "block" => {
                let Some((k, ..)) = &header else {
                    return Err(parse_err(line, "bid row before the market header"));
                };
                let k = *k;
                let agent_id = required(fields.next(), line, "agent id")?.to_string();
                let bid_id = required(fields.next(), line, "bid id")?.to_string();
                let a = *agent_pos.entry(agent_id.clone()).or_insert_with(|| {
                    agents.push(Agent { id: agent_id.clone(), bids: Vec::new() });
                    agents.len() - 1
                });
                if kind == "curve" {
                    let hour = required(fields.next(), line, "hour")?;
                    let hour: usize = hour.parse().map_err(|_| parse_err(line, format!("invalid hour `{hour}`")))?;
                    let price = number(fields.next(), line, "price")?;
                    let quantity = number(fields.next(), line, "quantity")?;
                    let mode = match fields.next().map(str::trim).unwrap_or("stepwise") {
                        "stepwise" | "" => CurveMode::Stepwise,
                        "interpolated" => CurveMode::Interpolated,
                        other => return Err(parse_err(line, format!("unknown curve mode `{other}`"))),
                    };
                    if fields.next().is_some() {
                        return Err(parse_err(line, "too many fields in curve row"));
                    }
                    let point = CurvePoint { price, quantity };
                    match bid_pos.get(&bid_id) {
                        Some(&(owner, idx)) => {
                            if owner != a {
                                return Err(parse_err(line, format!("bid `{bid_id}` already belongs to another agent")));
                            }
                            let BidKind::Curve(c) = &mut agents[a].bids[idx].kind else {
                                return Err(parse_err(line, format!("bid `{bid_id}` is already a block")));
                            };
                            if c.hour != hour || c.mode != mode {
                                return Err(parse_err(line, format!("curve `{bid_id}` changes hour or mode")));
                            }
                            c.points.push(point);
                        }
                        None => {
                            bid_pos.insert(bid_id.clone(), (a, agents[a].bids.len()));
                            agents[a].bids.push(Bid {
                                id: bid_id,
                                kind: BidKind::Curve(HourlyCurveBid { hour, points: vec![point], mode }),
                            });
                        }
                    }
                } else {
                    if bid_pos.contains_key(&bid_id) {
                        return Err(parse_err(line, format!("duplicate bid id `{bid_id}`")));
                    }
                    let price = number(fields.next(), line, "price")?;
                    let mar = number(fields.next(), line, "minimum acceptance ratio")?;
                    let group = optional(fields.next());
                    let parent = optional(fields.next());
                    let loop_partner = optional(fields.next());
                    let quantity = fields
                        .enumerate()
                        .map(|(h, f)| number(Some(f), line, &format!("quantity for hour {h}")))
                        .collect::<Result<Vec<f64>>>()?;
                    if quantity.len() != k {
                        return Err(Error::DimensionMismatch { expected: k, got: quantity.len() });
                    }
                    bid_pos.insert(bid_id.clone(), (a, agents[a].bids.len()));
                    agents[a].bids.push(Bid {
                        id: bid_id,
                        kind: BidKind::Block(BlockBid { price, quantity, mar, group, parent, loop_partner }),
                    });
                }
            }
            other => return Err(parse_err(line, format!("unknown record type `{other}`"))),
        }
    }
    let (k, currency_unit, quantity_unit, label) = header.ok_or_else(|| parse_err(1, "missing market header"))?;
    Ok(Market { num_commodities: k, agents, currency_unit, quantity_unit, label })
}

/// Writes a market in the CSV schema. Numbers use Rust's shortest
/// round-trip formatting, so parsing the output restores identical values.
pub fn emit_market_csv(market: &Market) -> String {
    let mut w = csv::WriterBuilder::new().flexible(true).terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    let k = market.num_commodities.to_string();
    write(&mut w, &["market", &k, &market.currency_unit, &market.quantity_unit, &market.label]);
    for agent in &market.agents {
        for bid in &agent.bids {
            match &bid.kind {
                BidKind::Curve(c) => {
                    let mode = match c.mode {
                        CurveMode::Stepwise => "stepwise",
                        CurveMode::Interpolated => "interpolated",
                    };
                    for p in &c.points {
                        let row = [
                            "curve".to_string(),
                            agent.id.clone(),
                            bid.id.clone(),
                            c.hour.to_string(),
                            p.price.to_string(),
                            p.quantity.to_string(),
                            mode.to_string(),
                        ];
                        write(&mut w, &row);
                    }
                }
                BidKind::Block(b) => {
                    let mut row = vec![
                        "block".to_string(),
                        agent.id.clone(),
                        bid.id.clone(),
                        b.price.to_string(),
                        b.mar.to_string(),
                        b.group.clone().unwrap_or_default(),
                        b.parent.clone().unwrap_or_default(),
                        b.loop_partner.clone().unwrap_or_default(),
                    ];
                    row.extend(b.quantity.iter().map(f64::to_string));
                    write(&mut w, &row);
                }
            }
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is UTF-8")
}

fn write<S: AsRef<[u8]>>(w: &mut csv::Writer<Vec<u8>>, row: &[S]) {
    w.write_record(row).expect("in-memory writer");
}

pub fn emit_market_json(market: &Market) -> String {
    let mut s = serde_json::to_string_pretty(market).expect("market serialises");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests;
