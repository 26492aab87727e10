use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::equilibrium::LocReport;
use crate::error::{Error, Result};
use crate::model::{Allocation, BidKind, Market};

/// Numbers that may be infinite are written as the string `"infinite"`.
mod maybe_infinite {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("infinite")
        } else {
            s.serialize_f64(*v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) => Ok(v),
            Repr::Text(t) if t == "infinite" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected a number or \"infinite\", got `{t}`"))),
        }
    }
}

fn fmt_number(v: f64) -> String {
    if v.is_infinite() {
        "infinite".to_string()
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BidOutcome {
    pub bid: String,
    pub acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentOutcome {
    pub agent: String,
    pub bids: Vec<BidOutcome>,
    /// Value of the accepted bids.
    pub value: f64,
    #[serde(with = "maybe_infinite")]
    pub loc: f64,
    pub convex_volume: f64,
    pub nonconvex_volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub welfare: f64,
    #[serde(with = "maybe_infinite")]
    pub loc: f64,
    pub convex_volume: f64,
    pub nonconvex_volume: f64,
}

/// Prices, acceptances and lost opportunity costs of one clearing run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeReport {
    pub label: String,
    pub mode: String,
    pub prices: Vec<f64>,
    pub equilibrium: bool,
    pub agents: Vec<AgentOutcome>,
    pub totals: Totals,
    pub provenance: BTreeMap<String, String>,
}

fn agrees(total: f64, parts: impl Iterator<Item = f64>) -> bool {
    let sum: f64 = parts.sum();
    if total.is_infinite() || sum.is_infinite() {
        return total == sum;
    }
    (total - sum).abs() <= 1e-9 * (1.0 + total.abs().max(sum.abs()))
}

impl OutcomeReport {
    /// Builds a report, refusing totals that disagree with the per-agent parts.
    pub fn new(
        label: String,
        mode: String,
        prices: Vec<f64>,
        equilibrium: bool,
        agents: Vec<AgentOutcome>,
        totals: Totals,
        provenance: BTreeMap<String, String>,
    ) -> Result<Self> {
        let report = Self { label, mode, prices, equilibrium, agents, totals, provenance };
        report.check()?;
        Ok(report)
    }

    pub fn check(&self) -> Result<()> {
        let t = &self.totals;
        let checks = [
            ("welfare", agrees(t.welfare, self.agents.iter().map(|a| a.value))),
            ("lost opportunity cost", agrees(t.loc, self.agents.iter().map(|a| a.loc))),
            ("convex volume", agrees(t.convex_volume, self.agents.iter().map(|a| a.convex_volume))),
            ("nonconvex volume", agrees(t.nonconvex_volume, self.agents.iter().map(|a| a.nonconvex_volume))),
        ];
        match checks.iter().find(|(_, ok)| !ok) {
            Some((what, _)) => Err(Error::InconsistentReport(format!("total {what} differs from the sum over agents"))),
            None => Ok(()),
        }
    }

    /// Report for an allocation priced at `prices`, with totals summed from the parts.
    pub fn from_allocation(
        market: &Market,
        mode: &str,
        prices: &[f64],
        allocation: &Allocation,
        equilibrium: bool,
        loc: &LocReport,
        provenance: BTreeMap<String, String>,
    ) -> Result<Self> {
        let mut agents = Vec::with_capacity(market.agents.len());
        for ((agent, acc), &agent_loc) in market.agents.iter().zip(&allocation.acceptances).zip(&loc.per_agent) {
            let (mut convex_volume, mut nonconvex_volume) = (0.0, 0.0);
            for bid in &agent.bids {
                match bid.kind {
                    BidKind::Curve(_) => convex_volume += bid.absolute_volume(),
                    BidKind::Block(_) => nonconvex_volume += bid.absolute_volume(),
                }
            }
            agents.push(AgentOutcome {
                agent: agent.id.clone(),
                bids: agent.bids.iter().zip(acc).map(|(b, &a)| BidOutcome { bid: b.id.clone(), acceptance: a + 0.0 }).collect(),
                value: agent.value(acc)?.unwrap_or(f64::NAN) + 0.0,
                loc: agent_loc + 0.0,
                convex_volume,
                nonconvex_volume,
            });
        }
        if agents.iter().any(|a| a.value.is_nan()) {
            return Err(Error::InconsistentReport("allocation violates an acceptance set".into()));
        }
        let totals = Totals {
            welfare: agents.iter().map(|a| a.value).sum(),
            loc: agents.iter().map(|a| a.loc).sum(),
            convex_volume: agents.iter().map(|a| a.convex_volume).sum(),
            nonconvex_volume: agents.iter().map(|a| a.nonconvex_volume).sum(),
        };
        // `+ 0.0` turns negative zeros into zeros so reports print `0`.
        let prices = prices.iter().map(|p| p + 0.0).collect();
        Self::new(market.label.clone(), mode.to_string(), prices, equilibrium, agents, totals, provenance)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialises");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let report: Self = serde_json::from_str(text)?;
        report.check()?;
        Ok(report)
    }

    /// Flat CSV: one `kind,key...,value` record per line.
    pub fn to_csv(&self) -> String {
        let mut w = csv::WriterBuilder::new().flexible(true).terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        let mut row = |r: &[String]| w.write_record(r).expect("in-memory writer");
        row(&["label".into(), self.label.clone()]);
        row(&["mode".into(), self.mode.clone()]);
        row(&["equilibrium".into(), self.equilibrium.to_string()]);
        for (h, p) in self.prices.iter().enumerate() {
            row(&["price".into(), h.to_string(), p.to_string()]);
        }
        for a in &self.agents {
            for b in &a.bids {
                row(&["acceptance".into(), a.agent.clone(), b.bid.clone(), b.acceptance.to_string()]);
            }
        }
        for a in &self.agents {
            row(&[
                "agent".into(),
                a.agent.clone(),
                a.value.to_string(),
                fmt_number(a.loc),
                a.convex_volume.to_string(),
                a.nonconvex_volume.to_string(),
            ]);
        }
        let t = &self.totals;
        row(&["total".into(), "welfare".into(), t.welfare.to_string()]);
        row(&["total".into(), "loc".into(), fmt_number(t.loc)]);
        row(&["total".into(), "convex_volume".into(), t.convex_volume.to_string()]);
        row(&["total".into(), "nonconvex_volume".into(), t.nonconvex_volume.to_string()]);
        for (k, v) in &self.provenance {
            row(&["provenance".into(), k.clone(), v.clone()]);
        }
        String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
    }
}

/// A volume ratio that is infinite when there is no block volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ratio {
    Finite(f64),
    Infinite,
}

impl Ratio {
    fn of(num: f64, den: f64) -> Self {
        if den == 0.0 {
            Ratio::Infinite
        } else {
            Ratio::Finite(num / den)
        }
    }

    fn value(self) -> f64 {
        match self {
            Ratio::Finite(v) => v,
            Ratio::Infinite => f64::INFINITY,
        }
    }
}

impl std::fmt::Display for Ratio {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Ratio::Finite(v) => write!(f, "{v}"),
            Ratio::Infinite => f.write_str("infinite"),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Ratio::Finite(v) => s.serialize_f64(*v),
            Ratio::Infinite => s.serialize_str("infinite"),
        }
    }
}

/// Per-label equilibrium share and median curve-to-block volume ratio.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FigureRow {
    pub label: String,
    pub instances: usize,
    pub equilibria: usize,
    pub equilibrium_pct: f64,
    pub median_volume_ratio: Ratio,
}

/// Groups instances by market label, in order of first appearance.
pub fn figure_data(entries: &[(Market, OutcomeReport)]) -> Result<Vec<FigureRow>> {
    if entries.is_empty() {
        return Err(Error::InvalidSpec("figure data needs at least one instance".into()));
    }
    let mut groups: Vec<(String, Vec<(bool, Ratio)>)> = Vec::new();
    for (market, report) in entries {
        let (convex, nonconvex) = market.volumes();
        let item = (report.equilibrium, Ratio::of(convex, nonconvex));
        match groups.iter_mut().find(|(l, _)| *l == market.label) {
            Some((_, items)) => items.push(item),
            None => groups.push((market.label.clone(), vec![item])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|(label, items)| {
            let equilibria = items.iter().filter(|i| i.0).count();
            let mut ratios: Vec<f64> = items.iter().map(|i| i.1.value()).collect();
            ratios.sort_by(f64::total_cmp);
            let n = ratios.len();
            let median = if n % 2 == 1 { ratios[n / 2] } else { (ratios[n / 2 - 1] + ratios[n / 2]) / 2.0 };
            FigureRow {
                label,
                instances: n,
                equilibria,
                equilibrium_pct: 100.0 * equilibria as f64 / n as f64,
                median_volume_ratio: if median.is_infinite() { Ratio::Infinite } else { Ratio::Finite(median) },
            }
        })
        .collect())
}

pub fn emit_figure_csv(rows: &[FigureRow]) -> String {
    let mut out = String::from("label,instances,equilibria,equilibrium_pct,median_volume_ratio\n");
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
    for r in rows {
        w.write_record([
            r.label.clone(),
            r.instances.to_string(),
            r.equilibria.to_string(),
            r.equilibrium_pct.to_string(),
            r.median_volume_ratio.to_string(),
        ])
        .expect("in-memory writer");
    }
    out.push_str(&String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8"));
    out
}
