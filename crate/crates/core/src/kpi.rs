//! Dashboard KPIs computed from a simulation trace: cost, service level,
//! lead times, inventory, carbon and utilization.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::{EdgeId, EntityKind, GraphSnapshot, NodeId, Tick, Units};
use crate::simulation::{evaluate_cost_window, CostError, CostModel, SimTrace, TermCost};

/// Half-open tick range `[from, to)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KpiWindow {
    pub from: Tick,
    pub to: Tick,
}

impl KpiWindow {
    pub fn new(from: Tick, to: Tick) -> Self {
        Self { from, to }
    }

    pub fn full(horizon: Tick) -> Self {
        Self { from: 0, to: horizon }
    }

    fn check(&self, horizon: Tick) -> Result<(), CostError> {
        if self.from > self.to || self.to > horizon {
            return Err(CostError::WindowOutOfRange {
                from: self.from,
                to: self.to,
                horizon,
            });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LeadTimeStats {
    /// Fulfilled batches in the window.
    pub batches: usize,
    pub mean: Option<f64>,
    pub p50: Option<Tick>,
    pub p90: Option<Tick>,
    pub p95: Option<Tick>,
    pub max: Option<Tick>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InventoryStats {
    /// Mean over nodes and ticks of the class.
    pub mean: f64,
    pub min: Units,
    pub max: Units,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CarbonReport {
    /// kg CO2e; `transport + production`.
    pub total: f64,
    pub transport: f64,
    pub production: f64,
    pub by_edge: BTreeMap<EdgeId, f64>,
    pub by_node: BTreeMap<NodeId, f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Utilization {
    /// Units shipped over effective capacity offered.
    pub edges: BTreeMap<EdgeId, f64>,
    /// Units supplied over node capacity, for nodes that declare one.
    pub nodes: BTreeMap<NodeId, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KpiReport {
    pub window: KpiWindow,
    pub total_cost: f64,
    pub cost: TermCost,
    pub demand: Units,
    pub on_time: Units,
    pub consumed: Units,
    /// Demand raised in the window and not met at its tick.
    pub unmet: Units,
    pub backlog_at_start: Units,
    pub backlog_at_end: Units,
    pub shipped: Units,
    pub loss: Units,
    /// `on_time / demand`, 1 when there is no demand.
    pub service_level: f64,
    /// `consumed / (demand + backlog_at_start)`, 1 when both are zero.
    pub fill_rate: f64,
    pub lead_time: LeadTimeStats,
    pub inventory: BTreeMap<EntityKind, InventoryStats>,
    pub carbon: CarbonReport,
    pub utilization: Utilization,
}

fn ratio(num: Units, den: Units) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// Nearest-rank percentile of a sorted, non-empty slice.
fn nearest_rank(sorted: &[Tick], p: u32) -> Tick {
    let n = sorted.len();
    let rank = (p as usize * n).div_ceil(100).max(1);
    sorted[rank - 1]
}

fn lead_times(trace: &SimTrace, w: KpiWindow) -> LeadTimeStats {
    let mut lt: Vec<Tick> = trace.ticks[w.from as usize..w.to as usize]
        .iter()
        .flat_map(|r| r.fulfilled.iter().map(|f| f.lead_time()))
        .collect();
    if lt.is_empty() {
        return LeadTimeStats::default();
    }
    lt.sort_unstable();
    LeadTimeStats {
        batches: lt.len(),
        mean: Some(lt.iter().sum::<Tick>() as f64 / lt.len() as f64),
        p50: Some(nearest_rank(&lt, 50)),
        p90: Some(nearest_rank(&lt, 90)),
        p95: Some(nearest_rank(&lt, 95)),
        max: lt.last().copied(),
    }
}

pub fn carbon_footprint(
    trace: &SimTrace,
    snapshot: &GraphSnapshot,
    window: KpiWindow,
) -> Result<CarbonReport, CostError> {
    window.check(trace.horizon)?;
    let mut report = CarbonReport::default();
    for record in &trace.ticks[window.from as usize..window.to as usize] {
        for f in &record.flows {
            let per_unit = record.edges.get(&f.edge).map_or(0.0, |w| w.carbon_per_unit);
            let c = per_unit * f.quantity as f64;
            report.transport += c;
            *report.by_edge.entry(f.edge.clone()).or_default() += c;
        }
        for (id, n) in &record.nodes {
            if n.supplied == 0 {
                continue;
            }
            let intensity = snapshot.node(id).and_then(|x| x.attrs.carbon_intensity).unwrap_or(0.0);
            let c = intensity * n.supplied as f64;
            report.production += c;
            *report.by_node.entry(id.clone()).or_default() += c;
        }
    }
    report.total = report.transport + report.production;
    Ok(report)
}

fn utilization(trace: &SimTrace, snapshot: &GraphSnapshot, w: KpiWindow) -> Utilization {
    let mut edges: BTreeMap<&EdgeId, (Units, Units)> = BTreeMap::new();
    let mut nodes: BTreeMap<&NodeId, (Units, Units)> = BTreeMap::new();
    for record in &trace.ticks[w.from as usize..w.to as usize] {
        for (id, weights) in &record.edges {
            if snapshot.edge(id).is_some_and(|e| e.layer == crate::LayerKind::Material) {
                edges.entry(id).or_default().1 += weights.capacity;
            }
        }
        for f in &record.flows {
            edges.entry(&f.edge).or_default().0 += f.quantity;
        }
        for (id, n) in &record.nodes {
            if let Some(cap) = snapshot.node(id).and_then(|x| x.attrs.capacity) {
                let e = nodes.entry(id).or_default();
                e.0 += n.supplied;
                e.1 += cap;
            }
        }
    }
    let frac = |(used, cap): (Units, Units)| if cap == 0 { 0.0 } else { used as f64 / cap as f64 };
    Utilization {
        edges: edges.into_iter().map(|(k, v)| (k.clone(), frac(v))).collect(),
        nodes: nodes.into_iter().map(|(k, v)| (k.clone(), frac(v))).collect(),
    }
}

fn inventory_stats(trace: &SimTrace, snapshot: &GraphSnapshot, w: KpiWindow) -> BTreeMap<EntityKind, InventoryStats> {
    let mut acc: BTreeMap<EntityKind, (u128, usize, Units, Units)> = BTreeMap::new();
    for states in &trace.states[w.from as usize..w.to as usize] {
        for (id, x) in states {
            let Some(kind) = snapshot.node(id).map(|n| n.kind) else {
                continue;
            };
            let e = acc.entry(kind).or_insert((0, 0, Units::MAX, 0));
            e.0 += x.inventory as u128;
            e.1 += 1;
            e.2 = e.2.min(x.inventory);
            e.3 = e.3.max(x.inventory);
        }
    }
    acc.into_iter()
        .map(|(k, (sum, n, min, max))| {
            (
                k,
                InventoryStats {
                    mean: sum as f64 / n as f64,
                    min,
                    max,
                },
            )
        })
        .collect()
}

pub fn compute_kpis(
    trace: &SimTrace,
    snapshot: &GraphSnapshot,
    cost: &CostModel,
    window: KpiWindow,
) -> Result<KpiReport, CostError> {
    window.check(trace.horizon)?;
    let costs = evaluate_cost_window(trace, cost, window.from, window.to)?;
    let (mut demand, mut on_time, mut consumed, mut shipped, mut loss) = (0, 0, 0, 0, 0);
    for record in &trace.ticks[window.from as usize..window.to as usize] {
        for n in record.nodes.values() {
            demand += n.demand;
            on_time += n.on_time;
            consumed += n.consumed;
            shipped += n.shipped;
            loss += n.loss;
        }
    }
    let backlog = |t: Tick| -> Units { trace.states[t as usize].values().map(|s| s.backlog).sum() };
    let backlog_at_start = backlog(window.from);
    Ok(KpiReport {
        window,
        total_cost: costs.total,
        cost: costs.terms,
        demand,
        on_time,
        consumed,
        unmet: demand - on_time,
        backlog_at_start,
        backlog_at_end: backlog(window.to),
        shipped,
        loss,
        service_level: ratio(on_time, demand),
        fill_rate: ratio(consumed, demand + backlog_at_start),
        lead_time: lead_times(trace, window),
        inventory: inventory_stats(trace, snapshot, window),
        carbon: carbon_footprint(trace, snapshot, window)?,
        utilization: utilization(trace, snapshot, window),
    })
}

/// Reports over consecutive windows of `stride` ticks covering the trace.
/// The last window may be shorter.
pub fn kpi_series(
    trace: &SimTrace,
    snapshot: &GraphSnapshot,
    cost: &CostModel,
    stride: Tick,
) -> Result<Vec<KpiReport>, CostError> {
    let stride = stride.max(1);
    let mut out = Vec::new();
    let mut from = 0;
    while from < trace.horizon {
        let to = (from + stride).min(trace.horizon);
        out.push(compute_kpis(trace, snapshot, cost, KpiWindow::new(from, to))?);
        from = to;
    }
    Ok(out)
}

/// Patched minus base for the headline KPIs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct KpiDelta {
    pub total_cost: f64,
    pub service_level: f64,
    pub fill_rate: f64,
    pub demand: i64,
    pub unmet: i64,
    pub backlog_at_end: i64,
    pub shipped: i64,
    pub loss: i64,
    pub carbon_total: f64,
    pub mean_lead_time: Option<f64>,
    /// Per customer, change in demand not met on time.
    pub unmet_by_customer: BTreeMap<NodeId, i64>,
}

impl KpiDelta {
    pub fn between(base: &KpiReport, patched: &KpiReport) -> Self {
        let d = |a: Units, b: Units| b as i64 - a as i64;
        Self {
            total_cost: patched.total_cost - base.total_cost,
            service_level: patched.service_level - base.service_level,
            fill_rate: patched.fill_rate - base.fill_rate,
            demand: d(base.demand, patched.demand),
            unmet: d(base.unmet, patched.unmet),
            backlog_at_end: d(base.backlog_at_end, patched.backlog_at_end),
            shipped: d(base.shipped, patched.shipped),
            loss: d(base.loss, patched.loss),
            carbon_total: patched.carbon.total - base.carbon.total,
            mean_lead_time: match (base.lead_time.mean, patched.lead_time.mean) {
                (Some(a), Some(b)) => Some(b - a),
                _ => None,
            },
            unmet_by_customer: BTreeMap::new(),
        }
    }

    /// Adds the per-customer breakdown from the two traces.
    pub fn with_customers(mut self, base: &SimTrace, patched: &SimTrace) -> Self {
        self.unmet_by_customer = unmet_by_node(patched);
        for (id, v) in unmet_by_node(base) {
            *self.unmet_by_customer.entry(id).or_default() -= v;
        }
        self.unmet_by_customer.retain(|_, v| *v != 0);
        self
    }

    pub fn is_zero(&self) -> bool {
        *self
            == KpiDelta {
                mean_lead_time: self.mean_lead_time.map(|_| 0.0),
                ..KpiDelta::default()
            }
    }
}

fn unmet_by_node(trace: &SimTrace) -> BTreeMap<NodeId, i64> {
    let mut out = BTreeMap::new();
    for record in &trace.ticks {
        for (id, n) in &record.nodes {
            if n.demand > 0 {
                *out.entry(id.clone()).or_default() += (n.demand - n.on_time) as i64;
            }
        }
    }
    out
}
