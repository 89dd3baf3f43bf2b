//! Experiment plumbing: instance generators, sweep configuration, resumable
//! sweeps and CSV/JSON result tables.

use std::collections::{HashMap, HashSet};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coverage::{
    binomial, brute_force_opt, greedy_cover, random_system, Cover, CoverageOracle, SetSystem,
    DEFAULT_ENUM_BUDGET,
};
use crate::error::{Error, Result};
use crate::isgreedy::{is_greedy, isgreedy_with_guess};
use crate::lowerbound::{sample_hard_instance, Provenance};
use crate::rng::{self, splitmix64};
use crate::sim::{partition, run_protocol, PartitionMode, PartitionedInstance, RunOptions, SendAll, Transcript};
use crate::spgreedy::{
    sp_greedy, sp_greedy_auto, sp_greedy_lowcomm, sp_greedy_lowcomm_auto, SpGreedyParams,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum InstanceKind {
    RandomUniform { n: usize, m: usize, density: f64 },
    /// `k` disjoint planted blocks plus decoys drawn inside their union.
    PlantedCover { n: usize, m: usize, k: usize, block: usize },
    Hard { base: usize, width_exp: usize, rounds: usize },
}

#[derive(Clone, Debug)]
pub struct GeneratedInstance {
    pub system: SetSystem,
    pub k: usize,
    /// Known optimum, when the generator provides one.
    pub certificate: Option<Cover>,
    pub owner: Option<Vec<usize>>,
    pub players: Option<usize>,
    pub provenance: Option<Provenance>,
}

impl GeneratedInstance {
    pub fn instance_text(&self) -> String {
        self.system.to_instance_string(self.k)
    }
}

pub fn gen_instance(kind: &InstanceKind, k: usize, seed: u64) -> Result<GeneratedInstance> {
    match *kind {
        InstanceKind::RandomUniform { n, m, density } => {
            if !(0.0..=1.0).contains(&density) {
                return Err(Error::input(format!("density {density} outside [0,1]")));
            }
            Ok(GeneratedInstance {
                system: random_system(n, m, density, seed),
                k,
                certificate: None,
                owner: None,
                players: None,
                provenance: None,
            })
        }
        InstanceKind::PlantedCover { n, m, k: planted, block } => {
            if planted == 0 || block == 0 || planted * block > n || m < planted {
                return Err(Error::input(format!(
                    "planted cover needs 1 <= k <= m and k·block <= n (k={planted}, block={block}, n={n}, m={m})"
                )));
            }
            let mut r = rng::rng(seed, &[0x91a]);
            let mut elems: Vec<usize> = (0..n).collect();
            elems.shuffle(&mut r);
            let pool = &elems[..planted * block];
            let mut slots: Vec<usize> = (0..m).collect();
            slots.shuffle(&mut r);
            let mut planted_at: Vec<usize> = slots[..planted].to_vec();
            let mut sets = vec![Vec::new(); m];
            for (b, &slot) in planted_at.iter().enumerate() {
                sets[slot] = pool[b * block..(b + 1) * block].to_vec();
            }
            for &slot in &slots[planted..] {
                let size = r.gen_range(1..=block);
                sets[slot] = pool.choose_multiple(&mut r, size).copied().collect();
            }
            for s in &mut sets {
                s.sort_unstable();
            }
            let system = SetSystem::new(n, sets)?;
            planted_at.sort_unstable();
            let certificate = Cover::new(&system, planted_at)?;
            Ok(GeneratedInstance {
                system,
                k: planted,
                certificate: Some(certificate),
                owner: None,
                players: None,
                provenance: None,
            })
        }
        InstanceKind::Hard { base, width_exp, rounds } => {
            let h = sample_hard_instance(base, width_exp, rounds, seed)?;
            let cert = if h.label == crate::lowerbound::Label::Yes {
                Some(Cover::new(h.system(), h.provenance.certificate.clone())?)
            } else {
                None
            };
            Ok(GeneratedInstance {
                system: h.system().clone(),
                k: h.k,
                certificate: cert,
                owner: Some(h.instance.owner().to_vec()),
                players: Some(h.instance.p()),
                provenance: Some(h.provenance),
            })
        }
    }
}

// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    SpGreedy,
    SpGreedyLowcomm,
    IsGreedy,
    SendAll,
    Greedy,
}

impl ProtocolKind {
    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::SpGreedy => "sp-greedy",
            ProtocolKind::SpGreedyLowcomm => "sp-greedy-lowcomm",
            ProtocolKind::IsGreedy => "is-greedy",
            ProtocolKind::SendAll => "send-all",
            ProtocolKind::Greedy => "greedy",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PartitionKind {
    Rr,
    Random,
    Adv,
}

impl PartitionKind {
    pub fn mode(self, seed: u64) -> PartitionMode {
        match self {
            PartitionKind::Rr => PartitionMode::RoundRobin,
            PartitionKind::Random => PartitionMode::Random(rng::derive(seed, &[0xa7])),
            PartitionKind::Adv => PartitionMode::AdversarialSingle,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            PartitionKind::Rr => "rr",
            PartitionKind::Random => "random",
            PartitionKind::Adv => "adv",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Source {
    RandomUniform { density: f64 },
    PlantedCover { block: usize },
    /// Instance file in the text format; the n and m axes are ignored.
    File { path: String },
    /// Hard instances; k, n, m and the partition come from the instance.
    Hard { base: usize, width_exp: usize, rounds: usize },
}

fn default_budget() -> u128 {
    DEFAULT_ENUM_BUDGET
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: ProtocolKind,
    pub source: Source,
    #[serde(default)]
    pub n: Vec<usize>,
    #[serde(default)]
    pub m: Vec<usize>,
    pub k: Vec<usize>,
    pub rounds: Vec<usize>,
    pub eps: Vec<f64>,
    pub p: Vec<usize>,
    pub partition: Vec<PartitionKind>,
    pub seeds: Vec<u64>,
    /// Fixed opt guess; absent means sweep guesses.
    #[serde(default)]
    pub opt_guess: Option<f64>,
    #[serde(default = "default_budget")]
    pub budget: u128,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let generated = matches!(self.source, Source::RandomUniform { .. } | Source::PlantedCover { .. });
        let axes = [
            ("k", self.k.len()),
            ("rounds", self.rounds.len()),
            ("eps", self.eps.len()),
            ("p", self.p.len()),
            ("partition", self.partition.len()),
            ("seeds", self.seeds.len()),
        ];
        for (name, len) in axes {
            if len == 0 {
                return Err(Error::input(format!("grid axis {name} is empty")));
            }
        }
        if generated && (self.n.is_empty() || self.m.is_empty()) {
            return Err(Error::input("generated sources need non-empty n and m axes"));
        }
        let distinct: HashSet<u64> = self.seeds.iter().copied().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::input("seeds must be distinct"));
        }
        Ok(())
    }

    /// All cells in grid order; seeds vary fastest.
    pub fn cells(&self) -> Vec<Cell> {
        let ns: Vec<usize> = if self.n.is_empty() { vec![0] } else { self.n.clone() };
        let ms: Vec<usize> = if self.m.is_empty() { vec![0] } else { self.m.clone() };
        let mut out = Vec::new();
        for &n in &ns {
            for &m in &ms {
                for &k in &self.k {
                    for &rounds in &self.rounds {
                        for &eps in &self.eps {
                            for &p in &self.p {
                                for &part in &self.partition {
                                    for &seed in &self.seeds {
                                        out.push(Cell {
                                            protocol: self.protocol,
                                            n,
                                            m,
                                            k,
                                            rounds,
                                            eps,
                                            p,
                                            partition: part,
                                            seed,
                                        });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub protocol: ProtocolKind,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub rounds: usize,
    pub eps: f64,
    pub p: usize,
    pub partition: PartitionKind,
    pub seed: u64,
}

impl Cell {
    /// Stable key from the coordinates and the source.
    pub fn key(&self, source: &Source, opt_guess: Option<f64>) -> String {
        let text = serde_json::to_string(&(self, source, opt_guess)).expect("serializable");
        let h = text
            .bytes()
            .fold(splitmix64(text.len() as u64), |h, b| splitmix64(h ^ u64::from(b)));
        format!("{h:016x}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub key: String,
    pub protocol: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub rounds: usize,
    pub eps: f64,
    pub p: usize,
    pub partition: String,
    pub seed: u64,
    pub value: usize,
    pub reference: usize,
    pub reference_exact: bool,
    pub ratio: f64,
    pub rounds_used: usize,
    pub total_items: u64,
    pub total_bits: u64,
    pub max_machine_items: u64,
    pub max_machine_bits: u64,
    pub wall_ms: f64,
    pub error: Option<String>,
}

impl ResultRow {
    /// Equality ignoring wall time.
    pub fn same_result(&self, other: &ResultRow) -> bool {
        let mut a = self.clone();
        a.wall_ms = other.wall_ms;
        &a == other
    }
}

fn load_cell_system(source: &Source, cell: &Cell) -> Result<(PartitionedInstance, usize)> {
    let part = |sys: SetSystem| partition(sys, cell.p, cell.partition.mode(cell.seed));
    match source {
        Source::RandomUniform { density } => {
            let g = gen_instance(
                &InstanceKind::RandomUniform {
                    n: cell.n,
                    m: cell.m,
                    density: *density,
                },
                cell.k,
                cell.seed,
            )?;
            Ok((part(g.system)?, cell.k))
        }
        Source::PlantedCover { block } => {
            let g = gen_instance(
                &InstanceKind::PlantedCover {
                    n: cell.n,
                    m: cell.m,
                    k: cell.k,
                    block: *block,
                },
                cell.k,
                cell.seed,
            )?;
            Ok((part(g.system)?, cell.k))
        }
        Source::File { path } => {
            let text = std::fs::read_to_string(path)?;
            let (sys, _) = SetSystem::parse_instance(&text)?;
            Ok((part(sys)?, cell.k))
        }
        Source::Hard {
            base,
            width_exp,
            rounds,
        } => {
            let h = sample_hard_instance(*base, *width_exp, *rounds, cell.seed)?;
            Ok((h.instance, h.k))
        }
    }
}

fn run_cell_protocol(
    inst: &PartitionedInstance,
    cell: &Cell,
    k: usize,
    opt_guess: Option<f64>,
) -> Result<(Cover, Transcript)> {
    let sys = inst.system();
    let params = SpGreedyParams {
        k,
        eps: cell.eps,
        rounds: cell.rounds,
        opt_guess,
    };
    match cell.protocol {
        ProtocolKind::SpGreedy => {
            let oracle = CoverageOracle::new(sys);
            let (run, t) = match opt_guess {
                Some(_) => {
                    let run = sp_greedy(inst, &oracle, &params, cell.seed)?;
                    let t = run.transcript.clone();
                    (run, t)
                }
                None => sp_greedy_auto(inst, &oracle, &params, cell.seed)?,
            };
            Ok((Cover::new(sys, run.solution.items)?, t))
        }
        ProtocolKind::SpGreedyLowcomm => {
            let (run, t) = match opt_guess {
                Some(_) => {
                    let run = sp_greedy_lowcomm(inst, &params, cell.seed)?;
                    let t = run.transcript.clone();
                    (run, t)
                }
                None => sp_greedy_lowcomm_auto(inst, &params, cell.seed)?,
            };
            Ok((run.cover, t))
        }
        ProtocolKind::IsGreedy => {
            let (run, t) = match opt_guess {
                Some(g) => {
                    let run = is_greedy(inst, k, cell.rounds, g, cell.seed)?;
                    let t = run.transcript.clone();
                    (run, t)
                }
                None => isgreedy_with_guess(inst, k, cell.rounds, cell.seed)?,
            };
            run.check_invariants()?;
            Ok((run.cover, t))
        }
        ProtocolKind::SendAll => {
            let mut proto = SendAll { system: sys, k };
            let (cover, t) = run_protocol(inst, &mut proto, cell.seed, RunOptions::default())?;
            Ok((cover, t))
        }
        ProtocolKind::Greedy => {
            let idx = greedy_cover(&CoverageOracle::new(sys), k);
            Ok((Cover::new(sys, idx)?, Transcript::new(inst.p(), false)))
        }
    }
}

/// Brute force when `C(m,k)` fits the budget, otherwise greedy.
pub fn reference_value(system: &SetSystem, k: usize, budget: u128) -> Result<(usize, bool)> {
    if binomial(system.m(), k.min(system.m())) <= budget {
        Ok((brute_force_opt(system, k, budget)?.value, true))
    } else {
        let idx = greedy_cover(&CoverageOracle::new(system), k);
        Ok((system.union_of(&idx).count(), false))
    }
}

fn blank_row(config: &ExperimentConfig, cell: &Cell) -> ResultRow {
    ResultRow {
        key: cell.key(&config.source, config.opt_guess),
        protocol: cell.protocol.name().to_string(),
        n: cell.n,
        m: cell.m,
        k: cell.k,
        rounds: cell.rounds,
        eps: cell.eps,
        p: cell.p,
        partition: cell.partition.name().to_string(),
        seed: cell.seed,
        value: 0,
        reference: 0,
        reference_exact: false,
        ratio: 0.0,
        rounds_used: 0,
        total_items: 0,
        total_bits: 0,
        max_machine_items: 0,
        max_machine_bits: 0,
        wall_ms: 0.0,
        error: None,
    }
}

fn fill_row(config: &ExperimentConfig, cell: &Cell, row: &mut ResultRow) -> Result<()> {
    let (inst, k) = load_cell_system(&config.source, cell)?;
    row.n = inst.system().n();
    row.m = inst.system().m();
    row.k = k;
    row.p = inst.p();
    let (cover, t) = run_cell_protocol(&inst, cell, k, config.opt_guess)?;
    cover.validate(inst.system())?;
    let (reference, exact) = reference_value(inst.system(), k, config.budget)?;
    row.value = cover.value;
    row.reference = reference;
    row.reference_exact = exact;
    row.ratio = if reference == 0 { 1.0 } else { cover.value as f64 / reference as f64 };
    if exact && row.ratio > 1.0 {
        return Err(Error::PropertyViolation(format!(
            "value {} above exact optimum {reference}",
            cover.value
        )));
    }
    row.rounds_used = t.rounds_used;
    row.total_items = t.total_items;
    row.total_bits = t.total_bits;
    row.max_machine_items = t.per_machine_items.iter().copied().max().unwrap_or(0);
    row.max_machine_bits = t.per_machine_bits.iter().copied().max().unwrap_or(0);
    Ok(())
}

/// Runs one cell; failures are recorded in the row's error column.
pub fn run_cell(config: &ExperimentConfig, cell: &Cell) -> ResultRow {
    let start = Instant::now();
    let mut row = blank_row(config, cell);
    if let Err(e) = fill_row(config, cell, &mut row) {
        row.error = Some(e.to_string());
    }
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    row
}

/// Like [`run_cell`] but returns the failure instead of recording it.
pub fn try_run_cell(config: &ExperimentConfig, cell: &Cell) -> Result<ResultRow> {
    let start = Instant::now();
    let mut row = blank_row(config, cell);
    fill_row(config, cell, &mut row)?;
    row.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(row)
}

/// Runs every cell not already present in `done` (matched by key) and
/// returns the full table in grid order. `sink` sees each new row as it
/// completes; `limit` stops after that many new cells.
pub fn run_sweep(
    config: &ExperimentConfig,
    done: Vec<ResultRow>,
    limit: Option<usize>,
    sink: impl FnMut(&ResultRow) + Send,
) -> Result<Vec<ResultRow>> {
    config.validate()?;
    let cells = config.cells();
    let mut have: HashMap<String, ResultRow> = done.into_iter().map(|r| (r.key.clone(), r)).collect();
    let mut todo: Vec<(String, Cell)> = cells
        .iter()
        .map(|c| (c.key(&config.source, config.opt_guess), *c))
        .filter(|(k, _)| !have.contains_key(k))
        .collect();
    if let Some(l) = limit {
        todo.truncate(l);
    }
    let sink = Mutex::new(sink);
    let fresh: Vec<ResultRow> = todo
        .par_iter()
        .map(|(_, c)| {
            let row = run_cell(config, c);
            (sink.lock().unwrap())(&row);
            row
        })
        .collect();
    for r in fresh {
        have.insert(r.key.clone(), r);
    }
    Ok(cells
        .iter()
        .filter_map(|c| have.remove(&c.key(&config.source, config.opt_guess)))
        .collect())
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct JsonGroup {
    cell: serde_json::Value,
    rows: Vec<ResultRow>,
}

/// JSON grouped by grid coordinates (everything except the seed).
pub fn rows_to_json(rows: &[ResultRow]) -> Result<String> {
    let mut groups: Vec<JsonGroup> = Vec::new();
    for r in rows {
        let coords = serde_json::json!({
            "protocol": r.protocol, "n": r.n, "m": r.m, "k": r.k, "rounds": r.rounds,
            "eps": r.eps, "p": r.p, "partition": r.partition,
        });
        match groups.last_mut() {
            Some(g) if g.cell == coords => g.rows.push(r.clone()),
            _ => groups.push(JsonGroup {
                cell: coords,
                rows: vec![r.clone()],
            }),
        }
    }
    Ok(serde_json::to_string_pretty(&groups)?)
}

pub fn rows_from_json(text: &str) -> Result<Vec<ResultRow>> {
    let groups: Vec<JsonGroup> = serde_json::from_str(text)?;
    Ok(groups.into_iter().flat_map(|g| g.rows).collect())
}

/// Median of `values` (mean of the two middle values for even length).
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
