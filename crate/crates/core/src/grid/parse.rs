//! Case-file ingestion.
//!
//! Two formats are accepted:
//!
//! * a subset of the MATPOWER `.m` case format. Only `baseMVA`, the bus table
//!   (`BUS_I`, `BUS_TYPE`, `PD`), the generator table (`GEN_BUS`, `PG`) and the
//!   branch table (`F_BUS`, `T_BUS`, `BR_X`, `BR_STATUS`) are read; every other
//!   column and field is ignored.
//! * a native JSON document
//!   `{"base_mva", "buses": [{"id", "pd", "type"?}], "gens": [{"bus", "pg"}],
//!   "branches": [{"from", "to", "x", "status"?}]}`.
//!
//! In both cases out-of-service branches are dropped and parallel branches
//! between the same pair of buses are merged into one line whose reactance is
//! the parallel combination `1 / Σ 1/x_i`. The reference bus is the first bus
//! of type 3, falling back to the first bus listed.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Line, Network};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CaseFormat {
    Matpower,
    Native,
}

impl CaseFormat {
    /// Guess from a file name: `.json` is native, everything else MATPOWER.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("json") => CaseFormat::Native,
            _ => CaseFormat::Matpower,
        }
    }
}

impl std::str::FromStr for CaseFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "matpower" | "m" => Ok(CaseFormat::Matpower),
            "native" | "json" => Ok(CaseFormat::Native),
            other => Err(format!("unknown case format '{other}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ParseOptions {
    /// Accept series-compensated branches with negative reactance. The
    /// susceptance matrix is then no longer positive semidefinite.
    pub allow_negative_reactance: bool,
}

pub fn parse_case(text: &str, format: CaseFormat) -> Result<Network> {
    parse_case_with(text, format, ParseOptions::default())
}

pub fn parse_case_with(text: &str, format: CaseFormat, opts: ParseOptions) -> Result<Network> {
    let raw = match format {
        CaseFormat::Matpower => read_matpower(text)?,
        CaseFormat::Native => read_native(text)?,
    };
    assemble(raw, opts)
}

struct RawBus {
    id: u64,
    bus_type: u32,
    pd: f64,
    line: usize,
}

struct RawGen {
    bus: u64,
    pg: f64,
    line: usize,
}

struct RawBranch {
    from: u64,
    to: u64,
    x: f64,
    in_service: bool,
    line: usize,
}

struct RawCase {
    base_mva: f64,
    buses: Vec<RawBus>,
    gens: Vec<RawGen>,
    branches: Vec<RawBranch>,
}

fn assemble(raw: RawCase, opts: ParseOptions) -> Result<Network> {
    if !(raw.base_mva.is_finite() && raw.base_mva > 0.0) {
        return Err(Error::Value(format!("baseMVA must be positive, got {}", raw.base_mva)));
    }
    if raw.buses.is_empty() {
        return Err(Error::parse(0, "no bus data"));
    }

    let mut index_of = HashMap::with_capacity(raw.buses.len());
    for (i, b) in raw.buses.iter().enumerate() {
        if index_of.insert(b.id, i).is_some() {
            return Err(Error::parse(b.line, format!("duplicate bus id {}", b.id)));
        }
    }
    let lookup = |id: u64, line: usize, what: &str| {
        index_of
            .get(&id)
            .copied()
            .ok_or_else(|| Error::parse(line, format!("{what} references nonexistent bus {id}")))
    };

    let mut generation = vec![0.0; raw.buses.len()];
    for g in &raw.gens {
        generation[lookup(g.bus, g.line, "generator")?] += g.pg;
    }
    let injections: Vec<f64> = raw
        .buses
        .iter()
        .zip(&generation)
        .map(|(b, pg)| (pg - b.pd) / raw.base_mva)
        .collect();

    // Parallel branches accumulate admittance on the first occurrence's slot.
    let mut slot_of: HashMap<(usize, usize), usize> = HashMap::new();
    let mut merged: Vec<(usize, usize, f64, usize)> = Vec::new();
    for br in &raw.branches {
        let from = lookup(br.from, br.line, "branch")?;
        let to = lookup(br.to, br.line, "branch")?;
        if !br.in_service {
            continue;
        }
        if from == to {
            return Err(Error::parse(br.line, format!("branch {} - {} is a self-loop", br.from, br.to)));
        }
        if !br.x.is_finite() || br.x == 0.0 || (br.x < 0.0 && !opts.allow_negative_reactance) {
            return Err(Error::Value(format!(
                "branch {} - {} (line {}) has nonpositive reactance {}",
                br.from, br.to, br.line, br.x
            )));
        }
        let key = (from.min(to), from.max(to));
        match slot_of.get(&key) {
            Some(&slot) => merged[slot].2 += 1.0 / br.x,
            None => {
                slot_of.insert(key, merged.len());
                merged.push((from, to, 1.0 / br.x, br.line));
            }
        }
    }
    let lines = merged
        .into_iter()
        .map(|(from, to, admittance, line)| {
            if admittance == 0.0 {
                return Err(Error::Value(format!(
                    "parallel branches starting at line {line} cancel to infinite reactance"
                )));
            }
            Ok(Line {
                from,
                to,
                reactance: 1.0 / admittance,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let slack = raw.buses.iter().position(|b| b.bus_type == 3).unwrap_or(0);
    let bus_ids = raw.buses.iter().map(|b| b.id).collect();
    Network::new(bus_ids, lines, injections, slack, opts.allow_negative_reactance)
}

// ---------------------------------------------------------------------------
// MATPOWER subset

#[derive(Clone, Copy)]
enum Block {
    Bus,
    Gen,
    Branch,
    Skip(char),
}

struct Row {
    values: Vec<f64>,
    line: usize,
}

fn read_matpower(text: &str) -> Result<RawCase> {
    let mut base_mva = None;
    let mut tables: HashMap<&'static str, Vec<Row>> = HashMap::new();
    let mut block: Option<Block> = None;
    let mut row: Vec<f64> = Vec::new();
    let mut row_line = 0;

    for (idx, full) in text.lines().enumerate() {
        let lineno = idx + 1;
        let mut rest = strip_comment(full);

        if block.is_none() {
            let trimmed = rest.trim_start();
            let Some(assign) = trimmed.strip_prefix("mpc.") else {
                continue;
            };
            let Some((name, rhs)) = assign.split_once('=') else {
                continue;
            };
            let name = name.trim();
            let rhs = rhs.trim_start();
            if let Some(body) = rhs.strip_prefix('[') {
                block = Some(match name {
                    "bus" => Block::Bus,
                    "gen" => Block::Gen,
                    "branch" => Block::Branch,
                    _ => Block::Skip(']'),
                });
                rest = body;
            } else if let Some(body) = rhs.strip_prefix('{') {
                block = Some(Block::Skip('}'));
                rest = body;
            } else {
                if name == "baseMVA" {
                    let value = rhs.trim_end().trim_end_matches(';').trim();
                    base_mva = Some(value.parse::<f64>().map_err(|_| {
                        Error::parse(lineno, format!("invalid baseMVA '{value}'"))
                    })?);
                }
                continue;
            }
        }

        let Some(current) = block else { continue };
        if let Block::Skip(close) = current {
            if rest.contains(close) {
                block = None;
            }
            continue;
        }

        let key = match current {
            Block::Bus => "bus",
            Block::Gen => "gen",
            Block::Branch => "branch",
            Block::Skip(_) => unreachable!(),
        };
        let mut closed = false;
        let mut chars = rest.char_indices().peekable();
        let mut token_start: Option<usize> = None;
        let flush_token = |start: &mut Option<usize>, end: usize, row: &mut Vec<f64>, row_line: &mut usize| -> Result<()> {
            if let Some(s) = start.take() {
                let tok = &rest[s..end];
                let v = tok
                    .parse::<f64>()
                    .map_err(|_| Error::parse(lineno, format!("invalid number '{tok}' in {key} table")))?;
                if row.is_empty() {
                    *row_line = lineno;
                }
                row.push(v);
            }
            Ok(())
        };
        while let Some((i, c)) = chars.next() {
            match c {
                ' ' | '\t' | ',' | '\r' => flush_token(&mut token_start, i, &mut row, &mut row_line)?,
                ';' => {
                    flush_token(&mut token_start, i, &mut row, &mut row_line)?;
                    end_row(&mut tables, key, &mut row, row_line);
                }
                ']' => {
                    flush_token(&mut token_start, i, &mut row, &mut row_line)?;
                    end_row(&mut tables, key, &mut row, row_line);
                    closed = true;
                    break;
                }
                '.' if rest[i..].starts_with("...") => {
                    // continuation: the row carries on to the next line
                    flush_token(&mut token_start, i, &mut row, &mut row_line)?;
                    break;
                }
                _ => {
                    if token_start.is_none() {
                        token_start = Some(i);
                    }
                }
            }
        }
        if !closed {
            flush_token(&mut token_start, rest.len(), &mut row, &mut row_line)?;
            if !rest.contains("...") {
                end_row(&mut tables, key, &mut row, row_line);
            }
        } else {
            block = None;
        }
    }
    if block.is_some() {
        return Err(Error::parse(text.lines().count(), "unterminated matrix"));
    }

    let base_mva = base_mva.ok_or_else(|| Error::parse(0, "missing mpc.baseMVA"))?;
    let take = |tables: &mut HashMap<&'static str, Vec<Row>>, key: &str| tables.remove(key).unwrap_or_default();

    let buses = take(&mut tables, "bus")
        .into_iter()
        .map(|r| {
            need_columns(&r, 3, "bus")?;
            Ok(RawBus {
                id: bus_id(r.values[0], r.line)?,
                bus_type: r.values[1] as u32,
                pd: r.values[2],
                line: r.line,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let gens = take(&mut tables, "gen")
        .into_iter()
        .map(|r| {
            need_columns(&r, 2, "gen")?;
            Ok(RawGen {
                bus: bus_id(r.values[0], r.line)?,
                pg: r.values[1],
                line: r.line,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let branches = take(&mut tables, "branch")
        .into_iter()
        .map(|r| {
            need_columns(&r, 4, "branch")?;
            Ok(RawBranch {
                from: bus_id(r.values[0], r.line)?,
                to: bus_id(r.values[1], r.line)?,
                x: r.values[3],
                in_service: r.values.get(10).is_none_or(|&s| s != 0.0),
                line: r.line,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RawCase {
        base_mva,
        buses,
        gens,
        branches,
    })
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn end_row(tables: &mut HashMap<&'static str, Vec<Row>>, key: &'static str, row: &mut Vec<f64>, line: usize) {
    if !row.is_empty() {
        tables.entry(key).or_default().push(Row {
            values: std::mem::take(row),
            line,
        });
    }
}

fn need_columns(r: &Row, n: usize, table: &str) -> Result<()> {
    if r.values.len() < n {
        return Err(Error::parse(
            r.line,
            format!("{table} row has {} columns, need at least {n}", r.values.len()),
        ));
    }
    Ok(())
}

fn bus_id(v: f64, line: usize) -> Result<u64> {
    if v >= 1.0 && v.fract() == 0.0 && v < u64::MAX as f64 {
        Ok(v as u64)
    } else {
        Err(Error::parse(line, format!("invalid bus number {v}")))
    }
}

// ---------------------------------------------------------------------------
// Native JSON

#[derive(Serialize, Deserialize)]
struct NativeCase {
    base_mva: f64,
    buses: Vec<NativeBus>,
    #[serde(default)]
    gens: Vec<NativeGen>,
    branches: Vec<NativeBranch>,
}

#[derive(Serialize, Deserialize)]
struct NativeBus {
    id: u64,
    #[serde(default)]
    pd: f64,
    #[serde(default, rename = "type", skip_serializing_if = "Option::is_none")]
    bus_type: Option<u32>,
}

#[derive(Serialize, Deserialize)]
struct NativeGen {
    bus: u64,
    pg: f64,
}

#[derive(Serialize, Deserialize)]
struct NativeBranch {
    from: u64,
    to: u64,
    x: f64,
    #[serde(default = "in_service")]
    status: u8,
}

fn in_service() -> u8 {
    1
}

fn read_native(text: &str) -> Result<RawCase> {
    let case: NativeCase =
        serde_json::from_str(text).map_err(|e| Error::parse(e.line(), e.to_string()))?;
    // JSON entries have no reliable source line; report the entry position instead.
    Ok(RawCase {
        base_mva: case.base_mva,
        buses: case
            .buses
            .into_iter()
            .enumerate()
            .map(|(i, b)| RawBus {
                id: b.id,
                bus_type: b.bus_type.unwrap_or(1),
                pd: b.pd,
                line: i + 1,
            })
            .collect(),
        gens: case
            .gens
            .into_iter()
            .enumerate()
            .map(|(i, g)| RawGen {
                bus: g.bus,
                pg: g.pg,
                line: i + 1,
            })
            .collect(),
        branches: case
            .branches
            .into_iter()
            .enumerate()
            .map(|(i, b)| RawBranch {
                from: b.from,
                to: b.to,
                x: b.x,
                in_service: b.status != 0,
                line: i + 1,
            })
            .collect(),
    })
}

/// Serializes a network in the native format. Injections are written as
/// negative loads on a unit MVA base, so reparsing reproduces them exactly.
pub fn to_native_json(net: &Network) -> String {
    let case = NativeCase {
        base_mva: 1.0,
        buses: net
            .bus_ids()
            .iter()
            .zip(net.injections())
            .enumerate()
            .map(|(i, (&id, &p))| NativeBus {
                id,
                pd: -p,
                bus_type: (i == net.slack()).then_some(3),
            })
            .collect(),
        gens: Vec::new(),
        branches: net
            .lines()
            .iter()
            .map(|l| NativeBranch {
                from: net.bus_id(l.from),
                to: net.bus_id(l.to),
                x: l.reactance,
                status: 1,
            })
            .collect(),
    };
    serde_json::to_string_pretty(&case).expect("native case serializes")
}
