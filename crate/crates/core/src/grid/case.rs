//! Reader and writer for MATPOWER-style case files.
//!
//! Recognized statements: `mpc.baseMVA = <number>;` and the matrices
//! `mpc.bus`, `mpc.gen`, `mpc.branch`, `mpc.gencost`. Other matrices are
//! parsed and ignored. Column order follows MATPOWER version 2:
//!
//! | table    | columns used                                                        |
//! |----------|---------------------------------------------------------------------|
//! | bus      | bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin             |
//! | gen      | bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin                       |
//! | branch   | fbus tbus r x b rateA rateB rateC ratio angle status                |
//! | gencost  | model startup shutdown n c(n-1) ... c0   (model 2, n ≤ 3 only)      |

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{Branch, Bus, BusType, CostCurve, Generator, Network};
use crate::error::{Error, Result};

struct Row {
    line: usize,
    vals: Vec<f64>,
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

/// Parse a case file into a validated [`Network`]. Buses are renumbered to
/// `0..N_B` in file order.
pub fn parse_case(text: &str) -> Result<Network> {
    let mut base_mva: Option<f64> = None;
    let mut name = String::from("case");
    let mut tables: HashMap<String, Vec<Row>> = HashMap::new();
    let mut open: Option<(String, usize)> = None;
    let mut ncols: HashMap<String, usize> = HashMap::new();

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('%').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut body = line;
        if open.is_none() {
            if let Some(rest) = line.strip_prefix("function") {
                if let Some(n) = rest.split('=').nth(1) {
                    name = n.trim().trim_end_matches(';').to_string();
                }
                continue;
            }
            let Some(stmt) = line.strip_prefix("mpc.") else {
                continue;
            };
            let Some((lhs, rhs)) = stmt.split_once('=') else {
                return Err(perr(
                    line_no,
                    format!("expected assignment, found `{line}`"),
                ));
            };
            let lhs = lhs.trim();
            let rhs = rhs.trim();
            if let Some(after) = rhs.strip_prefix('[') {
                open = Some((lhs.to_string(), line_no));
                tables.insert(lhs.to_string(), Vec::new());
                body = after;
            } else {
                if lhs == "baseMVA" {
                    let v = rhs.trim_end_matches(';').trim();
                    base_mva = Some(
                        v.parse()
                            .map_err(|_| perr(line_no, format!("bad baseMVA `{v}`")))?,
                    );
                }
                continue;
            }
        }
        let (table, _) = open.clone().expect("inside a matrix");
        let (content, closes) = match body.find(']') {
            Some(pos) => (&body[..pos], true),
            None => (body, false),
        };
        for chunk in content.split(';') {
            let tokens: Vec<&str> = chunk
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .collect();
            if tokens.is_empty() {
                continue;
            }
            let vals = tokens
                .iter()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| {
                        perr(line_no, format!("non-numeric entry `{t}` in mpc.{table}"))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let expected = *ncols.entry(table.clone()).or_insert(vals.len());
            if vals.len() != expected {
                return Err(perr(
                    line_no,
                    format!(
                        "mpc.{table} row has {} columns, previous rows have {expected}",
                        vals.len()
                    ),
                ));
            }
            tables.get_mut(&table).expect("table registered").push(Row {
                line: line_no,
                vals,
            });
        }
        if closes {
            open = None;
        }
    }
    if let Some((table, start)) = open {
        return Err(perr(start, format!("mpc.{table} is never closed with `]`")));
    }

    let end = text.lines().count();
    let take = |key: &str| {
        tables
            .get(key)
            .filter(|rows| !rows.is_empty())
            .ok_or_else(|| perr(end, format!("missing mpc.{key} table")))
    };
    let bus_rows = take("bus")?;
    let gen_rows = take("gen")?;
    let branch_rows = tables
        .get("branch")
        .ok_or_else(|| perr(end, "missing mpc.branch table"))?;
    let cost_rows = take("gencost")?;
    let base_mva = base_mva.ok_or_else(|| perr(end, "missing mpc.baseMVA"))?;

    let need = |rows: &[Row], n: usize, key: &str| -> Result<()> {
        match rows.iter().find(|r| r.vals.len() < n) {
            Some(r) => Err(perr(
                r.line,
                format!(
                    "mpc.{key} needs at least {n} columns, found {}",
                    r.vals.len()
                ),
            )),
            None => Ok(()),
        }
    };
    need(bus_rows, 13, "bus")?;
    need(gen_rows, 10, "gen")?;
    need(branch_rows, 11, "branch")?;
    need(cost_rows, 4, "gencost")?;

    let mut index = HashMap::new();
    let mut buses = Vec::with_capacity(bus_rows.len());
    for (i, row) in bus_rows.iter().enumerate() {
        let v = &row.vals;
        let ext_id = as_id(v[0], row.line)?;
        if index.insert(ext_id, i).is_some() {
            return Err(perr(row.line, format!("duplicate bus number {ext_id}")));
        }
        let kind = match v[1] as i64 {
            1 => BusType::Pq,
            2 => BusType::Pv,
            3 => BusType::Slack,
            4 => return Err(perr(row.line, "isolated buses (type 4) are not supported")),
            t => return Err(perr(row.line, format!("unknown bus type {t}"))),
        };
        buses.push(Bus {
            id: i,
            ext_id,
            kind,
            pd: v[2],
            qd: v[3],
            gs: v[4],
            bs: v[5],
            v_max: v[11],
            v_min: v[12],
        });
    }
    let lookup = |x: f64, line: usize| -> Result<usize> {
        let id = as_id(x, line)?;
        index
            .get(&id)
            .copied()
            .ok_or_else(|| perr(line, format!("unknown bus number {id}")))
    };

    let mut branches = Vec::with_capacity(branch_rows.len());
    for row in branch_rows {
        let v = &row.vals;
        let tap = if v[8] == 0.0 { 1.0 } else { v[8] };
        branches.push(Branch {
            from: lookup(v[0], row.line)?,
            to: lookup(v[1], row.line)?,
            r: v[2],
            x: v[3],
            b: v[4],
            tap,
            shift: v[9].to_radians(),
            in_service: v[10] > 0.0,
        });
    }

    let ngen = gen_rows.len();
    if cost_rows.len() != ngen && cost_rows.len() != 2 * ngen {
        return Err(perr(
            cost_rows[0].line,
            format!(
                "mpc.gencost has {} rows for {ngen} generators",
                cost_rows.len()
            ),
        ));
    }
    let mut generators = Vec::with_capacity(ngen);
    for (row, cost_row) in gen_rows.iter().zip(cost_rows) {
        let v = &row.vals;
        generators.push(Generator {
            bus: lookup(v[0], row.line)?,
            q_max: v[3],
            q_min: v[4],
            in_service: v[7] > 0.0,
            p_max: v[8],
            p_min: v[9],
            cost: parse_cost(cost_row)?,
        });
    }

    Network::new(name, base_mva, buses, branches, generators)
}

fn as_id(x: f64, line: usize) -> Result<usize> {
    if x >= 0.0 && x.fract() == 0.0 && x.is_finite() {
        Ok(x as usize)
    } else {
        Err(perr(
            line,
            format!("bus number {x} is not a nonnegative integer"),
        ))
    }
}

fn parse_cost(row: &Row) -> Result<CostCurve> {
    let v = &row.vals;
    match v[0] as i64 {
        2 => {}
        1 => {
            return Err(perr(
                row.line,
                "piecewise-linear costs are not supported; use polynomial (model 2)",
            ))
        }
        m => return Err(perr(row.line, format!("unknown cost model {m}"))),
    }
    let n = as_id(v[3], row.line)?;
    if n > 3 {
        return Err(perr(
            row.line,
            format!("polynomial cost of degree {} exceeds 2", n - 1),
        ));
    }
    if v.len() < 4 + n {
        return Err(perr(
            row.line,
            format!("cost row declares {n} coefficients but has {}", v.len() - 4),
        ));
    }
    // coefficients are listed highest order first
    let mut c = [0.0; 3];
    for (k, &coef) in v[4..4 + n].iter().enumerate() {
        c[3 - n + k] = coef;
    }
    Ok(CostCurve {
        c2: c[0],
        c1: c[1],
        c0: c[2],
    })
}

/// Render a network in the case format read by [`parse_case`].
pub fn write_case(net: &Network) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "function mpc = {}", net.name);
    let _ = writeln!(s, "mpc.version = '2';");
    let _ = writeln!(s, "mpc.baseMVA = {};", net.base_mva);
    let _ = writeln!(s, "\n%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [");
    for b in &net.buses {
        let t = match b.kind {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Slack => 3,
        };
        let _ = writeln!(
            s,
            "\t{}\t{t}\t{}\t{}\t{}\t{}\t1\t1\t0\t135\t1\t{}\t{};",
            b.ext_id, b.pd, b.qd, b.gs, b.bs, b.v_max, b.v_min
        );
    }
    let _ = writeln!(s, "];\n\n%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [");
    for g in &net.generators {
        let _ = writeln!(
            s,
            "\t{}\t0\t0\t{}\t{}\t1\t{}\t{}\t{}\t{};",
            net.buses[g.bus].ext_id,
            g.q_max,
            g.q_min,
            net.base_mva,
            u8::from(g.in_service),
            g.p_max,
            g.p_min
        );
    }
    let _ = writeln!(
        s,
        "];\n\n%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\nmpc.branch = ["
    );
    for br in &net.branches {
        let ratio = if br.tap == 1.0 && br.shift == 0.0 {
            0.0
        } else {
            br.tap
        };
        let _ = writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t0\t0\t0\t{ratio}\t{}\t{}\t-360\t360;",
            net.buses[br.from].ext_id,
            net.buses[br.to].ext_id,
            br.r,
            br.x,
            br.b,
            br.shift.to_degrees(),
            u8::from(br.in_service)
        );
    }
    let _ = writeln!(s, "];\n\n%% generator cost data\nmpc.gencost = [");
    for g in &net.generators {
        let _ = writeln!(
            s,
            "\t2\t0\t0\t3\t{}\t{}\t{};",
            g.cost.c2, g.cost.c1, g.cost.c0
        );
    }
    let _ = writeln!(s, "];");
    s
}

/// Build a larger network from `copies` replicas of `net`, chained through
/// tie lines joining the slack buses of consecutive replicas. Only the first
/// replica keeps its slack bus; the others become PV buses.
pub fn tile_network(net: &Network, copies: usize, tie_r: f64, tie_x: f64) -> Result<Network> {
    if copies == 0 {
        return Err(Error::InvalidArgument("copies must be at least 1".into()));
    }
    let nb = net.n_bus();
    let mut buses = Vec::with_capacity(nb * copies);
    let mut branches = Vec::new();
    let mut generators = Vec::new();
    for t in 0..copies {
        let off = t * nb;
        for b in &net.buses {
            let mut b = b.clone();
            b.id += off;
            b.ext_id = b.id + 1;
            if t > 0 && b.kind == BusType::Slack {
                b.kind = BusType::Pv;
            }
            buses.push(b);
        }
        for br in &net.branches {
            branches.push(Branch {
                from: br.from + off,
                to: br.to + off,
                ..br.clone()
            });
        }
        for g in &net.generators {
            generators.push(Generator {
                bus: g.bus + off,
                ..g.clone()
            });
        }
        if t > 0 {
            branches.push(Branch {
                from: net.slack_bus() + off - nb,
                to: net.slack_bus() + off,
                r: tie_r,
                x: tie_x,
                b: 0.0,
                tap: 1.0,
                shift: 0.0,
                in_service: true,
            });
        }
    }
    let name = format!("{}x{copies}", net.name);
    Network::new(name, net.base_mva, buses, branches, generators)
}
