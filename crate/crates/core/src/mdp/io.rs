//! CSV ingestion and export.
//!
//! MDP files carry the header `id_state,id_action,id_next_state,probability,reward`;
//! ensemble files prepend `id_model,weight`. Missing transitions are zeros. The
//! reward belongs to `(s,a)` and must be identical on every row sharing it.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{RasrError, Result};

use super::{Mdp, ModelEnsemble, Transitions, ROW_SUM_TOL};

const MDP_HEADER: [&str; 5] = ["id_state", "id_action", "id_next_state", "probability", "reward"];
const ENSEMBLE_HEADER: [&str; 7] = ["id_model", "weight", "id_state", "id_action", "id_next_state", "probability", "reward"];

fn parse_err(line: u64, message: impl Into<String>) -> RasrError {
    RasrError::Parse { line, message: message.into() }
}

struct Row {
    line: u64,
    model: Option<(u64, f64)>,
    state: usize,
    action: usize,
    next: usize,
    prob: f64,
    reward: f64,
}

fn read_rows<R: Read>(reader: R, header: &[&str]) -> Result<Vec<Row>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(reader);
    let found: Vec<String> = rdr
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    if found != header {
        return Err(parse_err(1, format!("expected header {}, found {}", header.join(","), found.join(","))));
    }

    let with_model = header.len() == ENSEMBLE_HEADER.len();
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let index = |i: usize| -> Result<usize> {
            field(i)
                .parse::<usize>()
                .map_err(|_| parse_err(line, format!("column {} must be a nonnegative integer, got {:?}", header[i], field(i))))
        };
        let real = |i: usize| -> Result<f64> {
            let v = field(i)
                .parse::<f64>()
                .map_err(|_| parse_err(line, format!("column {} must be a number, got {:?}", header[i], field(i))))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("column {} must be finite", header[i])));
            }
            Ok(v)
        };
        let offset = if with_model { 2 } else { 0 };
        let model = if with_model {
            let id = field(0)
                .parse::<u64>()
                .map_err(|_| parse_err(line, format!("column id_model must be a nonnegative integer, got {:?}", field(0))))?;
            Some((id, real(1)?))
        } else {
            None
        };
        let prob = real(offset + 3)?;
        if !(0.0..=1.0 + ROW_SUM_TOL).contains(&prob) {
            return Err(parse_err(line, format!("probability {prob} outside [0, 1]: row-stochasticity violated")));
        }
        rows.push(Row {
            line,
            model,
            state: index(offset)?,
            action: index(offset + 1)?,
            next: index(offset + 2)?,
            prob,
            reward: real(offset + 4)?,
        });
    }
    if rows.is_empty() {
        return Err(parse_err(1, "file has no transition rows"));
    }
    Ok(rows)
}

struct Shape {
    n_states: usize,
    n_actions: usize,
}

fn shape_of(rows: &[Row]) -> Shape {
    let n_states = rows.iter().map(|r| r.state.max(r.next)).max().unwrap_or(0) + 1;
    let n_actions = rows.iter().map(|r| r.action).max().unwrap_or(0) + 1;
    Shape { n_states, n_actions }
}

/// Assembles one transition table, recording rewards into `reward`.
fn assemble(rows: &[&Row], shape: &Shape, reward: &mut [Option<(f64, u64)>]) -> Result<Transitions> {
    let Shape { n_states, n_actions } = *shape;
    let mut probs = vec![0.0; n_states * n_actions * n_states];
    let mut seen = vec![false; probs.len()];
    let mut first_line = vec![0u64; n_states * n_actions];
    for row in rows {
        let sa = row.state * n_actions + row.action;
        let idx = sa * n_states + row.next;
        if seen[idx] {
            return Err(parse_err(
                row.line,
                format!("duplicate transition ({}, {}, {})", row.state, row.action, row.next),
            ));
        }
        seen[idx] = true;
        probs[idx] = row.prob;
        if first_line[sa] == 0 {
            first_line[sa] = row.line;
        }
        match reward[sa] {
            None => reward[sa] = Some((row.reward, row.line)),
            Some((r, l)) if r != row.reward => {
                return Err(parse_err(
                    row.line,
                    format!(
                        "reward {} for (state {}, action {}) disagrees with {r} on line {l}; rewards depend on (state, action) only",
                        row.reward, row.state, row.action
                    ),
                ));
            }
            Some(_) => {}
        }
    }
    for s in 0..n_states {
        for a in 0..n_actions {
            let sa = s * n_actions + a;
            let sum: f64 = probs[sa * n_states..(sa + 1) * n_states].iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOL {
                let line = first_line[sa];
                let msg = if line == 0 {
                    format!("state {s} action {a} has no transitions")
                } else {
                    format!("row-stochasticity violated: p(.|{s},{a}) sums to {sum}")
                };
                return Err(parse_err(line, msg));
            }
        }
    }
    Transitions::new(n_states, n_actions, probs)
}

fn finish_rewards(reward: Vec<Option<(f64, u64)>>) -> Vec<f64> {
    reward.into_iter().map(|r| r.map(|(v, _)| v).unwrap_or(0.0)).collect()
}

/// Parses an MDP CSV from any reader.
pub fn parse_mdp<R: Read>(reader: R, discount: f64, initial_state: usize) -> Result<Mdp> {
    let rows = read_rows(reader, &MDP_HEADER)?;
    let shape = shape_of(&rows);
    let mut reward = vec![None; shape.n_states * shape.n_actions];
    let refs: Vec<&Row> = rows.iter().collect();
    let transitions = assemble(&refs, &shape, &mut reward)?;
    Mdp::new(finish_rewards(reward), transitions, discount, initial_state)
}

/// Parses an ensemble CSV from any reader. Model ids are ordered ascending.
pub fn parse_ensemble<R: Read>(reader: R, discount: f64, initial_state: usize) -> Result<ModelEnsemble> {
    let rows = read_rows(reader, &ENSEMBLE_HEADER)?;
    let shape = shape_of(&rows);
    let mut groups: BTreeMap<u64, (f64, u64, Vec<&Row>)> = BTreeMap::new();
    for row in &rows {
        let (id, weight) = row.model.expect("ensemble rows carry a model id");
        let entry = groups.entry(id).or_insert((weight, row.line, Vec::new()));
        if entry.0 != weight {
            return Err(parse_err(
                row.line,
                format!("weight {weight} for model {id} disagrees with {} on line {}", entry.0, entry.1),
            ));
        }
        entry.2.push(row);
    }
    let mut reward = vec![None; shape.n_states * shape.n_actions];
    let mut models = Vec::with_capacity(groups.len());
    let mut weights = Vec::with_capacity(groups.len());
    for (_, (weight, _, group)) in groups {
        models.push(assemble(&group, &shape, &mut reward)?);
        weights.push(weight);
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOL {
        return Err(parse_err(1, format!("model weights sum to {sum}, expected 1")));
    }
    ModelEnsemble::new(finish_rewards(reward), models, weights, discount, initial_state)
}

pub fn load_mdp(path: impl AsRef<Path>, discount: f64, initial_state: usize) -> Result<Mdp> {
    parse_mdp(File::open(path)?, discount, initial_state)
}

pub fn load_ensemble(path: impl AsRef<Path>, discount: f64, initial_state: usize) -> Result<ModelEnsemble> {
    parse_ensemble(File::open(path)?, discount, initial_state)
}

fn write_model<W: Write>(out: &mut W, prefix: &str, t: &Transitions, reward: &[f64]) -> Result<()> {
    for s in 0..t.n_states() {
        for a in 0..t.n_actions() {
            let r = reward[s * t.n_actions() + a];
            let row = t.row(s, a);
            for (next, &p) in row.iter().enumerate() {
                if p != 0.0 {
                    writeln!(out, "{prefix}{s},{a},{next},{p},{r}")?;
                }
            }
        }
    }
    Ok(())
}

/// Writes an MDP as CSV. Floats use the shortest representation that parses
/// back to the same bits.
pub fn save_mdp<W: Write>(mdp: &Mdp, mut out: W) -> Result<()> {
    writeln!(out, "{}", MDP_HEADER.join(","))?;
    write_model(&mut out, "", mdp.transitions(), mdp.rewards())
}

pub fn save_ensemble<W: Write>(ensemble: &ModelEnsemble, mut out: W) -> Result<()> {
    writeln!(out, "{}", ENSEMBLE_HEADER.join(","))?;
    for (i, (m, w)) in ensemble.models().iter().zip(ensemble.weights()).enumerate() {
        write_model(&mut out, &format!("{i},{w},"), m, ensemble.rewards())?;
    }
    Ok(())
}
