//! Plain-text network format and CSV edge lists.
//!
//! Matrix format (whitespace separated, `#` starts a comment):
//!
//! ```text
//! n alpha_1 .. alpha_n beta_1 .. beta_n c
//! h_11 .. h_1n
//! ..
//! h_n1 .. h_nn
//! ```
//!
//! Edge lists carry only `G` as `row,col,weight` records for nonzero entries.

use std::io::{BufRead, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::ExternalityNetwork;
use crate::error::{Error, Result};

pub fn write_network<W: Write>(net: &ExternalityNetwork, mut out: W) -> Result<()> {
    let n = net.n();
    let mut header = vec![n.to_string()];
    header.extend(net.alpha().iter().map(|v| v.to_string()));
    header.extend(net.beta().iter().map(|v| v.to_string()));
    header.push(net.cost().to_string());
    writeln!(out, "{}", header.join(" "))?;
    for i in 0..n {
        let row: Vec<String> = net.g().row(i).iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", row.join(" "))?;
    }
    Ok(())
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    tok.parse::<f64>().map_err(|e| Error::Parse {
        line,
        message: format!("`{tok}`: {e}"),
    })
}

pub fn read_network<R: BufRead>(input: R) -> Result<ExternalityNetwork> {
    let mut lines = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let content = line.split('#').next().unwrap_or("").trim().to_string();
        if !content.is_empty() {
            lines.push((idx + 1, content));
        }
    }
    let (header_line, header) = lines.first().ok_or(Error::Parse {
        line: 0,
        message: "empty network file".into(),
    })?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    let n: usize = toks[0].parse().map_err(|e| Error::Parse {
        line: *header_line,
        message: format!("node count `{}`: {e}", toks[0]),
    })?;
    if toks.len() != 2 * n + 2 {
        return Err(Error::Parse {
            line: *header_line,
            message: format!("header needs {} fields, found {}", 2 * n + 2, toks.len()),
        });
    }
    let nums = toks[1..]
        .iter()
        .map(|t| parse_f64(t, *header_line))
        .collect::<Result<Vec<f64>>>()?;
    let alpha = DVector::from_column_slice(&nums[..n]);
    let beta = DVector::from_column_slice(&nums[n..2 * n]);
    let cost = nums[2 * n];
    if lines.len() != n + 1 {
        return Err(Error::Parse {
            line: lines.last().map(|l| l.0).unwrap_or(0),
            message: format!("expected {n} matrix rows, found {}", lines.len() - 1),
        });
    }
    let mut g = DMatrix::zeros(n, n);
    for (i, (line_no, row)) in lines[1..].iter().enumerate() {
        let vals = row
            .split_whitespace()
            .map(|t| parse_f64(t, *line_no))
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != n {
            return Err(Error::Parse {
                line: *line_no,
                message: format!("row has {} entries, expected {n}", vals.len()),
            });
        }
        for (j, v) in vals.into_iter().enumerate() {
            g[(i, j)] = v;
        }
    }
    ExternalityNetwork::new(g, alpha, beta, cost)
}

#[derive(Debug, Serialize, Deserialize)]
struct EdgeRecord {
    row: usize,
    col: usize,
    weight: f64,
}

pub fn write_edge_list<W: Write>(net: &ExternalityNetwork, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let g = net.g();
    for i in 0..net.n() {
        for j in 0..net.n() {
            if g[(i, j)] != 0.0 {
                w.serialize(EdgeRecord {
                    row: i,
                    col: j,
                    weight: g[(i, j)],
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `row,col,weight` records into an `n`-consumer network with the given parameters.
pub fn read_edge_list<R: std::io::Read>(
    input: R,
    alpha: DVector<f64>,
    beta: DVector<f64>,
    cost: f64,
) -> Result<ExternalityNetwork> {
    let n = alpha.len();
    let mut g = DMatrix::zeros(n, n);
    let mut r = csv::Reader::from_reader(input);
    for (idx, rec) in r.deserialize::<EdgeRecord>().enumerate() {
        let rec = rec?;
        if rec.row >= n || rec.col >= n {
            return Err(Error::Parse {
                line: idx + 2,
                message: format!("edge ({}, {}) outside {n} nodes", rec.row, rec.col),
            });
        }
        g[(rec.row, rec.col)] = rec.weight;
    }
    ExternalityNetwork::new(g, alpha, beta, cost)
}
