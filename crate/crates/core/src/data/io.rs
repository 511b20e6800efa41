use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use super::{Payload, Sample};
use crate::error::{Error, Result};
use crate::graph::TrajectoryGraph;

const GRAPH_HEADER: &str = "graph,client_id,time_index,label,num_nodes";

fn join<T: ToString>(values: impl IntoIterator<Item = T>, sep: &str) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(sep)
}

fn label_field(label: Option<usize>) -> String {
    label.map(|y| y.to_string()).unwrap_or_default()
}

fn io_err(e: std::io::Error) -> Error {
    Error::Input(format!("write failed: {e}"))
}

/// Writes samples as text. Feature samples become one row each under a
/// `client_id,time_index,label,x0,..` header; graph samples become blocks of a
/// `graph,...` row followed by one `node,id,features,neighbors` row per node.
/// An unlabeled sample has an empty label field. Floats use the shortest
/// representation that parses back to the same value.
pub fn write_samples<W: Write>(mut out: W, samples: &[Sample]) -> Result<()> {
    let graphs = matches!(samples.first().map(|s| &s.payload), Some(Payload::Graph(_)));
    if graphs {
        writeln!(out, "{GRAPH_HEADER}").map_err(io_err)?;
    } else {
        let dim = match samples.first().map(|s| &s.payload) {
            Some(Payload::Features(f)) => f.len(),
            _ => 0,
        };
        let mut header = String::from("client_id,time_index,label");
        for j in 0..dim {
            header.push_str(&format!(",x{j}"));
        }
        writeln!(out, "{header}").map_err(io_err)?;
    }
    for s in samples {
        let head = format!("{},{},{}", s.client_id, s.time_index, label_field(s.label));
        match (&s.payload, graphs) {
            (Payload::Features(f), false) => {
                if f.is_empty() {
                    writeln!(out, "{head}").map_err(io_err)?;
                } else {
                    writeln!(out, "{head},{}", join(f, ",")).map_err(io_err)?;
                }
            }
            (Payload::Graph(g), true) => {
                writeln!(out, "graph,{head},{}", g.num_nodes()).map_err(io_err)?;
                let mut neighbors: Vec<Vec<u32>> = vec![Vec::new(); g.num_nodes()];
                for &(a, b) in g.edges() {
                    neighbors[a].push(g.node_ids()[b]);
                    neighbors[b].push(g.node_ids()[a]);
                }
                for (i, id) in g.node_ids().iter().enumerate() {
                    neighbors[i].sort_unstable();
                    writeln!(
                        out,
                        "node,{id},{},{}",
                        join(&g.features()[i], ";"),
                        join(&neighbors[i], ";")
                    )
                    .map_err(io_err)?;
                }
            }
            _ => return Err(Error::Input("cannot mix feature and graph samples in one file".into())),
        }
    }
    Ok(())
}

fn bad(line: usize, msg: impl std::fmt::Display) -> Error {
    Error::Input(format!("line {line}: {msg}"))
}

fn num<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| bad(line, format!("bad {what} '{field}'")))
}

fn head_fields(line: usize, fields: &[&str]) -> Result<(usize, usize, Option<usize>)> {
    let label = if fields[2].is_empty() {
        None
    } else {
        Some(num(line, fields[2], "label")?)
    };
    Ok((num(line, fields[0], "client_id")?, num(line, fields[1], "time_index")?, label))
}

fn list<T: std::str::FromStr>(line: usize, field: &str, what: &str) -> Result<Vec<T>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field.split(';').map(|v| num(line, v, what)).collect()
}

/// Reads samples written by [`write_samples`].
pub fn read_samples<R: BufRead>(input: R) -> Result<Vec<Sample>> {
    let mut lines = input.lines().enumerate();
    let header = match lines.next() {
        None => return Ok(Vec::new()),
        Some((_, l)) => l.map_err(|e| bad(1, e))?,
    };
    let graphs = header.trim_end() == GRAPH_HEADER;
    if !graphs && !header.starts_with("client_id,time_index,label") {
        return Err(bad(1, "unrecognized header"));
    }
    let mut samples = Vec::new();
    let mut pending: Option<(usize, usize, usize, Option<usize>, usize, Vec<String>)> = None;

    let finish = |p: (usize, usize, usize, Option<usize>, usize, Vec<String>)| -> Result<Sample> {
        let (start, client_id, time_index, label, n, rows) = p;
        if rows.len() != n {
            return Err(bad(start, format!("graph declares {n} nodes but has {}", rows.len())));
        }
        let mut ids = Vec::with_capacity(n);
        let mut features = Vec::with_capacity(n);
        let mut adjacency = Vec::with_capacity(n);
        for (i, row) in rows.iter().enumerate() {
            let ln = start + 1 + i;
            let f: Vec<&str> = row.split(',').collect();
            if f.len() != 4 || f[0] != "node" {
                return Err(bad(ln, "expected node,id,features,neighbors"));
            }
            ids.push(num::<u32>(ln, f[1], "node id")?);
            features.push(list::<f64>(ln, f[2], "feature")?);
            adjacency.push(list::<u32>(ln, f[3], "neighbor")?);
        }
        let index = |id: u32| ids.iter().position(|&x| x == id);
        let mut edges = BTreeSet::new();
        let mut directed = BTreeSet::new();
        for (i, nbrs) in adjacency.iter().enumerate() {
            for &nb in nbrs {
                let j = index(nb)
                    .ok_or_else(|| bad(start + 1 + i, format!("unknown neighbor {nb}")))?;
                directed.insert((i, j));
                edges.insert((i.min(j), i.max(j)));
            }
        }
        if directed.iter().any(|&(i, j)| !directed.contains(&(j, i))) {
            return Err(bad(start, "adjacency lists are not symmetric"));
        }
        let g = TrajectoryGraph::new(ids, edges, features).map_err(|e| bad(start, e))?;
        Ok(Sample {
            payload: Payload::Graph(g),
            label,
            client_id,
            time_index,
        })
    };

    for (idx, l) in lines {
        let ln = idx + 1;
        let l = l.map_err(|e| bad(ln, e))?;
        if l.is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        if graphs {
            if fields[0] == "graph" {
                if let Some(p) = pending.take() {
                    samples.push(finish(p)?);
                }
                if fields.len() != 5 {
                    return Err(bad(ln, "expected graph,client_id,time_index,label,num_nodes"));
                }
                let (c, t, y) = head_fields(ln, &fields[1..4])?;
                pending = Some((ln, c, t, y, num(ln, fields[4], "num_nodes")?, Vec::new()));
            } else {
                match pending.as_mut() {
                    Some(p) => p.5.push(l.clone()),
                    None => return Err(bad(ln, "node row before any graph row")),
                }
            }
        } else {
            if fields.len() < 3 {
                return Err(bad(ln, "expected client_id,time_index,label,..."));
            }
            let (client_id, time_index, label) = head_fields(ln, &fields)?;
            let features = fields[3..]
                .iter()
                .map(|v| num::<f64>(ln, v, "feature"))
                .collect::<Result<Vec<_>>>()?;
            samples.push(Sample {
                payload: Payload::Features(features),
                label,
                client_id,
                time_index,
            });
        }
    }
    if let Some(p) = pending.take() {
        samples.push(finish(p)?);
    }
    Ok(samples)
}
