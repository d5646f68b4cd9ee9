//! Trace persistence: CSV with a `#` metadata preamble, the matching reader,
//! and a gnuplot script for the usual position and error plots.
//!
//! Agents, orders and axes are 1-based in column names; `topology` is the
//! 1-based topology index as in scenario files.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::analysis::VBreakdown;
use crate::dynamics::AgentState;
use crate::error::{Error, Result};
use crate::nn::NNBank;
use crate::sim::{SimTrace, TraceSample};

fn io(e: impl std::fmt::Display) -> Error {
    Error::Io(e.to_string())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::ConfigInvalid(format!("trace: {}", msg.into()))
}

/// Column names in file order.
pub fn column_names(n_agents: usize, order: usize, dim: usize) -> Vec<String> {
    let mut cols = vec!["t".to_string(), "topology".to_string()];
    for i in 1..=n_agents {
        for k in 1..=order {
            for d in 1..=dim {
                cols.push(format!("x{i}_{k}_{d}"));
            }
        }
    }
    for k in 1..=order {
        for d in 1..=dim {
            cols.push(format!("x0_{k}_{d}"));
        }
    }
    for prefix in ["u", "unom", "urep", "w"] {
        for i in 1..=n_agents {
            for d in 1..=dim {
                cols.push(format!("{prefix}{i}_{d}"));
            }
        }
    }
    for i in 1..=n_agents {
        for k in 1..=order {
            for d in 1..=dim {
                cols.push(format!("e{i}_{k}_{d}"));
            }
        }
    }
    for i in 1..=n_agents {
        for d in 1..=dim {
            cols.push(format!("r{i}_{d}"));
        }
    }
    cols.push("delta1".into());
    cols.extend((1..=5).map(|c| format!("V{c}")));
    cols.push("V".into());
    cols.extend((1..=5).map(|c| format!("Vpre{c}")));
    cols.push("z_norm".into());
    cols.extend(["min_sep_pair", "min_sep_leader", "min_sep_obstacle"].map(String::from));
    for i in 1..=n_agents {
        cols.extend([format!("theta{i}"), format!("theta0_{i}"), format!("thetaw{i}")]);
    }
    cols
}

fn push(row: &mut Vec<String>, v: &[f64]) {
    row.extend(v.iter().map(f64::to_string));
}

fn sample_row(s: &TraceSample) -> Vec<String> {
    let mut row = vec![s.t.to_string(), (s.topology_id + 1).to_string()];
    for x in &s.followers {
        push(&mut row, x.as_slice());
    }
    push(&mut row, s.leader.as_slice());
    for group in [&s.u, &s.u_nominal, &s.u_repulsive, &s.w] {
        for v in group {
            push(&mut row, v.as_slice());
        }
    }
    for ei in &s.e {
        for ek in ei {
            push(&mut row, ek.as_slice());
        }
    }
    for r in &s.r {
        push(&mut row, r.as_slice());
    }
    push(&mut row, &[s.delta1_norm]);
    push(&mut row, &s.v.as_array());
    push(&mut row, &[s.v.total()]);
    match &s.v_pre_switch {
        Some(v) => push(&mut row, &v.as_array()),
        None => row.extend(std::iter::repeat_n(String::new(), 5)),
    }
    push(
        &mut row,
        &[
            s.z_norm,
            s.min_pair_separation,
            s.min_leader_separation,
            s.min_obstacle_distance,
        ],
    );
    for w in &s.weight_norms {
        push(&mut row, w);
    }
    row
}

/// Writes the trace as CSV.
pub fn write_trace<W: Write>(trace: &SimTrace, mut out: W) -> Result<()> {
    writeln!(
        out,
        "# swarmsync trace n_agents={} order={} dim={} step={} stride={}",
        trace.n_agents, trace.order, trace.dim, trace.step, trace.stride
    )
    .map_err(io)?;
    let times: Vec<String> = trace.switch_times.iter().map(f64::to_string).collect();
    writeln!(out, "# switch_times={}", times.join(";")).map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(column_names(trace.n_agents, trace.order, trace.dim))
        .map_err(io)?;
    for s in &trace.samples {
        w.write_record(sample_row(s)).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_trace(trace: &SimTrace, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| io(format!("{}: {e}", path.display())))?;
    write_trace(trace, std::io::BufWriter::new(file))
}

struct Meta {
    n_agents: usize,
    order: usize,
    dim: usize,
    step: f64,
    stride: usize,
    switch_times: Vec<f64>,
}

fn parse_meta(text: &str) -> Result<Meta> {
    let mut kv = std::collections::HashMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        for tok in line.trim_start_matches('#').split_whitespace() {
            if let Some((k, v)) = tok.split_once('=') {
                kv.insert(k.to_string(), v.to_string());
            }
        }
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| bad(format!("missing `{k}` in preamble")));
    let num = |k: &str| -> Result<usize> { get(k)?.parse().map_err(|_| bad(format!("bad `{k}`"))) };
    let switch_times = get("switch_times")?
        .split(';')
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| bad("bad switch time")))
        .collect::<Result<_>>()?;
    Ok(Meta {
        n_agents: num("n_agents")?,
        order: num("order")?,
        dim: num("dim")?,
        step: get("step")?.parse().map_err(|_| bad("bad `step`"))?,
        stride: num("stride")?,
        switch_times,
    })
}

struct Cursor<'a> {
    rec: &'a csv::StringRecord,
    pos: usize,
    line: u64,
}

impl Cursor<'_> {
    fn field(&mut self) -> Result<&str> {
        let f = self
            .rec
            .get(self.pos)
            .ok_or_else(|| bad(format!("row {} is short", self.line)))?;
        self.pos += 1;
        Ok(f)
    }

    fn num(&mut self) -> Result<f64> {
        let line = self.line;
        let f = self.field()?;
        f.trim()
            .parse()
            .map_err(|_| bad(format!("row {line}: `{f}` is not a number")))
    }

    fn vec(&mut self, len: usize) -> Result<Vec<f64>> {
        (0..len).map(|_| self.num()).collect()
    }

    fn dvec(&mut self, len: usize) -> Result<DVector<f64>> {
        Ok(DVector::from_vec(self.vec(len)?))
    }

    fn v5(&mut self) -> Result<VBreakdown> {
        let v = self.vec(5)?;
        Ok(VBreakdown {
            v1: v[0],
            v2: v[1],
            v3: v[2],
            v4: v[3],
            v5: v[4],
        })
    }
}

fn parse_row(m: &Meta, rec: &csv::StringRecord, line: u64) -> Result<TraceSample> {
    let (na, n, p) = (m.n_agents, m.order, m.dim);
    let mut c = Cursor { rec, pos: 0, line };
    let t = c.num()?;
    let topology: usize = c
        .field()?
        .parse()
        .map_err(|_| bad(format!("row {line}: bad topology index")))?;
    if topology == 0 {
        return Err(bad(format!("row {line}: topology indices are 1-based")));
    }
    let state = |c: &mut Cursor| AgentState::from_vec(n, p, c.vec(n * p)?);
    let followers = (0..na).map(|_| state(&mut c)).collect::<Result<Vec<_>>>()?;
    let leader = state(&mut c)?;
    let mut groups = Vec::with_capacity(4);
    for _ in 0..4 {
        groups.push((0..na).map(|_| c.dvec(p)).collect::<Result<Vec<_>>>()?);
    }
    let e = (0..na)
        .map(|_| (0..n).map(|_| c.dvec(p)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let r = (0..na).map(|_| c.dvec(p)).collect::<Result<Vec<_>>>()?;
    let delta1_norm = c.num()?;
    let v = c.v5()?;
    let _total = c.num()?;
    let v_pre_switch = if rec.get(c.pos).is_some_and(|f| f.trim().is_empty()) {
        for _ in 0..5 {
            c.field()?;
        }
        None
    } else {
        Some(c.v5()?)
    };
    let z_norm = c.num()?;
    let min_pair_separation = c.num()?;
    let min_leader_separation = c.num()?;
    let min_obstacle_distance = c.num()?;
    let weight_norms = (0..na)
        .map(|_| Ok([c.num()?, c.num()?, c.num()?]))
        .collect::<Result<Vec<_>>>()?;
    let mut groups = groups.into_iter();
    let mut next = || groups.next().expect("four control groups");
    Ok(TraceSample {
        t,
        topology_id: topology - 1,
        followers,
        leader,
        u: next(),
        u_nominal: next(),
        u_repulsive: next(),
        w: next(),
        e,
        r,
        delta1_norm,
        v,
        v_pre_switch,
        z_norm,
        min_pair_separation,
        min_leader_separation,
        min_obstacle_distance,
        weight_norms,
    })
}

/// Reads a trace written by [`write_trace`].
pub fn read_trace<R: Read>(mut input: R) -> Result<SimTrace> {
    let mut text = String::new();
    input.read_to_string(&mut text).map_err(io)?;
    let meta = parse_meta(&text)?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let expected = column_names(meta.n_agents, meta.order, meta.dim);
    let header = rdr.headers().map_err(io)?;
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(a, b)| a != b) {
        return Err(bad("header does not match the declared sizes"));
    }
    let mut samples = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(io)?;
        let line = rec.position().map_or(0, |p| p.line());
        samples.push(parse_row(&meta, &rec, line)?);
    }
    if samples.is_empty() {
        return Err(bad("no samples"));
    }
    Ok(SimTrace {
        n_agents: meta.n_agents,
        order: meta.order,
        dim: meta.dim,
        step: meta.step,
        stride: meta.stride,
        switch_times: meta.switch_times,
        samples,
    })
}

pub fn load_trace(path: &Path) -> Result<SimTrace> {
    let file = std::fs::File::open(path).map_err(|e| io(format!("{}: {e}", path.display())))?;
    read_trace(std::io::BufReader::new(file))
}

/// Gnuplot script plotting planar positions and the leader-relative
/// position errors of every follower from `csv_name`.
pub fn plot_script(trace: &SimTrace, csv_name: &str) -> String {
    let cols = column_names(trace.n_agents, trace.order, trace.dim);
    let col = |name: &str| cols.iter().position(|c| c == name).expect("known column") + 1;
    let mut s = String::new();
    s.push_str("set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n");
    s.push_str("set terminal pngcairo size 900,700\n\n");
    if trace.dim >= 2 {
        s.push_str("set output 'positions.png'\nset xlabel 'x'\nset ylabel 'y'\nset size ratio -1\n");
        let mut lines = vec![format!(
            "'{csv_name}' using {}:{} with lines lw 2 title 'leader'",
            col("x0_1_1"),
            col("x0_1_2")
        )];
        for i in 1..=trace.n_agents {
            lines.push(format!(
                "'' using {}:{} with lines title 'agent {i}'",
                col(&format!("x{i}_1_1")),
                col(&format!("x{i}_1_2"))
            ));
        }
        s.push_str(&format!("plot {}\n\nset size noratio\n", lines.join(", \\\n     ")));
    }
    for d in 1..=trace.dim {
        s.push_str(&format!(
            "set output 'errors_{d}.png'\nset xlabel 't'\nset ylabel 'e_{d}'\n"
        ));
        let lines: Vec<String> = (1..=trace.n_agents)
            .map(|i| {
                let src = if i == 1 { format!("'{csv_name}'") } else { "''".into() };
                format!(
                    "{src} using 1:{} with lines title 'agent {i}'",
                    col(&format!("e{i}_1_{d}"))
                )
            })
            .collect();
        s.push_str(&format!("plot {}\n\n", lines.join(", \\\n     ")));
    }
    s
}

/// Writes a matrix as plain CSV, one row per line.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in m.row_iter() {
        w.write_record(row.iter().map(f64::to_string)).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Columns of a per-agent weight file: `t`, then `theta_r_c`, `theta0_r_c`
/// and `thetaw_r_c` in row-major order (1-based).
pub fn weight_columns(bank: &NNBank) -> Vec<String> {
    let mut cols = vec!["t".to_string()];
    for (name, m) in [
        ("theta", &bank.theta_hat),
        ("theta0", &bank.theta0_hat),
        ("thetaw", &bank.thetaw_hat),
    ] {
        for r in 1..=m.nrows() {
            for c in 1..=m.ncols() {
                cols.push(format!("{name}_{r}_{c}"));
            }
        }
    }
    cols
}

/// Streams one agent's weight estimates, one row per recorded instant.
pub struct WeightWriter<W: Write> {
    inner: csv::Writer<W>,
    header_done: bool,
}

impl<W: Write> WeightWriter<W> {
    pub fn new(out: W) -> Self {
        Self {
            inner: csv::Writer::from_writer(out),
            header_done: false,
        }
    }

    pub fn write(&mut self, t: f64, bank: &NNBank) -> Result<()> {
        if !self.header_done {
            self.inner.write_record(weight_columns(bank)).map_err(io)?;
            self.header_done = true;
        }
        let mut row = vec![t.to_string()];
        for m in [&bank.theta_hat, &bank.theta0_hat, &bank.thetaw_hat] {
            for r in 0..m.nrows() {
                row.extend((0..m.ncols()).map(|c| m[(r, c)].to_string()));
            }
        }
        self.inner.write_record(&row).map_err(io)
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush().map_err(io)
    }
}
