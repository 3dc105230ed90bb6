//! Problem instances: loading, validation, distances and candidate lists.
//!
//! Vertices are re-indexed densely with depots first: depot `k` is vertex `k`
//! and customer `k` is vertex `n_depots + k`.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Default size of the per-customer candidate lists.
pub const DEFAULT_DELTA: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Depot {
    pub id: u32,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Customer {
    pub id: u32,
    pub x: f64,
    pub y: f64,
    pub demand: f64,
}

/// Supported on-disk instance layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InstanceFormat {
    /// Keyword-based text format; carries fleet size and depot limit itself.
    Canonical,
    /// Tuzun-Burke location-routing files.
    Tuzun,
    /// Prodhon location-routing files.
    Prodhon,
    /// Barreto location-routing files.
    Barreto,
}

impl InstanceFormat {
    pub fn is_raw(self) -> bool {
        !matches!(self, InstanceFormat::Canonical)
    }
}

impl FromStr for InstanceFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "canonical" => Ok(Self::Canonical),
            "tuzun" | "tuzun-burke" => Ok(Self::Tuzun),
            "prodhon" => Ok(Self::Prodhon),
            "barreto" => Ok(Self::Barreto),
            other => Err(Error::Config(format!("unknown instance format `{other}`"))),
        }
    }
}

/// Fleet data that raw benchmark files do not carry.
#[derive(Debug, Clone, PartialEq)]
pub struct RawMetadata {
    pub name: String,
    pub n_vehicles: usize,
    pub max_open_depots: usize,
    pub n_customers: Option<usize>,
    pub n_depots: Option<usize>,
}

/// Immutable LLRP instance.
#[derive(Debug, Clone)]
pub struct Instance {
    name: String,
    depots: Vec<Depot>,
    customers: Vec<Customer>,
    capacity: f64,
    fleet_size: usize,
    max_open_depots: usize,
    delta: usize,
    n: usize,
    dist: Vec<f64>,
    demand: Vec<f64>,
    total_demand: f64,
    neighbors: Vec<Vec<usize>>,
    granular: Vec<bool>,
}

impl PartialEq for Instance {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.depots == other.depots
            && self.customers == other.customers
            && self.capacity == other.capacity
            && self.fleet_size == other.fleet_size
            && self.max_open_depots == other.max_open_depots
            && self.delta == other.delta
            && self.dist == other.dist
            && self.neighbors == other.neighbors
    }
}

impl Instance {
    /// Builds and validates an instance.
    pub fn new(
        name: impl Into<String>,
        depots: Vec<Depot>,
        customers: Vec<Customer>,
        capacity: f64,
        fleet_size: usize,
        max_open_depots: usize,
        delta: usize,
    ) -> Result<Self> {
        let name = name.into();
        if depots.is_empty() {
            return Err(Error::InvalidInstance("no depots".into()));
        }
        if customers.is_empty() {
            return Err(Error::InvalidInstance("no customers".into()));
        }
        if !(capacity.is_finite() && capacity > 0.0) {
            return Err(Error::InvalidInstance(format!("capacity must be positive, got {capacity}")));
        }
        if fleet_size == 0 {
            return Err(Error::InvalidInstance("fleet size must be at least 1".into()));
        }
        if max_open_depots == 0 || max_open_depots > depots.len() {
            return Err(Error::InvalidInstance(format!(
                "depot limit {max_open_depots} must lie in 1..={}",
                depots.len()
            )));
        }
        check_unique(depots.iter().map(|d| d.id), "depot")?;
        check_unique(customers.iter().map(|c| c.id), "customer")?;
        for c in &customers {
            if !(c.demand.is_finite() && c.demand >= 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "customer {} has invalid demand {}",
                    c.id, c.demand
                )));
            }
            if c.demand > capacity {
                return Err(Error::DemandExceedsCapacity {
                    customer: c.id,
                    demand: c.demand,
                    capacity,
                });
            }
        }
        for (x, y) in depots
            .iter()
            .map(|d| (d.x, d.y))
            .chain(customers.iter().map(|c| (c.x, c.y)))
        {
            if !(x.is_finite() && y.is_finite()) {
                return Err(Error::InvalidInstance("non-finite coordinate".into()));
            }
        }

        let coords: Vec<(f64, f64)> = depots
            .iter()
            .map(|d| (d.x, d.y))
            .chain(customers.iter().map(|c| (c.x, c.y)))
            .collect();
        let n = coords.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = coords[i].0 - coords[j].0;
                let dy = coords[i].1 - coords[j].1;
                let d = (dx * dx + dy * dy).sqrt();
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        let mut demand = vec![0.0; depots.len()];
        demand.extend(customers.iter().map(|c| c.demand));
        let total_demand = customers.iter().map(|c| c.demand).sum();

        let mut inst = Instance {
            name,
            depots,
            customers,
            capacity,
            fleet_size,
            max_open_depots,
            delta: delta.max(1),
            n,
            dist,
            demand,
            total_demand,
            neighbors: Vec::new(),
            granular: Vec::new(),
        };
        inst.neighbors = build_neighbor_lists(&inst, inst.delta);
        inst.granular = vec![false; n * n];
        for v in 0..n {
            for &w in &inst.neighbors[v] {
                inst.granular[v * n + w] = true;
                inst.granular[w * n + v] = true;
            }
        }
        if let Some((i, j, k)) = inst.triangle_violation(1e-9) {
            log::warn!(
                "instance {}: triangle inequality violated on vertices ({i}, {j}, {k})",
                inst.name
            );
        }
        Ok(inst)
    }

    /// Same instance with candidate lists rebuilt for another `delta`.
    pub fn with_delta(&self, delta: usize) -> Instance {
        let mut inst = self.clone();
        inst.delta = delta.max(1);
        inst.neighbors = build_neighbor_lists(&inst, inst.delta);
        let n = inst.n;
        inst.granular = vec![false; n * n];
        for v in 0..n {
            for &w in &inst.neighbors[v] {
                inst.granular[v * n + w] = true;
                inst.granular[w * n + v] = true;
            }
        }
        inst
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn depots(&self) -> &[Depot] {
        &self.depots
    }

    pub fn customers(&self) -> &[Customer] {
        &self.customers
    }

    pub fn n_depots(&self) -> usize {
        self.depots.len()
    }

    pub fn n_customers(&self) -> usize {
        self.customers.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn capacity(&self) -> f64 {
        self.capacity
    }

    pub fn fleet_size(&self) -> usize {
        self.fleet_size
    }

    pub fn max_open_depots(&self) -> usize {
        self.max_open_depots
    }

    pub fn delta(&self) -> usize {
        self.delta
    }

    pub fn total_demand(&self) -> f64 {
        self.total_demand
    }

    #[inline]
    pub fn dist(&self, a: usize, b: usize) -> f64 {
        self.dist[a * self.n + b]
    }

    /// Demand of a vertex (zero for depots).
    #[inline]
    pub fn demand(&self, v: usize) -> f64 {
        self.demand[v]
    }

    #[inline]
    pub fn is_depot(&self, v: usize) -> bool {
        v < self.depots.len()
    }

    /// Vertex index of the `k`-th customer.
    #[inline]
    pub fn customer_vertex(&self, k: usize) -> usize {
        self.depots.len() + k
    }

    pub fn customer_vertices(&self) -> std::ops::Range<usize> {
        self.depots.len()..self.n
    }

    /// External id of a vertex.
    pub fn vertex_id(&self, v: usize) -> u32 {
        if self.is_depot(v) {
            self.depots[v].id
        } else {
            self.customers[v - self.depots.len()].id
        }
    }

    pub fn depot_by_id(&self, id: u32) -> Option<usize> {
        self.depots.iter().position(|d| d.id == id)
    }

    pub fn customer_by_id(&self, id: u32) -> Option<usize> {
        self.customers
            .iter()
            .position(|c| c.id == id)
            .map(|k| k + self.depots.len())
    }

    pub fn coords(&self, v: usize) -> (f64, f64) {
        if self.is_depot(v) {
            (self.depots[v].x, self.depots[v].y)
        } else {
            let c = &self.customers[v - self.depots.len()];
            (c.x, c.y)
        }
    }

    /// Candidate list of a customer vertex (empty for depots).
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    /// True when `a` is in the candidate list of `b` or vice versa.
    #[inline]
    pub fn is_granular(&self, a: usize, b: usize) -> bool {
        self.granular[a * self.n + b]
    }

    /// First triple `(i, j, k)` with `d(i,k) > d(i,j) + d(j,k) + tol`, if any.
    pub fn triangle_violation(&self, tol: f64) -> Option<(usize, usize, usize)> {
        let n = self.n;
        for i in 0..n {
            for k in (i + 1)..n {
                let dik = self.dist(i, k);
                for j in 0..n {
                    if j != i && j != k && dik > self.dist(i, j) + self.dist(j, k) + tol {
                        return Some((i, j, k));
                    }
                }
            }
        }
        None
    }

    /// Serializes to the canonical text format.
    pub fn to_canonical(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "NAME {}", self.name);
        let _ = writeln!(out, "VEHICLES {}", self.fleet_size);
        let _ = writeln!(out, "MAX_DEPOTS {}", self.max_open_depots);
        let _ = writeln!(out, "CAPACITY {}", self.capacity);
        let _ = writeln!(out, "DEPOTS {}", self.depots.len());
        for d in &self.depots {
            let _ = writeln!(out, "{} {} {}", d.id, d.x, d.y);
        }
        let _ = writeln!(out, "CUSTOMERS {}", self.customers.len());
        for c in &self.customers {
            let _ = writeln!(out, "{} {} {} {}", c.id, c.x, c.y, c.demand);
        }
        out.push_str("EOF\n");
        out
    }

    pub fn write_canonical(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_canonical())?;
        Ok(())
    }
}

fn check_unique(ids: impl Iterator<Item = u32>, what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::InvalidInstance(format!("duplicate {what} id {id}")));
        }
    }
    Ok(())
}

/// The `delta` nearest other vertices of every customer, ties broken by vertex
/// index. Depots get empty lists.
pub fn build_neighbor_lists(inst: &Instance, delta: usize) -> Vec<Vec<usize>> {
    let n = inst.n_vertices();
    let keep = delta.max(1).min(n - 1);
    (0..n)
        .map(|v| {
            if inst.is_depot(v) {
                return Vec::new();
            }
            let mut others: Vec<usize> = (0..n).filter(|&w| w != v).collect();
            others.sort_by(|&a, &b| {
                inst.dist(v, a)
                    .total_cmp(&inst.dist(v, b))
                    .then(a.cmp(&b))
            });
            others.truncate(keep);
            others
        })
        .collect()
}

/// Loads an instance from disk.
///
/// Raw benchmark layouts need `meta` for the fleet size and depot limit.
pub fn parse_instance(
    path: &Path,
    format: InstanceFormat,
    delta: usize,
    meta: Option<&RawMetadata>,
) -> Result<Instance> {
    let text = fs::read_to_string(path)?;
    match format {
        InstanceFormat::Canonical => parse_canonical(&text, path, delta),
        _ => {
            let name = meta
                .map(|m| m.name.clone())
                .unwrap_or_else(|| file_stem(path));
            let meta = meta.ok_or(Error::MissingMetadata(name))?;
            parse_raw(&text, path, meta, delta)
        }
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

struct LineCursor<'a> {
    path: &'a Path,
    lines: Vec<(usize, &'a str)>,
    at: usize,
}

impl<'a> LineCursor<'a> {
    fn new(text: &'a str, path: &'a Path) -> Self {
        let lines = text
            .lines()
            .enumerate()
            .filter_map(|(i, raw)| {
                let body = raw.split('#').next().unwrap_or("");
                (!body.trim().is_empty()).then_some((i + 1, body))
            })
            .collect();
        LineCursor { path, lines, at: 0 }
    }

    fn err(&self, line: usize, column: usize, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            column,
            message: message.into(),
        }
    }

    fn next_line(&mut self) -> Result<(usize, Vec<(usize, &'a str)>)> {
        let Some(&(no, body)) = self.lines.get(self.at) else {
            let last = self.lines.last().map(|l| l.0).unwrap_or(0);
            return Err(self.err(last + 1, 1, "unexpected end of file"));
        };
        self.at += 1;
        let mut tokens = Vec::new();
        let mut start = None;
        for (i, ch) in body.char_indices() {
            match (ch.is_whitespace(), start) {
                (false, None) => start = Some(i),
                (true, Some(s)) => {
                    tokens.push((s + 1, &body[s..i]));
                    start = None;
                }
                _ => {}
            }
        }
        if let Some(s) = start {
            tokens.push((s + 1, &body[s..]));
        }
        Ok((no, tokens))
    }

    fn keyword_line(&mut self, keyword: &str) -> Result<(usize, Vec<(usize, &'a str)>)> {
        let (no, tokens) = self.next_line()?;
        if tokens[0].1 != keyword {
            return Err(self.err(no, tokens[0].0, format!("expected `{keyword}`, found `{}`", tokens[0].1)));
        }
        if tokens.len() != 2 {
            return Err(self.err(no, tokens[0].0, format!("`{keyword}` takes exactly one value")));
        }
        Ok((no, tokens))
    }

    fn number<T: FromStr>(&self, line: usize, token: (usize, &str)) -> Result<T> {
        token
            .1
            .parse()
            .map_err(|_| self.err(line, token.0, format!("cannot parse `{}` as a number", token.1)))
    }
}

fn parse_canonical(text: &str, path: &Path, delta: usize) -> Result<Instance> {
    let mut cur = LineCursor::new(text, path);
    let (_, name) = cur.keyword_line("NAME")?;
    let name = name[1].1.to_string();
    let (no, t) = cur.keyword_line("VEHICLES")?;
    let vehicles: usize = cur.number(no, t[1])?;
    let (no, t) = cur.keyword_line("MAX_DEPOTS")?;
    let max_depots: usize = cur.number(no, t[1])?;
    let (no, t) = cur.keyword_line("CAPACITY")?;
    let capacity: f64 = cur.number(no, t[1])?;

    let (no, t) = cur.keyword_line("DEPOTS")?;
    let n_depots: usize = cur.number(no, t[1])?;
    let mut depots = Vec::with_capacity(n_depots);
    for _ in 0..n_depots {
        let (no, t) = cur.next_line()?;
        if t.len() != 3 {
            return Err(cur.err(no, t[0].0, "depot line needs `id x y`"));
        }
        depots.push(Depot {
            id: cur.number(no, t[0])?,
            x: cur.number(no, t[1])?,
            y: cur.number(no, t[2])?,
        });
    }

    let (no, t) = cur.keyword_line("CUSTOMERS")?;
    let n_customers: usize = cur.number(no, t[1])?;
    let mut customers = Vec::with_capacity(n_customers);
    for _ in 0..n_customers {
        let (no, t) = cur.next_line()?;
        if t.len() != 4 {
            return Err(cur.err(no, t[0].0, "customer line needs `id x y demand`"));
        }
        customers.push(Customer {
            id: cur.number(no, t[0])?,
            x: cur.number(no, t[1])?,
            y: cur.number(no, t[2])?,
            demand: cur.number(no, t[3])?,
        });
    }
    let (no, t) = cur.next_line()?;
    if t.len() != 1 || t[0].1 != "EOF" {
        return Err(cur.err(no, t[0].0, "expected `EOF`"));
    }
    Instance::new(name, depots, customers, capacity, vehicles, max_depots, delta)
}

/// Whitespace-token layout shared by the three location-routing benchmark
/// sets: customer count, depot count, depot coordinates, customer
/// coordinates, vehicle capacity, depot capacities, customer demands, depot
/// opening costs, route cost and (Prodhon only) a cost-rounding flag. The cost
/// fields are read and ignored.
fn parse_raw(text: &str, path: &Path, meta: &RawMetadata, delta: usize) -> Result<Instance> {
    let mut tokens = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut col = 0;
        for tok in line.split_whitespace() {
            let at = line[col..].find(tok).map(|p| p + col).unwrap_or(col);
            col = at + tok.len();
            tokens.push((i + 1, at + 1, tok));
        }
    }
    let mut it = tokens.into_iter();
    let mut next = |what: &str| -> Result<f64> {
        match it.next() {
            Some((line, column, tok)) => tok.parse::<f64>().map_err(|_| Error::Parse {
                path: path.to_path_buf(),
                line,
                column,
                message: format!("cannot parse `{tok}` as {what}"),
            }),
            None => Err(Error::Parse {
                path: path.to_path_buf(),
                line: text.lines().count() + 1,
                column: 1,
                message: format!("unexpected end of file while reading {what}"),
            }),
        }
    };
    let nc = next("the customer count")? as usize;
    let nd = next("the depot count")? as usize;
    if let Some(expected) = meta.n_customers {
        if expected != nc {
            return Err(Error::InvalidInstance(format!(
                "{}: file has {nc} customers, metadata says {expected}",
                meta.name
            )));
        }
    }
    if let Some(expected) = meta.n_depots {
        if expected != nd {
            return Err(Error::InvalidInstance(format!(
                "{}: file has {nd} depots, metadata says {expected}",
                meta.name
            )));
        }
    }
    let mut depots = Vec::with_capacity(nd);
    for k in 0..nd {
        let x = next("a depot x coordinate")?;
        let y = next("a depot y coordinate")?;
        depots.push(Depot { id: k as u32 + 1, x, y });
    }
    let mut coords = Vec::with_capacity(nc);
    for _ in 0..nc {
        let x = next("a customer x coordinate")?;
        let y = next("a customer y coordinate")?;
        coords.push((x, y));
    }
    let capacity = next("the vehicle capacity")?;
    for _ in 0..nd {
        next("a depot capacity")?;
    }
    let customers = coords
        .into_iter()
        .enumerate()
        .map(|(k, (x, y))| {
            Ok(Customer {
                id: k as u32 + 1,
                x,
                y,
                demand: next("a customer demand")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Instance::new(
        meta.name.clone(),
        depots,
        customers,
        capacity,
        meta.n_vehicles,
        meta.max_open_depots,
        delta,
    )
}

/// One row of a benchmark manifest.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub path: PathBuf,
    pub format: String,
    pub n_customers: Option<usize>,
    pub n_depots: Option<usize>,
    pub n_vehicles: Option<usize>,
    pub max_open_depots: Option<usize>,
    pub bks: Option<f64>,
}

impl ManifestEntry {
    pub fn format(&self) -> Result<InstanceFormat> {
        self.format.parse()
    }

    pub fn metadata(&self) -> Option<RawMetadata> {
        Some(RawMetadata {
            name: self.name.clone(),
            n_vehicles: self.n_vehicles?,
            max_open_depots: self.max_open_depots?,
            n_customers: self.n_customers,
            n_depots: self.n_depots,
        })
    }

    /// Loads the instance; relative paths resolve against `base_dir`.
    pub fn load(&self, base_dir: &Path, delta: usize) -> Result<Instance> {
        let path = if self.path.is_absolute() {
            self.path.clone()
        } else {
            base_dir.join(&self.path)
        };
        let format = self.format()?;
        let meta = self.metadata();
        if format.is_raw() && meta.is_none() {
            return Err(Error::MissingMetadata(self.name.clone()));
        }
        parse_instance(&path, format, delta, meta.as_ref())
    }
}

/// Reads a manifest CSV (`name,path,format,n_customers,n_depots,n_vehicles,max_open_depots,bks`).
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows = Vec::new();
    for row in reader.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}
