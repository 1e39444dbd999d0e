//! Flat `key = value` configuration, CSV time series and field snapshots,
//! and the per-run manifest.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which round-trips
//! every finite `f64` exactly; the `+inf` margin sentinel is written as `inf`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use ndarray::Array2;

use crate::diagnostics::DiagnosticsRecord;
use crate::dynamics::{FlowState, SimConfig};
use crate::elliptic::SolverMethod;
use crate::error::{Error, Result};
use crate::grid::{AxisParity, Boundaries, MeridianGrid, ScalarField};
use crate::initdata::FamilyKind;

/// Every accepted configuration key, in rendering order.
pub const CONFIG_KEYS: [&str; 17] = [
    "grid.nr",
    "grid.nz",
    "domain.R",
    "domain.H",
    "time.T",
    "time.cfl",
    "time.dt",
    "init.family",
    "init.A",
    "init.B",
    "init.k",
    "init.m",
    "init.seed",
    "diag.cadence",
    "solver.tol",
    "solver.method",
    "output.dir",
];

pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_num<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config {
        line,
        message: format!("cannot parse '{value}' for {key}"),
    })
}

fn check(line: usize, ok: bool, message: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config { line, message: message() })
    }
}

/// Parses a configuration; omitted keys take the [`SimConfig`] defaults.
///
/// Blank lines and lines starting with `#` are ignored. Unknown or repeated
/// keys and out-of-range values are errors carrying the 1-based line number;
/// line 0 refers to constraints between keys.
pub fn parse_config(text: &str) -> Result<SimConfig> {
    let mut c = SimConfig::default();
    let mut seen: Vec<&str> = Vec::new();
    let mut family_line = 0;
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let s = raw.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let (key, value) = s.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected 'key = value', got '{s}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let known = CONFIG_KEYS.iter().find(|k| **k == key).ok_or_else(|| Error::Config {
            line,
            message: format!("unknown key '{key}'"),
        })?;
        check(line, !seen.contains(known), || format!("duplicate key '{key}'"))?;
        seen.push(known);
        check(line, !value.is_empty(), || format!("missing value for {key}"))?;
        match key {
            "grid.nr" | "grid.nz" => {
                let v: usize = parse_num(line, key, value)?;
                check(line, v >= 2, || format!("{key} must be >= 2, got {v}"))?;
                if key == "grid.nr" {
                    c.nr = v
                } else {
                    c.nz = v
                }
            }
            "domain.R" | "domain.H" => {
                let v: f64 = parse_num(line, key, value)?;
                check(line, v > 0.0 && v.is_finite(), || format!("{key} must be positive, got {value}"))?;
                if key == "domain.R" {
                    c.radius = v
                } else {
                    c.height = v
                }
            }
            "time.T" => {
                let v: f64 = parse_num(line, key, value)?;
                check(line, v >= 0.0 && v.is_finite(), || format!("time.T must be >= 0, got {value}"))?;
                c.t_end = v;
            }
            "time.cfl" => {
                let v: f64 = parse_num(line, key, value)?;
                check(line, v > 0.0 && v <= 1.0, || format!("time.cfl must be in (0, 1], got {value}"))?;
                c.cfl = v;
            }
            "time.dt" => {
                let v: f64 = parse_num(line, key, value)?;
                check(line, v > 0.0 && v.is_finite(), || format!("time.dt must be positive, got {value}"))?;
                c.dt = Some(v);
            }
            "init.family" => {
                c.family.kind = value.parse::<FamilyKind>().map_err(|message| Error::Config { line, message })?;
                family_line = line;
            }
            "init.A" | "init.B" => {
                let v: f64 = parse_num(line, key, value)?;
                check(line, v.is_finite(), || format!("{key} must be finite"))?;
                if key == "init.A" {
                    c.family.a = v
                } else {
                    c.family.b = v
                }
            }
            "init.k" => c.family.k = parse_num(line, key, value)?,
            "init.m" => {
                c.family.m = parse_num(line, key, value)?;
                family_line = line;
            }
            "init.seed" => c.family.seed = parse_num(line, key, value)?,
            "diag.cadence" => {
                let v: usize = parse_num(line, key, value)?;
                check(line, v >= 1, || "diag.cadence must be >= 1".into())?;
                c.cadence = v;
            }
            "solver.tol" => {
                let v: f64 = parse_num(line, key, value)?;
                check(line, v > 0.0 && v.is_finite(), || format!("solver.tol must be positive, got {value}"))?;
                c.solver.tol = v;
            }
            "solver.method" => {
                c.solver.method = match value {
                    "direct" => SolverMethod::Direct,
                    "cg" => SolverMethod::ConjugateGradient,
                    _ => {
                        return Err(Error::Config {
                            line,
                            message: format!("solver.method must be 'direct' or 'cg', got '{value}'"),
                        })
                    }
                }
            }
            "output.dir" => c.output_dir = PathBuf::from(value),
            _ => unreachable!("key list and match arms out of sync"),
        }
    }
    c.family.validate().map_err(|e| Error::Config {
        line: family_line,
        message: e.to_string(),
    })?;
    c.validate().map_err(|e| Error::Config {
        line: 0,
        message: e.to_string(),
    })?;
    Ok(c)
}

pub fn read_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Canonical text of a resolved config; `parse_config(render_config(c)) == c`.
pub fn render_config(c: &SimConfig) -> String {
    let mut lines = vec![
        format!("grid.nr = {}", c.nr),
        format!("grid.nz = {}", c.nz),
        format!("domain.R = {}", c.radius),
        format!("domain.H = {}", c.height),
        format!("time.T = {}", c.t_end),
        format!("time.cfl = {}", c.cfl),
    ];
    if let Some(dt) = c.dt {
        lines.push(format!("time.dt = {dt}"));
    }
    lines.extend([
        format!("init.family = {}", c.family.kind),
        format!("init.A = {}", c.family.a),
        format!("init.B = {}", c.family.b),
        format!("init.k = {}", c.family.k),
        format!("init.m = {}", c.family.m),
        format!("init.seed = {}", c.family.seed),
        format!("diag.cadence = {}", c.cadence),
        format!("solver.tol = {}", c.solver.tol),
        format!("solver.method = {}", c.solver.method.name()),
        format!("output.dir = {}", c.output_dir.display()),
    ]);
    let mut s = lines.join("\n");
    s.push('\n');
    s
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

/// Streams diagnostics rows to a CSV file, flushing after every row so a
/// crashed run leaves every emitted record on disk.
pub struct TimeseriesWriter {
    path: PathBuf,
    out: BufWriter<File>,
}

impl TimeseriesWriter {
    pub fn create(path: impl Into<PathBuf>) -> Result<Self> {
        let path = path.into();
        let mut out = create(&path)?;
        writeln!(out, "{}", DiagnosticsRecord::COLUMNS.join(",")).map_err(|e| Error::io(&path, e))?;
        Ok(Self { path, out })
    }

    pub fn write(&mut self, rec: &DiagnosticsRecord) -> Result<()> {
        let row: Vec<String> = rec.values().iter().map(|v| float(*v)).collect();
        writeln!(self.out, "{}", row.join(",")).map_err(|e| Error::io(&self.path, e))?;
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_timeseries(path: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut w = TimeseriesWriter::create(path)?;
    records.iter().try_for_each(|r| w.write(r))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::format(path, e.to_string())
}

pub fn read_timeseries(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = rd.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(DiagnosticsRecord::COLUMNS.iter().copied()) {
        return Err(Error::format(path, "unexpected time-series header"));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let mut v = [0.0; 19];
        for (k, cell) in row.iter().enumerate() {
            v[k] = cell
                .parse()
                .map_err(|_| Error::format(path, format!("bad number '{cell}' in row {}", out.len() + 1)))?;
        }
        out.push(DiagnosticsRecord::from_values(v));
    }
    Ok(out)
}

const SNAPSHOT_COLUMNS: [&str; 6] = ["i", "j", "r", "z", "Gamma", "Omega"];

/// Writes the interior of `Gamma` and `Omega`. The first line is a `#` comment
/// declaring the grid and time, followed by a CSV table in `(i, j)` row-major
/// order.
pub fn write_snapshot(path: &Path, s: &FlowState) -> Result<()> {
    let g = *s.grid();
    let mut out = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(
        out,
        "# nr={} nz={} R={} H={} t={}",
        g.nr(),
        g.nz(),
        float(g.radius()),
        float(g.height()),
        float(s.t())
    )
    .map_err(io)?;
    writeln!(out, "{}", SNAPSHOT_COLUMNS.join(",")).map_err(io)?;
    for i in 0..g.nr() as isize {
        for j in 0..g.nz() as isize {
            writeln!(
                out,
                "{i},{j},{},{},{},{}",
                float(g.r(i)),
                float(g.z(j)),
                float(s.gamma().at(i, j)),
                float(s.omega().at(i, j))
            )
            .map_err(io)?;
        }
    }
    out.flush().map_err(io)
}

/// Reads a snapshot written by [`write_snapshot`]; ghosts are rebuilt from
/// the boundary conditions. Any shape or ordering mismatch is a format error.
pub fn read_snapshot(path: &Path) -> Result<FlowState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let (head, body) = text
        .split_once('\n')
        .ok_or_else(|| Error::format(path, "missing grid declaration"))?;
    let decl = head
        .strip_prefix("# ")
        .ok_or_else(|| Error::format(path, "missing grid declaration"))?;
    let mut fields = [None::<&str>; 5];
    for kv in decl.split_whitespace() {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::format(path, format!("bad declaration '{kv}'")))?;
        let slot = ["nr", "nz", "R", "H", "t"]
            .iter()
            .position(|n| *n == k)
            .ok_or_else(|| Error::format(path, format!("unknown declaration '{k}'")))?;
        fields[slot] = Some(v);
    }
    let get = |k: usize| fields[k].ok_or_else(|| Error::format(path, "incomplete grid declaration"));
    let num = |k: usize| -> Result<f64> { get(k)?.parse().map_err(|_| Error::format(path, "bad grid declaration")) };
    let count = |k: usize| -> Result<usize> { get(k)?.parse().map_err(|_| Error::format(path, "bad grid declaration")) };
    let grid = MeridianGrid::new(count(0)?, count(1)?, num(2)?, num(3)?).map_err(|e| Error::format(path, e.to_string()))?;
    let t = num(4)?;

    let mut rd = csv::Reader::from_reader(body.as_bytes());
    let header = rd.headers().map_err(|e| csv_error(path, e))?;
    if header.iter().ne(SNAPSHOT_COLUMNS.iter().copied()) {
        return Err(Error::format(path, "unexpected snapshot header"));
    }
    let (nr, nz) = (grid.nr(), grid.nz());
    let mut gamma = Array2::zeros((nr, nz));
    let mut omega = Array2::zeros((nr, nz));
    let mut n = 0usize;
    for row in rd.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        if n >= nr * nz {
            return Err(Error::format(path, format!("more than {} rows for the declared grid", nr * nz)));
        }
        let (i, j) = (n / nz, n % nz);
        let cell = |k: usize| row.get(k).ok_or_else(|| Error::format(path, format!("short row {}", n + 1)));
        let idx = |k: usize| -> Result<usize> { cell(k)?.parse().map_err(|_| Error::format(path, format!("bad index in row {}", n + 1))) };
        let val = |k: usize| -> Result<f64> { cell(k)?.parse().map_err(|_| Error::format(path, format!("bad number in row {}", n + 1))) };
        if (idx(0)?, idx(1)?) != (i, j) {
            return Err(Error::format(path, format!("row {} is not cell ({i}, {j})", n + 1)));
        }
        gamma[[i, j]] = val(4)?;
        omega[[i, j]] = val(5)?;
        n += 1;
    }
    if n != nr * nz {
        return Err(Error::format(path, format!("expected {} rows, found {n}", nr * nz)));
    }
    let field = |values: &Array2<f64>| -> Result<ScalarField> {
        let mut f = ScalarField::zeros(grid, AxisParity::Even, Boundaries::unset());
        f.set_interior(values.view())?;
        Ok(f)
    };
    FlowState::new(t, field(&gamma)?, field(&omega)?)
}

/// Record of one run, written on every exit path.
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: SimConfig,
    pub version: String,
    /// Seconds since the Unix epoch.
    pub started: f64,
    pub finished: f64,
    /// One of `completed`, `blowup`, `solver_failure`.
    pub termination: String,
    pub steps: usize,
    pub t_reached: f64,
    pub message: Option<String>,
}

pub fn wall_clock() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

impl RunManifest {
    pub fn render(&self) -> String {
        let mut s = format!(
            "version = {}\nstarted = {:.3}\nfinished = {:.3}\ntermination = {}\nsteps = {}\nt_reached = {}\n",
            self.version,
            self.started,
            self.finished,
            self.termination,
            self.steps,
            float(self.t_reached)
        );
        if let Some(m) = &self.message {
            s.push_str(&format!("message = {}\n", m.replace('\n', " ")));
        }
        s.push_str("# resolved config\n");
        s.push_str(&render_config(&self.config));
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = create(path)?;
        out.write_all(self.render().as_bytes()).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }
}
