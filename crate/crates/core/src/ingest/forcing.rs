//! Regular lat-lon forcing grids and their text format.
//!
//! Grid node `(j, i)` sits at `(lon0 + i * dlon, lat0 + j * dlat)`, so
//! `(lat0, lon0)` is the south-west node and `j` grows northward. In files
//! each frame is written north-to-south, one row per latitude.

use std::fmt::Write as _;
use std::path::Path;

use super::{parse_key_values, read_file, write_file, IngestError, Result};

/// Snap distance (in fractional grid steps) below which a query is treated
/// as lying exactly on a node.
const NODE_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ForcingVar {
    WindX,
    WindY,
    Pressure,
    IceAf,
}

impl ForcingVar {
    pub const ALL: [ForcingVar; 4] = [
        ForcingVar::WindX,
        ForcingVar::WindY,
        ForcingVar::Pressure,
        ForcingVar::IceAf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ForcingVar::WindX => "windx",
            ForcingVar::WindY => "windy",
            ForcingVar::Pressure => "pressure",
            ForcingVar::IceAf => "iceaf",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == name)
    }
}

/// Node layout of a regular lat-lon grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridGeometry {
    pub lat0: f64,
    pub lon0: f64,
    pub dlat: f64,
    pub dlon: f64,
    pub nlat: usize,
    pub nlon: usize,
}

impl GridGeometry {
    pub fn cells(&self) -> usize {
        self.nlat * self.nlon
    }

    pub fn node_lon(&self, i: usize) -> f64 {
        self.lon0 + i as f64 * self.dlon
    }

    pub fn node_lat(&self, j: usize) -> f64 {
        self.lat0 + j as f64 * self.dlat
    }

    pub fn lon_max(&self) -> f64 {
        self.node_lon(self.nlon - 1)
    }

    pub fn lat_max(&self) -> f64 {
        self.node_lat(self.nlat - 1)
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        axis_position(lon, self.lon0, self.dlon, self.nlon).is_some()
            && axis_position(lat, self.lat0, self.dlat, self.nlat).is_some()
    }

    /// Bilinear interpolation of a per-node field laid out `[j * nlon + i]`.
    pub fn interpolate(&self, field: &[f64], lon: f64, lat: f64) -> Option<f64> {
        let (i0, wx) = axis_position(lon, self.lon0, self.dlon, self.nlon)?;
        let (j0, wy) = axis_position(lat, self.lat0, self.dlat, self.nlat)?;
        Some(bilinear(field, self.nlon, i0, j0, wx, wy))
    }
}

/// Lower node index and weight of the upper node along one axis, or `None`
/// outside `[origin, origin + (n-1) * step]`.
fn axis_position(x: f64, origin: f64, step: f64, n: usize) -> Option<(usize, f64)> {
    if !x.is_finite() || n == 0 {
        return None;
    }
    let mut f = (x - origin) / step;
    let nearest = f.round();
    if (f - nearest).abs() < NODE_SNAP {
        f = nearest;
    }
    let last = (n - 1) as f64;
    if f < 0.0 || f > last {
        return None;
    }
    if n == 1 {
        return Some((0, 0.0));
    }
    let lower = (f.floor() as usize).min(n - 2);
    Some((lower, f - lower as f64))
}

fn bilinear(field: &[f64], nlon: usize, i0: usize, j0: usize, wx: f64, wy: f64) -> f64 {
    let at = |j: usize, i: usize| field[j * nlon + i];
    let mut v = (1.0 - wx) * (1.0 - wy) * at(j0, i0);
    if wx > 0.0 {
        v += wx * (1.0 - wy) * at(j0, i0 + 1);
    }
    if wy > 0.0 {
        v += (1.0 - wx) * wy * at(j0 + 1, i0);
        if wx > 0.0 {
            v += wx * wy * at(j0 + 1, i0 + 1);
        }
    }
    v
}

/// Gridded forcing time series. Values for each variable are stored
/// `[frame][j][i]` with `j` the latitude index (south to north).
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingGrid {
    pub geometry: GridGeometry,
    /// Epoch seconds of frame 0.
    pub t0: f64,
    /// Seconds between frames.
    pub dt: f64,
    pub nt: usize,
    variables: Vec<(ForcingVar, Vec<f64>)>,
}

impl ForcingGrid {
    pub fn new(
        geometry: GridGeometry,
        t0: f64,
        dt: f64,
        nt: usize,
        variables: Vec<(ForcingVar, Vec<f64>)>,
    ) -> Result<Self> {
        if !(geometry.dlat > 0.0 && geometry.dlon > 0.0 && dt > 0.0) {
            return Err(IngestError::Invalid("dlat, dlon and dt must be positive".into()));
        }
        if geometry.nlat == 0 || geometry.nlon == 0 || nt == 0 {
            return Err(IngestError::ShapeMismatch("grid dimensions must be non-zero".into()));
        }
        if ![geometry.lat0, geometry.lon0, t0].iter().all(|v| v.is_finite()) {
            return Err(IngestError::Invalid("grid origin must be finite".into()));
        }
        let expected = nt * geometry.cells();
        for (k, (var, values)) in variables.iter().enumerate() {
            if variables[..k].iter().any(|(v, _)| v == var) {
                return Err(IngestError::Invalid(format!("variable {} declared twice", var.name())));
            }
            if values.len() != expected {
                return Err(IngestError::ShapeMismatch(format!(
                    "{} has {} values, expected {}",
                    var.name(),
                    values.len(),
                    expected
                )));
            }
            for (idx, &value) in values.iter().enumerate() {
                let bad = !value.is_finite()
                    || (*var == ForcingVar::IceAf && !(0.0..=1.0).contains(&value));
                if bad {
                    let frame = idx / geometry.cells();
                    let cell = idx % geometry.cells();
                    return Err(IngestError::NonFinite {
                        var: var.name().into(),
                        frame,
                        row: geometry.nlat - 1 - cell / geometry.nlon,
                        col: cell % geometry.nlon,
                        value,
                    });
                }
            }
        }
        Ok(Self {
            geometry,
            t0,
            dt,
            nt,
            variables,
        })
    }

    pub fn variables(&self) -> impl Iterator<Item = ForcingVar> + '_ {
        self.variables.iter().map(|(v, _)| *v)
    }

    pub fn has(&self, var: ForcingVar) -> bool {
        self.variables.iter().any(|(v, _)| *v == var)
    }

    pub fn values(&self, var: ForcingVar) -> Option<&[f64]> {
        self.variables
            .iter()
            .find(|(v, _)| *v == var)
            .map(|(_, vals)| vals.as_slice())
    }

    /// One frame of `var`, laid out `[j * nlon + i]`.
    pub fn frame(&self, var: ForcingVar, k: usize) -> Option<&[f64]> {
        let n = self.geometry.cells();
        self.values(var).map(|v| &v[k * n..(k + 1) * n])
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn t_end(&self) -> f64 {
        self.time(self.nt - 1)
    }

    /// Bilinear in space, linear in time; no extrapolation.
    pub fn sample(&self, var: ForcingVar, lon: f64, lat: f64, t: f64) -> Result<f64> {
        let values = self
            .values(var)
            .ok_or_else(|| IngestError::UnknownVariable(var.name().into()))?;
        let g = &self.geometry;
        let oob = || IngestError::OutOfBounds { lon, lat, t };
        let (i0, wx) = axis_position(lon, g.lon0, g.dlon, g.nlon).ok_or_else(oob)?;
        let (j0, wy) = axis_position(lat, g.lat0, g.dlat, g.nlat).ok_or_else(oob)?;
        let (k0, wt) = axis_position(t, self.t0, self.dt, self.nt).ok_or_else(oob)?;
        let n = g.cells();
        let lower = bilinear(&values[k0 * n..(k0 + 1) * n], g.nlon, i0, j0, wx, wy);
        if wt == 0.0 {
            return Ok(lower);
        }
        let upper = bilinear(&values[(k0 + 1) * n..(k0 + 2) * n], g.nlon, i0, j0, wx, wy);
        Ok((1.0 - wt) * lower + wt * upper)
    }

    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let names: Vec<&str> = self.variables().map(ForcingVar::name).collect();
        let mut out = String::new();
        let _ = writeln!(out, "lat0={}", g.lat0);
        let _ = writeln!(out, "lon0={}", g.lon0);
        let _ = writeln!(out, "dlat={}", g.dlat);
        let _ = writeln!(out, "dlon={}", g.dlon);
        let _ = writeln!(out, "nlat={}", g.nlat);
        let _ = writeln!(out, "nlon={}", g.nlon);
        let _ = writeln!(out, "t0={}", self.t0);
        let _ = writeln!(out, "dt={}", self.dt);
        let _ = writeln!(out, "nt={}", self.nt);
        let _ = writeln!(out, "variables={}", names.join(","));
        for (_, values) in &self.variables {
            for k in 0..self.nt {
                let frame = &values[k * g.cells()..(k + 1) * g.cells()];
                for j in (0..g.nlat).rev() {
                    let row = &frame[j * g.nlon..(j + 1) * g.nlon];
                    let mut first = true;
                    for v in row {
                        if !first {
                            out.push(' ');
                        }
                        first = false;
                        let _ = write!(out, "{v}");
                    }
                    out.push('\n');
                }
            }
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_text())
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut header_end = 0;
        let mut payload_start_line = 0;
        let mut offset = 0;
        for (k, line) in text.split_inclusive('\n').enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') || trimmed.contains('=') {
                offset += line.len();
                header_end = offset;
                payload_start_line = k + 1;
            } else {
                break;
            }
        }
        let header = parse_key_values(path, &text[..header_end])?;
        let parse_err = |msg: String| IngestError::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg,
        };
        let get = |key: &str| {
            header
                .get(key)
                .ok_or_else(|| parse_err(format!("header is missing '{key}'")))
        };
        let num = |key: &str| -> Result<f64> {
            let raw = get(key)?;
            raw.parse::<f64>()
                .map_err(|_| parse_err(format!("bad value for '{key}': '{raw}'")))
        };
        let count = |key: &str| -> Result<usize> {
            let raw = get(key)?;
            raw.parse::<usize>()
                .map_err(|_| parse_err(format!("bad count for '{key}': '{raw}'")))
        };
        let geometry = GridGeometry {
            lat0: num("lat0")?,
            lon0: num("lon0")?,
            dlat: num("dlat")?,
            dlon: num("dlon")?,
            nlat: count("nlat")?,
            nlon: count("nlon")?,
        };
        let t0 = num("t0")?;
        let dt = num("dt")?;
        let nt = count("nt")?;
        let mut vars = Vec::new();
        for name in get("variables")?.split(',').map(str::trim).filter(|s| !s.is_empty()) {
            vars.push(ForcingVar::from_name(name).ok_or_else(|| IngestError::UnknownVariable(name.into()))?);
        }
        if vars.is_empty() {
            return Err(parse_err("no variables declared".into()));
        }

        let cells = geometry.cells();
        let mut tokens: Vec<f64> = Vec::with_capacity(vars.len() * nt * cells);
        for (k, line) in text[header_end..].lines().enumerate() {
            let line_no = payload_start_line + k + 1;
            if line.trim().is_empty() {
                continue;
            }
            let before = tokens.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| IngestError::Parse {
                    path: path.to_path_buf(),
                    line: line_no,
                    msg: format!("bad value '{tok}'"),
                })?;
                tokens.push(v);
            }
            if tokens.len() - before != geometry.nlon {
                return Err(IngestError::ShapeMismatch(format!(
                    "line {line_no} has {} values, expected nlon={}",
                    tokens.len() - before,
                    geometry.nlon
                )));
            }
        }
        let per_var = nt * cells;
        if tokens.len() != vars.len() * per_var {
            return Err(IngestError::ShapeMismatch(format!(
                "payload has {} values, header implies {} ({} variables x nt={} x nlat={} x nlon={})",
                tokens.len(),
                vars.len() * per_var,
                vars.len(),
                nt,
                geometry.nlat,
                geometry.nlon
            )));
        }
        // file rows run north to south; storage runs south to north
        let mut variables = Vec::with_capacity(vars.len());
        for (v, var) in vars.into_iter().enumerate() {
            let block = &tokens[v * per_var..(v + 1) * per_var];
            let mut values = vec![0.0; per_var];
            for k in 0..nt {
                for r in 0..geometry.nlat {
                    let j = geometry.nlat - 1 - r;
                    let src = &block[k * cells + r * geometry.nlon..k * cells + (r + 1) * geometry.nlon];
                    values[k * cells + j * geometry.nlon..k * cells + (j + 1) * geometry.nlon]
                        .copy_from_slice(src);
                }
            }
            variables.push((var, values));
        }
        Self::new(geometry, t0, dt, nt, variables)
    }
}

pub fn load_forcing(path: &Path) -> Result<ForcingGrid> {
    let text = read_file(path)?;
    ForcingGrid::parse(path, &text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::path::PathBuf;

    fn parse(text: &str) -> Result<ForcingGrid> {
        ForcingGrid::parse(&PathBuf::from("mem"), text)
    }

    const HEADER_1X1: &str = "lat0=29\nlon0=-95\ndlat=0.05\ndlon=0.05\nnlat=1\nnlon=1\nt0=0\ndt=900\nnt=1\n";

    #[test]
    fn single_cell_grid() {
        let g = parse(&format!("{HEADER_1X1}variables=windx\n3.0\n")).unwrap();
        assert_eq!(g.values(ForcingVar::WindX).unwrap(), &[3.0]);
        assert_eq!(g.sample(ForcingVar::WindX, -95.0, 29.0, 0.0).unwrap(), 3.0);
        assert!(g.sample(ForcingVar::WindX, -95.01, 29.0, 0.0).is_err());
    }

    #[test]
    fn frame_count_mismatch() {
        let text = "lat0=0\nlon0=0\ndlat=1\ndlon=1\nnlat=1\nnlon=2\nt0=0\ndt=1\nnt=4\nvariables=windx\n1 2\n1 2\n1 2\n";
        assert!(matches!(parse(text), Err(IngestError::ShapeMismatch(_))));
        let ragged = "lat0=0\nlon0=0\ndlat=1\ndlon=1\nnlat=1\nnlon=2\nt0=0\ndt=1\nnt=1\nvariables=windx\n1 2 3\n";
        assert!(matches!(parse(ragged), Err(IngestError::ShapeMismatch(_))));
    }

    #[test]
    fn ice_fraction_out_of_range() {
        let r = parse(&format!("{HEADER_1X1}variables=iceaf\n1.5\n"));
        assert!(matches!(r, Err(IngestError::NonFinite { .. })));
        let r = parse(&format!("{HEADER_1X1}variables=windx\nNaN\n"));
        assert!(matches!(r, Err(IngestError::NonFinite { .. })));
    }

    #[test]
    fn unknown_variable() {
        let r = parse(&format!("{HEADER_1X1}variables=humidity\n1.0\n"));
        assert!(matches!(r, Err(IngestError::UnknownVariable(n)) if n == "humidity"));
    }

    #[test]
    fn rows_are_north_to_south_in_files() {
        let text = "lat0=10\nlon0=0\ndlat=1\ndlon=1\nnlat=2\nnlon=2\nt0=0\ndt=1\nnt=1\nvariables=pressure\n3 4\n1 2\n";
        let g = parse(text).unwrap();
        // south-west node holds the first value of the last file row
        assert_eq!(g.sample(ForcingVar::Pressure, 0.0, 10.0, 0.0).unwrap(), 1.0);
        assert_eq!(g.sample(ForcingVar::Pressure, 1.0, 11.0, 0.0).unwrap(), 4.0);
        assert_eq!(g.to_text().lines().skip(10).collect::<Vec<_>>(), vec!["3 4", "1 2"]);
    }

    #[test]
    fn midpoint_is_average() {
        let geom = GridGeometry { lat0: 0.0, lon0: 0.0, dlat: 0.5, dlon: 0.5, nlat: 1, nlon: 2 };
        let g = ForcingGrid::new(geom, 0.0, 60.0, 1, vec![(ForcingVar::WindX, vec![2.0, 4.0])]).unwrap();
        assert_eq!(g.sample(ForcingVar::WindX, 0.25, 0.0, 0.0).unwrap(), 3.0);
        assert!(matches!(
            g.sample(ForcingVar::WindY, 0.25, 0.0, 0.0),
            Err(IngestError::UnknownVariable(_))
        ));
        assert!(matches!(
            g.sample(ForcingVar::WindX, 0.25, 0.0, 61.0),
            Err(IngestError::OutOfBounds { .. })
        ));
    }

    /// Direct weighted sum over the 8 surrounding nodes, written without the
    /// axis helpers used by the implementation.
    fn bilinear_oracle(g: &ForcingGrid, var: ForcingVar, lon: f64, lat: f64, t: f64) -> f64 {
        let geom = g.geometry;
        let vals = g.values(var).unwrap();
        let fx = ((lon - geom.lon0) / geom.dlon).clamp(0.0, (geom.nlon - 1) as f64);
        let fy = ((lat - geom.lat0) / geom.dlat).clamp(0.0, (geom.nlat - 1) as f64);
        let ft = ((t - g.t0) / g.dt).clamp(0.0, (g.nt - 1) as f64);
        let i0 = (fx.floor() as usize).min(geom.nlon - 2);
        let j0 = (fy.floor() as usize).min(geom.nlat - 2);
        let k0 = (ft.floor() as usize).min(g.nt - 2);
        let mut total = 0.0;
        for dk in 0..2 {
            for dj in 0..2 {
                for di in 0..2 {
                    let w = (1.0 - (fx - (i0 + di) as f64).abs())
                        * (1.0 - (fy - (j0 + dj) as f64).abs())
                        * (1.0 - (ft - (k0 + dk) as f64).abs());
                    let idx = (k0 + dk) * geom.cells() + (j0 + dj) * geom.nlon + i0 + di;
                    total += w * vals[idx];
                }
            }
        }
        total
    }

    fn arb_grid() -> impl Strategy<Value = ForcingGrid> {
        (2usize..6, 2usize..6, 2usize..5, 0.01f64..0.5, 0.01f64..0.5).prop_flat_map(
            |(nlat, nlon, nt, dlat, dlon)| {
                proptest::collection::vec(-50.0f64..50.0, nlat * nlon * nt).prop_map(move |vals| {
                    let geom = GridGeometry { lat0: 25.0, lon0: -97.0, dlat, dlon, nlat, nlon };
                    ForcingGrid::new(geom, 1.0e9, 900.0, nt, vec![(ForcingVar::WindX, vals)]).unwrap()
                })
            },
        )
    }

    proptest! {
        #[test]
        fn matches_weight_sum_oracle(g in arb_grid(), u in 0.0f64..1.0, v in 0.0f64..1.0, w in 0.0f64..1.0) {
            let geom = g.geometry;
            let lon = geom.lon0 + u * (geom.lon_max() - geom.lon0);
            let lat = geom.lat0 + v * (geom.lat_max() - geom.lat0);
            let t = g.t0 + w * (g.t_end() - g.t0);
            let got = g.sample(ForcingVar::WindX, lon, lat, t).unwrap();
            let want = bilinear_oracle(&g, ForcingVar::WindX, lon, lat, t);
            prop_assert!((got - want).abs() < 1e-9, "{} vs {}", got, want);
        }

        #[test]
        fn exact_on_nodes_and_linear_along_axes(g in arb_grid(), a in 0usize..5, b in 0usize..5, k in 0usize..4) {
            let geom = g.geometry;
            let k = k % g.nt;
            let j = a % geom.nlat;
            let i = b % (geom.nlon - 1);
            let t = g.time(k);
            let vals = g.frame(ForcingVar::WindX, k).unwrap();
            let left = g.sample(ForcingVar::WindX, geom.node_lon(i), geom.node_lat(j), t).unwrap();
            let right = g.sample(ForcingVar::WindX, geom.node_lon(i + 1), geom.node_lat(j), t).unwrap();
            prop_assert_eq!(left, vals[j * geom.nlon + i]);
            prop_assert_eq!(right, vals[j * geom.nlon + i + 1]);
            let mid_lon = 0.5 * (geom.node_lon(i) + geom.node_lon(i + 1));
            let mid = g.sample(ForcingVar::WindX, mid_lon, geom.node_lat(j), t).unwrap();
            prop_assert!((mid - 0.5 * (left + right)).abs() < 1e-9);
        }

        #[test]
        fn text_round_trip(g in arb_grid()) {
            let text = g.to_text();
            let back = parse(&text).unwrap();
            prop_assert_eq!(&back, &g);
            prop_assert_eq!(back.to_text(), text);
        }
    }
}
