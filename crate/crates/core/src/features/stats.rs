//! Temporal reductions of forcing grids and box-neighborhood statistics.

use crate::ingest::{ForcingGrid, ForcingVar, GridGeometry, MeshPoint};

use super::FeatureError;

/// Forcing quantities reduced over time. `Magnitude` is derived per time
/// step from the two wind components.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TemporalVar {
    WindX,
    WindY,
    Magnitude,
    Pressure,
    IceAf,
}

impl TemporalVar {
    pub fn name(self) -> &'static str {
        match self {
            TemporalVar::WindX => "windx",
            TemporalVar::WindY => "windy",
            TemporalVar::Magnitude => "magnitude",
            TemporalVar::Pressure => "pressure",
            TemporalVar::IceAf => "iceaf",
        }
    }

    pub fn for_config(include_ice: bool) -> Vec<TemporalVar> {
        let mut v = vec![
            TemporalVar::WindX,
            TemporalVar::WindY,
            TemporalVar::Magnitude,
            TemporalVar::Pressure,
        ];
        if include_ice {
            v.push(TemporalVar::IceAf);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stat {
    Mean,
    Max,
    Min,
}

impl Stat {
    pub const ALL: [Stat; 3] = [Stat::Mean, Stat::Max, Stat::Min];

    pub fn name(self) -> &'static str {
        match self {
            Stat::Mean => "mean",
            Stat::Max => "max",
            Stat::Min => "min",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

impl Summary {
    pub fn get(&self, s: Stat) -> f64 {
        match s {
            Stat::Mean => self.mean,
            Stat::Max => self.max,
            Stat::Min => self.min,
        }
    }
}

/// Running mean/max/min, summing in insertion order.
#[derive(Debug, Clone, Copy)]
struct Accumulator {
    sum: f64,
    max: f64,
    min: f64,
    count: usize,
}

impl Accumulator {
    fn new() -> Self {
        Self {
            sum: 0.0,
            max: f64::NEG_INFINITY,
            min: f64::INFINITY,
            count: 0,
        }
    }

    fn push(&mut self, v: f64) {
        self.sum += v;
        self.max = self.max.max(v);
        self.min = self.min.min(v);
        self.count += 1;
    }

    fn finish(&self) -> Option<Summary> {
        (self.count > 0).then(|| Summary {
            mean: self.sum / self.count as f64,
            max: self.max,
            min: self.min,
        })
    }
}

/// One per-cell field named like `max_windx`.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalField {
    pub var: TemporalVar,
    pub stat: Stat,
    pub values: Vec<f64>,
}

impl TemporalField {
    pub fn name(&self) -> String {
        format!("{}_{}", self.stat.name(), self.var.name())
    }
}

/// Temporal statistics over a window for every grid cell, ordered by
/// variable then by mean/max/min.
#[derive(Debug, Clone, PartialEq)]
pub struct TemporalStats {
    pub geometry: GridGeometry,
    pub frames_used: usize,
    pub fields: Vec<TemporalField>,
}

impl TemporalStats {
    pub fn field(&self, var: TemporalVar, stat: Stat) -> Option<&[f64]> {
        self.fields
            .iter()
            .find(|f| f.var == var && f.stat == stat)
            .map(|f| f.values.as_slice())
    }
}

fn frame_value(grid: &ForcingGrid, var: TemporalVar, k: usize, cell: usize) -> f64 {
    let get = |v: ForcingVar| grid.frame(v, k).expect("variable checked")[cell];
    match var {
        TemporalVar::WindX => get(ForcingVar::WindX),
        TemporalVar::WindY => get(ForcingVar::WindY),
        TemporalVar::Magnitude => {
            let (x, y) = (get(ForcingVar::WindX), get(ForcingVar::WindY));
            (x * x + y * y).sqrt()
        }
        TemporalVar::Pressure => get(ForcingVar::Pressure),
        TemporalVar::IceAf => get(ForcingVar::IceAf),
    }
}

/// Mean, max and min over the frames whose times fall in the closed window
/// `[t_start, t_end]`, for each requested variable and cell.
pub fn temporal_stats(
    grid: &ForcingGrid,
    window: (f64, f64),
    vars: &[TemporalVar],
) -> Result<TemporalStats, FeatureError> {
    for &var in vars {
        let needed: &[ForcingVar] = match var {
            TemporalVar::WindX => &[ForcingVar::WindX],
            TemporalVar::WindY => &[ForcingVar::WindY],
            TemporalVar::Magnitude => &[ForcingVar::WindX, ForcingVar::WindY],
            TemporalVar::Pressure => &[ForcingVar::Pressure],
            TemporalVar::IceAf => &[ForcingVar::IceAf],
        };
        if let Some(missing) = needed.iter().find(|v| !grid.has(**v)) {
            return Err(FeatureError::MissingVariable(missing.name().into()));
        }
    }
    let frames: Vec<usize> = (0..grid.nt)
        .filter(|&k| {
            let t = grid.time(k);
            t >= window.0 && t <= window.1
        })
        .collect();
    if frames.is_empty() {
        return Err(FeatureError::EmptyWindow {
            start: window.0,
            end: window.1,
        });
    }
    let cells = grid.geometry.cells();
    let mut fields = Vec::with_capacity(vars.len() * 3);
    for &var in vars {
        let mut summaries = Vec::with_capacity(cells);
        for cell in 0..cells {
            let mut acc = Accumulator::new();
            for &k in &frames {
                acc.push(frame_value(grid, var, k, cell));
            }
            summaries.push(acc.finish().expect("window is non-empty"));
        }
        for stat in Stat::ALL {
            fields.push(TemporalField {
                var,
                stat,
                values: summaries.iter().map(|s| s.get(stat)).collect(),
            });
        }
    }
    Ok(TemporalStats {
        geometry: grid.geometry,
        frames_used: frames.len(),
        fields,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Neighborhood {
    /// Side length in degrees of a box centered on the point.
    Box(f64),
    Domain,
}

/// Closed `[center - half, center + half]` membership, shared by every
/// neighborhood query so boundary handling is uniform.
#[inline]
pub fn in_box(x: f64, center: f64, side: f64) -> bool {
    let half = side / 2.0;
    x >= center - half && x <= center + half
}

fn index_range(center: f64, side: f64, origin: f64, step: f64, n: usize) -> std::ops::Range<usize> {
    let half = side / 2.0;
    let lo = ((center - half - origin) / step).floor() - 1.0;
    let hi = ((center + half - origin) / step).ceil() + 1.0;
    let lo = lo.max(0.0) as usize;
    let hi = (hi.max(-1.0) + 1.0).min(n as f64) as usize;
    lo.min(hi)..hi
}

/// Statistics of a per-cell grid field over the cells whose centers fall in
/// the neighborhood of `(lon, lat)`. Cells are visited south to north, west
/// to east.
pub fn spatial_stats(
    field: &[f64],
    geometry: &GridGeometry,
    lon: f64,
    lat: f64,
    neighborhood: Neighborhood,
) -> Result<Summary, FeatureError> {
    let mut acc = Accumulator::new();
    match neighborhood {
        Neighborhood::Domain => field.iter().for_each(|&v| acc.push(v)),
        Neighborhood::Box(side) => {
            let rows = index_range(lat, side, geometry.lat0, geometry.dlat, geometry.nlat);
            let cols = index_range(lon, side, geometry.lon0, geometry.dlon, geometry.nlon);
            for j in rows {
                if !in_box(geometry.node_lat(j), lat, side) {
                    continue;
                }
                for i in cols.clone() {
                    if in_box(geometry.node_lon(i), lon, side) {
                        acc.push(field[j * geometry.nlon + i]);
                    }
                }
            }
        }
    }
    acc.finish().ok_or(FeatureError::EmptyNeighborhood { lon, lat })
}

/// Index of mesh points sorted by longitude for box queries.
#[derive(Debug, Clone)]
pub struct PointIndex {
    by_lon: Vec<(f64, usize)>,
}

impl PointIndex {
    pub fn new(points: &[MeshPoint]) -> Self {
        let mut by_lon: Vec<(f64, usize)> = points.iter().enumerate().map(|(k, p)| (p.lon, k)).collect();
        by_lon.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        Self { by_lon }
    }

    /// Positions (into the indexed slice, ascending) of points inside the box.
    pub fn query(&self, points: &[MeshPoint], lon: f64, lat: f64, side: f64) -> Vec<usize> {
        let half = side / 2.0;
        let start = self.by_lon.partition_point(|&(x, _)| x < lon - half);
        let mut hits: Vec<usize> = self.by_lon[start..]
            .iter()
            .take_while(|&&(x, _)| x <= lon + half)
            .map(|&(_, k)| k)
            .filter(|&k| in_box(points[k].lon, lon, side) && in_box(points[k].lat, lat, side))
            .collect();
        hits.sort_unstable();
        hits
    }
}

/// Statistics of a per-point mesh attribute over points in the box, in
/// ascending point order.
pub fn mesh_box_stats(
    values: &[f64],
    points: &[MeshPoint],
    index: &PointIndex,
    lon: f64,
    lat: f64,
    side: f64,
) -> Result<Summary, FeatureError> {
    let mut acc = Accumulator::new();
    for k in index.query(points, lon, lat, side) {
        acc.push(values[k]);
    }
    acc.finish().ok_or(FeatureError::EmptyNeighborhood { lon, lat })
}
