//! Harmonic tide synthesis and observed-minus-predicted residuals.
//!
//! Phases are taken relative to a caller-supplied reference epoch; nodal
//! factors and equilibrium arguments are not applied.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::ingest::{read_file, read_table, write_file, GaugeSeries, IngestError};

#[derive(Debug, Error)]
pub enum TideError {
    #[error("observed has {observed} samples but predicted has {predicted}")]
    LengthMismatch { observed: usize, predicted: usize },
    #[error("unknown constituent '{0}'")]
    UnknownConstituent(String),
    #[error("invalid harmonic: {0}")]
    Invalid(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}

/// The eight major constituents carried as features.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constituent {
    M2,
    S2,
    N2,
    K2,
    O1,
    K1,
    P1,
    Q1,
}

impl Constituent {
    pub const ALL: [Constituent; 8] = [
        Constituent::M2,
        Constituent::S2,
        Constituent::N2,
        Constituent::K2,
        Constituent::O1,
        Constituent::K1,
        Constituent::P1,
        Constituent::Q1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Constituent::M2 => "M2",
            Constituent::S2 => "S2",
            Constituent::N2 => "N2",
            Constituent::K2 => "K2",
            Constituent::O1 => "O1",
            Constituent::K1 => "K1",
            Constituent::P1 => "P1",
            Constituent::Q1 => "Q1",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Angular speed in degrees per mean solar hour.
    pub fn speed(self) -> f64 {
        match self {
            Constituent::M2 => 28.984_104_2,
            Constituent::S2 => 30.0,
            Constituent::N2 => 28.439_729_5,
            Constituent::K2 => 30.082_137_3,
            Constituent::O1 => 13.943_035_6,
            Constituent::K1 => 15.041_068_6,
            Constituent::P1 => 14.958_931_4,
            Constituent::Q1 => 13.398_660_9,
        }
    }

    /// Angular speed in radians per second.
    pub fn omega(self) -> f64 {
        self.speed().to_radians() / 3600.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Harmonic {
    /// Meters, non-negative.
    pub amplitude: f64,
    /// Degrees in [0, 360).
    pub phase: f64,
}

/// Amplitude and phase per constituent at one location.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HarmonicSet {
    terms: BTreeMap<Constituent, Harmonic>,
}

impl HarmonicSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, c: Constituent, amplitude: f64, phase: f64) -> Result<(), TideError> {
        if !(amplitude.is_finite() && amplitude >= 0.0) {
            return Err(TideError::Invalid(format!("{} amplitude {amplitude}", c.name())));
        }
        if !phase.is_finite() {
            return Err(TideError::Invalid(format!("{} phase {phase}", c.name())));
        }
        let phase = phase.rem_euclid(360.0);
        self.terms.insert(c, Harmonic { amplitude, phase });
        Ok(())
    }

    pub fn get(&self, c: Constituent) -> Option<Harmonic> {
        self.terms.get(&c).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (Constituent, Harmonic)> + '_ {
        self.terms.iter().map(|(c, h)| (*c, *h))
    }

    /// Amplitude of `c`, zero when absent.
    pub fn amplitude(&self, c: Constituent) -> f64 {
        self.get(c).map_or(0.0, |h| h.amplitude)
    }

    pub fn scaled(&self, factor: f64) -> HarmonicSet {
        HarmonicSet {
            terms: self
                .terms
                .iter()
                .map(|(c, h)| {
                    (
                        *c,
                        Harmonic {
                            amplitude: h.amplitude * factor,
                            phase: h.phase,
                        },
                    )
                })
                .collect(),
        }
    }
}

/// `sum_k A_k cos(omega_k (t - t_ref) - phi_k)` at each time.
pub fn predict_tide(h: &HarmonicSet, times: &[f64], t_ref: f64) -> Vec<f64> {
    let terms: Vec<(f64, f64, f64)> = h
        .iter()
        .map(|(c, term)| (c.omega(), term.amplitude, term.phase.to_radians()))
        .collect();
    times
        .iter()
        .map(|&t| {
            let dt = t - t_ref;
            terms
                .iter()
                .map(|&(omega, amp, phase)| amp * (omega * dt - phase).cos())
                .sum()
        })
        .collect()
}

/// Observed minus predicted, sample by sample.
pub fn residual(g: &GaugeSeries) -> Result<Vec<f64>, TideError> {
    residual_of(&g.observed, &g.predicted)
}

pub fn residual_of(observed: &[f64], predicted: &[f64]) -> Result<Vec<f64>, TideError> {
    if observed.len() != predicted.len() {
        return Err(TideError::LengthMismatch {
            observed: observed.len(),
            predicted: predicted.len(),
        });
    }
    Ok(observed.iter().zip(predicted).map(|(o, p)| o - p).collect())
}

/// Harmonic sets keyed by point id, as stored in `point_id,constituent,amplitude,phase`.
pub fn load_harmonics(path: &Path) -> Result<BTreeMap<u64, HarmonicSet>, TideError> {
    let text = read_file(path)?;
    let rows = read_table(path, &text, &["point_id", "constituent", "amplitude", "phase"])?;
    let mut out: BTreeMap<u64, HarmonicSet> = BTreeMap::new();
    for row in &rows {
        let id: u64 = row.parse(0)?;
        let c = Constituent::from_name(row.field(1))
            .ok_or_else(|| TideError::UnknownConstituent(row.field(1).to_string()))?;
        let set = out.entry(id).or_default();
        if set.get(c).is_some() {
            return Err(row.error(format!("constituent {} repeated for point {id}", c.name())).into());
        }
        set.insert(c, row.parse_finite(2)?, row.parse_finite(3)?)
            .map_err(|e| row.error(e.to_string()))?;
    }
    Ok(out)
}

pub fn harmonics_to_csv(sets: &BTreeMap<u64, HarmonicSet>) -> String {
    let mut out = String::from("point_id,constituent,amplitude,phase\n");
    for (id, set) in sets {
        for (c, h) in set.iter() {
            let _ = writeln!(out, "{id},{},{},{}", c.name(), h.amplitude, h.phase);
        }
    }
    out
}

pub fn write_harmonics(path: &Path, sets: &BTreeMap<u64, HarmonicSet>) -> Result<(), TideError> {
    Ok(write_file(path, &harmonics_to_csv(sets))?)
}
