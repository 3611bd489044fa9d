use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::geometry::PhasePoint;
use crate::output::sha256_hex;
use crate::potentials::PotentialSpec;
use crate::presets::Preset;
use crate::scattering::{dyadic_grid, DEFAULT_QUAD_TOL};
use crate::soft::{DEFAULT_ABS_TOL, DEFAULT_REL_TOL};

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Datum {
    Preset {
        preset: Preset,
    },
    Explicit {
        x: [f64; 3],
        x_bar: [f64; 3],
        v: [f64; 3],
        v_bar: [f64; 3],
    },
}

impl Datum {
    pub fn phase_point(&self) -> PhasePoint {
        match self {
            Datum::Preset { preset } => preset.datum(),
            Datum::Explicit { x, x_bar, v, v_bar } => PhasePoint::from_arrays(*x, *x_bar, *v, *v_bar),
        }
    }
}

/// `ε = 2^{-k}` for `k = k_min..=k_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpsGrid {
    pub k_min: i32,
    pub k_max: i32,
}

impl EpsGrid {
    pub fn values(&self) -> Vec<f64> {
        dyadic_grid(self.k_min, self.k_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub quad_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rel_tol: DEFAULT_REL_TOL,
            abs_tol: DEFAULT_ABS_TOL,
            quad_tol: DEFAULT_QUAD_TOL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub potential: PotentialSpec,
    pub datum: Datum,
    /// Hardening parameter for the single-ε commands.
    pub eps: f64,
    pub eps_grid: EpsGrid,
    pub interval: (f64, f64),
    pub tolerances: Tolerances,
    /// Sample count for the hard trajectory table.
    pub samples: usize,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            potential: PotentialSpec::default(),
            datum: Datum::Preset { preset: Preset::HeadOn },
            eps: 1e-3,
            eps_grid: EpsGrid { k_min: 6, k_max: 20 },
            interval: (-0.5, 2.5),
            tolerances: Tolerances::default(),
            samples: 2001,
            out: PathBuf::from("out"),
            threads: None,
        }
    }
}

/// Command-line values that replace config entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub eps: Option<f64>,
    pub beta: Option<f64>,
    pub preset: Option<Preset>,
    pub out: Option<PathBuf>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub quad_tol: Option<f64>,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.eps {
            self.eps = v;
        }
        if let Some(v) = o.beta {
            self.potential.beta = v;
        }
        if let Some(p) = o.preset {
            self.datum = Datum::Preset { preset: p };
        }
        if let Some(v) = &o.out {
            self.out = v.clone();
        }
        if let Some(v) = o.rel_tol {
            self.tolerances.rel_tol = v;
        }
        if let Some(v) = o.abs_tol {
            self.tolerances.abs_tol = v;
        }
        if let Some(v) = o.quad_tol {
            self.tolerances.quad_tol = v;
        }
        if o.threads.is_some() {
            self.threads = o.threads;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        let (t0, t1) = self.interval;
        if !(t0.is_finite() && t1.is_finite() && t0 < t1) {
            return bad("interval must satisfy T0 < T1");
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return bad("eps must be positive");
        }
        let g = self.eps_grid;
        if g.k_min < 1 || g.k_max > 60 || g.k_min >= g.k_max {
            return bad("eps_grid needs 1 <= k_min < k_max <= 60");
        }
        let t = self.tolerances;
        if [t.rel_tol, t.abs_tol, t.quad_tol]
            .iter()
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return bad("tolerances must be positive");
        }
        if self.samples < 2 {
            return bad("samples must be at least 2");
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1");
        }
        if !self.datum.phase_point().is_finite() {
            return bad("initial datum must be finite");
        }
        Ok(())
    }

    /// Hash of the experiment content. Output location and thread count
    /// are excluded, so they never change file contents.
    pub fn content_hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        c.threads = None;
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let mut c: ExperimentConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        c.validate().unwrap();
        let h = c.content_hash();
        c.apply(&Overrides {
            threads: Some(8),
            out: Some("elsewhere".into()),
            ..Default::default()
        });
        assert_eq!(c.content_hash(), h);
        c.apply(&Overrides {
            beta: Some(4.0),
            preset: Some(Preset::Oblique),
            ..Default::default()
        });
        assert_ne!(c.content_hash(), h);
        assert_eq!(c.potential.beta, 4.0);
        assert_eq!(c.datum.phase_point(), Preset::Oblique.datum());
    }

    #[test]
    fn datum_forms() {
        let c: ExperimentConfig = serde_json::from_str(
            r#"{"datum": {"x": [0,0,0], "x_bar": [2,0,0], "v": [0,0,0], "v_bar": [0,0,0]}, "interval": [0, 1]}"#,
        )
        .unwrap();
        assert_eq!(c.datum.phase_point().separation(), 2.0);
        assert_eq!(c.interval, (0.0, 1.0));
        let p: ExperimentConfig = serde_json::from_str(r#"{"datum": {"preset": "grazing"}}"#).unwrap();
        assert_eq!(
            p.datum,
            Datum::Preset {
                preset: Preset::Grazing
            }
        );
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn rejects_bad_values() {
        let c = ExperimentConfig {
            interval: (1.0, 0.0),
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            eps_grid: EpsGrid { k_min: 5, k_max: 5 },
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.tolerances.rel_tol = 0.0;
        assert!(c.validate().is_err());
    }
}
