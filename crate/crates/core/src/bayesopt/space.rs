use serde::{Deserialize, Serialize};

use crate::controller::MpcParams;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Integer,
    Continuous,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDim {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub kind: ParamKind,
}

impl ParamDim {
    pub fn new(name: &str, lower: f64, upper: f64, kind: ParamKind) -> Self {
        Self { name: name.to_string(), lower, upper, kind }
    }

    pub fn range(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Box-bounded search space with optional integer dimensions. When both
/// `np` and `nc` are present, points are repaired so that `nc <= np`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    dims: Vec<ParamDim>,
}

pub const MPC_DIM_NAMES: [&str; 7] = ["np", "nc", "qx", "qy", "qtheta", "c1", "c2"];

impl ParamSpace {
    pub fn new(dims: Vec<ParamDim>) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidConfig("parameter space has no dimensions".into()));
        }
        for (i, d) in dims.iter().enumerate() {
            if !(d.lower < d.upper) || !d.lower.is_finite() || !d.upper.is_finite() {
                return Err(Error::InvalidConfig(format!("dimension {} needs finite lower < upper", d.name)));
            }
            if dims[..i].iter().any(|o| o.name == d.name) {
                return Err(Error::InvalidConfig(format!("duplicate dimension {}", d.name)));
            }
        }
        Ok(Self { dims })
    }

    /// Tuning space of the MPC parameters.
    pub fn mpc_default() -> Self {
        use ParamKind::*;
        Self {
            dims: vec![
                ParamDim::new("np", 5.0, 40.0, Integer),
                ParamDim::new("nc", 1.0, 40.0, Integer),
                ParamDim::new("qx", 0.1, 10.0, Continuous),
                ParamDim::new("qy", 0.1, 10.0, Continuous),
                ParamDim::new("qtheta", 0.1, 10.0, Continuous),
                ParamDim::new("c1", 1.0, 20.0, Continuous),
                ParamDim::new("c2", 5.0, 40.0, Continuous),
            ],
        }
    }

    pub fn dims(&self) -> &[ParamDim] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(x).map(|(d, v)| (v - d.lower) / d.range()).collect()
    }

    pub fn denormalize(&self, u: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(u).map(|(d, v)| d.lower + v * d.range()).collect()
    }

    /// Clamps to bounds, rounds integer dimensions and repairs `nc <= np`.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = self
            .dims
            .iter()
            .zip(x)
            .map(|(d, &v)| {
                let v = v.clamp(d.lower, d.upper);
                match d.kind {
                    ParamKind::Integer => v.round().clamp(d.lower.ceil(), d.upper.floor()),
                    ParamKind::Continuous => v,
                }
            })
            .collect();
        if let (Some(np), Some(nc)) = (self.index_of("np"), self.index_of("nc")) {
            out[nc] = out[nc].min(out[np]);
        }
        out
    }

    /// Projection of a unit-cube point, returned in unit coordinates.
    pub fn project_unit(&self, u: &[f64]) -> Vec<f64> {
        self.normalize(&self.project(&self.denormalize(u)))
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dims.len()
            && self.dims.iter().zip(x).all(|(d, &v)| {
                v >= d.lower && v <= d.upper && (d.kind == ParamKind::Continuous || v.fract() == 0.0)
            })
            && match (self.index_of("np"), self.index_of("nc")) {
                (Some(np), Some(nc)) => x[nc] <= x[np],
                _ => true,
            }
    }

    fn mpc_indices(&self) -> Result<[usize; 7]> {
        let mut idx = [0; 7];
        for (slot, name) in idx.iter_mut().zip(MPC_DIM_NAMES) {
            *slot = self
                .index_of(name)
                .ok_or_else(|| Error::InvalidConfig(format!("parameter space lacks dimension {name}")))?;
        }
        Ok(idx)
    }

    pub fn to_params(&self, x: &[f64]) -> Result<MpcParams> {
        let idx = self.mpc_indices()?;
        let x = self.project(x);
        let p = MpcParams {
            np: x[idx[0]] as usize,
            nc: x[idx[1]] as usize,
            qx: x[idx[2]],
            qy: x[idx[3]],
            qtheta: x[idx[4]],
            c1: x[idx[5]],
            c2: x[idx[6]],
        };
        p.validate()?;
        Ok(p)
    }

    pub fn from_params(&self, p: &MpcParams) -> Result<Vec<f64>> {
        let idx = self.mpc_indices()?;
        let values = [p.np as f64, p.nc as f64, p.qx, p.qy, p.qtheta, p.c1, p.c2];
        let mut x = vec![0.0; self.len()];
        for (i, v) in idx.iter().zip(values) {
            x[*i] = v;
        }
        Ok(x)
    }
}
