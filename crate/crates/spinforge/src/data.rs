// Copyright 2026 Spinforge Contributors
// SPDX-License-Identifier: Apache-2.0

//! Input data files for localization: g-tensors and field-setting
//! observations. Shipped defaults are embedded in the binary.

use std::path::Path;

use serde::{Deserialize, Serialize};
use spinforge_core::locate::{FieldCorrection, FieldSetting, GLabel, GTensor, Observation};

use crate::error::{CliError, Result};

pub const DEFAULT_G_TENSOR_JSON: &str = include_str!("../data/g_tensor_site1.json");
pub const DEFAULT_OBSERVATIONS_JSON: &str = include_str!("../data/observations.json");

/// g-tensor pair. `flip_b` negates the b-axis off-diagonal elements, which
/// converts between the two sign conventions for the crystal b axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GTensorFile {
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub flip_b: bool,
    pub ground: [[f64; 3]; 3],
    pub excited: Option<[[f64; 3]; 3]>,
}

impl GTensorFile {
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Data { file: name.to_string(), message: format!("{} at `{}`", e.inner(), e.path()) })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Self::parse(DEFAULT_G_TENSOR_JSON, "<shipped g_tensor_site1.json>"),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Data { file: p.display().to_string(), message: e.to_string() })?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    fn tensor(&self, m: [[f64; 3]; 3], label: GLabel) -> Result<GTensor> {
        let g = GTensor::new(m, label)?;
        Ok(if self.flip_b { g.flip_b() } else { g })
    }

    pub fn ground(&self) -> Result<GTensor> {
        self.tensor(self.ground, GLabel::Ground)
    }

    pub fn excited(&self) -> Result<Option<GTensor>> {
        self.excited.map(|m| self.tensor(m, GLabel::Excited)).transpose()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionEntry {
    pub db_gauss: f64,
    pub dtheta_deg: f64,
    pub dphi_deg: f64,
    pub sigma_db_gauss: f64,
    pub sigma_dtheta_deg: f64,
    pub sigma_dphi_deg: f64,
}

/// (value, 1σ error) pairs in kHz and degrees.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationEntry {
    pub omega0_khz: (f64, f64),
    pub omega_delta_khz: (f64, f64),
    pub alpha_deg: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettingEntry {
    pub theta_deg: f64,
    pub phi_deg: f64,
    /// Null when no measurement exists for the setting.
    pub observation: Option<ObservationEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationFile {
    #[serde(default)]
    pub description: String,
    pub b_gauss: f64,
    pub field_correction: Option<CorrectionEntry>,
    pub settings: Vec<SettingEntry>,
}

impl ObservationFile {
    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| CliError::Data { file: name.to_string(), message: format!("{} at `{}`", e.inner(), e.path()) })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Self::parse(DEFAULT_OBSERVATIONS_JSON, "<shipped observations.json>"),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Data { file: p.display().to_string(), message: e.to_string() })?;
                Self::parse(&text, &p.display().to_string())
            }
        }
    }

    pub fn correction(&self) -> FieldCorrection {
        self.field_correction.as_ref().map_or(FieldCorrection::NONE, |c| FieldCorrection {
            db_gauss: c.db_gauss,
            dtheta_deg: c.dtheta_deg,
            dphi_deg: c.dphi_deg,
            sigma_db_gauss: c.sigma_db_gauss,
            sigma_dtheta_deg: c.sigma_dtheta_deg,
            sigma_dphi_deg: c.sigma_dphi_deg,
        })
    }

    /// All field settings, measured or not.
    pub fn settings(&self) -> Result<Vec<FieldSetting>> {
        let c = self.correction();
        self.settings.iter().map(|s| Ok(FieldSetting::new(self.b_gauss, s.theta_deg, s.phi_deg, c)?)).collect()
    }

    /// Settings that carry an observation, paired with it.
    pub fn measured(&self) -> Result<(Vec<FieldSetting>, Vec<Observation>)> {
        let c = self.correction();
        let mut fs = Vec::new();
        let mut obs = Vec::new();
        for s in &self.settings {
            if let Some(o) = &s.observation {
                fs.push(FieldSetting::new(self.b_gauss, s.theta_deg, s.phi_deg, c)?);
                obs.push(Observation::from_khz_deg(o.omega0_khz, o.omega_delta_khz, o.alpha_deg)?);
            }
        }
        if fs.is_empty() {
            return Err(CliError::Data { file: "observations".into(), message: "no setting has an observation".into() });
        }
        Ok((fs, obs))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_files_parse() {
        let g = GTensorFile::load(None).unwrap();
        assert!(g.flip_b && g.excited.is_some());
        g.ground().unwrap();
        let o = ObservationFile::load(None).unwrap();
        assert_eq!(o.settings.len(), 4);
        let (fs, obs) = o.measured().unwrap();
        assert_eq!((fs.len(), obs.len()), (1, 1));
    }

    #[test]
    fn bad_file_names_path() {
        let e = GTensorFile::parse(r#"{"ground": [[1,2,3],[1,2,3]], "excited": null}"#, "x").unwrap_err();
        assert!(e.to_string().contains("ground"), "{e}");
    }
}
