//! Larson-Miller time-temperature parameter models.
//!
//! The parameter is the standard grouping
//! `P_LM = T_r * (C_LM + log10 t_r) / 1000` with `T_r` in Rankine, and the
//! master curve is a polynomial in log10 stress,
//! `h_xi(log10 sigma) = sum_j xi_j * (log10 sigma)^j`, fit by ordinary
//! least squares. All logs here are base 10; the conventional constant
//! `C_LM = 20` is tied to that base.

use serde::{Deserialize, Serialize};

use crate::data::CreepRecord;
use crate::error::{Error, Result};
use crate::linalg::{least_squares, Matrix};

/// Polynomial master curve of degree `d` with coefficients `xi`
/// (constant term first).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmModel {
    pub d: usize,
    pub xi: Vec<f64>,
    pub c_lm: f64,
}

impl LmModel {
    pub fn validate(&self) -> Result<()> {
        if self.d < 1 {
            return Err(Error::Config("polynomial degree must be >= 1".into()));
        }
        if self.xi.len() != self.d + 1 {
            return Err(Error::shape_mismatch(
                "larson-miller coefficients",
                format!("{} values", self.d + 1),
                format!("{}", self.xi.len()),
            ));
        }
        if self.xi.iter().any(|v| !v.is_finite()) || !self.c_lm.is_finite() {
            return Err(Error::Numeric("non-finite model coefficients".into()));
        }
        Ok(())
    }

    /// `h_xi(x)` via Horner evaluation.
    pub fn master_curve(&self, log10_stress: f64) -> f64 {
        self.xi.iter().rev().fold(0.0, |acc, c| acc * log10_stress + c)
    }
}

/// Celsius to Rankine.
pub fn rankine(temp_c: f64) -> f64 {
    (temp_c + 273.15) * 1.8
}

/// The Larson-Miller parameter of one observation.
pub fn lm_parameter(t_r_hours: f64, temp_c: f64, c_lm: f64) -> Result<f64> {
    if !(t_r_hours > 0.0) || !t_r_hours.is_finite() {
        return Err(Error::Domain(format!(
            "rupture time must be positive, got {t_r_hours}"
        )));
    }
    if !(temp_c > -273.15) || !temp_c.is_finite() {
        return Err(Error::Domain(format!(
            "temperature must be above absolute zero, got {temp_c}"
        )));
    }
    Ok(rankine(temp_c) * (c_lm + t_r_hours.log10()) / 1000.0)
}

/// Rupture time in hours recovered from a parameter value.
pub fn lm_invert(p_lm: f64, temp_c: f64, c_lm: f64) -> Result<f64> {
    if !(temp_c > -273.15) || !temp_c.is_finite() {
        return Err(Error::Domain(format!(
            "temperature must be above absolute zero, got {temp_c}"
        )));
    }
    Ok(10f64.powf(1000.0 * p_lm / rankine(temp_c) - c_lm))
}

/// Fits the degree-`d` master curve by least squares over the records'
/// (log10 stress, parameter) pairs.
pub fn lm_fit(records: &[CreepRecord], degree: usize, c_lm: f64) -> Result<LmModel> {
    if degree < 1 {
        return Err(Error::Config("polynomial degree must be >= 1".into()));
    }
    let n = records.len();
    if n < degree + 1 {
        return Err(Error::Data(format!(
            "degree-{degree} fit needs at least {} records, got {n}",
            degree + 1
        )));
    }
    let mut distinct: Vec<f64> = records.iter().map(|r| r.stress_mpa).collect();
    distinct.sort_by(|a, b| a.partial_cmp(b).expect("finite stress"));
    distinct.dedup();
    if distinct.len() < degree + 1 {
        return Err(Error::Data(format!(
            "degree-{degree} fit needs {} distinct stresses, got {}",
            degree + 1,
            distinct.len()
        )));
    }

    let mut design = Matrix::zeros(n, degree + 1);
    let mut target = vec![0.0; n];
    for (i, r) in records.iter().enumerate() {
        let x = r.stress_mpa.log10();
        let mut pow = 1.0;
        for j in 0..=degree {
            design.set(i, j, pow);
            pow *= x;
        }
        target[i] = lm_parameter(r.time_h, r.temp_c, c_lm)?;
    }
    let xi = least_squares(&design, &target)?;
    let model = LmModel { d: degree, xi, c_lm };
    model.validate()?;
    Ok(model)
}

/// Predicted rupture time in log10 hours. The master curve gives the
/// parameter at this stress; the temperature converts it back to a time.
pub fn lm_predict_log10(model: &LmModel, stress_mpa: f64, temp_c: f64) -> Result<f64> {
    if !(stress_mpa > 0.0) || !stress_mpa.is_finite() {
        return Err(Error::Domain(format!(
            "stress must be positive, got {stress_mpa}"
        )));
    }
    if !(temp_c > -273.15) || !temp_c.is_finite() {
        return Err(Error::Domain(format!(
            "temperature must be above absolute zero, got {temp_c}"
        )));
    }
    let p = model.master_curve(stress_mpa.log10());
    Ok(1000.0 * p / rankine(temp_c) - model.c_lm)
}

/// Predicted rupture time in hours. Low stresses can produce astronomically
/// large times; they are returned as-is, not clamped.
pub fn lm_predict(model: &LmModel, stress_mpa: f64, temp_c: f64) -> Result<f64> {
    Ok(10f64.powf(lm_predict_log10(model, stress_mpa, temp_c)?))
}
