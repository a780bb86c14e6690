//! Figure-ready export: predicted stress/life curves with uncertainty bands
//! plus the context and target scatter, one CSV per task.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cnp::{predict, CnpModel, ContextSet, TargetSet};
use crate::data::{featurize, CreepRecord, NormStats};
use crate::error::{Error, Result};

/// Role of a row in the exported file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotKind {
    Curve,
    Context,
    Target,
}

/// One exported point. Scatter rows carry the observed value in all three
/// of `mu`, `lo2s`, `hi2s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub temperature_c: f64,
    pub log10_stress: f64,
    pub mu: f64,
    pub lo2s: f64,
    pub hi2s: f64,
    pub kind: PlotKind,
}

fn scatter_rows(records: &[CreepRecord], kind: PlotKind) -> Vec<PlotRow> {
    records
        .iter()
        .map(|r| {
            let y = r.time_h.log10();
            PlotRow {
                temperature_c: r.temp_c,
                log10_stress: r.stress_mpa.log10(),
                mu: y,
                lo2s: y,
                hi2s: y,
                kind,
            }
        })
        .collect()
}

/// Queries the model along a stress grid at each temperature, conditioned on
/// `context`, and appends the observed context/target scatter. Curve values
/// are in log10-hours with a `band_z` sigma band on either side.
pub fn export_plot_data(
    model: &CnpModel,
    norm: &NormStats,
    context: &[CreepRecord],
    targets: &[CreepRecord],
    temperatures_c: &[f64],
    stress_grid_mpa: &[f64],
    band_z: f64,
) -> Result<Vec<PlotRow>> {
    if temperatures_c.is_empty() || stress_grid_mpa.is_empty() {
        return Err(Error::Config(
            "plot export needs at least one temperature and one grid stress".into(),
        ));
    }
    if !(band_z > 0.0 && band_z.is_finite()) {
        return Err(Error::Config(format!(
            "band multiplier must be positive, got {band_z}"
        )));
    }
    for &s in stress_grid_mpa {
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Domain(format!(
                "grid stress must be positive, got {s}"
            )));
        }
    }

    let ctx = ContextSet::new(context.iter().map(|r| featurize(r, norm)).collect());
    let mut xs = Vec::with_capacity(temperatures_c.len() * stress_grid_mpa.len());
    for &temp in temperatures_c {
        for &stress in stress_grid_mpa {
            xs.push(norm.features(stress, temp));
        }
    }
    let pred = predict(model, &ctx, &TargetSet::new(xs))?;

    let mut rows = Vec::with_capacity(pred.len() + context.len() + targets.len());
    let mut k = 0;
    for &temp in temperatures_c {
        for &stress in stress_grid_mpa {
            let mu = norm.unnormalize_y(pred.means[k]);
            let half = band_z * pred.stds[k] * norm.std_y;
            rows.push(PlotRow {
                temperature_c: temp,
                log10_stress: stress.log10(),
                mu,
                lo2s: mu - half,
                hi2s: mu + half,
                kind: PlotKind::Curve,
            });
            k += 1;
        }
    }
    rows.extend(scatter_rows(context, PlotKind::Context));
    rows.extend(scatter_rows(targets, PlotKind::Target));
    Ok(rows)
}

/// Writes rows with the fixed header
/// `temperature_c,log10_stress,mu,lo2s,hi2s,kind`.
pub fn write_plot_csv(path: &Path, rows: &[PlotRow]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::Data(format!("cannot write {}: {e}", path.display())))?;
    for row in rows {
        writer
            .serialize(row)
            .map_err(|e| Error::Data(format!("cannot serialize plot row: {e}")))?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a file produced by [`write_plot_csv`].
pub fn read_plot_csv(path: &Path) -> Result<Vec<PlotRow>> {
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in reader.deserialize() {
        let row =
            record.map_err(|e| Error::Data(format!("malformed plot row: {e}")))?;
        rows.push(row);
    }
    Ok(rows)
}
