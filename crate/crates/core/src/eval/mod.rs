//! Pose-error metrics, the y-axis symmetric rotation error and precision tables
//! over (rotation, translation) thresholds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::SimilarityTransform;

/// Geodesic angle between two rotations, degrees.
pub fn rotation_error_deg(r_pred: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> f64 {
    let c = (((r_pred * r_gt.transpose()).trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    c.acos().to_degrees()
}

/// `(rotation error in degrees, translation error in scene units)`.
pub fn pose_errors(pred: &SimilarityTransform, gt: &SimilarityTransform) -> (f64, f64) {
    (
        rotation_error_deg(pred.rotation(), gt.rotation()),
        (pred.translation() - gt.translation()).norm(),
    )
}

/// Angle between the y-axes (second columns) of two rotations, ignoring sign; in `[0, 90]` degrees.
pub fn symmetric_axis_error(r_pred: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> f64 {
    let yp = r_pred.column(1);
    let yg = r_gt.column(1);
    // atan2 form of arccos(|cos|), accurate near 0° as well.
    yp.cross(&yg).norm().atan2(yp.dot(&yg).abs()).to_degrees()
}

/// Rotational symmetry of an instance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Symmetry {
    #[default]
    None,
    /// Symmetric under rotations about the canonical y-axis.
    YAxis,
}

/// Whether symmetry flags relax the rotation test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymmetryPolicy {
    /// Y-axis symmetric instances are scored with [`symmetric_axis_error`].
    #[default]
    Aware,
    /// Every instance is scored with the full rotation error.
    Plain,
}

/// A prediction matched to its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalInstance {
    pub predicted: SimilarityTransform,
    pub ground_truth: SimilarityTransform,
    pub category: String,
    pub symmetry: Symmetry,
}

/// A `(degrees, scene units)` cell of the table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub rotation_deg: f64,
    pub translation: f64,
}

/// Parse `"5:5,10:5"` into thresholds; the translation part is multiplied by `unit`.
pub fn parse_thresholds(s: &str, unit: f64) -> Result<Vec<Threshold>> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (r, t) = part
            .split_once(':')
            .ok_or_else(|| Error::invalid(format!("threshold '{part}' is not of the form deg:dist")))?;
        let parse = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite() && *x >= 0.0)
                .ok_or_else(|| Error::invalid(format!("bad threshold value '{v}'")))
        };
        out.push(Threshold {
            rotation_deg: parse(r)?,
            translation: parse(t)? * unit,
        });
    }
    if out.is_empty() {
        return Err(Error::invalid("no thresholds given"));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub category: String,
    pub instances: usize,
    /// Pass fraction per threshold, in table order.
    pub precision: Vec<f64>,
}

/// Per-category and mean precision at each threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricTable {
    pub thresholds: Vec<Threshold>,
    pub policy: SymmetryPolicy,
    pub rows: Vec<MetricRow>,
    /// Unweighted mean over `rows`.
    pub mean: Vec<f64>,
    pub warnings: Vec<String>,
}

impl MetricTable {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(format!("metric table serialization: {e}")))
    }

    /// Aligned text table; `unit_label` names the translation unit and `unit` its size in scene units.
    pub fn to_text(&self, unit_label: &str, unit: f64) -> String {
        let headers: Vec<String> = self
            .thresholds
            .iter()
            .map(|t| format!("{}°{}{}", fmt_num(t.rotation_deg), fmt_num(t.translation / unit), unit_label))
            .collect();
        let name_w = self
            .rows
            .iter()
            .map(|r| r.category.chars().count())
            .chain([8])
            .max()
            .unwrap_or(8);
        let col_w = headers.iter().map(|h| h.chars().count()).chain([6]).max().unwrap_or(6);
        let mut s = String::new();
        let _ = write!(s, "{:<name_w$}  {:>5}", "category", "n");
        for h in &headers {
            let pad = col_w - h.chars().count();
            let _ = write!(s, "  {}{h}", " ".repeat(pad));
        }
        s.push('\n');
        let mut line = |name: &str, n: String, vals: &[f64]| {
            let _ = write!(s, "{name:<name_w$}  {n:>5}");
            for v in vals {
                let _ = write!(s, "  {:>col_w$.1}", v * 100.0);
            }
            s.push('\n');
        };
        for r in &self.rows {
            line(&r.category, r.instances.to_string(), &r.precision);
        }
        let total: usize = self.rows.iter().map(|r| r.instances).sum();
        line("mean", total.to_string(), &self.mean);
        s
    }
}

fn fmt_num(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v}")
    }
}

fn passes(rot: f64, trans: f64, t: &Threshold) -> bool {
    trans <= t.translation && rot <= t.rotation_deg
}

/// Precision table over `instances`.
///
/// Categories come from the instances plus `expected`; an expected category
/// without instances is left out and noted in `warnings`.
pub fn precision_table(
    instances: &[EvalInstance],
    thresholds: &[Threshold],
    policy: SymmetryPolicy,
    expected: &[String],
) -> Result<MetricTable> {
    if thresholds.is_empty() {
        return Err(Error::invalid("no thresholds given"));
    }
    let errors: Vec<(f64, f64)> = instances
        .par_iter()
        .map(|inst| {
            let (rot, trans) = pose_errors(&inst.predicted, &inst.ground_truth);
            let rot = match (policy, inst.symmetry) {
                (SymmetryPolicy::Aware, Symmetry::YAxis) => {
                    symmetric_axis_error(inst.predicted.rotation(), inst.ground_truth.rotation())
                }
                _ => rot,
            };
            (rot, trans)
        })
        .collect();
    let mut groups: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
    for (inst, e) in instances.iter().zip(&errors) {
        groups.entry(&inst.category).or_default().push(*e);
    }
    let mut warnings = Vec::new();
    for c in expected {
        if !groups.contains_key(c.as_str()) {
            warnings.push(format!("category '{c}' has no instances and is excluded"));
        }
    }
    let rows: Vec<MetricRow> = groups
        .into_iter()
        .map(|(cat, errs)| MetricRow {
            category: cat.to_string(),
            instances: errs.len(),
            precision: thresholds
                .iter()
                .map(|t| errs.iter().filter(|(r, d)| passes(*r, *d, t)).count() as f64 / errs.len() as f64)
                .collect(),
        })
        .collect();
    let mean = (0..thresholds.len())
        .map(|j| {
            if rows.is_empty() {
                0.0
            } else {
                rows.iter().map(|r| r.precision[j]).sum::<f64>() / rows.len() as f64
            }
        })
        .collect();
    Ok(MetricTable {
        thresholds: thresholds.to_vec(),
        policy,
        rows,
        mean,
        warnings,
    })
}
