use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::config::RunConfig;
use super::infer::{transform_from_row_major, ResultFile};
use super::{log, require_exists, write_text, CliError, CliResult, Common};
use nocs_pose::eval::{parse_thresholds, precision_table, EvalInstance, Symmetry, SymmetryPolicy};
use nocs_pose::geometry::SimilarityTransform;
use nocs_pose::synthgen::dataset::{read_manifest, read_view_meta, view_prefix};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Prediction files: `infer` result files or JSON arrays of pose records. Repeatable.
    #[arg(long, required = true, num_args = 1..)]
    pub predictions: Vec<PathBuf>,
    /// JSON array of ground-truth pose records.
    #[arg(long, conflicts_with = "data")]
    pub ground_truth: Option<PathBuf>,
    /// Dataset directory; ground truth is read from the views named by prediction ids.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// `deg:dist` pairs with dist in `--unit-label` units, e.g. `5:5,10:5,15:5`.
    #[arg(long)]
    pub thresholds: Option<String>,
    /// `aware` (y-axis symmetric instances use the axis error) or `plain`.
    #[arg(long, default_value = "aware")]
    pub policy: String,
    /// Size of one distance unit in scene units.
    #[arg(long)]
    pub unit: Option<f64>,
    #[arg(long)]
    pub unit_label: Option<String>,
    /// Write the JSON report here; the text table always goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A pose with an id, as read from prediction and ground-truth files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseEntry {
    pub id: String,
    #[serde(default)]
    pub category: Option<String>,
    /// Row-major 4x4 similarity.
    pub transform: [f64; 16],
    #[serde(default)]
    pub symmetry: Symmetry,
}

fn read_json(path: &Path) -> CliResult<Value> {
    require_exists(path, "file")?;
    let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn read_entries(path: &Path) -> CliResult<Vec<PoseEntry>> {
    let value = read_json(path)?;
    let bad = |e: serde_json::Error| CliError::validation(format!("{}: {e}", path.display()));
    if value.is_array() {
        return serde_json::from_value(value).map_err(bad);
    }
    let r: ResultFile = serde_json::from_value(value).map_err(bad)?;
    let id = r
        .id
        .ok_or_else(|| CliError::validation(format!("{}: result has no id", path.display())))?;
    let best = r
        .best
        .ok_or_else(|| CliError::validation(format!("{}: result has no registered pose", path.display())))?;
    Ok(vec![PoseEntry {
        id,
        category: r.category,
        transform: best.transform,
        symmetry: Symmetry::None,
    }])
}

fn dataset_truth(root: &Path, ids: &[&str]) -> CliResult<(Vec<PoseEntry>, Vec<String>)> {
    let manifest = read_manifest(root)?;
    let symmetric: BTreeMap<(&str, &str), bool> = manifest
        .categories
        .iter()
        .flat_map(|c| c.models.iter().map(move |m| ((c.name.as_str(), m.name.as_str()), m.symmetric)))
        .collect();
    let mut out = Vec::new();
    for id in ids {
        let parts: Vec<&str> = id.split('/').collect();
        let [cat, mdl, idx] = parts[..] else { continue };
        let (Ok(idx), Some(&sym)) = (idx.parse::<usize>(), symmetric.get(&(cat, mdl))) else { continue };
        let meta = read_view_meta(&view_prefix(root, cat, mdl, idx))?;
        let rigid = nocs_pose::geometry::RigidPose::from_row_major(&meta.camera_pose)?;
        let gt = SimilarityTransform::new(meta.diagonal_norm, rigid)?;
        let mut transform = gt.to_row_major();
        transform[15] = 1.0;
        out.push(PoseEntry {
            id: id.to_string(),
            category: Some(meta.category),
            transform,
            symmetry: if sym { Symmetry::YAxis } else { Symmetry::None },
        });
    }
    Ok((out, manifest.categories.iter().map(|c| c.name.clone()).collect()))
}

/// Pair predictions with ground truth by id; unmatched ids are an error.
fn match_entries(preds: &[PoseEntry], truth: &[PoseEntry], require_all_truth: bool) -> CliResult<Vec<EvalInstance>> {
    let by_id: BTreeMap<&str, &PoseEntry> = truth.iter().map(|t| (t.id.as_str(), t)).collect();
    let pred_ids: BTreeMap<&str, &PoseEntry> = preds.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut unmatched: Vec<&str> = pred_ids.keys().filter(|id| !by_id.contains_key(*id)).copied().collect();
    if require_all_truth {
        unmatched.extend(by_id.keys().filter(|id| !pred_ids.contains_key(*id)));
    }
    if !unmatched.is_empty() || pred_ids.len() != preds.len() {
        unmatched.sort_unstable();
        return Err(CliError::validation(format!(
            "predictions and ground truth do not match ({} predictions, {} ground truth); unmatched ids: {}",
            preds.len(),
            truth.len(),
            unmatched.join(", ")
        )));
    }
    preds
        .iter()
        .map(|p| {
            let gt = by_id[p.id.as_str()];
            Ok(EvalInstance {
                predicted: transform_from_row_major(&p.transform)?,
                ground_truth: transform_from_row_major(&gt.transform)?,
                category: gt.category.clone().or(p.category.clone()).unwrap_or_else(|| "unknown".into()),
                symmetry: gt.symmetry,
            })
        })
        .collect()
}

pub fn run(a: EvalArgs, mut cfg: RunConfig) -> CliResult<()> {
    if let Some(v) = a.thresholds {
        cfg.eval.thresholds = v;
    }
    if let Some(v) = a.unit {
        cfg.eval.unit = v;
    }
    if let Some(v) = a.unit_label {
        cfg.eval.unit_label = v;
    }
    cfg.validate()?;
    let policy = match a.policy.as_str() {
        "aware" => SymmetryPolicy::Aware,
        "plain" => SymmetryPolicy::Plain,
        other => return Err(CliError::validation(format!("unknown policy '{other}' (aware or plain)"))),
    };
    let thresholds = parse_thresholds(&cfg.eval.thresholds, cfg.eval.unit)?;
    let mut preds = Vec::new();
    for p in &a.predictions {
        preds.extend(read_entries(p)?);
    }
    let (truth, expected, require_all) = match (&a.ground_truth, a.data.clone().or(cfg.paths.data.clone())) {
        (Some(gt), _) => {
            let t = read_entries(gt)?;
            let cats = t.iter().filter_map(|e| e.category.clone()).collect();
            (t, cats, true)
        }
        (None, Some(root)) => {
            require_exists(&root.join("manifest.json"), "dataset manifest")?;
            let ids: Vec<&str> = preds.iter().map(|p| p.id.as_str()).collect();
            let (t, cats) = dataset_truth(&root, &ids)?;
            (t, cats, false)
        }
        (None, None) => return Err(CliError::validation("--ground-truth or --data is required")),
    };
    let instances = match_entries(&preds, &truth, require_all)?;
    let mut expected: Vec<String> = expected;
    expected.sort();
    expected.dedup();
    let table = precision_table(&instances, &thresholds, policy, &expected)?;
    for w in &table.warnings {
        log::emit("warning", json!({ "message": w }));
    }
    print!("{}", table.to_text(&cfg.eval.unit_label, cfg.eval.unit));
    if let Some(out) = &a.out {
        write_text(out, &(table.to_json()? + "\n"))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: &str) -> PoseEntry {
        PoseEntry {
            id: id.into(),
            category: Some("cup".into()),
            transform: SimilarityTransform::identity().to_row_major(),
            symmetry: Symmetry::None,
        }
    }

    #[test]
    fn unmatched_ids_are_listed() {
        let err = match_entries(&[entry("a"), entry("b")], &[entry("a"), entry("c")], true).unwrap_err();
        assert_eq!(err.code, super::super::EXIT_VALIDATION);
        assert!(err.message.contains('b') && err.message.contains('c'));
        assert_eq!(match_entries(&[entry("a")], &[entry("a"), entry("c")], false).unwrap().len(), 1);
    }
}
