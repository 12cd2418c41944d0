use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use nalgebra::Vector3;
use serde_json::json;

use super::config::RunConfig;
use super::infer::{transform_from_row_major, ResultFile};
use super::{log, parse_list, require_exists, write_text, CliError, CliResult, Common};
use nocs_pose::pipeline::rotation_spread;
use nocs_pose::registration::PoseHypothesis;

#[derive(Debug, Args)]
pub struct PlotArgs {
    #[command(flatten)]
    pub common: Common,
    /// `infer` result files whose hypotheses are plotted. Repeatable.
    #[arg(long, required = true, num_args = 1..)]
    pub results: Vec<PathBuf>,
    /// Object-frame axis to rotate, `x,y,z`.
    #[arg(long, default_value = "1,0,0")]
    pub probe: String,
    /// SVG output path.
    #[arg(long)]
    pub out: PathBuf,
}

const PANEL: f64 = 240.0;
const MARGIN: f64 = 20.0;

/// Two orthographic views of unit vectors: x–y (left) and x–z (right).
pub fn spread_svg(points: &[Vector3<f64>]) -> String {
    let w = 2.0 * PANEL + 3.0 * MARGIN;
    let h = PANEL + 2.0 * MARGIN + 20.0;
    let r = PANEL / 2.0 - 10.0;
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    for (k, (label, pick)) in [("x-y", 1usize), ("x-z", 2usize)].into_iter().enumerate() {
        let cx = MARGIN + PANEL / 2.0 + k as f64 * (PANEL + MARGIN);
        let cy = MARGIN + PANEL / 2.0;
        let _ = writeln!(s, r#"  <g id="{label}">"#);
        let _ = writeln!(s, r##"    <circle cx="{cx:.3}" cy="{cy:.3}" r="{r:.3}" fill="none" stroke="#999"/>"##);
        let _ = writeln!(
            s,
            r#"    <text x="{cx:.3}" y="{:.3}" text-anchor="middle" font-size="12">{label}</text>"#,
            MARGIN + PANEL + 14.0
        );
        for p in points {
            let (u, v) = (p.x, p[pick]);
            let _ = writeln!(
                s,
                r##"    <circle class="pt" cx="{:.3}" cy="{:.3}" r="3" fill="#c33"/>"##,
                cx + u * r,
                cy - v * r
            );
        }
        let _ = writeln!(s, "  </g>");
    }
    s.push_str("</svg>\n");
    s
}

pub fn run(a: PlotArgs, _cfg: RunConfig) -> CliResult<()> {
    let [x, y, z] = parse_list::<3>(&a.probe, "--probe")?;
    let probe = Vector3::new(x, y, z);
    if !(probe.norm() > 0.0) {
        return Err(CliError::validation("--probe must be non-zero"));
    }
    let mut poses = Vec::new();
    for path in &a.results {
        require_exists(path, "result file")?;
        let text = std::fs::read_to_string(path).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        let r: ResultFile =
            serde_json::from_str(&text).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))?;
        for h in r.hypotheses.iter().filter_map(|h| h.pose.as_ref()) {
            poses.push(PoseHypothesis {
                transform: transform_from_row_major(&h.transform)?,
                confidence: h.confidence,
                index: h.index,
                rotation_inlier_rate: h.rotation_inlier_rate,
            });
        }
    }
    if poses.is_empty() {
        return Err(CliError::validation("no registered hypotheses in the result files"));
    }
    let points = rotation_spread(&poses, &probe);
    write_text(&a.out, &spread_svg(&points))?;
    log::emit("plot-rotations", json!({ "out": a.out.display().to_string(), "points": points.len() }));
    Ok(())
}
