//! Scoring a deviation/speed sweep with a trained metric and plotting it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use socnav_core::context::ContextVector;
use socnav_core::features::{assemble_sequence, FeatureParams, FEATURE_LAYOUT_VERSION};
use socnav_core::metric::Checkpoint;
use socnav_core::synth::{SweepItem, SweepScenario};

use crate::plot::Axes;
use crate::svg::{Svg, PALETTE};
use crate::VizError;

/// Model scores indexed `[context][speed][deviation]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepScores {
    pub scenario: SweepScenario,
    pub contexts: Vec<String>,
    pub speeds: Vec<f64>,
    pub deviations: Vec<f64>,
    pub scores: Vec<Vec<Vec<f64>>>,
}

impl SweepScores {
    pub fn curve(&self, context: &str, speed: f64) -> Option<&[f64]> {
        let c = self.contexts.iter().position(|x| x == context)?;
        let s = self.speeds.iter().position(|v| (v - speed).abs() < 1e-9)?;
        Some(&self.scores[c][s])
    }

    /// Mean score of one curve.
    pub fn mean(&self, context: &str, speed: f64) -> Option<f64> {
        self.curve(context, speed).map(|c| c.iter().sum::<f64>() / c.len() as f64)
    }

    pub fn curve_count(&self) -> usize {
        self.scores.iter().map(Vec::len).sum()
    }
}

/// Scores every sweep item under every labelled context. `items` must be in
/// [`generate_sweep`](socnav_core::synth::generate_sweep) order: speed-major,
/// one block of deviations per speed.
pub fn score_sweep(
    checkpoint: &Checkpoint,
    items: &[SweepItem],
    contexts: &[(String, ContextVector)],
    params: &FeatureParams,
) -> Result<SweepScores, VizError> {
    checkpoint.check_layout(FEATURE_LAYOUT_VERSION)?;
    let first = items.first().ok_or_else(|| VizError::InvalidInput("empty sweep".into()))?;
    let mut speeds: Vec<f64> = Vec::new();
    for it in items {
        if it.scenario != first.scenario {
            return Err(VizError::InvalidInput("sweep mixes scenarios".into()));
        }
        if speeds.last() != Some(&it.speed) {
            speeds.push(it.speed);
        }
    }
    let per_speed = items.len() / speeds.len();
    if per_speed * speeds.len() != items.len() {
        return Err(VizError::InvalidInput("sweep blocks have unequal sizes".into()));
    }
    let deviations: Vec<f64> = items[..per_speed].iter().map(|it| it.deviation).collect();
    for (k, it) in items.iter().enumerate() {
        if it.speed != speeds[k / per_speed] || it.deviation != deviations[k % per_speed] {
            return Err(VizError::InvalidInput("sweep items are not speed-major".into()));
        }
    }
    let flat: Vec<f64> = contexts
        .par_iter()
        .flat_map_iter(|(_, c)| items.iter().map(move |it| (c, it)))
        .map(|(c, it)| {
            let seq = assemble_sequence(&it.trajectory, c, params)?;
            Ok(checkpoint.params.forward(&seq)?)
        })
        .collect::<Result<_, VizError>>()?;
    let scores = flat
        .chunks(items.len())
        .map(|ctx| ctx.chunks(per_speed).map(<[f64]>::to_vec).collect())
        .collect();
    Ok(SweepScores {
        scenario: first.scenario,
        contexts: contexts.iter().map(|(l, _)| l.clone()).collect(),
        speeds,
        deviations,
        scores,
    })
}

/// One panel per context (two columns), one curve per speed.
pub fn plot_sweep_scores(s: &SweepScores) -> String {
    let (pw, ph) = (320.0, 200.0);
    let (gap_x, gap_y) = (90.0, 90.0);
    let cols = 2usize;
    let rows = s.contexts.len().div_ceil(cols).max(1);
    let x_max = s.deviations.iter().fold(0.0f64, |m, d| m.max(d.abs())).max(1e-6);
    let mut svg = Svg::new(60.0 + cols as f64 * (pw + gap_x) + 60.0, 50.0 + rows as f64 * (ph + gap_y));
    svg.text(svg.width() / 2.0, 22.0, 14.0, "middle", &format!("Sweep: {}", s.scenario.as_str()));
    for (c, label) in s.contexts.iter().enumerate() {
        let ax = Axes {
            left: 70.0 + (c % cols) as f64 * (pw + gap_x),
            top: 60.0 + (c / cols) as f64 * (ph + gap_y),
            width: pw,
            height: ph,
            x_range: (-x_max, x_max),
            y_range: (0.0, 1.0),
        };
        ax.draw(&mut svg, label, "signed deviation (m)", "score", 4, 4);
        for (k, speed) in s.speeds.iter().enumerate() {
            let pts: Vec<(f64, f64)> = s.deviations.iter().zip(&s.scores[c][k]).map(|(d, y)| ax.map(*d, *y)).collect();
            let colour = PALETTE[k % PALETTE.len()];
            svg.polyline(
                Some(&format!("curve-{label}-v{speed:.2}")),
                &pts,
                &format!("class=\"curve\" stroke=\"{colour}\" stroke-width=\"1.50\""),
            );
        }
    }
    let lx = svg.width() - 110.0;
    for (k, speed) in s.speeds.iter().enumerate() {
        let y = 70.0 + 18.0 * k as f64;
        svg.line(None, (lx, y - 4.0), (lx + 20.0, y - 4.0), &format!("stroke=\"{}\" stroke-width=\"2.00\"", PALETTE[k % PALETTE.len()]));
        svg.text(lx + 26.0, y, 10.0, "start", &format!("{speed:.2} m/s"));
    }
    svg.finish()
}
