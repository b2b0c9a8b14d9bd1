//! Questionnaire construction and playback downsampling.
//!
//! Placement rule: the 15 control presentations and the 5 repeats are shuffled
//! together with the ordinary items; the permutation is redrawn until no
//! repeated control sits next to its own earlier presentation.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use socnav_core::dataset::Frame;

use crate::config::ControlItem;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    Regular,
    Control,
    Repeat,
}

/// One presentation. `kind` never leaves the server.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub trajectory: String,
    pub context: String,
    pub kind: ItemKind,
}

const MAX_DRAWS: usize = 10_000;

/// Ordered questionnaire: `regular` items plus one presentation of every
/// control and a second presentation of every repeated control.
pub fn build_assignments<R: Rng + ?Sized>(
    regular: Vec<(String, String)>,
    control: &[ControlItem],
    repeated: &[String],
    rng: &mut R,
) -> Vec<Assignment> {
    let mut items: Vec<Assignment> =
        regular.into_iter().map(|(trajectory, context)| Assignment { trajectory, context, kind: ItemKind::Regular }).collect();
    for c in control {
        items.push(Assignment { trajectory: c.trajectory.clone(), context: c.context.clone(), kind: ItemKind::Control });
    }
    for r in repeated {
        let c = control.iter().find(|c| &c.trajectory == r).expect("validated: repeated ⊆ control");
        items.push(Assignment { trajectory: c.trajectory.clone(), context: c.context.clone(), kind: ItemKind::Repeat });
    }
    for _ in 0..MAX_DRAWS {
        items.shuffle(rng);
        // The repeat must come second so "first presentation" is well defined.
        for r in repeated {
            let a = items.iter().position(|x| &x.trajectory == r && x.kind == ItemKind::Control).unwrap();
            let b = items.iter().position(|x| &x.trajectory == r && x.kind == ItemKind::Repeat).unwrap();
            if b < a {
                items.swap(a, b);
            }
        }
        if repeats_non_adjacent(&items) {
            return items;
        }
    }
    spread_repeats(items)
}

pub fn repeats_non_adjacent(items: &[Assignment]) -> bool {
    items.windows(2).all(|w| w[0].trajectory != w[1].trajectory || w[1].kind != ItemKind::Repeat)
}

/// Deterministic fallback: moves every repeat to the end, interleaved with
/// the last non-matching items. Only reached if random draws keep failing.
fn spread_repeats(items: Vec<Assignment>) -> Vec<Assignment> {
    let (mut rest, repeats): (Vec<_>, Vec<_>) = items.into_iter().partition(|a| a.kind != ItemKind::Repeat);
    for r in repeats {
        let pos = (0..=rest.len())
            .rev()
            .find(|&p| {
                let before = p.checked_sub(1).map(|q| &rest[q]);
                let after = rest.get(p);
                before.is_none_or(|x| x.trajectory != r.trajectory) && after.is_none_or(|x| x.trajectory != r.trajectory)
            })
            .unwrap_or(rest.len());
        rest.insert(pos, r);
    }
    rest
}

/// Frames kept for playback at no more than `hz`: the first frame, every
/// frame at least `1/hz` after the previous kept one, and the last frame
/// (which replaces the previous kept frame when that one is too close).
pub fn downsample(frames: &[Frame], hz: f64) -> Vec<&Frame> {
    let period = 1.0 / hz;
    let eps = 1e-9;
    let mut kept: Vec<&Frame> = Vec::new();
    for f in frames {
        match kept.last() {
            None => kept.push(f),
            Some(last) if f.timestamp - last.timestamp >= period - eps => kept.push(f),
            _ => {}
        }
    }
    if let (Some(end), Some(last)) = (frames.last(), kept.last()) {
        if !std::ptr::eq(*last, end) {
            if kept.len() > 1 && end.timestamp - last.timestamp < period - eps {
                kept.pop();
            }
            kept.push(end);
        }
    }
    kept
}
