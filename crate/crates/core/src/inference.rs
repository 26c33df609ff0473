//! Result-building modules that reduce a posterior trajectory to one
//! utterance score.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::neural::PosteriorTrajectory;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum InferenceError {
    #[error("utterance {0} has an empty posterior trajectory")]
    EmptyTrajectory(String),
    #[error("unrecognized inference module {0:?} (expected e.g. last-frame, mean, mean-ignore-last-50, window-100-ignore-last-50)")]
    BadSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModuleKind {
    LastFrame,
    /// Mean over the last `n` effective frames.
    Window(usize),
    Mean,
}

/// A result-building module plus the number of trailing frames it skips.
///
/// The compact string form is `last-frame`, `mean` or `window-N`, optionally
/// followed by `-ignore-last-K`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct InferenceModuleSpec {
    pub kind: ModuleKind,
    pub ignore_last_k: usize,
}

impl InferenceModuleSpec {
    pub const fn new(kind: ModuleKind, ignore_last_k: usize) -> Self {
        InferenceModuleSpec { kind, ignore_last_k }
    }

    pub const fn last_frame() -> Self {
        Self::new(ModuleKind::LastFrame, 0)
    }

    pub const fn mean() -> Self {
        Self::new(ModuleKind::Mean, 0)
    }

    /// The four modules compared in the evaluation grid.
    pub fn standard_grid() -> Vec<Self> {
        vec![
            Self::last_frame(),
            Self::new(ModuleKind::Window(100), 50),
            Self::new(ModuleKind::Mean, 50),
            Self::mean(),
        ]
    }
}

impl fmt::Display for InferenceModuleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ModuleKind::LastFrame => f.write_str("last-frame")?,
            ModuleKind::Window(n) => write!(f, "window-{n}")?,
            ModuleKind::Mean => f.write_str("mean")?,
        }
        if self.ignore_last_k > 0 {
            write!(f, "-ignore-last-{}", self.ignore_last_k)?;
        }
        Ok(())
    }
}

impl FromStr for InferenceModuleSpec {
    type Err = InferenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || InferenceError::BadSpec(s.to_string());
        let (head, k) = match s.split_once("-ignore-last-") {
            Some((head, k)) => (head, parse_count(k).ok_or_else(bad)?),
            None => (s, 0),
        };
        let kind = match head {
            "last-frame" => ModuleKind::LastFrame,
            "mean" => ModuleKind::Mean,
            _ => {
                let n = head.strip_prefix("window-").and_then(parse_count).ok_or_else(bad)?;
                if n == 0 {
                    return Err(bad());
                }
                ModuleKind::Window(n)
            }
        };
        Ok(InferenceModuleSpec::new(kind, k))
    }
}

fn parse_count(s: &str) -> Option<usize> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    s.parse().ok()
}

impl TryFrom<String> for InferenceModuleSpec {
    type Error = InferenceError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<InferenceModuleSpec> for String {
    fn from(spec: InferenceModuleSpec) -> String {
        spec.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtteranceScore {
    pub score: f64,
    pub module_used: InferenceModuleSpec,
    pub frames_considered: usize,
}

/// Scores one trajectory. `ignore_last_k` is clamped to `T - 1` so at least
/// one frame always remains.
pub fn build_result(traj: &PosteriorTrajectory, spec: InferenceModuleSpec) -> Result<UtteranceScore, InferenceError> {
    let t = traj.len();
    if t == 0 {
        return Err(InferenceError::EmptyTrajectory(traj.utterance_id.clone()));
    }
    let k = spec.ignore_last_k.min(t - 1);
    let effective = &traj.p_whisper[..t - k];
    let considered = match spec.kind {
        ModuleKind::LastFrame => &effective[effective.len() - 1..],
        ModuleKind::Window(n) => &effective[effective.len().saturating_sub(n)..],
        ModuleKind::Mean => effective,
    };
    let score = considered.iter().sum::<f64>() / considered.len() as f64;
    // Rounding in the mean can step a hair outside the observed range.
    let (lo, hi) = considered.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &p| (lo.min(p), hi.max(p)));
    Ok(UtteranceScore {
        score: score.clamp(lo, hi),
        module_used: spec,
        frames_considered: considered.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn traj(p: Vec<f64>) -> PosteriorTrajectory {
        PosteriorTrajectory::new("u", p)
    }

    fn score(p: Vec<f64>, s: &str) -> UtteranceScore {
        build_result(&traj(p), s.parse().unwrap()).unwrap()
    }

    #[test]
    fn basic_modules() {
        assert!((score(vec![0.2, 0.4, 0.9], "mean").score - 0.5).abs() < 1e-15);
        assert_eq!(score(vec![0.2, 0.4, 0.9], "last-frame").score, 0.9);
        let mut p = vec![0.8; 60];
        p.extend(vec![0.1; 40]);
        let s = score(p, "window-100");
        assert!((s.score - 0.52).abs() < 1e-12);
        assert_eq!(s.frames_considered, 100);
    }

    #[test]
    fn ignore_offset_clamps() {
        let s = score(vec![0.9, 0.9, 0.1], "mean-ignore-last-50");
        assert_eq!(s.score, 0.9);
        assert_eq!(s.frames_considered, 1);
        let s = score(vec![0.3], "window-100-ignore-last-50");
        assert_eq!(s.score, 0.3);
    }

    #[test]
    fn window_ignore_last() {
        let mut p = vec![0.0; 50];
        p.extend(vec![1.0; 100]);
        p.extend(vec![0.2; 50]);
        let s = score(p, "window-100-ignore-last-50");
        assert_eq!(s.score, 1.0);
        assert_eq!(s.frames_considered, 100);
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(
            build_result(&traj(vec![]), InferenceModuleSpec::mean()),
            Err(InferenceError::EmptyTrajectory("u".into()))
        );
    }

    #[test]
    fn spec_strings_round_trip() {
        for s in ["last-frame", "mean", "mean-ignore-last-50", "window-100-ignore-last-50", "window-7", "last-frame-ignore-last-3"] {
            let spec: InferenceModuleSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        let grid: Vec<String> = InferenceModuleSpec::standard_grid().iter().map(|s| s.to_string()).collect();
        assert_eq!(grid, ["last-frame", "window-100-ignore-last-50", "mean-ignore-last-50", "mean"]);
        for s in ["", "median", "window-0", "window-", "mean-ignore-last-", "mean-ignore-last--1", "window-+5", "Mean"] {
            assert!(s.parse::<InferenceModuleSpec>().is_err(), "{s}");
        }
        assert_eq!("mean-ignore-last-0".parse::<InferenceModuleSpec>().unwrap(), InferenceModuleSpec::mean());
    }

    #[test]
    fn sharp_final_drop_favours_mean() {
        let mut p = vec![0.95; 200];
        p.extend((0..50).map(|i| 0.9 - 0.017 * i as f64));
        assert!(score(p.clone(), "mean").score > score(p, "last-frame").score);
    }

    fn any_spec() -> impl Strategy<Value = InferenceModuleSpec> {
        let kind = prop_oneof![Just(ModuleKind::LastFrame), Just(ModuleKind::Mean), (1usize..300).prop_map(ModuleKind::Window)];
        (kind, 0usize..120).prop_map(|(k, i)| InferenceModuleSpec::new(k, i))
    }

    proptest! {
        #[test]
        fn score_within_trajectory_range(p in prop::collection::vec(0.0f64..=1.0, 1..400), spec in any_spec()) {
            let s = build_result(&traj(p.clone()), spec).unwrap();
            let lo = p.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = p.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(s.score >= lo && s.score <= hi);
            prop_assert!(s.frames_considered >= 1);
        }

        #[test]
        fn constant_trajectory_is_fixed(v in 0.0f64..=1.0, n in 1usize..300, spec in any_spec()) {
            prop_assert_eq!(build_result(&traj(vec![v; n]), spec).unwrap().score, v);
        }

        #[test]
        fn wide_window_equals_mean(p in prop::collection::vec(0.0f64..=1.0, 1..200), extra in 0usize..50) {
            let n = p.len() + extra;
            let w = build_result(&traj(p.clone()), InferenceModuleSpec::new(ModuleKind::Window(n), 0)).unwrap();
            let m = build_result(&traj(p), InferenceModuleSpec::mean()).unwrap();
            prop_assert_eq!(w.score, m.score);
        }

        #[test]
        fn spec_display_parses_back(spec in any_spec()) {
            prop_assert_eq!(spec.to_string().parse::<InferenceModuleSpec>().unwrap(), spec);
        }
    }
}
