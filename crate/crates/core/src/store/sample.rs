//! Where a sample comes from, independent of the stored bytes.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::store::schema::ObsLayout;
use crate::store::split::Split;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SampleMode {
    /// One transition `(obs_t, act_t, obs_{t+1})`.
    Step,
    /// A whole trial.
    Trajectory,
    /// A window of `sequence_length` steps.
    Sequence,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleRequest {
    pub mode: SampleMode,
    pub sequence_length: Option<usize>,
    pub split: Split,
    /// Windows may run over trial boundaries.
    pub cross_trial: bool,
}

impl SampleRequest {
    pub fn step(split: Split) -> Self {
        SampleRequest { mode: SampleMode::Step, sequence_length: None, split, cross_trial: false }
    }

    pub fn trajectory(split: Split) -> Self {
        SampleRequest { mode: SampleMode::Trajectory, sequence_length: None, split, cross_trial: false }
    }

    pub fn sequence(split: Split, length: usize, cross_trial: bool) -> Self {
        SampleRequest { mode: SampleMode::Sequence, sequence_length: Some(length), split, cross_trial }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.mode, self.sequence_length) {
            (SampleMode::Sequence, None | Some(0)) => {
                Err(Error::Usage("sequence sampling needs sequence_length >= 1".into()))
            }
            (SampleMode::Step | SampleMode::Trajectory, Some(_)) => {
                Err(Error::Usage("sequence_length only applies to sequence sampling".into()))
            }
            (_, _) if self.cross_trial && self.mode != SampleMode::Sequence => {
                Err(Error::Usage("cross_trial only applies to sequence sampling".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Location {
    Step { trajectory: usize, t: usize },
    Trajectory(usize),
    /// Steps `start..start + length` of one trial.
    Window { trajectory: usize, start: usize },
    /// Offset into the concatenated steps of the split's trials.
    Stream { offset: usize },
}

/// All within-trial windows of `length` steps over `trials`.
pub fn windows(trials: &[usize], lengths: &[usize], length: usize) -> Vec<Location> {
    trials
        .iter()
        .flat_map(|&i| {
            let n = (lengths[i] + 1).saturating_sub(length);
            (0..n).map(move |start| Location::Window { trajectory: i, start })
        })
        .collect()
}

/// All transitions `t -> t + 1` with both observations stored.
pub fn transitions(trials: &[usize], lengths: &[usize], layout: ObsLayout) -> Vec<Location> {
    trials
        .iter()
        .flat_map(|&i| {
            let n = match layout {
                ObsLayout::WithTerminal => lengths[i],
                ObsLayout::PerAction => lengths[i].saturating_sub(1),
            };
            (0..n).map(move |t| Location::Step { trajectory: i, t })
        })
        .collect()
}

/// One segment of the concatenated stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Segment {
    pub trajectory: usize,
    /// Steps of the trial covered.
    pub start: usize,
    pub len: usize,
    /// Whether `start` is the trial's first step.
    pub is_first: bool,
}

/// Trials overlapping the stream window `offset..offset + length`.
pub fn stream_segments(trials: &[usize], lengths: &[usize], offset: usize, length: usize) -> Vec<Segment> {
    let mut out = Vec::new();
    let (mut at, end) = (0usize, offset + length);
    for &i in trials {
        let (lo, hi) = (at, at + lengths[i]);
        at = hi;
        if hi <= offset || lengths[i] == 0 {
            continue;
        }
        if lo >= end {
            break;
        }
        let start = offset.saturating_sub(lo);
        let stop = end.min(hi) - lo;
        out.push(Segment { trajectory: i, start, len: stop - start, is_first: start == 0 });
    }
    out
}

/// Draws a location for `request` over the given trials.
pub fn locate(
    request: &SampleRequest,
    trials: &[usize],
    lengths: &[usize],
    layout: ObsLayout,
    rng: &mut Rng,
) -> Result<Location> {
    request.validate()?;
    if trials.is_empty() {
        return Err(Error::Usage(format!("split `{}` holds no trajectories", request.split)));
    }
    let pick = |pool: Vec<Location>, rng: &mut Rng, why: &str| {
        if pool.is_empty() {
            return Err(Error::Usage(why.to_string()));
        }
        Ok(pool[rng.random_range(0..pool.len())])
    };
    match request.mode {
        SampleMode::Trajectory => Ok(Location::Trajectory(trials[rng.random_range(0..trials.len())])),
        SampleMode::Step => pick(transitions(trials, lengths, layout), rng, "no stored transitions in this split"),
        SampleMode::Sequence => {
            let length = request.sequence_length.expect("validated");
            if request.cross_trial {
                let total: usize = trials.iter().map(|&i| lengths[i]).sum();
                if length > total {
                    return Err(Error::Usage(format!(
                        "sequence_length {length} exceeds the {total} steps of split `{}`",
                        request.split
                    )));
                }
                Ok(Location::Stream { offset: rng.random_range(0..=total - length) })
            } else {
                let why = format!("sequence_length {length} is longer than every trial in split `{}`", request.split);
                pick(windows(trials, lengths, length), rng, &why)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use std::collections::BTreeSet;

    #[test]
    fn two_trials_of_three_have_four_windows_of_two() {
        let lengths = [3, 3];
        let all = windows(&[0, 1], &lengths, 2);
        assert_eq!(all.len(), 4);
        let mut rng = seeded(1);
        let req = SampleRequest::sequence(Split::All, 2, false);
        let hits: BTreeSet<_> =
            (0..10_000).map(|_| locate(&req, &[0, 1], &lengths, ObsLayout::PerAction, &mut rng).unwrap()).collect();
        assert_eq!(hits, all.into_iter().collect());
    }

    #[test]
    fn stream_windows_mark_trial_starts() {
        let segs = stream_segments(&[0, 1, 2], &[3, 0, 2], 1, 4);
        assert_eq!(
            segs,
            [
                Segment { trajectory: 0, start: 1, len: 2, is_first: false },
                Segment { trajectory: 2, start: 0, len: 2, is_first: true },
            ]
        );
    }

    #[test]
    fn impossible_requests() {
        let mut rng = seeded(0);
        let long = SampleRequest::sequence(Split::All, 4, false);
        assert!(locate(&long, &[0], &[3], ObsLayout::PerAction, &mut rng).is_err());
        assert!(SampleRequest::sequence(Split::All, 0, false).validate().is_err());
        assert!(locate(&SampleRequest::step(Split::Val), &[], &[], ObsLayout::PerAction, &mut rng).is_err());
        let cross = SampleRequest::sequence(Split::All, 4, true);
        assert!(locate(&cross, &[0, 1], &[2, 2], ObsLayout::PerAction, &mut rng).is_ok());
    }

    #[test]
    fn terminal_layout_adds_a_transition() {
        assert_eq!(transitions(&[0], &[3], ObsLayout::PerAction).len(), 2);
        assert_eq!(transitions(&[0], &[3], ObsLayout::WithTerminal).len(), 3);
    }
}
