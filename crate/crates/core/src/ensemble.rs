//! Per-class three-member voting committees and the ensemble score.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::activity::{Activity, ActivitySet};
use crate::learners::{ModelSpec, TrainedModel};
use crate::matrix::FeatureMatrix;

pub const COMMITTEE_SIZE: usize = 3;
pub const ENSEMBLE_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum EnsembleError {
    #[error("class {class} has {found} candidate models, need at least {COMMITTEE_SIZE}")]
    InsufficientModels { class: Activity, found: usize },
    #[error("no committee for class {0}")]
    MissingClass(Activity),
    #[error("attribute {0:?} required by a member model is missing")]
    SchemaMismatch(String),
    #[error("{predictions} predictions but {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("test set has no positive labels")]
    NoPositives,
    #[error("ensemble was built for {built}, not {requested}")]
    TransportMismatch { built: TransportProfile, requested: TransportProfile },
}

/// TCP-only windows versus windows that also carry the UDP channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransportProfile {
    Tcp,
    Udp,
}

impl fmt::Display for TransportProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TransportProfile::Tcp => "tcp",
            TransportProfile::Udp => "udp",
        })
    }
}

impl FromStr for TransportProfile {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "tcp" => Ok(TransportProfile::Tcp),
            "udp" => Ok(TransportProfile::Udp),
            other => Err(format!("unknown transport profile {other:?}, expected tcp or udp")),
        }
    }
}

/// Cross-validated quality of one candidate, in percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Indices of the three best candidates: precision, then recall, then F1,
/// all descending, then input order.
pub fn rank_candidates(scores: &[CvScore]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        let (x, y) = (&scores[a], &scores[b]);
        y.precision
            .total_cmp(&x.precision)
            .then(y.recall.total_cmp(&x.recall))
            .then(y.f1.total_cmp(&x.f1))
            .then(a.cmp(&b))
    });
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub spec: ModelSpec,
    pub cv: CvScore,
    pub model: TrainedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub spec: ModelSpec,
    pub cv: CvScore,
    pub model: TrainedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Committee {
    pub class: Activity,
    pub members: Vec<Member>,
}

impl Committee {
    fn votes(&self, lookup: &[Vec<usize>], row: &[f64], buf: &mut Vec<f64>) -> [bool; COMMITTEE_SIZE] {
        let mut out = [false; COMMITTEE_SIZE];
        for ((m, cols), v) in self.members.iter().zip(lookup).zip(out.iter_mut()) {
            buf.clear();
            buf.extend(cols.iter().map(|&c| row[c]));
            *v = m.model.predict(buf);
        }
        out
    }
}

/// True iff at least two of three members vote positive.
pub fn majority(votes: [bool; COMMITTEE_SIZE]) -> bool {
    votes.iter().filter(|v| **v).count() >= 2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleModel {
    pub format_version: u32,
    pub transport: TransportProfile,
    /// One committee per activity, in activity order.
    pub committees: Vec<Committee>,
    pub seeds: Vec<u64>,
}

/// Picks the top three candidates per class. `per_class` must cover every
/// activity; candidate order is the final tie-break.
pub fn build_ensemble(
    transport: TransportProfile,
    per_class: Vec<(Activity, Vec<Candidate>)>,
    seeds: Vec<u64>,
) -> Result<EnsembleModel, EnsembleError> {
    let mut committees = Vec::with_capacity(Activity::ALL.len());
    for class in Activity::ALL {
        let Some((_, cands)) = per_class.iter().find(|(c, _)| *c == class) else {
            return Err(EnsembleError::MissingClass(class));
        };
        if cands.len() < COMMITTEE_SIZE {
            return Err(EnsembleError::InsufficientModels {
                class,
                found: cands.len(),
            });
        }
        let scores: Vec<CvScore> = cands.iter().map(|c| c.cv).collect();
        let members = rank_candidates(&scores)
            .into_iter()
            .take(COMMITTEE_SIZE)
            .map(|i| Member {
                spec: cands[i].spec,
                cv: cands[i].cv,
                model: cands[i].model.clone(),
            })
            .collect();
        committees.push(Committee { class, members });
    }
    Ok(EnsembleModel {
        format_version: ENSEMBLE_FORMAT_VERSION,
        transport,
        committees,
        seeds,
    })
}

impl EnsembleModel {
    pub fn expect_transport(&self, requested: TransportProfile) -> Result<(), EnsembleError> {
        if self.transport != requested {
            return Err(EnsembleError::TransportMismatch {
                built: self.transport,
                requested,
            });
        }
        Ok(())
    }

    fn resolve(&self, names: &[String]) -> Result<Vec<Vec<Vec<usize>>>, EnsembleError> {
        self.committees
            .iter()
            .map(|c| {
                c.members
                    .iter()
                    .map(|m| {
                        m.model
                            .schema
                            .iter()
                            .map(|n| {
                                names
                                    .iter()
                                    .position(|x| x == n)
                                    .ok_or_else(|| EnsembleError::SchemaMismatch(n.clone()))
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// Five independent class decisions for one row named by `names`.
    pub fn predict(&self, names: &[String], row: &[f64]) -> Result<ActivitySet, EnsembleError> {
        let lookup = self.resolve(names)?;
        Ok(self.predict_resolved(&lookup, row))
    }

    pub fn predict_matrix(&self, data: &FeatureMatrix) -> Result<Vec<ActivitySet>, EnsembleError> {
        let lookup = self.resolve(data.names())?;
        Ok(data.rows().map(|r| self.predict_resolved(&lookup, r)).collect())
    }

    fn predict_resolved(&self, lookup: &[Vec<Vec<usize>>], row: &[f64]) -> ActivitySet {
        let mut out = ActivitySet::EMPTY;
        let mut buf = Vec::new();
        for (c, cols) in self.committees.iter().zip(lookup) {
            if majority(c.votes(cols, row, &mut buf)) {
                out.insert(c.class);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ensemble serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// +1 per true positive, −2 per false positive, 0 otherwise.
pub fn row_points(predicted: ActivitySet, actual: ActivitySet) -> i64 {
    Activity::ALL
        .iter()
        .map(|&a| match (predicted.contains(a), actual.contains(a)) {
            (true, true) => 1,
            (true, false) => -2,
            _ => 0,
        })
        .sum()
}

/// 100 × total points / total positive labels.
pub fn ensemble_score(predictions: &[ActivitySet], truths: &[ActivitySet]) -> Result<f64, EnsembleError> {
    if predictions.len() != truths.len() {
        return Err(EnsembleError::LengthMismatch {
            predictions: predictions.len(),
            truths: truths.len(),
        });
    }
    let positives: usize = truths.iter().map(ActivitySet::count).sum();
    if positives == 0 {
        return Err(EnsembleError::NoPositives);
    }
    let points: i64 = predictions.iter().zip(truths).map(|(p, t)| row_points(*p, *t)).sum();
    Ok(100.0 * points as f64 / positives as f64)
}
