//! Case profiling: verifier, judge, hardness score, difficulty bands and the
//! easy/hard split of a case base.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{validate_call, ExecutionCase, SchemaSet, ToolCall, Trajectory};
use crate::structural::{derive_failure_profile, reward_vector, FailureProfile, RewardVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaseProfile {
    pub hardness: f64,
    pub band: usize,
    pub failure: FailureProfile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub coherence: f64,
    pub parameterization: f64,
    pub schema_adherence: f64,
    pub aggregate: f64,
}

impl JudgeVerdict {
    pub fn new(coherence: f64, parameterization: f64, schema_adherence: f64) -> Self {
        JudgeVerdict {
            coherence,
            parameterization,
            schema_adherence,
            aggregate: (coherence + parameterization + schema_adherence) / 3.0,
        }
    }
}

/// Scores a failed trajectory's adequacy in `[0, 1]`.
pub trait Judge {
    fn judge(&self, case: &ExecutionCase, trajectory: &Trajectory, v: &RewardVector) -> JudgeVerdict;
}

/// Deterministic rubric judge built from the structural reward vector.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubJudge;

impl Judge for StubJudge {
    fn judge(&self, _case: &ExecutionCase, trajectory: &Trajectory, v: &RewardVector) -> JudgeVerdict {
        stub_verdict(trajectory.format_valid, v)
    }
}

/// The rubric: coherence from the tag grammar, parameterization from keys and
/// values, schema adherence from types and constraints.
pub fn stub_verdict(format_valid: bool, v: &RewardVector) -> JudgeVerdict {
    JudgeVerdict::new(
        if format_valid { 1.0 } else { 0.0 },
        (v.r_key + v.r_value) / 2.0,
        (v.r_type + v.r_constraint) / 2.0,
    )
}

pub fn stub_judge(case: &ExecutionCase, v: &RewardVector) -> JudgeVerdict {
    StubJudge.judge(case, &case.trajectory, v)
}

/// `H = 0` when the verifier passes, else `1 − S_judge`.
pub fn hardness(verifier_pass: bool, judge_score: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&judge_score) {
        return Err(Error::OutOfRange {
            name: "judge_score",
            value: judge_score,
            range: "[0, 1]",
        });
    }
    Ok(if verifier_pass { 0.0 } else { 1.0 - judge_score })
}

/// Format-valid, AST-exact, and every predicted call schema-conformant.
pub fn verify(pred: &Trajectory, reference_calls: &[ToolCall], schemas: &SchemaSet) -> bool {
    if !pred.format_valid {
        return false;
    }
    let exact = reward_vector(reference_calls, &pred.calls, schemas)
        .map(|v| v.r_exact == 1.0)
        .unwrap_or(false);
    exact
        && pred.calls.iter().all(|c| {
            schemas
                .get(&c.name)
                .and_then(|s| validate_call(c, s).ok())
                .is_some_and(|r| r.all_ok())
        })
}

/// Ascending hardness cut points; band `k` covers `[cuts[k-1], cuts[k])`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BandThresholds(Vec<f64>);

impl Default for BandThresholds {
    fn default() -> Self {
        BandThresholds(vec![1.0 / 3.0, 2.0 / 3.0])
    }
}

impl BandThresholds {
    pub fn new(cuts: Vec<f64>) -> Result<Self> {
        let sorted = cuts.windows(2).all(|w| w[0] < w[1]);
        let inside = cuts.iter().all(|c| *c > 0.0 && *c <= 1.0);
        if !sorted || !inside {
            return Err(Error::Config(format!(
                "band thresholds must be strictly increasing in (0, 1]: {cuts:?}"
            )));
        }
        Ok(BandThresholds(cuts))
    }

    pub fn band_count(&self) -> usize {
        self.0.len() + 1
    }

    pub fn band_of(&self, hardness: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&hardness) {
            return Err(Error::OutOfRange {
                name: "hardness",
                value: hardness,
                range: "[0, 1]",
            });
        }
        Ok(self.0.iter().take_while(|&&c| hardness >= c).count())
    }
}

/// Band under the default three-way split.
pub fn band_of(hardness: f64) -> Result<usize> {
    BandThresholds::default().band_of(hardness)
}

pub const DEFAULT_PARTITION_THRESHOLD: f64 = 0.5;

/// Splits profiled cases into (easy, hard); `H ≤ threshold` is easy. Order is
/// kept on both sides.
pub fn partition(
    cases: &[ExecutionCase],
    threshold: f64,
) -> Result<(Vec<ExecutionCase>, Vec<ExecutionCase>)> {
    let mut easy = Vec::new();
    let mut hard = Vec::new();
    for case in cases {
        if case.hardness()? <= threshold {
            easy.push(case.clone());
        } else {
            hard.push(case.clone());
        }
    }
    Ok((easy, hard))
}

/// Runs verifier and judge over trajectories and turns the result into a
/// [`CaseProfile`].
pub struct Profiler<J: Judge = StubJudge> {
    pub judge: J,
    pub bands: BandThresholds,
}

impl Default for Profiler<StubJudge> {
    fn default() -> Self {
        Profiler {
            judge: StubJudge,
            bands: BandThresholds::default(),
        }
    }
}

impl<J: Judge> Profiler<J> {
    /// Profiles a case from its own recorded trajectory.
    pub fn profile(&self, case: &ExecutionCase) -> Result<CaseProfile> {
        self.profile_samples(case, std::slice::from_ref(&case.trajectory))
    }

    /// Profiles a case from sampled trajectories: hardness is averaged over
    /// samples, the failure profile is taken from the first sample.
    pub fn profile_samples(&self, case: &ExecutionCase, samples: &[Trajectory]) -> Result<CaseProfile> {
        let mut total = 0.0;
        let mut failure = None;
        for traj in samples {
            let v = reward_vector(&case.reference_calls, &traj.calls, &case.schemas)?;
            let pass = verify(traj, &case.reference_calls, &case.schemas);
            let score = self.judge.judge(case, traj, &v).aggregate;
            total += hardness(pass, score.clamp(0.0, 1.0))?;
            failure.get_or_insert(derive_failure_profile(&v));
        }
        let hardness = if samples.is_empty() {
            0.0
        } else {
            total / samples.len() as f64
        };
        Ok(CaseProfile {
            hardness,
            band: self.bands.band_of(hardness)?,
            failure: failure.unwrap_or_default(),
        })
    }
}
