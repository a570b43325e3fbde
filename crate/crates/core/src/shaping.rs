//! Complexity-conditioned reasoning-length shaping and the composite reward.
//!
//! ```text
//! L_emp(t) = L_max − (L_max − L_target)·min(1, t/T_warmup)
//! ρ        = max(0, L/L_emp − 1)
//! λ        = 1 − H
//! α        = max(0, 1 − λρ)  if r_a > 0
//!            1 + λρ          if r_a < 0
//!            1               if r_a = 0
//! R_Think  = α·r_a
//! R_C      = R_Think + R_Format + R_Tool
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SchemaSet, ToolCall, Trajectory};
use crate::profiling::verify;
use crate::model::ExecutionCase;
use crate::structural::{reward_vector, tool_reward, RewardVector};

/// Length budget of one difficulty band, in tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandBudget {
    pub l_max: f64,
    pub l_target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShapingConfig {
    /// Indexed by band id.
    pub bands: Vec<BandBudget>,
    pub t_warmup: u64,
    /// Floor applied to every derived budget so baselines stay positive.
    #[serde(default = "default_min_length")]
    pub min_length: f64,
}

fn default_min_length() -> f64 {
    1.0
}

/// One recorded response length, used to derive budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LengthObservation {
    pub band: usize,
    pub length: f64,
    pub success: bool,
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of unsorted samples.
pub fn percentile(samples: &[f64], q: f64) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let rank = q.clamp(0.0, 1.0) * (s.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    Some(s[lo] + (s[hi] - s[lo]) * (rank - lo as f64))
}

impl ShapingConfig {
    pub fn new(bands: Vec<BandBudget>, t_warmup: u64, min_length: f64) -> Result<Self> {
        let cfg = ShapingConfig {
            bands,
            t_warmup,
            min_length,
        };
        cfg.check()?;
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        if self.t_warmup < 1 {
            return Err(Error::Config("t_warmup must be at least 1".into()));
        }
        if !(self.min_length > 0.0) {
            return Err(Error::Config("min_length must be positive".into()));
        }
        if self.bands.is_empty() {
            return Err(Error::Config("no band budgets".into()));
        }
        for (d, b) in self.bands.iter().enumerate() {
            if !(b.l_target > 0.0 && b.l_target <= b.l_max && b.l_max.is_finite()) {
                return Err(Error::Config(format!(
                    "band {d}: need 0 < l_target <= l_max, got {} / {}",
                    b.l_target, b.l_max
                )));
            }
        }
        Ok(())
    }

    /// Budgets from recorded lengths: `l_target` is the `q`-percentile of
    /// successful lengths in the band, `l_max` the largest length seen in the
    /// band. Bands without successes use the global successful lengths, bands
    /// without observations the global ones.
    pub fn from_observations(
        obs: &[LengthObservation],
        band_count: usize,
        q: f64,
        t_warmup: u64,
        min_length: f64,
    ) -> Result<Self> {
        let lengths = |pred: &dyn Fn(&LengthObservation) -> bool| -> Vec<f64> {
            obs.iter().filter(|o| pred(o)).map(|o| o.length).collect()
        };
        let global_success = lengths(&|o| o.success);
        let global_all = lengths(&|_| true);
        let max_of = |v: &[f64]| v.iter().copied().fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))));

        let bands = (0..band_count)
            .map(|d| {
                let success = lengths(&|o| o.band == d && o.success);
                let all = lengths(&|o| o.band == d);
                let target = percentile(&success, q)
                    .or_else(|| percentile(&global_success, q))
                    .or_else(|| percentile(&global_all, q))
                    .unwrap_or(min_length)
                    .max(min_length);
                let max = max_of(&all)
                    .or_else(|| max_of(&global_all))
                    .unwrap_or(target)
                    .max(target);
                BandBudget {
                    l_max: max,
                    l_target: target,
                }
            })
            .collect();
        ShapingConfig::new(bands, t_warmup, min_length)
    }

    /// Budgets from a profiled case base, using each case's recorded response.
    pub fn from_cases(
        cases: &[ExecutionCase],
        band_count: usize,
        q: f64,
        t_warmup: u64,
        min_length: f64,
    ) -> Result<Self> {
        let obs = cases
            .iter()
            .map(|c| {
                Ok(LengthObservation {
                    band: c.require_profile()?.band,
                    length: c.trajectory.length_tokens as f64,
                    success: verify(&c.trajectory, &c.reference_calls, &c.schemas),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        ShapingConfig::from_observations(&obs, band_count, q, t_warmup, min_length)
    }

    pub fn budget(&self, band: usize) -> Result<BandBudget> {
        self.bands.get(band).copied().ok_or(Error::UnknownBand(band))
    }
}

/// Annealed length baseline for a band at training step `step`.
pub fn empirical_length(band: usize, step: u64, cfg: &ShapingConfig) -> Result<f64> {
    let b = cfg.budget(band)?;
    let progress = (step as f64 / cfg.t_warmup as f64).min(1.0);
    Ok(b.l_max - (b.l_max - b.l_target) * progress)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Shaping {
    pub rho: f64,
    pub lambda: f64,
    pub alpha: f64,
}

/// Excess-length ratio, gating weight and shaping coefficient.
pub fn shaping_coefficient(hardness: f64, r_a: f64, length: f64, l_emp: f64) -> Result<Shaping> {
    if !(l_emp > 0.0 && l_emp.is_finite()) {
        return Err(Error::DegenerateBaseline(l_emp));
    }
    if !(0.0..=1.0).contains(&hardness) {
        return Err(Error::OutOfRange {
            name: "hardness",
            value: hardness,
            range: "[0, 1]",
        });
    }
    let rho = (length / l_emp - 1.0).max(0.0);
    let lambda = 1.0 - hardness;
    let alpha = if r_a > 0.0 {
        (1.0 - lambda * rho).max(0.0)
    } else if r_a < 0.0 {
        1.0 + lambda * rho
    } else {
        1.0
    };
    Ok(Shaping { rho, lambda, alpha })
}

pub fn think_reward(alpha: f64, r_a: f64) -> f64 {
    alpha * r_a
}

/// Answer score in `[-2, 2]`, tied affinely to the structural reward.
pub fn answer_score(v: &RewardVector) -> f64 {
    2.0 * tool_reward(v)
}

pub fn format_reward(traj: &Trajectory) -> f64 {
    if traj.format_valid {
        1.0
    } else {
        -1.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    #[serde(flatten)]
    pub vector: RewardVector,
    pub r_a: f64,
    #[serde(rename = "L")]
    pub length: f64,
    #[serde(rename = "L_emp")]
    pub l_emp: f64,
    pub rho: f64,
    pub lambda: f64,
    pub alpha: f64,
    pub r_think: f64,
    pub r_format: f64,
    pub r_tool: f64,
    pub r_total: f64,
}

/// Switches for ablation runs. The default is the full composite reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardOptions {
    /// When false, α ≡ 1 (no length shaping).
    pub length_shaping: bool,
    /// When true, the tool reward only sees exact match: `2·r_exact − 1`.
    pub exact_only: bool,
}

impl Default for RewardOptions {
    fn default() -> Self {
        RewardOptions {
            length_shaping: true,
            exact_only: false,
        }
    }
}

/// Everything the composite reward needs besides the response itself.
#[derive(Debug, Clone, Copy)]
pub struct RewardContext<'a> {
    pub reference_calls: &'a [ToolCall],
    pub schemas: &'a SchemaSet,
    pub hardness: f64,
    pub band: usize,
    pub step: u64,
}

pub fn composite_reward(
    traj: &Trajectory,
    refs: &[ToolCall],
    schemas: &SchemaSet,
    hardness: f64,
    band: usize,
    step: u64,
    cfg: &ShapingConfig,
) -> Result<RewardBreakdown> {
    let ctx = RewardContext {
        reference_calls: refs,
        schemas,
        hardness,
        band,
        step,
    };
    composite_reward_with(traj, &ctx, cfg, RewardOptions::default())
}

pub fn composite_reward_with(
    traj: &Trajectory,
    ctx: &RewardContext<'_>,
    cfg: &ShapingConfig,
    opts: RewardOptions,
) -> Result<RewardBreakdown> {
    let vector = reward_vector(ctx.reference_calls, &traj.calls, ctx.schemas)?;
    let r_tool = if opts.exact_only {
        2.0 * vector.r_exact - 1.0
    } else {
        tool_reward(&vector)
    };
    let r_a = 2.0 * r_tool;
    let l_emp = empirical_length(ctx.band, ctx.step, cfg)?;
    let length = traj.length_tokens as f64;
    let mut shaping = shaping_coefficient(ctx.hardness, r_a, length, l_emp)?;
    if !opts.length_shaping {
        shaping.alpha = 1.0;
    }
    let r_think = think_reward(shaping.alpha, r_a);
    let r_format = format_reward(traj);
    Ok(RewardBreakdown {
        vector,
        r_a,
        length,
        l_emp,
        rho: shaping.rho,
        lambda: shaping.lambda,
        alpha: shaping.alpha,
        r_think,
        r_format,
        r_tool,
        r_total: r_think + r_format + r_tool,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_trajectory, ParamKind, ParamSpec, ToolSchema};
    use serde_json::json;

    fn cfg() -> ShapingConfig {
        ShapingConfig::new(
            vec![BandBudget {
                l_max: 800.0,
                l_target: 200.0,
            }],
            100,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn baseline_anneals_linearly() {
        assert_eq!(empirical_length(0, 0, &cfg()).unwrap(), 800.0);
        assert_eq!(empirical_length(0, 50, &cfg()).unwrap(), 500.0);
        assert_eq!(empirical_length(0, 100, &cfg()).unwrap(), 200.0);
        assert_eq!(empirical_length(0, 1000, &cfg()).unwrap(), 200.0);
        assert!(matches!(empirical_length(3, 0, &cfg()), Err(Error::UnknownBand(3))));
    }

    #[test]
    fn shaping_examples() {
        let s = shaping_coefficient(0.4, 2.0, 90.0, 100.0).unwrap();
        assert_eq!((s.rho, s.alpha), (0.0, 1.0));
        let s = shaping_coefficient(0.0, 2.0, 200.0, 100.0).unwrap();
        assert_eq!((s.lambda, s.rho, s.alpha), (1.0, 1.0, 0.0));
        let s = shaping_coefficient(0.5, -2.0, 150.0, 100.0).unwrap();
        assert_eq!((s.lambda, s.rho, s.alpha), (0.5, 0.5, 1.25));
        let s = shaping_coefficient(0.1, 0.0, 10_000.0, 100.0).unwrap();
        assert_eq!(s.alpha, 1.0);
        assert!(shaping_coefficient(0.1, 1.0, 10.0, 0.0).is_err());
        assert!(shaping_coefficient(1.1, 1.0, 10.0, 5.0).is_err());
    }

    #[test]
    fn think_and_answer() {
        assert_eq!(think_reward(1.0, 2.0), 2.0);
        assert_eq!(think_reward(0.0, 2.0), 0.0);
        assert_eq!(think_reward(1.25, -2.0), -2.5);
        assert_eq!(answer_score(&RewardVector::ONES), 2.0);
        assert_eq!(answer_score(&RewardVector::ZEROS), -2.0);
        let v = RewardVector {
            r_type: 0.5,
            r_constraint: 0.5,
            r_value: 0.5,
            r_exact: 0.0,
            ..RewardVector::ONES
        };
        assert!((answer_score(&v) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn format_guardrail() {
        assert_eq!(format_reward(&parse_trajectory("<think>a</think><tool_call>[]</tool_call>")), 1.0);
        assert_eq!(format_reward(&parse_trajectory("<think>a</think>")), -1.0);
        assert_eq!(
            format_reward(&parse_trajectory("<think>a</think><think>b</think><tool_call>[]</tool_call>")),
            -1.0
        );
    }

    fn f_schema() -> SchemaSet {
        SchemaSet::new(vec![ToolSchema::new(
            "f",
            vec![ParamSpec::new("a", ParamKind::Integer).required()],
        )])
        .unwrap()
    }

    #[test]
    fn composite_chain() {
        let refs = [ToolCall::new("f").arg("a", json!(1))];
        let exact = Trajectory::render("short", &refs);
        let b = composite_reward(&exact, &refs, &f_schema(), 0.2, 0, 0, &cfg()).unwrap();
        assert_eq!((b.r_tool, b.r_a, b.alpha, b.r_think, b.r_format, b.r_total), (1.0, 2.0, 1.0, 2.0, 1.0, 4.0));

        let empty = Trajectory::render("short", &[]);
        let b = composite_reward(&empty, &refs, &f_schema(), 0.2, 0, 0, &cfg()).unwrap();
        assert_eq!((b.r_tool, b.r_a, b.alpha, b.r_think, b.r_format, b.r_total), (-1.0, -2.0, 1.0, -2.0, 1.0, -2.0));

        // 1000 tokens, malformed, baseline 800 at t=0: ρ = 0.25, λ = 0.8, α = 1.2
        let words = vec!["w"; 1000].join(" ");
        let bad = parse_trajectory(&format!("<think>{words}</think>"));
        let b = composite_reward(&bad, &refs, &f_schema(), 0.2, 0, 0, &cfg()).unwrap();
        assert_eq!(b.r_format, -1.0);
        assert_eq!(b.r_tool, -1.0);
        assert!((b.alpha - 1.2).abs() < 1e-12);
        assert!((b.r_total - (-2.0 * 1.2 - 2.0)).abs() < 1e-12);
        assert!(b.r_total <= -4.0);
    }

    #[test]
    fn ablation_switches() {
        let refs = [ToolCall::new("f").arg("a", json!(1))];
        let words = vec!["w"; 1600].join(" ");
        let long = Trajectory::render(&words, &[ToolCall::new("f").arg("a", json!(2))]);
        let ctx = RewardContext {
            reference_calls: &refs,
            schemas: &f_schema(),
            hardness: 0.0,
            band: 0,
            step: 0,
        };
        let full = composite_reward_with(&long, &ctx, &cfg(), RewardOptions::default()).unwrap();
        assert!(full.alpha < 1.0);
        let flat = composite_reward_with(
            &long,
            &ctx,
            &cfg(),
            RewardOptions { length_shaping: false, exact_only: false },
        )
        .unwrap();
        assert_eq!(flat.alpha, 1.0);
        let exact = composite_reward_with(
            &long,
            &ctx,
            &cfg(),
            RewardOptions { length_shaping: true, exact_only: true },
        )
        .unwrap();
        assert_eq!(exact.r_tool, -1.0);
    }

    #[test]
    fn percentile_interpolates() {
        let s = [10.0, 20.0, 30.0, 40.0, 50.0];
        assert_eq!(percentile(&s, 0.0), Some(10.0));
        assert_eq!(percentile(&s, 0.5), Some(30.0));
        assert_eq!(percentile(&s, 0.8), Some(42.0));
        assert_eq!(percentile(&s, 1.0), Some(50.0));
        assert_eq!(percentile(&[], 0.5), None);
    }

    #[test]
    fn budgets_from_observations() {
        let obs = [
            LengthObservation { band: 0, length: 10.0, success: true },
            LengthObservation { band: 0, length: 20.0, success: true },
            LengthObservation { band: 0, length: 90.0, success: false },
            LengthObservation { band: 1, length: 300.0, success: false },
        ];
        let cfg = ShapingConfig::from_observations(&obs, 3, 0.8, 10, 1.0).unwrap();
        assert_eq!(cfg.bands[0], BandBudget { l_max: 90.0, l_target: 18.0 });
        // band 1 has no success: falls back to global successful lengths
        assert_eq!(cfg.bands[1], BandBudget { l_max: 300.0, l_target: 18.0 });
        // band 2 is empty: global everything
        assert_eq!(cfg.bands[2], BandBudget { l_max: 300.0, l_target: 18.0 });
        assert!(ShapingConfig::new(vec![BandBudget { l_max: 1.0, l_target: 2.0 }], 1, 1.0).is_err());
        assert!(ShapingConfig::new(vec![BandBudget { l_max: 2.0, l_target: 1.0 }], 0, 1.0).is_err());
    }
}
