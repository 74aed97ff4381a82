//! Reward engines: the map-information-gain reward and three baseline
//! rewards from the navigation literature.
//!
//! Every engine resolves terminal cases first (arrival, then collision, then
//! timeout) and only evaluates shaping terms on ordinary steps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::simcore::BEAM_COUNT;

#[derive(Debug, Error, PartialEq)]
pub enum RewardError {
    #[error("goal distance is zero on a non-terminal step")]
    ZeroDistance,
    #[error("front window [{l1}, {l2}) invalid for a {BEAM_COUNT}-beam scan")]
    BadWindow { l1: usize, l2: usize },
    #[error("scan has {0} beams, expected {BEAM_COUNT}")]
    ScanLength(usize),
}

/// Everything a reward engine may look at after one step.
#[derive(Debug, Clone, Copy)]
pub struct RewardContext<'a> {
    /// Goal distance after the step.
    pub d: f64,
    /// Goal distance before the step.
    pub d_prev: f64,
    pub arrived: bool,
    pub collided: bool,
    pub timed_out: bool,
    pub raw_scan: &'a [f64],
    /// Newly seen cells this step.
    pub gain: usize,
    pub v: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardVariant {
    /// Information gain over distance, front clearance and velocity terms.
    Proposed,
    /// Velocity-only shaping with arrival and collision constants.
    CimursStyle,
    /// Clearance, velocity and progress penalties.
    HuStyle,
    /// Sparse arrival/collision reward.
    GrandoStyle,
}

impl RewardVariant {
    pub fn label(self) -> &'static str {
        match self {
            RewardVariant::Proposed => "proposed",
            RewardVariant::CimursStyle => "cimurs-style",
            RewardVariant::HuStyle => "hu-style",
            RewardVariant::GrandoStyle => "grando-style",
        }
    }
}

/// Scalar constants for one engine. Unused entries are ignored by engines
/// that have no such term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConstants {
    pub arrival: f64,
    pub collision: f64,
    /// `None` means a timeout step is scored like an ordinary step.
    pub timeout: Option<f64>,
    pub w_clearance: f64,
    pub w_proximity: f64,
    pub w_angular: f64,
    pub w_low_speed: f64,
}

impl RewardConstants {
    pub fn defaults_for(variant: RewardVariant) -> Self {
        let base = Self {
            arrival: 0.0,
            collision: 0.0,
            timeout: None,
            w_clearance: 0.0,
            w_proximity: 0.0,
            w_angular: 0.0,
            w_low_speed: 0.0,
        };
        match variant {
            RewardVariant::Proposed => Self {
                arrival: 100.0,
                collision: -200.0,
                timeout: Some(-200.0),
                ..base
            },
            RewardVariant::CimursStyle => Self {
                arrival: 80.0,
                collision: -100.0,
                ..base
            },
            RewardVariant::HuStyle => Self {
                arrival: 40.0,
                w_clearance: -1.0,
                w_proximity: -1.0,
                w_angular: -1.0,
                w_low_speed: -1.0,
                ..base
            },
            RewardVariant::GrandoStyle => Self {
                arrival: 100.0,
                collision: -10.0,
                ..base
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardSpec {
    pub variant: RewardVariant,
    pub constants: RewardConstants,
    /// First raw beam of the front window.
    pub l1: usize,
    /// One past the last raw beam of the front window.
    pub l2: usize,
    /// Cap on the front-clearance term, meters.
    pub r_l_cap: f64,
    /// Clearance below which the safety penalties apply.
    pub safety_distance: f64,
    pub v_max: f64,
}

impl RewardSpec {
    pub fn new(variant: RewardVariant) -> Self {
        Self {
            variant,
            constants: RewardConstants::defaults_for(variant),
            l1: 336,
            l2: 348,
            r_l_cap: 3.0,
            safety_distance: 1.0,
            v_max: crate::simcore::V_MAX,
        }
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if !(self.l1 < self.l2 && self.l2 <= BEAM_COUNT) {
            return Err(RewardError::BadWindow {
                l1: self.l1,
                l2: self.l2,
            });
        }
        Ok(())
    }

    pub fn evaluate(&self, ctx: &RewardContext) -> Result<RewardValue, RewardError> {
        match self.variant {
            RewardVariant::Proposed => reward_proposed(ctx, self),
            RewardVariant::CimursStyle => Ok(reward_cimurs_style(ctx, self)),
            RewardVariant::HuStyle => reward_hu_style(ctx, self),
            RewardVariant::GrandoStyle => Ok(reward_grando_style(ctx, self)),
        }
    }
}

/// Scalar reward plus its named components (empty for terminal steps).
#[derive(Debug, Clone, PartialEq)]
pub struct RewardValue {
    pub total: f64,
    pub terms: Vec<(&'static str, f64)>,
}

impl RewardValue {
    fn terminal(total: f64) -> Self {
        Self {
            total,
            terms: Vec::new(),
        }
    }

    fn from_terms(terms: Vec<(&'static str, f64)>) -> Self {
        Self {
            total: terms.iter().map(|(_, v)| v).sum(),
            terms,
        }
    }
}

fn terminal_value(ctx: &RewardContext, c: &RewardConstants) -> Option<f64> {
    if ctx.arrived {
        Some(c.arrival)
    } else if ctx.collided {
        Some(c.collision)
    } else if ctx.timed_out {
        c.timeout
    } else {
        None
    }
}

pub fn reward_proposed(ctx: &RewardContext, spec: &RewardSpec) -> Result<RewardValue, RewardError> {
    if let Some(r) = terminal_value(ctx, &spec.constants) {
        return Ok(RewardValue::terminal(r));
    }
    spec.validate()?;
    if ctx.raw_scan.len() != BEAM_COUNT {
        return Err(RewardError::ScanLength(ctx.raw_scan.len()));
    }
    if ctx.d == 0.0 {
        return Err(RewardError::ZeroDistance);
    }
    let front = ctx.raw_scan[spec.l1..spec.l2]
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(RewardValue::from_terms(vec![
        ("r_gd", ctx.gain as f64 / ctx.d),
        ("r_l", front.min(spec.r_l_cap)),
        ("r_v", ctx.v - ctx.omega.abs()),
    ]))
}

pub fn reward_cimurs_style(ctx: &RewardContext, spec: &RewardSpec) -> RewardValue {
    if let Some(r) = terminal_value(ctx, &spec.constants) {
        return RewardValue::terminal(r);
    }
    RewardValue::from_terms(vec![("r_v", ctx.v - ctx.omega.abs())])
}

pub fn reward_hu_style(ctx: &RewardContext, spec: &RewardSpec) -> Result<RewardValue, RewardError> {
    if let Some(r) = terminal_value(ctx, &spec.constants) {
        return Ok(RewardValue::terminal(r));
    }
    if ctx.raw_scan.len() != BEAM_COUNT {
        return Err(RewardError::ScanLength(ctx.raw_scan.len()));
    }
    let c = &spec.constants;
    let clear = ctx.raw_scan.iter().copied().fold(f64::INFINITY, f64::min);
    let (cp, cpo) = if clear < spec.safety_distance {
        (1.0, (spec.safety_distance - clear) / spec.safety_distance)
    } else {
        (0.0, 0.0)
    };
    Ok(RewardValue::from_terms(vec![
        ("r_cp", c.w_clearance * cp),
        ("r_cpo", c.w_proximity * cpo),
        ("r_av", c.w_angular * ctx.omega.abs()),
        ("r_lv", c.w_low_speed * (spec.v_max - ctx.v) / spec.v_max),
        ("r_progress", ctx.d_prev - ctx.d),
    ]))
}

pub fn reward_grando_style(ctx: &RewardContext, spec: &RewardSpec) -> RewardValue {
    match terminal_value(ctx, &spec.constants) {
        Some(r) => RewardValue::terminal(r),
        None => RewardValue::from_terms(Vec::new()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(scan: &[f64]) -> RewardContext<'_> {
        RewardContext {
            d: 10.0,
            d_prev: 10.0,
            arrived: false,
            collided: false,
            timed_out: false,
            raw_scan: scan,
            gain: 0,
            v: 0.5,
            omega: 0.0,
        }
    }

    #[test]
    fn proposed_terminal_constants() {
        let s = vec![5.0; BEAM_COUNT];
        let spec = RewardSpec::new(RewardVariant::Proposed);
        let r = |c: RewardContext| spec.evaluate(&c).unwrap().total;
        assert_eq!(
            r(RewardContext {
                arrived: true,
                ..ctx(&s)
            }),
            100.0
        );
        assert_eq!(
            r(RewardContext {
                collided: true,
                ..ctx(&s)
            }),
            -200.0
        );
        assert_eq!(
            r(RewardContext {
                timed_out: true,
                ..ctx(&s)
            }),
            -200.0
        );
    }

    #[test]
    fn proposed_shaped_cases() {
        let mut s = vec![5.0; BEAM_COUNT];
        s[340] = 2.0;
        let spec = RewardSpec::new(RewardVariant::Proposed);
        let r = spec.evaluate(&ctx(&s)).unwrap();
        assert!((r.total - 2.5).abs() < 1e-12);
        assert_eq!(r.terms.len(), 3);

        let clear = vec![10.0; BEAM_COUNT];
        let c = RewardContext {
            gain: 40,
            d: 8.0,
            v: 0.5,
            omega: 0.5,
            ..ctx(&clear)
        };
        assert!((spec.evaluate(&c).unwrap().total - 8.0).abs() < 1e-12);
    }

    #[test]
    fn proposed_front_window_is_half_open() {
        let mut s = vec![5.0; BEAM_COUNT];
        s[348] = 0.1;
        s[335] = 0.1;
        let spec = RewardSpec::new(RewardVariant::Proposed);
        let r = spec.evaluate(&RewardContext { v: 0.0, ..ctx(&s) }).unwrap();
        assert_eq!(r.total, 3.0);
    }

    #[test]
    fn proposed_zero_distance_is_error() {
        let s = vec![5.0; BEAM_COUNT];
        let spec = RewardSpec::new(RewardVariant::Proposed);
        assert_eq!(
            spec.evaluate(&RewardContext { d: 0.0, ..ctx(&s) }),
            Err(RewardError::ZeroDistance)
        );
    }

    #[test]
    fn cimurs_cases() {
        let s = vec![5.0; BEAM_COUNT];
        let spec = RewardSpec::new(RewardVariant::CimursStyle);
        assert_eq!(
            spec.evaluate(&RewardContext {
                arrived: true,
                ..ctx(&s)
            })
            .unwrap()
            .total,
            80.0
        );
        assert_eq!(
            spec.evaluate(&RewardContext {
                collided: true,
                ..ctx(&s)
            })
            .unwrap()
            .total,
            -100.0
        );
        let r = spec
            .evaluate(&RewardContext {
                v: 0.5,
                omega: 1.0,
                ..ctx(&s)
            })
            .unwrap();
        assert_eq!(r.total, -0.5);
    }

    #[test]
    fn hu_cases() {
        let spec = RewardSpec::new(RewardVariant::HuStyle);
        let clear = vec![5.0; BEAM_COUNT];
        assert_eq!(
            spec.evaluate(&RewardContext {
                arrived: true,
                ..ctx(&clear)
            })
            .unwrap()
            .total,
            40.0
        );
        assert_eq!(
            spec.evaluate(&RewardContext {
                collided: true,
                ..ctx(&clear)
            })
            .unwrap()
            .total,
            0.0
        );
        assert_eq!(spec.evaluate(&ctx(&clear)).unwrap().total, 0.0);

        let mut near = vec![5.0; BEAM_COUNT];
        near[100] = 0.5 * spec.safety_distance;
        let c = RewardContext {
            omega: 1.0,
            v: 0.0,
            d_prev: 5.05,
            d: 5.0,
            ..ctx(&near)
        };
        assert!((spec.evaluate(&c).unwrap().total - (-3.45)).abs() < 1e-12);
    }

    #[test]
    fn grando_cases() {
        let s = vec![5.0; BEAM_COUNT];
        let spec = RewardSpec::new(RewardVariant::GrandoStyle);
        assert_eq!(
            spec.evaluate(&RewardContext {
                arrived: true,
                ..ctx(&s)
            })
            .unwrap()
            .total,
            100.0
        );
        assert_eq!(
            spec.evaluate(&RewardContext {
                collided: true,
                ..ctx(&s)
            })
            .unwrap()
            .total,
            -10.0
        );
        assert_eq!(spec.evaluate(&ctx(&s)).unwrap().total, 0.0);
    }

    #[test]
    fn arrival_wins_for_every_variant() {
        let s = vec![0.1; BEAM_COUNT];
        for v in [
            RewardVariant::Proposed,
            RewardVariant::CimursStyle,
            RewardVariant::HuStyle,
            RewardVariant::GrandoStyle,
        ] {
            let spec = RewardSpec::new(v);
            let c = RewardContext {
                arrived: true,
                collided: true,
                timed_out: true,
                d: 0.0,
                ..ctx(&s)
            };
            assert_eq!(spec.evaluate(&c).unwrap().total, spec.constants.arrival);
        }
    }

    #[test]
    fn bad_window_rejected() {
        let mut spec = RewardSpec::new(RewardVariant::Proposed);
        spec.l1 = 348;
        assert!(spec.validate().is_err());
    }
}
