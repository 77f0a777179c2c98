//! Sector verdicts and the disc profile they suggest.

use std::f64::consts::{FRAC_PI_2, PI};

use crext_core::bishop::{default_alpha, Profile};
use crext_core::manifold::ManifoldModel;
use crext_core::sector::{sector_condition, Sector, SectorError, SectorMode, SectorVerdict};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Leading part restricted to the line, tested for `≥ 0`.
    Leading,
    /// Full `h` over the box `|x_I| ≤ c|w|^m`, tested for `> 0`.
    Full,
}

#[derive(Debug, Clone, Serialize)]
pub struct WidthChecks {
    pub pi_over_m: bool,
    pub pi_over_m_minus_1: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pi_over_m_minus_2: Option<bool>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Verdict {
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c: Option<f64>,
    pub order: u32,
    pub holds: bool,
    pub required_width: f64,
    pub best_sector: Option<Sector>,
    pub sectors: Vec<Sector>,
    /// The same best sector measured against the alternative widths.
    pub width_checks: WidthChecks,
    /// The leading pairing vanishes identically on this line.
    pub vanishes: bool,
}

impl Verdict {
    fn from_core(v: SectorVerdict, mode: Mode, c: Option<f64>) -> Self {
        let m = v.order as f64;
        let w = v.best_sector.map_or(0.0, |s| s.width);
        Verdict {
            mode,
            c,
            order: v.order,
            holds: v.holds,
            required_width: v.required_width,
            best_sector: v.best_sector,
            width_checks: WidthChecks {
                pi_over_m: w > PI / m,
                pi_over_m_minus_1: w > PI / (m - 1.0),
                pi_over_m_minus_2: (v.order > 2).then(|| w > PI / (m - 2.0)),
            },
            sectors: v.sectors,
            vanishes: false,
        }
    }

    pub fn is_full_circle(&self) -> bool {
        self.best_sector.is_some_and(|s| s.width >= 2.0 * PI - 1e-9)
    }
}

/// Leading-part test, falling back to the box test when the leading part
/// depends on `x`.
pub fn sector_verdict(
    model: &ManifoldModel,
    direction: usize,
    block: usize,
    xi: &[f64],
    c: f64,
) -> Result<Verdict, CliError> {
    match sector_condition(model, direction, block, xi, &SectorMode::Leading, None) {
        Ok(v) => Ok(Verdict::from_core(v, Mode::Leading, None)),
        Err(SectorError::ForeignVariables(_)) => {
            let v = sector_condition(model, direction, block, xi, &SectorMode::Full { c }, None)?;
            Ok(Verdict::from_core(v, Mode::Full, Some(c)))
        }
        Err(SectorError::ZeroPolynomial) => {
            let m = model.weights().weights()[block].finite().unwrap_or(0);
            Ok(Verdict {
                mode: Mode::Leading,
                c: None,
                order: m,
                holds: false,
                required_width: PI / m as f64,
                best_sector: None,
                sectors: Vec::new(),
                width_checks: WidthChecks {
                    pi_over_m: false,
                    pi_over_m_minus_1: false,
                    pi_over_m_minus_2: (m > 2).then_some(false),
                },
                vanishes: true,
            })
        }
        Err(e) => Err(e.into()),
    }
}

/// Profile and centre angle for a disc whose `w`-values stay in the best
/// sector: the linear profile when the pairing is positive on the whole
/// circle, otherwise `(1 − τ)^α` centred on the sector with
/// `1/m < α < min(width/π, 1/(m−1))`.
pub fn auto_profile(verdict: &Verdict, m: u32) -> (Profile, f64, &'static str) {
    if verdict.mode == Mode::Leading && verdict.is_full_circle() {
        return (Profile::Linear, FRAC_PI_2, "pairing positive on the whole circle");
    }
    match verdict.best_sector {
        Some(s) if verdict.holds => {
            let lo = 1.0 / m as f64;
            let hi = (s.width / PI).min(1.0 / (m as f64 - 1.0).max(1.0));
            (Profile::Singular { alpha: 0.5 * (lo + hi) }, s.center, "singular disc inside the best sector")
        }
        _ => (
            Profile::Singular { alpha: default_alpha(m) },
            FRAC_PI_2,
            "sector condition fails; default singular disc",
        ),
    }
}
