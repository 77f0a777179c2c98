use std::f64::consts::PI;

use clap::Args;
use crext_core::cones::{cone_contains, cone_contains_strictly, halfspace_cones, ConeDescription};
use crext_core::sector::{barrier_construct, negative_width, thresholds, SectorError, Thresholds, TrigPoly};
use serde::Serialize;

use crate::error::CliError;
use crate::report::{emit, Artifact, OutputArgs, Report};

#[derive(Args, Debug, Clone, Serialize)]
pub struct CompareArgs {
    /// Total degree k of y = |w|^k + a|w|^{k-p} Re w^p
    #[arg(long, default_value_t = 4)]
    pub k: u32,
    /// Harmonic degree p
    #[arg(long, default_value_t = 2)]
    pub p: u32,
    /// Coefficients a: comma-separated values or lo:hi:count
    #[arg(long, default_value = "1,1.4142135623730951,1.8,2,3")]
    pub a_range: String,
    /// θ samples in the g(θ) curves
    #[arg(long, default_value_t = 721)]
    pub grid: usize,
    #[serde(skip)]
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Serialize)]
struct ThresholdSection {
    #[serde(flatten)]
    thresholds: Thresholds,
    /// `a₂/a₁ = bp_coef / sector_coef`.
    ratio: f64,
}

#[derive(Serialize)]
struct BarrierEntry {
    b: f64,
    min_value: f64,
    argmin: f64,
}

#[derive(Serialize)]
struct Row {
    a: f64,
    a1: f64,
    a2: f64,
    /// Downward extension through the bracket condition: `a > bp_coef`.
    bp_extends: bool,
    /// Downward extension through the sector condition: `a > sector_coef`.
    sector_extends: bool,
    negative_width: f64,
    required_width: f64,
    barrier: Option<BarrierEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    barrier_unavailable: Option<String>,
    bp_cone: ConeDescription,
    sector_cone: ConeDescription,
    bp_opens_below: bool,
    sector_opens_below: bool,
    /// `bp ⊆ sector`; `None` where containment is not decidable.
    contained: Option<bool>,
    strictly_contained: Option<bool>,
}

pub fn parse_range(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::input("invalid_argument", format!("cannot read a-range '{s}'"));
    let parts: Vec<&str> = s.split(':').collect();
    let values = match parts.as_slice() {
        [lo, hi, n] => {
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            let n: usize = n.trim().parse().map_err(|_| bad())?;
            match n {
                0 => return Err(bad()),
                1 => vec![lo],
                _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
            }
        }
        [list] => list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?,
        _ => return Err(bad()),
    };
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(values)
}

pub fn run(args: &CompareArgs) -> Result<(), CliError> {
    let (k, p) = (args.k, args.p);
    let t = thresholds(k, p)?;
    let avals = parse_range(&args.a_range)?;
    if args.grid < 2 {
        return Err(CliError::input("invalid_argument", "grid must be at least 2"));
    }
    let mut report = Report::new("compare", None, args);
    let ratio = t.bp_coef / t.sector_coef;
    if (k, p) == (6, 4) {
        report.notes.push(format!(
            "a2/a1 = bp_coef/sector_coef = {ratio} for (k, p) = (6, 4)"
        ));
    }
    if !t.ordered {
        report.notes.push("bp_coef does not exceed sector_coef".into());
    }

    let mut rows = Vec::with_capacity(avals.len());
    let mut barriers = Vec::with_capacity(avals.len());
    for &a in &avals {
        let cones = halfspace_cones(k, p, a)?;
        let (barrier, barrier_unavailable, g1) = match barrier_construct(k, p, a) {
            Ok(b) => (
                Some(BarrierEntry {
                    b: b.b,
                    min_value: b.min_value,
                    argmin: b.argmin,
                }),
                None,
                Some(b.g1),
            ),
            Err(e @ (SectorError::NotDivisible { .. } | SectorError::AboveThreshold { .. })) => {
                (None, Some(e.to_string()), None)
            }
            Err(e) => return Err(e.into()),
        };
        barriers.push(g1);
        rows.push(Row {
            a,
            a1: cones.a1,
            a2: cones.a2,
            bp_extends: a > t.bp_coef,
            sector_extends: a > t.sector_coef,
            negative_width: negative_width(p, a),
            required_width: PI / k as f64,
            barrier,
            barrier_unavailable,
            bp_opens_below: cones.bp.opens_below(),
            sector_opens_below: cones.sector.opens_below(),
            contained: cone_contains(&cones.sector, &cones.bp).ok(),
            strictly_contained: cone_contains_strictly(&cones.sector, &cones.bp).ok(),
            bp_cone: cones.bp,
            sector_cone: cones.sector,
        });
    }

    report.section("thresholds", &ThresholdSection { thresholds: t, ratio });
    let artifacts = vec![
        Artifact {
            name: "compare_table.csv".into(),
            content: table_csv(&rows),
        },
        Artifact {
            name: "compare_g.csv".into(),
            content: curves_csv(p, &avals, &barriers, args.grid),
        },
    ];
    report.section("rows", &rows);
    emit(report, artifacts, &args.output)
}

fn table_csv(rows: &[Row]) -> String {
    let mut s = String::from(
        "# threshold comparison\na,a1,a2,bp_extends,sector_extends,negative_width,barrier_min,bp_opens_below,sector_opens_below\n",
    );
    for r in rows {
        let bmin = r.barrier.as_ref().map_or(String::new(), |b| format!("{:.12e}", b.min_value));
        s.push_str(&format!(
            "{},{:.12},{:.12},{},{},{:.12},{},{},{}\n",
            r.a, r.a1, r.a2, r.bp_extends, r.sector_extends, r.negative_width, bmin, r.bp_opens_below, r.sector_opens_below
        ));
    }
    s
}

/// `g = 1 + a cos pθ` and, where available, the barrier `g₁` per `a`.
fn curves_csv(p: u32, avals: &[f64], barriers: &[Option<TrigPoly>], samples: usize) -> String {
    let mut s = String::from("# g(theta) = 1 + a cos(p theta); g1 = barrier where defined\ntheta");
    for (a, b) in avals.iter().zip(barriers) {
        s.push_str(&format!(",g_a{a}"));
        if b.is_some() {
            s.push_str(&format!(",g1_a{a}"));
        }
    }
    s.push('\n');
    let curves: Vec<TrigPoly> = avals.iter().map(|&a| TrigPoly::one_plus_cos(a, p as usize)).collect();
    for i in 0..samples {
        let theta = 2.0 * PI * i as f64 / (samples - 1) as f64;
        s.push_str(&format!("{theta:.12}"));
        for (g, b) in curves.iter().zip(barriers) {
            s.push_str(&format!(",{:.12e}", g.eval(theta)));
            if let Some(b) = b {
                s.push_str(&format!(",{:.12e}", b.eval(theta)));
            }
        }
        s.push('\n');
    }
    s
}
