use clap::Args;
use crext_core::bishop::{hopf_scan, HopfOptions, HopfScan};
use crext_core::cones::{collect_directions, cone_dimension, ConeDescription};
use crext_core::hormander::{filtration, FiltrationReport};
use crext_core::linalg::RANK_TOL;
use crext_core::manifold::{
    pluriharmonic_subspace_dim, pluriharmonic_test, print_poly, print_poly_with, ManifoldModel,
};
use crext_core::polyalg::Weight;
use crext_core::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::error::CliError;
use crate::input::{load_model, weight_value};
use crate::report::{emit, Artifact, OutputArgs, Report};
use crate::verdict::{auto_profile, sector_verdict, Mode, Verdict};

#[derive(Args, Debug, Clone, Serialize)]
pub struct AnalyzeArgs {
    /// Model document, or builtin:NAME
    pub model: String,
    /// Longest bracket considered
    #[arg(long, default_value_t = 6)]
    pub cap: usize,
    /// Box constant in |x_I| <= c|w|^m for x-dependent leading parts
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    /// Covector samples on the unit circle of a two-coordinate block
    #[arg(long, default_value_t = 16)]
    pub xi_samples: usize,
    /// Seed of the random spot checks of sector verdicts
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random points checked per holding verdict
    #[arg(long, default_value_t = 64)]
    pub spot_checks: usize,
    /// Grid of the discs behind the cone section
    #[arg(long, default_value_t = 1024)]
    pub grid: usize,
    /// Picard tolerance of those discs
    #[arg(long, default_value_t = 1e-11)]
    pub tol: f64,
    #[serde(skip)]
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Serialize)]
struct FiltrationSection {
    #[serde(flatten)]
    report: FiltrationReport,
    cutoff: u32,
    rank_tolerance: f64,
}

#[derive(Serialize)]
struct LeadingComponent {
    coordinate: usize,
    polynomial: String,
    pluriharmonic: bool,
    witness: Option<String>,
}

#[derive(Serialize)]
struct LeadingBlock {
    block: usize,
    weight: Value,
    components: Vec<LeadingComponent>,
    /// Dimension of the covectors `ξ` with `⟨ξ, P⟩` pluriharmonic.
    pluriharmonic_covectors: Option<usize>,
}

#[derive(Serialize)]
struct LineSection {
    w_direction: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    blocks: Vec<usize>,
    weights: Vec<Value>,
    hormander_numbers: Vec<(u32, usize)>,
    leading: Vec<LeadingBlock>,
}

#[derive(Serialize)]
struct SpotCheck {
    samples: usize,
    violations: usize,
    seed: u64,
}

#[derive(Serialize)]
struct SectorEntry {
    w_direction: usize,
    block: usize,
    xi: Vec<f64>,
    #[serde(flatten)]
    verdict: Verdict,
    spot_check: Option<SpotCheck>,
}

#[derive(Serialize)]
struct ScanEntry {
    w_direction: usize,
    block: usize,
    xi: Vec<f64>,
    profile: String,
    profile_reason: &'static str,
    psi: f64,
    /// Inward direction `−v'_o/|v'_o|`.
    extension_direction: Option<Vec<f64>>,
    #[serde(flatten)]
    scan: HopfScan,
}

#[derive(Serialize)]
struct ConeSection {
    scans: Vec<ScanEntry>,
    cone: Option<ConeDescription>,
    dimension: usize,
    tolerances: Tolerances,
}

#[derive(Serialize)]
struct Tolerances {
    picard: f64,
    manifold: f64,
    holomorphy: f64,
    fit: f64,
}

pub fn run(args: &AnalyzeArgs) -> Result<(), CliError> {
    let (model, echo) = load_model(&args.model)?;
    if args.cap < 2 {
        return Err(CliError::input("invalid_argument", "cap must be at least 2"));
    }
    let mut report = Report::new("analyze", Some(echo), args);

    let filt = filtration(&model, args.cap)?;
    if !filt.finite_type {
        report.notes.push(format!("bracket filtration does not span up to length {}", args.cap));
    }
    report.section(
        "filtration",
        &FiltrationSection {
            report: filt,
            cutoff: args.cap as u32 + 1,
            rank_tolerance: RANK_TOL,
        },
    );

    let lines: Vec<LineSection> = (0..model.n()).map(|k| line_section(&model, k, args.cap)).collect();
    report.section("lines", &lines);

    let mut entries = Vec::new();
    for k in 0..model.n() {
        for (b, w) in model.weights().weights().iter().enumerate() {
            if w.is_infinite() {
                continue;
            }
            for xi in xi_samples(&model, b, args.xi_samples) {
                let verdict = sector_verdict(&model, k, b, &xi, args.c)?;
                entries.push(SectorEntry {
                    w_direction: k + 1,
                    block: b + 1,
                    xi,
                    verdict,
                    spot_check: None,
                });
            }
        }
    }
    for (idx, e) in entries.iter_mut().enumerate() {
        if e.verdict.holds && args.spot_checks > 0 {
            let seed = args.seed.wrapping_add(idx as u64);
            e.spot_check = Some(spot_check(&model, e, args.spot_checks, seed));
        }
    }
    if model.weights().weights().iter().any(|w| w.is_infinite()) {
        report.notes.push("blocks of infinite weight have no sector test".into());
    }

    let cones = cone_section(&model, &entries, args)?;
    if cones.cone.is_none() {
        report.notes.push("no extension direction found".into());
    }
    report.section("sector", &entries);
    report.section("cones", &cones);
    let csv = sector_csv(&entries);
    emit(
        report,
        vec![Artifact {
            name: "sectors.csv".into(),
            content: csv,
        }],
        &args.output,
    )
}

fn line_section(model: &ManifoldModel, k: usize, cap: usize) -> LineSection {
    let mut out = LineSection {
        w_direction: k + 1,
        error: None,
        blocks: Vec::new(),
        weights: Vec::new(),
        hormander_numbers: Vec::new(),
        leading: Vec::new(),
    };
    let line = match model.restrict_to_line(k) {
        Ok(l) => l,
        Err(e) => {
            out.error = Some(e.to_string());
            return out;
        }
    };
    let lm = &line.model;
    let lay = lm.layout();
    out.blocks = lm.weights().sizes().to_vec();
    out.weights = lm.weights().weights().iter().map(|w| weight_value(*w)).collect();
    match filtration(lm, cap) {
        Ok(f) => out.hormander_numbers = f.hormander_numbers,
        Err(e) => out.error = Some(e.to_string()),
    }
    let z_names = |v: usize| {
        if v < lay.l {
            format!("z{}", v + 1)
        } else {
            "w".to_string()
        }
    };
    for (b, w) in lm.weights().weights().iter().enumerate() {
        let Weight::Finite(_) = w else { continue };
        let Ok(parts) = lm.lowest_weight_part(b) else { continue };
        let start = lm.weights().block_range(b).start;
        let components = parts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let test = pluriharmonic_test(p, &line).ok();
                LeadingComponent {
                    coordinate: start + i + 1,
                    polynomial: print_poly(p.as_poly(), lay),
                    pluriharmonic: test.as_ref().is_some_and(|t| t.is_pluriharmonic),
                    witness: test.and_then(|t| t.witness).map(|f| print_poly_with(&f, z_names)),
                }
            })
            .collect();
        out.leading.push(LeadingBlock {
            block: b + 1,
            weight: weight_value(*w),
            components,
            pluriharmonic_covectors: pluriharmonic_subspace_dim(&parts, &line).ok(),
        });
    }
    out
}

/// Unit covectors supported on one block: `±1` for a single coordinate,
/// `samples` angles for two, `±e_i` beyond that.
fn xi_samples(model: &ManifoldModel, block: usize, samples: usize) -> Vec<Vec<f64>> {
    let range = model.weights().block_range(block);
    let l = model.l();
    let unit = |entries: &[(usize, f64)]| {
        let mut v = vec![0.0; l];
        for &(i, x) in entries {
            v[i] = if x.abs() < 1e-15 { 0.0 } else { x };
        }
        v
    };
    match range.len() {
        1 => vec![unit(&[(range.start, 1.0)]), unit(&[(range.start, -1.0)])],
        2 => (0..samples.max(1))
            .map(|j| {
                let t = 2.0 * std::f64::consts::PI * j as f64 / samples.max(1) as f64;
                unit(&[(range.start, t.cos()), (range.start + 1, t.sin())])
            })
            .collect(),
        _ => range
            .flat_map(|i| [unit(&[(i, 1.0)]), unit(&[(i, -1.0)])])
            .collect(),
    }
}

/// Evaluates `⟨ξ, ·⟩` at random points of the best sector, independently of
/// the trigonometric restriction used by the verdict.
fn spot_check(model: &ManifoldModel, e: &SectorEntry, samples: usize, seed: u64) -> SpotCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = e.verdict.best_sector.expect("holding verdict has a sector");
    let k = e.w_direction - 1;
    let b = e.block - 1;
    let m = e.verdict.order as i32;
    let weights = model.weights();
    let leading = model.lowest_weight_part(b).unwrap_or_default();
    let mut violations = 0;
    for _ in 0..samples {
        let theta = s.center + s.width * (rng.gen::<f64>() - 0.5);
        let mut w = vec![Complex64::default(); model.n()];
        let value = match e.verdict.mode {
            Mode::Leading => {
                w[k] = Complex64::from_polar(1.0, theta);
                let x = vec![0.0; model.l()];
                let range = weights.block_range(b);
                let v: f64 = leading.iter().zip(&e.xi[range]).map(|(p, xi)| xi * p.eval(&x, &w)).sum();
                v + 1e-10
            }
            Mode::Full => {
                let rho = 0.5f64.powf(20.0 * rng.gen::<f64>());
                w[k] = Complex64::from_polar(rho, theta);
                let c = e.verdict.c.unwrap_or(0.0);
                let x: Vec<f64> = (0..model.l())
                    .map(|h| match weights.weight_of_x(h) {
                        Weight::Finite(mh) => c * rho.powi(mh as i32) * (2.0 * rng.gen::<f64>() - 1.0),
                        Weight::Infinite => 0.0,
                    })
                    .collect();
                let h = model.eval_h(&x, &w);
                h.iter().zip(&e.xi).map(|(a, b)| a * b).sum::<f64>() / rho.powi(m)
            }
        };
        if value.is_nan() || value < 0.0 || (e.verdict.mode == Mode::Full && value == 0.0) {
            violations += 1;
        }
    }
    SpotCheck {
        samples,
        violations,
        seed,
    }
}

fn cone_section(model: &ManifoldModel, entries: &[SectorEntry], args: &AnalyzeArgs) -> Result<ConeSection, CliError> {
    let holding: Vec<&SectorEntry> = entries.iter().filter(|e| e.verdict.holds).collect();
    let base = HopfOptions::for_order(2);
    let scans = holding
        .par_iter()
        .map(|e| {
            let m = e.verdict.order;
            let (profile, psi, reason) = auto_profile(&e.verdict, m);
            let mut opts = HopfOptions::for_order(m);
            opts.profile = profile.clone();
            opts.psi = psi;
            opts.solve.grid = args.grid;
            opts.solve.tol = args.tol;
            let mut dir = vec![Complex64::default(); model.n()];
            dir[e.w_direction - 1] = Complex64::new(1.0, 0.0);
            let scan = hopf_scan(model, &dir, &e.xi, e.block - 1, &opts)?;
            let norm = scan.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
            let extension_direction =
                (scan.sign_ok && norm > 1e-12).then(|| scan.direction.iter().map(|v| -v / norm).collect());
            Ok(ScanEntry {
                w_direction: e.w_direction,
                block: e.block,
                xi: e.xi.clone(),
                profile: profile.label(),
                profile_reason: reason,
                psi,
                extension_direction,
                scan,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let gens: Vec<Vec<f64>> = scans.iter().filter_map(|s| s.extension_direction.clone()).collect();
    let cone = if gens.is_empty() {
        None
    } else {
        Some(collect_directions(&gens, 0.0)?)
    };
    Ok(ConeSection {
        dimension: cone.as_ref().map_or(0, cone_dimension),
        scans,
        cone,
        tolerances: Tolerances {
            picard: args.tol,
            manifold: base.solve.tol_m,
            holomorphy: base.solve.tol_h,
            fit: base.fit_tol,
        },
    })
}

fn sector_csv(entries: &[SectorEntry]) -> String {
    let mut s = String::from("# sector verdicts: one row per arc\nw_direction,block,xi,mode,holds,center,width,required\n");
    for e in entries {
        let xi: Vec<String> = e.xi.iter().map(|v| format!("{v}")).collect();
        let mode = match e.verdict.mode {
            Mode::Leading => "leading",
            Mode::Full => "full",
        };
        for arc in &e.verdict.sectors {
            s.push_str(&format!(
                "{},{},{},{},{},{:.12},{:.12},{:.12}\n",
                e.w_direction,
                e.block,
                xi.join(" "),
                mode,
                e.verdict.holds,
                arc.center,
                arc.width,
                e.verdict.required_width
            ));
        }
    }
    s
}
