use std::f64::consts::FRAC_PI_2;

use clap::{Args, ValueEnum};
use crext_core::bishop::{
    default_alpha, default_etas, fgamma_report, hopf_scan, radial_derivative_at_one, solve_bishop,
    sweep_attached_family, BishopError, CircleGrid, CrComponent, FGammaRow, HopfOptions, HopfScan, Profile,
    SolveOptions, SweepOptions, SweepResult,
};
use crext_core::manifold::ManifoldModel;
use crext_core::polyalg::Weight;
use crext_core::Complex64;
use serde::Serialize;

use crate::error::CliError;
use crate::input::load_model;
use crate::report::{emit, Artifact, OutputArgs, Report};
use crate::verdict::{auto_profile, sector_verdict, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileChoice {
    /// Linear when the pairing is positive on the whole circle, else singular
    Auto,
    Linear,
    Singular,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct DiscArgs {
    /// Model document, or builtin:NAME
    pub model: String,
    /// Complex direction w_k of the discs (1-based)
    #[arg(long, default_value_t = 1)]
    pub direction: usize,
    /// Covector ξ, comma-separated; defaults to the first unit covector
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub xi: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value_t = ProfileChoice::Auto)]
    pub profile: ProfileChoice,
    /// Exponent of (1 − τ)^α; implies a singular profile
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Centre angle ψ of w = η e^{iψ} profile(τ)
    #[arg(long, allow_negative_numbers = true)]
    pub psi: Option<f64>,
    /// Disc sizes η, comma-separated
    #[arg(long, value_delimiter = ',')]
    pub eta_grid: Option<Vec<f64>>,
    /// Replace (1 − τ)^α by its Taylor partial sum with this many terms
    #[arg(long)]
    pub partial_sum: Option<usize>,
    /// Boundary grid size (power of two)
    #[arg(long, default_value_t = 2048)]
    pub grid: usize,
    /// Picard tolerance
    #[arg(long, default_value_t = 1e-11)]
    pub tol: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iter: usize,
    /// Relative residual allowed in the η-fit
    #[arg(long, default_value_t = 0.05)]
    pub fit_tol: f64,
    /// Box constant for the sector test when the leading part depends on x
    #[arg(long, default_value_t = 0.5)]
    pub c: f64,
    /// Sweep the attached family around the first disc
    #[arg(long)]
    pub sweep: bool,
    /// Report partial-sum convergence in the F^γ norm
    #[arg(long)]
    pub fgamma: bool,
    /// Hölder exponent for --fgamma; defaults to the midpoint of (1/m, α)
    #[arg(long)]
    pub gamma: Option<f64>,
    #[serde(skip)]
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Serialize)]
struct Resolved {
    w_direction: usize,
    xi: Vec<f64>,
    block: usize,
    order: Option<u32>,
    profile: String,
    profile_reason: &'static str,
    psi: f64,
    etas: Vec<f64>,
}

#[derive(Serialize)]
struct DiscSection {
    #[serde(flatten)]
    scan: HopfScan,
    /// `∂_r v(1)` leading coefficients; the inward direction is its negative.
    v_prime_o: Vec<f64>,
    extension_direction: Option<Vec<f64>>,
    tolerances: Tolerances,
}

#[derive(Serialize)]
struct FlatSection {
    etas: Vec<f64>,
    radial: Vec<Vec<f64>>,
    pairing: Vec<f64>,
    sign_ok: bool,
    transversal_gain: bool,
    max_manifold_residual: f64,
    tolerances: Tolerances,
}

#[derive(Serialize)]
struct Tolerances {
    picard: f64,
    manifold: f64,
    holomorphy: f64,
    fit: f64,
}

#[derive(Serialize)]
struct FGammaSection {
    alpha: f64,
    gamma: f64,
    grid: usize,
    radii: Vec<f64>,
    rows: Vec<FGammaRow>,
    errors_decreasing: bool,
}

#[derive(Serialize)]
struct SweepSection {
    eta: f64,
    delta: f64,
    epsilon: f64,
    rank_tolerance: f64,
    #[serde(flatten)]
    result: SweepResult,
}

const FGAMMA_TERMS: [usize; 5] = [8, 16, 32, 64, 128];
const FGAMMA_RADII: [f64; 3] = [0.5, 0.9, 0.99];

pub fn run(args: &DiscArgs) -> Result<(), CliError> {
    let (model, echo) = load_model(&args.model)?;
    let mut report = Report::new("disc", Some(echo), args);
    let k = args
        .direction
        .checked_sub(1)
        .filter(|k| *k < model.n())
        .ok_or_else(|| CliError::input("invalid_argument", format!("direction must lie in 1..={}", model.n())))?;
    let xi = match &args.xi {
        Some(xi) => xi.clone(),
        None => {
            let mut v = vec![0.0; model.l()];
            v[0] = 1.0;
            v
        }
    };
    if xi.len() != model.l() || xi.iter().any(|v| !v.is_finite()) {
        return Err(CliError::input("invalid_argument", format!("xi must have {} finite entries", model.l())));
    }
    let first = xi
        .iter()
        .position(|v| *v != 0.0)
        .ok_or_else(|| CliError::input("invalid_argument", "xi must be nonzero"))?;
    let block = model.weights().block_of(first);
    let solve = SolveOptions {
        grid: args.grid,
        tol: args.tol,
        max_iter: args.max_iter,
        refine: false,
        ..SolveOptions::default()
    };
    let tolerances = Tolerances {
        picard: args.tol,
        manifold: solve.tol_m,
        holomorphy: solve.tol_h,
        fit: args.fit_tol,
    };
    let mut dir = vec![Complex64::default(); model.n()];
    dir[k] = Complex64::new(1.0, 0.0);

    let Weight::Finite(m) = model.weights().weights()[block] else {
        return run_infinite(args, &model, report, k, xi, block, solve, tolerances);
    };

    let verdict = sector_verdict(&model, k, block, &xi, args.c)?;
    let (profile, psi, reason) = choose_profile(args, &verdict, m)?;
    let etas = args.eta_grid.clone().unwrap_or_else(|| default_etas(m));
    let opts = HopfOptions {
        profile: profile.clone(),
        psi,
        etas: etas.clone(),
        solve: solve.clone(),
        fit_tol: args.fit_tol,
    };
    let scan = hopf_scan(&model, &dir, &xi, block, &opts)?;
    report.section(
        "resolved",
        &Resolved {
            w_direction: k + 1,
            xi: xi.clone(),
            block: block + 1,
            order: Some(m),
            profile: profile.label(),
            profile_reason: reason,
            psi,
            etas: etas.clone(),
        },
    );
    report.section("sector", &verdict);
    if scan.pairing_vanishes {
        report.notes.push("⟨ξ, ∂_r v(1)⟩ vanishes at every η".into());
    } else if !scan.sign_ok {
        report.notes.push("⟨ξ, ∂_r v(1)⟩ is not negative: no extension in this direction".into());
    }
    if !scan.feedback_ok {
        report.notes.push("feedback constants vary by more than a factor 10 across η".into());
    }
    let norm = scan.direction.iter().map(|v| v * v).sum::<f64>().sqrt();
    let extension_direction = (scan.sign_ok && norm > 1e-12).then(|| scan.direction.iter().map(|v| -v / norm).collect());

    let mut artifacts = vec![Artifact {
        name: "hopf_scan.csv".into(),
        content: scan_csv(&scan),
    }];
    if args.output.csv_dir.is_some() {
        for (i, &eta) in etas.iter().enumerate() {
            let comp = CrComponent::new(profile.clone(), eta, psi, dir.clone())?;
            let d = solve_bishop(&model, &comp, &vec![0.0; model.l()], &solve, None)?;
            artifacts.push(Artifact {
                name: format!("disc_eta{i}.csv"),
                content: d.to_csv(),
            });
        }
    }

    if args.fgamma {
        let alpha = match profile {
            Profile::Singular { alpha } | Profile::PartialSum { alpha, .. } => alpha,
            _ => args.alpha.unwrap_or_else(|| default_alpha(m)),
        };
        let gamma = args.gamma.unwrap_or(0.5 * (1.0 / m as f64 + alpha));
        let grid = CircleGrid::new(args.grid)?;
        let rows = fgamma_report(alpha, gamma, &FGAMMA_TERMS, &grid, &FGAMMA_RADII)?;
        let errors_decreasing = rows.windows(2).all(|w| w[1].fgamma_error < w[0].fgamma_error);
        artifacts.push(Artifact {
            name: "fgamma.csv".into(),
            content: fgamma_csv(&rows),
        });
        report.section(
            "fgamma",
            &FGammaSection {
                alpha,
                gamma,
                grid: args.grid,
                radii: FGAMMA_RADII.to_vec(),
                rows,
                errors_decreasing,
            },
        );
    }

    if args.sweep {
        let comp = CrComponent::new(profile.clone(), etas[0], psi, dir.clone())?;
        let sopts = SweepOptions {
            solve: solve.clone(),
            ..SweepOptions::default()
        };
        let base = solve_bishop(&model, &comp, &vec![0.0; model.l()], &solve, None)?;
        match sweep_attached_family(&model, &base, &sopts) {
            Ok(result) => {
                if result.tangent_rank != result.expected_rank {
                    report.notes.push(format!(
                        "swept tangent rank {} differs from dim M + 1 = {}",
                        result.tangent_rank, result.expected_rank
                    ));
                }
                report.section(
                    "sweep",
                    &SweepSection {
                        eta: etas[0],
                        delta: sopts.delta,
                        epsilon: sopts.epsilon,
                        rank_tolerance: sopts.rank_tol,
                        result,
                    },
                );
            }
            Err(BishopError::NoTransversalGain) => report.notes.push("no transversal gain".into()),
            Err(e) => return Err(e.into()),
        }
    }

    report.section(
        "disc",
        &DiscSection {
            v_prime_o: scan.direction.clone(),
            extension_direction,
            scan,
            tolerances,
        },
    );
    emit(report, artifacts, &args.output)
}

fn choose_profile(args: &DiscArgs, verdict: &Verdict, m: u32) -> Result<(Profile, f64, &'static str), CliError> {
    let (auto, auto_psi, auto_reason) = auto_profile(verdict, m);
    let auto_alpha = match auto {
        Profile::Singular { alpha } => alpha,
        _ => default_alpha(m),
    };
    let (mut profile, reason) = match (args.profile, args.alpha) {
        (ProfileChoice::Linear, Some(_)) => {
            return Err(CliError::input("invalid_argument", "--alpha conflicts with --profile linear"))
        }
        (ProfileChoice::Linear, None) => (Profile::Linear, "requested"),
        (_, Some(alpha)) => (Profile::Singular { alpha }, "requested"),
        (ProfileChoice::Singular, None) => (Profile::Singular { alpha: auto_alpha }, "requested"),
        (ProfileChoice::Auto, None) => (auto, auto_reason),
    };
    if let Some(terms) = args.partial_sum {
        let alpha = match profile {
            Profile::Singular { alpha } => alpha,
            _ => args.alpha.unwrap_or(auto_alpha),
        };
        profile = Profile::PartialSum { alpha, terms };
    }
    let psi = args.psi.unwrap_or(if reason == "requested" { FRAC_PI_2 } else { auto_psi });
    Ok((profile, psi, reason))
}

#[allow(clippy::too_many_arguments)]
fn run_infinite(
    args: &DiscArgs,
    model: &ManifoldModel,
    mut report: Report,
    k: usize,
    xi: Vec<f64>,
    block: usize,
    solve: SolveOptions,
    tolerances: Tolerances,
) -> Result<(), CliError> {
    let etas = args.eta_grid.clone().unwrap_or_else(|| default_etas(2));
    let profile = match (args.profile, args.alpha) {
        (_, Some(alpha)) => Profile::Singular { alpha },
        (ProfileChoice::Singular, None) => Profile::Singular { alpha: default_alpha(2) },
        _ => Profile::Linear,
    };
    let psi = args.psi.unwrap_or(FRAC_PI_2);
    let mut dir = vec![Complex64::default(); model.n()];
    dir[k] = Complex64::new(1.0, 0.0);
    let mut radial = Vec::new();
    let mut worst: f64 = 0.0;
    let mut artifacts = Vec::new();
    for (i, &eta) in etas.iter().enumerate() {
        let comp = CrComponent::new(profile.clone(), eta, psi, dir.clone())?;
        let d = solve_bishop(model, &comp, &vec![0.0; model.l()], &solve, None)?;
        worst = worst.max(d.manifold_residual);
        radial.push(radial_derivative_at_one(&d));
        artifacts.push(Artifact {
            name: format!("disc_eta{i}.csv"),
            content: d.to_csv(),
        });
    }
    let pairing: Vec<f64> = radial.iter().map(|r| r.iter().zip(&xi).map(|(a, b)| a * b).sum()).collect();
    let gain = radial.iter().flatten().any(|v| v.abs() > 1e-12);
    report.notes.push(format!("block {} has infinite weight", block + 1));
    report.notes.push(if gain {
        "no leading order to fit; sign not decided".into()
    } else {
        "no transversal gain: ∂_r v(1) vanishes".into()
    });
    report.section(
        "resolved",
        &Resolved {
            w_direction: k + 1,
            xi,
            block: block + 1,
            order: None,
            profile: profile.label(),
            profile_reason: "infinite weight",
            psi,
            etas: etas.clone(),
        },
    );
    report.section(
        "disc",
        &FlatSection {
            etas,
            radial,
            pairing,
            sign_ok: false,
            transversal_gain: gain,
            max_manifold_residual: worst,
            tolerances,
        },
    );
    emit(report, artifacts, &args.output)
}

fn scan_csv(scan: &HopfScan) -> String {
    let l = scan.radial.first().map_or(0, Vec::len);
    let mut s = format!(
        "# Hopf scan, order {}, leading coefficient {:e}\neta,pairing",
        scan.order, scan.eta_derivative
    );
    for j in 1..=l {
        s.push_str(&format!(",dr_v{j}"));
    }
    s.push('\n');
    for (eta, (p, r)) in scan.etas.iter().zip(scan.pairing.iter().zip(&scan.radial)) {
        s.push_str(&format!("{eta:.17e},{p:.17e}"));
        for v in r {
            s.push_str(&format!(",{v:.17e}"));
        }
        s.push('\n');
    }
    s
}

fn fgamma_csv(rows: &[FGammaRow]) -> String {
    let mut s = String::from("# partial sums against (1 - tau)^alpha\nterms,sup_error,seminorm,fgamma_error,c5_bound_ok\n");
    for r in rows {
        s.push_str(&format!(
            "{},{:.17e},{:.17e},{:.17e},{}\n",
            r.terms, r.sup_error, r.seminorm, r.fgamma_error, r.c5_bound_ok
        ));
    }
    s
}
