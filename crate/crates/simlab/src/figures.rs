//! Figure data: dual-gap curves, smoothed-objective curves and IF scans.
//! Each emitter is deterministic; the setups are fixed and recorded in the
//! comment lines of the output.

use std::fmt::Write as _;

use phidiv::robustness::{dual_gap_curve, if_scan, smoothed_objective_curve};
use phidiv::{BandwidthRule, DivergenceSpec, Family, FitOptions, KdeSpec, KernelKind, ModelSpec, Support, Truth};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::format::row;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FigureKind {
    DualGap,
    ObjectiveCurves,
    IfScan,
}

impl std::str::FromStr for FigureKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dual_gap" => Ok(FigureKind::DualGap),
            "objective_curves" => Ok(FigureKind::ObjectiveCurves),
            "if_scan" => Ok(FigureKind::IfScan),
            _ => Err(format!("unknown figure kind {s:?} (expected dual_gap, objective_curves or if_scan)")),
        }
    }
}

/// Figure data as CSV text: a `# columns:` line, `#` setup lines, a header
/// row, then data rows.
#[derive(Debug, Clone, PartialEq)]
pub struct FigureData {
    pub columns: Vec<&'static str>,
    pub notes: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FigureData {
    pub fn to_csv(&self) -> String {
        let header = self.columns.join(",");
        let mut s = format!("# columns: {header}\n");
        for n in &self.notes {
            let _ = writeln!(s, "# {n}");
        }
        let _ = writeln!(s, "{header}");
        for r in &self.rows {
            let _ = writeln!(s, "{}", row(r));
        }
        s
    }
}

/// Window of the kernel dual in the dual-gap figure.
pub const DUAL_GAP_WINDOW: f64 = 0.5;

fn linspace(a: f64, b: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| a + (b - a) * i as f64 / steps as f64).collect()
}

/// Classical dual sup, kernel dual and true Hellinger divergence along μ
/// for the unit-variance location model under 0.9 N(0,1) + 0.1 N(10, 2²),
/// at the population level.
pub fn dual_gap(opts: &FitOptions) -> Result<FigureData> {
    let model = ModelSpec::new(Family::GaussianLocation { sigma: 1.0 });
    let truth = Truth::GaussianMixture { weights: vec![0.9, 0.1], means: vec![0.0, 10.0], sds: vec![1.0, 2.0] };
    let mus = linspace(-2.0, 3.0, 100);
    let grid: Vec<Vec<f64>> = mus.iter().map(|&m| vec![m]).collect();
    let kde = KdeSpec::new(KernelKind::Gaussian, BandwidthRule::Fixed(DUAL_GAP_WINDOW));
    let rows = dual_gap_curve(&model, &truth, None, &DivergenceSpec::hellinger(), &grid, kde, opts)?;
    Ok(FigureData {
        columns: vec!["mu", "classical_dual_sup", "kernel_dual", "true_divergence"],
        notes: vec![
            "model N(mu, 1); truth 0.9 N(0, 1) + 0.1 N(10, 4); Hellinger (gamma = 0.5)".into(),
            format!("population level; gaussian kernel window {DUAL_GAP_WINDOW}"),
        ],
        rows: rows.iter().map(|r| vec![r.phi[0], r.classical_dual_sup, r.kernel_dual, r.true_divergence]).collect(),
    })
}

/// Power indices of the objective-curve figure. The closed form is only a
/// valid objective for γ ∈ (0, 1).
pub const OBJECTIVE_GAMMAS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];
pub const OBJECTIVE_WINDOWS: [f64; 4] = [0.1, 0.5, 1.0, 3.0];

/// Smoothed objective along μ ∈ [-3, 3] for every (γ, w) in the fixed grid.
pub fn objective_curves() -> Result<FigureData> {
    let mus = linspace(-3.0, 3.0, 120);
    let mut rows = Vec::new();
    for gamma in OBJECTIVE_GAMMAS {
        for w in OBJECTIVE_WINDOWS {
            for (m, v) in smoothed_objective_curve(gamma, w, &mus)? {
                rows.push(vec![gamma, w, m, v]);
            }
        }
    }
    Ok(FigureData {
        columns: vec!["gamma", "w", "mu", "objective"],
        notes: vec!["model N(mu, 1); truth N(0, 1); gaussian kernel of window w on both sides".into()],
        rows,
    })
}

/// IF of the kernel estimator in the location model at N(0, 1), window 0.5,
/// for γ = 0.5 and γ = -0.5 over x0 ∈ [-50, 50].
pub fn influence_scan(opts: &FitOptions) -> Result<FigureData> {
    let model = ModelSpec::new(Family::GaussianLocation { sigma: 1.0 });
    let truth = Truth::Model { model: model.clone(), theta: vec![0.0] };
    let grid = phidiv::robustness::default_if_grid(Support::RealLine);
    let w = 0.5;
    let mut rows = Vec::new();
    let mut notes = vec!["model N(mu, 1) at mu = 0; truth N(0, 1); gaussian kernel window 0.5".into()];
    for gamma in [0.5, -0.5] {
        let rep = if_scan(&model, &[0.0], &truth, gamma, w, &grid, &opts.quad)?;
        notes.push(format!("gamma {gamma}: sup |IF| = {}, invertible = {}", crate::format::g6(rep.sup_norm), rep.invertible));
        for (x0, v) in rep.grid.iter().zip(&rep.values) {
            rows.push(vec![gamma, w, *x0, v[0]]);
        }
    }
    Ok(FigureData { columns: vec!["gamma", "w", "x0", "influence"], notes, rows })
}

pub fn emit_figure_data(kind: FigureKind, opts: &FitOptions) -> Result<FigureData> {
    match kind {
        FigureKind::DualGap => dual_gap(opts),
        FigureKind::ObjectiveCurves => objective_curves(),
        FigureKind::IfScan => influence_scan(opts),
    }
}
