//! Guaranteed convergence constants and checks of observed runs against them.
//!
//! With curvature bounds `γ ≤ ∂²w ≤ L` and metric bounds `α ≤ ν ≤ β`, Armijo
//! backtracking accepts `τ ≥ τ* = ρ min{2(1-σ)α/L, 1}` and the energy gap
//! contracts per step by at least
//!
//! `q = 1 - τ* σ 2γ²/(Lβ)`,
//!
//! so that `‖curl(aⁿ - a*)‖² ≤ (L/γ) qⁿ ‖curl(a⁰ - a*)‖²`. The constants are
//! worst-case guarantees; observed rates are usually far better.

use std::fmt::Write as _;

use crate::assembly::MetricChoice;
use crate::descent::IterationRecord;
use crate::error::{Error, Result};
use crate::material::{estimate_bounds, CurvatureBounds, MaterialLaw};

/// Relative slack for the geometric envelope and per-step ratios.
pub const DECAY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceCertificate {
    pub gamma: f64,
    pub lipschitz: f64,
    pub alpha: f64,
    pub beta: f64,
    pub rho: f64,
    pub sigma: f64,
    pub tau_star: f64,
    pub q: f64,
    /// `L/γ`.
    pub c: f64,
    pub c_omega: Option<f64>,
}

/// `(τ*, q, C)` from the bounds and Armijo parameters.
pub fn contraction_factor(
    gamma: f64,
    lipschitz: f64,
    alpha: f64,
    beta: f64,
    rho: f64,
    sigma: f64,
) -> Result<(f64, f64, f64)> {
    let mut bad = Vec::new();
    let finite = [gamma, lipschitz, alpha, beta, rho, sigma].iter().all(|v| v.is_finite());
    if !finite {
        bad.push("non-finite constant".to_string());
    }
    if !(gamma > 0.0 && gamma <= lipschitz) {
        bad.push(format!("need 0 < gamma <= L, got gamma = {gamma}, L = {lipschitz}"));
    }
    if !(alpha > 0.0 && alpha <= beta) {
        bad.push(format!("need 0 < alpha <= beta, got alpha = {alpha}, beta = {beta}"));
    }
    if !(rho > 0.0 && rho < 1.0) {
        bad.push(format!("need 0 < rho < 1, got {rho}"));
    }
    if !(sigma > 0.0 && sigma < 0.5) {
        bad.push(format!("need 0 < sigma < 1/2, got {sigma}"));
    }
    if !bad.is_empty() {
        return Err(Error::Certification(bad.join("; ")));
    }
    let tau_star = rho * (2.0 * (1.0 - sigma) * alpha / lipschitz).min(1.0);
    let q = 1.0 - tau_star * sigma * 2.0 * gamma * gamma / (lipschitz * beta);
    if !(q < 1.0) {
        return Err(Error::Certification(format!(
            "contraction factor rounds to 1 (gamma = {gamma:e}, L = {lipschitz:e})"
        )));
    }
    Ok((tau_star, q, lipschitz / gamma))
}

impl ConvergenceCertificate {
    pub fn new(bounds: CurvatureBounds, alpha: f64, beta: f64, rho: f64, sigma: f64) -> Result<Self> {
        let (tau_star, q, c) = contraction_factor(bounds.gamma, bounds.lipschitz, alpha, beta, rho, sigma)?;
        Ok(Self {
            gamma: bounds.gamma,
            lipschitz: bounds.lipschitz,
            alpha,
            beta,
            rho,
            sigma,
            tau_star,
            q,
            c,
            c_omega: None,
        })
    }

    /// Certificate for `metric` over the given material laws.
    pub fn for_problem(laws: &[MaterialLaw], metric: MetricChoice, s_max: f64, rho: f64, sigma: f64) -> Result<Self> {
        let bounds = material_bounds(laws, s_max)?;
        let (alpha, beta) = derive_metric_bounds(metric, bounds);
        Self::new(bounds, alpha, beta, rho, sigma)
    }

    /// Key-value text block, one `key = value` pair per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "gamma = {:.17e}", self.gamma);
        let _ = writeln!(s, "L = {:.17e}", self.lipschitz);
        let _ = writeln!(s, "alpha = {:.17e}", self.alpha);
        let _ = writeln!(s, "beta = {:.17e}", self.beta);
        let _ = writeln!(s, "rho = {}", self.rho);
        let _ = writeln!(s, "sigma = {}", self.sigma);
        let _ = writeln!(s, "tau_star = {:.17e}", self.tau_star);
        let _ = writeln!(s, "q = {:.17e}", self.q);
        let _ = writeln!(s, "C = {:.17e}", self.c);
        if let Some(c_omega) = self.c_omega {
            let _ = writeln!(s, "C_Omega = {c_omega:.17e}");
        }
        s
    }

    /// Parses a block written by [`to_text`](Self::to_text). Lines may carry
    /// a leading `#`; unknown keys are ignored and the derived constants are
    /// recomputed from the bounds.
    pub fn parse(text: &str) -> Result<Self> {
        let get = |key: &str| -> Result<Option<f64>> {
            for line in text.lines() {
                let line = line.trim().trim_start_matches('#').trim();
                let Some((k, v)) = line.split_once('=') else { continue };
                if k.trim() == key {
                    return v
                        .trim()
                        .parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::Parse(format!("certificate key {key}: {e}")));
                }
            }
            Ok(None)
        };
        let mut missing = Vec::new();
        let mut need = |key: &str| -> Result<f64> {
            Ok(get(key)?.unwrap_or_else(|| {
                missing.push(key.to_string());
                f64::NAN
            }))
        };
        let gamma = need("gamma")?;
        let lipschitz = need("L")?;
        let alpha = need("alpha")?;
        let beta = need("beta")?;
        let rho = need("rho")?;
        let sigma = need("sigma")?;
        if !missing.is_empty() {
            return Err(Error::Parse(format!("certificate lacks keys: {}", missing.join(", "))));
        }
        let c_omega = get("C_Omega")?;
        let mut cert = Self::new(CurvatureBounds { gamma, lipschitz }, alpha, beta, rho, sigma)?;
        cert.c_omega = c_omega;
        Ok(cert)
    }
}

/// Hull of the curvature bounds of all laws.
pub fn material_bounds(laws: &[MaterialLaw], s_max: f64) -> Result<CurvatureBounds> {
    let mut iter = laws.iter();
    let first = iter
        .next()
        .ok_or_else(|| Error::Certification("no material laws".into()))?;
    iter.try_fold(estimate_bounds(first, s_max)?, |acc, law| {
        Ok(acc.hull(estimate_bounds(law, s_max)?))
    })
}

/// Uniform eigenvalue bounds `(α, β)` of the metric family.
///
/// The Newton metric is the Hessian and the chord reluctivity of a convex
/// isotropic law lies between the extreme slopes, so both inherit `(γ, L)`.
pub fn derive_metric_bounds(metric: MetricChoice, bounds: CurvatureBounds) -> (f64, f64) {
    match metric {
        MetricChoice::FixedPoint { nu_bar } => (nu_bar, nu_bar),
        MetricChoice::Kacanov | MetricChoice::Newton => (bounds.gamma, bounds.lipschitz),
    }
}

/// `Φ(a*)` estimated as the final energy minus the magnitude of the last
/// energy decrease.
pub fn estimate_minimum(trace: &[IterationRecord]) -> f64 {
    let last_change = trace
        .iter()
        .rev()
        .find(|r| r.is_step())
        .map_or(0.0, |r| r.energy_change.abs());
    trace.last().map_or(f64::NAN, |r| r.energy) - last_change
}

/// Energy gaps `Φ(aⁿ) - Φ(a*)` for every trace row, accumulated from the
/// recorded per-step energy changes.
pub fn energy_gaps(trace: &[IterationRecord], minimum: f64) -> Vec<f64> {
    let Some(last) = trace.last() else { return Vec::new() };
    let mut gaps = vec![0.0; trace.len()];
    let mut acc = last.energy - minimum;
    gaps[trace.len() - 1] = acc;
    for i in (0..trace.len() - 1).rev() {
        acc -= trace[i].energy_change;
        gaps[i] = acc;
    }
    gaps
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertReport {
    pub gaps: Vec<f64>,
    /// `gap[n+1] / gap[n]`; `None` where both vanish.
    pub ratios: Vec<Option<f64>>,
    pub envelope_violations: Vec<usize>,
    pub ratio_violations: Vec<usize>,
    pub step_size_violations: Vec<usize>,
    pub q: f64,
    pub tau_star: f64,
}

impl CertReport {
    pub fn ok(&self) -> bool {
        self.envelope_violations.is_empty() && self.ratio_violations.is_empty() && self.step_size_violations.is_empty()
    }

    pub fn max_ratio(&self) -> f64 {
        self.ratios.iter().flatten().copied().fold(0.0, f64::max)
    }

    pub fn to_text(&self) -> String {
        let list = |v: &[usize]| {
            if v.is_empty() {
                "none".to_string()
            } else {
                v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ")
            }
        };
        let mut s = String::new();
        let _ = writeln!(s, "certified = {}", self.ok());
        let _ = writeln!(s, "steps = {}", self.gaps.len().saturating_sub(1));
        let _ = writeln!(s, "max_observed_ratio = {:.6e}", self.max_ratio());
        let _ = writeln!(s, "envelope_violations = {}", list(&self.envelope_violations));
        let _ = writeln!(s, "ratio_violations = {}", list(&self.ratio_violations));
        let _ = writeln!(s, "step_size_violations = {}", list(&self.step_size_violations));
        s
    }
}

/// Checks a run against the geometric envelope
/// `gap[n] ≤ qⁿ gap[0]`, the per-step ratio `gap[n+1] ≤ q gap[n]`, and the
/// step-size floor `τⁿ ≥ τ*`.
pub fn check_decay(trace: &[IterationRecord], minimum: f64, cert: &ConvergenceCertificate) -> CertReport {
    let gaps = energy_gaps(trace, minimum);
    let slack = 1.0 + DECAY_SLACK;
    let mut report = CertReport {
        ratios: Vec::new(),
        envelope_violations: Vec::new(),
        ratio_violations: Vec::new(),
        step_size_violations: Vec::new(),
        q: cert.q,
        tau_star: cert.tau_star,
        gaps: Vec::new(),
    };
    if let Some(&g0) = gaps.first() {
        let mut envelope = g0;
        for (n, &g) in gaps.iter().enumerate() {
            if g > envelope * slack + f64::MIN_POSITIVE {
                report.envelope_violations.push(n);
            }
            envelope *= cert.q;
        }
    }
    for (n, w) in gaps.windows(2).enumerate() {
        let ratio = if w[0] == 0.0 && w[1] == 0.0 { None } else { Some(w[1] / w[0]) };
        if let Some(r) = ratio {
            if !(r <= cert.q * slack) {
                report.ratio_violations.push(n);
            }
        }
        report.ratios.push(ratio);
    }
    for r in trace.iter().filter(|r| r.is_step()) {
        if r.tau < cert.tau_star {
            report.step_size_violations.push(r.n);
        }
    }
    report.gaps = gaps;
    report
}

/// Indices where `γ/2 e² ≤ gap ≤ L/2 e²` fails, `e²` the squared curl
/// seminorm of the error.
pub fn check_norm_energy(gaps: &[f64], error_sq: &[f64], cert: &ConvergenceCertificate, rel_slack: f64) -> Vec<usize> {
    gaps.iter()
        .zip(error_sq)
        .enumerate()
        .filter(|(_, (&g, &e))| {
            let lo = 0.5 * cert.gamma * e;
            let hi = 0.5 * cert.lipschitz * e;
            g < lo * (1.0 - rel_slack) || g > hi * (1.0 + rel_slack)
        })
        .map(|(n, _)| n)
        .collect()
}
