//! Magnetic energy densities `w(b)` and their derivatives.
//!
//! Isotropic nonlinear laws are given by a scalar B-H curve `h̃(s)`,
//! `s = |b|`, interpolated by a monotone cubic Hermite spline. The energy
//! density is `w(b) = ∫₀^{|b|} h̃(s) ds`, integrated exactly per segment, the
//! field is `h = h̃(s)/s · b` and the Hessian has eigenvalue `h̃′(s)` along `b`
//! and `h̃(s)/s` across it.

use std::io::Read;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Permeability of vacuum in H/m.
pub const MU0: f64 = 4.0e-7 * std::f64::consts::PI;
/// Reluctivity of vacuum in m/H.
pub const NU0: f64 = 1.0 / MU0;

/// Safety margin applied to sampled curvature bounds.
pub const BOUNDS_MARGIN: f64 = 0.01;
/// Number of sample points used by [`estimate_bounds`].
pub const BOUNDS_SAMPLES: usize = 100_000;

/// Magnetic flux density `b` in T.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Flux2 {
    pub bx: f64,
    pub by: f64,
}

impl Flux2 {
    pub const ZERO: Flux2 = Flux2 { bx: 0.0, by: 0.0 };

    pub const fn new(bx: f64, by: f64) -> Self {
        Self { bx, by }
    }

    pub fn norm(self) -> f64 {
        self.bx.hypot(self.by)
    }

    pub fn dot(self, other: Flux2) -> f64 {
        self.bx * other.bx + self.by * other.by
    }

    pub fn scaled(self, k: f64) -> Flux2 {
        Flux2::new(k * self.bx, k * self.by)
    }

    pub fn add(self, other: Flux2) -> Flux2 {
        Flux2::new(self.bx + other.bx, self.by + other.by)
    }

    pub fn sub(self, other: Flux2) -> Flux2 {
        Flux2::new(self.bx - other.bx, self.by - other.by)
    }
}

/// Magnetic field intensity `h` in A/m.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Field2 {
    pub hx: f64,
    pub hy: f64,
}

impl Field2 {
    pub const fn new(hx: f64, hy: f64) -> Self {
        Self { hx, hy }
    }

    pub fn dot_flux(self, b: Flux2) -> f64 {
        self.hx * b.bx + self.hy * b.by
    }
}

/// Symmetric 2×2 tensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymTensor2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl SymTensor2 {
    pub fn scalar(v: f64) -> Self {
        Self { xx: v, xy: 0.0, yy: v }
    }

    pub fn apply(&self, b: Flux2) -> Field2 {
        Field2::new(self.xx * b.bx + self.xy * b.by, self.xy * b.bx + self.yy * b.by)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let r = (0.5 * (self.xx - self.yy)).hypot(self.xy);
        (mean - r, mean + r)
    }

    /// The tensor acting on gradients, `Rᵀ ν R` with `curl a = R ∇a`.
    pub fn rotated(&self) -> SymTensor2 {
        SymTensor2 {
            xx: self.yy,
            xy: -self.xy,
            yy: self.xx,
        }
    }
}

/// Strictly monotone piecewise-cubic Hermite interpolant of a B-H curve,
/// extended linearly beyond the last knot.
#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneSpline {
    knots: Vec<f64>,
    values: Vec<f64>,
    slopes: Vec<f64>,
    /// Cumulative energy `∫₀^{s_i} h̃` at every knot.
    energies: Vec<f64>,
}

/// Smallest admissible slope as a fraction of the adjacent secant slopes.
const SLOPE_FLOOR_FRACTION: f64 = 1e-3;

impl MonotoneSpline {
    /// Interpolates `(s_i, h_i)` pairs. `min_tail_slope` raises the slope at
    /// the last knot (and hence the extrapolation slope) if it is larger than
    /// the limited slope there.
    pub fn build(data: &[(f64, f64)], min_tail_slope: Option<f64>) -> Result<Self> {
        if data.len() < 2 {
            return Err(Error::Data("a B-H curve needs at least two points".into()));
        }
        if data.iter().any(|(s, h)| !s.is_finite() || !h.is_finite()) {
            return Err(Error::Data("B-H data contains non-finite values".into()));
        }
        if data[0] != (0.0, 0.0) {
            return Err(Error::Data(format!(
                "B-H curve must start at (0, 0), got {:?}",
                data[0]
            )));
        }
        for (i, w) in data.windows(2).enumerate() {
            if w[1].0 <= w[0].0 {
                return Err(Error::Data(format!("|b| not strictly increasing at row {}", i + 1)));
            }
            if w[1].1 <= w[0].1 {
                return Err(Error::Data(format!("|h| not strictly increasing at row {}", i + 1)));
            }
        }
        let knots: Vec<f64> = data.iter().map(|p| p.0).collect();
        let values: Vec<f64> = data.iter().map(|p| p.1).collect();
        let n = knots.len();
        let widths: Vec<f64> = knots.windows(2).map(|w| w[1] - w[0]).collect();
        let secants: Vec<f64> = (0..n - 1).map(|i| (values[i + 1] - values[i]) / widths[i]).collect();

        let mut slopes = vec![0.0; n];
        if n == 2 {
            slopes.fill(secants[0]);
        } else {
            slopes[0] = end_slope(widths[0], widths[1], secants[0], secants[1]);
            slopes[n - 1] = end_slope(widths[n - 2], widths[n - 3], secants[n - 2], secants[n - 3]);
            for i in 1..n - 1 {
                // Fritsch-Butland weighted harmonic mean
                let (h0, h1) = (widths[i - 1], widths[i]);
                let (d0, d1) = (secants[i - 1], secants[i]);
                let w1 = 2.0 * h1 + h0;
                let w2 = h1 + 2.0 * h0;
                slopes[i] = (w1 + w2) / (w1 / d0 + w2 / d1);
            }
        }
        for i in 0..n {
            let left = if i > 0 { secants[i - 1] } else { f64::INFINITY };
            let right = if i < n - 1 { secants[i] } else { f64::INFINITY };
            let floor = SLOPE_FLOOR_FRACTION * left.min(right);
            slopes[i] = slopes[i].max(floor);
        }
        if let Some(tail) = min_tail_slope {
            if !(tail.is_finite() && tail > 0.0) {
                return Err(Error::Data(format!("tail slope must be positive, got {tail}")));
            }
            if tail > slopes[n - 1] {
                if tail > 3.0 * secants[n - 2] {
                    return Err(Error::Data(format!(
                        "tail slope {tail} exceeds three times the last secant slope {}; \
                         the last segment cannot stay monotone",
                        secants[n - 2]
                    )));
                }
                slopes[n - 1] = tail;
            }
        }

        let mut spline = Self {
            knots,
            values,
            slopes,
            energies: vec![0.0; n],
        };
        for i in 0..n - 1 {
            let c = spline.coefficients(i);
            spline.energies[i + 1] = spline.energies[i] + integral(&c, 0.0, widths[i], widths[i]);
        }
        Ok(spline)
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }

    /// Extrapolation slope beyond the last knot.
    pub fn tail_slope(&self) -> f64 {
        *self.slopes.last().unwrap()
    }

    pub fn last_knot(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    /// Segment index for `s ≥ 0`; `knots.len() - 1` denotes the linear tail.
    fn segment(&self, s: f64) -> usize {
        let idx = self.knots.partition_point(|&k| k <= s);
        idx.saturating_sub(1).min(self.knots.len() - 1)
    }

    /// Polynomial coefficients in the local coordinate `t = s - s_i`.
    fn coefficients(&self, i: usize) -> [f64; 4] {
        let n = self.knots.len();
        if i == n - 1 {
            return [self.values[i], self.slopes[i], 0.0, 0.0];
        }
        let dx = self.knots[i + 1] - self.knots[i];
        let delta = (self.values[i + 1] - self.values[i]) / dx;
        let (d0, d1) = (self.slopes[i], self.slopes[i + 1]);
        [
            self.values[i],
            d0,
            (3.0 * delta - 2.0 * d0 - d1) / dx,
            (d0 + d1 - 2.0 * delta) / (dx * dx),
        ]
    }

    /// `h̃(s)`.
    pub fn value(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let c = self.coefficients(i);
        let t = s - self.knots[i];
        c[0] + t * (c[1] + t * (c[2] + t * c[3]))
    }

    /// `h̃′(s)`.
    pub fn derivative(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let c = self.coefficients(i);
        let t = s - self.knots[i];
        c[1] + t * (2.0 * c[2] + t * 3.0 * c[3])
    }

    /// `h̃(s)/s`, continuous at `s = 0` with value `h̃′(0)`.
    pub fn chord(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let c = self.coefficients(i);
        if i == 0 {
            // c[0] = 0 on the first segment, so h̃(s)/s is a quadratic
            c[1] + s * (c[2] + s * c[3])
        } else {
            self.value(s) / s
        }
    }

    /// `∫₀^s h̃`.
    pub fn energy(&self, s: f64) -> f64 {
        let i = self.segment(s);
        let c = self.coefficients(i);
        let t = s - self.knots[i];
        self.energies[i] + integral(&c, 0.0, t, t)
    }

    /// `∫_{s0}^{s1} h̃`, where `ds` is an accurately computed `s1 - s0`.
    pub fn energy_increment(&self, s0: f64, s1: f64, ds: f64) -> f64 {
        let i0 = self.segment(s0);
        let i1 = self.segment(s1);
        if i0 == i1 {
            let c = self.coefficients(i0);
            let k = self.knots[i0];
            return integral(&c, s0 - k, s1 - k, ds);
        }
        let (lo, hi, ilo, ihi, sign) = if s0 < s1 {
            (s0, s1, i0, i1, 1.0)
        } else {
            (s1, s0, i1, i0, -1.0)
        };
        let mut total = 0.0;
        let c = self.coefficients(ilo);
        let t0 = lo - self.knots[ilo];
        let t1 = self.knots[ilo + 1] - self.knots[ilo];
        total += integral(&c, t0, t1, t1 - t0);
        for i in ilo + 1..ihi {
            total += self.energies[i + 1] - self.energies[i];
        }
        let c = self.coefficients(ihi);
        let t = hi - self.knots[ihi];
        total += integral(&c, 0.0, t, t);
        sign * total
    }
}

/// Three-point end slope with shape-preserving limiting.
fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d.signum() != del0.signum() {
        0.0
    } else if del0.signum() != del1.signum() && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

/// `∫_{t0}^{t1} (c0 + c1 t + c2 t² + c3 t³) dt` written as `dt · mean` so
/// that short intervals do not cancel.
fn integral(c: &[f64; 4], t0: f64, t1: f64, dt: f64) -> f64 {
    let sum = t0 + t1;
    let sq = t0 * t0 + t0 * t1 + t1 * t1;
    let quad = sum * (t0 * t0 + t1 * t1);
    dt * (c[0] + 0.5 * c[1] * sum + c[2] * sq / 3.0 + 0.25 * c[3] * quad)
}

/// Energy density of one material region.
#[derive(Debug, Clone, PartialEq)]
pub enum MaterialLaw {
    /// `w(b) = ν/2 |b|²`.
    Linear { nu: f64 },
    /// `w(b) = ν/2 |b - b_r|²`.
    PermanentMagnet { nu: f64, remanence: Flux2 },
    /// `w(b) = ∫₀^{|b|} h̃(s) ds`.
    IsotropicSpline(Arc<MonotoneSpline>),
}

impl MaterialLaw {
    pub fn vacuum() -> Self {
        MaterialLaw::Linear { nu: NU0 }
    }

    pub fn spline(spline: MonotoneSpline) -> Self {
        MaterialLaw::IsotropicSpline(Arc::new(spline))
    }

    pub fn is_isotropic(&self) -> bool {
        !matches!(self, MaterialLaw::PermanentMagnet { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            MaterialLaw::Linear { .. } => "linear",
            MaterialLaw::PermanentMagnet { .. } => "permanent-magnet",
            MaterialLaw::IsotropicSpline(_) => "spline",
        }
    }

    pub fn energy_density(&self, b: Flux2) -> f64 {
        match self {
            MaterialLaw::Linear { nu } => 0.5 * nu * b.dot(b),
            MaterialLaw::PermanentMagnet { nu, remanence } => {
                let d = b.sub(*remanence);
                0.5 * nu * d.dot(d)
            }
            MaterialLaw::IsotropicSpline(spline) => spline.energy(b.norm()),
        }
    }

    /// `w(b + db) - w(b)`, evaluated without subtracting two large values.
    pub fn energy_increment(&self, b: Flux2, db: Flux2) -> f64 {
        match self {
            MaterialLaw::Linear { nu } => nu * db.dot(b.add(db.scaled(0.5))),
            MaterialLaw::PermanentMagnet { nu, remanence } => {
                nu * db.dot(b.sub(*remanence).add(db.scaled(0.5)))
            }
            MaterialLaw::IsotropicSpline(spline) => {
                let s0 = b.norm();
                let s1 = b.add(db).norm();
                let sum = s0 + s1;
                if sum == 0.0 {
                    return 0.0;
                }
                // |b+db|² - |b|² = <db, 2b + db>
                let ds = db.dot(b.scaled(2.0).add(db)) / sum;
                spline.energy_increment(s0, s1, ds)
            }
        }
    }

    pub fn field_intensity(&self, b: Flux2) -> Field2 {
        match self {
            MaterialLaw::Linear { nu } => Field2::new(nu * b.bx, nu * b.by),
            MaterialLaw::PermanentMagnet { nu, remanence } => {
                let d = b.sub(*remanence);
                Field2::new(nu * d.bx, nu * d.by)
            }
            MaterialLaw::IsotropicSpline(spline) => {
                let chord = spline.chord(b.norm());
                Field2::new(chord * b.bx, chord * b.by)
            }
        }
    }

    /// Hessian `∂²w/∂b²`.
    pub fn differential_reluctivity(&self, b: Flux2) -> SymTensor2 {
        match self {
            MaterialLaw::Linear { nu } | MaterialLaw::PermanentMagnet { nu, .. } => {
                SymTensor2::scalar(*nu)
            }
            MaterialLaw::IsotropicSpline(spline) => {
                let s = b.norm();
                if s == 0.0 {
                    return SymTensor2::scalar(spline.derivative(0.0));
                }
                let chord = spline.chord(s);
                let k = (spline.derivative(s) - chord) / (s * s);
                SymTensor2 {
                    xx: chord + k * b.bx * b.bx,
                    xy: k * b.bx * b.by,
                    yy: chord + k * b.by * b.by,
                }
            }
        }
    }

    /// Secant reluctivity `h̃(s)/s` of an isotropic law.
    pub fn chord_reluctivity(&self, s: f64) -> Result<f64> {
        match self {
            MaterialLaw::Linear { nu } => Ok(*nu),
            MaterialLaw::IsotropicSpline(spline) => Ok(spline.chord(s.abs())),
            MaterialLaw::PermanentMagnet { .. } => Err(Error::UnsupportedMethod {
                method: "Kacanov iteration",
                detail: "permanent-magnet law has no chord reluctivity".into(),
            }),
        }
    }
}

/// Two-sided curvature bounds `γ ≤ ∂²w ≤ L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvatureBounds {
    pub gamma: f64,
    pub lipschitz: f64,
}

impl CurvatureBounds {
    /// Componentwise hull of two bound pairs.
    pub fn hull(self, other: CurvatureBounds) -> CurvatureBounds {
        CurvatureBounds {
            gamma: self.gamma.min(other.gamma),
            lipschitz: self.lipschitz.max(other.lipschitz),
        }
    }
}

/// Bounds on the Hessian eigenvalues of `law` for `|b|` up to `s_max`.
///
/// Spline laws are sampled densely on `[0, max(s_max, last knot)]`; since the
/// curve is linear beyond its last knot the result holds for all `b`.
pub fn estimate_bounds(law: &MaterialLaw, s_max: f64) -> Result<CurvatureBounds> {
    if !(s_max.is_finite() && s_max > 0.0) {
        return Err(Error::Certification(format!("flux cap must be positive, got {s_max}")));
    }
    let bounds = match law {
        MaterialLaw::Linear { nu } | MaterialLaw::PermanentMagnet { nu, .. } => CurvatureBounds {
            gamma: *nu,
            lipschitz: *nu,
        },
        MaterialLaw::IsotropicSpline(spline) => {
            let top = s_max.max(spline.last_knot());
            let mut lo = spline.derivative(0.0).min(spline.tail_slope());
            let mut hi = spline.derivative(0.0).max(spline.tail_slope());
            let mut visit = |s: f64| {
                for v in [spline.derivative(s), spline.chord(s)] {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
            };
            for k in 1..=BOUNDS_SAMPLES {
                visit(top * k as f64 / BOUNDS_SAMPLES as f64);
            }
            for &s in spline.knots() {
                visit(s);
            }
            CurvatureBounds {
                gamma: lo * (1.0 - BOUNDS_MARGIN),
                lipschitz: hi * (1.0 + BOUNDS_MARGIN),
            }
        }
    };
    if !(bounds.gamma > 0.0 && bounds.gamma.is_finite() && bounds.lipschitz.is_finite()) {
        return Err(Error::Certification(format!(
            "degenerate {} law: curvature bounds ({}, {})",
            law.kind_name(),
            bounds.gamma,
            bounds.lipschitz
        )));
    }
    Ok(bounds)
}

/// Parameters of the bundled smooth saturation law
/// `h(s) = (ν₀ - Δν·exp(-s²/b₀²))·s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SaturationLaw {
    /// Reluctivity reached in deep saturation (m/H).
    pub nu_saturated: f64,
    /// Initial relative permeability; `ν(0) = ν_saturated / mu_r_initial`.
    pub mu_r_initial: f64,
    /// Knee flux density `b₀` (T).
    pub b_knee: f64,
    /// Largest sampled `|b|` (T).
    pub s_max: f64,
    pub knots: usize,
}

impl Default for SaturationLaw {
    fn default() -> Self {
        Self {
            nu_saturated: NU0,
            mu_r_initial: 500.0,
            b_knee: 1.2,
            s_max: 3.0,
            knots: 50,
        }
    }
}

impl SaturationLaw {
    pub fn field(&self, s: f64) -> f64 {
        let delta = self.nu_saturated * (1.0 - 1.0 / self.mu_r_initial);
        (self.nu_saturated - delta * (-(s * s) / (self.b_knee * self.b_knee)).exp()) * s
    }

    /// Knots spaced quadratically, dense near zero where the curve bends
    /// away from its initial slope.
    pub fn samples(&self) -> Vec<(f64, f64)> {
        let m = (self.knots - 1) as f64;
        (0..self.knots)
            .map(|i| {
                let r = i as f64 / m;
                let s = self.s_max * r * r;
                (s, self.field(s))
            })
            .collect()
    }
}

/// Bundled default B-H curve as shipped CSV text.
pub const BUNDLED_BH_CSV: &str = include_str!("../data/bh_default.csv");

/// Reads `|b|, |h|` pairs from two-column CSV. A header row is skipped if its
/// first field is not numeric; lines starting with `#` are comments.
pub fn read_bh_csv<R: Read>(reader: R) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut data = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("B-H csv: {e}")))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Parse(format!(
                "B-H csv row {}: expected 2 columns, found {}",
                row + 1,
                record.len()
            )));
        }
        let parsed = (record[0].parse::<f64>(), record[1].parse::<f64>());
        match parsed {
            (Ok(s), Ok(h)) => data.push((s, h)),
            _ if row == 0 && record[0].parse::<f64>().is_err() => continue,
            _ => {
                return Err(Error::Parse(format!(
                    "B-H csv row {}: non-numeric value in {:?}",
                    row + 1,
                    record.iter().collect::<Vec<_>>()
                )))
            }
        }
    }
    if data.is_empty() {
        return Err(Error::Parse("B-H csv contains no data rows".into()));
    }
    Ok(data)
}

pub fn parse_bh_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    read_bh_csv(text.as_bytes())
}

/// Spline law built from the bundled B-H curve.
pub fn bundled_law() -> MaterialLaw {
    let data = parse_bh_csv(BUNDLED_BH_CSV).expect("bundled curve parses");
    MaterialLaw::spline(MonotoneSpline::build(&data, None).expect("bundled curve is monotone"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn linear_spline() -> MonotoneSpline {
        MonotoneSpline::build(&[(0.0, 0.0), (1.0, 100.0), (2.0, 200.0)], None).unwrap()
    }

    #[test]
    fn linear_energy_and_field() {
        let law = MaterialLaw::vacuum();
        assert_relative_eq!(law.energy_density(Flux2::new(1.0, 0.0)), 0.5 * NU0);
        assert_relative_eq!(law.energy_density(Flux2::new(1.0, 0.0)), 3.9789e5, max_relative = 1e-4);
        assert_eq!(law.energy_density(Flux2::ZERO), 0.0);
        let nu = 7.0;
        let law = MaterialLaw::Linear { nu };
        assert_eq!(law.field_intensity(Flux2::new(2.0, -1.0)), Field2::new(14.0, -7.0));
        assert_eq!(law.differential_reluctivity(Flux2::new(3.0, 1.0)), SymTensor2::scalar(nu));
        assert_eq!(law.chord_reluctivity(2.5).unwrap(), nu);
    }

    #[test]
    fn magnet_zero_field_at_remanence() {
        let law = MaterialLaw::PermanentMagnet {
            nu: 1000.0,
            remanence: Flux2::new(1.0, 0.0),
        };
        assert_eq!(law.field_intensity(Flux2::new(1.0, 0.0)), Field2::new(0.0, 0.0));
        assert!(!law.is_isotropic());
        assert!(matches!(law.chord_reluctivity(1.0), Err(Error::UnsupportedMethod { .. })));
    }

    #[test]
    fn linear_data_is_reproduced() {
        let spline = linear_spline();
        for k in 0..=40 {
            let s = k as f64 * 0.05;
            assert_relative_eq!(spline.value(s), 100.0 * s, epsilon = 1e-10);
            assert_relative_eq!(spline.derivative(s), 100.0, epsilon = 1e-10);
        }
        // quadrature oracle: ∫₀^1.5 100 s ds = 112.5
        let law = MaterialLaw::spline(spline);
        assert_relative_eq!(law.energy_density(Flux2::new(1.5, 0.0)), 112.5, epsilon = 1e-12);
    }

    #[test]
    fn chord_values() {
        let spline = MonotoneSpline::build(&[(0.0, 0.0), (1.0, 100.0), (2.0, 150.0)], None).unwrap();
        let law = MaterialLaw::spline(spline.clone());
        assert_relative_eq!(law.chord_reluctivity(2.0).unwrap(), 75.0, epsilon = 1e-12);
        assert_eq!(law.chord_reluctivity(0.0).unwrap(), spline.derivative(0.0));
    }

    #[test]
    fn interpolates_knots() {
        let data = parse_bh_csv(BUNDLED_BH_CSV).unwrap();
        let spline = MonotoneSpline::build(&data, None).unwrap();
        for &(s, h) in &data {
            assert_relative_eq!(spline.value(s), h, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn bundled_curve_matches_generator() {
        let data = parse_bh_csv(BUNDLED_BH_CSV).unwrap();
        let expected = SaturationLaw::default().samples();
        assert_eq!(data.len(), expected.len());
        for ((s, h), (se, he)) in data.iter().zip(&expected) {
            assert_relative_eq!(s, se, max_relative = 1e-12);
            assert_relative_eq!(h, he, max_relative = 1e-12);
        }
    }

    #[test]
    fn bundled_curve_strictly_monotone() {
        let law = bundled_law();
        let MaterialLaw::IsotropicSpline(spline) = &law else { unreachable!() };
        for k in 0..10_000 {
            let s = 3.5 * k as f64 / 10_000.0;
            assert!(spline.derivative(s) > 0.0, "h' <= 0 at {s}");
        }
    }

    #[test]
    fn rejects_bad_data() {
        assert!(MonotoneSpline::build(&[(0.0, 0.0)], None).is_err());
        assert!(MonotoneSpline::build(&[(0.1, 0.0), (1.0, 1.0)], None).is_err());
        assert!(MonotoneSpline::build(&[(0.0, 0.0), (1.0, 2.0), (2.0, 1.0)], None).is_err());
        assert!(MonotoneSpline::build(&[(0.0, 0.0), (1.0, 2.0), (1.0, 3.0)], None).is_err());
        assert!(MonotoneSpline::build(&[(0.0, 0.0), (1.0, -2.0)], None).is_err());
    }

    #[test]
    fn tail_slope_raised() {
        let spline =
            MonotoneSpline::build(&[(0.0, 0.0), (1.0, 100.0), (2.0, 150.0)], Some(120.0)).unwrap();
        assert_eq!(spline.tail_slope(), 120.0);
        assert_relative_eq!(spline.value(3.0), 270.0, epsilon = 1e-12);
        assert!(MonotoneSpline::build(&[(0.0, 0.0), (1.0, 100.0), (2.0, 150.0)], Some(1e4)).is_err());
    }

    #[test]
    fn bounds_of_simple_laws() {
        let b = estimate_bounds(&MaterialLaw::Linear { nu: 5.0 }, 3.0).unwrap();
        assert_eq!((b.gamma, b.lipschitz), (5.0, 5.0));
        let b = estimate_bounds(&MaterialLaw::spline(linear_spline()), 3.0).unwrap();
        assert_relative_eq!(b.gamma, 99.0, epsilon = 1e-9);
        assert_relative_eq!(b.lipschitz, 101.0, epsilon = 1e-9);
        assert!(estimate_bounds(&MaterialLaw::Linear { nu: 0.0 }, 3.0).is_err());
    }

    #[test]
    fn axis_aligned_hessian() {
        let law = bundled_law();
        let MaterialLaw::IsotropicSpline(spline) = &law else { unreachable!() };
        for s in [0.3, 1.1, 1.9, 2.7, 4.0] {
            let t = law.differential_reluctivity(Flux2::new(s, 0.0));
            assert_relative_eq!(t.xx, spline.derivative(s), max_relative = 1e-12);
            assert_relative_eq!(t.yy, spline.chord(s), max_relative = 1e-12);
            assert_eq!(t.xy, 0.0);
        }
        assert_eq!(
            law.differential_reluctivity(Flux2::ZERO),
            SymTensor2::scalar(spline.derivative(0.0))
        );
    }

    #[test]
    fn increment_matches_difference() {
        let law = bundled_law();
        let b = Flux2::new(0.9, -1.2);
        for db in [Flux2::new(0.3, 0.4), Flux2::new(-1.5, 2.0), Flux2::new(1e-3, 0.0)] {
            let direct = law.energy_density(b.add(db)) - law.energy_density(b);
            assert_relative_eq!(law.energy_increment(b, db), direct, max_relative = 1e-9);
        }
        // tiny increments keep full relative accuracy against the first-order term
        let db = Flux2::new(1e-10, 2e-10);
        let first_order = law.field_intensity(b).dot_flux(db);
        assert_relative_eq!(law.energy_increment(b, db), first_order, max_relative = 1e-8);
    }

    #[test]
    fn csv_header_and_comments() {
        let data = parse_bh_csv("# curve\nB,H\n0,0\n1, 10\n").unwrap();
        assert_eq!(data, vec![(0.0, 0.0), (1.0, 10.0)]);
        assert!(parse_bh_csv("0,0\nx,1\n").is_err());
        assert!(parse_bh_csv("0,0,1\n").is_err());
        assert!(parse_bh_csv("").is_err());
    }
}
