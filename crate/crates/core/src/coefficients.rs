//! Coefficient fields of the operator `L u = a^{ij} ∂_i∂_j u + b^i ∂_i u + c u`,
//! the dissipation coefficient `b̄`, the noise coefficient `ξ`, and their
//! sampled validation against the structural bounds with constant `K`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type ScalarField = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;
pub type VectorField = Arc<dyn Fn(f64, &[f64]) -> [f64; 2] + Send + Sync>;
pub type MatrixField = Arc<dyn Fn(f64, &[f64]) -> [[f64; 2]; 2] + Send + Sync>;

/// Deterministic coefficient fields. Only the leading `d` components of
/// `a` and `b` are used.
#[derive(Clone)]
pub struct CoefficientSet {
    pub name: String,
    pub dim: usize,
    pub a: MatrixField,
    pub b: VectorField,
    pub c: ScalarField,
    pub b_bar: ScalarField,
    pub xi: ScalarField,
    pub k: f64,
    /// Lets `b̄` fall below `1/K`; such runs lie outside the theory.
    pub allow_nondissipative: bool,
    pub time_dependent: bool,
}

impl fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("k", &self.k)
            .field("allow_nondissipative", &self.allow_nondissipative)
            .finish()
    }
}

pub const OUTSIDE_THEOREM: &str =
    "OUTSIDE-THEOREM: dissipation lower bound disabled; results are not covered by the well-posedness theory";

impl CoefficientSet {
    /// `a = I`, `b = 0`, `c = 0`, `b̄ = 1`, `ξ = 1`, `K = 1`.
    pub fn identity(dim: usize) -> Self {
        Self {
            name: "identity".into(),
            dim,
            a: Arc::new(|_, _| [[1.0, 0.0], [0.0, 1.0]]),
            b: Arc::new(|_, _| [0.0, 0.0]),
            c: Arc::new(|_, _| 0.0),
            b_bar: Arc::new(|_, _| 1.0),
            xi: Arc::new(|_, _| 1.0),
            k: 1.0,
            allow_nondissipative: false,
            time_dependent: false,
        }
    }

    /// Smooth `period`-periodic perturbations of the identity preset that
    /// stay within `K = 2`.
    pub fn variable_demo(dim: usize, period: f64) -> Self {
        let w = 2.0 * PI / period;
        let phase = move |x: &[f64]| x.iter().sum::<f64>() * w;
        Self {
            name: "variable-demo".into(),
            dim,
            a: Arc::new(move |_, x| {
                let s0 = (w * x[0]).sin();
                if x.len() == 1 {
                    [[1.0 + 0.4 * s0, 0.0], [0.0, 1.0]]
                } else {
                    let off = 0.1 * (w * (x[0] + x[1])).sin();
                    [[1.0 + 0.4 * s0, off], [off, 1.0 + 0.4 * (w * x[1]).cos()]]
                }
            }),
            b: Arc::new(move |_, x| {
                let v = 0.3 * phase(x).cos();
                [v, if x.len() > 1 { -v } else { 0.0 }]
            }),
            c: Arc::new(move |_, x| 0.2 * phase(x).sin()),
            b_bar: Arc::new(move |_, x| 1.0 + 0.5 * phase(x).cos()),
            xi: Arc::new(move |_, x| 1.0 + 0.5 * phase(x).sin()),
            k: 2.0,
            allow_nondissipative: false,
            time_dependent: false,
        }
    }

    /// Resolves a preset name used in run configurations.
    pub fn preset(name: &str, dim: usize, period: f64) -> Result<Self> {
        match name {
            "identity" => Ok(Self::identity(dim)),
            "variable-demo" => Ok(Self::variable_demo(dim, period)),
            other => Err(Error::InvalidParameter(format!("unknown coefficient preset `{other}`"))),
        }
    }

    /// Sets `b̄ ≡ 0` and flags the set as outside the theory.
    pub fn without_dissipation(mut self) -> Self {
        self.b_bar = Arc::new(|_, _| 0.0);
        self.allow_nondissipative = true;
        self.name = format!("{}+no-dissipation", self.name);
        self
    }

    pub fn with_noise_coefficient(mut self, xi: ScalarField) -> Self {
        self.xi = xi;
        self
    }

    pub fn with_dissipation(mut self, b_bar: ScalarField) -> Self {
        self.b_bar = b_bar;
        self
    }

    pub fn outside_theorem(&self) -> bool {
        self.allow_nondissipative
    }
}

/// Identifiers of the structural inequalities checked by [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Inequality {
    /// `η·aη ≥ |η|²/K`.
    EllipticityLower,
    /// `η·aη ≤ K|η|²`.
    EllipticityUpper,
    /// `b̄ ≥ 1/K`.
    Dissipativity,
    /// `|a|_{C²} ≤ K`.
    SmoothnessA,
    /// `|b|_{C²} ≤ K`.
    SmoothnessB,
    /// `|c|_{C²} ≤ K`.
    SmoothnessC,
    /// `|b̄|_{C²} ≤ K`.
    SmoothnessBBar,
    /// `sup |ξ| ≤ K`.
    NoiseBound,
}

impl fmt::Display for Inequality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Inequality::EllipticityLower => "ellipticity lower bound eta.a.eta >= |eta|^2/K",
            Inequality::EllipticityUpper => "ellipticity upper bound eta.a.eta <= K|eta|^2",
            Inequality::Dissipativity => "dissipation lower bound b_bar >= 1/K",
            Inequality::SmoothnessA => "C2 bound on a",
            Inequality::SmoothnessB => "C2 bound on b",
            Inequality::SmoothnessC => "C2 bound on c",
            Inequality::SmoothnessBBar => "C2 bound on b_bar",
            Inequality::NoiseBound => "sup bound on xi",
        };
        f.write_str(s)
    }
}

/// Space-time points at which coefficients are checked.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Vec<(f64, Vec<f64>)>,
}

impl SampleSet {
    /// Tensor lattice on `[0, period]^d × [0, horizon]`.
    pub fn lattice(dim: usize, period: f64, horizon: f64, per_axis: usize, times: usize) -> Self {
        let per_axis = per_axis.max(1);
        let times = times.max(1);
        let mut points = Vec::new();
        for it in 0..times {
            let t = if times == 1 { 0.0 } else { horizon * it as f64 / (times - 1) as f64 };
            let coord = |i: usize| period * i as f64 / per_axis as f64;
            if dim == 1 {
                for i in 0..per_axis {
                    points.push((t, vec![coord(i)]));
                }
            } else {
                for i in 0..per_axis {
                    for j in 0..per_axis {
                        points.push((t, vec![coord(i), coord(j)]));
                    }
                }
            }
        }
        Self { points }
    }

    /// Adds `count` uniformly random points drawn from a fixed seed.
    pub fn with_random(mut self, dim: usize, period: f64, horizon: f64, count: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..count {
            let t = horizon * rng.random::<f64>();
            let x = (0..dim).map(|_| period * rng.random::<f64>()).collect();
            self.points.push((t, x));
        }
        self
    }

    /// Default validation set: a 64-per-axis lattice at 5 times plus 10³
    /// random points.
    pub fn standard(dim: usize, period: f64, horizon: f64) -> Self {
        let per_axis = if dim == 1 { 64 } else { 16 };
        Self::lattice(dim, period, horizon, per_axis, 5).with_random(dim, period, horizon, 1000, 0x5eed)
    }
}

/// Worst case found for one inequality.
#[derive(Debug, Clone, PartialEq)]
pub struct InequalityCheck {
    pub inequality: Inequality,
    /// Smallest slack over the samples; negative means violated.
    pub margin: f64,
    pub worst_time: f64,
    pub worst_point: Vec<f64>,
    pub skipped: bool,
}

impl InequalityCheck {
    pub fn holds(&self) -> bool {
        self.skipped || self.margin >= -MARGIN_TOLERANCE
    }
}

/// Slack allowed for round-off in margins.
pub const MARGIN_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<InequalityCheck>,
    /// Largest change made by symmetrising `a`.
    pub max_asymmetry: f64,
    /// Whether symmetrisation changed some entry by more than 1e-12.
    pub symmetrized: bool,
    pub outside_theorem: bool,
    pub passed: bool,
}

impl ValidationReport {
    pub fn first_violation(&self) -> Option<&InequalityCheck> {
        self.checks.iter().find(|c| !c.holds())
    }

    pub fn banner(&self) -> Option<&'static str> {
        self.outside_theorem.then_some(OUTSIDE_THEOREM)
    }
}

const FD_STEP: f64 = 1e-3;

fn symmetric_part(a: [[f64; 2]; 2], dim: usize) -> ([[f64; 2]; 2], f64) {
    if dim == 1 {
        return ([[a[0][0], 0.0], [0.0, 0.0]], 0.0);
    }
    let off = 0.5 * (a[0][1] + a[1][0]);
    let change = (a[0][1] - off).abs().max((a[1][0] - off).abs());
    ([[a[0][0], off], [off, a[1][1]]], change)
}

fn eigen_range(a: [[f64; 2]; 2], dim: usize) -> (f64, f64) {
    if dim == 1 {
        return (a[0][0], a[0][0]);
    }
    let tr = 0.5 * (a[0][0] + a[1][1]);
    let det_part = (0.25 * (a[0][0] - a[1][1]).powi(2) + a[0][1] * a[0][1]).sqrt();
    (tr - det_part, tr + det_part)
}

/// Largest of the sup-norms of a field and its first and second spatial
/// derivatives at `(t, x)`, from centred differences. `norm` maps a field
/// value (flattened) to a scalar magnitude.
fn c2_local<F>(f: &F, t: f64, x: &[f64], norm: fn(&[f64]) -> f64) -> f64
where
    F: Fn(f64, &[f64]) -> Vec<f64>,
{
    let h = FD_STEP;
    let d = x.len();
    let at = |dx: &[f64]| {
        let p: Vec<f64> = x.iter().zip(dx).map(|(a, b)| a + b).collect();
        f(t, &p)
    };
    let zero = vec![0.0; d];
    let centre = at(&zero);
    let mut worst = norm(&centre);
    let unit = |i: usize, s: f64| {
        let mut e = vec![0.0; d];
        e[i] = s;
        e
    };
    for i in 0..d {
        let plus = at(&unit(i, h));
        let minus = at(&unit(i, -h));
        let first: Vec<f64> = plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * h)).collect();
        let second: Vec<f64> = plus
            .iter()
            .zip(&minus)
            .zip(&centre)
            .map(|((p, m), c)| (p - 2.0 * c + m) / (h * h))
            .collect();
        worst = worst.max(norm(&first)).max(norm(&second));
        for j in i + 1..d {
            let mut pp = vec![0.0; d];
            pp[i] = h;
            pp[j] = h;
            let mut pm = pp.clone();
            pm[j] = -h;
            let mut mp = pp.clone();
            mp[i] = -h;
            let mm: Vec<f64> = pp.iter().map(|v| -v).collect();
            let (fpp, fpm, fmp, fmm) = (at(&pp), at(&pm), at(&mp), at(&mm));
            let mixed: Vec<f64> = (0..fpp.len())
                .map(|k| (fpp[k] - fpm[k] - fmp[k] + fmm[k]) / (4.0 * h * h))
                .collect();
            worst = worst.max(norm(&mixed));
        }
    }
    worst
}

fn abs_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Spectral norm of a symmetric 2×2 (or 1×1) matrix stored row-major.
fn operator_norm(v: &[f64]) -> f64 {
    if v.len() == 1 {
        return v[0].abs();
    }
    let m = [[v[0], v[1]], [v[2], v[3]]];
    let (lo, hi) = eigen_range(m, 2);
    lo.abs().max(hi.abs())
}

/// Checks all structural inequalities on the sample set and returns the
/// full report, whether or not it passes.
pub fn validation_report(coeffs: &CoefficientSet, samples: &SampleSet) -> Result<ValidationReport> {
    if samples.points.is_empty() {
        return Err(Error::InvalidParameter("validation sample set is empty".into()));
    }
    let d = coeffs.dim;
    let k = coeffs.k;
    if !(k > 0.0) {
        return Err(Error::InvalidParameter(format!("K must be positive, got {k}")));
    }
    let mut checks: Vec<InequalityCheck> = [
        Inequality::EllipticityLower,
        Inequality::EllipticityUpper,
        Inequality::Dissipativity,
        Inequality::SmoothnessA,
        Inequality::SmoothnessB,
        Inequality::SmoothnessC,
        Inequality::SmoothnessBBar,
        Inequality::NoiseBound,
    ]
    .into_iter()
    .map(|inequality| InequalityCheck {
        inequality,
        margin: f64::INFINITY,
        worst_time: 0.0,
        worst_point: Vec::new(),
        skipped: inequality == Inequality::Dissipativity && coeffs.allow_nondissipative,
    })
    .collect();

    let a_sym = |t: f64, x: &[f64]| {
        let (m, _) = symmetric_part((coeffs.a)(t, x), d);
        if d == 1 {
            vec![m[0][0]]
        } else {
            vec![m[0][0], m[0][1], m[1][0], m[1][1]]
        }
    };
    let b_vec = |t: f64, x: &[f64]| (coeffs.b)(t, x)[..d].to_vec();
    let scalar = |f: &ScalarField| {
        let f = f.clone();
        move |t: f64, x: &[f64]| vec![f(t, x)]
    };
    let c_fn = scalar(&coeffs.c);
    let bb_fn = scalar(&coeffs.b_bar);

    let mut max_asymmetry = 0.0f64;
    for (t, x) in &samples.points {
        let (a, change) = symmetric_part((coeffs.a)(*t, x), d);
        max_asymmetry = max_asymmetry.max(change);
        let (lo, hi) = eigen_range(a, d);
        let margins = [
            (Inequality::EllipticityLower, lo - 1.0 / k),
            (Inequality::EllipticityUpper, k - hi),
            (Inequality::Dissipativity, (coeffs.b_bar)(*t, x) - 1.0 / k),
            (Inequality::SmoothnessA, k - c2_local(&a_sym, *t, x, operator_norm)),
            (Inequality::SmoothnessB, k - c2_local(&b_vec, *t, x, euclidean_norm)),
            (Inequality::SmoothnessC, k - c2_local(&c_fn, *t, x, abs_norm)),
            (Inequality::SmoothnessBBar, k - c2_local(&bb_fn, *t, x, abs_norm)),
            (Inequality::NoiseBound, k - (coeffs.xi)(*t, x).abs()),
        ];
        for (check, (_, margin)) in checks.iter_mut().zip(margins) {
            if margin < check.margin || margin.is_nan() {
                check.margin = margin;
                check.worst_time = *t;
                check.worst_point = x.clone();
            }
        }
    }
    let passed = checks.iter().all(InequalityCheck::holds);
    Ok(ValidationReport {
        checks,
        max_asymmetry,
        symmetrized: max_asymmetry > 1e-12,
        outside_theorem: coeffs.allow_nondissipative,
        passed,
    })
}

/// Like [`validation_report`] but fails with the first violated
/// inequality and where it was violated.
pub fn validate(coeffs: &CoefficientSet, samples: &SampleSet) -> Result<ValidationReport> {
    let report = validation_report(coeffs, samples)?;
    if let Some(v) = report.first_violation() {
        return Err(Error::ValidationFailure {
            inequality: v.inequality.to_string(),
            location: format!("t = {}, x = {:?}", v.worst_time, v.worst_point),
            margin: v.margin,
        });
    }
    Ok(report)
}

/// `ψ_k(x) = 1 / cosh(|x| / k)`.
pub fn psi_weight(k: f64, x: &[f64]) -> f64 {
    assert!(k >= 1.0, "weight scale must be at least 1");
    let r = x.iter().map(|c| c * c).sum::<f64>().sqrt();
    1.0 / (r / k).cosh()
}

/// Constant `N(d)` with `|∂_i∂_j ψ_k| ≤ N(d) k^{-2} ψ_k`.
pub fn psi_hessian_constant(dim: usize) -> f64 {
    dim as f64
}
