//! Orthonormal function systems on `[0, 1]`.
//!
//! Three families are available:
//!
//! * **Histogram**: `sqrt(D) * 1[cell_j]` on `D = 2^m` dyadic cells.
//! * **Trigonometric**: `1`, then `sqrt(2) cos(2 pi j x)`, `sqrt(2) sin(2 pi j x)`
//!   for `j = 1, 2, ...`, truncated to the first `D` functions.
//! * **Piecewise polynomial**: on each of `2^L` dyadic cells, the shifted
//!   Legendre polynomials of degree `0..=r`, rescaled to the cell and
//!   L2-normalized, giving `D = (r + 1) 2^L` functions.
//!
//! Cells are half-open `[a, b)` except the last one, which is closed at 1.
//! All integrals over subintervals are computed in closed form (products of
//! polynomials through an exact Gauss-Legendre rule, trigonometric products
//! through product-to-sum identities), so Gram matrices built from them carry
//! no quadrature error.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest supported piecewise polynomial degree.
pub const MAX_DEGREE: u8 = 8;

/// Number of Gauss-Legendre nodes; exact for polynomial degree `<= 17`,
/// enough for products of two degree-8 pieces.
const GAUSS_NODES: usize = 9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum BasisKind {
    Histogram,
    Trigonometric,
    PiecewisePolynomial { degree: u8 },
}

impl BasisKind {
    /// Localized families have compactly supported functions on dyadic cells.
    pub fn is_localized(self) -> bool {
        !matches!(self, BasisKind::Trigonometric)
    }

    /// Functions per dyadic cell (1 for trigonometric, which has no cells).
    pub fn per_cell(self) -> usize {
        match self {
            BasisKind::PiecewisePolynomial { degree } => degree as usize + 1,
            _ => 1,
        }
    }

    /// The constant `phi` with `sup |u|^2 <= phi * D * ||u||^2` on the span.
    pub fn sup_factor(self) -> f64 {
        match self {
            BasisKind::Histogram => 1.0,
            BasisKind::Trigonometric => 2.0,
            BasisKind::PiecewisePolynomial { degree } => degree as f64 + 1.0,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            BasisKind::PiecewisePolynomial { degree } if degree > MAX_DEGREE => {
                Err(Error::DegreeTooLarge(degree))
            }
            _ => Ok(()),
        }
    }
}

impl std::fmt::Display for BasisKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BasisKind::Histogram => write!(f, "H"),
            BasisKind::Trigonometric => write!(f, "T"),
            BasisKind::PiecewisePolynomial { degree } => write!(f, "DP{degree}"),
        }
    }
}

impl std::str::FromStr for BasisKind {
    type Err = Error;

    /// Accepts `H`, `T`, `DP<r>` (case-insensitive) and the long names.
    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        let kind = match lower.as_str() {
            "h" | "histogram" => BasisKind::Histogram,
            "t" | "trig" | "trigonometric" => BasisKind::Trigonometric,
            other => {
                let digits = other
                    .strip_prefix("dp")
                    .or_else(|| other.strip_prefix("piecewise"))
                    .ok_or_else(|| Error::InvalidInput(format!("unknown basis '{s}'")))?;
                let degree = digits
                    .parse::<u8>()
                    .map_err(|_| Error::InvalidInput(format!("bad polynomial degree in '{s}'")))?;
                BasisKind::PiecewisePolynomial { degree }
            }
        };
        kind.validate()?;
        Ok(kind)
    }
}

/// A finite orthonormal system on `[0, 1]`. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis1D {
    kind: BasisKind,
    dim: usize,
    /// Number of dyadic cells (localized families only).
    cells: usize,
}

/// Builds a basis from the family's own size parameter: `m` for histograms
/// (`D = 2^m`), the function count for trigonometric, the dyadic level for
/// piecewise polynomials (`D = (r + 1) 2^level`).
pub fn make_basis(kind: BasisKind, dimension_param: u32) -> Result<Basis1D> {
    if dimension_param == 0 {
        return Err(Error::InvalidInput("dimension parameter must be at least 1".into()));
    }
    kind.validate()?;
    let dim = match kind {
        BasisKind::Trigonometric => dimension_param as usize,
        _ => {
            let cells = 1usize
                .checked_shl(dimension_param)
                .filter(|c| *c <= 1 << 20)
                .ok_or_else(|| Error::InvalidInput("dyadic level too large".into()))?;
            kind.per_cell() * cells
        }
    };
    Basis1D::with_dimension(kind, dim)
}

impl Basis1D {
    /// Builds the basis with exactly `dim` functions.
    pub fn with_dimension(kind: BasisKind, dim: usize) -> Result<Self> {
        kind.validate()?;
        if dim == 0 {
            return Err(Error::InvalidInput("basis dimension must be positive".into()));
        }
        let cells = match kind {
            BasisKind::Trigonometric => 0,
            _ => {
                let per = kind.per_cell();
                let cells = dim / per;
                if !dim.is_multiple_of(per) || !cells.is_power_of_two() {
                    return Err(Error::InvalidInput(format!(
                        "dimension {dim} is not admissible for basis {kind}"
                    )));
                }
                cells
            }
        };
        Ok(Basis1D { kind, dim, cells })
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sup_norm_factor(&self) -> f64 {
        self.kind.sup_factor()
    }

    /// Dyadic cell carrying function `j`, or `None` for global functions.
    pub fn cell_of(&self, j: usize) -> Option<usize> {
        self.kind.is_localized().then(|| j / self.kind.per_cell())
    }

    /// Value of the `j`-th function at `x`; zero outside `[0, 1]`.
    pub fn eval(&self, j: usize, x: f64) -> Result<f64> {
        self.check_index(j)?;
        Ok(self.value(j, x))
    }

    pub(crate) fn value(&self, j: usize, x: f64) -> f64 {
        if !(0.0..=1.0).contains(&x) {
            return 0.0;
        }
        match self.kind {
            BasisKind::Trigonometric => trig_fn(j).value(x),
            kind => {
                let per = kind.per_cell();
                let cell = j / per;
                if self.cell_at(x) != cell {
                    return 0.0;
                }
                let u = x * self.cells as f64 - cell as f64;
                (self.cells as f64).sqrt() * legendre_normalized(j % per, u)
            }
        }
    }

    /// Writes the possibly-nonzero `(index, value)` pairs at `x` into `out`.
    pub fn eval_nonzero(&self, x: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        if !(0.0..=1.0).contains(&x) {
            return;
        }
        match self.kind {
            BasisKind::Trigonometric => {
                out.extend((0..self.dim).map(|j| (j, trig_fn(j).value(x))));
            }
            kind => {
                let per = kind.per_cell();
                let cell = self.cell_at(x);
                let u = x * self.cells as f64 - cell as f64;
                let scale = (self.cells as f64).sqrt();
                out.extend(
                    (0..per).map(|d| (cell * per + d, scale * legendre_normalized(d, u))),
                );
            }
        }
    }

    /// Values of all functions at `x`.
    pub fn eval_all(&self, x: f64) -> Vec<f64> {
        let mut dense = vec![0.0; self.dim];
        let mut nz = Vec::new();
        self.eval_nonzero(x, &mut nz);
        for (j, v) in nz {
            dense[j] = v;
        }
        dense
    }

    /// `int_a^b psi_k(z) psi_p(z) dz` in closed form.
    pub fn pair_integral(&self, k: usize, p: usize, a: f64, b: f64) -> Result<f64> {
        self.check_index(k)?;
        self.check_index(p)?;
        let (a, b) = check_interval(a, b)?;
        Ok(self.pair_integral_unchecked(k, p, a, b))
    }

    /// `int_a^b psi_k(z) dz` in closed form.
    pub fn integral(&self, k: usize, a: f64, b: f64) -> Result<f64> {
        self.check_index(k)?;
        let (a, b) = check_interval(a, b)?;
        Ok(self.integral_unchecked(k, a, b))
    }

    /// All pair integrals over `[a, b]` that are not structurally zero, in
    /// both orders `(k, p)` and `(p, k)`.
    pub fn pair_integrals(&self, a: f64, b: f64, out: &mut Vec<(usize, usize, f64)>) -> Result<()> {
        let (a, b) = check_interval(a, b)?;
        out.clear();
        if b <= a {
            return Ok(());
        }
        match self.kind {
            BasisKind::Trigonometric => {
                for k in 0..self.dim {
                    for p in k..self.dim {
                        let v = trig_pair(trig_fn(k), trig_fn(p), a, b);
                        out.push((k, p, v));
                        if p != k {
                            out.push((p, k, v));
                        }
                    }
                }
            }
            BasisKind::Histogram => {
                for cell in self.cell_at(a)..=self.cell_at(b) {
                    let len = self.overlap(cell, a, b);
                    if len > 0.0 {
                        out.push((cell, cell, self.cells as f64 * len));
                    }
                }
            }
            BasisKind::PiecewisePolynomial { .. } => {
                let per = self.kind.per_cell();
                for cell in self.cell_at(a)..=self.cell_at(b) {
                    let Some((ua, ub)) = self.local_range(cell, a, b) else {
                        continue;
                    };
                    for d in 0..per {
                        for e in d..per {
                            let v = legendre_pair(d, e, ua, ub);
                            out.push((cell * per + d, cell * per + e, v));
                            if e != d {
                                out.push((cell * per + e, cell * per + d, v));
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub(crate) fn integral_unchecked(&self, k: usize, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self.kind {
            BasisKind::Trigonometric => trig_fn(k).integral(a, b),
            BasisKind::Histogram => (self.cells as f64).sqrt() * self.overlap(k, a, b),
            BasisKind::PiecewisePolynomial { .. } => {
                let per = self.kind.per_cell();
                match self.local_range(k / per, a, b) {
                    Some((ua, ub)) => {
                        gauss_legendre(ua, ub, |u| legendre_normalized(k % per, u))
                            / (self.cells as f64).sqrt()
                    }
                    None => 0.0,
                }
            }
        }
    }

    fn pair_integral_unchecked(&self, k: usize, p: usize, a: f64, b: f64) -> f64 {
        if b <= a {
            return 0.0;
        }
        match self.kind {
            BasisKind::Trigonometric => trig_pair(trig_fn(k), trig_fn(p), a, b),
            BasisKind::Histogram => {
                if k != p {
                    return 0.0;
                }
                self.cells as f64 * self.overlap(k, a, b)
            }
            BasisKind::PiecewisePolynomial { .. } => {
                let per = self.kind.per_cell();
                if k / per != p / per {
                    return 0.0;
                }
                match self.local_range(k / per, a, b) {
                    Some((ua, ub)) => legendre_pair(k % per, p % per, ua, ub),
                    None => 0.0,
                }
            }
        }
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j >= self.dim {
            return Err(Error::IndexOutOfRange { index: j, dim: self.dim });
        }
        Ok(())
    }

    /// Cell containing `x`, with the last cell closed at 1.
    fn cell_at(&self, x: f64) -> usize {
        let c = (x * self.cells as f64).floor();
        if c <= 0.0 {
            0
        } else {
            (c as usize).min(self.cells - 1)
        }
    }

    fn overlap(&self, cell: usize, a: f64, b: f64) -> f64 {
        let w = self.cells as f64;
        let lo = cell as f64 / w;
        let hi = (cell + 1) as f64 / w;
        (b.min(hi) - a.max(lo)).max(0.0)
    }

    /// `[a, b]` intersected with `cell`, in the cell's local coordinate.
    fn local_range(&self, cell: usize, a: f64, b: f64) -> Option<(f64, f64)> {
        let w = self.cells as f64;
        let ua = (a * w - cell as f64).clamp(0.0, 1.0);
        let ub = (b * w - cell as f64).clamp(0.0, 1.0);
        (ub > ua).then_some((ua, ub))
    }
}

fn check_interval(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite interval [{a}, {b}]")));
    }
    if a > b {
        return Err(Error::ReversedInterval { a, b });
    }
    Ok((a.clamp(0.0, 1.0), b.clamp(0.0, 1.0)))
}

// --- trigonometric family --------------------------------------------------

#[derive(Debug, Clone, Copy)]
enum TrigFn {
    Const,
    Cos(i64),
    Sin(i64),
}

/// Index order: constant, then `cos(2 pi j x)` before `sin(2 pi j x)`.
fn trig_fn(j: usize) -> TrigFn {
    match j {
        0 => TrigFn::Const,
        j if j % 2 == 1 => TrigFn::Cos(j.div_ceil(2) as i64),
        j => TrigFn::Sin((j / 2) as i64),
    }
}

impl TrigFn {
    fn value(self, x: f64) -> f64 {
        match self {
            TrigFn::Const => 1.0,
            TrigFn::Cos(f) => SQRT_2 * (2.0 * PI * f as f64 * x).cos(),
            TrigFn::Sin(f) => SQRT_2 * (2.0 * PI * f as f64 * x).sin(),
        }
    }

    fn integral(self, a: f64, b: f64) -> f64 {
        match self {
            TrigFn::Const => b - a,
            TrigFn::Cos(f) => SQRT_2 * cos_integral(f, a, b),
            TrigFn::Sin(f) => SQRT_2 * sin_integral(f, a, b),
        }
    }
}

/// `int_a^b cos(2 pi f x) dx`, written to avoid cancellation on short intervals.
fn cos_integral(f: i64, a: f64, b: f64) -> f64 {
    if f == 0 {
        return b - a;
    }
    let w = 2.0 * PI * f as f64;
    2.0 * (w * 0.5 * (a + b)).cos() * (w * 0.5 * (b - a)).sin() / w
}

/// `int_a^b sin(2 pi f x) dx`.
fn sin_integral(f: i64, a: f64, b: f64) -> f64 {
    if f == 0 {
        return 0.0;
    }
    let w = 2.0 * PI * f as f64;
    2.0 * (w * 0.5 * (a + b)).sin() * (w * 0.5 * (b - a)).sin() / w
}

fn trig_pair(u: TrigFn, v: TrigFn, a: f64, b: f64) -> f64 {
    use TrigFn::*;
    match (u, v) {
        (Const, Const) => b - a,
        (Const, other) | (other, Const) => other.integral(a, b),
        (Cos(j), Cos(l)) => cos_integral(j - l, a, b) + cos_integral(j + l, a, b),
        (Sin(j), Sin(l)) => cos_integral(j - l, a, b) - cos_integral(j + l, a, b),
        (Sin(j), Cos(l)) | (Cos(l), Sin(j)) => {
            sin_integral(j + l, a, b) + sin_integral(j - l, a, b)
        }
    }
}

// --- piecewise Legendre family ----------------------------------------------

/// `sqrt(2d + 1) P_d(2u - 1)`: orthonormal on `[0, 1]`.
fn legendre_normalized(d: usize, u: f64) -> f64 {
    let t = 2.0 * u - 1.0;
    let (mut prev, mut cur) = (1.0, t);
    if d == 0 {
        return 1.0;
    }
    for n in 1..d {
        let n = n as f64;
        let next = ((2.0 * n + 1.0) * t * cur - n * prev) / (n + 1.0);
        prev = cur;
        cur = next;
    }
    (2.0 * d as f64 + 1.0).sqrt() * cur
}

fn legendre_pair(d: usize, e: usize, ua: f64, ub: f64) -> f64 {
    gauss_legendre(ua, ub, |u| legendre_normalized(d, u) * legendre_normalized(e, u))
}

fn gauss_legendre(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let (nodes, weights) = gauss_rule();
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    half * nodes
        .iter()
        .zip(weights)
        .map(|(t, w)| w * f(mid + half * t))
        .sum::<f64>()
}

/// Nodes and weights on `[-1, 1]`, by Newton iteration on `P_n`.
fn gauss_rule() -> &'static ([f64; GAUSS_NODES], [f64; GAUSS_NODES]) {
    static RULE: OnceLock<([f64; GAUSS_NODES], [f64; GAUSS_NODES])> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GAUSS_NODES;
        let mut nodes = [0.0; GAUSS_NODES];
        let mut weights = [0.0; GAUSS_NODES];
        for i in 0..n {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut deriv = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 1..n {
                    let k = k as f64;
                    let p2 = ((2.0 * k + 1.0) * x * p1 - k * p0) / (k + 1.0);
                    p0 = p1;
                    p1 = p2;
                }
                deriv = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let step = p1 / deriv;
                x -= step;
                if step.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = x;
            weights[i] = 2.0 / ((1.0 - x * x) * deriv * deriv);
        }
        (nodes, weights)
    })
}
