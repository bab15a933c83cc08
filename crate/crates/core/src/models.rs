//! Tensor-product models `F_{m1} (x) H_{m2}` and the admissible collection.

use std::collections::BTreeSet;

use crate::basis::{Basis1D, BasisKind};
use crate::error::{Error, Result};

/// One tensor-product model: `d1` functions in the covariate direction,
/// `d2` in the time direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelIndex {
    pub d1: usize,
    pub d2: usize,
    pub kind_x: BasisKind,
    pub kind_z: BasisKind,
}

impl ModelIndex {
    pub fn new(d1: usize, d2: usize, kind_x: BasisKind, kind_z: BasisKind) -> Self {
        ModelIndex { d1, d2, kind_x, kind_z }
    }

    pub fn histogram(d1: usize, d2: usize) -> Self {
        Self::new(d1, d2, BasisKind::Histogram, BasisKind::Histogram)
    }

    pub fn product_dim(&self) -> usize {
        self.d1 * self.d2
    }

    pub fn bases(&self) -> Result<(Basis1D, Basis1D)> {
        Ok((
            Basis1D::with_dimension(self.kind_x, self.d1)?,
            Basis1D::with_dimension(self.kind_z, self.d2)?,
        ))
    }

    /// Selection order: smaller product dimension first, then smaller `d1`.
    pub fn order_key(&self) -> (usize, usize) {
        (self.product_dim(), self.d1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelCollection {
    pub models: Vec<ModelIndex>,
    pub n: usize,
    pub cap_x: usize,
    pub cap_z: usize,
    /// Dimension of the global nesting space (largest `d1` times largest `d2`).
    pub nesting_space_dim: usize,
}

/// Per-direction dimension cap for `n` observations: `sqrt(n / log n)` for
/// localized bases, `n^{1/4} / sqrt(log n)` for trigonometric.
pub fn dimension_cap(kind: BasisKind, n: usize) -> usize {
    let nf = n as f64;
    let ln = nf.ln();
    if ln <= 0.0 {
        return 0;
    }
    let cap = if kind.is_localized() {
        (nf / ln).sqrt()
    } else {
        nf.powf(0.25) / ln.sqrt()
    };
    cap.floor() as usize
}

/// Upper bound on the product dimension of any model.
pub fn product_cap(kind_x: BasisKind, kind_z: BasisKind, n: usize) -> f64 {
    let nf = n as f64;
    let ratio = nf / nf.ln();
    if kind_x.is_localized() && kind_z.is_localized() {
        ratio
    } else {
        ratio.sqrt()
    }
}

/// Dyadic ladder `base * 2^l <= cap`, never empty.
fn ladder(kind: BasisKind, cap: usize) -> Vec<usize> {
    let base = kind.per_cell();
    let mut dims = vec![base];
    let mut d = base * 2;
    while d <= cap {
        dims.push(d);
        d *= 2;
    }
    dims
}

/// All admissible `(d1, d2)` models for sample size `n`, ordered by
/// `(d1 * d2, d1)`.
pub fn enumerate_collection(n: usize, kind_x: BasisKind, kind_z: BasisKind) -> Result<ModelCollection> {
    if n < 8 {
        return Err(Error::EmptyCollection(n));
    }
    let cap_x = dimension_cap(kind_x, n);
    let cap_z = dimension_cap(kind_z, n);
    let xs = ladder(kind_x, cap_x);
    let zs = ladder(kind_z, cap_z);
    let max_product = product_cap(kind_x, kind_z, n);

    let mut models: Vec<ModelIndex> = xs
        .iter()
        .flat_map(|&d1| zs.iter().map(move |&d2| ModelIndex::new(d1, d2, kind_x, kind_z)))
        .filter(|m| m.product_dim() as f64 <= max_product)
        .collect();
    if models.is_empty() {
        models.push(ModelIndex::new(xs[0], zs[0], kind_x, kind_z));
    }
    models.sort_by_key(|m| m.order_key());

    let nesting_space_dim = models.iter().map(|m| m.d1).max().unwrap_or(1)
        * models.iter().map(|m| m.d2).max().unwrap_or(1);
    Ok(ModelCollection { models, n, cap_x, cap_z, nesting_space_dim })
}

impl ModelCollection {
    /// Collection holding exactly the given models (ordered for selection).
    pub fn from_models(n: usize, mut models: Vec<ModelIndex>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::EmptyCollection(n));
        }
        models.sort_by_key(|m| m.order_key());
        models.dedup();
        let cap_x = models.iter().map(|m| m.d1).max().unwrap_or(1);
        let cap_z = models.iter().map(|m| m.d2).max().unwrap_or(1);
        Ok(ModelCollection { models, n, cap_x, cap_z, nesting_space_dim: cap_x * cap_z })
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// The last model in selection order, i.e. the largest.
    pub fn largest(&self) -> Option<&ModelIndex> {
        self.models.last()
    }
}

/// Checks that the dimensions used in each direction describe nested spaces.
///
/// Localized families nest only along divisibility chains (a histogram on 2
/// cells is not contained in one on 3 cells); trigonometric spaces nest
/// whenever dimensions are distinct, as they share leading functions.
pub fn validate_nesting(c: &ModelCollection) -> bool {
    let axes: [fn(&ModelIndex) -> (BasisKind, usize); 2] =
        [|m| (m.kind_x, m.d1), |m| (m.kind_z, m.d2)];
    axes.iter().all(|pick| {
        let Some(kind) = c.models.first().map(|m| pick(m).0) else {
            return true;
        };
        if c.models.iter().any(|m| pick(m).0 != kind) {
            return false;
        }
        if !kind.is_localized() {
            return true;
        }
        let dims: BTreeSet<usize> = c.models.iter().map(|m| pick(m).1).collect();
        let dims: Vec<usize> = dims.into_iter().collect();
        let per = kind.per_cell();
        dims.iter().all(|d| d % per == 0 && (d / per).is_power_of_two())
            && dims.windows(2).all(|w| w[1] % w[0] == 0)
    })
}
