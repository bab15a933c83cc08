//! Normal equations `G A = Upsilon` of the least-squares contrast.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::estimator::UnitSample;
use crate::models::ModelIndex;

/// Gram matrix and response vector of one model, with coefficients indexed
/// as `j * d2 + k` for covariate function `j` and time function `k`.
#[derive(Debug, Clone)]
pub struct GramSystem {
    pub model: ModelIndex,
    pub gram: DMatrix<f64>,
    pub response: Vec<f64>,
    pub min_eigenvalue: f64,
    /// Connected components of the sparsity pattern of `gram`.
    blocks: Vec<Vec<usize>>,
}

impl GramSystem {
    /// Assembles `G` and `Upsilon` for `model` from the sample.
    pub fn assemble(model: ModelIndex, sample: &UnitSample) -> Result<Self> {
        let gram = gram_entries(&model, sample)?;
        let response = response_vector(&model, sample)?;
        Self::from_parts(model, gram, response)
    }

    pub fn from_parts(model: ModelIndex, gram: DMatrix<f64>, response: Vec<f64>) -> Result<Self> {
        let p = model.product_dim();
        if gram.nrows() != p || gram.ncols() != p || response.len() != p {
            return Err(Error::InvalidInput(format!(
                "Gram system of size {}x{} / {} does not match model dimension {p}",
                gram.nrows(),
                gram.ncols(),
                response.len()
            )));
        }
        let blocks = components(&gram);
        let min_eigenvalue = blocks
            .iter()
            .map(|b| block_min_eigenvalue(&gram, b))
            .fold(f64::INFINITY, f64::min);
        Ok(GramSystem { model, gram, response, min_eigenvalue, blocks })
    }

    pub fn dim(&self) -> usize {
        self.response.len()
    }

    /// Solves `G a = Upsilon` blockwise by Cholesky factorization.
    pub fn solve(&self) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        for block in &self.blocks {
            if let [i] = block.as_slice() {
                let g = self.gram[(*i, *i)];
                if !(g > 0.0) {
                    return Err(self.breakdown());
                }
                out[*i] = self.response[*i] / g;
                continue;
            }
            let sub = DMatrix::from_fn(block.len(), block.len(), |r, c| self.gram[(block[r], block[c])]);
            let rhs = DVector::from_iterator(block.len(), block.iter().map(|&i| self.response[i]));
            let chol = sub.cholesky().ok_or_else(|| self.breakdown())?;
            let sol = chol.solve(&rhs);
            for (&i, v) in block.iter().zip(sol.iter()) {
                out[i] = *v;
            }
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(self.breakdown());
        }
        Ok(out)
    }

    /// `a' G a - 2 a' Upsilon`, the contrast of the surface with coefficients `a`.
    pub fn quadratic_contrast(&self, coefficients: &[f64]) -> f64 {
        let a = DVector::from_column_slice(coefficients);
        let ga = &self.gram * &a;
        a.dot(&ga) - 2.0 * a.iter().zip(&self.response).map(|(u, v)| u * v).sum::<f64>()
    }

    fn breakdown(&self) -> Error {
        Error::SolverBreakdown { d1: self.model.d1, d2: self.model.d2 }
    }
}

/// `G[(j,k),(l,p)] = (1/n) sum_i phi_j(X_i) phi_l(X_i) int_0^{R_i} psi_k psi_p`.
pub fn gram_matrix(model: &ModelIndex, sample: &UnitSample) -> Result<GramSystem> {
    GramSystem::assemble(*model, sample)
}

fn gram_entries(model: &ModelIndex, sample: &UnitSample) -> Result<DMatrix<f64>> {
    let (bx, bz) = model.bases()?;
    let d2 = model.d2;
    let p = model.product_dim();
    let mut g = DMatrix::<f64>::zeros(p, p);
    let mut phi = Vec::new();
    let mut pairs = Vec::new();
    for i in sample.canonical() {
        bx.eval_nonzero(sample.x()[i], &mut phi);
        bz.pair_integrals(0.0, sample.risk_end()[i], &mut pairs)?;
        for &(j, pj) in &phi {
            for &(l, pl) in &phi {
                let w = pj * pl;
                if w == 0.0 {
                    continue;
                }
                for &(k, q, v) in &pairs {
                    g[(j * d2 + k, l * d2 + q)] += w * v;
                }
            }
        }
    }
    if !sample.is_empty() {
        g /= sample.len() as f64;
    }
    Ok(g)
}

/// `Upsilon[(j,k)] = (1/n) sum_i phi_j(X_i) sum_{t in jumps_i} psi_k(t)`.
pub fn response_vector(model: &ModelIndex, sample: &UnitSample) -> Result<Vec<f64>> {
    let (bx, bz) = model.bases()?;
    let d2 = model.d2;
    let mut ups = vec![0.0; model.product_dim()];
    let mut phi = Vec::new();
    let mut psi = Vec::new();
    for i in sample.canonical() {
        if sample.jumps()[i].is_empty() {
            continue;
        }
        bx.eval_nonzero(sample.x()[i], &mut phi);
        for &t in &sample.jumps()[i] {
            bz.eval_nonzero(t, &mut psi);
            for &(j, pj) in &phi {
                for &(k, qk) in &psi {
                    ups[j * d2 + k] += pj * qk;
                }
            }
        }
    }
    if !sample.is_empty() {
        let n = sample.len() as f64;
        ups.iter_mut().for_each(|v| *v /= n);
    }
    Ok(ups)
}

/// Connected components of the nonzero pattern, each sorted ascending.
fn components(g: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let p = g.nrows();
    let mut parent: Vec<usize> = (0..p).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for c in 0..p {
        for r in (c + 1)..p {
            if g[(r, c)] != 0.0 || g[(c, r)] != 0.0 {
                let (a, b) = (find(&mut parent, r), find(&mut parent, c));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); p];
    for i in 0..p {
        let root = find(&mut parent, i);
        groups[root].push(i);
    }
    groups.into_iter().filter(|b| !b.is_empty()).collect()
}

fn block_min_eigenvalue(g: &DMatrix<f64>, block: &[usize]) -> f64 {
    if let [i] = block {
        return g[(*i, *i)];
    }
    let sub = DMatrix::from_fn(block.len(), block.len(), |r, c| g[(block[r], block[c])]);
    sub.symmetric_eigen().eigenvalues.min()
}
