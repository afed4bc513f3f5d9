//! Ground truth for tests: exhaustive enumeration over the hypercube,
//! the exact matrix exponential, and a few relaxations solved by hand.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::{DenseSymmetric, SparseSymmetric};
use crate::optimize::CostMatrix;

/// Largest dimension the enumerators accept.
pub const MAX_BRUTE_FORCE_DIM: usize = 24;

#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceResult {
    pub optimum: f64,
    /// `±1` entries for the IQP, `0/1` entries for the QUBO.
    pub argmax: Vec<f64>,
    /// Points of the cube covered, `2ⁿ` (mirror images count even when
    /// the symmetry skipped them).
    pub evaluations: u64,
}

/// `max xᵀCx` over `x ∈ {−1, 1}ⁿ`.
pub fn brute_force_iqp(c: &CostMatrix) -> Result<BruteForceResult> {
    brute_force_iqp_linear(c, &vec![0.0; c.dim()])
}

/// `max xᵀCx + bᵀx` over `x ∈ {−1, 1}ⁿ`. Without linear terms `x` and `−x`
/// tie, so the first coordinate is pinned to `+1`.
///
/// Ties are broken towards the lexicographically smallest `x` under the
/// order `+1 < −1`.
pub fn brute_force_iqp_linear(c: &CostMatrix, linear: &[f64]) -> Result<BruteForceResult> {
    let n = c.dim();
    check_size(n, linear.len())?;
    let a = c.raw().to_dense().into_matrix();
    let symmetric = linear.iter().all(|b| *b == 0.0);
    let pinned = usize::from(symmetric);
    let free = n - pinned;

    // Bit j set means x_j = −1.
    let mut x = vec![1.0; n];
    let mut field: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    let mut value: f64 = field.iter().sum::<f64>() + linear.iter().sum::<f64>();
    let tol = 1e-12 * (1.0 + a.abs().sum() + linear.iter().map(|b| b.abs()).sum::<f64>());

    let mut key = 0u64;
    let mut best = (value, key, x.clone());
    for step in 1u64..(1u64 << free) {
        let j = step.trailing_zeros() as usize + pinned;
        let old = x[j];
        value += -4.0 * old * (field[j] - a[(j, j)] * old) - 2.0 * linear[j] * old;
        for (i, f) in field.iter_mut().enumerate() {
            *f -= 2.0 * a[(i, j)] * old;
        }
        x[j] = -old;
        key ^= 1u64 << (n - 1 - j);
        if value > best.0 + tol || ((value - best.0).abs() <= tol && key < best.1) {
            best = (value, key, x.clone());
        }
    }
    Ok(BruteForceResult {
        optimum: best.0,
        argmax: best.2,
        evaluations: 1u64 << n,
    })
}

/// `max zᵀCz` over `z ∈ {0, 1}ⁿ`.
pub fn brute_force_qubo(c: &CostMatrix) -> Result<BruteForceResult> {
    brute_force_qubo_linear(c, &vec![0.0; c.dim()])
}

/// `max zᵀCz + bᵀz` over `z ∈ {0, 1}ⁿ`; ties go to the lexicographically
/// smallest `z`.
pub fn brute_force_qubo_linear(c: &CostMatrix, linear: &[f64]) -> Result<BruteForceResult> {
    let n = c.dim();
    check_size(n, linear.len())?;
    let a = c.raw().to_dense().into_matrix();

    // field_i = Σ_j C_ij z_j
    let mut z = vec![0.0; n];
    let mut field = vec![0.0; n];
    let mut value = 0.0;
    let tol = 1e-12 * (1.0 + a.abs().sum() + linear.iter().map(|b| b.abs()).sum::<f64>());

    let mut key = 0u64;
    let mut best = (value, key, z.clone());
    for step in 1u64..(1u64 << n) {
        let j = step.trailing_zeros() as usize;
        let s = 1.0 - 2.0 * z[j];
        value += 2.0 * s * field[j] + a[(j, j)] + s * linear[j];
        for (i, f) in field.iter_mut().enumerate() {
            *f += s * a[(i, j)];
        }
        z[j] += s;
        key ^= 1u64 << (n - 1 - j);
        if value > best.0 + tol || ((value - best.0).abs() <= tol && key < best.1) {
            best = (value, key, z.clone());
        }
    }
    Ok(BruteForceResult {
        optimum: best.0,
        argmax: best.2,
        evaluations: 1u64 << n,
    })
}

fn check_size(n: usize, linear: usize) -> Result<()> {
    if linear != n {
        return Err(Error::DimensionMismatch { expected: n, found: linear });
    }
    if n == 0 {
        return Err(Error::InvalidInput("empty problem".into()));
    }
    if n > MAX_BRUTE_FORCE_DIM {
        return Err(Error::TooLarge { dim: n, max: MAX_BRUTE_FORCE_DIM });
    }
    Ok(())
}

/// `vᵀAv + bᵀv + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub quadratic: CostMatrix,
    pub linear: Vec<f64>,
    pub constant: f64,
}

impl QuadraticForm {
    pub fn evaluate(&self, v: &[f64]) -> f64 {
        self.quadratic.quadratic_form(v)
            + self.linear.iter().zip(v).map(|(b, x)| b * x).sum::<f64>()
            + self.constant
    }
}

/// The `±1` form of `zᵀCz + bᵀz` under `z = (x + e)/2`.
pub fn qubo_to_iqp(c: &CostMatrix, linear: &[f64]) -> Result<QuadraticForm> {
    let n = c.dim();
    if linear.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: linear.len() });
    }
    let a = c.raw().to_dense().into_matrix();
    let row_sums: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    Ok(QuadraticForm {
        quadratic: CostMatrix::new(c.raw().scaled(0.25)),
        linear: row_sums.iter().zip(linear).map(|(r, b)| 0.5 * r + 0.5 * b).collect(),
        constant: 0.25 * row_sums.iter().sum::<f64>() + 0.5 * linear.iter().sum::<f64>(),
    })
}

/// The `0/1` form of `xᵀCx + bᵀx` under `x = 2z − e`.
pub fn iqp_to_qubo(c: &CostMatrix, linear: &[f64]) -> Result<QuadraticForm> {
    let n = c.dim();
    if linear.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: linear.len() });
    }
    let a = c.raw().to_dense().into_matrix();
    let row_sums: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    Ok(QuadraticForm {
        quadratic: CostMatrix::new(c.raw().scaled(4.0)),
        linear: row_sums.iter().zip(linear).map(|(r, b)| -4.0 * r + 2.0 * b).collect(),
        constant: row_sums.iter().sum::<f64>() - linear.iter().sum::<f64>(),
    })
}

/// `z = (x + e)/2`.
pub fn spins_to_bits(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| (v + 1.0) / 2.0).collect()
}

/// `x = 2z − e`.
pub fn bits_to_spins(z: &[f64]) -> Vec<f64> {
    z.iter().map(|v| 2.0 * v - 1.0).collect()
}

/// `exp(−h)` through a full eigendecomposition, without normalization.
pub fn exact_exponential(h: &DenseSymmetric) -> Result<DMatrix<f64>> {
    let eig = SymmetricEigen::try_new(h.matrix().clone(), f64::EPSILON, 0).ok_or(Error::Eigen)?;
    let mut v = eig.eigenvectors.clone();
    for (k, l) in eig.eigenvalues.iter().enumerate() {
        v.column_mut(k).scale_mut((-l).exp());
    }
    Ok(v * eig.eigenvectors.transpose())
}

/// Relaxations whose optimum is known in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdoInstance {
    /// `C = [[0, 1], [1, 0]]`.
    PairCoupling,
    /// `C = eeᵀ − I`.
    CompleteGraphPos(usize),
    /// `C = −(eeᵀ − I)`, `n` even.
    CompleteGraphNeg(usize),
}

impl SdoInstance {
    pub fn dim(&self) -> usize {
        match *self {
            SdoInstance::PairCoupling => 2,
            SdoInstance::CompleteGraphPos(n) | SdoInstance::CompleteGraphNeg(n) => n,
        }
    }

    pub fn cost(&self) -> CostMatrix {
        let n = self.dim();
        let w = match self {
            SdoInstance::CompleteGraphNeg(_) => -1.0,
            _ => 1.0,
        };
        let entries = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j, w)))
            .collect();
        CostMatrix::new(SparseSymmetric::new(n, entries).expect("well-formed instance"))
    }

    /// An optimal `X` of the relaxation.
    pub fn witness(&self) -> DenseSymmetric {
        let n = self.dim();
        match self {
            SdoInstance::CompleteGraphNeg(_) => {
                let nf = n as f64;
                let m = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { -1.0 / (nf - 1.0) });
                DenseSymmetric::new(m).expect("symmetric")
            }
            _ => DenseSymmetric::new(DMatrix::from_element(n, n, 1.0)).expect("symmetric"),
        }
    }

    fn validate(self) -> Result<Self> {
        match self {
            SdoInstance::CompleteGraphPos(n) if n < 2 => {
                Err(Error::InvalidInput(format!("complete graph needs n >= 2, got {n}")))
            }
            SdoInstance::CompleteGraphNeg(n) if n < 2 || n % 2 != 0 => {
                Err(Error::InvalidInput(format!("negative complete graph needs even n >= 2, got {n}")))
            }
            other => Ok(other),
        }
    }
}

impl fmt::Display for SdoInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SdoInstance::PairCoupling => write!(f, "pair_coupling"),
            SdoInstance::CompleteGraphPos(n) => write!(f, "complete_graph_pos({n})"),
            SdoInstance::CompleteGraphNeg(n) => write!(f, "complete_graph_neg({n})"),
        }
    }
}

impl FromStr for SdoInstance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "pair_coupling" || s == "pair_coupling(2)" {
            return Ok(SdoInstance::PairCoupling);
        }
        let (name, rest) = s.split_once('(').ok_or_else(|| Error::UnknownTag(s.to_string()))?;
        let arg = rest
            .strip_suffix(')')
            .and_then(|a| a.trim().parse::<usize>().ok())
            .ok_or_else(|| Error::UnknownTag(s.to_string()))?;
        let inst = match name.trim() {
            "complete_graph_pos" => SdoInstance::CompleteGraphPos(arg),
            "complete_graph_neg" => SdoInstance::CompleteGraphNeg(arg),
            _ => return Err(Error::UnknownTag(s.to_string())),
        };
        inst.validate()
    }
}

/// Optimal value of `max tr(CX)` s.t. `X ⪰ 0`, `diag X = e`.
pub fn closed_form_sdo(instance: &SdoInstance) -> Result<f64> {
    Ok(match instance.validate()? {
        SdoInstance::PairCoupling => 2.0,
        SdoInstance::CompleteGraphPos(n) => (n * (n - 1)) as f64,
        SdoInstance::CompleteGraphNeg(n) => n as f64,
    })
}

/// [`closed_form_sdo`] from a tag such as `complete_graph_pos(4)`.
pub fn closed_form_sdo_tag(tag: &str) -> Result<f64> {
    closed_form_sdo(&tag.parse()?)
}
