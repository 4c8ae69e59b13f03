//! Principal component analysis over named sensor channels, used to rank
//! which attributes carry the most variance.
//!
//! Steps: mean-center each attribute, form the sample covariance (n − 1
//! denominator), diagonalize it with cyclic Jacobi rotations, and turn the
//! eigenvalues into explained-variance fractions.
//!
//! The original description of the ranking rule ("the variance of the
//! attribute or the axis can be calculated by dividing its corresponding
//! eigenvector value with the sum of all the eigenvectors") does not define a
//! computable quantity as written. Attributes are instead scored by their
//! absolute loadings weighted by each component's explained variance:
//!
//! ```text
//! score(a) = Σ_{c < k} explained(c) · |V[a, c]|
//! ```
//!
//! Absolute values make the score independent of eigenvector sign.

use std::cmp::Ordering;
use std::fmt::Write as _;

use thiserror::Error;

use crate::orientation::{sensor_normal, OrientationError};
use crate::sensor_models::ImuSample;

pub const SYMMETRY_TOLERANCE: f64 = 1e-9;
pub const MAX_JACOBI_SWEEPS: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FeatureError {
    #[error("EmptyMatrix: no rows")]
    EmptyMatrix,
    #[error("TooFewRows: covariance needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("RaggedRows: row {row} has {got} values, expected {expected}")]
    RaggedRows { row: usize, got: usize, expected: usize },
    #[error("NotSymmetric: entries ({i},{j}) differ by {diff:e}")]
    NotSymmetric { i: usize, j: usize, diff: f64 },
    #[error("NoConvergence: off-diagonal mass {off_diagonal:e} after {sweeps} sweeps")]
    NoConvergence { sweeps: usize, off_diagonal: f64 },
    #[error("AllZeroVariance: eigenvalues sum to {0:e}")]
    AllZeroVariance(f64),
    #[error("UnknownAttribute: {0:?}")]
    UnknownAttribute(String),
    #[error("InvalidTopK: top_k {top_k} not in 1..={components}")]
    InvalidTopK { top_k: usize, components: usize },
    #[error(transparent)]
    Orientation(#[from] OrientationError),
}

/// Dense row-major square or rectangular matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, FeatureError> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for (row, r) in rows.iter().enumerate() {
            if r.len() != cols {
                return Err(FeatureError::RaggedRows { row, got: r.len(), expected: cols });
            }
            data.extend_from_slice(r);
        }
        Ok(Self { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, o: &Matrix) -> Matrix {
        assert_eq!(self.cols, o.rows, "dimension mismatch");
        let mut r = Matrix::zeros(self.rows, o.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                for j in 0..o.cols {
                    r[(i, j)] += a * o[(k, j)];
                }
            }
        }
        r
    }

    pub fn max_abs_diff(&self, o: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&o.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Named attributes by samples.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub attribute_names: Vec<String>,
    pub values: Matrix,
}

impl FeatureMatrix {
    pub fn new(attribute_names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, FeatureError> {
        let values = if rows.is_empty() {
            Matrix::zeros(0, attribute_names.len())
        } else {
            Matrix::from_rows(rows)?
        };
        if values.cols() != attribute_names.len() {
            return Err(FeatureError::RaggedRows {
                row: 0,
                got: values.cols(),
                expected: attribute_names.len(),
            });
        }
        Ok(Self { attribute_names, values })
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    pub fn n_attributes(&self) -> usize {
        self.attribute_names.len()
    }
}

/// Attribute names understood by [`from_trace`].
pub const TRACE_ATTRIBUTES: [&str; 17] = [
    "Ax", "Ay", "Az", "Gx", "Gy", "Gz", "mag1", "mag2", "mag3", "x", "y", "z", "w", "dcm1", "dcm2",
    "dcm3", "flex",
];

/// The channel set of the original attribute-selection study.
pub const STUDY_ATTRIBUTES: [&str; 15] = [
    "Ax", "Ay", "Az", "Gx", "Gy", "Gz", "x", "y", "z", "w", "dcm1", "dcm2", "dcm3", "mag2", "mag3",
];

fn trace_attribute(name: &str, s: &ImuSample) -> Result<f64, FeatureError> {
    let n = || sensor_normal(s.quat);
    Ok(match name {
        "Ax" => s.accel.x,
        "Ay" => s.accel.y,
        "Az" => s.accel.z,
        "Gx" => s.gyro.x,
        "Gy" => s.gyro.y,
        "Gz" => s.gyro.z,
        "mag1" => s.mag.x,
        "mag2" => s.mag.y,
        "mag3" => s.mag.z,
        "w" => s.quat.b0,
        "x" => s.quat.b1,
        "y" => s.quat.b2,
        "z" => s.quat.b3,
        // Components of the sensor normal (third DCM column).
        "dcm1" => n()?.x,
        "dcm2" => n()?.y,
        "dcm3" => n()?.z,
        "flex" => s.flex_ohms,
        other => return Err(FeatureError::UnknownAttribute(other.to_string())),
    })
}

/// Builds a feature matrix with the named channels of every sample.
pub fn from_trace<S: AsRef<str>>(trace: &[ImuSample], attributes: &[S]) -> Result<FeatureMatrix, FeatureError> {
    let names: Vec<String> = attributes.iter().map(|a| a.as_ref().to_string()).collect();
    let mut values = Matrix::zeros(trace.len(), names.len());
    for (i, s) in trace.iter().enumerate() {
        for (j, name) in names.iter().enumerate() {
            values[(i, j)] = trace_attribute(name, s)?;
        }
    }
    if trace.is_empty() {
        // Still validate the names.
        let probe = ImuSample::upright(0);
        for name in &names {
            trace_attribute(name, &probe)?;
        }
    }
    Ok(FeatureMatrix { attribute_names: names, values })
}

fn column_means(m: &Matrix) -> Vec<f64> {
    let n = m.rows() as f64;
    (0..m.cols())
        .map(|j| (0..m.rows()).map(|i| m[(i, j)]).sum::<f64>() / n)
        .collect()
}

pub fn mean_center(m: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
    if m.n_rows() == 0 {
        return Err(FeatureError::EmptyMatrix);
    }
    let means = column_means(&m.values);
    let mut values = m.values.clone();
    for i in 0..values.rows() {
        for (j, mean) in means.iter().enumerate() {
            values[(i, j)] -= mean;
        }
    }
    Ok(FeatureMatrix { attribute_names: m.attribute_names.clone(), values })
}

/// Divides each centered column by its sample standard deviation. Constant
/// columns are left at zero.
pub fn standardize(m: &FeatureMatrix) -> Result<FeatureMatrix, FeatureError> {
    if m.n_rows() < 2 {
        return Err(FeatureError::TooFewRows(m.n_rows()));
    }
    let mut c = mean_center(m)?;
    let denom = (c.n_rows() - 1) as f64;
    for j in 0..c.n_attributes() {
        let sd = (c.values.column(j).iter().map(|v| v * v).sum::<f64>() / denom).sqrt();
        if sd > 0.0 {
            for i in 0..c.n_rows() {
                c.values[(i, j)] /= sd;
            }
        }
    }
    Ok(c)
}

/// Sample covariance with the n − 1 denominator.
pub fn covariance(m: &FeatureMatrix) -> Result<Matrix, FeatureError> {
    let n = m.n_rows();
    if n < 2 {
        return Err(FeatureError::TooFewRows(n));
    }
    let c = mean_center(m)?;
    let p = m.n_attributes();
    let mut cov = Matrix::zeros(p, p);
    for i in 0..n {
        let row = c.values.row(i);
        for a in 0..p {
            for b in a..p {
                cov[(a, b)] += row[a] * row[b];
            }
        }
    }
    let denom = (n - 1) as f64;
    for a in 0..p {
        for b in a..p {
            let v = cov[(a, b)] / denom;
            cov[(a, b)] = v;
            cov[(b, a)] = v;
        }
    }
    Ok(cov)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    /// Sorted descending.
    pub values: Vec<f64>,
    /// Column `k` is the unit eigenvector for `values[k]`.
    pub vectors: Matrix,
}

fn off_diagonal_norm(a: &Matrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Each eigenvector is sign-normalized so that its largest-magnitude
/// component is positive.
pub fn eigen_decompose(cov: &Matrix) -> Result<Eigen, FeatureError> {
    let n = cov.rows();
    assert_eq!(n, cov.cols(), "eigen_decompose needs a square matrix");
    for i in 0..n {
        for j in (i + 1)..n {
            let diff = (cov[(i, j)] - cov[(j, i)]).abs();
            if !(diff <= SYMMETRY_TOLERANCE) {
                return Err(FeatureError::NotSymmetric { i, j, diff });
            }
        }
    }

    let mut a = cov.clone();
    let mut v = Matrix::identity(n);
    let scale = a.data.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * scale;

    let mut converged = off_diagonal_norm(&a) <= tol;
    let mut sweeps = 0;
    while !converged && sweeps < MAX_JACOBI_SWEEPS {
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                // Rotation angle zeroing a[p][q]; the smaller root of
                // t² + 2θt − 1 = 0 keeps |angle| ≤ π/4.
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;

                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
        converged = off_diagonal_norm(&a) <= tol;
    }
    if !converged {
        return Err(FeatureError::NoConvergence { sweeps, off_diagonal: off_diagonal_norm(&a) });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap_or(Ordering::Equal).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = v.column(src);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (k, x) in col.iter().enumerate() {
            vectors[(k, dst)] = sign * x;
        }
    }
    Ok(Eigen { values, vectors })
}

/// `λᵢ / Σλ`, with eigenvalues in `[-1e-9, 0)` clamped to zero first.
pub fn explained_variance(eigenvalues: &[f64]) -> Result<Vec<f64>, FeatureError> {
    let clamped: Vec<f64> = eigenvalues.iter().map(|&l| if l < 0.0 && l >= -1e-9 { 0.0 } else { l }).collect();
    let total: f64 = clamped.iter().sum();
    if !(total > 1e-15) {
        return Err(FeatureError::AllZeroVariance(total));
    }
    Ok(clamped.iter().map(|l| l / total).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcaResult {
    pub attribute_names: Vec<String>,
    pub eigenvalues: Vec<f64>,
    /// Loadings: row = attribute, column = component.
    pub eigenvectors: Matrix,
    pub explained_variance: Vec<f64>,
    /// Ranking over all components.
    pub attribute_ranking: Vec<(String, f64)>,
}

pub fn pca(m: &FeatureMatrix, standardized: bool) -> Result<PcaResult, FeatureError> {
    let input = if standardized { standardize(m)? } else { m.clone() };
    let cov = covariance(&input)?;
    let eig = eigen_decompose(&cov)?;
    let explained = explained_variance(&eig.values)?;
    let mut result = PcaResult {
        attribute_names: m.attribute_names.clone(),
        eigenvalues: eig.values,
        eigenvectors: eig.vectors,
        explained_variance: explained,
        attribute_ranking: Vec::new(),
    };
    result.attribute_ranking = rank_attributes(&result, result.eigenvalues.len())?;
    Ok(result)
}

/// Scores every attribute over the first `top_k` components, highest first;
/// equal scores fall back to attribute-name order.
pub fn rank_attributes(result: &PcaResult, top_k: usize) -> Result<Vec<(String, f64)>, FeatureError> {
    let components = result.eigenvalues.len();
    if top_k == 0 || top_k > components {
        return Err(FeatureError::InvalidTopK { top_k, components });
    }
    let mut ranking: Vec<(String, f64)> = result
        .attribute_names
        .iter()
        .enumerate()
        .map(|(a, name)| {
            let score = (0..top_k)
                .map(|c| result.explained_variance[c] * result.eigenvectors[(a, c)].abs())
                .sum();
            (name.clone(), score)
        })
        .collect();
    ranking.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap_or(Ordering::Equal).then_with(|| x.0.cmp(&y.0)));
    Ok(ranking)
}

impl PcaResult {
    /// Loadings of the first `components` eigenvectors, one row per attribute,
    /// followed by the attribute ranking.
    pub fn table(&self, components: usize, ranking: &[(String, f64)]) -> String {
        let k = components.min(self.eigenvalues.len());
        let mut out = String::new();
        for c in 0..k {
            let _ = write!(out, "{:>9}", format!("V{}", c + 1));
        }
        out.push_str("  Attribute\n");
        for (a, name) in self.attribute_names.iter().enumerate() {
            for c in 0..k {
                let _ = write!(out, "{:>9.4}", self.eigenvectors[(a, c)]);
            }
            let _ = writeln!(out, "  {name}");
        }
        out.push('\n');
        for c in 0..k {
            let _ = write!(out, "{:>9.4}", self.explained_variance[c]);
        }
        out.push_str("  explained variance\n\nRank  Attribute  Score\n");
        for (i, (name, score)) in ranking.iter().enumerate() {
            let _ = writeln!(out, "{:>4}  {:<9}  {:.6}", i + 1, name, score);
        }
        out
    }

    pub fn ranking_csv(ranking: &[(String, f64)]) -> String {
        let mut out = String::from("rank,attribute,score\n");
        for (i, (name, score)) in ranking.iter().enumerate() {
            let _ = writeln!(out, "{},{},{:.9}", i + 1, name, score);
        }
        out
    }
}
