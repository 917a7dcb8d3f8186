//! Two-mode Gaussian states described by their quadrature covariance matrix.
//!
//! Quadratures are always ordered `(X₁, Y₁, X₂, Y₂)` and variances are in
//! shot-noise units: the vacuum has unit variance on every quadrature. The
//! matrix does not carry its basis; callers track whether it describes the
//! signal/idler modes or the ±45° rotated modes via [`ModeBasis`].

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, TAU};

use crate::error::{Error, Result};

pub type Matrix4 = [[f64; 4]; 4];

const SYMMETRY_TOL: f64 = 1e-12;

/// Symplectic eigenvalues below `1 - PHYSICALITY_TOL` mark a state as unphysical.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Symmetric, positive-definite 4×4 covariance of `(X₁, Y₁, X₂, Y₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoModeCovariance {
    entries: Matrix4,
}

impl TwoModeCovariance {
    pub fn new(entries: Matrix4) -> Result<Self> {
        for (i, row) in entries.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::invalid(
                        format!("covariance entry ({i},{j})"),
                        "a finite number",
                        v,
                    ));
                }
            }
        }
        check_symmetric(&entries)?;
        if cholesky(&entries).is_none() {
            return Err(Error::NotPositiveDefinite);
        }
        Ok(Self { entries })
    }

    pub fn vacuum() -> Self {
        let mut entries = [[0.0; 4]; 4];
        for (i, row) in entries.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { entries }
    }

    pub fn entries(&self) -> &Matrix4 {
        &self.entries
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row][col]
    }

    /// Multiplies every entry by `factor` (> 0), e.g. to add isotropic thermal noise.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        if !(factor > 0.0) {
            return Err(Error::NonPositive {
                what: "scale factor",
                value: factor,
            });
        }
        let mut entries = self.entries;
        entries
            .iter_mut()
            .flat_map(|row| row.iter_mut())
            .for_each(|v| *v *= factor);
        Ok(Self { entries })
    }

    /// `aᵀ Σ b` for two real 4-vectors.
    fn bilinear(&self, a: &[f64; 4], b: &[f64; 4]) -> f64 {
        let mut acc = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                acc += a[i] * self.entries[i][j] * b[j];
            }
        }
        acc
    }

    /// Symplectic eigenvalues `(ν₋, ν₊)`, smallest first.
    pub fn symplectic_eigenvalues(&self) -> (f64, f64) {
        let m = &self.entries;
        let det2 = |r: usize, c: usize| m[r][c] * m[r + 1][c + 1] - m[r][c + 1] * m[r + 1][c];
        let seralian = det2(0, 0) + det2(2, 2) + 2.0 * det2(0, 2);
        let det = det4(m);
        let disc = (seralian * seralian - 4.0 * det).max(0.0).sqrt();
        let small = ((seralian - disc) / 2.0).max(0.0).sqrt();
        let large = ((seralian + disc) / 2.0).max(0.0).sqrt();
        (small, large)
    }
}

/// Which pair of modes a covariance matrix refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModeBasis {
    /// Signal `A₁` and idler `A₂`.
    SignalIdler,
    /// `A₊ = (A₁ + A₂)/√2` in the first slot, `A₋ = (A₁ − A₂)/√2` in the second.
    RotatedPlusMinus,
}

/// Mode slot in the covariance matrix: signal or `A₊` for `First`, idler or
/// `A₋` for `Second`, depending on the basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Mode {
    First,
    Second,
}

impl Mode {
    pub const SIGNAL: Mode = Mode::First;
    pub const IDLER: Mode = Mode::Second;
    pub const PLUS: Mode = Mode::First;
    pub const MINUS: Mode = Mode::Second;

    fn offset(self) -> usize {
        match self {
            Mode::First => 0,
            Mode::Second => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Quadrature {
    X,
    Y,
}

/// A generalized quadrature `X cos θ + Y sin θ` of one mode, where `θ` is
/// `phase` measured from the chosen base quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSelector {
    pub mode: Mode,
    pub quadrature: Quadrature,
    phase: f64,
}

impl QuadratureSelector {
    /// Builds a selector; the phase is wrapped into `[0, 2π)`.
    pub fn new(mode: Mode, quadrature: Quadrature, phase: f64) -> Self {
        let mut phase = phase.rem_euclid(TAU);
        if phase >= TAU {
            phase = 0.0;
        }
        Self {
            mode,
            quadrature,
            phase,
        }
    }

    pub fn x(mode: Mode) -> Self {
        Self::new(mode, Quadrature::X, 0.0)
    }

    pub fn y(mode: Mode) -> Self {
        Self::new(mode, Quadrature::Y, 0.0)
    }

    /// Quadrature at local-oscillator phase `theta` measured from X.
    pub fn at_phase(mode: Mode, theta: f64) -> Self {
        Self::new(mode, Quadrature::X, theta)
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    fn angle(&self) -> f64 {
        let base = match self.quadrature {
            Quadrature::X => 0.0,
            Quadrature::Y => FRAC_PI_2,
        };
        base + self.phase
    }

    fn vector(&self) -> [f64; 4] {
        let mut v = [0.0; 4];
        let (s, c) = self.angle().sin_cos();
        let k = self.mode.offset();
        v[k] = c;
        v[k + 1] = s;
        v
    }
}

/// Report from [`check_physical`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Physicality {
    pub physical: bool,
    pub min_symplectic_eigenvalue: f64,
}

/// Maps between the signal/idler basis and the ±45° rotated basis.
///
/// The 50/50 beam-splitter transform is symmetric and orthogonal, so the
/// same matrix serves both directions.
pub fn rotate_basis(
    cov: &TwoModeCovariance,
    from: ModeBasis,
    to: ModeBasis,
) -> Result<TwoModeCovariance> {
    check_symmetric(&cov.entries)?;
    if from == to {
        return Ok(*cov);
    }
    let h = FRAC_1_SQRT_2;
    let s: Matrix4 = [
        [h, 0.0, h, 0.0],
        [0.0, h, 0.0, h],
        [h, 0.0, -h, 0.0],
        [0.0, h, 0.0, -h],
    ];
    let mut out = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            let mut acc = 0.0;
            for k in 0..4 {
                for l in 0..4 {
                    acc += s[i][k] * cov.entries[k][l] * s[j][l];
                }
            }
            out[i][j] = acc;
        }
    }
    // restore exact symmetry lost to rounding
    for i in 0..4 {
        for j in (i + 1)..4 {
            let avg = 0.5 * (out[i][j] + out[j][i]);
            out[i][j] = avg;
            out[j][i] = avg;
        }
    }
    Ok(TwoModeCovariance { entries: out })
}

/// Signal/idler covariance of the symmetric state with
/// `Var((X₁−X₂)/√2) = g_x` and `Var((Y₁+Y₂)/√2) = g_y`, without checking
/// that it respects the uncertainty principle.
///
/// Individual beams have `Var(X) = v_ind_x`, `Var(Y) = v_ind_y`; all X–Y
/// cross terms are zero.
pub fn symmetric_covariance(
    g_x: f64,
    g_y: f64,
    v_ind_x: f64,
    v_ind_y: f64,
) -> Result<TwoModeCovariance> {
    for (what, value) in [
        ("g_x", g_x),
        ("g_y", g_y),
        ("v_ind_x", v_ind_x),
        ("v_ind_y", v_ind_y),
    ] {
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::NonPositive { what, value });
        }
    }
    let cx = v_ind_x - g_x;
    let cy = g_y - v_ind_y;
    TwoModeCovariance::new([
        [v_ind_x, 0.0, cx, 0.0],
        [0.0, v_ind_y, 0.0, cy],
        [cx, 0.0, v_ind_x, 0.0],
        [0.0, cy, 0.0, v_ind_y],
    ])
}

/// Like [`symmetric_covariance`] but rejects states violating the
/// uncertainty principle.
pub fn build_covariance(
    g_x: f64,
    g_y: f64,
    v_ind_x: f64,
    v_ind_y: f64,
) -> Result<TwoModeCovariance> {
    let cov = symmetric_covariance(g_x, g_y, v_ind_x, v_ind_y)?;
    let report = check_physical(&cov);
    if !report.physical {
        return Err(Error::Unphysical {
            min_eigenvalue: report.min_symplectic_eigenvalue,
        });
    }
    Ok(cov)
}

/// `Var(A) − Cov(A,B)²/Var(B)`: residual variance of `target` after the best
/// linear estimate from `conditioner`.
pub fn conditional_variance(
    cov: &TwoModeCovariance,
    target: QuadratureSelector,
    conditioner: QuadratureSelector,
) -> Result<f64> {
    let a = target.vector();
    let b = conditioner.vector();
    let var_b = cov.bilinear(&b, &b);
    if !(var_b > 0.0) {
        return Err(Error::Domain(format!(
            "conditioner variance must be positive, got {var_b}"
        )));
    }
    let var_a = cov.bilinear(&a, &a);
    let cov_ab = cov.bilinear(&a, &b);
    Ok(var_a - cov_ab * cov_ab / var_b)
}

pub fn check_physical(cov: &TwoModeCovariance) -> Physicality {
    let (min, _) = cov.symplectic_eigenvalues();
    Physicality {
        physical: min >= 1.0 - PHYSICALITY_TOL,
        min_symplectic_eigenvalue: min,
    }
}

/// Variance of the generalized quadrature picked by `sel`.
pub fn generalized_variance(cov: &TwoModeCovariance, sel: QuadratureSelector) -> f64 {
    let a = sel.vector();
    cov.bilinear(&a, &a)
}

fn check_symmetric(m: &Matrix4) -> Result<()> {
    for i in 0..4 {
        for j in (i + 1)..4 {
            let diff = (m[i][j] - m[j][i]).abs();
            if diff > SYMMETRY_TOL {
                return Err(Error::NotSymmetric {
                    row: i,
                    col: j,
                    diff,
                });
            }
        }
    }
    Ok(())
}

fn cholesky(m: &Matrix4) -> Option<Matrix4> {
    let mut l = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..=i {
            let sum: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = m[i][i] - sum;
                if !(d > 0.0) {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (m[i][j] - sum) / l[j][j];
            }
        }
    }
    Some(l)
}

fn det3(m: [[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn det4(m: &Matrix4) -> f64 {
    let mut det = 0.0;
    for col in 0..4 {
        let mut minor = [[0.0; 3]; 3];
        for r in 1..4 {
            let mut cc = 0;
            for c in 0..4 {
                if c == col {
                    continue;
                }
                minor[r - 1][cc] = m[r][c];
                cc += 1;
            }
        }
        let sign = if col % 2 == 0 { 1.0 } else { -1.0 };
        det += sign * m[0][col] * det3(minor);
    }
    det
}
