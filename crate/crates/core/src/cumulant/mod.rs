//! Closed moment equations: four means plus all second-order cumulants.
//!
//! Equations are generated at construction time by [`symbolic`] and compiled
//! into flat term lists over an atom table, so evaluating the right-hand side
//! is a handful of complex multiply-adds per term.

pub mod symbolic;

use nalgebra::{Matrix4, SMatrix};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::model::{ensure_valid, Cavity, Diagnostic, DriveConfig, SystemParams};
pub use symbolic::{Atom, Ladder, ModeIndex};
use symbolic::{mean_equation, pair_equation, Expr, ATOM_COUNT};

/// Reals in the packed state: 4 complex means, Hermitian `N` (16 reals),
/// symmetric `A` (10 complex).
pub const PACKED_DIM: usize = 44;
/// Reals in the unconstrained layout used for structure checks.
pub const FULL_DIM: usize = 72;

pub type Matrix8 = SMatrix<Complex64, 8, 8>;

const UPPER: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
const UPPER_DIAG: [(usize, usize); 10] = [
    (0, 0),
    (0, 1),
    (0, 2),
    (0, 3),
    (1, 1),
    (1, 2),
    (1, 3),
    (2, 2),
    (2, 3),
    (3, 3),
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CumulantState {
    pub t: f64,
    pub means: [Complex64; 4],
    /// `N[i][j] = Δ<x_i^+ x_j>`
    #[serde(serialize_with = "ser_matrix")]
    pub normal: Matrix4<Complex64>,
    /// `A[i][j] = Δ<x_i x_j>`
    #[serde(serialize_with = "ser_matrix")]
    pub anomalous: Matrix4<Complex64>,
}

fn ser_matrix<S: serde::Serializer>(m: &Matrix4<Complex64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<[f64; 2]>> = (0..4)
        .map(|i| (0..4).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect();
    serde::Serialize::serialize(&rows, s)
}

pub fn vacuum_state() -> CumulantState {
    CumulantState {
        t: 0.0,
        means: [Complex64::new(0.0, 0.0); 4],
        normal: Matrix4::zeros(),
        anomalous: Matrix4::zeros(),
    }
}

fn c(y: &[f64], k: usize) -> Complex64 {
    Complex64::new(y[k], y[k + 1])
}

impl CumulantState {
    pub fn mean(&self, m: ModeIndex) -> Complex64 {
        self.means[m.index()]
    }

    /// `Δ<x_i x_j^+>` by the reordering rule.
    pub fn antinormal(&self, i: usize, j: usize) -> Complex64 {
        self.normal[(j, i)] + if i == j { 1.0 } else { 0.0 }
    }

    pub fn pack(&self) -> Vec<f64> {
        let mut y = vec![0.0; PACKED_DIM];
        for k in 0..4 {
            y[2 * k] = self.means[k].re;
            y[2 * k + 1] = self.means[k].im;
            y[8 + k] = self.normal[(k, k)].re;
        }
        for (p, &(i, j)) in UPPER.iter().enumerate() {
            y[12 + 2 * p] = self.normal[(i, j)].re;
            y[13 + 2 * p] = self.normal[(i, j)].im;
        }
        for (q, &(i, j)) in UPPER_DIAG.iter().enumerate() {
            y[24 + 2 * q] = self.anomalous[(i, j)].re;
            y[25 + 2 * q] = self.anomalous[(i, j)].im;
        }
        y
    }

    pub fn unpack(t: f64, y: &[f64]) -> Self {
        let mut s = vacuum_state();
        s.t = t;
        for k in 0..4 {
            s.means[k] = c(y, 2 * k);
            s.normal[(k, k)] = Complex64::new(y[8 + k], 0.0);
        }
        for (p, &(i, j)) in UPPER.iter().enumerate() {
            let v = c(y, 12 + 2 * p);
            s.normal[(i, j)] = v;
            s.normal[(j, i)] = v.conj();
        }
        for (q, &(i, j)) in UPPER_DIAG.iter().enumerate() {
            let v = c(y, 24 + 2 * q);
            s.anomalous[(i, j)] = v;
            s.anomalous[(j, i)] = v;
        }
        s
    }

    pub fn pack_full(&self) -> Vec<f64> {
        let mut y = vec![0.0; FULL_DIM];
        for k in 0..4 {
            y[2 * k] = self.means[k].re;
            y[2 * k + 1] = self.means[k].im;
        }
        for i in 0..4 {
            for j in 0..4 {
                let n = 8 + 2 * (4 * i + j);
                y[n] = self.normal[(i, j)].re;
                y[n + 1] = self.normal[(i, j)].im;
                let a = 40 + 2 * (4 * i + j);
                y[a] = self.anomalous[(i, j)].re;
                y[a + 1] = self.anomalous[(i, j)].im;
            }
        }
        y
    }

    pub fn unpack_full(t: f64, y: &[f64]) -> Self {
        let mut s = vacuum_state();
        s.t = t;
        for k in 0..4 {
            s.means[k] = c(y, 2 * k);
        }
        for i in 0..4 {
            for j in 0..4 {
                s.normal[(i, j)] = c(y, 8 + 2 * (4 * i + j));
                s.anomalous[(i, j)] = c(y, 40 + 2 * (4 * i + j));
            }
        }
        s
    }

    /// Largest violation of `N = N^+` and `A = A^T`.
    pub fn structure_residual(&self) -> f64 {
        let mut r: f64 = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                r = r.max((self.normal[(i, j)] - self.normal[(j, i)].conj()).norm());
                r = r.max((self.anomalous[(i, j)] - self.anomalous[(j, i)]).norm());
            }
        }
        r
    }

    /// Smallest diagonal occupation `Δ<x_i^+ x_i>`.
    pub fn min_occupation(&self) -> f64 {
        (0..4).map(|i| self.normal[(i, i)].re).fold(f64::INFINITY, f64::min)
    }

    pub fn norm(&self) -> f64 {
        self.pack_full().iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

fn fill_table(s: &CumulantState, table: &mut [Complex64; ATOM_COUNT]) {
    for k in 0..4 {
        table[k] = s.means[k];
        table[4 + k] = s.means[k].conj();
    }
    for i in 0..4 {
        for j in 0..4 {
            table[8 + 4 * i + j] = s.normal[(i, j)];
            table[24 + 4 * i + j] = s.anomalous[(i, j)];
            table[40 + 4 * i + j] = s.anomalous[(i, j)].conj();
        }
    }
}

fn fill_table_packed(y: &[f64], table: &mut [Complex64; ATOM_COUNT]) {
    for k in 0..4 {
        let m = c(y, 2 * k);
        table[k] = m;
        table[4 + k] = m.conj();
        table[8 + 5 * k] = Complex64::new(y[8 + k], 0.0);
    }
    for (p, &(i, j)) in UPPER.iter().enumerate() {
        let v = c(y, 12 + 2 * p);
        table[8 + 4 * i + j] = v;
        table[8 + 4 * j + i] = v.conj();
    }
    for (q, &(i, j)) in UPPER_DIAG.iter().enumerate() {
        let v = c(y, 24 + 2 * q);
        table[24 + 4 * i + j] = v;
        table[24 + 4 * j + i] = v;
        table[40 + 4 * i + j] = v.conj();
        table[40 + 4 * j + i] = v.conj();
    }
}

#[derive(Debug, Clone, Copy)]
struct Term {
    coef: Complex64,
    atoms: [u8; 3],
    n: u8,
}

#[derive(Debug, Clone, Copy)]
enum Out {
    Complex(usize),
    Real(usize),
}

#[derive(Debug, Clone)]
struct Program {
    terms: Vec<Term>,
    // (output slot, end of this equation's terms)
    eqs: Vec<(Out, usize)>,
}

impl Program {
    fn compile(equations: &[(Out, &Expr)]) -> Self {
        let mut terms = Vec::new();
        let mut eqs = Vec::new();
        for (out, expr) in equations {
            for (atoms, coef) in expr.terms() {
                let mut a = [0u8; 3];
                for (k, atom) in atoms.iter().enumerate() {
                    a[k] = atom.slot() as u8;
                }
                terms.push(Term {
                    coef,
                    atoms: a,
                    n: atoms.len() as u8,
                });
            }
            eqs.push((*out, terms.len()));
        }
        Program { terms, eqs }
    }

    #[inline]
    fn run(&self, table: &[Complex64; ATOM_COUNT], dy: &mut [f64]) {
        let mut start = 0;
        for &(out, end) in &self.eqs {
            let mut acc = Complex64::new(0.0, 0.0);
            for t in &self.terms[start..end] {
                let v = match t.n {
                    0 => t.coef,
                    1 => t.coef * table[t.atoms[0] as usize],
                    2 => t.coef * table[t.atoms[0] as usize] * table[t.atoms[1] as usize],
                    _ => {
                        t.coef
                            * table[t.atoms[0] as usize]
                            * table[t.atoms[1] as usize]
                            * table[t.atoms[2] as usize]
                    }
                };
                acc += v;
            }
            match out {
                Out::Complex(k) => {
                    dy[k] = acc.re;
                    dy[k + 1] = acc.im;
                }
                Out::Real(k) => dy[k] = acc.re,
            }
            start = end;
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Source {
    mode: usize,
    amplitude: Complex64,
    frequency: f64,
}

#[derive(Debug, Clone, Copy)]
struct JacEntry {
    row: usize,
    col: usize,
    coef: Complex64,
    mean: Option<usize>,
}

/// Generated moment equations for one parameter/drive configuration.
#[derive(Debug, Clone)]
pub struct MomentOde {
    pub params: SystemParams,
    pub drive: DriveConfig,
    pub period: f64,
    pub diagnostics: Vec<Diagnostic>,
    mean_eqs: Vec<Expr>,
    normal_eqs: Vec<Vec<Expr>>,
    anom_eqs: Vec<Vec<Expr>>,
    packed: Program,
    full: Program,
    sources: Vec<Source>,
    jacobian: Vec<JacEntry>,
}

/// Generate the closed moment system for a validated configuration.
pub fn build_moment_ode(params: &SystemParams, drive: &DriveConfig) -> Result<MomentOde> {
    let diagnostics = ensure_valid(params, drive)?;
    let frame = drive.frame_detuning.as_f64();

    let mean_eqs: Vec<Expr> = (0..4)
        .map(|k| mean_equation(Ladder::ann(k), params, frame))
        .collect();
    let normal_eqs: Vec<Vec<Expr>> = (0..4)
        .map(|i| {
            (0..4)
                .map(|j| pair_equation(Ladder::cre(i), Ladder::ann(j), params, frame))
                .collect()
        })
        .collect();
    let anom_eqs: Vec<Vec<Expr>> = (0..4)
        .map(|i| {
            (0..4)
                .map(|j| pair_equation(Ladder::ann(i), Ladder::ann(j), params, frame))
                .collect()
        })
        .collect();

    let mut packed_list: Vec<(Out, &Expr)> = Vec::new();
    for k in 0..4 {
        packed_list.push((Out::Complex(2 * k), &mean_eqs[k]));
    }
    for k in 0..4 {
        packed_list.push((Out::Real(8 + k), &normal_eqs[k][k]));
    }
    for (p, &(i, j)) in UPPER.iter().enumerate() {
        packed_list.push((Out::Complex(12 + 2 * p), &normal_eqs[i][j]));
    }
    for (q, &(i, j)) in UPPER_DIAG.iter().enumerate() {
        packed_list.push((Out::Complex(24 + 2 * q), &anom_eqs[i][j]));
    }
    let packed = Program::compile(&packed_list);

    let mut full_list: Vec<(Out, &Expr)> = Vec::new();
    for k in 0..4 {
        full_list.push((Out::Complex(2 * k), &mean_eqs[k]));
    }
    for i in 0..4 {
        for j in 0..4 {
            full_list.push((Out::Complex(8 + 2 * (4 * i + j)), &normal_eqs[i][j]));
            full_list.push((Out::Complex(40 + 2 * (4 * i + j)), &anom_eqs[i][j]));
        }
    }
    let full = Program::compile(&full_list);

    let sources = drive
        .tones
        .iter()
        .map(|t| Source {
            mode: match t.cavity {
                Cavity::Controller => 0,
                Cavity::Target => 1,
            },
            amplitude: t.amplitude,
            frequency: drive.frame_frequency(t, params.omega0),
        })
        .collect();

    // Jacobian of the operator right-hand sides; the spectator in a two-time
    // cumulant only ever multiplies one factor of each product.
    let mut jacobian = Vec::new();
    for row in 0..8 {
        let x = Ladder::from_slot(row);
        for (coef, m) in symbolic::heisenberg(x, params, frame).terms {
            match m.as_slice() {
                [r] => jacobian.push(JacEntry {
                    row,
                    col: r.slot(),
                    coef,
                    mean: None,
                }),
                [y, z] => {
                    jacobian.push(JacEntry {
                        row,
                        col: z.slot(),
                        coef,
                        mean: Some(Atom::mean_of(*y).slot()),
                    });
                    jacobian.push(JacEntry {
                        row,
                        col: y.slot(),
                        coef,
                        mean: Some(Atom::mean_of(*z).slot()),
                    });
                }
                _ => unreachable!("Heisenberg terms are at most quadratic"),
            }
        }
    }

    Ok(MomentOde {
        params: *params,
        drive: drive.clone(),
        period: drive.fundamental_period(params.omega0),
        diagnostics,
        mean_eqs,
        normal_eqs,
        anom_eqs,
        packed,
        full,
        sources,
        jacobian,
    })
}

impl MomentOde {
    fn add_drive(&self, t: f64, dy: &mut [f64]) {
        for s in &self.sources {
            let d = s.amplitude * Complex64::from_polar(1.0, s.frequency * t);
            dy[2 * s.mode] += d.re;
            dy[2 * s.mode + 1] += d.im;
        }
    }

    /// Largest frame frequency among means, cumulants and drive terms.
    pub fn max_frequency(&self) -> f64 {
        let p = &self.params;
        let optical = self.drive.frame_detuning.as_f64().abs() * p.omega0;
        let mech = p.omega_c.max(p.omega_t);
        let drive = self.sources.iter().map(|s| s.frequency.abs()).fold(0.0, f64::max);
        [2.0 * optical, 2.0 * mech, optical + mech, drive, p.omega0]
            .into_iter()
            .fold(0.0, f64::max)
    }

    /// Step cap for explicit integration. Without it the error controller
    /// lets the step grow until weakly damped oscillations at `max_frequency`
    /// sit outside the accurate part of the stability region and stop
    /// decaying.
    pub fn max_step(&self) -> f64 {
        0.8 / self.max_frequency()
    }

    /// Packed right-hand side used by the integrators.
    pub fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let mut table = [Complex64::new(0.0, 0.0); ATOM_COUNT];
        fill_table_packed(y, &mut table);
        self.packed.run(&table, dy);
        self.add_drive(t, dy);
    }

    /// Right-hand side in the unconstrained layout; every entry of `dN/dt`
    /// and `dA/dt` is evaluated from its own equation.
    pub fn rhs_full(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let s = CumulantState::unpack_full(t, y);
        let mut table = [Complex64::new(0.0, 0.0); ATOM_COUNT];
        fill_table(&s, &mut table);
        self.full.run(&table, dy);
        self.add_drive(t, dy);
    }

    /// Time derivative of `state`, returned as a state-shaped value.
    pub fn rhs_eval(&self, state: &CumulantState) -> CumulantState {
        let y = state.pack_full();
        let mut dy = vec![0.0; FULL_DIM];
        self.rhs_full(state.t, &y, &mut dy);
        CumulantState::unpack_full(state.t, &dy)
    }

    /// Regression generator `dV/dτ = J V` over the eight ladder operators
    /// (annihilators first), evaluated at the given means.
    pub fn jacobian(&self, means: &[Complex64; 4]) -> Matrix8 {
        let mut mu = [Complex64::new(0.0, 0.0); 8];
        for k in 0..4 {
            mu[k] = means[k];
            mu[4 + k] = means[k].conj();
        }
        let mut j = Matrix8::zeros();
        for e in &self.jacobian {
            let v = match e.mean {
                Some(slot) => e.coef * mu[slot],
                None => e.coef,
            };
            j[(e.row, e.col)] += v;
        }
        j
    }

    /// Jacobian from a packed state vector.
    pub fn jacobian_packed(&self, y: &[f64]) -> Matrix8 {
        let means = [c(y, 0), c(y, 2), c(y, 4), c(y, 6)];
        self.jacobian(&means)
    }

    pub fn mean_equation(&self, mode: ModeIndex) -> &Expr {
        &self.mean_eqs[mode.index()]
    }

    pub fn normal_equation(&self, i: ModeIndex, j: ModeIndex) -> &Expr {
        &self.normal_eqs[i.index()][j.index()]
    }

    pub fn anomalous_equation(&self, i: ModeIndex, j: ModeIndex) -> &Expr {
        &self.anom_eqs[i.index()][j.index()]
    }

    /// Generated equations, one line per state component.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for m in ModeIndex::ALL {
            let mut line = format!("d<{}>/dt = {}", m.name(), self.mean_eqs[m.index()].render());
            for s in self.sources.iter().filter(|s| s.mode == m.index()) {
                line.push_str(&format!(
                    " + ({:+e}{:+e}i) exp(i {:e} t)",
                    s.amplitude.re, s.amplitude.im, s.frequency
                ));
            }
            out.push_str(&line);
            out.push('\n');
        }
        for i in ModeIndex::ALL {
            for j in ModeIndex::ALL {
                out.push_str(&format!(
                    "dD<{}^+ {}>/dt = {}\n",
                    i.name(),
                    j.name(),
                    self.normal_eqs[i.index()][j.index()].render()
                ));
            }
        }
        for &(i, j) in &UPPER_DIAG {
            out.push_str(&format!(
                "dD<{} {}>/dt = {}\n",
                ModeIndex::from_index(i).name(),
                ModeIndex::from_index(j).name(),
                self.anom_eqs[i][j].render()
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{preset, Detuning, DriveTone};

    fn blue() -> MomentOde {
        let p = preset("fig2_blue").unwrap();
        build_moment_ode(&p.params, &p.drive).unwrap()
    }

    #[test]
    fn golden_mean_coefficient() {
        let ode = blue();
        let e = ode.mean_equation(ModeIndex::AC);
        let g0 = ode.params.g0;
        assert_eq!(e.coefficient(&[Atom::Normal(2, 0)]), Complex64::new(0.0, g0));
        assert_eq!(e.coefficient(&[Atom::Anom(0, 2)]), Complex64::new(0.0, g0));
        assert_eq!(e.coefficient(&[Atom::Mean(0), Atom::MeanConj(2)]), Complex64::new(0.0, g0));
        assert_eq!(e.coefficient(&[Atom::Mean(0)]), Complex64::new(-0.115, 1.0));
        let b = ode.mean_equation(ModeIndex::BC);
        assert_eq!(b.coefficient(&[Atom::Mean(3)]), Complex64::new(0.0, 2.35e-4));
        assert_eq!(b.coefficient(&[Atom::Normal(0, 0)]), Complex64::new(0.0, g0));
    }

    #[test]
    fn blue_drive_terms() {
        let ode = blue();
        let dump = ode.dump();
        let first = dump.lines().next().unwrap();
        assert!(first.contains("exp(i 1e0 t)") && first.contains("exp(i 0e0 t)"), "{first}");
    }

    #[test]
    fn packing_round_trip() {
        let mut s = vacuum_state();
        s.t = 3.0;
        s.means[2] = Complex64::new(0.5, -1.0);
        s.normal[(0, 1)] = Complex64::new(0.25, 0.5);
        s.normal[(1, 0)] = Complex64::new(0.25, -0.5);
        s.normal[(3, 3)] = Complex64::new(2.0, 0.0);
        s.anomalous[(1, 3)] = Complex64::new(-0.1, 0.2);
        s.anomalous[(3, 1)] = Complex64::new(-0.1, 0.2);
        assert_eq!(CumulantState::unpack(3.0, &s.pack()), s);
        assert_eq!(CumulantState::unpack_full(3.0, &s.pack_full()), s);
    }

    #[test]
    fn vacuum_rhs_only_drives() {
        let ode = blue();
        let d = ode.rhs_eval(&vacuum_state());
        assert_eq!(d.means[0], Complex64::new(2.0, 0.0));
        assert_eq!(d.means[1], Complex64::new(1.0, 0.0));
        assert_eq!(d.means[2], Complex64::new(0.0, 0.0));
        assert_eq!(d.normal, Matrix4::zeros());
        assert_eq!(d.anomalous, Matrix4::zeros());
    }

    #[test]
    fn free_optical_mode() {
        let mut params = SystemParams::new(0.0, 0.0, 0.0, 0.0);
        params.omega0 = 1.0;
        let drive = DriveConfig::new(vec![DriveTone::new(Cavity::Target, Detuning::ONE, 0.7)]);
        let ode = build_moment_ode(&params, &drive).unwrap();
        let mut s = vacuum_state();
        s.means[1] = Complex64::new(0.3, 0.1);
        let d = ode.rhs_eval(&s);
        let expected = Complex64::new(0.7, 0.0) + Complex64::new(0.0, 1.0) * s.means[1];
        assert!((d.means[1] - expected).norm() < 1e-15);
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mut params = SystemParams::reference();
        params.gamma = -1.0;
        assert!(build_moment_ode(&params, &DriveConfig::default()).is_err());
    }
}
