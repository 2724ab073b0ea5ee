//! Ladder-operator algebra: Heisenberg right-hand sides, normal ordering and
//! the doublet-truncated cumulant expansion.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::model::SystemParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ModeIndex {
    AC = 0,
    AT = 1,
    BC = 2,
    BT = 3,
}

impl ModeIndex {
    pub const ALL: [ModeIndex; 4] = [ModeIndex::AC, ModeIndex::AT, ModeIndex::BC, ModeIndex::BT];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> ModeIndex {
        Self::ALL[i]
    }

    pub fn name(self) -> &'static str {
        match self {
            ModeIndex::AC => "a_c",
            ModeIndex::AT => "a_t",
            ModeIndex::BC => "b_c",
            ModeIndex::BT => "b_t",
        }
    }

    pub fn is_optical(self) -> bool {
        matches!(self, ModeIndex::AC | ModeIndex::AT)
    }
}

/// A ladder operator: annihilator, or creator when `dag` is set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ladder {
    pub mode: usize,
    pub dag: bool,
}

impl Ladder {
    pub const fn ann(mode: usize) -> Self {
        Ladder { mode, dag: false }
    }

    pub const fn cre(mode: usize) -> Self {
        Ladder { mode, dag: true }
    }

    pub fn adjoint(self) -> Self {
        Ladder {
            mode: self.mode,
            dag: !self.dag,
        }
    }

    /// Position among the eight ladder operators: annihilators first.
    pub fn slot(self) -> usize {
        self.mode + if self.dag { 4 } else { 0 }
    }

    pub fn from_slot(s: usize) -> Self {
        Ladder {
            mode: s % 4,
            dag: s >= 4,
        }
    }

    fn order_key(self) -> (bool, usize) {
        (!self.dag, self.mode)
    }
}

impl fmt::Display for Ladder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = ModeIndex::from_index(self.mode).name();
        if self.dag {
            write!(f, "{name}^+")
        } else {
            write!(f, "{name}")
        }
    }
}

pub type Monomial = Vec<Ladder>;

/// Linear combination of operator products.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OpPoly {
    pub terms: Vec<(Complex64, Monomial)>,
}

impl OpPoly {
    pub fn push(&mut self, c: Complex64, m: Monomial) {
        self.terms.push((c, m));
    }

    pub fn adjoint(&self) -> OpPoly {
        OpPoly {
            terms: self
                .terms
                .iter()
                .map(|(c, m)| (c.conj(), m.iter().rev().map(|x| x.adjoint()).collect()))
                .collect(),
        }
    }
}

/// Heisenberg right-hand side without drive, in the frame rotating at
/// `frame` mechanical quanta above the cavity resonance.
pub fn heisenberg(op: Ladder, params: &SystemParams, frame: f64) -> OpPoly {
    if op.dag {
        return heisenberg(op.adjoint(), params, frame).adjoint();
    }
    let i = Complex64::new(0.0, 1.0);
    let ig = i * params.g0;
    let mut p = OpPoly::default();
    match op.mode {
        0 | 1 => {
            let a = op.mode;
            let b = a + 2;
            p.push(
                Complex64::new(-params.kappa / 2.0, frame * params.omega0),
                vec![Ladder::ann(a)],
            );
            p.push(ig, vec![Ladder::ann(a), Ladder::cre(b)]);
            p.push(ig, vec![Ladder::ann(a), Ladder::ann(b)]);
        }
        2 | 3 => {
            let b = op.mode;
            let a = b - 2;
            let other = if b == 2 { 3 } else { 2 };
            let omega = if b == 2 { params.omega_c } else { params.omega_t };
            p.push(Complex64::new(-params.gamma / 2.0, -omega), vec![Ladder::ann(b)]);
            p.push(ig, vec![Ladder::cre(a), Ladder::ann(a)]);
            p.push(i * params.k_coupling, vec![Ladder::ann(other)]);
        }
        _ => unreachable!("four modes"),
    }
    p
}

/// Bring a product to normal order using `[x_i, x_j^+] = δ_ij`; within the
/// creator and annihilator blocks operators are sorted by mode.
pub fn normal_order(m: &[Ladder]) -> Vec<(Complex64, Monomial)> {
    let one = Complex64::new(1.0, 0.0);
    for k in 0..m.len().saturating_sub(1) {
        let (x, y) = (m[k], m[k + 1]);
        if x.order_key() > y.order_key() {
            let mut swapped = m.to_vec();
            swapped.swap(k, k + 1);
            let mut out = normal_order(&swapped);
            if !x.dag && y.dag && x.mode == y.mode {
                let mut contracted = m[..k].to_vec();
                contracted.extend_from_slice(&m[k + 2..]);
                out.extend(normal_order(&contracted));
            }
            return out;
        }
    }
    vec![(one, m.to_vec())]
}

/// Expectation-value atoms: means and second-order cumulants of normally
/// ordered pairs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Atom {
    Mean(usize),
    MeanConj(usize),
    /// `Δ<x_i^+ x_j>`
    Normal(usize, usize),
    /// `Δ<x_i x_j>`, `i <= j`
    Anom(usize, usize),
    /// `Δ<x_i^+ x_j^+>`, `i <= j`
    AnomConj(usize, usize),
}

pub const ATOM_COUNT: usize = 56;

impl Atom {
    pub fn anom(i: usize, j: usize) -> Atom {
        Atom::Anom(i.min(j), i.max(j))
    }

    pub fn anom_conj(i: usize, j: usize) -> Atom {
        Atom::AnomConj(i.min(j), i.max(j))
    }

    pub fn mean_of(x: Ladder) -> Atom {
        if x.dag {
            Atom::MeanConj(x.mode)
        } else {
            Atom::Mean(x.mode)
        }
    }

    /// Cumulant of the normally ordered pair `x y`.
    pub fn pair(x: Ladder, y: Ladder) -> Atom {
        match (x.dag, y.dag) {
            (true, false) => Atom::Normal(x.mode, y.mode),
            (false, false) => Atom::anom(x.mode, y.mode),
            (true, true) => Atom::anom_conj(x.mode, y.mode),
            (false, true) => panic!("pair {x} {y} is not normally ordered"),
        }
    }

    /// Slot in the evaluation table.
    pub fn slot(self) -> usize {
        match self {
            Atom::Mean(k) => k,
            Atom::MeanConj(k) => 4 + k,
            Atom::Normal(i, j) => 8 + 4 * i + j,
            Atom::Anom(i, j) => 24 + 4 * i + j,
            Atom::AnomConj(i, j) => 40 + 4 * i + j,
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = |k: usize| ModeIndex::from_index(k).name();
        match *self {
            Atom::Mean(k) => write!(f, "<{}>", n(k)),
            Atom::MeanConj(k) => write!(f, "<{}^+>", n(k)),
            Atom::Normal(i, j) => write!(f, "D<{}^+ {}>", n(i), n(j)),
            Atom::Anom(i, j) => write!(f, "D<{} {}>", n(i), n(j)),
            Atom::AnomConj(i, j) => write!(f, "D<{}^+ {}^+>", n(i), n(j)),
        }
    }
}

/// Polynomial in atoms with complex coefficients.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Expr {
    // value: (coefficient, sum of magnitudes of contributions)
    terms: BTreeMap<Vec<Atom>, (Complex64, f64)>,
}

impl Expr {
    pub fn add_term(&mut self, c: Complex64, mut atoms: Vec<Atom>) {
        atoms.sort();
        let e = self
            .terms
            .entry(atoms)
            .or_insert((Complex64::new(0.0, 0.0), 0.0));
        e.0 += c;
        e.1 += c.norm();
    }

    pub fn add_scaled(&mut self, c: Complex64, other: &Expr, extra: Option<Atom>) {
        for (atoms, (v, _)) in &other.terms {
            let mut a = atoms.clone();
            a.extend(extra);
            self.add_term(c * v, a);
        }
    }

    /// Terms with cancelled coefficients removed.
    pub fn terms(&self) -> impl Iterator<Item = (&[Atom], Complex64)> + '_ {
        self.terms
            .iter()
            .filter(|(_, (c, mag))| c.norm() > 1e-13 * mag)
            .map(|(a, (c, _))| (a.as_slice(), *c))
    }

    pub fn coefficient(&self, atoms: &[Atom]) -> Complex64 {
        let mut key = atoms.to_vec();
        key.sort();
        self.terms()
            .find(|(a, _)| *a == key.as_slice())
            .map(|(_, c)| c)
            .unwrap_or_default()
    }

    pub fn render(&self) -> String {
        let parts: Vec<String> = self
            .terms()
            .map(|(atoms, c)| {
                let prod: Vec<String> = atoms.iter().map(|a| a.to_string()).collect();
                let body = if prod.is_empty() { "1".to_string() } else { prod.join(" ") };
                format!("({:+e}{:+e}i) {}", c.re, c.im, body)
            })
            .collect();
        if parts.is_empty() {
            "0".to_string()
        } else {
            parts.join(" + ")
        }
    }
}

/// `<m>` for a normally ordered monomial of degree at most three, with
/// third-order cumulants dropped.
pub fn expect_normal(m: &[Ladder]) -> Vec<Vec<Atom>> {
    let mu = Atom::mean_of;
    match m {
        [] => vec![vec![]],
        [x] => vec![vec![mu(*x)]],
        [x, y] => vec![vec![mu(*x), mu(*y)], vec![Atom::pair(*x, *y)]],
        [x, y, z] => vec![
            vec![mu(*x), mu(*y), mu(*z)],
            vec![mu(*x), Atom::pair(*y, *z)],
            vec![mu(*y), Atom::pair(*x, *z)],
            vec![mu(*z), Atom::pair(*x, *y)],
        ],
        _ => panic!("monomial of degree {} exceeds the closure", m.len()),
    }
}

/// Truncated expectation of an arbitrary operator polynomial.
pub fn expect(p: &OpPoly) -> Expr {
    let mut e = Expr::default();
    for (c, m) in &p.terms {
        for (c2, nm) in normal_order(m) {
            for atoms in expect_normal(&nm) {
                e.add_term(c * c2, atoms);
            }
        }
    }
    e
}

/// Product rule: time derivative of an operator product.
pub fn derivative(m: &[Ladder], params: &SystemParams, frame: f64) -> OpPoly {
    let mut out = OpPoly::default();
    for k in 0..m.len() {
        for (c, rhs) in heisenberg(m[k], params, frame).terms {
            let mut prod = m[..k].to_vec();
            prod.extend(rhs);
            prod.extend_from_slice(&m[k + 1..]);
            out.push(c, prod);
        }
    }
    out
}

/// Equation of motion of a mean, without drive.
pub fn mean_equation(x: Ladder, params: &SystemParams, frame: f64) -> Expr {
    expect(&heisenberg(x, params, frame))
}

/// Equation of motion of the cumulant of the normally ordered pair `p q`.
pub fn pair_equation(p: Ladder, q: Ladder, params: &SystemParams, frame: f64) -> Expr {
    let one = Complex64::new(1.0, 0.0);
    let mut e = expect(&derivative(&[p, q], params, frame));
    e.add_scaled(-one, &mean_equation(p, params, frame), Some(Atom::mean_of(q)));
    e.add_scaled(-one, &mean_equation(q, params, frame), Some(Atom::mean_of(p)));
    e
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_order_single_commutator() {
        // a a^+ = a^+ a + 1
        let out = normal_order(&[Ladder::ann(0), Ladder::cre(0)]);
        assert_eq!(out.len(), 2);
        assert!(out.contains(&(Complex64::new(1.0, 0.0), vec![Ladder::cre(0), Ladder::ann(0)])));
        assert!(out.contains(&(Complex64::new(1.0, 0.0), vec![])));
        // different modes commute
        let out = normal_order(&[Ladder::ann(2), Ladder::cre(0)]);
        assert_eq!(out, vec![(Complex64::new(1.0, 0.0), vec![Ladder::cre(0), Ladder::ann(2)])]);
    }

    #[test]
    fn normal_order_cubic() {
        // a a a^+ = a^+ a a + 2 a
        let out = normal_order(&[Ladder::ann(1), Ladder::ann(1), Ladder::cre(1)]);
        let linear: f64 = out.iter().filter(|(_, m)| m.len() == 1).map(|(c, _)| c.re).sum();
        assert_eq!(linear, 2.0);
        assert_eq!(out.iter().filter(|(_, m)| m.len() == 3).count(), 1);
    }

    #[test]
    fn adjoint_reverses() {
        let p = SystemParams::reference();
        let h = heisenberg(Ladder::cre(0), &p, 1.0);
        assert!(h
            .terms
            .iter()
            .any(|(c, m)| *m == vec![Ladder::cre(2), Ladder::cre(0)] && *c == Complex64::new(0.0, -p.g0)));
    }
}
