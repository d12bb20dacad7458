//! Multimode Fock kets, sparse pure states and mixed states.
//!
//! Pure states are sparse maps from occupation tuples to complex amplitudes,
//! kept in lexicographic ket order so that every traversal (and every dense
//! matrix built from them) is deterministic. Mixed states are stored as
//! weighted ensembles of normalized pure states; a dense Hermitian matrix can
//! be produced on demand for comparisons and spectral checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Amplitudes with magnitude below this are never stored.
pub const PRUNE_TOL: f64 = 1e-15;

/// Default cap on the total photon number of a truncated space.
pub const DEFAULT_N_MAX: u32 = 4;

/// Occupation numbers over an ordered set of optical modes.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FockKet(Vec<u8>);

impl FockKet {
    pub fn new(occupations: Vec<u8>) -> Self {
        Self(occupations)
    }

    pub fn vacuum(modes: usize) -> Self {
        Self(vec![0; modes])
    }

    pub fn modes(&self) -> usize {
        self.0.len()
    }

    pub fn occupations(&self) -> &[u8] {
        &self.0
    }

    pub fn get(&self, mode: usize) -> u32 {
        u32::from(self.0[mode])
    }

    pub fn total(&self) -> u32 {
        self.0.iter().map(|&n| u32::from(n)).sum()
    }

    /// Ket on the modes of `self` followed by the modes of `other`.
    pub fn concat(&self, other: &FockKet) -> FockKet {
        let mut occ = Vec::with_capacity(self.0.len() + other.0.len());
        occ.extend_from_slice(&self.0);
        occ.extend_from_slice(&other.0);
        FockKet(occ)
    }

    /// Occupations of the listed modes, in list order.
    pub fn select(&self, modes: &[usize]) -> FockKet {
        FockKet(modes.iter().map(|&m| self.0[m]).collect())
    }

    pub fn with(&self, mode: usize, n: u32) -> FockKet {
        let mut occ = self.0.clone();
        occ[mode] = u8::try_from(n).expect("occupation exceeds u8");
        FockKet(occ)
    }
}

impl From<Vec<u8>> for FockKet {
    fn from(v: Vec<u8>) -> Self {
        Self(v)
    }
}

impl<const N: usize> From<[u8; N]> for FockKet {
    fn from(v: [u8; N]) -> Self {
        Self(v.to_vec())
    }
}

impl fmt::Debug for FockKet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for FockKet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "|")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, "⟩")
    }
}

/// Parses `"1,0;0,1"`, `"|1,0,0,1>"` or `"1 0 0 1"`; `;` is treated as a
/// visual separator only.
impl FromStr for FockKet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let trimmed = s.trim().trim_start_matches('|').trim_end_matches(['>', '⟩']);
        let occ = trimmed
            .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<u8>()
                    .map_err(|_| invalid(format!("bad occupation `{t}` in ket `{s}`")))
            })
            .collect::<Result<Vec<u8>>>()?;
        Ok(FockKet(occ))
    }
}

/// A (possibly unnormalized) pure state: sparse ket → amplitude map.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    modes: usize,
    terms: BTreeMap<FockKet, Complex64>,
}

/// Result of a truncated tensor product.
#[derive(Clone, Debug)]
pub struct Tensored {
    pub state: PureState,
    /// Squared norm carried by product kets that exceeded the photon cap.
    pub dropped_weight: f64,
}

impl PureState {
    pub fn new(modes: usize) -> Self {
        Self {
            modes,
            terms: BTreeMap::new(),
        }
    }

    pub fn vacuum(modes: usize) -> Self {
        Self::basis(FockKet::vacuum(modes))
    }

    pub fn basis(ket: FockKet) -> Self {
        let mut s = Self::new(ket.modes());
        s.add(ket, Complex64::new(1.0, 0.0));
        s
    }

    pub fn from_terms<I>(modes: usize, terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = (FockKet, Complex64)>,
    {
        let mut s = Self::new(modes);
        for (ket, amp) in terms {
            if ket.modes() != modes {
                return Err(Error::Dimension {
                    expected: modes,
                    got: ket.modes(),
                });
            }
            s.add(ket, amp);
        }
        Ok(s)
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Adds `amp` to the amplitude of `ket`, pruning the entry if the sum
    /// falls below [`PRUNE_TOL`].
    pub fn add(&mut self, ket: FockKet, amp: Complex64) {
        debug_assert_eq!(ket.modes(), self.modes);
        match self.terms.entry(ket) {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let v = *e.get() + amp;
                if v.norm() < PRUNE_TOL {
                    e.remove();
                } else {
                    *e.get_mut() = v;
                }
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                if amp.norm() >= PRUNE_TOL {
                    e.insert(amp);
                }
            }
        }
    }

    pub fn amplitude(&self, ket: &FockKet) -> Complex64 {
        self.terms.get(ket).copied().unwrap_or_default()
    }

    pub fn terms(&self) -> impl Iterator<Item = (&FockKet, &Complex64)> {
        self.terms.iter()
    }

    pub fn kets(&self) -> impl Iterator<Item = &FockKet> {
        self.terms.keys()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Rescales to unit norm and returns the previous norm. A zero state is
    /// left untouched.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            self.scale(Complex64::new(1.0 / n, 0.0));
        }
        n
    }

    pub fn normalized(mut self) -> Self {
        self.normalize();
        self
    }

    pub fn scale(&mut self, c: Complex64) {
        for a in self.terms.values_mut() {
            *a *= c;
        }
        self.terms.retain(|_, a| a.norm() >= PRUNE_TOL);
    }

    pub fn max_photons(&self) -> u32 {
        self.terms.keys().map(FockKet::total).max().unwrap_or(0)
    }

    /// ⟨self|other⟩, conjugate-linear in `self`.
    pub fn inner(&self, other: &PureState) -> Result<Complex64> {
        if self.modes != other.modes {
            return Err(Error::Dimension {
                expected: self.modes,
                got: other.modes,
            });
        }
        let (small, large, conj_small) = if self.terms.len() <= other.terms.len() {
            (self, other, true)
        } else {
            (other, self, false)
        };
        let mut acc = Complex64::default();
        for (ket, a) in &small.terms {
            if let Some(b) = large.terms.get(ket) {
                acc += if conj_small { a.conj() * b } else { b.conj() * a };
            }
        }
        Ok(acc)
    }

    /// Product state on `self.modes + other.modes` modes. Kets whose total
    /// photon number exceeds `n_max` are dropped and their weight reported.
    pub fn tensor(&self, other: &PureState, n_max: Option<u32>) -> Tensored {
        let mut state = PureState::new(self.modes + other.modes);
        let mut dropped_weight = 0.0;
        for (ka, a) in &self.terms {
            for (kb, b) in &other.terms {
                let amp = a * b;
                if n_max.is_some_and(|cap| ka.total() + kb.total() > cap) {
                    dropped_weight += amp.norm_sqr();
                } else {
                    state.add(ka.concat(kb), amp);
                }
            }
        }
        Tensored {
            state,
            dropped_weight,
        }
    }

    /// Applies a ket-wise linear map: each term is replaced by the weighted
    /// kets returned by `f`.
    pub fn map_terms<F, I>(&self, modes: usize, mut f: F) -> PureState
    where
        F: FnMut(&FockKet, Complex64) -> I,
        I: IntoIterator<Item = (FockKet, Complex64)>,
    {
        let mut out = PureState::new(modes);
        for (ket, &amp) in &self.terms {
            for (k, a) in f(ket, amp) {
                out.add(k, a);
            }
        }
        out
    }

    /// Splits the state by the occupations of `modes`: returns, for each
    /// distinct occupation tuple of those modes, the (unnormalized) state of
    /// the complementary modes. Complementary modes keep their relative order.
    pub fn split_on(&self, modes: &[usize]) -> BTreeMap<FockKet, PureState> {
        let rest: Vec<usize> = (0..self.modes).filter(|m| !modes.contains(m)).collect();
        let mut out: BTreeMap<FockKet, PureState> = BTreeMap::new();
        for (ket, &amp) in &self.terms {
            out.entry(ket.select(modes))
                .or_insert_with(|| PureState::new(rest.len()))
                .add(ket.select(&rest), amp);
        }
        out
    }
}

/// One weighted pure component of a mixed state.
#[derive(Clone, Debug)]
pub struct Member {
    pub weight: f64,
    /// Unit-norm pure state.
    pub state: PureState,
}

/// Density operator stored as a weighted ensemble of pure states.
///
/// The trace is the total weight; it is not forced to one, so conditioned
/// (sub-normalized) operators carry their probability in the trace.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    modes: usize,
    members: Vec<Member>,
}

impl DensityOperator {
    pub fn empty(modes: usize) -> Self {
        Self {
            modes,
            members: Vec::new(),
        }
    }

    /// |ψ⟩⟨ψ| for an arbitrary (possibly unnormalized) ψ.
    pub fn pure(state: PureState) -> Self {
        let mut rho = Self::empty(state.modes());
        rho.push_unnormalized(1.0, state);
        rho
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn members(&self) -> &[Member] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Adds `weight · |ψ⟩⟨ψ|` where ψ need not be normalized.
    pub fn push_unnormalized(&mut self, weight: f64, mut state: PureState) {
        debug_assert_eq!(state.modes(), self.modes);
        let n2 = state.norm_sqr();
        let w = weight * n2;
        if w > 0.0 && n2 > 0.0 {
            state.scale(Complex64::new(1.0 / n2.sqrt(), 0.0));
            self.members.push(Member { weight: w, state });
        }
    }

    pub fn trace(&self) -> f64 {
        self.members.iter().map(|m| m.weight).sum()
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        for m in &mut self.members {
            m.weight *= factor;
        }
        self.members.retain(|m| m.weight > 0.0);
        self
    }

    /// Unit-trace copy, or `None` for the zero operator.
    pub fn normalized(&self) -> Option<Self> {
        let tr = self.trace();
        (tr > 0.0).then(|| self.clone().scaled(1.0 / tr))
    }

    /// Appends the members of `other` (operator sum).
    pub fn absorb(&mut self, other: DensityOperator) -> Result<()> {
        if other.modes != self.modes {
            return Err(Error::Dimension {
                expected: self.modes,
                got: other.modes,
            });
        }
        self.members.extend(other.members);
        Ok(())
    }

    /// ⟨t|ρ|t⟩.
    pub fn fidelity_pure(&self, target: &PureState) -> Result<f64> {
        if target.modes() != self.modes {
            return Err(Error::Dimension {
                expected: self.modes,
                got: target.modes(),
            });
        }
        let mut acc = 0.0;
        for m in &self.members {
            acc += m.weight * target.inner(&m.state)?.norm_sqr();
        }
        Ok(acc)
    }

    /// Σ_members w Σ_kets |a|² f(ket): expectation of a Fock-diagonal
    /// observable.
    pub fn diagonal_expectation(&self, mut f: impl FnMut(&FockKet) -> f64) -> f64 {
        let mut acc = 0.0;
        for m in &self.members {
            let inner: f64 = m.state.terms().map(|(k, a)| a.norm_sqr() * f(k)).sum();
            acc += m.weight * inner;
        }
        acc
    }

    /// Applies a pure-state map to every member, renormalizing as needed.
    pub fn map_states<F>(&self, modes: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&PureState) -> Result<PureState>,
    {
        let mut out = Self::empty(modes);
        for m in &self.members {
            out.push_unnormalized(m.weight, f(&m.state)?);
        }
        Ok(out)
    }

    /// Keeps only the kets accepted by `keep` (a Fock-diagonal projector).
    /// The result is sub-normalized by the rejected weight.
    pub fn project(&self, mut keep: impl FnMut(&FockKet) -> bool) -> Self {
        let mut out = Self::empty(self.modes);
        for m in &self.members {
            let s = PureState {
                modes: self.modes,
                terms: m
                    .state
                    .terms
                    .iter()
                    .filter(|(k, _)| keep(k))
                    .map(|(k, a)| (k.clone(), *a))
                    .collect(),
            };
            out.push_unnormalized(m.weight, s);
        }
        out
    }

    /// Reduced operator on `keep` (in the listed order). Tracing out every
    /// mode yields a 0-mode operator whose trace is the original trace.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        check_mode_list(keep, self.modes)?;
        let traced: Vec<usize> = (0..self.modes).filter(|m| !keep.contains(m)).collect();
        let mut out = Self::empty(keep.len());
        for m in &self.members {
            let mut groups: BTreeMap<FockKet, PureState> = BTreeMap::new();
            for (ket, &amp) in &m.state.terms {
                groups
                    .entry(ket.select(&traced))
                    .or_insert_with(|| PureState::new(keep.len()))
                    .add(ket.select(keep), amp);
            }
            for (_, s) in groups {
                out.push_unnormalized(m.weight, s);
            }
        }
        Ok(out)
    }

    /// All kets with support in any member, sorted lexicographically.
    pub fn support(&self) -> Vec<FockKet> {
        let set: BTreeSet<&FockKet> = self.members.iter().flat_map(|m| m.state.kets()).collect();
        set.into_iter().cloned().collect()
    }

    pub fn to_dense(&self) -> DenseOperator {
        self.to_dense_in(self.support())
    }

    /// Dense matrix in the given basis; support outside the basis is ignored.
    pub fn to_dense_in(&self, basis: Vec<FockKet>) -> DenseOperator {
        let index: BTreeMap<&FockKet, usize> =
            basis.iter().enumerate().map(|(i, k)| (k, i)).collect();
        let d = basis.len();
        let mut matrix = DMatrix::<Complex64>::zeros(d, d);
        for m in &self.members {
            let entries: Vec<(usize, Complex64)> = m
                .state
                .terms()
                .filter_map(|(k, a)| index.get(k).map(|&i| (i, *a)))
                .collect();
            for &(i, a) in &entries {
                for &(j, b) in &entries {
                    matrix[(i, j)] += a * b.conj() * m.weight;
                }
            }
        }
        DenseOperator {
            modes: self.modes,
            basis,
            matrix,
        }
    }
}

pub(crate) fn check_mode_list(list: &[usize], modes: usize) -> Result<()> {
    let mut seen = BTreeSet::new();
    for &m in list {
        if m >= modes {
            return Err(Error::ModeOutOfRange { mode: m, modes });
        }
        if !seen.insert(m) {
            return Err(Error::OverlappingModes(list.to_vec()));
        }
    }
    Ok(())
}

/// Dense Hermitian matrix over an explicit, lexicographically ordered basis.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    pub modes: usize,
    pub basis: Vec<FockKet>,
    pub matrix: DMatrix<Complex64>,
}

impl DenseOperator {
    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        let adj = self.matrix.adjoint();
        (&self.matrix - adj).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        if self.basis.is_empty() {
            return Vec::new();
        }
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        let mut ev: Vec<f64> = h.symmetric_eigenvalues().iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        ev
    }

    /// Largest entrywise deviation from `other`, compared over the union of
    /// both bases.
    pub fn max_abs_diff(&self, other: &DenseOperator) -> f64 {
        let basis: BTreeSet<FockKet> = self.basis.iter().chain(&other.basis).cloned().collect();
        let basis: Vec<FockKet> = basis.into_iter().collect();
        let a = self.reindex(&basis);
        let b = other.reindex(&basis);
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    fn reindex(&self, basis: &[FockKet]) -> DMatrix<Complex64> {
        let pos: BTreeMap<&FockKet, usize> =
            basis.iter().enumerate().map(|(i, k)| (k, i)).collect();
        let mut m = DMatrix::zeros(basis.len(), basis.len());
        for (i, ki) in self.basis.iter().enumerate() {
            for (j, kj) in self.basis.iter().enumerate() {
                m[(pos[ki], pos[kj])] = self.matrix[(i, j)];
            }
        }
        m
    }
}

// --- JSON wire format -------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct TermJson {
    ket: FockKet,
    re: f64,
    im: f64,
}

#[derive(Serialize, Deserialize)]
struct PureJson {
    modes: usize,
    terms: Vec<TermJson>,
}

impl Serialize for PureState {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        PureJson {
            modes: self.modes,
            terms: self
                .terms
                .iter()
                .map(|(k, a)| TermJson {
                    ket: k.clone(),
                    re: a.re,
                    im: a.im,
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PureState {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = PureJson::deserialize(d)?;
        PureState::from_terms(
            raw.modes,
            raw.terms
                .into_iter()
                .map(|t| (t.ket, Complex64::new(t.re, t.im))),
        )
        .map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct MemberJson {
    weight: f64,
    terms: Vec<TermJson>,
}

#[derive(Serialize, Deserialize)]
struct EnsembleJson {
    modes: usize,
    members: Vec<MemberJson>,
}

impl Serialize for DensityOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        EnsembleJson {
            modes: self.modes,
            members: self
                .members
                .iter()
                .map(|m| MemberJson {
                    weight: m.weight,
                    terms: m
                        .state
                        .terms()
                        .map(|(k, a)| TermJson {
                            ket: k.clone(),
                            re: a.re,
                            im: a.im,
                        })
                        .collect(),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DensityOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = EnsembleJson::deserialize(d)?;
        let mut rho = DensityOperator::empty(raw.modes);
        for m in raw.members {
            let s = PureState::from_terms(
                raw.modes,
                m.terms
                    .into_iter()
                    .map(|t| (t.ket, Complex64::new(t.re, t.im))),
            )
            .map_err(serde::de::Error::custom)?;
            rho.push_unnormalized(m.weight, s);
        }
        Ok(rho)
    }
}

#[derive(Serialize, Deserialize)]
struct DenseJson {
    modes: usize,
    basis: Vec<FockKet>,
    /// Row-major `[re, im]` pairs.
    data: Vec<[f64; 2]>,
}

impl Serialize for DenseOperator {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let d = self.basis.len();
        let mut data = Vec::with_capacity(d * d);
        for i in 0..d {
            for j in 0..d {
                let z = self.matrix[(i, j)];
                data.push([z.re, z.im]);
            }
        }
        DenseJson {
            modes: self.modes,
            basis: self.basis.clone(),
            data,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for DenseOperator {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = DenseJson::deserialize(d)?;
        let n = raw.basis.len();
        if raw.data.len() != n * n {
            return Err(serde::de::Error::custom(format!(
                "dense operator needs {} entries, got {}",
                n * n,
                raw.data.len()
            )));
        }
        let matrix = DMatrix::from_row_iterator(
            n,
            n,
            raw.data.iter().map(|&[re, im]| Complex64::new(re, im)),
        );
        Ok(DenseOperator {
            modes: raw.modes,
            basis: raw.basis,
            matrix,
        })
    }
}
