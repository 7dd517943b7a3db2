//! Sparse multivariate polynomials with integer coefficients.
//!
//! A [`Polynomial`] is kept in canonical form at all times: terms are sorted
//! by [`Monomial`] order (total degree descending, then the expanded variable
//! sequence ascending) and no stored coefficient is zero. Two polynomials are
//! therefore equal exactly when their term lists are equal.
//!
//! Variable substitution follows the unit-vector rule: a permutation that
//! sends index `i` to index `j` replaces `x[i]` by `x[j]`.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use smallvec::SmallVec;
use thiserror::Error;

use crate::perm::VarMap;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolyError {
    #[error("variable x[{var}] is outside the permutation domain of size {len}")]
    OutOfDomain { var: usize, len: usize },
    #[error("no value assigned to variable x[{0}]")]
    MissingVariable(usize),
    #[error("cannot parse polynomial: {0}")]
    Parse(String),
}

/// A power product `x[i1]^e1 * x[i2]^e2 * ...` with strictly increasing
/// variable indices and positive exponents. The empty product is `1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Monomial {
    factors: SmallVec<[(u32, u32); 2]>,
}

impl Monomial {
    pub fn one() -> Self {
        Self::default()
    }

    pub fn var(index: usize) -> Self {
        Self {
            factors: SmallVec::from_slice(&[(to_u32(index), 1)]),
        }
    }

    /// Builds a monomial from arbitrary `(var, exponent)` pairs, merging
    /// repeated variables and dropping zero exponents.
    pub fn from_factors<I>(factors: I) -> Self
    where
        I: IntoIterator<Item = (usize, u32)>,
    {
        let mut raw: SmallVec<[(u32, u32); 2]> = factors
            .into_iter()
            .filter(|&(_, e)| e > 0)
            .map(|(v, e)| (to_u32(v), e))
            .collect();
        raw.sort_unstable_by_key(|&(v, _)| v);
        let mut merged: SmallVec<[(u32, u32); 2]> = SmallVec::with_capacity(raw.len());
        for (v, e) in raw {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += e,
                _ => merged.push((v, e)),
            }
        }
        Self { factors: merged }
    }

    pub fn factors(&self) -> impl Iterator<Item = (usize, u32)> + '_ {
        self.factors.iter().map(|&(v, e)| (v as usize, e))
    }

    pub fn degree(&self) -> u32 {
        self.factors.iter().map(|&(_, e)| e).sum()
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    fn expanded(&self) -> impl Iterator<Item = u32> + '_ {
        self.factors
            .iter()
            .flat_map(|&(v, e)| std::iter::repeat_n(v, e as usize))
    }

    fn product(&self, other: &Monomial) -> Monomial {
        let mut out: SmallVec<[(u32, u32); 2]> =
            SmallVec::with_capacity(self.factors.len() + other.factors.len());
        let (mut a, mut b) = (
            self.factors.iter().peekable(),
            other.factors.iter().peekable(),
        );
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&(va, ea)), Some(&&(vb, eb))) => match va.cmp(&vb) {
                    Ordering::Less => {
                        out.push((va, ea));
                        a.next();
                    }
                    Ordering::Greater => {
                        out.push((vb, eb));
                        b.next();
                    }
                    Ordering::Equal => {
                        out.push((va, ea + eb));
                        a.next();
                        b.next();
                    }
                },
                (Some(&&f), None) => {
                    out.push(f);
                    a.next();
                }
                (None, Some(&&f)) => {
                    out.push(f);
                    b.next();
                }
                (None, None) => break,
            }
        }
        Monomial { factors: out }
    }

    /// Substitutes `x[map(i)]` for every `x[i]`. `map` must be injective on
    /// the variables of this monomial.
    fn substitute<M: VarMap + ?Sized>(&self, map: &M) -> Result<Monomial, PolyError> {
        let len = map.domain_len();
        let mut factors: SmallVec<[(u32, u32); 2]> = SmallVec::with_capacity(self.factors.len());
        for &(v, e) in &self.factors {
            let v = v as usize;
            if v >= len {
                return Err(PolyError::OutOfDomain { var: v, len });
            }
            factors.push((to_u32(map.image_of(v)), e));
        }
        factors.sort_unstable_by_key(|&(v, _)| v);
        Ok(Monomial { factors })
    }

    fn moved_by<M: VarMap + ?Sized>(&self, map: &M) -> Result<bool, PolyError> {
        let len = map.domain_len();
        for &(v, _) in &self.factors {
            let v = v as usize;
            if v >= len {
                return Err(PolyError::OutOfDomain { var: v, len });
            }
            if map.image_of(v) != v {
                return Ok(true);
            }
        }
        Ok(false)
    }
}

impl Ord for Monomial {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .degree()
            .cmp(&self.degree())
            .then_with(|| self.expanded().cmp(other.expanded()))
    }
}

impl PartialOrd for Monomial {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_one() {
            return f.write_str("1");
        }
        for (n, &(v, e)) in self.factors.iter().enumerate() {
            if n > 0 {
                f.write_str("*")?;
            }
            write!(f, "x[{v}]")?;
            if e > 1 {
                write!(f, "^{e}")?;
            }
        }
        Ok(())
    }
}

fn to_u32(index: usize) -> u32 {
    u32::try_from(index).expect("variable index exceeds u32 range")
}

/// Coarse degree classification used by the breaker filters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DegreeClass {
    Zero,
    /// Maximum total degree 0 or 1 (a nonzero constant counts as linear).
    Linear,
    HasQuadratic,
    Higher,
}

/// Sparse polynomial in canonical form. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct Polynomial {
    terms: Vec<(Monomial, i64)>,
}

impl Polynomial {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: i64) -> Self {
        Self::from_terms([(Monomial::one(), c)])
    }

    pub fn var(index: usize) -> Self {
        Self::from_terms([(Monomial::var(index), 1)])
    }

    pub fn term(monomial: Monomial, coeff: i64) -> Self {
        Self::from_terms([(monomial, coeff)])
    }

    /// Sum of the given variables, each with coefficient one.
    pub fn sum_of_vars<I: IntoIterator<Item = usize>>(vars: I) -> Self {
        Self::from_terms(vars.into_iter().map(|v| (Monomial::var(v), 1)))
    }

    /// Canonicalizes an arbitrary bag of terms: sorts, merges equal
    /// monomials, drops zero coefficients.
    pub fn from_terms<I>(terms: I) -> Self
    where
        I: IntoIterator<Item = (Monomial, i64)>,
    {
        let mut raw: Vec<(Monomial, i64)> = terms.into_iter().collect();
        raw.sort_unstable_by(|a, b| a.0.cmp(&b.0));
        let mut out: Vec<(Monomial, i64)> = Vec::with_capacity(raw.len());
        for (m, c) in raw {
            match out.last_mut() {
                Some(last) if last.0 == m => {
                    last.1 = last.1.checked_add(c).expect("coefficient overflow");
                }
                _ => {
                    if let Some(last) = out.last() {
                        if last.1 == 0 {
                            out.pop();
                        }
                    }
                    out.push((m, c));
                }
            }
        }
        if out.last().is_some_and(|t| t.1 == 0) {
            out.pop();
        }
        Self { terms: out }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Terms in canonical order.
    pub fn terms(&self) -> impl ExactSizeIterator<Item = (&Monomial, i64)> + '_ {
        self.terms.iter().map(|(m, c)| (m, *c))
    }

    pub fn coeff(&self, monomial: &Monomial) -> i64 {
        self.terms
            .binary_search_by(|(m, _)| m.cmp(monomial))
            .map(|i| self.terms[i].1)
            .unwrap_or(0)
    }

    pub fn degree(&self) -> Option<u32> {
        // canonical order puts the highest degree first
        self.terms.first().map(|(m, _)| m.degree())
    }

    pub fn classify(&self) -> DegreeClass {
        match self.degree() {
            None => DegreeClass::Zero,
            Some(0 | 1) => DegreeClass::Linear,
            Some(2) => DegreeClass::HasQuadratic,
            Some(_) => DegreeClass::Higher,
        }
    }

    /// Sorted, deduplicated variable indices occurring in the polynomial.
    pub fn variables(&self) -> Vec<usize> {
        let mut vars: Vec<usize> = self
            .terms
            .iter()
            .flat_map(|(m, _)| m.factors().map(|(v, _)| v))
            .collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    pub fn constant_term(&self) -> i64 {
        self.coeff(&Monomial::one())
    }

    pub fn scale(&self, k: i64) -> Polynomial {
        if k == 0 {
            return Polynomial::zero();
        }
        Polynomial {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c.checked_mul(k).expect("coefficient overflow")))
                .collect(),
        }
    }

    /// Replaces every `x[i]` by `x[map(i)]`.
    pub fn apply_permutation<M: VarMap + ?Sized>(&self, map: &M) -> Result<Polynomial, PolyError> {
        let mut terms = Vec::with_capacity(self.terms.len());
        for (m, c) in &self.terms {
            terms.push((m.substitute(map)?, *c));
        }
        Ok(Polynomial::from_terms(terms))
    }

    /// `self(Px) - self(x)`, computed by touching only the terms that
    /// contain a variable moved by `map`. Equal to
    /// `self.apply_permutation(map)? - self`.
    pub fn permuted_difference<M: VarMap + ?Sized>(
        &self,
        map: &M,
    ) -> Result<Polynomial, PolyError> {
        let mut terms = Vec::new();
        for (m, c) in &self.terms {
            if m.moved_by(map)? {
                terms.push((m.substitute(map)?, *c));
                terms.push((m.clone(), -*c));
            }
        }
        Ok(Polynomial::from_terms(terms))
    }

    /// Exact evaluation over the rationals. `value` supplies the value of a
    /// variable or `None` when it is unassigned.
    pub fn evaluate<F>(&self, mut value: F) -> Result<BigRational, PolyError>
    where
        F: FnMut(usize) -> Option<BigRational>,
    {
        let mut total = BigRational::zero();
        for (m, c) in &self.terms {
            let mut t = BigRational::from_integer(BigInt::from(*c));
            for (v, e) in m.factors() {
                let x = value(v).ok_or(PolyError::MissingVariable(v))?;
                t *= num_traits::pow(x, e as usize);
            }
            total += t;
        }
        Ok(total)
    }

    /// Exact evaluation at an integer point given as a dense slice.
    /// Overflow of the `i128` accumulator panics.
    pub fn evaluate_int(&self, point: &[i64]) -> Result<i128, PolyError> {
        let mut total: i128 = 0;
        for (m, c) in &self.terms {
            let mut t = *c as i128;
            for (v, e) in m.factors() {
                let x = *point.get(v).ok_or(PolyError::MissingVariable(v))? as i128;
                t = t
                    .checked_mul(x.checked_pow(e).expect("evaluation overflow"))
                    .expect("evaluation overflow");
            }
            total = total.checked_add(t).expect("evaluation overflow");
        }
        Ok(total)
    }

    fn merge_with(&self, other: &Polynomial, sign: i64) -> Polynomial {
        let mut out = Vec::with_capacity(self.terms.len() + other.terms.len());
        let (mut i, mut j) = (0, 0);
        while i < self.terms.len() && j < other.terms.len() {
            let (ma, ca) = &self.terms[i];
            let (mb, cb) = &other.terms[j];
            match ma.cmp(mb) {
                Ordering::Less => {
                    out.push((ma.clone(), *ca));
                    i += 1;
                }
                Ordering::Greater => {
                    out.push((mb.clone(), sign * cb));
                    j += 1;
                }
                Ordering::Equal => {
                    let c = ca.checked_add(sign * cb).expect("coefficient overflow");
                    if c != 0 {
                        out.push((ma.clone(), c));
                    }
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend(self.terms[i..].iter().cloned());
        out.extend(other.terms[j..].iter().map(|(m, c)| (m.clone(), sign * c)));
        Polynomial { terms: out }
    }
}

impl Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        self.merge_with(rhs, 1)
    }
}

impl Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        self.merge_with(rhs, -1)
    }
}

impl Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        self.scale(-1)
    }
}

impl Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        let mut terms = Vec::with_capacity(self.terms.len() * rhs.terms.len());
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                terms.push((
                    ma.product(mb),
                    ca.checked_mul(*cb).expect("coefficient overflow"),
                ));
            }
        }
        Polynomial::from_terms(terms)
    }
}

macro_rules! forward_owned {
    ($($tr:ident $method:ident),*) => {$(
        impl $tr for Polynomial {
            type Output = Polynomial;
            fn $method(self, rhs: Polynomial) -> Polynomial {
                (&self).$method(&rhs)
            }
        }
    )*};
}
forward_owned!(Add add, Sub sub, Mul mul);

impl Neg for Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        -&self
    }
}

/// Canonical text form, e.g. `-1 x[0]^2 +2 x[3]`. The zero polynomial
/// renders as `0`; products are joined with `*`.
impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return f.write_str("0");
        }
        for (n, (m, c)) in self.terms.iter().enumerate() {
            if n > 0 {
                f.write_str(" ")?;
            }
            if m.is_one() {
                write!(f, "{c:+}")?;
            } else {
                write!(f, "{c:+} {m}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for Polynomial {
    type Err = PolyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "0" {
            return Ok(Polynomial::zero());
        }
        let tokens: Vec<&str> = s.split_whitespace().collect();
        let mut terms = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let coeff: i64 = tokens[i]
                .parse()
                .map_err(|_| PolyError::Parse(format!("bad coefficient `{}`", tokens[i])))?;
            if !tokens[i].starts_with(['+', '-']) {
                return Err(PolyError::Parse(format!(
                    "coefficient `{}` lacks a sign",
                    tokens[i]
                )));
            }
            i += 1;
            let monomial = match tokens.get(i) {
                Some(t) if t.starts_with('x') => {
                    i += 1;
                    parse_monomial(t)?
                }
                _ => Monomial::one(),
            };
            terms.push((monomial, coeff));
        }
        Ok(Polynomial::from_terms(terms))
    }
}

fn parse_monomial(s: &str) -> Result<Monomial, PolyError> {
    let bad = || PolyError::Parse(format!("bad monomial `{s}`"));
    let mut factors = Vec::new();
    for factor in s.split('*') {
        let rest = factor.strip_prefix("x[").ok_or_else(bad)?;
        let close = rest.find(']').ok_or_else(bad)?;
        let var: usize = rest[..close].parse().map_err(|_| bad())?;
        let exp = match &rest[close + 1..] {
            "" => 1,
            tail => tail
                .strip_prefix('^')
                .and_then(|e| e.parse::<u32>().ok())
                .filter(|&e| e > 0)
                .ok_or_else(bad)?,
        };
        factors.push((var, exp));
    }
    Ok(Monomial::from_factors(factors))
}

/// Convenience for exact rationals in tests and oracles.
pub fn rational(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn rational_int(v: i64) -> BigRational {
    BigRational::from_integer(BigInt::from(v))
}

impl Polynomial {
    /// Evaluates at a dense rational point.
    pub fn evaluate_at(&self, point: &[BigRational]) -> Result<BigRational, PolyError> {
        self.evaluate(|v| point.get(v).cloned())
    }

    pub fn is_one(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].0.is_one() && self.terms[0].1.is_one()
    }
}
