//! Template-driven base polynomials and breaker families
//! `h(P x) - h(x) <= 0`.
//!
//! A template such as `x2+y` is a sum of parts; each part is either one
//! random linear form or the product of two. Every linear form has
//! coefficients in {0, 1}: a support drawn uniformly without replacement
//! from the x-variables (`x_ik`) or y-variables (`y_k`), all coefficients
//! one. All forms of one template use pairwise disjoint supports, so the
//! two factors of a square are always different polynomials.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binpack::SizeBoundaries;
use crate::model::{IpModel, ModelError};
use crate::perm::{self, KroneckerPerm, PermError, VarLayout, VarMap};
use crate::poly::{DegreeClass, PolyError, Polynomial};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BreakerError {
    #[error("cannot draw {count} distinct variables from a pool of {pool}")]
    PoolTooSmall { count: usize, pool: usize },
    #[error(
        "template {template} needs at least {needed} {pool}-variables, layout has {available}"
    )]
    LayoutTooSmall {
        template: Template,
        pool: &'static str,
        needed: usize,
        available: usize,
    },
    #[error("base polynomial is zero")]
    ZeroBase,
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("unknown size profile `{0}`")]
    UnknownProfile(String),
    #[error(transparent)]
    Poly(#[from] PolyError),
    #[error(transparent)]
    Perm(#[from] PermError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Template {
    #[serde(rename = "x")]
    X,
    #[serde(rename = "y")]
    Y,
    #[serde(rename = "x+y")]
    XPlusY,
    #[serde(rename = "x2")]
    X2,
    #[serde(rename = "y2")]
    Y2,
    #[serde(rename = "xy")]
    XY,
    #[serde(rename = "x2+y2")]
    X2PlusY2,
    #[serde(rename = "x+y2")]
    XPlusY2,
    #[serde(rename = "x2+y")]
    X2PlusY,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Category {
    Linear,
    Quadratic,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Pool {
    X,
    Y,
}

impl Pool {
    fn name(self) -> &'static str {
        match self {
            Pool::X => "x",
            Pool::Y => "y",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Part {
    Linear(Pool),
    Product(Pool, Pool),
}

impl Part {
    fn factors(self) -> &'static [usize] {
        match self {
            Part::Linear(_) => &[1],
            Part::Product(..) => &[1, 1],
        }
    }
}

impl Template {
    pub const ALL: [Template; 9] = [
        Template::X,
        Template::Y,
        Template::XPlusY,
        Template::X2,
        Template::Y2,
        Template::XY,
        Template::X2PlusY2,
        Template::XPlusY2,
        Template::X2PlusY,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Template::X => "x",
            Template::Y => "y",
            Template::XPlusY => "x+y",
            Template::X2 => "x2",
            Template::Y2 => "y2",
            Template::XY => "xy",
            Template::X2PlusY2 => "x2+y2",
            Template::XPlusY2 => "x+y2",
            Template::X2PlusY => "x2+y",
        }
    }

    pub fn category(self) -> Category {
        match self {
            Template::X | Template::Y | Template::XPlusY => Category::Linear,
            Template::X2 | Template::Y2 | Template::XY | Template::X2PlusY2 => Category::Quadratic,
            Template::XPlusY2 | Template::X2PlusY => Category::Mixed,
        }
    }

    /// Distinct variables used in the few-variables profiles.
    pub fn few_budget(self) -> usize {
        match self.category() {
            Category::Linear => 10,
            Category::Mixed => 16,
            Category::Quadratic if self == Template::X2PlusY2 => 18,
            Category::Quadratic => 9,
        }
    }

    fn parts(self) -> &'static [Part] {
        use Part::*;
        use Pool::*;
        match self {
            Template::X => &[Linear(X)],
            Template::Y => &[Linear(Y)],
            Template::XPlusY => &[Linear(X), Linear(Y)],
            Template::X2 => &[Product(X, X)],
            Template::Y2 => &[Product(Y, Y)],
            Template::XY => &[Product(X, Y)],
            Template::X2PlusY2 => &[Product(X, X), Product(Y, Y)],
            Template::XPlusY2 => &[Linear(X), Product(Y, Y)],
            Template::X2PlusY => &[Product(X, X), Linear(Y)],
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = BreakerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| BreakerError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileLabel {
    FewFew,
    FewMany,
    ManyFew,
    NumerousFew,
}

impl ProfileLabel {
    pub const ALL: [ProfileLabel; 4] = [
        ProfileLabel::FewFew,
        ProfileLabel::FewMany,
        ProfileLabel::ManyFew,
        ProfileLabel::NumerousFew,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProfileLabel::FewFew => "few_few",
            ProfileLabel::FewMany => "few_many",
            ProfileLabel::ManyFew => "many_few",
            ProfileLabel::NumerousFew => "numerous_few",
        }
    }

    fn few_variables(self) -> bool {
        matches!(self, ProfileLabel::FewFew | ProfileLabel::FewMany)
    }
}

impl fmt::Display for ProfileLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProfileLabel {
    type Err = BreakerError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProfileLabel::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| BreakerError::UnknownProfile(s.to_string()))
    }
}

/// How many variables a base polynomial touches and how many permutations
/// are applied to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SizeProfile {
    pub label: ProfileLabel,
    pub target_vars: usize,
    pub perm_count: usize,
    pub generator_product_length: usize,
}

pub const DEFAULT_PRODUCT_LENGTH: usize = 50;

impl SizeProfile {
    pub fn preset(label: ProfileLabel) -> Self {
        let (target_vars, perm_count) = match label {
            ProfileLabel::FewFew => (10, 50),
            ProfileLabel::FewMany => (10, 500),
            ProfileLabel::ManyFew => (1000, 50),
            ProfileLabel::NumerousFew => (4000, 50),
        };
        Self {
            label,
            target_vars,
            perm_count,
            generator_product_length: DEFAULT_PRODUCT_LENGTH,
        }
    }

    /// Distinct-variable budget of `template` under this profile. Few
    /// profiles use the per-template budgets (9, 10, 16, 18 at the default
    /// target of 10) scaled by `target_vars / 10`; the others use
    /// `target_vars` directly.
    pub fn budget(&self, template: Template) -> usize {
        if self.label.few_variables() {
            ((template.few_budget() * self.target_vars + 5) / 10).max(1)
        } else {
            self.target_vars.max(1)
        }
    }
}

/// Sum of `count` distinct variables drawn uniformly from `pool`.
pub fn random_linear<R: Rng + ?Sized>(
    pool: &[usize],
    count: usize,
    rng: &mut R,
) -> Result<Polynomial, BreakerError> {
    if count > pool.len() {
        return Err(BreakerError::PoolTooSmall {
            count,
            pool: pool.len(),
        });
    }
    Ok(Polynomial::sum_of_vars(
        index::sample(rng, pool.len(), count)
            .into_iter()
            .map(|i| pool[i]),
    ))
}

/// Support sizes for every linear form of `template`, in part order.
/// The budget is split near-evenly across parts (larger shares first) and
/// again across the two factors of a product; demands on a pool are then
/// trimmed, largest first, to what the layout offers.
fn factor_sizes(
    template: Template,
    budget: usize,
    layout: VarLayout,
) -> Result<Vec<(Pool, usize)>, BreakerError> {
    let parts = template.parts();
    let mut sizes = Vec::new();
    for (p, part) in parts.iter().enumerate() {
        let share = split(budget, parts.len(), p);
        let nf = part.factors().len();
        let pools = match *part {
            Part::Linear(a) => vec![a],
            Part::Product(a, b) => vec![a, b],
        };
        for (f, pool) in pools.into_iter().enumerate() {
            sizes.push((pool, split(share, nf, f).max(1)));
        }
    }
    for pool in [Pool::X, Pool::Y] {
        let available = match pool {
            Pool::X => layout.items * layout.bins,
            Pool::Y => layout.bins,
        };
        let slots: Vec<usize> = (0..sizes.len()).filter(|&i| sizes[i].0 == pool).collect();
        if slots.len() > available {
            return Err(BreakerError::LayoutTooSmall {
                template,
                pool: pool.name(),
                needed: slots.len(),
                available,
            });
        }
        loop {
            let total: usize = slots.iter().map(|&i| sizes[i].1).sum();
            if total <= available {
                break;
            }
            // first slot among the largest
            let &big = slots
                .iter()
                .rev()
                .max_by_key(|&&i| sizes[i].1)
                .expect("pool has slots when over budget");
            sizes[big].1 -= 1;
        }
    }
    Ok(sizes)
}

fn split(total: usize, parts: usize, index: usize) -> usize {
    total / parts + usize::from(index < total % parts)
}

/// Random base polynomial for `template` under `profile` on `layout`.
pub fn instantiate_template<R: Rng + ?Sized>(
    template: Template,
    profile: &SizeProfile,
    layout: VarLayout,
    rng: &mut R,
) -> Result<Polynomial, BreakerError> {
    let sizes = factor_sizes(template, profile.budget(template), layout)?;
    let x_pool = layout.x_indices();
    let y_pool = layout.y_indices();
    let mut supports: Vec<Vec<usize>> = vec![Vec::new(); sizes.len()];
    for (pool, vars) in [(Pool::X, &x_pool), (Pool::Y, &y_pool)] {
        let slots: Vec<usize> = (0..sizes.len()).filter(|&i| sizes[i].0 == pool).collect();
        let total: usize = slots.iter().map(|&i| sizes[i].1).sum();
        let mut drawn = index::sample(rng, vars.len(), total).into_iter();
        for &s in &slots {
            supports[s] = drawn.by_ref().take(sizes[s].1).map(|i| vars[i]).collect();
        }
    }
    let mut forms = supports.into_iter().map(Polynomial::sum_of_vars);
    let mut h = Polynomial::zero();
    for part in template.parts() {
        let term = match part {
            Part::Linear(_) => forms.next().expect("one form per linear part"),
            Part::Product(..) => {
                let a = forms.next().expect("two forms per product");
                let b = forms.next().expect("two forms per product");
                &a * &b
            }
        };
        h = &h + &term;
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Provenance {
    pub instance_id: String,
    pub template: Template,
    pub profile: ProfileLabel,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropCounts {
    pub kept: usize,
    pub dropped_zero: usize,
    pub dropped_linear: usize,
    pub dropped_duplicate: usize,
}

/// A retained breaker `poly = h(P x) - h(x)` with `P = perms[perm_index]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Breaker {
    pub poly: Polynomial,
    pub perm_index: usize,
}

#[derive(Debug, Clone)]
pub struct BreakerFamily<P = KroneckerPerm> {
    pub base: Polynomial,
    pub perms: Vec<P>,
    pub breakers: Vec<Breaker>,
    pub counts: DropCounts,
    pub provenance: Option<Provenance>,
}

impl<P> BreakerFamily<P> {
    pub fn polynomials(&self) -> impl ExactSizeIterator<Item = &Polynomial> + '_ {
        self.breakers.iter().map(|b| &b.poly)
    }

    pub fn is_empty(&self) -> bool {
        self.breakers.is_empty()
    }

    pub fn len(&self) -> usize {
        self.breakers.len()
    }
}

/// Builds the family `h(P_t x) - h(x)` for the given permutations, dropping
/// zero breakers, duplicates, and, when `require_quadratic` is set, every
/// breaker without a quadratic term.
pub fn family_from_perms<P: VarMap>(
    h: &Polynomial,
    perms: Vec<P>,
    require_quadratic: bool,
) -> Result<BreakerFamily<P>, BreakerError> {
    let mut counts = DropCounts::default();
    let mut seen = HashSet::new();
    let mut breakers = Vec::new();
    for (perm_index, p) in perms.iter().enumerate() {
        let g = h.permuted_difference(p)?;
        if g.is_zero() {
            counts.dropped_zero += 1;
        } else if require_quadratic && g.classify() != DegreeClass::HasQuadratic {
            counts.dropped_linear += 1;
        } else if !seen.insert(g.clone()) {
            counts.dropped_duplicate += 1;
        } else {
            breakers.push(Breaker {
                poly: g,
                perm_index,
            });
        }
    }
    counts.kept = breakers.len();
    Ok(BreakerFamily {
        base: h.clone(),
        perms,
        breakers,
        counts,
        provenance: None,
    })
}

/// Samples `profile.perm_count` independent generator products of length
/// `profile.generator_product_length` and builds the family for `h`.
/// Mixed templates keep only breakers with quadratic terms.
pub fn generate_family<R: Rng + ?Sized>(
    h: &Polynomial,
    template: Template,
    layout: VarLayout,
    boundaries: &SizeBoundaries,
    profile: &SizeProfile,
    rng: &mut R,
) -> Result<BreakerFamily, BreakerError> {
    if h.is_zero() {
        return Err(BreakerError::ZeroBase);
    }
    let gens = perm::generators(layout, boundaries)?;
    let perms = (0..profile.perm_count)
        .map(|_| perm::product_of_random(layout, &gens, profile.generator_product_length, rng))
        .collect();
    family_from_perms(h, perms, template.category() == Category::Mixed)
}

/// Adds every breaker of the family as a side constraint `g <= 0`.
pub fn attach<P>(model: &IpModel, family: &BreakerFamily<P>) -> Result<IpModel, BreakerError> {
    Ok(model.with_side_constraints(family.polynomials())?)
}
