//! Integer programs: linear objective and rows, finite variable domains, and
//! polynomial side constraints `p(x) <= 0`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::perm::VarLayout;
use crate::poly::Polynomial;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("variable {var} out of range for a model with {num_vars} variables")]
    VarOutOfRange { var: usize, num_vars: usize },
    #[error("domain list has {got} entries, expected {expected}")]
    DomainCount { got: usize, expected: usize },
    #[error("variable {0} has an empty domain")]
    EmptyDomain(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Relation {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Relation::Le => "<=",
            Relation::Eq => "=",
            Relation::Ge => ">=",
        })
    }
}

/// `sum(coeff * x[var]) <relation> rhs`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LinearConstraint {
    pub name: String,
    pub terms: Vec<(usize, i64)>,
    pub relation: Relation,
    pub rhs: i64,
}

impl LinearConstraint {
    pub fn new(
        name: impl Into<String>,
        terms: Vec<(usize, i64)>,
        relation: Relation,
        rhs: i64,
    ) -> Self {
        Self {
            name: name.into(),
            terms,
            relation,
            rhs,
        }
    }

    pub fn activity(&self, point: &[i64]) -> i128 {
        self.terms
            .iter()
            .map(|&(v, a)| a as i128 * point[v] as i128)
            .sum()
    }

    pub fn is_satisfied(&self, point: &[i64]) -> bool {
        let act = self.activity(point);
        let rhs = self.rhs as i128;
        match self.relation {
            Relation::Le => act <= rhs,
            Relation::Eq => act == rhs,
            Relation::Ge => act >= rhs,
        }
    }
}

/// Finite sorted set of admissible integer values.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Domain(Vec<i64>);

impl Domain {
    pub fn new(mut values: Vec<i64>) -> Self {
        values.sort_unstable();
        values.dedup();
        Domain(values)
    }

    pub fn binary() -> Self {
        Domain(vec![0, 1])
    }

    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub fn is_binary(&self) -> bool {
        self.0 == [0, 1]
    }
}

/// minimise `objective` subject to the linear rows, `x[i]` in
/// `domains[i]`, and `p(x) <= 0` for every side constraint `p`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IpModel {
    num_vars: usize,
    objective: Polynomial,
    constraints: Vec<LinearConstraint>,
    domains: Vec<Domain>,
    side_constraints: Vec<Polynomial>,
    layout: Option<VarLayout>,
}

impl IpModel {
    pub fn new(
        num_vars: usize,
        objective: Polynomial,
        constraints: Vec<LinearConstraint>,
        domains: Vec<Domain>,
    ) -> Result<Self, ModelError> {
        if domains.len() != num_vars {
            return Err(ModelError::DomainCount {
                got: domains.len(),
                expected: num_vars,
            });
        }
        if let Some(i) = domains.iter().position(|d| d.values().is_empty()) {
            return Err(ModelError::EmptyDomain(i));
        }
        let check = |var: usize| {
            if var < num_vars {
                Ok(())
            } else {
                Err(ModelError::VarOutOfRange { var, num_vars })
            }
        };
        for v in objective.variables() {
            check(v)?;
        }
        for c in &constraints {
            for &(v, _) in &c.terms {
                check(v)?;
            }
        }
        Ok(Self {
            num_vars,
            objective,
            constraints,
            domains,
            side_constraints: Vec::new(),
            layout: None,
        })
    }

    pub fn binary(
        num_vars: usize,
        objective: Polynomial,
        constraints: Vec<LinearConstraint>,
    ) -> Result<Self, ModelError> {
        Self::new(
            num_vars,
            objective,
            constraints,
            vec![Domain::binary(); num_vars],
        )
    }

    /// Attaches a bin-packing layout used for variable naming.
    pub fn with_layout(mut self, layout: VarLayout) -> Self {
        debug_assert_eq!(layout.num_vars(), self.num_vars);
        self.layout = Some(layout);
        self
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn objective(&self) -> &Polynomial {
        &self.objective
    }

    pub fn constraints(&self) -> &[LinearConstraint] {
        &self.constraints
    }

    pub fn domains(&self) -> &[Domain] {
        &self.domains
    }

    pub fn side_constraints(&self) -> &[Polynomial] {
        &self.side_constraints
    }

    pub fn layout(&self) -> Option<VarLayout> {
        self.layout
    }

    pub fn var_name(&self, index: usize) -> String {
        match self.layout {
            Some(l) => l.name(index),
            None => format!("v_{index}"),
        }
    }

    /// Returns a copy with the given polynomials added as `p <= 0`.
    /// Zero polynomials and polynomials already present are skipped.
    pub fn with_side_constraints<'a, I>(&self, extra: I) -> Result<IpModel, ModelError>
    where
        I: IntoIterator<Item = &'a Polynomial>,
    {
        let mut out = self.clone();
        for p in extra {
            if p.is_zero() || out.side_constraints.contains(p) {
                continue;
            }
            if let Some(&v) = p.variables().last() {
                if v >= self.num_vars {
                    return Err(ModelError::VarOutOfRange {
                        var: v,
                        num_vars: self.num_vars,
                    });
                }
            }
            out.side_constraints.push(p.clone());
        }
        Ok(out)
    }

    /// Same model without side constraints.
    pub fn base(&self) -> IpModel {
        IpModel {
            side_constraints: Vec::new(),
            ..self.clone()
        }
    }

    pub fn objective_value(&self, point: &[i64]) -> i128 {
        self.objective
            .evaluate_int(point)
            .expect("objective variables are in range")
    }

    pub fn in_domain(&self, point: &[i64]) -> bool {
        point.len() == self.num_vars
            && point
                .iter()
                .zip(&self.domains)
                .all(|(v, d)| d.values().binary_search(v).is_ok())
    }

    pub fn satisfies_linear(&self, point: &[i64]) -> bool {
        self.constraints.iter().all(|c| c.is_satisfied(point))
    }

    pub fn satisfies_side(&self, point: &[i64]) -> bool {
        self.side_constraints.iter().all(|p| {
            p.evaluate_int(point)
                .expect("side constraint variables are in range")
                <= 0
        })
    }

    pub fn is_feasible(&self, point: &[i64]) -> bool {
        self.in_domain(point) && self.satisfies_linear(point) && self.satisfies_side(point)
    }

    /// minimise x + y s.t. x + y >= 1, x, y binary.
    pub fn two_variable_example() -> IpModel {
        let objective = &Polynomial::var(0) + &Polynomial::var(1);
        IpModel::binary(
            2,
            objective,
            vec![LinearConstraint::new(
                "cover",
                vec![(0, 1), (1, 1)],
                Relation::Ge,
                1,
            )],
        )
        .expect("well-formed example")
    }
}
