//! Helpers shared by the integration tests, including a minimal LP reader
//! that knows nothing about how the writer orders or names things.

#![allow(dead_code)]

use std::collections::HashMap;

use polybreak::model::{Domain, IpModel, LinearConstraint, Relation};
use polybreak::poly::{Monomial, Polynomial};
use polybreak::BinPackingInstance;
use rand::Rng;

#[derive(Debug)]
pub struct ParsedLp {
    pub model: IpModel,
    pub names: Vec<String>,
    pub linear_rows: usize,
    pub quadratic_rows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Section {
    None,
    Objective,
    Constraints,
    Bounds,
    General,
    Binary,
}

fn section_of(line: &str) -> Option<Section> {
    match line.trim().to_ascii_lowercase().as_str() {
        "minimize" | "minimise" | "min" => Some(Section::Objective),
        "subject to" | "st" | "s.t." => Some(Section::Constraints),
        "bounds" => Some(Section::Bounds),
        "general" | "generals" => Some(Section::General),
        "binary" | "binaries" => Some(Section::Binary),
        "end" => Some(Section::None),
        _ => None,
    }
}

/// Expression tokens into (coefficient, variable names) terms and a constant.
fn parse_expr(tokens: &[&str]) -> (Vec<(i64, Vec<String>)>, i64) {
    let mut terms: Vec<(i64, Vec<String>)> = Vec::new();
    let mut constant = 0i64;
    let mut sign = 1i64;
    let mut coeff: Option<i64> = None;
    let mut i = 0;
    while i < tokens.len() {
        let t = tokens[i];
        match t {
            "[" | "]" => {}
            "+" => sign = 1,
            "-" => sign = -1,
            "*" => {
                i += 1;
                terms
                    .last_mut()
                    .expect("factor after a term")
                    .1
                    .push(tokens[i].to_string());
            }
            "^" => {
                i += 1;
                let e: usize = tokens[i].parse().expect("integer exponent");
                let last = terms.last_mut().expect("power after a term");
                let v = last.1.last().expect("variable").clone();
                for _ in 1..e {
                    last.1.push(v.clone());
                }
            }
            _ => {
                if let Ok(n) = t.parse::<i64>() {
                    let next_is_var = tokens.get(i + 1).is_some_and(|n| {
                        n.parse::<i64>().is_err() && !["+", "-", "[", "]"].contains(n)
                    });
                    if next_is_var {
                        coeff = Some(n);
                    } else {
                        constant += sign * n;
                        sign = 1;
                    }
                } else {
                    terms.push((sign * coeff.unwrap_or(1), vec![t.to_string()]));
                    sign = 1;
                    coeff = None;
                }
            }
        }
        i += 1;
    }
    (terms, constant)
}

/// Reads LP text: a linear objective, linear or bracketed quadratic rows,
/// and Binary/General declarations. Continuation lines start with a space.
pub fn read_lp(text: &str) -> ParsedLp {
    let mut statements: Vec<(Section, String)> = Vec::new();
    let mut section = Section::None;
    for line in text.lines() {
        if line.starts_with(' ') {
            statements
                .last_mut()
                .expect("continuation follows a line")
                .1
                .push_str(line);
            continue;
        }
        if let Some(s) = section_of(line) {
            section = s;
            continue;
        }
        statements.push((section, line.to_string()));
    }

    let mut names: Vec<String> = Vec::new();
    let mut general = Vec::new();
    for (s, text) in &statements {
        match s {
            Section::Binary => names.extend(text.split_whitespace().map(String::from)),
            Section::General => general.extend(text.split_whitespace().map(String::from)),
            _ => {}
        }
    }
    let binary_count = names.len();
    names.extend(general.iter().cloned());
    let index: HashMap<&str, usize> = names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let mut bounds: HashMap<usize, (i64, i64)> = HashMap::new();

    let to_poly = |terms: Vec<(i64, Vec<String>)>, constant: i64| {
        let terms = terms.into_iter().map(|(c, vars)| {
            let factors = vars
                .iter()
                .map(|v| (index[v.as_str()], 1u32))
                .collect::<Vec<_>>();
            (Monomial::from_factors(factors), c)
        });
        Polynomial::from_terms(terms.chain(std::iter::once((Monomial::one(), constant))))
    };

    let mut objective = Polynomial::zero();
    let mut rows = Vec::new();
    let mut side = Vec::new();
    let mut quadratic_rows = 0;
    for (s, text) in &statements {
        let body = match text.split_once(':') {
            Some((_, rest)) => rest,
            None => text.as_str(),
        };
        let tokens: Vec<&str> = body.split_whitespace().collect();
        match s {
            Section::Objective => {
                let (terms, constant) = parse_expr(&tokens);
                objective = to_poly(terms, constant);
            }
            Section::Constraints => {
                let at = tokens
                    .iter()
                    .position(|t| ["<=", ">=", "=", "<", ">", "=<", "=>"].contains(t))
                    .expect("relation");
                let relation = match tokens[at] {
                    "<=" | "<" | "=<" => Relation::Le,
                    ">=" | ">" | "=>" => Relation::Ge,
                    _ => Relation::Eq,
                };
                let (rhs_terms, rhs_const) = parse_expr(&tokens[at + 1..]);
                assert!(rhs_terms.is_empty(), "variables on the right-hand side");
                let (terms, constant) = parse_expr(&tokens[..at]);
                let quadratic = terms.iter().any(|(_, v)| v.len() > 1);
                if quadratic {
                    assert_eq!(relation, Relation::Le, "quadratic rows must be <=");
                    quadratic_rows += 1;
                    side.push(to_poly(terms, constant - rhs_const));
                } else {
                    let mut coeffs: HashMap<usize, i64> = HashMap::new();
                    for (c, v) in terms {
                        *coeffs.entry(index[v[0].as_str()]).or_default() += c;
                    }
                    let mut coeffs: Vec<(usize, i64)> =
                        coeffs.into_iter().filter(|&(_, c)| c != 0).collect();
                    coeffs.sort_unstable();
                    rows.push(LinearConstraint::new(
                        "r",
                        coeffs,
                        relation,
                        rhs_const - constant,
                    ));
                }
            }
            Section::Bounds => {
                let t: Vec<&str> = text.split_whitespace().collect();
                if let [lo, "<=", name, "<=", hi] = t[..] {
                    bounds.insert(index[name], (lo.parse().unwrap(), hi.parse().unwrap()));
                }
            }
            _ => {}
        }
    }
    let domains = (0..names.len())
        .map(|i| {
            if i < binary_count {
                Domain::binary()
            } else {
                let (lo, hi) = bounds.get(&i).copied().unwrap_or((0, 0));
                Domain::new((lo..=hi).collect())
            }
        })
        .collect();
    let linear_rows = rows.len();
    let model = IpModel::new(names.len(), objective, rows, domains)
        .expect("well-formed LP")
        .with_side_constraints(&side)
        .expect("side constraints in range");
    ParsedLp {
        model,
        names,
        linear_rows,
        quadratic_rows,
    }
}

/// A small random bin-packing instance with `items` items of size
/// `1..=max_size` and `bins` bins of capacity `capacity`.
pub fn random_instance<R: Rng>(
    rng: &mut R,
    items: usize,
    bins: usize,
    capacity: u64,
    max_size: u64,
) -> BinPackingInstance {
    let sizes = (0..items)
        .map(|_| rng.gen_range(1..=max_size.min(capacity)))
        .collect();
    BinPackingInstance::new(capacity, sizes, bins).expect("valid instance")
}
