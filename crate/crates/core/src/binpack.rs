//! Bin-packing instances, the 0-1 assignment model, near half-capacity
//! benchmark generation and symmetry-group accounting.

use num_bigint::BigUint;
use num_traits::One;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{IpModel, LinearConstraint, Relation};
use crate::perm::VarLayout;
use crate::poly::Polynomial;

/// Bin capacity of the generated near half-capacity families.
pub const DEFAULT_CAPACITY: u64 = 100;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BinPackError {
    #[error("bin capacity must be positive")]
    ZeroCapacity,
    #[error("at least one bin is required")]
    NoBins,
    #[error("item size {size} is not in 1..={capacity}")]
    BadSize { size: u64, capacity: u64 },
    #[error("size interval [{lo}, {hi}] is empty or not inside [1, {capacity}]")]
    BadInterval { lo: u64, hi: u64, capacity: u64 },
    #[error("class count {class_count} does not match interval [{lo}, {hi}]")]
    ClassCountMismatch {
        class_count: usize,
        lo: u64,
        hi: u64,
    },
}

/// Items with sizes sorted ascending, `bins` identical bins of `capacity`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinPackingInstance {
    capacity: u64,
    sizes: Vec<u64>,
    bins: usize,
}

impl BinPackingInstance {
    /// Sizes are sorted ascending; item `i` of the model is the `i`-th
    /// smallest.
    pub fn new(capacity: u64, mut sizes: Vec<u64>, bins: usize) -> Result<Self, BinPackError> {
        if capacity == 0 {
            return Err(BinPackError::ZeroCapacity);
        }
        if bins == 0 {
            return Err(BinPackError::NoBins);
        }
        if let Some(&size) = sizes.iter().find(|&&s| s == 0 || s > capacity) {
            return Err(BinPackError::BadSize { size, capacity });
        }
        sizes.sort_unstable();
        Ok(Self {
            capacity,
            sizes,
            bins,
        })
    }

    pub fn capacity(&self) -> u64 {
        self.capacity
    }

    pub fn sizes(&self) -> &[u64] {
        &self.sizes
    }

    pub fn items(&self) -> usize {
        self.sizes.len()
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn layout(&self) -> VarLayout {
        VarLayout::new(self.items(), self.bins)
    }

    pub fn size_boundaries(&self) -> SizeBoundaries {
        let mut b = vec![1];
        for i in 1..self.sizes.len() {
            if self.sizes[i] != self.sizes[i - 1] {
                b.push(i + 1);
            }
        }
        if !self.sizes.is_empty() {
            b.push(self.sizes.len() + 1);
        }
        SizeBoundaries(b)
    }

    /// minimise sum y_k subject to, per bin, sum_i s_i x_ik - B y_k <= 0 and,
    /// per item, sum_k x_ik = 1; all variables binary.
    pub fn build_model(&self) -> IpModel {
        let layout = self.layout();
        let objective = Polynomial::sum_of_vars(layout.y_indices());
        let mut rows = Vec::with_capacity(self.bins + self.items());
        for k in 0..self.bins {
            let mut terms: Vec<(usize, i64)> = vec![(layout.y(k), -(self.capacity as i64))];
            terms.extend(
                self.sizes
                    .iter()
                    .enumerate()
                    .map(|(i, &s)| (layout.x(i, k), s as i64)),
            );
            rows.push(LinearConstraint::new(
                format!("cap_{}", k + 1),
                terms,
                Relation::Le,
                0,
            ));
        }
        for i in 0..self.items() {
            let terms = (0..self.bins).map(|k| (layout.x(i, k), 1)).collect();
            rows.push(LinearConstraint::new(
                format!("assign_{}", i + 1),
                terms,
                Relation::Eq,
                1,
            ));
        }
        IpModel::binary(layout.num_vars(), objective, rows)
            .expect("bin-packing rows reference layout variables only")
            .with_layout(layout)
    }

    /// Number of bins used by first-fit decreasing (an upper bound on the
    /// optimum when enough bins exist).
    pub fn first_fit_decreasing(&self) -> usize {
        let mut loads: Vec<u64> = Vec::new();
        for &s in self.sizes.iter().rev() {
            match loads.iter_mut().find(|l| **l + s <= self.capacity) {
                Some(l) => *l += s,
                None => loads.push(s),
            }
        }
        loads.len()
    }

    /// `ceil(sum s_i / B)`.
    pub fn capacity_lower_bound(&self) -> usize {
        let total: u64 = self.sizes.iter().sum();
        total.div_ceil(self.capacity) as usize
    }

    /// `n! * prod_j (i_{j+1} - i_j)!`, the order of the group generated by
    /// the bin and item transpositions.
    pub fn symmetry_group_order(&self) -> GroupOrder {
        let mut order = factorial(self.bins as u64);
        for (lo, hi) in self.size_boundaries().classes() {
            order *= factorial((hi - lo) as u64);
        }
        GroupOrder::new(order)
    }
}

fn factorial(n: u64) -> BigUint {
    (2..=n).fold(BigUint::one(), |acc, k| acc * k)
}

/// Exact group order together with its decimal logarithm.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupOrder {
    pub value: BigUint,
}

impl GroupOrder {
    fn new(value: BigUint) -> Self {
        Self { value }
    }

    pub fn log10(&self) -> f64 {
        let bits = self.value.bits();
        if bits <= 64 {
            let v: u64 = self.value.iter_u64_digits().next().unwrap_or(0);
            return (v as f64).log10();
        }
        let shift = bits - 64;
        let top: BigUint = &self.value >> shift;
        let top = top.iter_u64_digits().next().unwrap_or(0) as f64;
        top.log10() + shift as f64 * std::f64::consts::LOG10_2
    }

    /// Number of decimal digits.
    pub fn digits(&self) -> usize {
        self.value.to_str_radix(10).len()
    }
}

/// Indices `1 = i_1 < ... < i_{l+1} = m + 1` such that sizes are constant on
/// each `[i_j, i_{j+1} - 1]` (1-based, as in the group generators).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SizeBoundaries(Vec<usize>);

impl SizeBoundaries {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn items(&self) -> usize {
        self.0.last().map_or(0, |&e| e - 1)
    }

    pub fn num_classes(&self) -> usize {
        self.0.len().saturating_sub(1)
    }

    /// `(i_j, i_{j+1})` for 1-based `j`.
    pub fn class(&self, j: usize) -> (usize, usize) {
        (self.0[j - 1], self.0[j])
    }

    pub fn classes(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        self.classes().map(|(lo, hi)| hi - lo).collect()
    }

    /// 0-based cumulative form used in reports, e.g. `0, 688, 1320, 2000`.
    pub fn zero_based(&self) -> Vec<usize> {
        self.0.iter().map(|&i| i - 1).collect()
    }
}

/// Size interval `[B/2 - (c-1)/2, B/2 - (c-1)/2 + c - 1]` with exactly `c`
/// integer sizes around half capacity.
pub fn near_half_interval(class_count: usize, capacity: u64) -> Result<(u64, u64), BinPackError> {
    let half = capacity / 2;
    let spread = (class_count.saturating_sub(1) / 2) as u64;
    let lo = half.saturating_sub(spread);
    let hi = lo + class_count as u64 - 1;
    if class_count == 0 || lo == 0 || hi > capacity {
        return Err(BinPackError::BadInterval { lo, hi, capacity });
    }
    Ok((lo, hi))
}

/// Item counts of the near half-capacity families, keyed by class count.
pub fn default_items(class_count: usize) -> Option<usize> {
    match class_count {
        3 | 5 => Some(2000),
        7 => Some(1024),
        9 => Some(1000),
        _ => None,
    }
}

/// Draws `n_items` sizes uniformly from `interval` (inclusive), sorts them,
/// and uses as many bins as items.
pub fn generate_benchmark<R: Rng + ?Sized>(
    class_count: usize,
    n_items: usize,
    interval: (u64, u64),
    capacity: u64,
    rng: &mut R,
) -> Result<BinPackingInstance, BinPackError> {
    let (lo, hi) = interval;
    if lo == 0 || lo > hi || hi > capacity {
        return Err(BinPackError::BadInterval { lo, hi, capacity });
    }
    if (hi - lo + 1) as usize != class_count {
        return Err(BinPackError::ClassCountMismatch {
            class_count,
            lo,
            hi,
        });
    }
    let sizes = (0..n_items).map(|_| rng.gen_range(lo..=hi)).collect();
    BinPackingInstance::new(capacity, sizes, n_items.max(1))
}

/// On-disk instance: stable key order for reproducible diffs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub capacity: u64,
    pub sizes: Vec<u64>,
    pub bins: usize,
    pub seed: Option<u64>,
    pub interval: Option<(u64, u64)>,
    pub class_count: Option<usize>,
}

impl InstanceRecord {
    pub fn from_instance(
        inst: &BinPackingInstance,
        seed: Option<u64>,
        interval: Option<(u64, u64)>,
        class_count: Option<usize>,
    ) -> Self {
        Self {
            capacity: inst.capacity,
            sizes: inst.sizes.clone(),
            bins: inst.bins,
            seed,
            interval,
            class_count,
        }
    }

    pub fn to_instance(&self) -> Result<BinPackingInstance, BinPackError> {
        BinPackingInstance::new(self.capacity, self.sizes.clone(), self.bins)
    }

    /// Short identifier such as `c3-m2000-n2000-s1`.
    pub fn id(&self) -> String {
        let mut id = String::new();
        if let Some(c) = self.class_count {
            id.push_str(&format!("c{c}-"));
        }
        id.push_str(&format!("m{}-n{}", self.sizes.len(), self.bins));
        if let Some(s) = self.seed {
            id.push_str(&format!("-s{s}"));
        }
        id
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn model_shape() {
        let inst = BinPackingInstance::new(10, vec![5, 5], 2).unwrap();
        let m = inst.build_model();
        assert_eq!(m.num_vars(), 6);
        assert_eq!(m.constraints().len(), 4);
        assert!(m.domains().iter().all(|d| d.is_binary()));
        assert_eq!(m.objective().to_string(), "+1 x[0] +1 x[3]");
        // both items in bin 1
        assert!(m.is_feasible(&[1, 1, 1, 0, 0, 0]));
        assert!(!m.is_feasible(&[0, 1, 1, 0, 0, 0]));
    }

    #[test]
    fn boundaries() {
        let b = BinPackingInstance::new(10, vec![2, 1, 1], 1)
            .unwrap()
            .size_boundaries();
        assert_eq!(b.indices(), &[1, 3, 4]);
        assert_eq!(b.class_sizes(), vec![2, 1]);
        let b = BinPackingInstance::new(10, vec![3; 5], 1)
            .unwrap()
            .size_boundaries();
        assert_eq!(b.indices(), &[1, 6]);
        assert_eq!(b.zero_based(), vec![0, 5]);
        let mut sizes = vec![49; 688];
        sizes.extend([50; 632]);
        sizes.extend([51; 680]);
        let b = BinPackingInstance::new(100, sizes, 2000)
            .unwrap()
            .size_boundaries();
        assert_eq!(b.indices(), &[1, 689, 1321, 2001]);
        assert_eq!(b.zero_based(), vec![0, 688, 1320, 2000]);
    }

    #[test]
    fn small_group_orders() {
        let one = BinPackingInstance::new(10, vec![3], 1).unwrap();
        assert_eq!(one.symmetry_group_order().value, BigUint::from(1u32));
        let two = BinPackingInstance::new(10, vec![3, 3], 2).unwrap();
        assert_eq!(two.symmetry_group_order().value, BigUint::from(4u32));
        let mixed = BinPackingInstance::new(10, vec![1, 1, 1, 2, 2], 3).unwrap();
        assert_eq!(
            mixed.symmetry_group_order().value,
            BigUint::from(6u32 * 6 * 2)
        );
        assert!((mixed.symmetry_group_order().log10() - 72f64.log10()).abs() < 1e-12);
    }

    #[test]
    fn benchmark_generation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inst = generate_benchmark(1, 4, (50, 50), 100, &mut rng).unwrap();
        assert_eq!(inst.sizes(), &[50, 50, 50, 50]);
        assert_eq!(inst.bins(), 4);

        assert_eq!(near_half_interval(3, 100).unwrap(), (49, 51));
        assert_eq!(near_half_interval(9, 100).unwrap(), (46, 54));
        assert_eq!(default_items(7), Some(1024));

        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let inst = generate_benchmark(9, 1000, (46, 54), 100, &mut rng).unwrap();
        assert_eq!(inst.items(), 1000);
        assert!(inst.sizes().iter().all(|s| (46..=54).contains(s)));
        assert!(inst.sizes().windows(2).all(|w| w[0] <= w[1]));

        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            generate_benchmark(3, 50, (49, 51), 100, &mut rng).unwrap()
        };
        assert_eq!(draw(4), draw(4));

        assert!(generate_benchmark(3, 5, (51, 49), 100, &mut rng).is_err());
        assert!(generate_benchmark(2, 5, (49, 51), 100, &mut rng).is_err());
        assert!(generate_benchmark(1, 5, (0, 0), 100, &mut rng).is_err());
    }

    #[test]
    fn bounds_sandwich() {
        let inst = BinPackingInstance::new(10, vec![6, 6, 6], 3).unwrap();
        assert_eq!(inst.first_fit_decreasing(), 3);
        assert_eq!(inst.capacity_lower_bound(), 2);
    }

    #[test]
    fn record_round_trip() {
        let inst = BinPackingInstance::new(100, vec![50, 49], 2).unwrap();
        let rec = InstanceRecord::from_instance(&inst, Some(3), Some((49, 51)), Some(3));
        let json = serde_json::to_string(&rec).unwrap();
        assert_eq!(
            json,
            r#"{"capacity":100,"sizes":[49,50],"bins":2,"seed":3,"interval":[49,51],"class_count":3}"#
        );
        let back: InstanceRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_instance().unwrap(), inst);
        assert_eq!(back.id(), "c3-m2-n2-s3");
    }
}
