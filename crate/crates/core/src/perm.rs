//! Permutations of variable indices and the structured bin-packing
//! symmetries.
//!
//! Composition convention, used everywhere: `p.compose(&q)` is the map
//! `i -> p(q(i))`. With substitution `x[i] -> x[p(i)]` this gives
//! `h.apply(p).apply(q) == h.apply(q.compose(p))`.
//!
//! Bin-packing variables live in a column-major flattening of the
//! `(m+1) x n` matrix whose first row holds the bin-use variables `y_k`
//! and whose remaining rows hold the assignment variables `x_ik`.

use std::fmt::{self, Write as _};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binpack::SizeBoundaries;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PermError {
    #[error("permutation sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("image array is not a bijection on 0..{0}")]
    NotBijection(usize),
    #[error("index {index} out of range for {len} points")]
    OutOfRange { index: usize, len: usize },
    #[error("bin {k} is not in 2..={bins}")]
    BinOutOfRange { k: usize, bins: usize },
    #[error("size class {class} does not exist (there are {classes})")]
    NoSuchClass { class: usize, classes: usize },
    #[error("item {k} is not strictly inside size class {class} ({lo}..{hi})")]
    ItemOutsideClass {
        class: usize,
        k: usize,
        lo: usize,
        hi: usize,
    },
    #[error(
        "layout mismatch: boundaries describe {boundary_items} items, layout has {layout_items}"
    )]
    LayoutMismatch {
        boundary_items: usize,
        layout_items: usize,
    },
}

/// Anything that maps variable indices bijectively onto `0..domain_len()`.
pub trait VarMap {
    fn domain_len(&self) -> usize;
    fn image_of(&self, index: usize) -> usize;
}

/// Bijection on `0..N` stored as a dense image array.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation {
    image: Vec<u32>,
}

impl Permutation {
    pub fn identity(n: usize) -> Self {
        Self {
            image: (0..n as u32).collect(),
        }
    }

    pub fn from_image(image: Vec<usize>) -> Result<Self, PermError> {
        let n = image.len();
        let mut seen = vec![false; n];
        for &t in &image {
            if t >= n || std::mem::replace(&mut seen[t], true) {
                return Err(PermError::NotBijection(n));
            }
        }
        Ok(Self {
            image: image.into_iter().map(|t| t as u32).collect(),
        })
    }

    pub fn transposition(n: usize, a: usize, b: usize) -> Result<Self, PermError> {
        for index in [a, b] {
            if index >= n {
                return Err(PermError::OutOfRange { index, len: n });
            }
        }
        let mut p = Self::identity(n);
        p.image.swap(a, b);
        Ok(p)
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    pub fn image(&self, i: usize) -> usize {
        self.image[i] as usize
    }

    pub fn images(&self) -> impl ExactSizeIterator<Item = usize> + '_ {
        self.image.iter().map(|&t| t as usize)
    }

    pub fn is_identity(&self) -> bool {
        self.image.iter().enumerate().all(|(i, &t)| i as u32 == t)
    }

    /// `i -> self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation, PermError> {
        if self.len() != other.len() {
            return Err(PermError::SizeMismatch(self.len(), other.len()));
        }
        Ok(Permutation {
            image: other
                .image
                .iter()
                .map(|&j| self.image[j as usize])
                .collect(),
        })
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0u32; self.len()];
        for (i, &t) in self.image.iter().enumerate() {
            inv[t as usize] = i as u32;
        }
        Permutation { image: inv }
    }

    /// Points with `p(i) != i`, ascending.
    pub fn moved_points(&self) -> Vec<usize> {
        self.images()
            .enumerate()
            .filter(|&(i, t)| i != t)
            .map(|(i, _)| i)
            .collect()
    }

    /// Point action matching polynomial substitution: the result `y`
    /// satisfies `y[i] = x[p(i)]`, so `h.apply(p)` evaluated at `x` equals
    /// `h` evaluated at `p.act(x)`.
    pub fn act<T: Clone>(&self, point: &[T]) -> Vec<T> {
        self.image
            .iter()
            .map(|&t| point[t as usize].clone())
            .collect()
    }

    /// Moved points as `i -> j` lines.
    pub fn dump(&self) -> String {
        dump_moved(self)
    }
}

impl VarMap for Permutation {
    fn domain_len(&self) -> usize {
        self.len()
    }

    fn image_of(&self, index: usize) -> usize {
        self.image(index)
    }
}

fn dump_moved<M: VarMap + ?Sized>(map: &M) -> String {
    let mut out = String::new();
    for i in 0..map.domain_len() {
        let j = map.image_of(i);
        if i != j {
            let _ = writeln!(out, "{i} -> {j}");
        }
    }
    out
}

/// Shape of the bin-packing variable matrix: `items` = m, `bins` = n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VarLayout {
    pub items: usize,
    pub bins: usize,
}

/// A variable of the bin-packing model, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BpVar {
    Y { bin: usize },
    X { item: usize, bin: usize },
}

impl VarLayout {
    pub fn new(items: usize, bins: usize) -> Self {
        Self { items, bins }
    }

    pub fn rows(&self) -> usize {
        self.items + 1
    }

    pub fn num_vars(&self) -> usize {
        self.bins * self.rows()
    }

    pub fn y(&self, bin: usize) -> usize {
        debug_assert!(bin < self.bins);
        bin * self.rows()
    }

    pub fn x(&self, item: usize, bin: usize) -> usize {
        debug_assert!(item < self.items && bin < self.bins);
        bin * self.rows() + item + 1
    }

    pub fn flatten(&self, var: BpVar) -> usize {
        match var {
            BpVar::Y { bin } => self.y(bin),
            BpVar::X { item, bin } => self.x(item, bin),
        }
    }

    pub fn unflatten(&self, index: usize) -> Option<BpVar> {
        if index >= self.num_vars() {
            return None;
        }
        let (bin, row) = (index / self.rows(), index % self.rows());
        Some(match row {
            0 => BpVar::Y { bin },
            r => BpVar::X { item: r - 1, bin },
        })
    }

    pub fn is_y(&self, index: usize) -> bool {
        index.is_multiple_of(self.rows())
    }

    /// LP-style name with 1-based indices: `y_k` or `x_i_k`.
    pub fn name(&self, index: usize) -> String {
        match self.unflatten(index) {
            Some(BpVar::Y { bin }) => format!("y_{}", bin + 1),
            Some(BpVar::X { item, bin }) => format!("x_{}_{}", item + 1, bin + 1),
            None => format!("v_{index}"),
        }
    }

    pub fn y_indices(&self) -> Vec<usize> {
        (0..self.bins).map(|k| self.y(k)).collect()
    }

    pub fn x_indices(&self) -> Vec<usize> {
        (0..self.bins)
            .flat_map(|k| (0..self.items).map(move |i| (i, k)))
            .map(|(i, k)| self.x(i, k))
            .collect()
    }
}

/// `(M_tau ⊗ I_{m+1}) (I_n ⊗ diag(1, M_sigma))` stored by its two small
/// factors: a permutation of bins and a permutation of items. The two
/// factors commute, so any product of generators has this form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct KroneckerPerm {
    layout: VarLayout,
    bins: Permutation,
    items: Permutation,
}

impl KroneckerPerm {
    pub fn identity(layout: VarLayout) -> Self {
        Self {
            layout,
            bins: Permutation::identity(layout.bins),
            items: Permutation::identity(layout.items),
        }
    }

    pub fn new(
        layout: VarLayout,
        bins: Permutation,
        items: Permutation,
    ) -> Result<Self, PermError> {
        if bins.len() != layout.bins {
            return Err(PermError::SizeMismatch(bins.len(), layout.bins));
        }
        if items.len() != layout.items {
            return Err(PermError::SizeMismatch(items.len(), layout.items));
        }
        Ok(Self {
            layout,
            bins,
            items,
        })
    }

    pub fn layout(&self) -> VarLayout {
        self.layout
    }

    pub fn bin_part(&self) -> &Permutation {
        &self.bins
    }

    pub fn item_part(&self) -> &Permutation {
        &self.items
    }

    pub fn is_identity(&self) -> bool {
        self.bins.is_identity() && self.items.is_identity()
    }

    pub fn compose(&self, other: &KroneckerPerm) -> Result<KroneckerPerm, PermError> {
        if self.layout != other.layout {
            return Err(PermError::SizeMismatch(
                self.layout.num_vars(),
                other.layout.num_vars(),
            ));
        }
        Ok(KroneckerPerm {
            layout: self.layout,
            bins: self.bins.compose(&other.bins)?,
            items: self.items.compose(&other.items)?,
        })
    }

    pub fn inverse(&self) -> KroneckerPerm {
        KroneckerPerm {
            layout: self.layout,
            bins: self.bins.inverse(),
            items: self.items.inverse(),
        }
    }

    /// Right-multiplies by a generator: `self = self ∘ g`.
    fn push_generator(&mut self, g: Generator) {
        match g {
            Generator::Bin { k } => self.bins.image.swap(0, k - 1),
            Generator::Item { a, b } => self.items.image.swap(a - 1, b - 1),
        }
    }

    /// Expands to a dense permutation of all `(m+1) n` variables.
    pub fn to_permutation(&self) -> Permutation {
        let n = self.layout.num_vars();
        Permutation {
            image: (0..n).map(|i| self.image_of(i) as u32).collect(),
        }
    }

    pub fn dump(&self) -> String {
        dump_moved(self)
    }
}

impl VarMap for KroneckerPerm {
    fn domain_len(&self) -> usize {
        self.layout.num_vars()
    }

    fn image_of(&self, index: usize) -> usize {
        let rows = self.layout.rows();
        let (bin, row) = (index / rows, index % rows);
        let row = if row == 0 {
            0
        } else {
            self.items.image(row - 1) + 1
        };
        self.bins.image(bin) * rows + row
    }
}

impl fmt::Display for KroneckerPerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "bins {:?} items {:?}",
            self.bins.moved_points(),
            self.items.moved_points()
        )
    }
}

/// One transposition generator of the bin-packing symmetry subgroup, with
/// 1-based indices: `Bin { k }` swaps bin 1 with bin k, `Item { a, b }`
/// swaps items a and b of the same size class in every bin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Generator {
    Bin { k: usize },
    Item { a: usize, b: usize },
}

impl Generator {
    pub fn to_kronecker(self, layout: VarLayout) -> KroneckerPerm {
        let mut p = KroneckerPerm::identity(layout);
        p.push_generator(self);
        p
    }

    pub fn to_permutation(self, layout: VarLayout) -> Permutation {
        self.to_kronecker(layout).to_permutation()
    }
}

/// The full generator list: bin transpositions `(1 k)` for `k = 2..=n`,
/// then item transpositions `(i_j k)` for every class `j` and every
/// `i_j < k < i_{j+1}`.
pub fn generators(
    layout: VarLayout,
    boundaries: &SizeBoundaries,
) -> Result<Vec<Generator>, PermError> {
    if boundaries.items() != layout.items {
        return Err(PermError::LayoutMismatch {
            boundary_items: boundaries.items(),
            layout_items: layout.items,
        });
    }
    let mut out: Vec<Generator> = (2..=layout.bins).map(|k| Generator::Bin { k }).collect();
    for (start, end) in boundaries.classes() {
        out.extend((start + 1..end).map(|k| Generator::Item { a: start, b: k }));
    }
    Ok(out)
}

/// `M_(1 k) ⊗ I_{m+1}` as a dense permutation. `k` is 1-based, `2 <= k <= n`.
pub fn bin_transposition(layout: VarLayout, k: usize) -> Result<Permutation, PermError> {
    if k < 2 || k > layout.bins {
        return Err(PermError::BinOutOfRange {
            k,
            bins: layout.bins,
        });
    }
    Ok(Generator::Bin { k }.to_permutation(layout))
}

/// `I_n ⊗ diag(1, M_(i_j k))` as a dense permutation. `class` and `k` are
/// 1-based; `k` must lie strictly inside the class, after its first item.
pub fn item_transposition(
    layout: VarLayout,
    boundaries: &SizeBoundaries,
    class: usize,
    k: usize,
) -> Result<Permutation, PermError> {
    if boundaries.items() != layout.items {
        return Err(PermError::LayoutMismatch {
            boundary_items: boundaries.items(),
            layout_items: layout.items,
        });
    }
    let classes = boundaries.num_classes();
    if class == 0 || class > classes {
        return Err(PermError::NoSuchClass { class, classes });
    }
    let (lo, hi) = boundaries.class(class);
    if k <= lo || k >= hi {
        return Err(PermError::ItemOutsideClass { class, k, lo, hi });
    }
    Ok(Generator::Item { a: lo, b: k }.to_permutation(layout))
}

/// Product `g_1 ∘ g_2 ∘ ... ∘ g_count` of generators drawn uniformly with
/// replacement from [`generators`]. A layout without generators yields the
/// identity.
pub fn random_generator_product<R: Rng + ?Sized>(
    layout: VarLayout,
    boundaries: &SizeBoundaries,
    count: usize,
    rng: &mut R,
) -> Result<KroneckerPerm, PermError> {
    let gens = generators(layout, boundaries)?;
    Ok(product_of_random(layout, &gens, count, rng))
}

pub(crate) fn product_of_random<R: Rng + ?Sized>(
    layout: VarLayout,
    gens: &[Generator],
    count: usize,
    rng: &mut R,
) -> KroneckerPerm {
    let mut acc = KroneckerPerm::identity(layout);
    if gens.is_empty() {
        return acc;
    }
    for _ in 0..count {
        acc.push_generator(gens[rng.gen_range(0..gens.len())]);
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binpack::BinPackingInstance;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn group_axioms() {
        let p = Permutation::from_image(vec![2, 0, 3, 1]).unwrap();
        let id = Permutation::identity(4);
        assert_eq!(p.compose(&p.inverse()).unwrap(), id);
        assert_eq!(id.compose(&p).unwrap(), p);
        assert_eq!(p.compose(&id).unwrap(), p);
        assert_eq!(
            p.compose(&Permutation::identity(3)).unwrap_err(),
            PermError::SizeMismatch(4, 3)
        );
    }

    #[test]
    fn compose_matches_function_composition() {
        let s01 = Permutation::transposition(3, 0, 1).unwrap();
        let s12 = Permutation::transposition(3, 1, 2).unwrap();
        let c = s01.compose(&s12).unwrap();
        for i in 0..3 {
            assert_eq!(c.image(i), s01.image(s12.image(i)));
        }
        assert_eq!(c.images().collect::<Vec<_>>(), vec![1, 2, 0]);
    }

    #[test]
    fn from_image_rejects_non_bijections() {
        assert!(Permutation::from_image(vec![0, 0]).is_err());
        assert!(Permutation::from_image(vec![0, 2]).is_err());
    }

    #[test]
    fn layout_indices_round_trip() {
        let l = VarLayout::new(3, 4);
        assert_eq!(l.num_vars(), 16);
        assert_eq!(l.y(0), 0);
        assert_eq!(l.x(0, 0), 1);
        assert_eq!(l.y(2), 8);
        assert_eq!(l.x(2, 3), 15);
        for i in 0..l.num_vars() {
            assert_eq!(l.flatten(l.unflatten(i).unwrap()), i);
        }
        assert_eq!(l.unflatten(16), None);
        assert_eq!(l.name(0), "y_1");
        assert_eq!(l.name(15), "x_3_4");
    }

    #[test]
    fn bin_transposition_two_by_two() {
        let l = VarLayout::new(1, 2);
        let p = bin_transposition(l, 2).unwrap();
        assert_eq!(p.images().collect::<Vec<_>>(), vec![2, 3, 0, 1]);
        assert!(p.compose(&p).unwrap().is_identity());
        assert!(bin_transposition(l, 1).is_err());
        assert!(bin_transposition(l, 3).is_err());
    }

    #[test]
    fn bin_transposition_moves_whole_columns() {
        let l = VarLayout::new(3, 4);
        let p = bin_transposition(l, 3).unwrap();
        let mut ys: Vec<usize> = l.y_indices().iter().map(|&i| p.image(i)).collect();
        ys.sort_unstable();
        assert_eq!(ys, l.y_indices());
        for item in 0..3 {
            assert_eq!(p.image(l.x(item, 0)), l.x(item, 2));
        }
    }

    #[test]
    fn item_transposition_smallest_case() {
        let inst = BinPackingInstance::new(10, vec![4, 4], 1).unwrap();
        let b = inst.size_boundaries();
        let p = item_transposition(inst.layout(), &b, 1, 2).unwrap();
        assert_eq!(p.images().collect::<Vec<_>>(), vec![0, 2, 1]);
        assert!(p.compose(&p).unwrap().is_identity());
    }

    #[test]
    fn item_transposition_refuses_outside_class() {
        let inst = BinPackingInstance::new(10, vec![1, 2, 2], 2).unwrap();
        let b = inst.size_boundaries();
        // class 1 is the singleton {1}
        assert!(matches!(
            item_transposition(inst.layout(), &b, 1, 2),
            Err(PermError::ItemOutsideClass { .. })
        ));
        assert!(item_transposition(inst.layout(), &b, 2, 3).is_ok());
        assert!(matches!(
            item_transposition(inst.layout(), &b, 3, 3),
            Err(PermError::NoSuchClass { .. })
        ));
    }

    #[test]
    fn generator_list_counts() {
        let inst = BinPackingInstance::new(10, vec![1, 1, 1, 2, 3, 3], 6).unwrap();
        let gens = generators(inst.layout(), &inst.size_boundaries()).unwrap();
        // 5 bin transpositions, 2 + 0 + 1 item transpositions
        assert_eq!(gens.len(), 8);
    }

    #[test]
    fn random_product_is_deterministic() {
        let inst = BinPackingInstance::new(100, vec![49, 49, 50, 50, 50, 51], 6).unwrap();
        let b = inst.size_boundaries();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            random_generator_product(inst.layout(), &b, 50, &mut rng).unwrap()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let single = random_generator_product(inst.layout(), &b, 1, &mut rng).unwrap();
        let gens = generators(inst.layout(), &b).unwrap();
        assert!(gens.iter().any(|g| g.to_kronecker(inst.layout()) == single));
    }

    #[test]
    fn kronecker_expansion_agrees_with_composition() {
        let inst = BinPackingInstance::new(10, vec![3, 3, 3, 5], 3).unwrap();
        let l = inst.layout();
        let gens = generators(l, &inst.size_boundaries()).unwrap();
        let mut acc_k = KroneckerPerm::identity(l);
        let mut acc_p = Permutation::identity(l.num_vars());
        for g in gens.iter().cycle().take(11) {
            acc_k = acc_k.compose(&g.to_kronecker(l)).unwrap();
            acc_p = acc_p.compose(&g.to_permutation(l)).unwrap();
        }
        assert_eq!(acc_k.to_permutation(), acc_p);
        assert_eq!(acc_k.inverse().to_permutation(), acc_p.inverse());
    }

    #[test]
    fn dump_lists_moved_points() {
        let p = Permutation::transposition(4, 1, 3).unwrap();
        assert_eq!(p.dump(), "1 -> 3\n3 -> 1\n");
    }

    proptest! {
        #[test]
        fn structured_families_preserve_rows_and_commute(
            seed in any::<u64>(),
            sizes in prop::collection::vec(1u64..4, 1..6),
            bins in 1usize..5,
        ) {
            let inst = BinPackingInstance::new(10, sizes, bins).unwrap();
            let l = inst.layout();
            let gens = generators(l, &inst.size_boundaries()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = product_of_random(l, &gens, 20, &mut rng).to_permutation();
            for i in 0..l.num_vars() {
                prop_assert_eq!(l.is_y(i), l.is_y(p.image(i)));
            }
            let bin_gens: Vec<_> = gens.iter().filter(|g| matches!(g, Generator::Bin { .. })).collect();
            let item_gens: Vec<_> = gens.iter().filter(|g| matches!(g, Generator::Item { .. })).collect();
            for a in &bin_gens {
                for b in &item_gens {
                    let (a, b) = (a.to_permutation(l), b.to_permutation(l));
                    prop_assert_eq!(a.compose(&b).unwrap(), b.compose(&a).unwrap());
                }
            }
        }
    }
}
