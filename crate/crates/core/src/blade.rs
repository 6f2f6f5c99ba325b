//! Bitmask encoding of strictly increasing index subsets.
//!
//! Bit `k` set means generator `k + 1` (1-based in the mathematical notation)
//! is present, so the canonical ordering of a monomial is ascending bit order.

pub type Blade = u32;

pub const MAX_DIM: usize = 24;

pub fn grade(b: Blade) -> usize {
    b.count_ones() as usize
}

pub fn from_indices(indices: &[usize]) -> Option<Blade> {
    let mut blade: Blade = 0;
    let mut prev: Option<usize> = None;
    for &i in indices {
        if i >= MAX_DIM || prev.is_some_and(|p| p >= i) {
            return None;
        }
        blade |= 1 << i;
        prev = Some(i);
    }
    Some(blade)
}

pub fn indices(b: Blade) -> impl Iterator<Item = usize> {
    (0..MAX_DIM).filter(move |k| b & (1 << k) != 0)
}

pub fn top(dim: usize) -> Blade {
    if dim == 0 {
        0
    } else {
        (1u32 << dim) - 1
    }
}

/// Sign of `dx^a ∧ dx^b` relative to the sorted monomial, or `None` when they overlap.
pub fn wedge_sign(a: Blade, b: Blade) -> Option<i32> {
    if a & b != 0 {
        return None;
    }
    // each generator of b moves left past every larger generator of a
    let mut swaps = 0u32;
    for k in indices(b) {
        swaps += (a >> (k + 1)).count_ones();
    }
    Some(if swaps % 2 == 0 { 1 } else { -1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wedge_sign_counts_transpositions() {
        let e1 = 0b001;
        let e2 = 0b010;
        let e3 = 0b100;
        assert_eq!(wedge_sign(e1, e2), Some(1));
        assert_eq!(wedge_sign(e2, e1), Some(-1));
        assert_eq!(wedge_sign(e2 | e3, e1), Some(1));
        assert_eq!(wedge_sign(e3, e1 | e2), Some(1));
        assert_eq!(wedge_sign(e1 | e3, e2), Some(-1));
        assert_eq!(wedge_sign(e1, e1), None);
    }

    #[test]
    fn indices_roundtrip() {
        let b = from_indices(&[0, 2, 5]).unwrap();
        assert_eq!(indices(b).collect::<Vec<_>>(), vec![0, 2, 5]);
        assert!(from_indices(&[2, 1]).is_none());
        assert!(from_indices(&[1, 1]).is_none());
    }
}
