//! Pull-based median rule: a node pulls the start-of-round values of two
//! uniformly chosen nodes and adopts the median of those and its own value.

use crate::types::Bit;

/// Median of three bits.
pub fn median3(a: Bit, b: Bit, c: Bit) -> Bit {
    if a == b {
        a
    } else {
        c
    }
}

/// New value of a node. `pulled` is `None` when an exchange failed because
/// an endpoint was blocked; the node then keeps its own value.
pub fn median_step(own: Bit, pulled: Option<(Bit, Bit)>) -> Bit {
    match pulled {
        Some((a, b)) => median3(own, a, b),
        None => own,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Bit::{One, Zero};

    #[test]
    fn examples() {
        assert_eq!(median_step(Zero, Some((Zero, One))), Zero);
        assert_eq!(median_step(One, Some((One, Zero))), One);
        assert_eq!(median_step(One, Some((Zero, Zero))), Zero);
        assert_eq!(median_step(One, None), One);
    }

    #[test]
    fn median_is_symmetric() {
        for a in [Zero, One] {
            for b in [Zero, One] {
                for c in [Zero, One] {
                    let m = median3(a, b, c);
                    assert_eq!(m, median3(b, c, a));
                    assert_eq!(m, median3(c, a, b));
                    let ones = [a, b, c].iter().filter(|&&x| x == One).count();
                    assert_eq!(m == One, ones >= 2);
                }
            }
        }
    }
}
