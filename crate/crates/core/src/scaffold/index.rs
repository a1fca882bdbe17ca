//! Tournament index arithmetic: kernel counts, combination unpacking and the
//! winner recurrence that assigns players to kernels.

use serde::{Deserialize, Serialize};

use super::ScaffoldError;
use crate::primitives::PartyId;

/// Which seat of a kernel a player occupies. The left player reveals first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Side {
    Left,
    Right,
}

/// Outcome transaction indices inside a kernel.
pub const TX_A: usize = 0;
pub const TX_B: usize = 1;
pub const TX_B_PRIME: usize = 2;

/// Seat that outcome `tx` pays: TxA pays left, TxB and TxB' pay right.
pub fn winner_side(tx: usize) -> Side {
    match tx {
        TX_A => Side::Left,
        _ => Side::Right,
    }
}

/// `log2 N`, rejecting anything that is not a power of two ≥ 2.
pub fn levels_for(n: usize) -> Result<u32, ScaffoldError> {
    if n < 2 || !n.is_power_of_two() {
        return Err(ScaffoldError::NotPowerOfTwo(n));
    }
    Ok(n.trailing_zeros())
}

/// Number of matches at `level` in an `n`-player bracket.
pub fn matches_at(n: usize, level: u32) -> usize {
    n >> (level + 1)
}

/// Kernels per match in plain mode: `9^(2^level - 1)`.
pub fn kernel_count(level: u32) -> Result<u128, ScaffoldError> {
    let overflow = ScaffoldError::Overflow { level };
    let exp = 1u32
        .checked_shl(level)
        .and_then(|e| e.checked_sub(1))
        .ok_or(overflow.clone())?;
    9u128.checked_pow(exp).ok_or(overflow)
}

/// The closed form `9^level` printed alongside the recurrence. It agrees with
/// [`kernel_count`] only for levels 0 and 1.
pub fn printed_closed_form(level: u32) -> u128 {
    9u128.pow(level)
}

/// Kernels per match in multi-input mode: one per pair of candidates, `4^level`.
pub fn multiinput_kernel_count(level: u32) -> u128 {
    4u128.pow(level)
}

/// Child coordinates of a level-`level` combination index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Unpacked {
    pub left_match: usize,
    pub left_kernel: u64,
    pub left_tx: usize,
    pub right_match: usize,
    pub right_kernel: u64,
    pub right_tx: usize,
}

/// Splits combination `j` of match `(level, i)` into the child kernel and
/// outcome on each side.
pub fn unpack_index(level: u32, i: usize, j: u64) -> Result<Unpacked, ScaffoldError> {
    if level == 0 {
        return Err(ScaffoldError::IndexOutOfRange {
            level,
            match_index: i,
            combination: j,
        });
    }
    let child = kernel_count(level - 1)?;
    let radix = 3 * child;
    if (j as u128) >= radix * radix {
        return Err(ScaffoldError::IndexOutOfRange {
            level,
            match_index: i,
            combination: j,
        });
    }
    let radix = radix as u64;
    let (l, r) = (j / radix, j % radix);
    Ok(Unpacked {
        left_match: 2 * i,
        left_kernel: l / 3,
        left_tx: (l % 3) as usize,
        right_match: 2 * i + 1,
        right_kernel: r / 3,
        right_tx: (r % 3) as usize,
    })
}

/// `(left, right)` players of plain-mode kernel `(level, i, j)` in an `n`-player bracket.
pub fn players_of(
    n: usize,
    level: u32,
    i: usize,
    j: u64,
) -> Result<(PartyId, PartyId), ScaffoldError> {
    let levels = levels_for(n)?;
    let out_of_range = ScaffoldError::IndexOutOfRange {
        level,
        match_index: i,
        combination: j,
    };
    if level >= levels || i >= matches_at(n, level) {
        return Err(out_of_range);
    }
    if level == 0 {
        if j != 0 {
            return Err(out_of_range);
        }
        return Ok((2 * i, 2 * i + 1));
    }
    let u = unpack_index(level, i, j)?;
    let pick = |(l, r): (PartyId, PartyId), tx| match winner_side(tx) {
        Side::Left => l,
        Side::Right => r,
    };
    let left = pick(
        players_of(n, level - 1, u.left_match, u.left_kernel)?,
        u.left_tx,
    );
    let right = pick(
        players_of(n, level - 1, u.right_match, u.right_kernel)?,
        u.right_tx,
    );
    Ok((left, right))
}

/// `(left, right)` players of multi-input kernel `(level, i, j)`: the
/// `j / 2^level`-th player of the left half against the `j mod 2^level`-th of
/// the right half.
pub fn multiinput_players_of(
    n: usize,
    level: u32,
    i: usize,
    j: u64,
) -> Result<(PartyId, PartyId), ScaffoldError> {
    let levels = levels_for(n)?;
    let half = 1u64 << level;
    if level >= levels || i >= matches_at(n, level) || j >= half * half {
        return Err(ScaffoldError::IndexOutOfRange {
            level,
            match_index: i,
            combination: j,
        });
    }
    let base = i << (level + 1);
    Ok((
        base + (j / half) as usize,
        base + half as usize + (j % half) as usize,
    ))
}

/// Players who can win match `(level, i)`.
pub fn candidates(level: u32, i: usize) -> std::ops::Range<PartyId> {
    let base = i << (level + 1);
    base..base + (1 << (level + 1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        assert_eq!(kernel_count(0).unwrap(), 1);
        assert_eq!(kernel_count(1).unwrap(), 9);
        assert_eq!(kernel_count(2).unwrap(), 729);
        assert_eq!(kernel_count(3).unwrap(), 4_782_969);
        assert!(kernel_count(6).is_err());
    }

    #[test]
    fn printed_closed_form_breaks_from_level_two() {
        // K(l+1) = (3 K(l))^2 with K(0) = 1
        let mut k = 1u128;
        for level in 0..5 {
            assert_eq!(kernel_count(level).unwrap(), k);
            assert_eq!(printed_closed_form(level) == k, level < 2, "level {level}");
            k = (3 * k) * (3 * k);
        }
    }

    #[test]
    fn unpack_examples() {
        let u = unpack_index(1, 0, 0).unwrap();
        assert_eq!(
            (u.left_kernel, u.left_tx, u.right_kernel, u.right_tx),
            (0, 0, 0, 0)
        );
        let u = unpack_index(1, 0, 7).unwrap();
        assert_eq!(
            (u.left_kernel, u.left_tx, u.right_kernel, u.right_tx),
            (0, 2, 0, 1)
        );
        let u = unpack_index(2, 0, 80).unwrap();
        assert_eq!(
            (u.left_kernel, u.left_tx, u.right_kernel, u.right_tx),
            (0, 2, 8, 2)
        );
        assert!(unpack_index(1, 0, 9).is_err());
        assert!(unpack_index(0, 0, 0).is_err());
    }

    #[test]
    fn players_examples() {
        assert_eq!(players_of(8, 0, 3, 0).unwrap(), (6, 7));
        assert_eq!(players_of(4, 1, 0, 0).unwrap(), (0, 2));
        assert_eq!(players_of(4, 1, 0, 4).unwrap(), (1, 3));
        assert!(players_of(4, 1, 1, 0).is_err());
        assert!(players_of(4, 2, 0, 0).is_err());
        assert!(players_of(3, 0, 0, 0).is_err());
    }

    #[test]
    fn multiinput_players_cover_all_pairs() {
        let mut seen = std::collections::BTreeSet::new();
        for j in 0..16 {
            seen.insert(multiinput_players_of(8, 2, 0, j).unwrap());
        }
        let want: std::collections::BTreeSet<_> =
            (0..4).flat_map(|a| (4..8).map(move |b| (a, b))).collect();
        assert_eq!(seen, want);
    }
}
