//! The space of optimizer hint sets.
//!
//! A hint set switches individual plan operators off before planning. Seven
//! operators are controlled, so the space holds 2^7 = 128 configurations.
//! Bit order is fixed once and everywhere: nestloop, hashjoin, mergejoin,
//! seqscan, indexscan, indexonlyscan, bitmapscan. A set bit *disables* the
//! operator; the all-zero set leaves the optimizer alone and is called the
//! default.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Number of controlled operators.
pub const HINT_COUNT: usize = 7;

/// Operator names in bit order.
pub const HINT_NAMES: [&str; HINT_COUNT] = [
    "nestloop",
    "hashjoin",
    "mergejoin",
    "seqscan",
    "indexscan",
    "indexonlyscan",
    "bitmapscan",
];

/// One hint configuration: which of the seven operators are disabled.
///
/// `Ord` compares the flag arrays lexicographically, which is exactly the
/// lexicographic order of the bitstrings, so `HintSet` can be used directly
/// wherever "smallest bitstring" tie-breaking is required.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct HintSet {
    flags: [bool; HINT_COUNT],
}

impl HintSet {
    /// The all-enabled configuration, bitstring `0000000`.
    pub const DEFAULT: HintSet = HintSet {
        flags: [false; HINT_COUNT],
    };

    pub fn from_flags(flags: [bool; HINT_COUNT]) -> Self {
        HintSet { flags }
    }

    /// Decodes a 7-bit code where bit 6 is `nestloop` (the leftmost
    /// bitstring position). Ascending codes give ascending bitstrings.
    fn from_code(code: u8) -> Self {
        let mut flags = [false; HINT_COUNT];
        for (i, flag) in flags.iter_mut().enumerate() {
            *flag = code >> (HINT_COUNT - 1 - i) & 1 == 1;
        }
        HintSet { flags }
    }

    /// Parses a bitstring such as `"0001100"`: exactly seven characters,
    /// each `0` (enabled) or `1` (disabled), leftmost is `nestloop`.
    pub fn parse_bits(s: &str) -> Result<Self, HintParseError> {
        let chars: Vec<char> = s.chars().collect();
        if chars.len() != HINT_COUNT {
            return Err(HintParseError::WrongLength { length: chars.len() });
        }
        let mut flags = [false; HINT_COUNT];
        for (i, &c) in chars.iter().enumerate() {
            flags[i] = match c {
                '0' => false,
                '1' => true,
                other => {
                    return Err(HintParseError::NonBinaryCharacter {
                        position: i,
                        character: other,
                    })
                }
            };
        }
        Ok(HintSet { flags })
    }

    pub fn format_bits(&self) -> String {
        self.flags.iter().map(|&d| if d { '1' } else { '0' }).collect()
    }

    pub fn flags(&self) -> [bool; HINT_COUNT] {
        self.flags
    }

    /// Whether the operator at `index` (bit order) is disabled.
    pub fn is_disabled(&self, index: usize) -> bool {
        self.flags[index]
    }

    pub fn disabled_count(&self) -> usize {
        self.flags.iter().filter(|&&d| d).count()
    }

    pub fn is_default(&self) -> bool {
        !self.flags.iter().any(|&d| d)
    }

    /// All 128 configurations in ascending bitstring order, starting at
    /// `0000000` and ending at `1111111`.
    pub fn enumerate_all() -> Vec<HintSet> {
        (0u8..128).map(HintSet::from_code).collect()
    }

    /// Picks the canonical representative of a non-empty candidate set: the
    /// one disabling the fewest operators, ties broken by smallest bitstring.
    pub fn canonicalize<I>(candidates: I) -> Result<HintSet, EmptyCandidateSet>
    where
        I: IntoIterator<Item = HintSet>,
    {
        candidates
            .into_iter()
            .min_by_key(|h| (h.disabled_count(), *h))
            .ok_or(EmptyCandidateSet)
    }
}

impl fmt::Display for HintSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &d in &self.flags {
            f.write_str(if d { "1" } else { "0" })?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HintParseError {
    WrongLength { length: usize },
    NonBinaryCharacter { position: usize, character: char },
}

impl fmt::Display for HintParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HintParseError::WrongLength { length } => {
                write!(f, "hint bitstring must have {HINT_COUNT} characters, got {length}")
            }
            HintParseError::NonBinaryCharacter { position, character } => {
                write!(f, "hint bitstring has non-binary character {character:?} at position {position}")
            }
        }
    }
}

impl core::error::Error for HintParseError {}

/// Canonicalization was asked to pick from zero candidates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EmptyCandidateSet;

impl fmt::Display for EmptyCandidateSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("cannot canonicalize an empty candidate set")
    }
}

impl core::error::Error for EmptyCandidateSet {}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parse_maps_positions_to_operators() {
        let h = HintSet::parse_bits("0001100").unwrap();
        assert!(!h.is_disabled(0), "nestloop stays enabled");
        assert!(h.is_disabled(3), "seqscan disabled");
        assert!(h.is_disabled(4), "indexscan disabled");
        assert!(!h.is_disabled(5));
        assert_eq!(h.disabled_count(), 2);
    }

    #[test]
    fn parse_rejects_bad_input() {
        assert_eq!(
            HintSet::parse_bits("000110"),
            Err(HintParseError::WrongLength { length: 6 })
        );
        assert_eq!(
            HintSet::parse_bits("00011000"),
            Err(HintParseError::WrongLength { length: 8 })
        );
        assert_eq!(
            HintSet::parse_bits("0001r00"),
            Err(HintParseError::NonBinaryCharacter {
                position: 4,
                character: 'r'
            })
        );
        assert_eq!(HintSet::parse_bits("").unwrap_err(), HintParseError::WrongLength { length: 0 });
    }

    #[test]
    fn default_is_all_zero() {
        assert_eq!(HintSet::DEFAULT.format_bits(), "0000000");
        assert!(HintSet::DEFAULT.is_default());
        assert_eq!(HintSet::default(), HintSet::DEFAULT);
        assert!(!HintSet::parse_bits("0000001").unwrap().is_default());
    }

    #[test]
    fn enumeration_is_complete_and_ordered() {
        let all = HintSet::enumerate_all();
        assert_eq!(all.len(), 128);
        assert_eq!(all[0].format_bits(), "0000000");
        assert_eq!(all[1].format_bits(), "0000001");
        assert_eq!(all[127].format_bits(), "1111111");
        for pair in all.windows(2) {
            assert!(pair[0] < pair[1]);
            assert!(pair[0].format_bits() < pair[1].format_bits());
        }
    }

    #[test]
    fn ord_matches_bitstring_order() {
        let a = HintSet::parse_bits("0111101").unwrap();
        let b = HintSet::parse_bits("0111110").unwrap();
        assert!(a < b);
        assert!(HintSet::DEFAULT < a);
    }

    #[test]
    fn canonicalize_prefers_fewer_disabled_then_smaller_bitstring() {
        let candidates = ["1000001", "0000011", "0100001"]
            .iter()
            .map(|s| HintSet::parse_bits(s).unwrap());
        let picked = HintSet::canonicalize(candidates).unwrap();
        assert_eq!(picked.format_bits(), "0000011");

        let tied = ["0110000", "0001010"]
            .iter()
            .map(|s| HintSet::parse_bits(s).unwrap());
        assert_eq!(HintSet::canonicalize(tied).unwrap().format_bits(), "0001010");
    }

    #[test]
    fn canonicalize_of_nothing_fails() {
        assert_eq!(HintSet::canonicalize([]), Err(EmptyCandidateSet));
    }

    #[test]
    fn canonicalize_singleton_is_identity() {
        for h in HintSet::enumerate_all() {
            assert_eq!(HintSet::canonicalize([h]).unwrap(), h);
        }
    }

    #[test]
    fn roundtrip_all_configurations() {
        for h in HintSet::enumerate_all() {
            assert_eq!(HintSet::parse_bits(&h.format_bits()).unwrap(), h);
        }
    }

    proptest! {
        #[test]
        fn canonical_pick_is_a_member_and_minimal(indices in proptest::collection::vec(0usize..128, 1..40)) {
            let all = HintSet::enumerate_all();
            let candidates: Vec<HintSet> = indices.iter().map(|&i| all[i]).collect();
            let picked = HintSet::canonicalize(candidates.iter().copied()).unwrap();
            prop_assert!(candidates.contains(&picked));
            for c in &candidates {
                let better_count = c.disabled_count() < picked.disabled_count();
                let tie_smaller = c.disabled_count() == picked.disabled_count() && c < &picked;
                prop_assert!(!better_count && !tie_smaller);
            }
        }

        #[test]
        fn canonicalize_ignores_order_and_duplicates(
            indices in proptest::collection::vec(0usize..128, 1..40),
            rotation in 0usize..40,
        ) {
            let all = HintSet::enumerate_all();
            let candidates: Vec<HintSet> = indices.iter().map(|&i| all[i]).collect();
            let mut rotated = candidates.clone();
            rotated.rotate_left(rotation % candidates.len());
            rotated.extend_from_slice(&candidates);
            prop_assert_eq!(
                HintSet::canonicalize(candidates),
                HintSet::canonicalize(rotated)
            );
        }

        #[test]
        fn default_member_always_wins(indices in proptest::collection::vec(0usize..128, 0..20)) {
            let all = HintSet::enumerate_all();
            let mut candidates: Vec<HintSet> = indices.iter().map(|&i| all[i]).collect();
            candidates.push(HintSet::DEFAULT);
            prop_assert_eq!(HintSet::canonicalize(candidates).unwrap(), HintSet::DEFAULT);
        }
    }
}
