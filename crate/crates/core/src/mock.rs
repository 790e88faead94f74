//! Mock input generation following the per-type sampling criteria: integers
//! on [0, 999], lists of length 16..=64, strings drawn from one of four
//! character classes (digits, letters, spaces, or a mixture).

use rand::seq::IndexedRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::seed::Rng;
use crate::value::{Value, ValueType};

const DIGITS: &[u8] = b"0123456789";
const LETTERS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ";
const SPACES: &[u8] = b" ";
const MIXTURE: &[u8] = b"0123456789abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ ";

/// Character class a mock string is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CharClass {
    Digits,
    Letters,
    Spaces,
    Mixture,
}

impl CharClass {
    pub const ALL: [CharClass; 4] = [CharClass::Digits, CharClass::Letters, CharClass::Spaces, CharClass::Mixture];

    pub fn alphabet(self) -> &'static [u8] {
        match self {
            CharClass::Digits => DIGITS,
            CharClass::Letters => LETTERS,
            CharClass::Spaces => SPACES,
            CharClass::Mixture => MIXTURE,
        }
    }
}

/// Sampling bounds. Defaults reproduce the published criteria; string
/// length is not published and defaults to 1..=32.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct MockConfig {
    pub int_min: i64,
    pub int_max: i64,
    pub list_len_min: usize,
    pub list_len_max: usize,
    pub str_len_min: usize,
    pub str_len_max: usize,
    /// Number of input sets mocked per candidate.
    pub k: usize,
    /// Re-draws allowed per value when it collides with an earlier one.
    pub redraw_budget: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            int_min: 0,
            int_max: 999,
            list_len_min: 16,
            list_len_max: 64,
            str_len_min: 1,
            str_len_max: 32,
            k: 10,
            redraw_budget: 20,
        }
    }
}

/// `k` mocked inputs of one type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockSet {
    pub vtype: ValueType,
    pub values: Vec<Value>,
    pub seed: u64,
}

impl MockSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Draws a string, returning the class it came from.
pub fn mock_string(rng: &mut Rng, cfg: &MockConfig) -> (CharClass, String) {
    let class = *CharClass::ALL.choose(rng).expect("non-empty");
    let len = rng.random_range(cfg.str_len_min..=cfg.str_len_max);
    let alphabet = class.alphabet();
    let s = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())] as char).collect();
    (class, s)
}

fn mock_int(rng: &mut Rng, cfg: &MockConfig) -> i64 {
    rng.random_range(cfg.int_min..=cfg.int_max)
}

pub fn mock_value(t: ValueType, rng: &mut Rng, cfg: &MockConfig) -> Value {
    match t {
        ValueType::Int => Value::Int(mock_int(rng, cfg)),
        ValueType::Str => Value::Str(mock_string(rng, cfg).1),
        ValueType::ListInt => {
            let len = rng.random_range(cfg.list_len_min..=cfg.list_len_max);
            Value::ListInt((0..len).map(|_| mock_int(rng, cfg)).collect())
        }
        ValueType::ListStr => {
            let len = rng.random_range(cfg.list_len_min..=cfg.list_len_max);
            Value::ListStr((0..len).map(|_| mock_string(rng, cfg).1).collect())
        }
    }
}

/// Mocks `k` inputs of type `t`, re-drawing collisions up to the budget.
pub fn mock_input_sets(t: ValueType, k: usize, seed: u64, cfg: &MockConfig) -> MockSet {
    assert!(k >= 1, "k must be at least 1");
    let mut rng = crate::seed::rng(seed);
    let mut values: Vec<Value> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v = mock_value(t, &mut rng, cfg);
        let mut redraws = 0;
        while values.contains(&v) && redraws < cfg.redraw_budget {
            v = mock_value(t, &mut rng, cfg);
            redraws += 1;
        }
        values.push(v);
    }
    MockSet { vtype: t, values, seed }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng;
    use std::collections::HashMap;

    fn in_bounds(v: &Value, cfg: &MockConfig) -> bool {
        let int_ok = |i: &i64| (cfg.int_min..=cfg.int_max).contains(i);
        let len_ok = |n: usize| (cfg.list_len_min..=cfg.list_len_max).contains(&n);
        let str_ok = |s: &String| {
            (cfg.str_len_min..=cfg.str_len_max).contains(&s.len()) && s.bytes().all(|b| MIXTURE.contains(&b))
        };
        match v {
            Value::Int(i) => int_ok(i),
            Value::Str(s) => str_ok(s),
            Value::ListInt(xs) => len_ok(xs.len()) && xs.iter().all(int_ok),
            Value::ListStr(xs) => len_ok(xs.len()) && xs.iter().all(str_ok),
        }
    }

    #[test]
    fn values_respect_bounds() {
        let cfg = MockConfig::default();
        let mut r = rng(1);
        for t in ValueType::ALL {
            for _ in 0..2000 {
                let v = mock_value(t, &mut r, &cfg);
                assert_eq!(v.value_type(), t);
                assert!(in_bounds(&v, &cfg), "{v:?}");
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces() {
        let cfg = MockConfig::default();
        for t in ValueType::ALL {
            let a = mock_value(t, &mut rng(99), &cfg);
            let b = mock_value(t, &mut rng(99), &cfg);
            assert_eq!(a, b);
        }
        let a = mock_input_sets(ValueType::Int, 10, 5, &cfg);
        let b = mock_input_sets(ValueType::Int, 10, 5, &cfg);
        assert_eq!(a, b);
    }

    #[test]
    fn singleton_set() {
        let s = mock_input_sets(ValueType::ListStr, 1, 3, &MockConfig::default());
        assert_eq!(s.len(), 1);
        assert_eq!(s.values[0].value_type(), ValueType::ListStr);
    }

    #[test]
    fn ten_ints_are_distinct() {
        let s = mock_input_sets(ValueType::Int, 10, 11, &MockConfig::default());
        let mut v = s.values.clone();
        v.sort_by_key(|x| match x {
            Value::Int(i) => *i,
            _ => unreachable!(),
        });
        v.dedup();
        assert_eq!(v.len(), 10);
    }

    #[test]
    fn tiny_domain_accepts_duplicates_after_budget() {
        let cfg = MockConfig { int_min: 0, int_max: 1, ..MockConfig::default() };
        let s = mock_input_sets(ValueType::Int, 10, 0, &cfg);
        assert_eq!(s.len(), 10);
    }

    #[test]
    fn every_string_class_appears() {
        let cfg = MockConfig::default();
        let mut seen: HashMap<CharClass, usize> = HashMap::new();
        for seed in 0..200 {
            let mut r = rng(seed);
            for _ in 0..10 {
                *seen.entry(mock_string(&mut r, &cfg).0).or_default() += 1;
            }
        }
        assert_eq!(seen.len(), 4);
    }
}
