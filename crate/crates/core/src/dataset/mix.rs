//! Weighted dataset mixtures such as `composite_a=1%,atom_base=600%`.

use std::fmt;
use std::str::FromStr;

use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};

use crate::seed;

const MICRO: u64 = 1_000_000;
const HUNDRED: u128 = 100 * MICRO as u128;

/// A percentage held exactly, in millionths of a percent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Rate(u64);

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MixError {
    #[error("invalid rate {0:?}: expected a positive percentage such as 1% or 600%")]
    InvalidRate(String),
    #[error("invalid mixture component {0:?}: expected name=rate")]
    InvalidComponent(String),
    #[error("component {0} is empty")]
    EmptyComponent(String),
    #[error("component {0} appears twice")]
    DuplicateComponent(String),
}

impl Rate {
    pub fn from_percent_micros(micros: u64) -> Result<Rate, MixError> {
        if micros == 0 {
            return Err(MixError::InvalidRate("0%".into()));
        }
        Ok(Rate(micros))
    }

    pub fn percent(whole: u64) -> Rate {
        Rate(whole * MICRO)
    }

    pub fn micros(self) -> u64 {
        self.0
    }

    /// Records drawn from a component of `n` records.
    pub fn count(self, n: usize) -> usize {
        let r = self.0 as u128;
        let n = n as u128;
        let (copies, rem) = if r <= HUNDRED { (0, r) } else { (r / HUNDRED, r % HUNDRED) };
        (copies * n + rem * n / HUNDRED) as usize
    }
}

impl FromStr for Rate {
    type Err = MixError;

    fn from_str(s: &str) -> Result<Rate, MixError> {
        let bad = || MixError::InvalidRate(s.to_string());
        let t = s.trim();
        let t = t.strip_suffix('%').unwrap_or(t).trim();
        let (whole, frac) = t.split_once('.').unwrap_or((t, ""));
        if whole.is_empty() && frac.is_empty()
            || frac.len() > 6
            || !whole.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit())
        {
            return Err(bad());
        }
        let whole: u64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| bad())? };
        let frac_micros: u64 = format!("{frac:0<6}").parse().map_err(|_| bad())?;
        let micros = whole.checked_mul(MICRO).and_then(|w| w.checked_add(frac_micros)).ok_or_else(bad)?;
        Rate::from_percent_micros(micros).map_err(|_| bad())
    }
}

impl fmt::Display for Rate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let (whole, frac) = (self.0 / MICRO, self.0 % MICRO);
        if frac == 0 {
            write!(f, "{whole}%")
        } else {
            let frac = format!("{frac:06}");
            write!(f, "{whole}.{}%", frac.trim_end_matches('0'))
        }
    }
}

impl TryFrom<String> for Rate {
    type Error = MixError;
    fn try_from(s: String) -> Result<Rate, MixError> {
        s.parse()
    }
}

impl From<Rate> for String {
    fn from(r: Rate) -> String {
        r.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixComponent {
    pub name: String,
    pub rate: Rate,
    /// Seed for this component's sampling; defaults to a stream of the
    /// mixture seed.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<MixComponent>,
    pub seed: u64,
}

impl MixtureSpec {
    /// Parses `name=rate[,name=rate...]`; a component may carry its own seed
    /// as `name=rate@seed`.
    pub fn parse(text: &str, seed: u64) -> Result<MixtureSpec, MixError> {
        let mut components: Vec<MixComponent> = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (name, rest) = part.split_once('=').ok_or_else(|| MixError::InvalidComponent(part.into()))?;
            let name = name.trim();
            if name.is_empty() {
                return Err(MixError::InvalidComponent(part.into()));
            }
            let (rate, cseed) = match rest.split_once('@') {
                Some((r, s)) => (r, Some(s.trim().parse().map_err(|_| MixError::InvalidComponent(part.into()))?)),
                None => (rest, None),
            };
            if components.iter().any(|c| c.name == name) {
                return Err(MixError::DuplicateComponent(name.into()));
            }
            components.push(MixComponent { name: name.into(), rate: rate.parse()?, seed: cseed });
        }
        if components.is_empty() {
            return Err(MixError::InvalidComponent(text.into()));
        }
        Ok(MixtureSpec { components, seed })
    }

    fn component_seed(&self, i: usize) -> u64 {
        self.components[i].seed.unwrap_or_else(|| seed::split(self.seed, i as u64))
    }
}

/// Up- or down-samples one component.
pub fn resample<T: Clone>(records: &[T], rate: Rate, seed: u64) -> Vec<T> {
    let n = records.len();
    let total = rate.count(n);
    let copies = total / n.max(1);
    let rem = total - copies * n;
    let mut out = Vec::with_capacity(total);
    for _ in 0..copies {
        out.extend_from_slice(records);
    }
    let mut picked = index::sample(&mut seed::rng(seed), n, rem).into_vec();
    picked.sort_unstable();
    out.extend(picked.into_iter().map(|i| records[i].clone()));
    out
}

/// Resamples each component by its rate, concatenates in spec order and
/// shuffles with the mixture seed. `datasets[i]` belongs to
/// `spec.components[i]`.
pub fn mix<T: Clone>(spec: &MixtureSpec, datasets: &[Vec<T>]) -> Result<Vec<T>, MixError> {
    assert_eq!(spec.components.len(), datasets.len(), "one dataset per component");
    let mut out = Vec::new();
    for (i, (c, records)) in spec.components.iter().zip(datasets).enumerate() {
        if records.is_empty() {
            return Err(MixError::EmptyComponent(c.name.clone()));
        }
        out.extend(resample(records, c.rate, spec.component_seed(i)));
    }
    out.shuffle(&mut seed::rng(seed::split_named(spec.seed, "mix-shuffle")));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    fn counts<T: std::hash::Hash + Eq + Clone>(xs: &[T]) -> HashMap<T, usize> {
        let mut m = HashMap::new();
        for x in xs {
            *m.entry(x.clone()).or_default() += 1;
        }
        m
    }

    #[test]
    fn rate_parsing() {
        assert_eq!("1%".parse::<Rate>().unwrap(), Rate::percent(1));
        assert_eq!("600".parse::<Rate>().unwrap(), Rate::percent(600));
        assert_eq!("0.5%".parse::<Rate>().unwrap().micros(), 500_000);
        assert_eq!(".25%".parse::<Rate>().unwrap().micros(), 250_000);
        for bad in ["0%", "", "%", "-1%", "1.2345678%", "abc", "1e3%"] {
            assert!(bad.parse::<Rate>().is_err(), "{bad}");
        }
        assert_eq!(Rate::from_percent_micros(2_500_000).unwrap().to_string(), "2.5%");
    }

    #[test]
    fn downsample_one_percent_of_5000() {
        let a: Vec<u32> = (0..5000).collect();
        let out = resample(&a, "1%".parse().unwrap(), 7);
        assert_eq!(out.len(), 50);
        assert_eq!(counts(&out).len(), 50);
    }

    #[test]
    fn upsample_600_percent_repeats_each_six_times() {
        let a: Vec<u32> = (0..100).collect();
        let out = resample(&a, Rate::percent(600), 7);
        assert_eq!(out.len(), 600);
        assert!(counts(&out).values().all(|&c| c == 6));
    }

    #[test]
    fn hundred_percent_is_the_same_multiset() {
        let a: Vec<u32> = (0..37).map(|i| i % 9).collect();
        let spec = MixtureSpec::parse("x=100%", 3).unwrap();
        let out = mix(&spec, std::slice::from_ref(&a)).unwrap();
        assert_eq!(counts(&out), counts(&a));
    }

    #[test]
    fn figure_legend_mixture() {
        let spec = MixtureSpec::parse("composite_a=1%,atom_base=600%", 9).unwrap();
        let a: Vec<String> = (0..5000).map(|i| format!("a{i}")).collect();
        let b: Vec<String> = (0..100).map(|i| format!("b{i}")).collect();
        let out = mix(&spec, &[a, b]).unwrap();
        assert_eq!(out.len(), 650);
        assert_eq!(out.iter().filter(|s| s.starts_with('a')).count(), 50);
        assert_eq!(
            mix(&spec, &[(0..5000).map(|i| format!("a{i}")).collect(), (0..100).map(|i| format!("b{i}")).collect()])
                .unwrap(),
            out
        );
    }

    #[test]
    fn empty_component_is_an_error() {
        let spec = MixtureSpec::parse("a=50%,b=10%@4", 1).unwrap();
        assert_eq!(spec.components[1].seed, Some(4));
        assert_eq!(mix(&spec, &[vec![1], vec![]]), Err(MixError::EmptyComponent("b".into())));
        assert!(matches!(MixtureSpec::parse("a=1%,a=2%", 0), Err(MixError::DuplicateComponent(_))));
        assert!(matches!(MixtureSpec::parse("a", 0), Err(MixError::InvalidComponent(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn count_matches_closed_form(n in 1usize..3000, r in 1u64..1000) {
            // Whole percentages keep r*n/100 exact in f64.
            let expected = if r <= 100 {
                ((r * n as u64) as f64 / 100.0).floor() as usize
            } else {
                (r / 100) as usize * n + (((r % 100) * n as u64) as f64 / 100.0).floor() as usize
            };
            let data: Vec<usize> = (0..n).collect();
            let out = resample(&data, Rate::percent(r), r ^ n as u64);
            prop_assert_eq!(out.len(), expected);
            let c = counts(&out);
            let base = (r / 100) as usize;
            prop_assert!(c.values().all(|&k| k == base || k == base + 1));
            if r <= 100 {
                prop_assert!(c.values().all(|&k| k == 1));
            }
        }
    }
}
