//! Words over the alphabet `{0, …, d}`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A nonempty sequence of letters; letter 0 is the clock.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn new(letters: Vec<usize>) -> Result<Self> {
        if letters.is_empty() {
            return Err(Error::domain("words must be nonempty"));
        }
        Ok(Word(letters))
    }

    /// Checks every letter lies in `{0, …, d}`.
    pub fn check_alphabet(&self, d: usize) -> Result<()> {
        match self.0.iter().find(|&&l| l > d) {
            Some(l) => Err(Error::domain(format!(
                "letter {l} outside the alphabet {{0..{d}}}"
            ))),
            None => Ok(()),
        }
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Lexicographic rank among words of the same length over `{0, …, d}`.
    pub fn index(&self, d: usize) -> usize {
        self.0.iter().fold(0, |acc, &l| acc * (d + 1) + l)
    }

    /// Inverse of [`Word::index`].
    pub fn from_index(mut idx: usize, len: usize, d: usize) -> Self {
        let mut letters = vec![0; len];
        for slot in letters.iter_mut().rev() {
            *slot = idx % (d + 1);
            idx /= d + 1;
        }
        Word(letters)
    }

    /// All words of length `len` over `{0, …, d}` in lexicographic order.
    pub fn all_of_length(len: usize, d: usize) -> impl Iterator<Item = Word> {
        let count = (d + 1).pow(len as u32);
        (0..count).map(move |i| Word::from_index(i, len, d))
    }

    pub fn concat(&self, other: &Word) -> Word {
        let mut v = self.0.clone();
        v.extend_from_slice(&other.0);
        Word(v)
    }

    pub fn prefix(&self, len: usize) -> Option<Word> {
        (len >= 1 && len <= self.len()).then(|| Word(self.0[..len].to_vec()))
    }

    pub fn suffix_from(&self, start: usize) -> Option<Word> {
        (start < self.len()).then(|| Word(self.0[start..].to_vec()))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        write!(f, "{}", parts.join(":"))
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .split([':', ','])
            .map(|p| {
                p.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad letter `{p}` in word `{s}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        Word::new(letters)
    }
}

impl From<&[usize]> for Word {
    fn from(v: &[usize]) -> Self {
        assert!(!v.is_empty(), "words must be nonempty");
        Word(v.to_vec())
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.0.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        Word::new(v).map_err(serde::de::Error::custom)
    }
}

/// Number of words of length `1..=k_max` over `{0, …, d}`.
pub fn word_count(d: usize, k_max: usize) -> Option<usize> {
    let base = d.checked_add(1)?;
    let mut total: usize = 0;
    let mut level: usize = 1;
    for _ in 0..k_max {
        level = level.checked_mul(base)?;
        total = total.checked_add(level)?;
    }
    Some(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_round_trip() {
        for w in Word::all_of_length(3, 2) {
            assert_eq!(Word::from_index(w.index(2), 3, 2), w);
        }
        assert_eq!(Word::new(vec![1, 0, 2]).unwrap().index(2), 9 + 2);
    }

    #[test]
    fn display_and_parse() {
        let w: Word = "1:2:0".parse().unwrap();
        assert_eq!(w.letters(), &[1, 2, 0]);
        assert_eq!(w.to_string(), "1:2:0");
        assert!("".parse::<Word>().is_err());
        assert!("1:x".parse::<Word>().is_err());
    }

    #[test]
    fn counts() {
        assert_eq!(word_count(0, 3), Some(3));
        assert_eq!(word_count(1, 2), Some(6));
        assert_eq!(word_count(usize::MAX, 2), None);
    }

    #[test]
    fn alphabet_check() {
        let w = Word::new(vec![0, 3]).unwrap();
        assert!(w.check_alphabet(2).is_err());
        assert!(w.check_alphabet(3).is_ok());
    }
}
