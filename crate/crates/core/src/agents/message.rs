use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index into an [`Alphabet`]; the end-of-sequence marker is the last index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Symbol(pub u8);

impl Symbol {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// `size` ordinary symbols `0..size` plus EOS at index `size`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Alphabet {
    size: u8,
}

impl Alphabet {
    pub fn new(size: usize) -> Result<Self> {
        if size == 0 || size >= u8::MAX as usize {
            return Err(Error::Config(format!(
                "alphabet needs between 1 and {} ordinary symbols, got {size}",
                u8::MAX - 1
            )));
        }
        Ok(Self { size: size as u8 })
    }

    /// Number of ordinary (non-EOS) symbols.
    pub fn size(self) -> usize {
        self.size as usize
    }

    /// Ordinary symbols plus EOS.
    pub fn total(self) -> usize {
        self.size as usize + 1
    }

    pub fn eos(self) -> Symbol {
        Symbol(self.size)
    }

    pub fn is_eos(self, s: Symbol) -> bool {
        s == self.eos()
    }

    pub fn contains(self, s: Symbol) -> bool {
        s.0 <= self.size
    }

    pub fn symbol(self, index: usize) -> Result<Symbol> {
        if index < self.total() {
            Ok(Symbol(index as u8))
        } else {
            Err(Error::Input(format!(
                "symbol {index} outside an alphabet of {} symbols",
                self.total()
            )))
        }
    }
}

/// A sequence of symbols terminated by exactly one EOS. `[EOS]` is the empty
/// message.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Message {
    symbols: Vec<Symbol>,
}

impl Message {
    pub fn new(alphabet: Alphabet, symbols: Vec<Symbol>) -> Result<Self> {
        validate_message(alphabet, &symbols)?;
        Ok(Self { symbols })
    }

    /// Builds a message from ordinary symbols, appending EOS.
    pub fn from_body(alphabet: Alphabet, body: &[usize]) -> Result<Self> {
        let mut symbols = body
            .iter()
            .map(|&i| alphabet.symbol(i))
            .collect::<Result<Vec<_>>>()?;
        symbols.push(alphabet.eos());
        Self::new(alphabet, symbols)
    }

    pub fn eos_only(alphabet: Alphabet) -> Self {
        Self {
            symbols: vec![alphabet.eos()],
        }
    }

    pub(crate) fn from_trusted(symbols: Vec<Symbol>) -> Self {
        Self { symbols }
    }

    pub fn symbols(&self) -> &[Symbol] {
        &self.symbols
    }

    /// Symbols before the terminating EOS.
    pub fn body(&self) -> &[Symbol] {
        &self.symbols[..self.symbols.len() - 1]
    }

    /// Length including EOS.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.len() == 1
    }

    pub fn body_len(&self) -> usize {
        self.symbols.len() - 1
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.symbols.iter().map(|s| s.index())
    }

    /// `self || other` as raw indices: the sequence critics and the
    /// discriminator consume.
    pub fn concat_indices(&self, other: &Message) -> Vec<usize> {
        self.indices().chain(other.indices()).collect()
    }

    pub fn validate(&self, alphabet: Alphabet) -> Result<()> {
        validate_message(alphabet, &self.symbols)
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in self.body() {
            write!(f, "{}", char::from(b'a' + s.0 % 26))?;
        }
        write!(f, "$")
    }
}

fn validate_message(alphabet: Alphabet, symbols: &[Symbol]) -> Result<()> {
    let Some((&last, body)) = symbols.split_last() else {
        return Err(Error::Input(
            "a message needs at least the EOS symbol".into(),
        ));
    };
    if !alphabet.is_eos(last) {
        return Err(Error::Input(format!(
            "message ends with {} instead of EOS",
            last.0
        )));
    }
    if let Some(bad) = body
        .iter()
        .find(|s| !alphabet.contains(**s) || alphabet.is_eos(**s))
    {
        return Err(Error::Input(format!(
            "symbol {} cannot appear inside a message over {} ordinary symbols",
            bad.0,
            alphabet.size()
        )));
    }
    Ok(())
}

/// Checks that `seq` is a question followed by an answer, i.e. exactly two
/// EOS symbols with the second one last.
pub fn validate_exchange(alphabet: Alphabet, seq: &[usize]) -> Result<()> {
    let eos = alphabet.eos().index();
    if let Some(bad) = seq.iter().find(|&&s| s > eos) {
        return Err(Error::Input(format!("symbol {bad} outside the alphabet")));
    }
    let eos_count = seq.iter().filter(|&&s| s == eos).count();
    if eos_count != 2 || seq.last() != Some(&eos) {
        return Err(Error::Input(format!(
            "expected question || answer with two EOS symbols, got {seq:?}"
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentType {
    Blue,
    Red,
}

impl AgentType {
    pub const ALL: [AgentType; 2] = [AgentType::Blue, AgentType::Red];

    pub fn other(self) -> Self {
        match self {
            AgentType::Blue => AgentType::Red,
            AgentType::Red => AgentType::Blue,
        }
    }
}

impl fmt::Display for AgentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AgentType::Blue => "blue",
            AgentType::Red => "red",
        })
    }
}

/// Decision rule for a probability-of-blue. Ties go to blue.
pub fn classify(p_blue: f64) -> AgentType {
    if p_blue >= 0.5 {
        AgentType::Blue
    } else {
        AgentType::Red
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alphabet_layout() {
        let a = Alphabet::new(4).unwrap();
        assert_eq!(a.total(), 5);
        assert_eq!(a.eos(), Symbol(4));
        assert!(Alphabet::new(0).is_err());
        assert!(a.symbol(5).is_err());
    }

    #[test]
    fn message_validation() {
        let a = Alphabet::new(2).unwrap();
        assert!(Message::new(a, vec![Symbol(0), Symbol(2)]).is_ok());
        assert!(Message::new(a, vec![]).is_err());
        assert!(Message::new(a, vec![Symbol(0), Symbol(1)]).is_err());
        assert!(Message::new(a, vec![Symbol(2), Symbol(2)]).is_err());
        assert!(Message::new(a, vec![Symbol(3), Symbol(2)]).is_err());
        let m = Message::from_body(a, &[1, 0]).unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.body_len(), 2);
        assert_eq!(m.to_string(), "ba$");
        assert!(Message::eos_only(a).is_empty());
    }

    #[test]
    fn exchange_validation() {
        let a = Alphabet::new(2).unwrap();
        assert!(validate_exchange(a, &[2, 0, 2]).is_ok());
        assert!(validate_exchange(a, &[0, 2]).is_err());
        assert!(validate_exchange(a, &[2, 2, 0]).is_err());
        assert!(validate_exchange(a, &[2, 3, 2]).is_err());
    }

    #[test]
    fn classification_rule() {
        assert_eq!(classify(0.7), AgentType::Blue);
        assert_eq!(classify(0.3), AgentType::Red);
        assert_eq!(classify(0.5), AgentType::Blue);
    }
}
