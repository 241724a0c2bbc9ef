//! Architecture strings such as
//! `SConv((5,5),1,32) -> ELU -> MaxP(4) -> FC(10)`.
//!
//! ```text
//! arch   := layer (arrow layer)*
//! arrow  := "->" | "→"
//! layer  := "SConv" "(" kernel "," int "," int ")"
//!         | "MaxP" "(" int ")" | "FC" "(" int ")" | "Lin" "(" int ")"
//!         | "Dropout" "(" float ")" | "AvgP" | "ELU"
//! kernel := "(" int ("," int)* ")" | int
//! ```

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    SConv { kernel: Vec<usize>, m_in: usize, m_out: usize },
    MaxP(usize),
    /// Fully connected; flattens node features per example first.
    Fc(usize),
    /// Per-node linear map.
    Lin(usize),
    AvgP,
    Elu,
    Dropout(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Architecture(pub Vec<LayerSpec>);

impl Architecture {
    pub fn layers(&self) -> &[LayerSpec] {
        &self.0
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Architecture> {
        let mut p = Parser { src: s, pos: 0 };
        let mut layers = vec![p.layer()?];
        loop {
            p.skip_ws();
            if p.pos == s.len() {
                break;
            }
            if !(p.eat("->") || p.eat("→")) {
                return Err(p.error("expected `->` between layers"));
            }
            layers.push(p.layer()?);
        }
        Ok(Architecture(layers))
    }
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::SConv { kernel, m_in, m_out } => {
                let k: Vec<String> = kernel.iter().map(usize::to_string).collect();
                write!(f, "SConv(({}),{m_in},{m_out})", k.join(","))
            }
            LayerSpec::MaxP(c) => write!(f, "MaxP({c})"),
            LayerSpec::Fc(o) => write!(f, "FC({o})"),
            LayerSpec::Lin(o) => write!(f, "Lin({o})"),
            LayerSpec::AvgP => f.write_str("AvgP"),
            LayerSpec::Elu => f.write_str("ELU"),
            LayerSpec::Dropout(p) => write!(f, "Dropout({p:?})"),
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (k, layer) in self.0.iter().enumerate() {
            if k > 0 {
                f.write_str(" -> ")?;
            }
            write!(f, "{layer}")?;
        }
        Ok(())
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn rest(&self) -> &str {
        &self.src[self.pos..]
    }

    fn error(&self, msg: &str) -> Error {
        let col = self.src[..self.pos].chars().count() + 1;
        Error::InvalidConfig(format!("architecture, column {col}: {msg}"))
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> Result<()> {
        if self.eat(token) {
            Ok(())
        } else {
            Err(self.error(&format!("expected `{token}`")))
        }
    }

    fn word(&mut self) -> &str {
        self.skip_ws();
        let len = self.rest().find(|c: char| !c.is_ascii_alphanumeric() && c != '_').unwrap_or(self.rest().len());
        let start = self.pos;
        self.pos += len;
        &self.src[start..self.pos]
    }

    fn number(&mut self) -> &str {
        self.skip_ws();
        let len = self
            .rest()
            .find(|c: char| !(c.is_ascii_digit() || matches!(c, '.' | 'e' | 'E' | '-' | '+')))
            .unwrap_or(self.rest().len());
        let start = self.pos;
        self.pos += len;
        &self.src[start..self.pos]
    }

    fn count(&mut self) -> Result<usize> {
        let tok = self.number().to_string();
        match tok.parse::<usize>() {
            Ok(v) if v > 0 => Ok(v),
            _ => Err(self.error(&format!("expected a positive integer, found `{tok}`"))),
        }
    }

    fn layer(&mut self) -> Result<LayerSpec> {
        let start = self.pos;
        let name = self.word().to_string();
        let layer = match name.as_str() {
            "SConv" => {
                self.expect("(")?;
                let kernel = if self.eat("(") {
                    let mut k = vec![self.count()?];
                    while self.eat(",") {
                        k.push(self.count()?);
                    }
                    self.expect(")")?;
                    k
                } else {
                    vec![self.count()?]
                };
                self.expect(",")?;
                let m_in = self.count()?;
                self.expect(",")?;
                let m_out = self.count()?;
                self.expect(")")?;
                LayerSpec::SConv { kernel, m_in, m_out }
            }
            "MaxP" | "FC" | "Lin" => {
                self.expect("(")?;
                let v = self.count()?;
                self.expect(")")?;
                match name.as_str() {
                    "MaxP" => LayerSpec::MaxP(v),
                    "FC" => LayerSpec::Fc(v),
                    _ => LayerSpec::Lin(v),
                }
            }
            "Dropout" => {
                self.expect("(")?;
                let tok = self.number().to_string();
                let p = tok
                    .parse::<f64>()
                    .ok()
                    .filter(|p| (0.0..1.0).contains(p))
                    .ok_or_else(|| self.error(&format!("dropout probability must be in [0, 1), found `{tok}`")))?;
                self.expect(")")?;
                LayerSpec::Dropout(p)
            }
            "AvgP" => LayerSpec::AvgP,
            "ELU" => LayerSpec::Elu,
            _ => {
                self.pos = start;
                self.skip_ws();
                return Err(self.error(&format!("unknown layer `{name}`")));
            }
        };
        Ok(layer)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_grid_network() {
        let a: Architecture = "SConv((5,5),1,32) → ELU → MaxP(4) → SConv((5,5),32,64) -> MaxP(4) -> FC(512) -> Dropout(0.5) -> FC(10)"
            .parse()
            .unwrap();
        assert_eq!(a.layers().len(), 8);
        assert_eq!(a.layers()[0], LayerSpec::SConv { kernel: vec![5, 5], m_in: 1, m_out: 32 });
        assert_eq!(a.layers()[6], LayerSpec::Dropout(0.5));
    }

    #[test]
    fn single_int_kernel_and_spacing() {
        let a: Architecture = "  SConv( 2 , 1433,16 )->SConv((2),16,7)  ".parse().unwrap();
        assert_eq!(a.layers()[0], LayerSpec::SConv { kernel: vec![2], m_in: 1433, m_out: 16 });
        assert_eq!(a.layers()[1], LayerSpec::SConv { kernel: vec![2], m_in: 16, m_out: 7 });
    }

    #[test]
    fn rejects_bad_strings() {
        for bad in [
            "",
            "SConv((5,5),1)",
            "SConv((5,0),1,3)",
            "MaxP(4) FC(10)",
            "FC(10) ->",
            "Conv(3)",
            "Dropout(1.5)",
            "FC(-1)",
            "FC(10))",
            "AvgP -> Lin(3",
        ] {
            assert!(bad.parse::<Architecture>().is_err(), "{bad}");
        }
        let err = "ELU -> Pool".parse::<Architecture>().unwrap_err();
        assert!(err.to_string().contains("column 8"), "{err}");
    }

    fn layer() -> impl Strategy<Value = LayerSpec> {
        prop_oneof![
            (prop::collection::vec(1usize..9, 1..4), 1usize..500, 1usize..500)
                .prop_map(|(kernel, m_in, m_out)| LayerSpec::SConv { kernel, m_in, m_out }),
            (1usize..9).prop_map(LayerSpec::MaxP),
            (1usize..1000).prop_map(LayerSpec::Fc),
            (1usize..1000).prop_map(LayerSpec::Lin),
            Just(LayerSpec::AvgP),
            Just(LayerSpec::Elu),
            (0.0f64..1.0).prop_map(LayerSpec::Dropout),
        ]
    }

    proptest! {
        #[test]
        fn display_round_trips(layers in prop::collection::vec(layer(), 1..8)) {
            let a = Architecture(layers);
            let back: Architecture = a.to_string().parse().unwrap();
            prop_assert_eq!(back, a);
        }

        #[test]
        fn never_panics(s in "\\PC{0,40}") {
            let _ = s.parse::<Architecture>();
        }
    }
}
