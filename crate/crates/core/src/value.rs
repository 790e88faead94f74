//! The four value types atoms may consume or produce, plus their two
//! encodings: the JSON interchange form spoken with the sandbox runner, and
//! Python source literals used inside emitted `assert` statements.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::Value as Json;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ValueError {
    #[error("unknown value type tag {0:?}")]
    UnknownType(String),
    #[error("value does not match type {expected}: {found}")]
    TypeMismatch { expected: ValueType, found: String },
    #[error("malformed literal at byte {pos}: {msg}")]
    Literal { pos: usize, msg: String },
}

/// Input/output type of an atomic function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ValueType {
    Int,
    Str,
    ListInt,
    ListStr,
}

impl ValueType {
    pub const ALL: [ValueType; 4] = [ValueType::Int, ValueType::Str, ValueType::ListInt, ValueType::ListStr];

    /// The tag used in atom files and on the runner wire.
    pub fn tag(self) -> &'static str {
        match self {
            ValueType::Int => "Int",
            ValueType::Str => "String",
            ValueType::ListInt => "List[Int]",
            ValueType::ListStr => "List[String]",
        }
    }

    pub fn is_list(self) -> bool {
        matches!(self, ValueType::ListInt | ValueType::ListStr)
    }
}

impl fmt::Display for ValueType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ValueType {
    type Err = ValueError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Int" => Ok(ValueType::Int),
            "String" => Ok(ValueType::Str),
            "List[Int]" => Ok(ValueType::ListInt),
            "List[String]" => Ok(ValueType::ListStr),
            other => Err(ValueError::UnknownType(other.to_string())),
        }
    }
}

impl Serialize for ValueType {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.tag())
    }
}

impl<'de> Deserialize<'de> for ValueType {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A concrete value of one of the four types. Serializes as
/// `{"type": "<tag>", "value": ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "value")]
pub enum Value {
    Int(i64),
    #[serde(rename = "String")]
    Str(String),
    #[serde(rename = "List[Int]")]
    ListInt(Vec<i64>),
    #[serde(rename = "List[String]")]
    ListStr(Vec<String>),
}

impl Value {
    pub fn value_type(&self) -> ValueType {
        match self {
            Value::Int(_) => ValueType::Int,
            Value::Str(_) => ValueType::Str,
            Value::ListInt(_) => ValueType::ListInt,
            Value::ListStr(_) => ValueType::ListStr,
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            Value::Int(i) => Json::from(*i),
            Value::Str(s) => Json::from(s.as_str()),
            Value::ListInt(v) => Json::from(v.clone()),
            Value::ListStr(v) => Json::from(v.clone()),
        }
    }

    /// Decodes an interchange value, using `expected` to type it. Empty
    /// lists are only typeable through the hint.
    pub fn from_json(json: &Json, expected: ValueType) -> Result<Value, ValueError> {
        let mismatch = || ValueError::TypeMismatch { expected, found: json.to_string() };
        match expected {
            ValueType::Int => json.as_i64().map(Value::Int).ok_or_else(mismatch),
            ValueType::Str => json.as_str().map(|s| Value::Str(s.to_string())).ok_or_else(mismatch),
            ValueType::ListInt => json
                .as_array()
                .and_then(|items| items.iter().map(Json::as_i64).collect::<Option<Vec<_>>>())
                .map(Value::ListInt)
                .ok_or_else(mismatch),
            ValueType::ListStr => json
                .as_array()
                .and_then(|items| items.iter().map(|j| j.as_str().map(str::to_string)).collect::<Option<Vec<_>>>())
                .map(Value::ListStr)
                .ok_or_else(mismatch),
        }
    }

    /// Renders the value as a Python source literal.
    pub fn to_python_literal(&self) -> String {
        let mut out = String::new();
        match self {
            Value::Int(i) => out.push_str(&i.to_string()),
            Value::Str(s) => push_py_str(&mut out, s),
            Value::ListInt(v) => {
                out.push('[');
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&x.to_string());
                }
                out.push(']');
            }
            Value::ListStr(v) => {
                out.push('[');
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    push_py_str(&mut out, x);
                }
                out.push(']');
            }
        }
        out
    }

    /// Parses a literal produced by [`Value::to_python_literal`] (or any
    /// Python literal within the same grammar subset).
    pub fn parse_python_literal(src: &str, expected: ValueType) -> Result<Value, ValueError> {
        let mut p = LiteralParser { src: src.as_bytes(), text: src, pos: 0 };
        p.skip_ws();
        let value = match expected {
            ValueType::Int => Value::Int(p.int()?),
            ValueType::Str => Value::Str(p.string()?),
            ValueType::ListInt => Value::ListInt(p.list(|p| p.int())?),
            ValueType::ListStr => Value::ListStr(p.list(|p| p.string())?),
        };
        p.skip_ws();
        if p.pos != src.len() {
            return Err(p.err("trailing characters"));
        }
        Ok(value)
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_python_literal())
    }
}

fn push_py_str(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                out.push_str(&format!("\\x{:02x}", c as u32));
            }
            // Line and paragraph separators are legal in Python string
            // literals but escape them so assertions stay on one line.
            '\u{2028}' | '\u{2029}' | '\u{85}' => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

struct LiteralParser<'a> {
    src: &'a [u8],
    text: &'a str,
    pos: usize,
}

impl LiteralParser<'_> {
    fn err(&self, msg: &str) -> ValueError {
        ValueError::Literal { pos: self.pos, msg: msg.to_string() }
    }

    fn peek(&self) -> Option<u8> {
        self.src.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek(), Some(b' ' | b'\t' | b'\n' | b'\r')) {
            self.pos += 1;
        }
    }

    fn expect(&mut self, b: u8) -> Result<(), ValueError> {
        if self.peek() == Some(b) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected {:?}", b as char)))
        }
    }

    fn int(&mut self) -> Result<i64, ValueError> {
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        self.text[start..self.pos].parse().map_err(|_| ValueError::Literal { pos: start, msg: "bad integer".into() })
    }

    fn string(&mut self) -> Result<String, ValueError> {
        let quote = match self.peek() {
            Some(q @ (b'"' | b'\'')) => q,
            _ => return Err(self.err("expected string literal")),
        };
        self.pos += 1;
        let mut out = String::new();
        loop {
            let rest = &self.text[self.pos..];
            let c = rest.chars().next().ok_or_else(|| self.err("unterminated string"))?;
            self.pos += c.len_utf8();
            match c {
                c if c as u32 == quote as u32 => return Ok(out),
                '\\' => {
                    let e = self.peek().ok_or_else(|| self.err("dangling escape"))?;
                    self.pos += 1;
                    match e {
                        b'\\' => out.push('\\'),
                        b'"' => out.push('"'),
                        b'\'' => out.push('\''),
                        b'n' => out.push('\n'),
                        b'r' => out.push('\r'),
                        b't' => out.push('\t'),
                        b'x' => out.push(self.hex_char(2)?),
                        b'u' => out.push(self.hex_char(4)?),
                        b'U' => out.push(self.hex_char(8)?),
                        _ => return Err(self.err("unsupported escape")),
                    }
                }
                c => out.push(c),
            }
        }
    }

    fn hex_char(&mut self, digits: usize) -> Result<char, ValueError> {
        let end = self.pos + digits;
        let hex = self.text.get(self.pos..end).ok_or_else(|| self.err("short escape"))?;
        let code = u32::from_str_radix(hex, 16).map_err(|_| self.err("bad hex escape"))?;
        self.pos = end;
        char::from_u32(code).ok_or_else(|| self.err("invalid code point"))
    }

    fn list<T>(&mut self, mut item: impl FnMut(&mut Self) -> Result<T, ValueError>) -> Result<Vec<T>, ValueError> {
        self.expect(b'[')?;
        let mut out = Vec::new();
        self.skip_ws();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(out);
        }
        loop {
            self.skip_ws();
            out.push(item(self)?);
            self.skip_ws();
            match self.peek() {
                Some(b',') => {
                    self.pos += 1;
                    self.skip_ws();
                    if self.peek() == Some(b']') {
                        self.pos += 1;
                        return Ok(out);
                    }
                }
                Some(b']') => {
                    self.pos += 1;
                    return Ok(out);
                }
                _ => return Err(self.err("expected ',' or ']'")),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn type_tags_parse_exactly() {
        for t in ValueType::ALL {
            assert_eq!(t.tag().parse::<ValueType>().unwrap(), t);
        }
        assert!("int".parse::<ValueType>().is_err());
        assert!("List[Float]".parse::<ValueType>().is_err());
    }

    #[test]
    fn literal_rendering() {
        assert_eq!(Value::ListInt(vec![1, 2]).to_python_literal(), "[1, 2]");
        assert_eq!(Value::Str("a\"b\\\n".into()).to_python_literal(), r#""a\"b\\\n""#);
        assert_eq!(Value::ListStr(vec![]).to_python_literal(), "[]");
        assert_eq!(Value::Int(-7).to_python_literal(), "-7");
    }

    #[test]
    fn empty_list_decodes_under_either_list_type() {
        let j = serde_json::json!([]);
        assert_eq!(Value::from_json(&j, ValueType::ListInt).unwrap(), Value::ListInt(vec![]));
        assert_eq!(Value::from_json(&j, ValueType::ListStr).unwrap(), Value::ListStr(vec![]));
        assert!(Value::from_json(&j, ValueType::Int).is_err());
    }

    fn any_value() -> impl Strategy<Value = Value> {
        prop_oneof![
            any::<i64>().prop_map(Value::Int),
            any::<String>().prop_map(Value::Str),
            prop::collection::vec(any::<i64>(), 0..20).prop_map(Value::ListInt),
            prop::collection::vec(any::<String>(), 0..8).prop_map(Value::ListStr),
        ]
    }

    proptest! {
        #[test]
        fn literal_round_trip(v in any_value()) {
            let lit = v.to_python_literal();
            prop_assert!(!lit.contains('\n'));
            prop_assert_eq!(Value::parse_python_literal(&lit, v.value_type()).unwrap(), v);
        }

        #[test]
        fn json_round_trip(v in any_value()) {
            let text = serde_json::to_string(&v.to_json()).unwrap();
            let back: Json = serde_json::from_str(&text).unwrap();
            prop_assert_eq!(Value::from_json(&back, v.value_type()).unwrap(), v);
        }
    }
}
