use std::fmt;

use super::{ConfigError, Result};

/// One step of a config path.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Segment {
    Field(String),
    Index(usize),
    Key(String),
}

/// Dotted path into a config tree, e.g. `model.decoder.transformer.layer[0].feed_forward`.
///
/// Mapping keys render as `field["key"]` so keys may contain dots.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConfigPath(Vec<Segment>);

impl ConfigPath {
    pub fn root() -> Self {
        Self(Vec::new())
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.0
    }

    pub fn child(&self, segment: Segment) -> Self {
        let mut s = self.0.clone();
        s.push(segment);
        Self(s)
    }

    pub fn field(&self, name: &str) -> Self {
        self.child(Segment::Field(name.to_string()))
    }

    pub fn index(&self, i: usize) -> Self {
        self.child(Segment::Index(i))
    }

    pub fn key(&self, k: &str) -> Self {
        self.child(Segment::Key(k.to_string()))
    }

    pub fn parent(&self) -> Option<(ConfigPath, &Segment)> {
        let (last, rest) = self.0.split_last()?;
        Some((ConfigPath(rest.to_vec()), last))
    }

    pub fn starts_with(&self, prefix: &ConfigPath) -> bool {
        self.0.starts_with(&prefix.0)
    }

    /// The path with sequence indices removed, used for glob matching
    /// (`...transformer.layer` matches every `...transformer.layer[i]`).
    pub fn without_indices(&self) -> String {
        ConfigPath(
            self.0
                .iter()
                .filter(|s| !matches!(s, Segment::Index(_)))
                .cloned()
                .collect(),
        )
        .to_string()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = || ConfigError::BadPath(text.to_string());
        let mut segments = Vec::new();
        let bytes = text.as_bytes();
        let mut i = 0;
        let mut expect_field = true;
        while i < bytes.len() {
            match bytes[i] {
                b'.' => {
                    if expect_field {
                        return Err(bad());
                    }
                    expect_field = true;
                    i += 1;
                }
                b'[' => {
                    if expect_field && !segments.is_empty() {
                        return Err(bad());
                    }
                    if bytes.get(i + 1) == Some(&b'"') {
                        // JSON string key, terminated by `"]`.
                        let mut j = i + 2;
                        while j < bytes.len() {
                            match bytes[j] {
                                b'\\' => j += 2,
                                b'"' => break,
                                _ => j += 1,
                            }
                        }
                        if j >= bytes.len() || bytes.get(j + 1) != Some(&b']') {
                            return Err(bad());
                        }
                        let key: String =
                            serde_json::from_str(&text[i + 1..=j]).map_err(|_| bad())?;
                        segments.push(Segment::Key(key));
                        i = j + 2;
                    } else {
                        let end = text[i..].find(']').ok_or_else(bad)? + i;
                        let idx: usize = text[i + 1..end].parse().map_err(|_| bad())?;
                        segments.push(Segment::Index(idx));
                        i = end + 1;
                    }
                    expect_field = false;
                }
                _ => {
                    if !expect_field {
                        return Err(bad());
                    }
                    let end = text[i..]
                        .find(['.', '[', ']'])
                        .map_or(text.len(), |p| p + i);
                    let name = &text[i..end];
                    if name.is_empty() {
                        return Err(bad());
                    }
                    segments.push(Segment::Field(name.to_string()));
                    i = end;
                    expect_field = false;
                }
            }
        }
        if expect_field && !segments.is_empty() {
            return Err(bad());
        }
        Ok(Self(segments))
    }
}

impl fmt::Display for ConfigPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, seg) in self.0.iter().enumerate() {
            match seg {
                Segment::Field(name) if i == 0 => write!(f, "{name}")?,
                Segment::Field(name) => write!(f, ".{name}")?,
                Segment::Index(idx) => write!(f, "[{idx}]")?,
                Segment::Key(k) => write!(
                    f,
                    "[{}]",
                    serde_json::to_string(k).expect("strings always serialize")
                )?,
            }
        }
        Ok(())
    }
}

impl std::str::FromStr for ConfigPath {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self> {
        Self::parse(s)
    }
}
