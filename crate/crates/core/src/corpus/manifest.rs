use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::pipeline::FinalVerdict;
use crate::semantics::Width;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("manifest line {line}: {msg}")]
pub struct ManifestError {
    pub line: usize,
    pub msg: String,
}

/// Expected `x:y:z` counts; `None` for a stage that does not run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Profile {
    pub step1: usize,
    pub step2: Option<usize>,
    pub step3: Option<usize>,
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = |c: Option<usize>| c.map_or("-".to_string(), |n| n.to_string());
        write!(f, "{}:{}:{}", self.step1, s(self.step2), s(self.step3))
    }
}

impl FromStr for Profile {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let [a, b, c] = parts.as_slice() else { return Err(format!("profile `{s}` is not x:y:z")) };
        let num = |p: &str| p.parse::<usize>().map_err(|_| format!("bad count `{p}` in `{s}`"));
        let opt = |p: &str| if p == "-" { Ok(None) } else { num(p).map(Some) };
        Ok(Profile { step1: num(a)?, step2: opt(b)?, step3: opt(c)? })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpectedCase {
    pub name: String,
    pub verdict: FinalVerdict,
    pub profile: Profile,
    pub width: Width,
    /// Variables of the sources expected as confirmed leaks.
    pub leaks: Vec<String>,
}

fn parse_verdict(s: &str) -> Option<FinalVerdict> {
    match s {
        "proved" => Some(FinalVerdict::Proved),
        "leaks_found" => Some(FinalVerdict::LeaksFound),
        "inconclusive" => Some(FinalVerdict::Inconclusive),
        _ => None,
    }
}

/// Reads `name = "verdict x:y:z width [leaks=a,b]"` lines; `#` starts a comment.
pub fn parse_manifest(text: &str) -> Result<Vec<ExpectedCase>, ManifestError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let err = |msg: String| ManifestError { line: i + 1, msg };
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (name, value) = line.split_once('=').ok_or_else(|| err("expected `name = \"...\"`".into()))?;
        let name = name.trim();
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(err(format!("bad case name `{name}`")));
        }
        let value = value.trim();
        let body = value
            .strip_prefix('"')
            .and_then(|v| v.strip_suffix('"'))
            .ok_or_else(|| err("value must be a quoted string".into()))?;
        let fields: Vec<&str> = body.split_whitespace().collect();
        let (verdict, profile, width, rest) = match fields.as_slice() {
            [v, p, w, rest @ ..] => (v, p, w, rest),
            _ => return Err(err("expected `verdict x:y:z width`".into())),
        };
        let verdict = parse_verdict(verdict).ok_or_else(|| err(format!("unknown verdict `{verdict}`")))?;
        let profile: Profile = profile.parse().map_err(err)?;
        let width = w_parse(width).ok_or_else(|| err(format!("bad width `{width}`")))?;
        let mut leaks = Vec::new();
        for extra in rest {
            let list = extra.strip_prefix("leaks=").ok_or_else(|| err(format!("unexpected field `{extra}`")))?;
            leaks.extend(list.split(',').filter(|s| !s.is_empty()).map(str::to_string));
        }
        if out.iter().any(|c: &ExpectedCase| c.name == name) {
            return Err(err(format!("case `{name}` listed twice")));
        }
        out.push(ExpectedCase { name: name.to_string(), verdict, profile, width, leaks });
    }
    Ok(out)
}

fn w_parse(s: &str) -> Option<Width> {
    Width::custom(s.parse().ok()?).ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_cases_and_comments() {
        let text = "# header\nfoo = \"proved 5:-:- 4\"\n\nbar = \"leaks_found 2:1:1 8 leaks=t,i\" # trailing\n";
        let cases = parse_manifest(text).unwrap();
        assert_eq!(cases.len(), 2);
        assert_eq!(cases[0].profile, Profile { step1: 5, step2: None, step3: None });
        assert_eq!(cases[0].profile.to_string(), "5:-:-");
        assert_eq!(cases[1].verdict, FinalVerdict::LeaksFound);
        assert_eq!(cases[1].leaks, ["t", "i"]);
        assert_eq!(cases[1].width.bits(), 8);
    }

    #[test]
    fn rejects_malformed_lines() {
        for bad in [
            "foo",
            "foo = proved 1:-:- 4",
            "foo = \"proved 1:- 4\"",
            "foo = \"maybe 1:-:- 4\"",
            "foo = \"proved 1:-:- 0\"",
            "foo = \"proved 1:-:- 4 extra\"",
            "= \"proved 1:-:- 4\"",
            "a = \"proved 1:-:- 4\"\na = \"proved 1:-:- 4\"",
        ] {
            assert!(parse_manifest(bad).is_err(), "{bad}");
        }
    }
}
