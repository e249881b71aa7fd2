use super::FrontendError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Tok {
    Ident(String),
    Num(u64),
    Sym(&'static str),
    Eof,
}

#[derive(Debug, Clone)]
pub struct Token {
    pub tok: Tok,
    pub line: usize,
    pub col: usize,
}

// Longest symbols first so that maximal munch works by linear scan.
const SYMBOLS: [&str; 30] = [
    ":=", "==", "!=", "<=", ">=", "&&", "||", "<<", ">>", "+", "-", "*", "/", "%", "&", "|", "^", "~", "!", "<", ">",
    "(", ")", "{", "}", "[", "]", ";", ",", "=",
];

struct Cursor {
    chars: Vec<char>,
    i: usize,
    line: usize,
    col: usize,
}

impl Cursor {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.i).copied()
    }

    fn peek2(&self) -> Option<char> {
        self.chars.get(self.i + 1).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.i += 1;
        if c == '\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        Some(c)
    }

    fn take_while(&mut self, f: impl Fn(char) -> bool) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek().filter(|c| f(*c)) {
            s.push(c);
            self.bump();
        }
        s
    }
}

pub fn tokenize(src: &str) -> Result<Vec<Token>, FrontendError> {
    let mut cur = Cursor { chars: src.chars().collect(), i: 0, line: 1, col: 1 };
    let mut out = Vec::new();
    while let Some(c) = cur.peek() {
        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '/' && cur.peek2() == Some('/') {
            cur.take_while(|c| c != '\n');
            continue;
        }
        let (line, col) = (cur.line, cur.col);
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            Tok::Ident(cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_' || c == '$'))
        } else if c.is_ascii_digit() {
            let digits = cur.take_while(|c| c.is_ascii_alphanumeric() || c == '_').replace('_', "");
            let parsed = match digits.strip_prefix("0x").or_else(|| digits.strip_prefix("0X")) {
                Some(hex) => u64::from_str_radix(hex, 16),
                None => digits.parse::<u64>(),
            };
            Tok::Num(parsed.map_err(|_| FrontendError::Syntax { line, col, expected: "integer literal".into() })?)
        } else {
            let rest: String = [Some(c), cur.peek2()].into_iter().flatten().collect();
            let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) else {
                return Err(FrontendError::Syntax { line, col, expected: "token".into() });
            };
            for _ in 0..sym.len() {
                cur.bump();
            }
            Tok::Sym(sym)
        };
        out.push(Token { tok, line, col });
    }
    out.push(Token { tok: Tok::Eof, line: cur.line, col: cur.col });
    Ok(out)
}
