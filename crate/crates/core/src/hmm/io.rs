//! Line-oriented text format for models. Floats are written in Rust's
//! shortest round-trip form, so parsing reproduces every bit.
//!
//! ```text
//! emosid-hmm 1
//! states 2
//! mixtures 1
//! dim 1
//! initial 0.5 0.5
//! transition 0.9 0.1
//! transition 0.2 0.8
//! state 0
//! component 1 mean -3 var 1
//! state 1
//! component 1 mean 3 var 1
//! ```

use std::fmt::Write as _;

use super::{DiagGaussian, GaussianMixture, HmmModel};
use crate::{Error, Result};

const MAGIC: &str = "emosid-hmm";
const VERSION: u32 = 1;

fn join(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

pub fn write_model(model: &HmmModel) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC} {VERSION}");
    let _ = writeln!(out, "states {}", model.n_states());
    let _ = writeln!(out, "mixtures {}", model.n_mixtures());
    let _ = writeln!(out, "dim {}", model.dim());
    let _ = writeln!(out, "initial {}", join(&model.initial));
    for row in &model.transitions {
        let _ = writeln!(out, "transition {}", join(row));
    }
    for (j, s) in model.states.iter().enumerate() {
        let _ = writeln!(out, "state {j}");
        for (w, c) in s.weights().iter().zip(s.components()) {
            let _ = writeln!(out, "component {w:?} mean {} var {}", join(c.mean()), join(c.var()));
        }
    }
    out
}

struct Lines<'a, I: Iterator<Item = &'a str>> {
    inner: I,
    line: usize,
}

impl<'a, I: Iterator<Item = &'a str>> Lines<'a, I> {
    fn err(&self, message: impl std::fmt::Display) -> Error {
        Error::Format {
            path: "<model>".into(),
            message: format!("line {}: {message}", self.line),
        }
    }

    fn next_tokens(&mut self, keyword: &str) -> Result<Vec<&'a str>> {
        loop {
            let raw = self.inner.next().ok_or_else(|| self.err(format!("expected `{keyword}`, found end of input")))?;
            self.line += 1;
            let mut tokens = raw.split_whitespace();
            match tokens.next() {
                None => continue,
                Some(k) if k == keyword => return Ok(tokens.collect()),
                Some(k) => return Err(self.err(format!("expected `{keyword}`, found `{k}`"))),
            }
        }
    }

    fn count(&mut self, keyword: &str) -> Result<usize> {
        let t = self.next_tokens(keyword)?;
        match t.as_slice() {
            [v] => v.parse().map_err(|_| self.err(format!("invalid {keyword} `{v}`"))),
            _ => Err(self.err(format!("`{keyword}` takes one value"))),
        }
    }

    fn floats(&self, tokens: &[&str], expected: usize, what: &str) -> Result<Vec<f64>> {
        if tokens.len() != expected {
            return Err(self.err(format!("{what}: expected {expected} values, found {}", tokens.len())));
        }
        tokens
            .iter()
            .map(|t| t.parse::<f64>().map_err(|_| self.err(format!("{what}: invalid number `{t}`"))))
            .collect()
    }
}

/// Parses one model from a line iterator, consuming exactly its lines.
pub fn parse_model_lines<'a, I: Iterator<Item = &'a str>>(lines: &mut I) -> Result<HmmModel> {
    let mut p = Lines { inner: lines, line: 0 };
    let header = p.next_tokens(MAGIC)?;
    if header != [VERSION.to_string().as_str()] {
        return Err(p.err(format!("unsupported model version {header:?}")));
    }
    let n = p.count("states")?;
    let m = p.count("mixtures")?;
    let d = p.count("dim")?;
    let t = p.next_tokens("initial")?;
    let initial = p.floats(&t, n, "initial")?;
    let mut transitions = Vec::with_capacity(n);
    for _ in 0..n {
        let t = p.next_tokens("transition")?;
        transitions.push(p.floats(&t, n, "transition")?);
    }
    let mut states = Vec::with_capacity(n);
    for j in 0..n {
        let t = p.next_tokens("state")?;
        if t != [j.to_string().as_str()] {
            return Err(p.err(format!("expected state {j}")));
        }
        let mut weights = Vec::with_capacity(m);
        let mut comps = Vec::with_capacity(m);
        for _ in 0..m {
            let t = p.next_tokens("component")?;
            if t.len() != 3 + 2 * d || t[1] != "mean" || t[2 + d] != "var" {
                return Err(p.err("component needs `<weight> mean <d values> var <d values>`"));
            }
            weights.push(p.floats(&t[..1], 1, "weight")?[0]);
            let mean = p.floats(&t[2..2 + d], d, "mean")?;
            let var = p.floats(&t[3 + d..], d, "var")?;
            comps.push(DiagGaussian::new(mean, var).map_err(|e| p.err(e))?);
        }
        states.push(GaussianMixture::new(weights, comps).map_err(|e| p.err(e))?);
    }
    HmmModel::new(initial, transitions, states).map_err(|e| p.err(e))
}

pub fn parse_model(text: &str) -> Result<HmmModel> {
    let mut lines = text.lines();
    let model = parse_model_lines(&mut lines)?;
    if let Some(extra) = lines.find(|l| !l.trim().is_empty()) {
        return Err(Error::Format {
            path: "<model>".into(),
            message: format!("trailing content `{extra}`"),
        });
    }
    Ok(model)
}
