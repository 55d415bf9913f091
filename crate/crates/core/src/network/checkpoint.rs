//! Plain-text checkpoints. Parameters are written with 17 significant
//! digits, which round-trips every `f64` bit-exactly.
//!
//! ```text
//! network v1
//! scheme cfmlp
//! input_dim 7
//! hidden 5 2
//! output_dim 1
//! hidden_activation tanh
//! output_activation linear
//! params 71
//! 1.2345678901234567e-1
//! ...
//! ```

use std::fmt::Write;

use super::{Network, NetworkError, Topology};

pub(crate) fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_network_block(out: &mut String, net: &Network) {
    let t = net.topology();
    let hidden: Vec<String> = t.hidden.iter().map(|h| h.to_string()).collect();
    writeln!(out, "network v1").unwrap();
    writeln!(out, "scheme {}", t.scheme.name()).unwrap();
    writeln!(out, "input_dim {}", t.input_dim).unwrap();
    writeln!(out, "hidden {}", hidden.join(" ")).unwrap();
    writeln!(out, "output_dim {}", t.output_dim).unwrap();
    writeln!(out, "hidden_activation {}", t.hidden_activation.name()).unwrap();
    writeln!(out, "output_activation {}", t.output_activation.name()).unwrap();
    write_values(out, "params", net.params());
}

pub(crate) fn write_values(out: &mut String, key: &str, values: &[f64]) {
    writeln!(out, "{key} {}", values.len()).unwrap();
    for v in values {
        out.push_str(&format_f64(*v));
        out.push('\n');
    }
}

fn bad(msg: impl Into<String>) -> NetworkError {
    NetworkError::Checkpoint(msg.into())
}

pub(crate) fn next_line<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
) -> Result<&'a str, NetworkError> {
    for line in lines.by_ref() {
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            return Ok(t);
        }
    }
    Err(bad("unexpected end of file"))
}

/// Reads `key value...` and returns the value part.
pub(crate) fn expect_key<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    key: &str,
) -> Result<&'a str, NetworkError> {
    let line = next_line(lines)?;
    match line.split_once(char::is_whitespace) {
        Some((k, rest)) if k == key => Ok(rest.trim()),
        None if line == key => Ok(""),
        _ => Err(bad(format!("expected `{key}`, found `{line}`"))),
    }
}

pub(crate) fn parse_usize(s: &str, what: &str) -> Result<usize, NetworkError> {
    s.parse().map_err(|_| bad(format!("bad {what}: `{s}`")))
}

pub(crate) fn read_values<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
    key: &str,
) -> Result<Vec<f64>, NetworkError> {
    let n = parse_usize(expect_key(lines, key)?, key)?;
    (0..n)
        .map(|_| {
            let l = next_line(lines)?;
            l.parse::<f64>()
                .map_err(|_| bad(format!("bad number `{l}`")))
        })
        .collect()
}

pub fn parse_network_block<'a>(
    lines: &mut impl Iterator<Item = &'a str>,
) -> Result<Network, NetworkError> {
    let header = next_line(lines)?;
    if header != "network v1" {
        return Err(bad(format!("expected `network v1`, found `{header}`")));
    }
    let scheme = expect_key(lines, "scheme")?.parse()?;
    let input_dim = parse_usize(expect_key(lines, "input_dim")?, "input_dim")?;
    let hidden = expect_key(lines, "hidden")?
        .split_whitespace()
        .map(|h| parse_usize(h, "hidden size"))
        .collect::<Result<Vec<_>, _>>()?;
    let output_dim = parse_usize(expect_key(lines, "output_dim")?, "output_dim")?;
    let hidden_activation = expect_key(lines, "hidden_activation")?.parse()?;
    let output_activation = expect_key(lines, "output_activation")?.parse()?;
    let topology = Topology {
        scheme,
        input_dim,
        hidden,
        output_dim,
        hidden_activation,
        output_activation,
    };
    let theta = read_values(lines, "params")?;
    Network::from_params(topology, theta)
}
