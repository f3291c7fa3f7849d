//! Plain-text weight files shared by networks and feature extractors.
//!
//! ```text
//! reglab-dense v1
//! dims 2 32 8
//! activations leaky_relu identity
//! normalization_mean 0.1 -0.3      (optional)
//! normalization_std 1.2 0.9        (optional)
//! params 360
//! <360 values, row-major weights then bias per layer, any whitespace>
//! ```
//!
//! Values are written in shortest round-trip form, so save/load is exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::{Activation, Network};

const MAGIC: &str = "reglab-dense v1";

/// Per-coordinate input normalization `(x - mean) / std`.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalization {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub network: Network,
    pub normalization: Option<Normalization>,
}

fn join(xs: impl IntoIterator<Item = String>) -> String {
    xs.into_iter().collect::<Vec<_>>().join(" ")
}

pub fn to_text(network: &Network, normalization: Option<&Normalization>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "dims {}", join(network.dims().iter().map(|d| d.to_string())));
    let _ = writeln!(out, "activations {}", join(network.activations().iter().map(|a| a.name().to_string())));
    if let Some(n) = normalization {
        let _ = writeln!(out, "normalization_mean {}", join(n.mean.iter().map(|v| format!("{v:e}"))));
        let _ = writeln!(out, "normalization_std {}", join(n.std.iter().map(|v| format!("{v:e}"))));
    }
    let _ = writeln!(out, "params {}", network.num_params());
    for p in network.params() {
        let _ = writeln!(out, "{p:e}");
    }
    out
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_floats(line: usize, fields: &[&str]) -> Result<Vec<f64>> {
    fields
        .iter()
        .map(|f| f.parse::<f64>().map_err(|_| parse_err(line, format!("'{f}' is not a number"))))
        .collect()
}

pub fn parse(text: &str) -> Result<WeightFile> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        Some((n, l)) => return Err(parse_err(n, format!("expected '{MAGIC}', found '{l}'"))),
        None => return Err(parse_err(1, "empty weight file")),
    }
    let mut dims = None;
    let mut acts = None;
    let mut mean = None;
    let mut std = None;
    let mut n_params = None;
    let mut header_end = 0;
    for (n, l) in lines.by_ref() {
        let fields: Vec<&str> = l.split_whitespace().collect();
        match fields[0] {
            "dims" => {
                dims = Some(
                    fields[1..]
                        .iter()
                        .map(|f| f.parse::<usize>().map_err(|_| parse_err(n, format!("bad dimension '{f}'"))))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "activations" => {
                acts = Some(
                    fields[1..]
                        .iter()
                        .map(|f| Activation::parse(f).map_err(|e| parse_err(n, e.to_string())))
                        .collect::<Result<Vec<_>>>()?,
                )
            }
            "normalization_mean" => mean = Some(parse_floats(n, &fields[1..])?),
            "normalization_std" => std = Some(parse_floats(n, &fields[1..])?),
            "params" => {
                let count = fields.get(1).and_then(|f| f.parse::<usize>().ok());
                n_params = Some(count.ok_or_else(|| parse_err(n, "params needs a count"))?);
                header_end = n;
                break;
            }
            other => return Err(parse_err(n, format!("unknown header key '{other}'"))),
        }
    }
    let n_params = n_params.ok_or_else(|| parse_err(header_end.max(1), "missing 'params' line"))?;
    let dims = dims.ok_or_else(|| parse_err(header_end, "missing 'dims' line"))?;
    let acts = acts.ok_or_else(|| parse_err(header_end, "missing 'activations' line"))?;
    let mut params = Vec::with_capacity(n_params);
    for (n, l) in lines {
        params.extend(parse_floats(n, &l.split_whitespace().collect::<Vec<_>>())?);
    }
    if params.len() != n_params {
        return Err(parse_err(header_end, format!("declared {n_params} parameters, found {}", params.len())));
    }
    let network = Network::from_params(&dims, &acts, params).map_err(|e| parse_err(header_end, e.to_string()))?;
    let normalization = match (mean, std) {
        (Some(mean), Some(std)) => Some(Normalization { mean, std }),
        (None, None) => None,
        _ => return Err(parse_err(header_end, "normalization needs both mean and std")),
    };
    Ok(WeightFile { network, normalization })
}

pub fn save(path: &Path, network: &Network, normalization: Option<&Normalization>) -> Result<()> {
    std::fs::write(path, to_text(network, normalization)).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

pub fn load(path: &Path) -> Result<WeightFile> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn text_round_trip_is_exact(seed in any::<u64>(), hidden in 1usize..6, scale in -1e3f64..1e3) {
            let mut net = Network::new(&[2, hidden, 3], &[Activation::Tanh, Activation::Identity], seed).unwrap();
            net.update_params(|p| p.iter_mut().for_each(|v| *v *= scale));
            let norm = Normalization { mean: vec![scale, -0.1], std: vec![0.3, 1.0 / 3.0] };
            let back = parse(&to_text(&net, Some(&norm))).unwrap();
            prop_assert_eq!(back.network, net);
            prop_assert_eq!(back.normalization, Some(norm));
        }
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let net = Network::new(&[1, 1], &[Activation::Identity], 0).unwrap();
        let text = to_text(&net, None);
        let bad = text.replace("identity", "softsign");
        assert!(matches!(parse(&bad), Err(Error::Parse { line: 3, .. })));
        let truncated: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
        assert!(matches!(parse(&truncated), Err(Error::Parse { .. })));
        assert!(matches!(parse("nonsense"), Err(Error::Parse { line: 1, .. })));
    }
}
