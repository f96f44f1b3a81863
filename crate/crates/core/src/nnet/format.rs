//! Line-oriented text format for trained nets.
//!
//! An affine net is written as
//!
//! ```text
//! fairpol-affine-net 1
//! widths 4 32 1
//! hidden relu
//! output identity                 (or: output shifted-sigmoid <lo> <hi>)
//! w <out*in values, row-major>    one w/b pair per layer, in order
//! b <out values>
//! ```
//!
//! A structured outcome net is the header `fairpol-structured-net 1`
//! followed by three affine blocks, each introduced by `net f`, `net g` and
//! `net h`. Values use the shortest representation that parses back to the
//! same `f64`, so a write/read cycle is exact.

use std::fmt::Write as _;

use ndarray::{Array1, Array2};

use super::{AffineNet, Layer, OutputTransform, StructuredOutcomeNet};
use crate::error::contract;
use crate::Result;

const AFFINE_MAGIC: &str = "fairpol-affine-net 1";
const STRUCTURED_MAGIC: &str = "fairpol-structured-net 1";

fn join(values: impl Iterator<Item = f64>) -> String {
    let mut s = String::new();
    for (i, v) in values.enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v}").expect("string write");
    }
    s
}

pub fn write_affine(net: &AffineNet) -> String {
    let mut out = String::new();
    out.push_str(AFFINE_MAGIC);
    out.push('\n');
    let widths: Vec<String> = net.widths().iter().map(|w| w.to_string()).collect();
    writeln!(out, "widths {}", widths.join(" ")).unwrap();
    out.push_str("hidden relu\n");
    match net.output_transform() {
        OutputTransform::Identity => out.push_str("output identity\n"),
        OutputTransform::ShiftedSigmoid { lo, hi } => {
            writeln!(out, "output shifted-sigmoid {lo} {hi}").unwrap()
        }
    }
    for layer in net.layers() {
        writeln!(out, "w {}", join(layer.weights.iter().copied())).unwrap();
        writeln!(out, "b {}", join(layer.bias.iter().copied())).unwrap();
    }
    out
}

pub fn write_structured(net: &StructuredOutcomeNet) -> String {
    let mut out = String::new();
    out.push_str(STRUCTURED_MAGIC);
    out.push('\n');
    for (name, sub) in [("f", &net.f_net), ("g", &net.g_net), ("h", &net.h_net)] {
        writeln!(out, "net {name}").unwrap();
        out.push_str(&write_affine(sub));
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str)> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if !t.is_empty() {
                return Ok((i + 1, t));
            }
        }
        Err(contract("unexpected end of net file"))
    }

    fn keyed(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (no, line) = self.next()?;
        let rest = line
            .strip_prefix(key)
            .filter(|r| r.is_empty() || r.starts_with(' '))
            .ok_or_else(|| contract(format!("line {no}: expected `{key}`, got `{line}`")))?;
        Ok((no, rest.trim()))
    }
}

fn parse_floats(no: usize, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| contract(format!("line {no}: bad number `{t}`")))
        })
        .collect()
}

fn read_affine_block(lines: &mut Lines<'_>) -> Result<AffineNet> {
    let (no, magic) = lines.next()?;
    if magic != AFFINE_MAGIC {
        return Err(contract(format!("line {no}: expected `{AFFINE_MAGIC}`")));
    }
    let (no, widths) = lines.keyed("widths")?;
    let widths: Vec<usize> = widths
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| contract(format!("line {no}: bad width `{t}`"))))
        .collect::<Result<_>>()?;
    if widths.len() < 2 {
        return Err(contract(format!("line {no}: need at least two widths")));
    }
    let (no, hidden) = lines.keyed("hidden")?;
    if hidden != "relu" {
        return Err(contract(format!("line {no}: unsupported hidden activation `{hidden}`")));
    }
    let (no, output) = lines.keyed("output")?;
    let output = match output.split_whitespace().collect::<Vec<_>>().as_slice() {
        ["identity"] => OutputTransform::Identity,
        ["shifted-sigmoid", lo, hi] => OutputTransform::ShiftedSigmoid {
            lo: parse_floats(no, lo)?[0],
            hi: parse_floats(no, hi)?[0],
        },
        _ => return Err(contract(format!("line {no}: bad output transform `{output}`"))),
    };
    let mut layers = Vec::new();
    for pair in widths.windows(2) {
        let (no, w) = lines.keyed("w")?;
        let w = parse_floats(no, w)?;
        let weights = Array2::from_shape_vec((pair[1], pair[0]), w)
            .map_err(|_| contract(format!("line {no}: weight count mismatch")))?;
        let (no, b) = lines.keyed("b")?;
        let b = parse_floats(no, b)?;
        if b.len() != pair[1] {
            return Err(contract(format!("line {no}: bias count mismatch")));
        }
        layers.push(Layer {
            weights,
            bias: Array1::from_vec(b),
        });
    }
    AffineNet::from_layers(layers, output)
}

pub fn read_affine(text: &str) -> Result<AffineNet> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    read_affine_block(&mut lines)
}

pub fn read_structured(text: &str) -> Result<StructuredOutcomeNet> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
    };
    let (no, magic) = lines.next()?;
    if magic != STRUCTURED_MAGIC {
        return Err(contract(format!("line {no}: expected `{STRUCTURED_MAGIC}`")));
    }
    let mut nets = Vec::with_capacity(3);
    for name in ["f", "g", "h"] {
        let (no, got) = lines.keyed("net")?;
        if got != name {
            return Err(contract(format!("line {no}: expected subnet `{name}`")));
        }
        nets.push(read_affine_block(&mut lines)?);
    }
    let h = nets.pop().unwrap();
    let g = nets.pop().unwrap();
    let f = nets.pop().unwrap();
    StructuredOutcomeNet::new(f, g, h)
}
