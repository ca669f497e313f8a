//! Plain-text checkpoint format, one record per line:
//!
//! ```text
//! aris-checkpoint,1
//! input_dim,<n>
//! hidden,<w1>;<w2>;...
//! activation,<tanh|identity>
//! head,<name>,<categorical|scalar>,<width>      (one line per head)
//! seed,<u64>
//! step,<u64>
//! params,<count>
//! <value>                                       (count lines, layer order, row-major)
//! ```
//!
//! Values use Rust's shortest round-trip exponent formatting, so loading a
//! saved checkpoint reproduces every parameter bit for bit.

use std::io::{BufRead, BufReader, Read, Write};

use super::{Activation, HeadKind, HeadSpec, MlpSpec, PolicyParams};
use crate::{Error, Result};

const MAGIC: &str = "aris-checkpoint,1";

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: PolicyParams,
    pub seed: u64,
    pub step: u64,
}

pub fn save_checkpoint<W: Write>(ckpt: &Checkpoint, mut w: W) -> Result<()> {
    let spec = ckpt.params.spec();
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "input_dim,{}", spec.input_dim)?;
    let hidden: Vec<String> = spec.hidden.iter().map(|h| h.to_string()).collect();
    writeln!(w, "hidden,{}", hidden.join(";"))?;
    writeln!(w, "activation,{}", spec.activation.name())?;
    for h in &spec.heads {
        writeln!(w, "head,{},{},{}", h.name, h.kind.name(), h.output_dim)?;
    }
    writeln!(w, "seed,{}", ckpt.seed)?;
    writeln!(w, "step,{}", ckpt.step)?;
    writeln!(w, "params,{}", ckpt.params.len())?;
    for v in ckpt.params.flat() {
        writeln!(w, "{v:e}")?;
    }
    w.flush()?;
    Ok(())
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn field<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(','))
        .ok_or_else(|| bad(format!("expected `{key},...`, got `{line}`")))
}

fn num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| bad(format!("invalid {what}: `{s}`")))
}

pub fn load_checkpoint<R: Read>(r: R) -> Result<Checkpoint> {
    let mut lines = BufReader::new(r).lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| bad("unexpected end of file"))?
            .map_err(Error::from)
    };
    if next()?.trim() != MAGIC {
        return Err(bad("missing header"));
    }
    let input_dim = num(field(&next()?, "input_dim")?, "input_dim")?;
    let hidden = field(&next()?, "hidden")?
        .split(';')
        .map(|s| num(s, "hidden width"))
        .collect::<Result<Vec<usize>>>()?;
    let act_line = next()?;
    let activation = Activation::from_name(field(&act_line, "activation")?.trim())
        .ok_or_else(|| bad(format!("unknown activation in `{act_line}`")))?;
    let mut heads = Vec::new();
    let mut line = next()?;
    while let Ok(rest) = field(&line, "head") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() != 3 {
            return Err(bad(format!("malformed head line `{line}`")));
        }
        heads.push(HeadSpec {
            name: parts[0].to_string(),
            kind: HeadKind::from_name(parts[1]).ok_or_else(|| bad(format!("unknown head kind `{}`", parts[1])))?,
            output_dim: num(parts[2], "head width")?,
        });
        line = next()?;
    }
    let seed = num(field(&line, "seed")?, "seed")?;
    let step = num(field(&next()?, "step")?, "step")?;
    let count: usize = num(field(&next()?, "params")?, "parameter count")?;
    let mut data = Vec::with_capacity(count);
    for _ in 0..count {
        data.push(num::<f64>(&next()?, "parameter")?);
    }
    let spec = MlpSpec { input_dim, hidden, activation, heads };
    let params = PolicyParams::from_flat(spec, data)?;
    Ok(Checkpoint { params, seed, step })
}
