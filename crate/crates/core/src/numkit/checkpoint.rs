//! Parameter checkpoints.
//!
//! Text layout: the magic line, then `d_in d_hidden layers`, then the
//! epsilons, then one line per weight matrix (`w1`, `w2` for each layer) with
//! its entries in row-major order. Values use shortest round-trip formatting.

use std::fs;
use std::path::Path;

use super::ParamSet;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "GLAMPARAMS1";

pub fn save_params(params: &ParamSet, path: &Path) -> Result<()> {
    let mut out = format!(
        "{CHECKPOINT_MAGIC}\n{} {} {}\n",
        params.d_in,
        params.d_hidden,
        params.num_layers()
    );
    let join = |it: &mut dyn Iterator<Item = &f64>| it.map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ");
    out.push_str(&join(&mut params.epsilons.iter()));
    out.push('\n');
    for l in &params.layers {
        out.push_str(&join(&mut l.w1.iter()));
        out.push('\n');
        out.push_str(&join(&mut l.w2.iter()));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: &Path) -> Result<ParamSet> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let mut next = |what: &str| {
        lines
            .next()
            .ok_or_else(|| Error::format(path, 0, format!("truncated checkpoint: missing {what}")))
    };
    let (ln, magic) = next("magic")?;
    if magic.trim() != CHECKPOINT_MAGIC {
        return Err(Error::format(path, ln + 1, "bad checkpoint magic"));
    }
    let (ln, dims) = next("dimensions")?;
    let dims: Vec<usize> = dims
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::format(path, ln + 1, "bad dimension")))
        .collect::<Result<_>>()?;
    let [d_in, d_hidden, layers] = dims[..] else {
        return Err(Error::format(path, ln + 1, "expected three dimensions"));
    };
    let mut params = ParamSet::zeros(d_in, d_hidden, layers);
    let parse_row = |ln: usize, line: &str, expected: usize| -> Result<Vec<f64>> {
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| Error::format(path, ln + 1, format!("bad value `{t}`"))))
            .collect::<Result<_>>()?;
        if vals.len() != expected {
            return Err(Error::format(path, ln + 1, format!("expected {expected} values, got {}", vals.len())));
        }
        Ok(vals)
    };
    let (ln, eps) = next("epsilons")?;
    params.epsilons = parse_row(ln, eps, layers)?;
    for l in 0..layers {
        for which in 0..2 {
            let (ln, line) = next("weights")?;
            let w = if which == 0 { &mut params.layers[l].w1 } else { &mut params.layers[l].w2 };
            let vals = parse_row(ln, line, w.len())?;
            for (dst, v) in w.iter_mut().zip(vals) {
                *dst = v;
            }
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::init_params;

    #[test]
    fn round_trip_is_exact() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("p.txt");
        let mut p = init_params(3, 5, 2, 9);
        p.epsilons[1] = 0.25;
        save_params(&p, &path).unwrap();
        assert_eq!(load_params(&path).unwrap(), p);
        assert!(fs::read_to_string(&path).unwrap().starts_with("GLAMPARAMS1\n"));
    }

    #[test]
    fn rejects_wrong_magic() {
        let tmp = tempfile::tempdir().unwrap();
        let path = tmp.path().join("p.txt");
        fs::write(&path, "NOPE\n1 1 1\n0\n0\n0\n").unwrap();
        assert!(load_params(&path).is_err());
    }
}
