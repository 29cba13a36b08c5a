//! Text cache for propagated STT stacks.
//!
//! A cache file holds one or more stacks. Each starts with a short header
//! (model, initial state, times, tolerances) followed by the tensors in the
//! `tensor1m` text form.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::model::DynamicsModel;
use super::stt::{IntegratorStats, SttStack, Tolerances};
use crate::error::{Error, Result};
use crate::tensor::{format_f64, parse_entries, Tensor1m, Vector};

fn join(v: &[f64]) -> String {
    v.iter().map(|x| format_f64(*x)).collect::<Vec<_>>().join(" ")
}

/// Content key for a propagation request.
pub fn cache_key(model: DynamicsModel, x0: &Vector, t0: f64, times: &[f64], order: usize, tol: Tolerances) -> String {
    let desc = format!(
        "{} {}|{}|{}|{}|{}|{} {}",
        model.name(),
        format_f64(model.parameter()),
        join(x0.as_slice()),
        format_f64(t0),
        join(times),
        order,
        format_f64(tol.rtol),
        format_f64(tol.atol)
    );
    let digest = Sha256::digest(desc.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn cache_path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("stt_{}.txt", &key[..16]))
}

pub fn stacks_to_text(stacks: &[SttStack]) -> String {
    let mut s = String::new();
    for st in stacks {
        let _ = writeln!(s, "sttstack");
        let _ = writeln!(s, "model {} {}", st.model.name(), format_f64(st.model.parameter()));
        let _ = writeln!(s, "x0 {}", join(st.x0.as_slice()));
        let _ = writeln!(s, "t0 {}", format_f64(st.t0));
        let _ = writeln!(s, "tf {}", format_f64(st.tf));
        let _ = writeln!(s, "order {}", st.order);
        let _ = writeln!(s, "tolerances {} {}", format_f64(st.tol.rtol), format_f64(st.tol.atol));
        let _ = writeln!(
            s,
            "steps {} {} {}",
            st.stats.accepted_steps, st.stats.rejected_steps, st.stats.evaluations
        );
        let _ = writeln!(s, "xf {}", join(st.xf.as_slice()));
        s.push_str(&Tensor1m::from_matrix(&st.phi).to_text());
        for t in st.psi2.iter().chain(st.psi3.iter()) {
            s.push_str(&t.to_text());
        }
    }
    s
}

fn expect<'a>(tokens: &mut impl Iterator<Item = &'a str>, tag: &str) -> Result<()> {
    match tokens.next() {
        Some(t) if t == tag => Ok(()),
        other => Err(Error::Parse(format!("expected '{tag}', found {other:?}"))),
    }
}

fn number<'a, T: std::str::FromStr>(tokens: &mut impl Iterator<Item = &'a str>) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let t = tokens.next().ok_or_else(|| Error::Parse("unexpected end of cache".into()))?;
    t.parse::<T>().map_err(|e| Error::Parse(format!("{t}: {e}")))
}

pub fn stacks_from_text(text: &str) -> Result<Vec<SttStack>> {
    let mut tokens = text.split_whitespace().peekable();
    let mut out = Vec::new();
    while tokens.peek().is_some() {
        expect(&mut tokens, "sttstack")?;
        expect(&mut tokens, "model")?;
        let name = tokens.next().ok_or_else(|| Error::Parse("missing model name".into()))?;
        let model = DynamicsModel::from_name(name, number(&mut tokens)?)?;
        expect(&mut tokens, "x0")?;
        let x0 = Vector::from_vec(parse_entries(tokens.by_ref(), 6)?);
        expect(&mut tokens, "t0")?;
        let t0 = number(&mut tokens)?;
        expect(&mut tokens, "tf")?;
        let tf = number(&mut tokens)?;
        expect(&mut tokens, "order")?;
        let order: usize = number(&mut tokens)?;
        expect(&mut tokens, "tolerances")?;
        let tol = Tolerances { rtol: number(&mut tokens)?, atol: number(&mut tokens)? };
        expect(&mut tokens, "steps")?;
        let stats = IntegratorStats {
            accepted_steps: number(&mut tokens)?,
            rejected_steps: number(&mut tokens)?,
            evaluations: number(&mut tokens)?,
        };
        expect(&mut tokens, "xf")?;
        let xf = Vector::from_vec(parse_entries(tokens.by_ref(), 6)?);
        let phi = Tensor1m::read_tokens(&mut tokens)?.to_matrix();
        let psi2 = if order >= 2 { Some(Tensor1m::read_tokens(&mut tokens)?) } else { None };
        let psi3 = if order >= 3 { Some(Tensor1m::read_tokens(&mut tokens)?) } else { None };
        out.push(SttStack { model, x0, t0, tf, order, tol, xf, phi, psi2, psi3, stats });
    }
    Ok(out)
}

pub fn write_cache(path: &Path, stacks: &[SttStack]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, stacks_to_text(stacks))?;
    Ok(())
}

pub fn read_cache(path: &Path) -> Result<Vec<SttStack>> {
    stacks_from_text(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::propagate_stt_grid;

    #[test]
    fn round_trip_is_lossless() {
        let x0 = Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let stacks = propagate_stt_grid(DynamicsModel::TwoBodyNondim, &x0, 0.0, &[0.5, 1.0], 3, Tolerances::default())
            .unwrap();
        let back = stacks_from_text(&stacks_to_text(&stacks)).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].phi, stacks[1].phi);
        assert_eq!(back[1].psi3, stacks[1].psi3);
        assert_eq!(back[0].tf, 0.5);
        let k1 = cache_key(DynamicsModel::TwoBodyNondim, &x0, 0.0, &[1.0], 2, Tolerances::default());
        let k2 = cache_key(DynamicsModel::TwoBodyNondim, &x0, 0.0, &[1.0], 3, Tolerances::default());
        assert_ne!(k1, k2);
    }
}
