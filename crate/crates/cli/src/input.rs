//! Dataset sources: a CSV path or an inline generator spec.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use radius_kmeans::{make_1d_triple_uniform, make_two_moons, Dataset64};

/// Loads `spec`, which is either a CSV path or `two-moons[:k=v,...]` /
/// `triple-uniform[:k=v,...]`. A generator spec without `seed=` uses
/// `default_seed`, so seed sweeps regenerate the data.
pub fn load(spec: &str, default_seed: u64) -> Result<Dataset64> {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    match name {
        "two-moons" | "triple-uniform" => generate(name, &parse_options(rest)?, default_seed),
        _ => Dataset64::load_csv(Path::new(spec)).with_context(|| format!("reading dataset {spec}")),
    }
}

/// Whether the data depends on the run seed.
pub fn is_seeded_generator(spec: &str) -> bool {
    let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
    matches!(name, "two-moons" | "triple-uniform") && !parse_options(rest).is_ok_and(|o| o.contains_key("seed"))
}

fn parse_options(rest: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for part in rest.split(',').filter(|p| !p.trim().is_empty()) {
        let Some((k, v)) = part.split_once('=') else {
            bail!("generator option {part:?} is not key=value");
        };
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

fn get<T: std::str::FromStr>(opts: &BTreeMap<String, String>, key: &str, default: T) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    match opts.get(key) {
        None => Ok(default),
        Some(v) => v.parse().map_err(|e| anyhow::anyhow!("generator option {key}={v}: {e}")),
    }
}

pub fn generate(name: &str, opts: &BTreeMap<String, String>, default_seed: u64) -> Result<Dataset64> {
    let seed = get(opts, "seed", default_seed)?;
    let known: &[&str] = match name {
        "two-moons" => &["n", "imbalance", "noise", "seed"],
        _ => &["counts", "seed"],
    };
    if let Some(k) = opts.keys().find(|k| !known.contains(&k.as_str())) {
        bail!("unknown {name} option {k:?}");
    }
    let data = match name {
        "two-moons" => {
            let imbalance: f64 = get(opts, "imbalance", 0.85)?;
            make_two_moons(get(opts, "n", 100)?, (imbalance, 1.0 - imbalance), get(opts, "noise", 0.05)?, seed)?
        }
        _ => {
            let counts: Vec<usize> = match opts.get("counts") {
                None => vec![51, 26, 25],
                Some(v) => v.split('/').map(|c| c.trim().parse()).collect::<Result<_, _>>()?,
            };
            let counts: [usize; 3] = counts.try_into().map_err(|_| anyhow::anyhow!("counts needs three values a/b/c"))?;
            make_1d_triple_uniform(counts, seed)?
        }
    };
    Ok(data)
}
