use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{FuelClass, SampleTable};
use crate::error::{Error, Result};
use crate::rng;

/// Train/validation/test partition of a table.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: SampleTable,
    pub val: SampleTable,
    pub test: SampleTable,
    /// Classes with fewer than three rows, which cannot reach every split.
    pub small_classes: Vec<FuelClass>,
}

/// Largest-remainder allocation of `n` items over `fractions`.
fn allocate(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut counts: [usize; 3] = [0; 3];
    for (c, e) in counts.iter_mut().zip(&exact) {
        *c = e.floor() as usize;
    }
    let mut remaining = n - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if remaining == 0 {
            break;
        }
        if fractions[i] > 0.0 {
            counts[i] += 1;
            remaining -= 1;
        }
    }
    counts
}

/// Per-class stratified partition, deterministic under `seed`.
pub fn stratified_split(table: &SampleTable, fractions: (f64, f64, f64), seed: u64) -> Result<Split> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions {fractions:?} must be in [0,1] and sum to 1"
        )));
    }
    let mut strata: BTreeMap<Option<FuelClass>, Vec<usize>> = BTreeMap::new();
    for (i, r) in table.rows().iter().enumerate() {
        strata.entry(r.label).or_default().push(i);
    }
    let mut parts: [Vec<usize>; 3] = Default::default();
    let mut small_classes = Vec::new();
    for (k, (label, mut idx)) in strata.into_iter().enumerate() {
        if let Some(c) = label {
            if idx.len() < 3 {
                small_classes.push(c);
            }
        }
        idx.shuffle(&mut rng::seeded(rng::derive(seed, k as u64)));
        let counts = allocate(idx.len(), f);
        let mut it = idx.into_iter();
        for (part, &n) in parts.iter_mut().zip(&counts) {
            part.extend(it.by_ref().take(n));
        }
    }
    for p in parts.iter_mut() {
        p.sort_unstable();
    }
    Ok(Split {
        train: table.select(&parts[0]),
        val: table.select(&parts[1]),
        test: table.select(&parts[2]),
        small_classes,
    })
}
