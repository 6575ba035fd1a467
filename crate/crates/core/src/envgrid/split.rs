use super::{Dataset, EnvError};
use crate::rng::Stream;

/// Stratified partition by instance. Each class is shuffled independently
/// and cut at `round(cumulative_fraction * n_class)`; instances keep their
/// original relative order inside every part.
pub fn split(ds: &Dataset, fractions: &[f64], rng: &mut Stream) -> Result<Vec<Dataset>, EnvError> {
    if fractions.is_empty() || fractions.iter().any(|f| !(*f >= 0.0)) {
        return Err(EnvError::Spec(format!("invalid split fractions {fractions:?}")));
    }
    let total: f64 = fractions.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(EnvError::Spec(format!("split fractions sum to {total}, not 1")));
    }
    let parts = fractions.iter().filter(|&&f| f > 0.0).count();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.meta.classes];
    for (i, inst) in ds.instances.iter().enumerate() {
        by_class[inst.label].push(i);
    }
    let mut assigned: Vec<Vec<usize>> = vec![Vec::new(); fractions.len()];
    for (class, mut members) in by_class.into_iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < parts {
            return Err(EnvError::Spec(format!(
                "class {class} has {} instances, fewer than {parts} splits",
                members.len()
            )));
        }
        rng.shuffle(&mut members);
        let n = members.len() as f64;
        let mut cum = 0.0;
        let mut start = 0;
        for (k, f) in fractions.iter().enumerate() {
            cum += f;
            let end = if k + 1 == fractions.len() { members.len() } else { (cum * n).round() as usize };
            assigned[k].extend_from_slice(&members[start..end.max(start)]);
            start = end.max(start);
        }
    }
    Ok(assigned
        .into_iter()
        .map(|mut idx| {
            idx.sort_unstable();
            ds.subset(&idx)
        })
        .collect())
}
