use std::collections::HashMap;

use super::metrics::{ForecastSet, SeriesValues};
use crate::{Error, Result};

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Elementwise median across models, per series and horizon step.
///
/// Items are matched by id and keep the order of the first set. An even
/// number of models yields the mean of the two central values.
pub fn ensemble_median(sets: &[ForecastSet]) -> Result<ForecastSet> {
    let first = sets
        .first()
        .ok_or_else(|| Error::Misaligned("ensemble of zero forecast sets".into()))?;
    let lookups: Vec<HashMap<&str, &SeriesValues>> = sets
        .iter()
        .map(|s| s.items.iter().map(|i| (i.item_id.as_str(), i)).collect())
        .collect();
    for (s, lookup) in sets.iter().zip(&lookups) {
        if s.items.len() != first.items.len() || lookup.len() != s.items.len() {
            return Err(Error::Misaligned(format!(
                "forecast set {} does not cover the same series as {}",
                s.model_id, first.model_id
            )));
        }
    }
    let mut items = Vec::with_capacity(first.items.len());
    let mut column = Vec::with_capacity(sets.len());
    for item in &first.items {
        let members: Vec<&SeriesValues> = lookups
            .iter()
            .map(|l| {
                l.get(item.item_id.as_str())
                    .copied()
                    .filter(|m| m.offset == item.offset && m.values.len() == item.values.len())
                    .ok_or_else(|| {
                        Error::Misaligned(format!("item {} differs across models", item.item_id))
                    })
            })
            .collect::<Result<_>>()?;
        let values = (0..item.values.len())
            .map(|i| {
                column.clear();
                column.extend(members.iter().map(|m| m.values[i]));
                median(&mut column)
            })
            .collect();
        items.push(SeriesValues {
            item_id: item.item_id.clone(),
            offset: item.offset,
            values,
        });
    }
    let ids: Vec<&str> = sets.iter().map(|s| s.model_id.as_str()).collect();
    Ok(ForecastSet {
        model_id: format!("median({})", ids.join(",")),
        dataset_id: first.dataset_id.clone(),
        items,
    })
}
