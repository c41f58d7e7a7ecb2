use super::update::canonical;
use super::ClientUpdate;
use crate::error::Result;
use crate::model::ParameterVector;

/// Coordinate-wise median of the client weights. Sample counts are ignored;
/// with an even number of clients the two middle values are averaged.
pub fn aggregate_fedmedian(global: &ParameterVector, updates: &[ClientUpdate]) -> Result<ParameterVector> {
    let ordered = canonical(global, updates)?;
    let k = ordered.len();
    let mid = k / 2;
    let mut column = vec![0.0; k];
    let out = (0..global.len())
        .map(|i| {
            for (slot, u) in column.iter_mut().zip(&ordered) {
                *slot = u.new_params[i];
            }
            let (lower, &mut upper, _) = column.select_nth_unstable_by(mid, f64::total_cmp);
            if k % 2 == 1 {
                upper
            } else {
                let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                (below + upper) / 2.0
            }
        })
        .collect();
    Ok(ParameterVector::new(out))
}
