use crate::error::{contract, Result};

/// Evaluates a layer list in order. `deps[i]` lists the inputs of layer
/// `i`; layer 0 is the graph input and is never evaluated. Each activation
/// is dropped right after its last consumer, except the layers in `keep`,
/// which are returned in order.
pub(crate) fn execute<T>(
    deps: &[&[usize]],
    input: &T,
    keep: &[usize],
    mut eval: impl FnMut(usize, &[&T]) -> Result<T>,
) -> Result<Vec<T>> {
    if keep.iter().any(|&k| k == 0 || k >= deps.len()) {
        contract!("executor outputs must be evaluated layers");
    }
    let mut last: Vec<usize> = (0..deps.len()).collect();
    for (i, d) in deps.iter().enumerate() {
        for &j in d.iter() {
            last[j] = last[j].max(i);
        }
    }
    for &k in keep {
        last[k] = usize::MAX;
    }
    let mut values: Vec<Option<T>> = (0..deps.len()).map(|_| None).collect();
    for i in 1..deps.len() {
        let out = {
            let args: Vec<&T> = deps[i]
                .iter()
                .map(|&j| if j == 0 { input } else { values[j].as_ref().expect("input still live") })
                .collect();
            eval(i, &args)?
        };
        values[i] = Some(out);
        for &j in deps[i] {
            if last[j] == i {
                values[j] = None;
            }
        }
    }
    Ok(keep.iter().map(|&k| values[k].take().expect("kept output")).collect())
}
