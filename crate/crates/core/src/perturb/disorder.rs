use super::{require_events, DisorderedText, Permutation, PerturbError};
use crate::rng::StreamRng;

pub fn light_disorder(n: usize, seed: u64) -> Result<Permutation, PerturbError> {
    light_disorder_with(n, &mut StreamRng::unscoped(seed, "light-disorder"))
}

/// One adjacent transposition at a uniformly drawn position in `0..n-1`.
pub fn light_disorder_with(n: usize, rng: &mut StreamRng) -> Result<Permutation, PerturbError> {
    require_events(n)?;
    light_disorder_at(n, rng.below(n - 1))
}

/// Identity with positions `pos` and `pos + 1` exchanged.
pub fn light_disorder_at(n: usize, pos: usize) -> Result<Permutation, PerturbError> {
    require_events(n)?;
    if pos + 1 >= n {
        return Err(PerturbError::InvalidChoice(format!(
            "swap position {pos} out of range for {n} events"
        )));
    }
    let mut mapping: Vec<usize> = (0..n).collect();
    mapping.swap(pos, pos + 1);
    Ok(Permutation(mapping))
}

/// Number of random transpositions applied by severe disorder.
pub fn severe_disorder_swap_count(n: usize) -> usize {
    n.div_ceil(2).max(2)
}

pub fn severe_disorder(n: usize, seed: u64) -> Result<Permutation, PerturbError> {
    severe_disorder_with(n, &mut StreamRng::unscoped(seed, "severe-disorder"))
}

/// `max(2, ceil(n/2))` uniformly drawn transpositions, resampled until the
/// result is neither the identity nor a single adjacent swap.
pub fn severe_disorder_with(n: usize, rng: &mut StreamRng) -> Result<Permutation, PerturbError> {
    require_events(n)?;
    let k = severe_disorder_swap_count(n);
    loop {
        let mut mapping: Vec<usize> = (0..n).collect();
        for _ in 0..k {
            let i = rng.below(n);
            let mut j = rng.below(n - 1);
            if j >= i {
                j += 1;
            }
            mapping.swap(i, j);
        }
        let perm = Permutation(mapping);
        if !perm.is_identity() && perm.adjacent_swap_position().is_none() {
            return Ok(perm);
        }
    }
}

pub fn absolute_disorder(n: usize, seed: u64) -> Result<DisorderedText, PerturbError> {
    absolute_disorder_with(n, &mut StreamRng::unscoped(seed, "absolute-disorder"))
}

/// Adjacent pair `(p, p+1)` drawn uniformly, remaining events shuffled, and the
/// reversed pair inserted as a block at a uniform slot.
pub fn absolute_disorder_with(
    n: usize,
    rng: &mut StreamRng,
) -> Result<DisorderedText, PerturbError> {
    require_events(n)?;
    let p = rng.below(n - 1);
    let mut rest: Vec<usize> = (0..n).filter(|&i| i != p && i != p + 1).collect();
    rng.shuffle(&mut rest);
    let slot = rng.below(rest.len() + 1);
    absolute_disorder_from_choices(n, p, &rest, slot)
}

/// Deterministic constructor: `rest` is the order of the other `n - 2` events and
/// `slot` the insertion index of the `(p+1, p)` block within it.
pub fn absolute_disorder_from_choices(
    n: usize,
    p: usize,
    rest: &[usize],
    slot: usize,
) -> Result<DisorderedText, PerturbError> {
    require_events(n)?;
    if p + 1 >= n {
        return Err(PerturbError::InvalidChoice(format!("pair start {p} out of range")));
    }
    let q = p + 1;
    let mut expected: Vec<usize> = (0..n).filter(|&i| i != p && i != q).collect();
    let mut given = rest.to_vec();
    given.sort_unstable();
    expected.sort_unstable();
    if given != expected {
        return Err(PerturbError::InvalidChoice(
            "rest must hold every event except the pair exactly once".into(),
        ));
    }
    if slot > rest.len() {
        return Err(PerturbError::InvalidChoice(format!("slot {slot} out of range")));
    }
    let mut order = Vec::with_capacity(n);
    order.extend_from_slice(&rest[..slot]);
    order.push(q);
    order.push(p);
    order.extend_from_slice(&rest[slot..]);
    Ok(DisorderedText {
        order,
        target_pair: (p, q),
        inserted: None,
    })
}

pub fn relative_disorder(n: usize, seed: u64) -> Result<DisorderedText, PerturbError> {
    relative_disorder_with(n, &mut StreamRng::unscoped(seed, "relative-disorder"))
}

/// Pair `(p, p+1)` drawn uniformly among pairs with a later event, then a later
/// event `k` drawn uniformly and moved between them.
pub fn relative_disorder_with(
    n: usize,
    rng: &mut StreamRng,
) -> Result<DisorderedText, PerturbError> {
    require_events(n)?;
    // Admissible p: 0..=n-3, so that q = p + 1 has at least one successor.
    let p = rng.below(n - 2);
    let k = rng.in_range(p + 2, n - 1);
    relative_disorder_from_choices(n, p, k)
}

pub fn relative_disorder_from_choices(
    n: usize,
    p: usize,
    k: usize,
) -> Result<DisorderedText, PerturbError> {
    require_events(n)?;
    let q = p + 1;
    if q >= n || k <= q || k >= n {
        return Err(PerturbError::InvalidChoice(format!(
            "no admissible relative disorder for pair ({p}, {q}) and inserted event {k} among {n}"
        )));
    }
    let mut order = Vec::with_capacity(n);
    for i in 0..n {
        if i == k {
            continue;
        }
        order.push(i);
        if i == p {
            order.push(k);
        }
    }
    Ok(DisorderedText {
        order,
        target_pair: (p, q),
        inserted: Some(k),
    })
}
