use crate::error::{Error, Result};

/// Largest frame-count gap [`reconcile_durations`] will absorb.
pub const MAX_RECONCILE_GAP: usize = 2;

/// Splits `n_frames` evenly among `n_phonemes`; the remainder goes to the last one.
pub fn uniform_alignment(n_phonemes: usize, n_frames: usize) -> Result<Vec<u32>> {
    if n_phonemes == 0 {
        return Err(Error::Data("cannot align an empty phoneme sequence".into()));
    }
    let base = n_frames / n_phonemes;
    let mut d = vec![base as u32; n_phonemes];
    d[n_phonemes - 1] += (n_frames - base * n_phonemes) as u32;
    Ok(d)
}

/// Makes `durations` sum to `n_frames` by adjusting the final phonemes, as
/// long as the gap is at most [`MAX_RECONCILE_GAP`] frames.
pub fn reconcile_durations(durations: &[u32], n_frames: usize) -> Result<Vec<u32>> {
    let sum: usize = durations.iter().map(|&d| d as usize).sum();
    let gap = sum.abs_diff(n_frames);
    if gap > MAX_RECONCILE_GAP {
        return Err(Error::Data(format!(
            "durations sum to {sum} frames but the representation has {n_frames}"
        )));
    }
    let mut out = durations.to_vec();
    if n_frames > sum {
        *out.last_mut().ok_or_else(|| Error::Data("empty duration list".into()))? += gap as u32;
    } else {
        let mut excess = gap as u32;
        for d in out.iter_mut().rev() {
            let take = excess.min(*d);
            *d -= take;
            excess -= take;
            if excess == 0 {
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_split_gives_remainder_to_last() {
        assert_eq!(uniform_alignment(3, 10).unwrap(), vec![3, 3, 4]);
        assert_eq!(uniform_alignment(4, 2).unwrap(), vec![0, 0, 0, 2]);
        assert!(uniform_alignment(0, 5).is_err());
    }

    #[test]
    fn small_gaps_are_absorbed() {
        assert_eq!(reconcile_durations(&[3, 4], 9).unwrap(), vec![3, 6]);
        assert_eq!(reconcile_durations(&[3, 4], 5).unwrap(), vec![3, 2]);
        assert_eq!(reconcile_durations(&[3, 1], 2).unwrap(), vec![2, 0]);
        assert!(reconcile_durations(&[3, 4], 10).is_err());
        assert!(reconcile_durations(&[3, 4], 4).is_err());
    }

    proptest! {
        #[test]
        fn reconciled_durations_sum_to_frames(d in prop::collection::vec(0u32..20, 1..12), delta in -2i64..=2) {
            let sum: i64 = d.iter().map(|&x| x as i64).sum();
            let target = (sum + delta).max(0) as usize;
            let r = reconcile_durations(&d, target).unwrap();
            prop_assert_eq!(r.iter().map(|&x| x as usize).sum::<usize>(), target);
        }

        #[test]
        fn uniform_alignment_covers_all_frames(n in 1usize..30, frames in 0usize..500) {
            let d = uniform_alignment(n, frames).unwrap();
            prop_assert_eq!(d.iter().map(|&x| x as usize).sum::<usize>(), frames);
            prop_assert!(d[..n - 1].iter().all(|&x| x == d[0]));
        }
    }
}
