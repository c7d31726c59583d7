mod common;

use common::random_state;
use parareal_core::propagator::checkpoint::{read_state, write_state, Checkpoint, CheckpointError};
use parareal_core::solver::{integrate_history, ModelParams, StepHistory};
use parareal_core::state::Grid;
use proptest::prelude::*;

fn grid() -> Grid {
    Grid::new(8, 6, 5e4, 4e4).unwrap()
}

fn history(seed: u64, steps: u64) -> StepHistory {
    let s = random_state(grid(), seed, 0);
    let p = ModelParams {
        velocity_cap: 1e6,
        ..ModelParams::default()
    };
    integrate_history(StepHistory::cold(s), steps * 600, 600, &p).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn state_round_trip_is_bit_identical(seed in any::<u64>(), t in 0u64..10_000_000, slice in -1i32..100, it in -1i32..100) {
        let s = random_state(grid(), seed, t);
        let bytes = Checkpoint::from_state(&s, None, slice, it).encode();
        let (back, hist) = Checkpoint::decode(&bytes).unwrap().into_state(grid()).unwrap();
        prop_assert!(back.bit_eq(&s));
        prop_assert!(hist.is_none());
        prop_assert_eq!(back.time(), t);
    }

    #[test]
    fn history_round_trip_is_bit_identical(seed in any::<u64>(), steps in 1u64..5) {
        let h = history(seed, steps);
        let bytes = Checkpoint::from_state(h.current(), Some(&h), 0, 0).encode();
        let (back, hist) = Checkpoint::decode(&bytes).unwrap().into_state(grid()).unwrap();
        let hist = hist.unwrap();
        prop_assert!(back.bit_eq(h.current()));
        prop_assert_eq!(hist.len(), h.len());
        for (a, b) in hist.tendencies().iter().zip(h.tendencies()) {
            prop_assert!(a.0.bit_eq(&b.0));
        }
    }

    #[test]
    fn any_single_bit_flip_is_rejected(seed in any::<u64>(), pos in any::<prop::sample::Index>(), bit in 0u8..8) {
        let s = random_state(grid(), seed, 0);
        let mut bytes = Checkpoint::from_state(&s, None, 0, 0).encode();
        let i = pos.index(bytes.len());
        bytes[i] ^= 1 << bit;
        prop_assert!(Checkpoint::decode(&bytes).is_err());
    }

    #[test]
    fn any_truncation_is_rejected(seed in any::<u64>(), cut in any::<prop::sample::Index>()) {
        let s = random_state(grid(), seed, 0);
        let bytes = Checkpoint::from_state(&s, None, 0, 0).encode();
        let n = cut.index(bytes.len());
        prop_assert!(Checkpoint::decode(&bytes[..n]).is_err());
    }
}

#[test]
fn file_round_trip_with_history() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested/state.prcp");
    let h = history(7, 3);
    write_state(&path, h.current(), Some(&h), 4, 2).unwrap();
    let (s, hist, clock) = read_state(&path, grid()).unwrap();
    assert!(s.bit_eq(h.current()));
    assert_eq!(hist.unwrap().len(), h.len());
    assert_eq!((clock.slice, clock.iteration, clock.time), (4, 2, h.current().time()));
}

#[test]
fn garbage_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("junk.prcp");
    std::fs::write(&path, b"not a checkpoint at all").unwrap();
    assert!(matches!(read_state(&path, grid()), Err(CheckpointError::Corrupt(_))));
}
