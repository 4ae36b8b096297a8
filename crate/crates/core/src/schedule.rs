//! Multiscale frequency continuation schedules.
//!
//! A schedule is an ordered list of blocks; each block holds one or
//! more frequencies inverted concurrently for a fixed iteration count.
//! Cycles expand low-to-high with the first frequency of each cycle
//! getting the longer warm-up count.

use serde::{Deserialize, Serialize};

use crate::error::{EfwiError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleBlock {
    pub freqs_hz: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencySchedule {
    pub blocks: Vec<ScheduleBlock>,
}

impl FrequencySchedule {
    pub fn new(blocks: Vec<ScheduleBlock>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(EfwiError::InvalidSchedule("no blocks".into()));
        }
        for b in &blocks {
            if b.iterations == 0 {
                return Err(EfwiError::InvalidSchedule(
                    "block iteration count must be >= 1".into(),
                ));
            }
            if b.freqs_hz.is_empty() {
                return Err(EfwiError::InvalidSchedule("block without frequencies".into()));
            }
            if !b.freqs_hz.iter().all(|&f| f > 0.0 && f.is_finite()) {
                return Err(EfwiError::InvalidSchedule(
                    "frequencies must be positive and finite".into(),
                ));
            }
        }
        Ok(Self { blocks })
    }

    /// Single block of concurrent frequencies.
    pub fn concurrent(freqs_hz: Vec<f64>, iterations: usize) -> Result<Self> {
        Self::new(vec![ScheduleBlock {
            freqs_hz,
            iterations,
        }])
    }

    pub fn total_iterations(&self) -> usize {
        self.blocks.iter().map(|b| b.iterations).sum()
    }
}

/// Expands multiscale cycles into a flat schedule: each cycle sweeps
/// f_lo..=f_hi in `step` increments, one frequency per block, giving
/// `iters_first` iterations to the first frequency of each cycle and
/// `iters_rest` to the others.
pub fn build_schedule(
    cycles: &[(f64, f64, f64)],
    iters_first: usize,
    iters_rest: usize,
) -> Result<FrequencySchedule> {
    if cycles.is_empty() {
        return Err(EfwiError::InvalidSchedule("no cycles".into()));
    }
    if iters_first == 0 || iters_rest == 0 {
        return Err(EfwiError::InvalidSchedule(
            "iteration counts must be >= 1".into(),
        ));
    }
    let mut blocks = Vec::new();
    for &(f_lo, f_hi, step) in cycles {
        if !(f_lo > 0.0 && f_lo <= f_hi && step > 0.0) {
            return Err(EfwiError::InvalidSchedule(format!(
                "bad cycle ({f_lo}, {f_hi}, {step})"
            )));
        }
        let count = ((f_hi - f_lo) / step + 1.0 + 1e-9).floor() as usize;
        for k in 0..count {
            let f = f_lo + step * k as f64;
            blocks.push(ScheduleBlock {
                freqs_hz: vec![f],
                iterations: if k == 0 { iters_first } else { iters_rest },
            });
        }
    }
    FrequencySchedule::new(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_three_cycle_schedule_totals_410() {
        let cycles = [(3.0, 6.0, 0.5), (3.0, 7.5, 0.5), (3.0, 13.0, 0.5)];
        let s = build_schedule(&cycles, 20, 10).unwrap();
        // 7 + 10 + 21 frequencies
        assert_eq!(s.blocks.len(), 38);
        assert_eq!(s.total_iterations(), 410);
        assert_eq!(s.blocks[0].iterations, 20);
        assert_eq!(s.blocks[7].iterations, 20); // first of cycle 2
        assert_eq!(s.blocks[1].iterations, 10);
    }

    #[test]
    fn single_frequency_schedule() {
        let s = build_schedule(&[(5.0, 5.0, 1.0)], 5, 5).unwrap();
        assert_eq!(s.blocks.len(), 1);
        assert_eq!(s.total_iterations(), 5);
    }

    #[test]
    fn cycle_3_to_6_half_hz_has_seven_frequencies() {
        let s = build_schedule(&[(3.0, 6.0, 0.5)], 1, 1).unwrap();
        assert_eq!(s.blocks.len(), 7);
        let freqs: Vec<f64> = s.blocks.iter().map(|b| b.freqs_hz[0]).collect();
        assert_eq!(freqs, vec![3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0]);
    }

    #[test]
    fn rejects_empty_and_degenerate() {
        assert!(build_schedule(&[], 1, 1).is_err());
        assert!(build_schedule(&[(6.0, 3.0, 0.5)], 1, 1).is_err());
        assert!(build_schedule(&[(3.0, 6.0, 0.5)], 0, 1).is_err());
        assert!(FrequencySchedule::concurrent(vec![], 5).is_err());
        assert!(FrequencySchedule::concurrent(vec![2.5, 5.0], 0).is_err());
        assert!(FrequencySchedule::concurrent(vec![-1.0], 5).is_err());
    }
}
