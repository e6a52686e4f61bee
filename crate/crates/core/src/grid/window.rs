use crate::error::{CoreError, Result};
use crate::grid::{ChannelId, Station, World, NUM_CHANNELS};
use crate::tensor::Tensor;

/// A channel-first window of raster values centred on one station.
///
/// Cells that fall outside the absolute grid are zero-filled and flagged in
/// `in_bounds` so downstream code can tell real zeros from padding.
#[derive(Clone, Debug)]
pub struct GridStack {
    /// Raw values, shape `[channels, size, size]`.
    pub data: Tensor,
    /// Window edge length in cells (odd).
    pub size: usize,
    /// Absolute grid row of the window's top-left cell; may be negative.
    pub row0: i64,
    /// Absolute grid col of the window's top-left cell; may be negative.
    pub col0: i64,
    /// True where the window cell lies on the absolute grid, row-major
    /// `size × size`.
    pub in_bounds: Vec<bool>,
}

impl GridStack {
    /// Absolute grid coordinates of window cell `(i, j)`.
    pub fn absolute(&self, i: usize, j: usize) -> (i64, i64) {
        (self.row0 + i as i64, self.col0 + j as i64)
    }

    pub fn cell_in_bounds(&self, i: usize, j: usize) -> bool {
        self.in_bounds[i * self.size + j]
    }

    /// Per-channel mean of the raw values over all window cells, including
    /// zero-filled padding.
    pub fn channel_means(&self) -> [f64; NUM_CHANNELS] {
        let cells = (self.size * self.size) as f64;
        let mut means = [0.0; NUM_CHANNELS];
        for (k, m) in means.iter_mut().enumerate() {
            let mut sum = 0.0;
            for i in 0..self.size {
                for j in 0..self.size {
                    sum += self.data.at3(k, i, j);
                }
            }
            *m = sum / cells;
        }
        means
    }
}

/// The per-sample normalized tensor together with the statistics needed to
/// map gradients back to raw units.
#[derive(Clone, Debug)]
pub struct NormalizedStack {
    /// Normalized values, shape `[channels, size, size]`.
    pub data: Tensor,
    /// Per-channel mean of the raw window.
    pub means: [f64; NUM_CHANNELS],
    /// Per-channel population standard deviation of the raw window.
    pub stds: [f64; NUM_CHANNELS],
    /// True where a channel was constant (zero spread) and therefore zeroed.
    pub degenerate: [bool; NUM_CHANNELS],
}

/// Cuts the `(2·half_extent+1)²` window of every channel centred on the
/// station's cell. Cells beyond the grid edge are zero-filled.
pub fn extract_window(world: &World, station: &Station, half_extent: usize) -> Result<GridStack> {
    if half_extent == 0 {
        return Err(CoreError::Invalid("window half-extent must be positive".into()));
    }
    if station.row >= world.rows || station.col >= world.cols {
        return Err(CoreError::Invalid(format!(
            "station {} at ({}, {}) lies outside the {}x{} grid",
            station.id, station.row, station.col, world.rows, world.cols
        )));
    }
    let size = 2 * half_extent + 1;
    let row0 = station.row as i64 - half_extent as i64;
    let col0 = station.col as i64 - half_extent as i64;
    let mut data = Tensor::zeros(&[NUM_CHANNELS, size, size]);
    let mut in_bounds = vec![false; size * size];
    for i in 0..size {
        let r = row0 + i as i64;
        for j in 0..size {
            let c = col0 + j as i64;
            if world.in_bounds(r, c) {
                in_bounds[i * size + j] = true;
                let (ru, cu) = (r as usize, c as usize);
                for ch in ChannelId::ALL {
                    *data.at3_mut(ch.index(), i, j) = world.value(ch, ru, cu);
                }
            }
        }
    }
    Ok(GridStack {
        data,
        size,
        row0,
        col0,
        in_bounds,
    })
}

/// Normalizes each channel of a window to zero mean and unit spread using
/// that window's own statistics. A channel with zero spread carries no
/// information at this station, so it is zeroed and flagged.
pub fn normalize_stack(stack: &GridStack) -> NormalizedStack {
    let size = stack.size;
    let cells = (size * size) as f64;
    let means = stack.channel_means();
    let mut stds = [0.0; NUM_CHANNELS];
    let mut degenerate = [false; NUM_CHANNELS];
    let mut data = Tensor::zeros(&[NUM_CHANNELS, size, size]);
    for k in 0..NUM_CHANNELS {
        let mut ss = 0.0;
        for i in 0..size {
            for j in 0..size {
                let d = stack.data.at3(k, i, j) - means[k];
                ss += d * d;
            }
        }
        let sigma = (ss / cells).sqrt();
        stds[k] = sigma;
        if sigma == 0.0 {
            degenerate[k] = true;
            // data already zero for this channel
            continue;
        }
        for i in 0..size {
            for j in 0..size {
                *data.at3_mut(k, i, j) = (stack.data.at3(k, i, j) - means[k]) / sigma;
            }
        }
    }
    NormalizedStack {
        data,
        means,
        stds,
        degenerate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Station;
    use proptest::prelude::*;

    fn station_at(row: usize, col: usize) -> Station {
        Station {
            id: "s".into(),
            row,
            col,
            city_id: "c".into(),
            pm25: 30.0,
        }
    }

    fn demo_world() -> World {
        let mut world = World::new(6, 7, 10.0).unwrap();
        for r in 0..6 {
            for c in 0..7 {
                for ch in ChannelId::ALL {
                    world.set_value(ch, r, c, (ch.index() * 100 + r * 7 + c) as f64);
                }
            }
        }
        world
    }

    #[test]
    fn interior_window_copies_values() {
        let world = demo_world();
        let stack = extract_window(&world, &station_at(3, 3), 1).unwrap();
        assert_eq!(stack.size, 3);
        assert_eq!((stack.row0, stack.col0), (2, 2));
        assert!(stack.in_bounds.iter().all(|b| *b));
        assert_eq!(stack.data.at3(0, 0, 0), world.value(ChannelId::Rrc, 2, 2));
        assert_eq!(stack.data.at3(7, 2, 2), world.value(ChannelId::Pcp, 4, 4));
    }

    #[test]
    fn corner_window_zero_fills_outside() {
        let world = demo_world();
        let stack = extract_window(&world, &station_at(0, 0), 2).unwrap();
        assert_eq!(stack.size, 5);
        assert_eq!((stack.row0, stack.col0), (-2, -2));
        // Top-left quadrant is padding.
        assert!(!stack.cell_in_bounds(0, 0));
        assert_eq!(stack.data.at3(3, 0, 0), 0.0);
        // The station cell itself sits at the centre.
        assert!(stack.cell_in_bounds(2, 2));
        assert_eq!(stack.data.at3(0, 2, 2), world.value(ChannelId::Rrc, 0, 0));
        let n_in = stack.in_bounds.iter().filter(|b| **b).count();
        assert_eq!(n_in, 9); // 3x3 of the 5x5 lies on the grid
    }

    #[test]
    fn normalize_uses_population_std() {
        // Channel values {0, 0, 0, 4} over a 2x2 conceptual window: mean 1,
        // population variance 3. Emulated by zero-filled corner padding.
        let mut stack = GridStack {
            data: Tensor::zeros(&[NUM_CHANNELS, 2, 2]),
            size: 2,
            row0: 0,
            col0: 0,
            in_bounds: vec![true; 4],
        };
        *stack.data.at3_mut(0, 1, 1) = 4.0;
        let norm = normalize_stack(&stack);
        assert!((norm.means[0] - 1.0).abs() < 1e-15);
        assert!((norm.stds[0] - 3f64.sqrt()).abs() < 1e-15);
        assert!(!norm.degenerate[0]);
        let z = norm.data.at3(0, 1, 1);
        assert!((z - 3.0 / 3f64.sqrt()).abs() < 1e-12);
        // Untouched channels are constant zero -> degenerate.
        assert!(norm.degenerate[1]);
        assert_eq!(norm.stds[1], 0.0);
        assert_eq!(norm.data.at3(1, 0, 0), 0.0);
    }

    #[test]
    fn even_sized_window_rejected_via_half_extent_zero() {
        let world = demo_world();
        assert!(extract_window(&world, &station_at(1, 1), 0).is_err());
    }

    proptest! {
        #[test]
        fn normalization_round_trips(seed in 0u64..500) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let size = 5;
            let mut stack = GridStack {
                data: Tensor::zeros(&[NUM_CHANNELS, size, size]),
                size,
                row0: 0,
                col0: 0,
                in_bounds: vec![true; size * size],
            };
            for k in 0..NUM_CHANNELS {
                for i in 0..size {
                    for j in 0..size {
                        *stack.data.at3_mut(k, i, j) = rng.gen_range(-50.0..50.0);
                    }
                }
            }
            let norm = normalize_stack(&stack);
            for k in 0..NUM_CHANNELS {
                prop_assert!(!norm.degenerate[k]);
                for i in 0..size {
                    for j in 0..size {
                        let rebuilt = norm.data.at3(k, i, j) * norm.stds[k] + norm.means[k];
                        prop_assert!((rebuilt - stack.data.at3(k, i, j)).abs() < 1e-9);
                    }
                }
                // Normalized channel has mean ~0 and population variance ~1.
                let mut sum = 0.0;
                let mut ss = 0.0;
                for i in 0..size {
                    for j in 0..size {
                        sum += norm.data.at3(k, i, j);
                        ss += norm.data.at3(k, i, j).powi(2);
                    }
                }
                let n = (size * size) as f64;
                prop_assert!((sum / n).abs() < 1e-12);
                prop_assert!((ss / n - 1.0).abs() < 1e-12);
            }
        }
    }
}
