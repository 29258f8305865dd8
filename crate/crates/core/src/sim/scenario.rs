use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimError;
use crate::{Point2, Point3};

/// User-equipment antenna height above ground, meters.
pub const UE_HEIGHT: f64 = 1.5;

/// Axis-aligned rectangle in the ground plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min: Point2,
    pub max: Point2,
}

impl Rect {
    pub fn new(min: Point2, max: Point2) -> Self {
        Self { min, max }
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    /// Closed containment test.
    pub fn contains(&self, p: Point2) -> bool {
        p[0] >= self.min[0] && p[0] <= self.max[0] && p[1] >= self.min[1] && p[1] <= self.max[1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scatterer {
    pub position: Point3,
    pub gain: Complex64,
}

/// Everything the simulator needs to know about the propagation environment.
///
/// The array lies in the x–z plane and faces +y: element `(row, col)` sits at
/// `element_spacing * wavelength * (col, 0, row)` relative to `bs_position`,
/// and antenna index is `row * array_cols + col`.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub carrier_frequency: f64,
    pub bandwidth: f64,
    pub num_subcarriers: usize,
    pub array_rows: usize,
    pub array_cols: usize,
    /// In wavelengths.
    pub element_spacing: f64,
    pub bs_position: Point3,
    pub coverage_area: Rect,
    pub scatterers: Vec<Scatterer>,
    pub pathloss_exponent: f64,
    /// Per-entry standard deviation of circular complex Gaussian noise.
    pub noise_std: f64,
    pub los_blockage_regions: Vec<Rect>,
    pub rng_seed: u64,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            carrier_frequency: 2.5e9,
            bandwidth: 10e6,
            num_subcarriers: 64,
            array_rows: 4,
            array_cols: 8,
            element_spacing: 0.5,
            bs_position: [100.0, -20.0, 25.0],
            coverage_area: Rect::new([0.0, 0.0], [200.0, 200.0]),
            scatterers: Vec::new(),
            pathloss_exponent: 2.0,
            noise_std: 0.0,
            los_blockage_regions: Vec::new(),
            rng_seed: 0,
        }
    }
}

impl Scenario {
    pub fn num_antennas(&self) -> usize {
        self.array_rows * self.array_cols
    }

    pub fn wavelength(&self) -> f64 {
        super::SPEED_OF_LIGHT / self.carrier_frequency
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |msg: &str| Err(SimError::InvalidScenario(msg.to_string()));
        if self.num_subcarriers < 1 {
            return bad("num_subcarriers must be at least 1");
        }
        if self.num_antennas() < 1 {
            return bad("array must contain at least one element");
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return bad("bandwidth must be positive");
        }
        if !(self.carrier_frequency > 0.0 && self.carrier_frequency.is_finite()) {
            return bad("carrier_frequency must be positive");
        }
        if !(self.element_spacing > 0.0 && self.element_spacing.is_finite()) {
            return bad("element_spacing must be positive");
        }
        if !(self.coverage_area.width() > 0.0 && self.coverage_area.height() > 0.0) {
            return bad("coverage area must have positive width and height");
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return bad("noise_std must be non-negative");
        }
        if !self.pathloss_exponent.is_finite() {
            return bad("pathloss_exponent must be finite");
        }
        Ok(())
    }

    /// The 8×4 rooftop array at 2.5 GHz / 10 MHz with 64 subcarriers over a
    /// 200 m × 200 m street grid, `num_scatterers` random scatterers and a few
    /// LoS shadow zones. All random layout is derived from `seed`.
    pub fn urban_8x4(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(0x5ca7);
        let area = Rect::new([0.0, 0.0], [200.0, 200.0]);
        let scatterers = random_scatterers(&mut rng, area, 20);
        let los_blockage_regions = (0..3)
            .map(|_| {
                let x = rng.random_range(area.min[0]..area.max[0] - 50.0);
                let y = rng.random_range(area.min[1] + 60.0..area.max[1] - 50.0);
                Rect::new([x, y], [x + 50.0, y + 50.0])
            })
            .collect();
        Self {
            coverage_area: area,
            scatterers,
            los_blockage_regions,
            noise_std: 2e-3,
            rng_seed: seed,
            ..Self::default()
        }
    }
}

/// `n` random scatterers over `area`, reproducible from `seed`.
pub fn seeded_scatterers(seed: u64, area: Rect, n: usize) -> Vec<Scatterer> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x5ca7_0001);
    random_scatterers(&mut rng, area, n)
}

/// Uniformly placed scatterers with heights in [3, 20] m and complex gains of
/// modulus in [0.1, 0.5] and uniform phase.
pub(crate) fn random_scatterers(rng: &mut ChaCha8Rng, area: Rect, n: usize) -> Vec<Scatterer> {
    (0..n)
        .map(|_| {
            let position = [
                rng.random_range(area.min[0]..area.max[0]),
                rng.random_range(area.min[1]..area.max[1]),
                rng.random_range(3.0..20.0),
            ];
            let gain = Complex64::from_polar(
                rng.random_range(0.1..0.5),
                rng.random_range(0.0..std::f64::consts::TAU),
            );
            Scatterer { position, gain }
        })
        .collect()
}
