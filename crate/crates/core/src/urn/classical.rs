use rand::Rng;

/// Single Polya urn with a fixed reinforcement `Δ` for both colours.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassicalUrn {
    red: f64,
    total: f64,
    delta: f64,
    initial_red: f64,
    initial_total: f64,
    draws: u64,
    reds: u64,
}

impl ClassicalUrn {
    pub fn new(red: f64, black: f64, delta: f64) -> Self {
        assert!(red > 0.0 && black > 0.0 && delta >= 0.0);
        Self {
            red,
            total: red + black,
            delta,
            initial_red: red,
            initial_total: red + black,
            draws: 0,
            reds: 0,
        }
    }

    /// Initial red fraction `ρ_c = R / T`.
    pub fn rho(&self) -> f64 {
        self.initial_red / self.initial_total
    }

    /// Correlation parameter `δ_c = Δ / T`.
    pub fn correlation(&self) -> f64 {
        self.delta / self.initial_total
    }

    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn reds(&self) -> u64 {
        self.reds
    }

    /// Current red fraction `U_n`.
    pub fn proportion(&self) -> f64 {
        self.red / self.total
    }

    /// `U_n` from `ρ_c`, `δ_c` and the red count alone.
    pub fn closed_form_proportion(&self) -> f64 {
        let (rho, dc) = (self.rho(), self.correlation());
        (rho + dc * self.reds as f64) / (1.0 + self.draws as f64 * dc)
    }

    /// Records a draw of the given colour.
    pub fn record(&mut self, red: bool) {
        if red {
            self.red += self.delta;
            self.reds += 1;
        }
        self.total += self.delta;
        self.draws += 1;
    }

    /// Draws red with probability `U_{n-1}` and reinforces that colour.
    pub fn draw<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let red = rng.random::<f64>() < self.proportion();
        self.record(red);
        red
    }

    /// Exact probability of a colour sequence.
    pub fn sequence_probability(&self, seq: &[bool]) -> f64 {
        let mut urn = self.clone();
        let mut p = 1.0;
        for &red in seq {
            let u = urn.proportion();
            p *= if red { u } else { 1.0 - u };
            urn.record(red);
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn first_black_draw() {
        let mut urn = ClassicalUrn::new(2.0, 2.0, 2.0);
        urn.record(false);
        assert_relative_eq!(urn.proportion(), 2.0 / 6.0);
        assert_relative_eq!(urn.closed_form_proportion(), 2.0 / 6.0);
    }

    #[test]
    fn closed_form_tracks_recursion() {
        let mut urn = ClassicalUrn::new(3.0, 5.0, 1.5);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            urn.draw(&mut rng);
            assert_relative_eq!(urn.proportion(), urn.closed_form_proportion(), max_relative = 1e-12);
        }
        assert_relative_eq!(urn.rho(), 3.0 / 8.0, max_relative = 1e-12);
        assert_relative_eq!(urn.correlation(), 1.5 / 8.0, max_relative = 1e-12);
    }

    #[test]
    fn exchangeable_pairs() {
        let urn = ClassicalUrn::new(2.0, 3.0, 4.0);
        assert_relative_eq!(
            urn.sequence_probability(&[true, false]),
            urn.sequence_probability(&[false, true]),
            max_relative = 1e-15
        );
        assert_relative_eq!(
            urn.sequence_probability(&[true, true, false]),
            urn.sequence_probability(&[false, true, true]),
            max_relative = 1e-15
        );
    }

    #[test]
    fn mean_proportion_is_preserved() {
        let reps = 20_000;
        let steps = 30;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..reps {
            let mut urn = ClassicalUrn::new(1.0, 3.0, 2.0);
            for _ in 0..steps {
                urn.draw(&mut rng);
            }
            let u = urn.proportion();
            sum += u;
            sum_sq += u * u;
        }
        let mean = sum / reps as f64;
        let sd = (sum_sq / reps as f64 - mean * mean).sqrt();
        assert!((mean - 0.25).abs() < 4.0 * sd / (reps as f64).sqrt());
    }
}
