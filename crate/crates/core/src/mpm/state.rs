use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::SimConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ParticleState {
    pub x: Vector3<f64>,
    pub v: Vector3<f64>,
    /// Deformation gradient.
    pub f: Matrix3<f64>,
    /// APIC affine velocity matrix.
    pub c: Matrix3<f64>,
    pub mass: f64,
    pub volume0: f64,
}

impl ParticleState {
    pub fn at_rest(x: Vector3<f64>, mass: f64, volume0: f64) -> Self {
        ParticleState {
            x,
            v: Vector3::zeros(),
            f: Matrix3::identity(),
            c: Matrix3::zeros(),
            mass,
            volume0,
        }
    }
}

/// Particle configuration of the whole elastomer at one instant.
#[derive(Clone, Debug, PartialEq)]
pub struct FullState {
    pub particles: Vec<ParticleState>,
    pub time: f64,
    pub frame_index: usize,
}

impl FullState {
    /// Seeds the elastomer box with a lattice of `particle_lattice` particles, each
    /// optionally jittered inside its lattice cell. Mass is split evenly.
    pub fn seed(config: &SimConfig, seed: u64) -> Self {
        let lattice = config.particle_lattice;
        let spacing = config.particle_spacing();
        let n = config.particle_count();
        let volume0 = config.elastomer_extents.iter().product::<f64>() / n as f64;
        let mass = config.material.density() * volume0;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut particles = Vec::with_capacity(n);
        let min = Vector3::from(config.elastomer_min);
        for k in 0..lattice[2] {
            for j in 0..lattice[1] {
                for i in 0..lattice[0] {
                    let mut cell = Vector3::new(i as f64 + 0.5, j as f64 + 0.5, k as f64 + 0.5);
                    if config.jitter > 0.0 {
                        for a in 0..3 {
                            cell[a] += config.jitter * (rng.gen::<f64>() - 0.5);
                        }
                    }
                    particles.push(ParticleState::at_rest(
                        min + cell.component_mul(&spacing),
                        mass,
                        volume0,
                    ));
                }
            }
        }
        FullState {
            particles,
            time: 0.0,
            frame_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.particles.iter().map(|p| p.mass).sum()
    }

    pub fn total_momentum(&self) -> Vector3<f64> {
        self.particles.iter().map(|p| p.v * p.mass).sum()
    }

    pub fn positions(&self) -> Vec<Vector3<f64>> {
        self.particles.iter().map(|p| p.x).collect()
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.particles.iter().map(|p| 0.5 * p.mass * p.v.norm_squared()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeding_fills_the_box_with_equal_masses() {
        let mut c = SimConfig::with_fitted_grid([6e-3, 6e-3, 2e-3], 1e-3, [6, 6, 2], 2, 3);
        c.jitter = 0.5;
        let s = FullState::seed(&c, 3);
        assert_eq!(s.len(), 72);
        let expected = c.material.density() * 72e-9;
        assert!((s.total_mass() - expected).abs() < 1e-15);
        let lo = Vector3::from(c.elastomer_min);
        for p in &s.particles {
            let r = p.x - lo;
            assert!(r.iter().zip(c.elastomer_extents).all(|(x, l)| *x > 0.0 && *x < l));
        }
        assert_eq!(s, FullState::seed(&c, 3));
        assert_ne!(s, FullState::seed(&c, 4));
    }
}
