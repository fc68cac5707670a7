//! Forcing events and signed atomic measures.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::torus::TorusPoint;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EnsembleError {
    #[error("sign must be +1 or -1, got {0}")]
    InvalidSign(i8),
    #[error("intensity must be finite and nonzero, got {0}")]
    InvalidIntensity(f64),
    #[error("events out of order or beyond horizon at index {0}")]
    UnorderedEvents(usize),
    #[error("horizon must be nonnegative and finite, got {0}")]
    InvalidHorizon(f64),
}

/// One forcing jump: a unit vortex of sign `σ` born at `x` at time `t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VortexEvent {
    pub birth_time: f64,
    sign: i8,
    pub position: TorusPoint,
}

impl VortexEvent {
    pub fn new(birth_time: f64, sign: i8, position: TorusPoint) -> Result<Self, EnsembleError> {
        if sign != 1 && sign != -1 {
            return Err(EnsembleError::InvalidSign(sign));
        }
        Ok(Self {
            birth_time,
            sign,
            position,
        })
    }

    pub fn sign(&self) -> i8 {
        self.sign
    }

    pub fn sign_f64(&self) -> f64 {
        f64::from(self.sign)
    }
}

/// A realisation of the forcing on `[0, horizon]`, sorted by birth time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    horizon: f64,
    events: Vec<VortexEvent>,
}

impl EventStream {
    pub fn new(horizon: f64, events: Vec<VortexEvent>) -> Result<Self, EnsembleError> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(EnsembleError::InvalidHorizon(horizon));
        }
        for (i, e) in events.iter().enumerate() {
            let ordered = i == 0 || events[i - 1].birth_time <= e.birth_time;
            if !ordered || e.birth_time < 0.0 || e.birth_time > horizon {
                return Err(EnsembleError::UnorderedEvents(i));
            }
        }
        Ok(Self { horizon, events })
    }

    pub fn empty(horizon: f64) -> Self {
        Self {
            horizon,
            events: Vec::new(),
        }
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn events(&self) -> &[VortexEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Events with birth time in `(from, to]`.
    pub fn window(&self, from: f64, to: f64) -> impl Iterator<Item = &VortexEvent> {
        self.events
            .iter()
            .filter(move |e| e.birth_time > from && e.birth_time <= to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub intensity: f64,
    pub position: TorusPoint,
}

/// Finite signed atomic measure `Σ ξ_i δ_{x_i}`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VortexEnsemble {
    atoms: Vec<Atom>,
}

impl VortexEnsemble {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_atoms(atoms: Vec<Atom>) -> Result<Self, EnsembleError> {
        let mut ens = Self::new();
        for a in atoms {
            ens.push(a.intensity, a.position)?;
        }
        Ok(ens)
    }

    pub fn push(&mut self, intensity: f64, position: TorusPoint) -> Result<(), EnsembleError> {
        if !intensity.is_finite() || intensity == 0.0 {
            return Err(EnsembleError::InvalidIntensity(intensity));
        }
        self.atoms.push(Atom {
            intensity,
            position,
        });
        Ok(())
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.intensity.abs()).sum()
    }

    /// `⟨f, ω⟩ = Σ ξ_i f(x_i)`.
    pub fn pair_with<F: Fn(TorusPoint) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().map(|a| a.intensity * f(a.position)).sum()
    }

    /// Every intensity multiplied by `factor` (which must be nonzero).
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            atoms: self
                .atoms
                .iter()
                .map(|a| Atom {
                    intensity: a.intensity * factor,
                    position: a.position,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signs_are_validated() {
        let p = TorusPoint::origin();
        assert!(VortexEvent::new(0.0, 1, p).is_ok());
        assert!(VortexEvent::new(0.0, -1, p).is_ok());
        assert_eq!(VortexEvent::new(0.0, 0, p), Err(EnsembleError::InvalidSign(0)));
    }

    #[test]
    fn stream_rejects_disorder() {
        let p = TorusPoint::origin();
        let a = VortexEvent::new(0.5, 1, p).unwrap();
        let b = VortexEvent::new(0.2, 1, p).unwrap();
        assert!(EventStream::new(1.0, vec![b, a]).is_ok());
        assert!(EventStream::new(1.0, vec![a, b]).is_err());
        assert!(EventStream::new(0.4, vec![b, a]).is_err());
    }

    #[test]
    fn zero_intensity_rejected() {
        let mut e = VortexEnsemble::new();
        assert!(e.push(0.0, TorusPoint::origin()).is_err());
        assert!(e.push(f64::NAN, TorusPoint::origin()).is_err());
        e.push(-0.5, TorusPoint::origin()).unwrap();
        assert_eq!(e.total_mass(), 0.5);
    }
}
