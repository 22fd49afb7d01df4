//! Concrete full-order plants and their reduced-order models.

pub mod double_integrator;
pub mod quadrotor;

use std::fmt;
use std::str::FromStr;

use crate::rom::ReducedOrderModel;
use crate::{Error, Matrix, Vector};

/// Planar single integrator `ẏ = v`.
pub fn single_integrator_rom() -> ReducedOrderModel {
    ReducedOrderModel::new(2, 2, |_| Vector::zeros(2), |_| Matrix::identity(2, 2))
}

/// Plant registry keyed by the names used in experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlantKind {
    Quadrotor,
    DoubleIntegrator,
}

impl PlantKind {
    pub const ALL: [PlantKind; 2] = [PlantKind::Quadrotor, PlantKind::DoubleIntegrator];

    pub fn name(self) -> &'static str {
        match self {
            PlantKind::Quadrotor => "quadrotor",
            PlantKind::DoubleIntegrator => "double_integrator",
        }
    }
}

impl fmt::Display for PlantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PlantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        PlantKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown plant {s:?} (expected quadrotor or double_integrator)")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_integrator_assembly() {
        let rom = single_integrator_rom();
        assert_eq!((rom.dim(), rom.input_dim()), (2, 2));
        let v = Vector::from_vec(vec![0.3, -1.0]);
        assert_eq!(rom.velocity(&Vector::from_vec(vec![5.0, 2.0]), &v), v);
    }

    #[test]
    fn registry_round_trip() {
        for k in PlantKind::ALL {
            assert_eq!(k.name().parse::<PlantKind>().unwrap(), k);
        }
        assert!("hopper".parse::<PlantKind>().is_err());
    }
}
