//! Compactly supported symmetric kernels on `[-1, 1]` and their moments.

use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Kernel {
    /// `0.75·(1 − u²)`.
    #[default]
    Epanechnikov,
    /// `0.5` on `[-1, 1]`.
    Uniform,
    /// `1 − |u|`.
    Triangular,
}

impl Kernel {
    /// `K(u)`; zero outside `[-1, 1]`.
    #[inline]
    pub fn density(self, u: f64) -> f64 {
        let a = libm::fabs(u);
        if a > 1.0 {
            return 0.0;
        }
        match self {
            Kernel::Epanechnikov => 0.75 * (1.0 - u * u),
            Kernel::Uniform => 0.5,
            Kernel::Triangular => 1.0 - a,
        }
    }

    /// The scaled kernel `K_h(u) = K(u/h)/h`.
    pub fn weight(self, u: f64, h: f64) -> Result<f64> {
        if !(h > 0.0) || !h.is_finite() {
            return Err(Error::InvalidParameter { name: "bandwidth", value: h });
        }
        Ok(self.scaled(u, h))
    }

    #[inline]
    pub(crate) fn scaled(self, u: f64, h: f64) -> f64 {
        self.density(u / h) / h
    }

    /// `∫ uᵖ K(u) du`, exact. Odd powers vanish by symmetry.
    pub fn moment(self, power: u32) -> f64 {
        if power % 2 == 1 {
            return 0.0;
        }
        let k = power as f64;
        match self {
            Kernel::Epanechnikov => 3.0 / ((k + 1.0) * (k + 3.0)),
            Kernel::Uniform => 1.0 / (k + 1.0),
            Kernel::Triangular => 2.0 / ((k + 1.0) * (k + 2.0)),
        }
    }

    /// `∫ K(u)² du`, exact.
    pub fn square_integral(self) -> f64 {
        match self {
            Kernel::Epanechnikov => 0.6,
            Kernel::Uniform => 0.5,
            Kernel::Triangular => 2.0 / 3.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Epanechnikov => "epanechnikov",
            Kernel::Uniform => "uniform",
            Kernel::Triangular => "triangular",
        }
    }
}

impl fmt::Display for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Kernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epanechnikov" | "epa" => Ok(Kernel::Epanechnikov),
            "uniform" => Ok(Kernel::Uniform),
            "triangular" => Ok(Kernel::Triangular),
            _ => Err(Error::InvalidParameter { name: "kernel", value: f64::NAN }),
        }
    }
}
