//! Null-hypothesis variance families.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Registered basis functions, addressable by name from configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NamedBasis {
    Const,
    T,
    T2,
    SqrtT,
    /// `e^{2t}`
    Exp2T,
    /// `sin(2πt)`
    Sin2PiT,
}

impl NamedBasis {
    pub const ALL: [NamedBasis; 6] = [
        Self::Const,
        Self::T,
        Self::T2,
        Self::SqrtT,
        Self::Exp2T,
        Self::Sin2PiT,
    ];

    pub fn eval<T: Real>(self, t: T) -> T {
        match self {
            Self::Const => T::one(),
            Self::T => t,
            Self::T2 => t * t,
            Self::SqrtT => t.sqrt(),
            Self::Exp2T => (t + t).exp(),
            Self::Sin2PiT => (T::TAU() * t).sin(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Const => "const",
            Self::T => "t",
            Self::T2 => "t2",
            Self::SqrtT => "sqrt_t",
            Self::Exp2T => "exp2t",
            Self::Sin2PiT => "sin2pit",
        }
    }
}

impl FromStr for NamedBasis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        Self::ALL
            .into_iter()
            .find(|b| b.name() == s)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

impl fmt::Display for NamedBasis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A scalar function of the design variable.
#[derive(Clone)]
pub enum BasisFn<T> {
    Named(NamedBasis),
    Custom(Arc<dyn Fn(T) -> T + Send + Sync>),
}

impl<T: Real> BasisFn<T> {
    pub fn custom<F: Fn(T) -> T + Send + Sync + 'static>(f: F) -> Self {
        BasisFn::Custom(Arc::new(f))
    }

    pub fn eval(&self, t: T) -> T {
        match self {
            BasisFn::Named(b) => b.eval(t),
            BasisFn::Custom(f) => f(t),
        }
    }
}

impl<T> fmt::Debug for BasisFn<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisFn::Named(b) => write!(f, "{b}"),
            BasisFn::Custom(_) => write!(f, "custom"),
        }
    }
}

impl<T> From<NamedBasis> for BasisFn<T> {
    fn from(b: NamedBasis) -> Self {
        BasisFn::Named(b)
    }
}

pub type ModelFn<T> = Arc<dyn Fn(T, &[T]) -> T + Send + Sync>;
pub type GradientFn<T> = Arc<dyn Fn(T, &[T]) -> Vec<T> + Send + Sync>;

/// The family `{σ²(·, θ)}` under the null hypothesis.
#[derive(Clone)]
pub enum VarianceFamily<T> {
    /// `σ²(t, θ) = b(t) + Σ_j θ_j σ²_j(t)`.
    Affine {
        offset: Option<BasisFn<T>>,
        basis: Vec<BasisFn<T>>,
    },
    /// General smooth `σ²(t, θ)` fitted by least squares from `start`.
    Nonlinear {
        model: ModelFn<T>,
        gradient: GradientFn<T>,
        start: Vec<T>,
    },
}

impl<T> fmt::Debug for VarianceFamily<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VarianceFamily::Affine { offset, basis } => f
                .debug_struct("Affine")
                .field("offset", offset)
                .field("basis", basis)
                .finish(),
            VarianceFamily::Nonlinear { start, .. } => f
                .debug_struct("Nonlinear")
                .field("dim", &start.len())
                .finish(),
        }
    }
}

impl<T: Real> VarianceFamily<T> {
    /// Linear span of the given basis functions, no offset.
    pub fn linear(basis: Vec<BasisFn<T>>) -> Self {
        VarianceFamily::Affine {
            offset: None,
            basis,
        }
    }

    pub fn with_offset(offset: BasisFn<T>, basis: Vec<BasisFn<T>>) -> Self {
        VarianceFamily::Affine {
            offset: Some(offset),
            basis,
        }
    }

    pub fn nonlinear<M, G>(model: M, gradient: G, start: Vec<T>) -> Self
    where
        M: Fn(T, &[T]) -> T + Send + Sync + 'static,
        G: Fn(T, &[T]) -> Vec<T> + Send + Sync + 'static,
    {
        VarianceFamily::Nonlinear {
            model: Arc::new(model),
            gradient: Arc::new(gradient),
            start,
        }
    }

    /// Parses a comma-separated list of registered names into an affine family.
    ///
    /// A leading `offset=<name>` entry (e.g. `offset=const,t2`) sets the known
    /// offset `b(t)`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut offset = None;
        let mut basis = Vec::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            if let Some(name) = part.strip_prefix("offset=") {
                if offset.is_some() {
                    return Err(Error::UnknownFamily(format!(
                        "duplicate offset in '{spec}'"
                    )));
                }
                offset = Some(BasisFn::Named(name.parse()?));
            } else {
                basis.push(BasisFn::Named(part.parse()?));
            }
        }
        if basis.is_empty() {
            return Err(Error::UnknownFamily(format!(
                "'{spec}' names no basis functions"
            )));
        }
        Ok(VarianceFamily::Affine { offset, basis })
    }

    pub fn dim(&self) -> usize {
        match self {
            VarianceFamily::Affine { basis, .. } => basis.len(),
            VarianceFamily::Nonlinear { start, .. } => start.len(),
        }
    }
}
