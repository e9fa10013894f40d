use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("argument `{name}` = {value} is outside the domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("no convergence after {iterations} iterations (last gap {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("breakpoint structure violated: {0}")]
    Structure(&'static str),

    #[error(
        "policy returned deferral {deferral} for pending service {pending}, outside [0, {cap}]"
    )]
    PolicyRange {
        pending: f64,
        deferral: f64,
        cap: f64,
    },

    #[error("bound is unbounded: {0}")]
    Unbounded(&'static str),
}

pub(crate) fn ensure_in(
    name: &'static str,
    value: f64,
    lo: f64,
    hi: f64,
    domain: &'static str,
) -> Result<()> {
    if value.is_finite() && value >= lo && value <= hi {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain,
        })
    }
}
