use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violates its physical or numerical constraints.
    #[error("invalid configuration: {field} {message}")]
    Config { field: String, message: String },

    #[error("steady state is not unique (pivot {pivot:.3e} below threshold){}", node_suffix(.node))]
    Singular {
        pivot: f64,
        node: Option<(f64, f64)>,
    },

    #[error("time step too large: trace drifted by {drift:.3e}")]
    StepSize { drift: f64 },

    #[error("fixed-point iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("field amplitude diverged (|{field}| = {magnitude:.3e}) at iteration {iteration}")]
    Divergence {
        field: &'static str,
        magnitude: f64,
        iteration: usize,
    },

    #[error("undefined: {0}")]
    Undefined(&'static str),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn node_suffix(node: &Option<(f64, f64)>) -> String {
    match node {
        Some((d_o, d_mu)) => format!(" at node delta_o={d_o:.6e} rad/s, delta_mu={d_mu:.6e} rad/s"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_node(self, delta_o: f64, delta_mu: f64) -> Self {
        match self {
            Error::Singular { pivot, .. } => Error::Singular {
                pivot,
                node: Some((delta_o, delta_mu)),
            },
            other => other,
        }
    }
}
