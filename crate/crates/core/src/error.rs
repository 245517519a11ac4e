use std::fmt;

/// Pipeline stage tag attached to propagated errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Ridge,
    Sampling,
    Dictionary,
    Noise,
    Solver,
    Reconstruction,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Ridge => "ridge detection",
            Stage::Sampling => "feature sampling",
            Stage::Dictionary => "dictionary assembly",
            Stage::Noise => "noise estimation",
            Stage::Solver => "sparse solve",
            Stage::Reconstruction => "reconstruction",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("sample rate {fs} Hz cannot represent max instantaneous frequency {max_if} Hz (Nyquist {nyquist} Hz)")]
    Nyquist { max_if: f64, fs: f64, nyquist: f64 },

    #[error("signal has zero energy")]
    ZeroEnergy,

    #[error("window of {window_len} samples is longer than the signal ({signal_len} samples)")]
    WindowTooLong { window_len: usize, signal_len: usize },

    #[error("hop {hop} exceeds window length {window_len}: overlap-add cannot cover every sample")]
    Cola { hop: usize, window_len: usize },

    #[error("requested {requested} ridges but only {found} were resolvable above the noise floor")]
    RidgeShortfall { requested: usize, found: usize },

    #[error("dictionary of {rows}x{cols} needs {bytes} bytes, above the cap of {cap} bytes")]
    DictionaryTooLarge {
        rows: usize,
        cols: usize,
        bytes: usize,
        cap: usize,
    },

    #[error("non-finite value in solver iterate at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(stage: Stage) -> impl FnOnce(Error) -> Error {
        move |source| Error::Stage {
            stage,
            source: Box::new(source),
        }
    }

    /// Innermost error, with stage tags peeled off.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
