use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum Error {
    #[error("modulus {0} is not prime")]
    NotPrime(u64),
    #[error("modulus {0} exceeds the supported range (must be < 2^31)")]
    ModulusTooLarge(u64),
    #[error("value {value} is not a canonical element of F_{modulus}")]
    ForeignElement { value: u64, modulus: u32 },
    #[error("division by zero in F_{0}")]
    DivisionByZero(u32),
    #[error("singular linear system ({0}x{0})")]
    Singular(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parameter {name} must be >= {min}, got {value}")]
    ParamTooSmall {
        name: &'static str,
        min: usize,
        value: usize,
    },
    #[error("infeasible write: X={x} < X_delta+T={needed}")]
    InfeasibleWrite { x: usize, needed: usize },
    #[error("infeasible read: N={n} < K_c+X+T={needed}")]
    InfeasibleRead { n: usize, needed: usize },
    #[error("field too small: q={q} but N+max(mu,K_c)={needed} distinct constants are required")]
    FieldTooSmall { q: u64, needed: usize },
    #[error("submodel length {requested} is not a multiple of {unit}; nearest valid length is {nearest}")]
    InvalidLength {
        requested: usize,
        unit: usize,
        nearest: usize,
    },

    #[error("{count} read dropouts reach the read threshold {threshold}")]
    TooManyReadDropouts { count: usize, threshold: usize },
    #[error("{count} write dropouts reach the write threshold {threshold}")]
    TooManyWriteDropouts { count: usize, threshold: usize },
    #[error("server index {index} is outside [1, {servers}]")]
    UnknownServer { index: usize, servers: usize },
    #[error("submodel index {index} is outside [1, {submodels}]")]
    UnknownSubmodel { index: usize, submodels: usize },

    #[error("need {needed} distinct servers to decode, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("need answers from all {needed} read-available servers, got {got}")]
    InsufficientAnswers { needed: usize, got: usize },
    #[error("server index mismatch: {0}")]
    ServerMismatch(String),
    #[error("server {0} is a write dropout and must not be updated")]
    WriteDropoutUpdated(usize),

    #[error(
        "enumeration of {symbols} symbols over F_{modulus} exceeds the budget of {budget} views"
    )]
    BudgetExceeded {
        symbols: usize,
        modulus: u32,
        budget: u64,
    },

    #[error("round {t}: {source}")]
    Round { t: usize, source: Box<Error> },

    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("config: {0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl Error {
    /// True for errors that indicate a bug or corrupted state rather than bad input.
    pub fn is_internal(&self) -> bool {
        match self {
            Error::Round { source, .. } => source.is_internal(),
            _ => matches!(self, Error::Invariant(_) | Error::Singular(_)),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
