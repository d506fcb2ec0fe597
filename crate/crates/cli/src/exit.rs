use std::process::ExitCode;

use dara_engine::Outcome;

/// Process exit statuses. Only [`Exit::Success`] maps to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Exit {
    Success = 0,
    /// A document failed validation or its hash check.
    Invalid = 1,
    /// Unreadable or unparsable input, or bad arguments.
    BadInput = 2,
    InteractionRequired = 3,
    /// The run ended in an error, or could not start for a reason other
    /// than an unreachable service.
    Error = 4,
    RepositoryUnreachable = 5,
    BrowserUnreachable = 6,
    PortInUse = 7,
}

impl Exit {
    pub const ALL: [Exit; 8] = [
        Exit::Success,
        Exit::Invalid,
        Exit::BadInput,
        Exit::InteractionRequired,
        Exit::Error,
        Exit::RepositoryUnreachable,
        Exit::BrowserUnreachable,
        Exit::PortInUse,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: i32) -> Option<Exit> {
        Exit::ALL.into_iter().find(|e| i32::from(e.code()) == code)
    }

    pub fn describe(self) -> &'static str {
        match self {
            Exit::Success => "success",
            Exit::Invalid => "validation failure",
            Exit::BadInput => "unreadable or unparsable input",
            Exit::InteractionRequired => "interaction required",
            Exit::Error => "error",
            Exit::RepositoryUnreachable => "repository unreachable",
            Exit::BrowserUnreachable => "browser-control server unreachable",
            Exit::PortInUse => "port in use",
        }
    }
}

impl From<Outcome> for Exit {
    fn from(o: Outcome) -> Exit {
        match o {
            Outcome::Success => Exit::Success,
            Outcome::InteractionRequired => Exit::InteractionRequired,
            Outcome::Error => Exit::Error,
        }
    }
}

impl From<Exit> for ExitCode {
    fn from(e: Exit) -> ExitCode {
        ExitCode::from(e.code())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct_and_round_trip() {
        for e in Exit::ALL {
            assert_eq!(Exit::from_code(e.code().into()), Some(e));
        }
        assert_eq!(Exit::from_code(8), None);
    }

    #[test]
    fn only_success_is_zero() {
        for o in [
            Outcome::Success,
            Outcome::InteractionRequired,
            Outcome::Error,
        ] {
            assert_eq!(Exit::from(o).code() == 0, o == Outcome::Success);
        }
    }
}
