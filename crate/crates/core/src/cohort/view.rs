use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error};

/// The four standard screening views.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum View {
    LeftCc,
    RightCc,
    LeftMlo,
    RightMlo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ViewClass {
    Cc,
    Mlo,
}

impl View {
    /// Canonical order, also the index order of [`View::index`].
    pub const ALL: [View; 4] = [View::LeftCc, View::RightCc, View::LeftMlo, View::RightMlo];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn side(self) -> Side {
        match self {
            View::LeftCc | View::LeftMlo => Side::Left,
            View::RightCc | View::RightMlo => Side::Right,
        }
    }

    pub fn class(self) -> ViewClass {
        match self {
            View::LeftCc | View::RightCc => ViewClass::Cc,
            View::LeftMlo | View::RightMlo => ViewClass::Mlo,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            View::LeftCc => "L-CC",
            View::RightCc => "R-CC",
            View::LeftMlo => "L-MLO",
            View::RightMlo => "R-MLO",
        }
    }
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];

    pub fn views(self) -> [View; 2] {
        match self {
            Side::Left => [View::LeftCc, View::LeftMlo],
            Side::Right => [View::RightCc, View::RightMlo],
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl fmt::Display for View {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        View::ALL.into_iter().find(|v| v.as_str() == s).ok_or_else(|| invalid!("unknown view {s:?}"))
    }
}
