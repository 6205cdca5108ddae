use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Annotated object classes. The discriminant is the channel index inside a
/// grid vector and is part of every on-disk format.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum ObjectCategory {
    Person = 0,
    Car = 1,
    Van = 2,
    Truck = 3,
    Motorbike = 4,
    Bike = 5,
    Bus = 6,
    Trailer = 7,
}

impl ObjectCategory {
    pub const COUNT: usize = 8;

    pub const ALL: [ObjectCategory; Self::COUNT] = [
        ObjectCategory::Person,
        ObjectCategory::Car,
        ObjectCategory::Van,
        ObjectCategory::Truck,
        ObjectCategory::Motorbike,
        ObjectCategory::Bike,
        ObjectCategory::Bus,
        ObjectCategory::Trailer,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::ALL.get(index).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ObjectCategory::Person => "person",
            ObjectCategory::Car => "car",
            ObjectCategory::Van => "van",
            ObjectCategory::Truck => "truck",
            ObjectCategory::Motorbike => "motorbike",
            ObjectCategory::Bike => "bike",
            ObjectCategory::Bus => "bus",
            ObjectCategory::Trailer => "trailer",
        }
    }
}

impl fmt::Display for ObjectCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ObjectCategory {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::config(format!("unknown object category `{s}`")))
    }
}
