use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::Error;

/// Sampling frequency of a series, with its lag set and source horizon.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Yearly,
    Quarterly,
    Monthly,
    Weekly,
    Daily,
    Hourly,
}

const YEARLY_LAGS: &[usize] = &[1, 2, 3, 4, 5, 6, 7];
const QUARTERLY_LAGS: &[usize] = &[1, 2, 3, 4, 5, 6, 7, 8, 9, 11, 12, 13];
const MONTHLY_LAGS: &[usize] = &[1, 2, 3, 4, 5, 6, 7, 11, 12, 13, 23, 24, 25, 35, 36, 37];
const WEEKLY_LAGS: &[usize] = &[
    1, 2, 3, 4, 5, 6, 7, 8, 12, 51, 52, 53, 103, 104, 105, 155, 156, 157,
];
const DAILY_LAGS: &[usize] = &[
    1, 2, 3, 4, 5, 6, 7, 8, 13, 14, 15, 20, 21, 22, 27, 28, 29, 30, 31, 56, 84, 363, 364, 365,
    727, 728, 729, 1091, 1092, 1093,
];
const HOURLY_LAGS: &[usize] = &[
    1, 2, 3, 4, 5, 6, 7, 23, 24, 25, 47, 48, 49, 71, 72, 73, 95, 96, 97, 119, 120, 121, 143, 144,
    145, 167, 168, 169, 335, 336, 337, 503, 504, 505, 671, 672, 673, 719, 720, 721,
];

impl Frequency {
    pub const ALL: [Frequency; 6] = [
        Frequency::Yearly,
        Frequency::Quarterly,
        Frequency::Monthly,
        Frequency::Weekly,
        Frequency::Daily,
        Frequency::Hourly,
    ];

    /// Lag set fed to the network as covariates.
    pub fn default_lags(self) -> &'static [usize] {
        match self {
            Frequency::Yearly => YEARLY_LAGS,
            Frequency::Quarterly => QUARTERLY_LAGS,
            Frequency::Monthly => MONTHLY_LAGS,
            Frequency::Weekly => WEEKLY_LAGS,
            Frequency::Daily => DAILY_LAGS,
            Frequency::Hourly => HOURLY_LAGS,
        }
    }

    /// Forecast horizon of the M4 source dataset at this frequency.
    pub fn source_horizon(self) -> usize {
        match self {
            Frequency::Yearly => 6,
            Frequency::Quarterly => 8,
            Frequency::Monthly => 18,
            Frequency::Weekly => 13,
            Frequency::Daily => 14,
            Frequency::Hourly => 48,
        }
    }

    pub fn token(self) -> &'static str {
        match self {
            Frequency::Yearly => "Y",
            Frequency::Quarterly => "Q",
            Frequency::Monthly => "M",
            Frequency::Weekly => "W",
            Frequency::Daily => "D",
            Frequency::Hourly => "H",
        }
    }
}

impl FromStr for Frequency {
    type Err = Error;

    /// Accepts single-letter tokens (`Y`, `Q`, `M`, `W`, `D`, `H`), optionally
    /// prefixed by `1` or suffixed pandas-style (`Q-DEC`, `A`), and full names.
    fn from_str(s: &str) -> Result<Self, Error> {
        let t = s.trim().to_ascii_uppercase();
        let t = t.strip_prefix('1').unwrap_or(&t);
        let head = t.split('-').next().unwrap_or("");
        let f = match head {
            "Y" | "A" | "YS" | "AS" | "YEARLY" => Frequency::Yearly,
            "Q" | "QS" | "QUARTERLY" => Frequency::Quarterly,
            "M" | "MS" | "MONTHLY" => Frequency::Monthly,
            "W" | "WEEKLY" => Frequency::Weekly,
            "D" | "B" | "DAILY" => Frequency::Daily,
            "H" | "HOURLY" => Frequency::Hourly,
            _ => return Err(Error::Data(format!("unknown frequency token {s:?}"))),
        };
        Ok(f)
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}
