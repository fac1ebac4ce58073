//! Integer-cent money type.
//!
//! All balances, prices, and cost arithmetic stay in whole cents so that
//! conservation checks and budget reconciliations are exact. Floating point
//! appears only at the reporting boundary (budget shares).

use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

/// An amount of money in cents. Deltas may be negative; transaction amounts
/// and balances on a valid chain never are.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Cents(pub i64);

impl Cents {
    pub const ZERO: Cents = Cents(0);

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }

    pub fn checked_add(self, rhs: Cents) -> Option<Cents> {
        self.0.checked_add(rhs.0).map(Cents)
    }

    pub fn checked_sub(self, rhs: Cents) -> Option<Cents> {
        self.0.checked_sub(rhs.0).map(Cents)
    }

    /// Multiplies by an integer factor, widening internally.
    pub fn scale(self, factor: i64) -> Cents {
        let wide = (self.0 as i128) * (factor as i128);
        Cents(i128_to_i64(wide))
    }

    /// Fraction of this amount as `f64`, for reporting only.
    pub fn ratio_of(self, whole: Cents) -> f64 {
        self.0 as f64 / whole.0 as f64
    }
}

/// Rounds `numerator / denominator` half away from zero.
pub fn round_div(numerator: i128, denominator: i128) -> i64 {
    assert!(denominator != 0, "division by zero");
    let quotient = numerator / denominator;
    let remainder = numerator % denominator;
    let adjusted = if (remainder.abs()) * 2 >= denominator.abs() {
        if (numerator < 0) != (denominator < 0) {
            quotient - 1
        } else {
            quotient + 1
        }
    } else {
        quotient
    };
    i128_to_i64(adjusted)
}

fn i128_to_i64(value: i128) -> i64 {
    i64::try_from(value).expect("cent arithmetic overflowed i64")
}

impl Add for Cents {
    type Output = Cents;
    fn add(self, rhs: Cents) -> Cents {
        Cents(self.0.checked_add(rhs.0).expect("cent addition overflowed"))
    }
}

impl Sub for Cents {
    type Output = Cents;
    fn sub(self, rhs: Cents) -> Cents {
        Cents(
            self.0
                .checked_sub(rhs.0)
                .expect("cent subtraction overflowed"),
        )
    }
}

impl Neg for Cents {
    type Output = Cents;
    fn neg(self) -> Cents {
        Cents(-self.0)
    }
}

impl AddAssign for Cents {
    fn add_assign(&mut self, rhs: Cents) {
        *self = *self + rhs;
    }
}

impl SubAssign for Cents {
    fn sub_assign(&mut self, rhs: Cents) {
        *self = *self - rhs;
    }
}

impl Sum for Cents {
    fn sum<I: Iterator<Item = Cents>>(iter: I) -> Cents {
        iter.fold(Cents::ZERO, Add::add)
    }
}

impl fmt::Display for Cents {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}${}.{:02}", abs / 100, abs % 100)
    }
}
