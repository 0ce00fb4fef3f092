//! Small shared value types.

use serde::{Deserialize, Serialize};

/// A pair of values, one per polarisation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DualPol<T> {
    pub x: T,
    pub y: T,
}

impl<T> DualPol<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn map<U>(self, mut f: impl FnMut(T) -> U) -> DualPol<U> {
        DualPol { x: f(self.x), y: f(self.y) }
    }

    pub fn as_ref(&self) -> DualPol<&T> {
        DualPol { x: &self.x, y: &self.y }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        [&self.x, &self.y].into_iter()
    }
}
