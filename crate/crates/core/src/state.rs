//! Grid, model state container and the exact elementwise state algebra.
//!
//! Parareal's correction step only ever touches states through
//! [`state_diff`] and [`state_add`]; both are plain IEEE-754 elementwise
//! arithmetic with no masking or tolerance.

use std::fmt;

use thiserror::Error;

/// Default velocity magnitude (m/s) above which a state counts as blown up.
pub const DEFAULT_VELOCITY_CAP: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("grid mismatch: {left} vs {right}")]
    GridMismatch { left: Grid, right: Grid },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field {field} has {actual} values, expected {expected}")]
    LengthMismatch {
        field: FieldName,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value in field {field} at index {index}")]
    NonFinite { field: FieldName, index: usize },
}

/// Doubly periodic structured grid. Cell `(i, j)` lives at flat index
/// `j * nx + i` (row-major, x fastest).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
}

impl Grid {
    pub const MIN_CELLS: usize = 4;

    pub fn new(nx: usize, ny: usize, dx: f64, dy: f64) -> Result<Self, StateError> {
        if nx < Self::MIN_CELLS || ny < Self::MIN_CELLS {
            return Err(StateError::InvalidGrid(format!(
                "need at least {m}x{m} cells, got {nx}x{ny}",
                m = Self::MIN_CELLS
            )));
        }
        if !(dx > 0.0 && dx.is_finite() && dy > 0.0 && dy.is_finite()) {
            return Err(StateError::InvalidGrid(format!(
                "cell sizes must be positive, got dx={dx}, dy={dy}"
            )));
        }
        Ok(Self { nx, ny, dx, dy })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn dy(&self) -> f64 {
        self.dy
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Domain extent in x (m).
    pub fn length_x(&self) -> f64 {
        self.nx as f64 * self.dx
    }

    /// Domain extent in y (m).
    pub fn length_y(&self) -> f64 {
        self.ny as f64 * self.dy
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} (dx={} m, dy={} m)", self.nx, self.ny, self.dx, self.dy)
    }
}

/// The five prognostic fields, in their fixed storage and file order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FieldName {
    U,
    V,
    Eta,
    T,
    S,
}

impl FieldName {
    pub const ALL: [FieldName; 5] = [
        FieldName::U,
        FieldName::V,
        FieldName::Eta,
        FieldName::T,
        FieldName::S,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FieldName::U => "U",
            FieldName::V => "V",
            FieldName::Eta => "ETA",
            FieldName::T => "T",
            FieldName::S => "S",
        }
    }
}

impl fmt::Display for FieldName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FieldName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "U" => Ok(FieldName::U),
            "V" => Ok(FieldName::V),
            "ETA" => Ok(FieldName::Eta),
            "T" => Ok(FieldName::T),
            "S" => Ok(FieldName::S),
            other => Err(format!("unknown field '{other}' (expected U, V, ETA, T or S)")),
        }
    }
}

/// Five equally sized arrays, one per [`FieldName`]. Shared by states and
/// tendencies.
#[derive(Clone, PartialEq)]
pub struct FieldSet {
    data: [Vec<f64>; 5],
}

impl fmt::Debug for FieldSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FieldSet")
            .field("len", &self.data[0].len())
            .finish()
    }
}

impl FieldSet {
    pub fn zeros(len: usize) -> Self {
        Self {
            data: std::array::from_fn(|_| vec![0.0; len]),
        }
    }

    /// Builds a field set from arrays given in [`FieldName::ALL`] order.
    pub fn from_arrays(data: [Vec<f64>; 5]) -> Self {
        Self { data }
    }

    pub fn field(&self, name: FieldName) -> &[f64] {
        &self.data[name.index()]
    }

    pub fn field_mut(&mut self, name: FieldName) -> &mut [f64] {
        &mut self.data[name.index()]
    }

    pub fn iter(&self) -> impl Iterator<Item = (FieldName, &[f64])> {
        FieldName::ALL
            .into_iter()
            .map(move |f| (f, self.data[f.index()].as_slice()))
    }

    pub fn len(&self) -> usize {
        self.data[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn into_arrays(self) -> [Vec<f64>; 5] {
        self.data
    }

    fn check_len(&self, expected: usize) -> Result<(), StateError> {
        for (field, values) in self.iter() {
            if values.len() != expected {
                return Err(StateError::LengthMismatch {
                    field,
                    expected,
                    actual: values.len(),
                });
            }
        }
        Ok(())
    }

    /// First non-finite entry in field order.
    pub fn first_non_finite(&self) -> Option<(FieldName, usize)> {
        self.iter().find_map(|(field, values)| {
            values
                .iter()
                .position(|v| !v.is_finite())
                .map(|index| (field, index))
        })
    }

    fn zip_with(&self, other: &FieldSet, op: impl Fn(f64, f64) -> f64) -> FieldSet {
        let data = std::array::from_fn(|k| {
            self.data[k]
                .iter()
                .zip(&other.data[k])
                .map(|(&a, &b)| op(a, b))
                .collect()
        });
        FieldSet { data }
    }

    /// Bitwise equality (distinguishes `0.0` from `-0.0`, equates identical NaNs).
    pub fn bit_eq(&self, other: &FieldSet) -> bool {
        self.data.iter().zip(&other.data).all(|(a, b)| {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
        })
    }
}

/// Prognostic state at an integer-second time stamp.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    grid: Grid,
    fields: FieldSet,
    time: u64,
}

impl ModelState {
    /// Builds a state, enforcing array lengths and finiteness.
    pub fn new(grid: Grid, fields: FieldSet, time: u64) -> Result<Self, StateError> {
        fields.check_len(grid.len())?;
        if let Some((field, index)) = fields.first_non_finite() {
            return Err(StateError::NonFinite { field, index });
        }
        Ok(Self { grid, fields, time })
    }

    /// Builds a state checking only the array lengths. Used where non-finite
    /// values must be representable, e.g. to hand a diverged state to
    /// [`validate_state`].
    pub fn new_unchecked_values(grid: Grid, fields: FieldSet, time: u64) -> Result<Self, StateError> {
        fields.check_len(grid.len())?;
        Ok(Self { grid, fields, time })
    }

    /// Ocean at rest: zero velocity and elevation, uniform tracers.
    pub fn rest(grid: Grid, temperature: f64, salinity: f64, time: u64) -> Self {
        let mut fields = FieldSet::zeros(grid.len());
        fields.field_mut(FieldName::T).fill(temperature);
        fields.field_mut(FieldName::S).fill(salinity);
        Self { grid, fields, time }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn fields(&self) -> &FieldSet {
        &self.fields
    }

    pub fn field(&self, name: FieldName) -> &[f64] {
        self.fields.field(name)
    }

    pub fn time(&self) -> u64 {
        self.time
    }

    pub fn with_time(mut self, time: u64) -> Self {
        self.time = time;
        self
    }

    pub fn into_fields(self) -> FieldSet {
        self.fields
    }

    /// Mutable access for constructing initial conditions. Callers are
    /// responsible for keeping values finite.
    pub fn field_mut(&mut self, name: FieldName) -> &mut [f64] {
        self.fields.field_mut(name)
    }

    pub fn bit_eq(&self, other: &ModelState) -> bool {
        self.time == other.time && self.grid == other.grid && self.fields.bit_eq(&other.fields)
    }

    fn check_finite(&self) -> Result<(), StateError> {
        match self.fields.first_non_finite() {
            Some((field, index)) => Err(StateError::NonFinite { field, index }),
            None => Ok(()),
        }
    }
}

fn check_binary(a: &ModelState, b: &ModelState) -> Result<(), StateError> {
    if a.grid != b.grid {
        return Err(StateError::GridMismatch {
            left: a.grid,
            right: b.grid,
        });
    }
    a.check_finite()?;
    b.check_finite()
}

/// Elementwise `a - b`; the result carries `a`'s time stamp.
pub fn state_diff(a: &ModelState, b: &ModelState) -> Result<ModelState, StateError> {
    check_binary(a, b)?;
    Ok(ModelState {
        grid: a.grid,
        fields: a.fields.zip_with(&b.fields, |x, y| x - y),
        time: a.time,
    })
}

/// Elementwise `a + b`; the result carries `a`'s time stamp.
pub fn state_add(a: &ModelState, b: &ModelState) -> Result<ModelState, StateError> {
    check_binary(a, b)?;
    Ok(ModelState {
        grid: a.grid,
        fields: a.fields.zip_with(&b.fields, |x, y| x + y),
        time: a.time,
    })
}

/// Why a state was judged diverged.
#[derive(Debug, Clone, PartialEq)]
pub enum BlowUpReason {
    NonFinite,
    VelocityCap { value: f64, cap: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlowUpReport {
    pub field: FieldName,
    pub index: usize,
    pub reason: BlowUpReason,
}

impl fmt::Display for BlowUpReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.reason {
            BlowUpReason::NonFinite => {
                write!(f, "non-finite value in {} at index {}", self.field, self.index)
            }
            BlowUpReason::VelocityCap { value, cap } => write!(
                f,
                "|{}| = {value:e} exceeds cap {cap} m/s at index {}",
                self.field, self.index
            ),
        }
    }
}

/// Blow-up predicate: every value finite and `max(|u|, |v|) <= velocity_cap`.
/// Non-finite values are searched first over all fields, then the cap.
pub fn validate_state(s: &ModelState, velocity_cap: f64) -> Result<(), BlowUpReport> {
    if let Some((field, index)) = s.fields.first_non_finite() {
        return Err(BlowUpReport {
            field,
            index,
            reason: BlowUpReason::NonFinite,
        });
    }
    for field in [FieldName::U, FieldName::V] {
        if let Some((index, &value)) = s
            .field(field)
            .iter()
            .enumerate()
            .find(|(_, v)| v.abs() > velocity_cap)
        {
            return Err(BlowUpReport {
                field,
                index,
                reason: BlowUpReason::VelocityCap {
                    value,
                    cap: velocity_cap,
                },
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid8() -> Grid {
        Grid::new(8, 8, 1.0, 1.0).unwrap()
    }

    fn constant_state(u: f64) -> ModelState {
        let mut s = ModelState::rest(grid8(), 10.0, 35.0, 0);
        s.field_mut(FieldName::U).fill(u);
        s
    }

    #[test]
    fn grid_rejects_small_or_degenerate() {
        assert!(Grid::new(3, 8, 1.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 0.0, 1.0).is_err());
        assert!(Grid::new(8, 8, 1.0, -2.0).is_err());
        assert!(Grid::new(4, 4, 1.0, 1.0).is_ok());
    }

    #[test]
    fn diff_of_equal_states_is_zero() {
        let a = constant_state(0.3);
        let d = state_diff(&a, &a).unwrap();
        for (_, values) in d.fields().iter() {
            assert!(values.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn diff_constant_fields() {
        let a = constant_state(2.0);
        let b = constant_state(0.5);
        let d = state_diff(&a, &b).unwrap();
        assert!(d.field(FieldName::U).iter().all(|&v| v == 1.5));
        for f in [FieldName::V, FieldName::Eta, FieldName::T, FieldName::S] {
            assert!(d.field(f).iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn add_zero_is_identity() {
        let a = constant_state(0.123456789);
        let zero = ModelState::rest(grid8(), 0.0, 0.0, 0);
        assert!(state_add(&a, &zero).unwrap().bit_eq(&a));
    }

    #[test]
    fn result_takes_left_time() {
        let a = constant_state(1.0).with_time(2400);
        let b = constant_state(1.0).with_time(4800);
        assert_eq!(state_diff(&a, &b).unwrap().time(), 2400);
        assert_eq!(state_add(&b, &a).unwrap().time(), 4800);
    }

    #[test]
    fn grid_mismatch_rejected() {
        let a = constant_state(1.0);
        let b = ModelState::rest(Grid::new(8, 4, 1.0, 1.0).unwrap(), 0.0, 0.0, 0);
        assert!(matches!(state_diff(&a, &b), Err(StateError::GridMismatch { .. })));
        assert!(matches!(state_add(&a, &b), Err(StateError::GridMismatch { .. })));
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let a = constant_state(1.0);
        let mut fields = a.fields().clone();
        fields.field_mut(FieldName::S)[5] = f64::INFINITY;
        let b = ModelState::new_unchecked_values(grid8(), fields, 0).unwrap();
        assert_eq!(
            state_diff(&a, &b),
            Err(StateError::NonFinite {
                field: FieldName::S,
                index: 5
            })
        );
    }

    #[test]
    fn constructor_checks_lengths() {
        let mut data: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; 64]);
        data[3] = vec![0.0; 63];
        let err = ModelState::new(grid8(), FieldSet::from_arrays(data), 0).unwrap_err();
        assert!(matches!(err, StateError::LengthMismatch { field: FieldName::T, .. }));
    }

    #[test]
    fn validate_rest_state_ok() {
        let s = ModelState::rest(grid8(), 15.0, 35.0, 0);
        assert!(validate_state(&s, DEFAULT_VELOCITY_CAP).is_ok());
    }

    #[test]
    fn validate_reports_nan_in_temperature() {
        let s = ModelState::rest(grid8(), 15.0, 35.0, 0);
        let mut fields = s.into_fields();
        fields.field_mut(FieldName::T)[17] = f64::NAN;
        let s = ModelState::new_unchecked_values(grid8(), fields, 0).unwrap();
        let report = validate_state(&s, DEFAULT_VELOCITY_CAP).unwrap_err();
        assert_eq!(report.field, FieldName::T);
        assert_eq!(report.index, 17);
        assert_eq!(report.reason, BlowUpReason::NonFinite);
    }

    #[test]
    fn validate_reports_velocity_cap() {
        let s = constant_state(1e6);
        let report = validate_state(&s, DEFAULT_VELOCITY_CAP).unwrap_err();
        assert_eq!(report.field, FieldName::U);
        assert_eq!(report.index, 0);
        assert!(matches!(report.reason, BlowUpReason::VelocityCap { .. }));
    }

    #[test]
    fn field_names_parse() {
        assert_eq!("eta".parse::<FieldName>().unwrap(), FieldName::Eta);
        assert_eq!(" u ".parse::<FieldName>().unwrap(), FieldName::U);
        assert!("W".parse::<FieldName>().is_err());
    }
}
