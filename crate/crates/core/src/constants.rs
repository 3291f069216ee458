/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Normal cyclic prefix length in units of the 2048-sample useful symbol.
pub const NORMAL_CP_FRACTION: f64 = 144.0 / 2048.0;

/// Extended cyclic prefix length in units of the 2048-sample useful symbol.
pub const EXTENDED_CP_FRACTION: f64 = 512.0 / 2048.0;

/// Subcarriers per resource block.
pub const SUBCARRIERS_PER_RB: usize = 12;
