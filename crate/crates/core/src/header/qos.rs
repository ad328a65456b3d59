//! 4-bit QoS budget levels.
//!
//! Latency is in simulator ticks, loss is a probability. Level 15 of the
//! latency table means "unbounded". Quantizing a requested budget rounds up
//! so a path that meets the request also meets the encoded budget.

pub const LATENCY_LEVELS: [u64; 16] = [
    0,
    1,
    2,
    3,
    4,
    6,
    8,
    12,
    16,
    24,
    32,
    48,
    64,
    128,
    256,
    u64::MAX,
];

pub const LOSS_LEVELS: [f64; 16] = [
    0.0, 1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 0.01, 0.02, 0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0,
];

pub fn quantize_latency(ticks: u64) -> u8 {
    LATENCY_LEVELS
        .iter()
        .position(|&l| l >= ticks)
        .unwrap_or(15) as u8
}

pub fn latency_budget(level: u8) -> u64 {
    LATENCY_LEVELS[usize::from(level.min(15))]
}

pub fn quantize_loss(p: f64) -> u8 {
    if p.is_nan() {
        return 15;
    }
    LOSS_LEVELS
        .iter()
        .position(|&l| l >= p - 1e-12)
        .unwrap_or(15) as u8
}

pub fn loss_budget(level: u8) -> f64 {
    LOSS_LEVELS[usize::from(level.min(15))]
}
