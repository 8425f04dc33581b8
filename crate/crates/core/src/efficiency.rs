//! Quadratic-cost FLOPs model of vanilla PO vs short-to-long PO.
//!
//! With a long context of `N` tokens and a short context of `cN` tokens,
//! vanilla PO runs two long forward passes (`2N²`) and chosen-only SoLoPO runs
//! two short passes plus one long pass for the chosen response
//! (`(2c² + 1)N²`). Reference-model passes are not counted.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::gpo::RaMode;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EfficiencyError {
    #[error("compression rate must lie in (0, 1], got {0}")]
    Compression(f64),
    #[error("long-context length must be positive, got {0}")]
    Length(f64),
}

/// Sequence-length cost model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Long-context length `N` in tokens.
    pub long_len: f64,
    /// Compression rate `c = |x_short| / |x_long|`.
    pub compression: f64,
    pub ra_mode: RaMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    Vanilla,
    SoLo,
}

impl CostModel {
    pub fn new(long_len: f64, compression: f64, ra_mode: RaMode) -> Result<Self, EfficiencyError> {
        check_compression(compression)?;
        if !(long_len.is_finite() && long_len > 0.0) {
            return Err(EfficiencyError::Length(long_len));
        }
        Ok(Self { long_len, compression, ra_mode })
    }
}

fn check_compression(c: f64) -> Result<(), EfficiencyError> {
    if c.is_finite() && c > 0.0 && c <= 1.0 {
        Ok(())
    } else {
        Err(EfficiencyError::Compression(c))
    }
}

/// Training FLOPs in units of token-pair interactions.
///
/// `Both` mode also scores the rejected response on the long context, giving
/// `(2c² + 2)N²`; this case is an extension of the chosen-only model.
pub fn flops(model: &CostModel, variant: Variant) -> f64 {
    let n2 = model.long_len * model.long_len;
    let c2 = model.compression * model.compression;
    match variant {
        Variant::Vanilla => 2.0 * n2,
        Variant::SoLo => {
            let long_passes = if model.ra_mode.uses_rejected_long() { 2.0 } else { 1.0 };
            (2.0 * c2 + long_passes) * n2
        }
    }
}

/// Chosen-only speedup `2 / (2c² + 1)`.
pub fn speedup(c: f64) -> Result<f64, EfficiencyError> {
    check_compression(c)?;
    Ok(2.0 / (2.0 * c * c + 1.0))
}

/// Compression rate below which SoLoPO is cheaper than vanilla PO: `1/√2`.
pub fn crossover_threshold() -> f64 {
    core::f64::consts::FRAC_1_SQRT_2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficiencyRow {
    pub long_len: f64,
    pub compression: f64,
    pub flops_vanilla: f64,
    pub flops_solo: f64,
    pub speedup: f64,
    /// SoLoPO strictly cheaper than vanilla.
    pub crossover: bool,
}

pub fn report(models: &[CostModel]) -> Vec<EfficiencyRow> {
    models
        .iter()
        .map(|m| {
            let flops_vanilla = flops(m, Variant::Vanilla);
            let flops_solo = flops(m, Variant::SoLo);
            EfficiencyRow {
                long_len: m.long_len,
                compression: m.compression,
                flops_vanilla,
                flops_solo,
                speedup: flops_vanilla / flops_solo,
                crossover: m.compression < crossover_threshold(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chosen(n: f64, c: f64) -> CostModel {
        CostModel::new(n, c, RaMode::ChosenOnly).unwrap()
    }

    #[test]
    fn flops_examples() {
        assert_eq!(flops(&chosen(1000.0, 0.5), Variant::Vanilla), 2_000_000.0);
        assert_eq!(flops(&chosen(1000.0, 0.125), Variant::SoLo), 1_031_250.0);
        assert_eq!(flops(&chosen(1000.0, 1.0), Variant::SoLo), 3_000_000.0);
        let both = CostModel::new(1000.0, 0.125, RaMode::Both).unwrap();
        assert_eq!(flops(&both, Variant::SoLo), 2_031_250.0);
    }

    #[test]
    fn speedup_examples() {
        assert_eq!(speedup(1.0).unwrap(), 2.0 / 3.0);
        assert!((speedup(crossover_threshold()).unwrap() - 1.0).abs() < 1e-12);
        assert!((speedup(0.125).unwrap() - 1.939_393_939).abs() < 1e-8);
        assert!(speedup(0.0).is_err());
        assert!(speedup(1.5).is_err());
        assert!(speedup(f64::NAN).is_err());
    }

    #[test]
    fn report_properties() {
        let cs: Vec<f64> = (1..=100).map(|i| i as f64 / 100.0).collect();
        let models: Vec<_> = cs.iter().map(|&c| chosen(4096.0, c)).collect();
        let rows = report(&models);
        for w in rows.windows(2) {
            assert!(w[1].speedup < w[0].speedup);
        }
        for r in &rows {
            assert_eq!(r.crossover, r.compression < 0.70711);
            assert!(r.speedup < 2.0);
            assert!((r.speedup - speedup(r.compression).unwrap()).abs() < 1e-15);
        }
        let tiny = report(&[chosen(10.0, 1e-4)]);
        assert!(tiny[0].speedup < 2.0 && tiny[0].speedup > 1.999_999);
    }

    #[test]
    fn length_cancels() {
        for n in [1.0, 37.0, 8192.0, 1e6] {
            let m = chosen(n, 0.3);
            let ratio = flops(&m, Variant::Vanilla) / flops(&m, Variant::SoLo);
            assert!((ratio - speedup(0.3).unwrap()).abs() < 1e-14);
        }
    }
}
