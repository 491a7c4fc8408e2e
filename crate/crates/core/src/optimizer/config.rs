use crate::error::{Error, Result};
use crate::partition::PartitionMode;
use crate::prediction::{DEFAULT_K_CURRENT, DEFAULT_K_REFERENCE};

pub const DEFAULT_MAX_ITERATIONS: usize = 50;
/// A loop stops after this many consecutive iterations without improvement.
pub const STALL_LIMIT: usize = 10;

/// Encoder settings. Text form is one `key=value` per line; `#` starts a
/// comment.
///
/// ```
/// use mrp4d::optimizer::EncoderConfig;
/// use mrp4d::partition::PartitionMode;
///
/// let cfg = EncoderConfig::parse("mode = dt\nM = 12\n# trailing comment\nseed=7").unwrap();
/// assert_eq!(cfg.mode, PartitionMode::Dual);
/// assert_eq!(cfg.classes, Some(12));
/// assert_eq!(cfg.seed, Some(7));
/// ```
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderConfig {
    pub mode: PartitionMode,
    /// Number of classes; `None` derives it from the light field size.
    pub classes: Option<usize>,
    pub k_current: usize,
    pub k_reference: usize,
    pub max_iterations: usize,
    /// Enables randomised tie-breaking in the initial classification.
    pub seed: Option<u64>,
    /// Run the variable block size loop after the fixed block size loop.
    pub second_loop: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            mode: PartitionMode::Hex,
            classes: None,
            k_current: DEFAULT_K_CURRENT,
            k_reference: DEFAULT_K_REFERENCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            seed: None,
            second_loop: true,
        }
    }
}

/// `max(8, min(63, ⌈pixels / 2^16⌉))`.
pub fn default_class_count(pixels: usize) -> usize {
    pixels.div_ceil(1 << 16).clamp(8, 63)
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "1" | "true" | "yes" | "on" => Some(true),
        "0" | "false" | "no" | "off" => Some(false),
        _ => None,
    }
}

impl EncoderConfig {
    pub fn with_mode(mode: PartitionMode) -> Self {
        EncoderConfig {
            mode,
            ..Self::default()
        }
    }

    /// Intra-only ablation: no inter-SAI prediction taps and a plain 2D
    /// quadtree, so every SAI is predicted from itself alone.
    pub fn intra_only(self) -> Self {
        EncoderConfig {
            mode: PartitionMode::Quad2d,
            k_reference: 0,
            ..self
        }
    }

    pub fn class_count(&self, pixels: usize) -> usize {
        self.classes.unwrap_or_else(|| default_class_count(pixels))
    }

    /// Sets one option by name.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        let num = |v: &str| v.parse::<usize>().map_err(|_| format!("`{v}` is not a non-negative integer"));
        match key {
            "mode" => self.mode = PartitionMode::parse(value).ok_or_else(|| format!("unknown mode `{value}`"))?,
            "M" | "classes" => {
                let m = num(value)?;
                if !(1..=255).contains(&m) {
                    return Err("M must be in 1..=255".into());
                }
                self.classes = Some(m);
            }
            "k_current" => self.k_current = num(value)?,
            "k_reference" => self.k_reference = num(value)?,
            "max_iterations" => {
                self.max_iterations = num(value)?;
                if self.max_iterations == 0 {
                    return Err("max_iterations must be positive".into());
                }
            }
            "seed" => self.seed = Some(value.parse().map_err(|_| format!("bad seed `{value}`"))?),
            "second_loop" => self.second_loop = parse_bool(value).ok_or_else(|| format!("bad boolean `{value}`"))?,
            "intra_only" => {
                if parse_bool(value).ok_or_else(|| format!("bad boolean `{value}`"))? {
                    *self = self.clone().intra_only();
                }
            }
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// Parses a config file on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge(text)?;
        Ok(cfg)
    }

    /// Applies the settings in `text` to `self`.
    pub fn merge(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config {
                line: n + 1,
                message: format!("expected key=value, got `{line}`"),
            })?;
            self.set(k.trim(), v.trim()).map_err(|message| Error::Config { line: n + 1, message })?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn class_count_formula() {
        assert_eq!(default_class_count(1024), 8);
        assert_eq!(default_class_count(13 * 13 * 625 * 434), 63);
        assert_eq!(default_class_count(9 << 16), 9);
        assert_eq!(default_class_count((9 << 16) + 1), 10);
    }

    #[test]
    fn config_errors_carry_line_numbers() {
        let err = EncoderConfig::parse("mode=4d\n\nbogus=1").unwrap_err();
        assert!(matches!(err, Error::Config { line: 3, .. }));
        assert!(EncoderConfig::parse("mode").is_err());
        assert!(EncoderConfig::parse("max_iterations=0").is_err());
    }

    #[test]
    fn intra_only_key() {
        let cfg = EncoderConfig::parse("intra_only=true").unwrap();
        assert_eq!(cfg.k_reference, 0);
        assert_eq!(cfg.mode, PartitionMode::Quad2d);
    }
}
