//! Sign-constancy and amplitude diagnostics of measured channels.

use std::fmt;

use super::dataset::Dataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcitationOptions {
    /// Samples with `|y| <= margin` count as amplitude violations.
    pub margin: f64,
    /// Largest tolerated fraction of violating samples.
    pub max_fraction: f64,
}

impl Default for ExcitationOptions {
    fn default() -> Self {
        Self {
            margin: 0.0,
            max_fraction: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelExcitation {
    pub experiment: usize,
    /// 1-based state channel.
    pub channel: usize,
    /// `true` for `y + y_aux`, `false` for `y`.
    pub with_aux: bool,
    /// Sign of the channel mean, 0 if the mean is exactly zero.
    pub majority_sign: i8,
    /// Fraction of samples whose sign differs from `majority_sign`.
    pub sign_change_fraction: f64,
    /// Fraction of samples inside the amplitude margin.
    pub amplitude_fraction: f64,
    pub min_abs: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExcitationReport {
    pub channels: Vec<ChannelExcitation>,
}

impl ExcitationReport {
    pub fn violations(&self) -> impl Iterator<Item = &ChannelExcitation> {
        self.channels.iter().filter(|c| c.flagged)
    }

    pub fn is_clean(&self, channel: usize, with_aux: bool) -> bool {
        self.channels
            .iter()
            .filter(|c| c.channel == channel && c.with_aux == with_aux)
            .all(|c| !c.flagged)
    }
}

impl fmt::Display for ExcitationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "exp  channel  signal    sign  changes   in-margin  min|y|      flag"
        )?;
        for c in &self.channels {
            writeln!(
                f,
                "{:<4} {:<8} {:<9} {:+}    {:<9.4} {:<10.4} {:<11.4e} {}",
                c.experiment,
                c.channel,
                if c.with_aux { "y+y_aux" } else { "y" },
                c.majority_sign,
                c.sign_change_fraction,
                c.amplitude_fraction,
                c.min_abs,
                if c.flagged { "VIOLATION" } else { "ok" }
            )?;
        }
        Ok(())
    }
}

fn channel_stats(
    series: impl Iterator<Item = f64> + Clone,
    opts: &ExcitationOptions,
) -> (i8, f64, f64, f64) {
    let n = series.clone().count().max(1) as f64;
    let mean = series.clone().sum::<f64>() / n;
    let sign: i8 = if mean > 0.0 {
        1
    } else if mean < 0.0 {
        -1
    } else {
        0
    };
    let mut changes = 0usize;
    let mut small = 0usize;
    let mut min_abs = f64::INFINITY;
    for v in series {
        if sign == 0 || v * f64::from(sign) <= 0.0 {
            changes += 1;
        }
        if v.abs() <= opts.margin {
            small += 1;
        }
        min_abs = min_abs.min(v.abs());
    }
    (sign, changes as f64 / n, small as f64 / n, min_abs)
}

/// Never fails; an empty experiment yields no rows.
pub fn check_excitation(ds: &Dataset, opts: &ExcitationOptions) -> ExcitationReport {
    let mut channels = Vec::new();
    for (i, e) in ds.experiments.iter().enumerate() {
        if e.is_empty() {
            continue;
        }
        for c in 0..3 {
            let mut push = |with_aux: bool, stats: (i8, f64, f64, f64)| {
                let (majority_sign, sc, amp, min_abs) = stats;
                channels.push(ChannelExcitation {
                    experiment: i,
                    channel: c + 1,
                    with_aux,
                    majority_sign,
                    sign_change_fraction: sc,
                    amplitude_fraction: amp,
                    min_abs,
                    flagged: sc > opts.max_fraction || amp > opts.max_fraction,
                });
            };
            push(false, channel_stats(e.y.iter().map(|y| y[c]), opts));
            if let Some(aux) = &e.y_aux {
                push(
                    true,
                    channel_stats(e.y.iter().zip(aux).map(|(y, a)| y[c] + a[c]), opts),
                );
            }
        }
    }
    ExcitationReport { channels }
}
