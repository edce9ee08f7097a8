//! Sender-side DCQCN rate control and switch-side RED marking.

use super::config::DcqcnParams;

/// Marking probability for a packet enqueued behind `queue_bytes`.
pub fn red_mark_probability(queue_bytes: u64, p: &DcqcnParams) -> f64 {
    if queue_bytes <= p.kmin_bytes {
        0.0
    } else if queue_bytes > p.kmax_bytes {
        1.0
    } else {
        p.pmax * (queue_bytes - p.kmin_bytes) as f64 / (p.kmax_bytes - p.kmin_bytes) as f64
    }
}

/// Rate state of one sender (reaction point).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateState {
    /// Current rate `R_C`, bit/s.
    pub current: f64,
    /// Target rate `R_T`, bit/s.
    pub target: f64,
    pub alpha: f64,
    /// Increase events from the rate timer since the last cut.
    pub timer_stage: u32,
    /// Increase events from the byte counter since the last cut.
    pub byte_stage: u32,
    line_rate: f64,
    min_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IncreaseSource {
    Timer,
    ByteCounter,
}

impl RateState {
    /// A sender that has been idle long enough to sit at line rate.
    pub fn at_line_rate(line_rate: f64, p: &DcqcnParams) -> Self {
        Self {
            current: line_rate,
            target: line_rate,
            alpha: p.initial_alpha,
            timer_stage: 0,
            byte_stage: 0,
            line_rate,
            min_rate: p.min_rate_bps.min(line_rate),
        }
    }

    pub fn with_rates(current: f64, target: f64, alpha: f64, line_rate: f64, p: &DcqcnParams) -> Self {
        Self {
            current,
            target,
            alpha,
            ..Self::at_line_rate(line_rate, p)
        }
    }

    /// Multiplicative decrease on a congestion notification.
    pub fn on_cnp(&mut self, p: &DcqcnParams) {
        self.target = self.current;
        self.current = (self.current * (1.0 - self.alpha / 2.0)).max(self.min_rate);
        self.alpha = (1.0 - p.g) * self.alpha + p.g;
        self.timer_stage = 0;
        self.byte_stage = 0;
    }

    /// Alpha decay after a period without notifications.
    pub fn on_alpha_timer(&mut self, p: &DcqcnParams) {
        self.alpha *= 1.0 - p.g;
    }

    /// Fast recovery while both stage counters are below the threshold,
    /// hyper increase once both reached it, additive increase otherwise.
    pub fn on_increase(&mut self, source: IncreaseSource, p: &DcqcnParams) {
        match source {
            IncreaseSource::Timer => self.timer_stage += 1,
            IncreaseSource::ByteCounter => self.byte_stage += 1,
        }
        let f = p.fast_recovery_stages;
        let hi = self.timer_stage.max(self.byte_stage);
        let lo = self.timer_stage.min(self.byte_stage);
        if hi >= f {
            if lo >= f {
                self.target += f64::from(lo - f + 1) * p.r_hi_bps;
            } else {
                self.target += p.r_ai_bps;
            }
        }
        self.target = self.target.min(self.line_rate);
        self.current = ((self.target + self.current) / 2.0).min(self.line_rate);
    }

    pub fn is_at_line_rate(&self) -> bool {
        self.current >= self.line_rate && self.target >= self.line_rate
    }
}
