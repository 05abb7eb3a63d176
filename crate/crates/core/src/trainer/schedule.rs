//! Plateau-driven learning-rate and batch-size schedule.
//!
//! Each epoch's loss either improves on the best seen so far or counts
//! toward `patience`. At `patience` stalled epochs the rate is halved; once
//! halving would take it below the floor, the batch size doubles and the
//! rate goes back to its initial value instead.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleConfig {
    pub initial_lr: f64,
    pub lr_floor: f64,
    pub initial_batch: usize,
    pub patience: u32,
    /// Relative improvement needed to reset the stall counter.
    pub tol: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        ScheduleConfig {
            initial_lr: 0.1,
            lr_floor: 1e-7,
            initial_batch: 16,
            patience: 3,
            tol: 1e-4,
        }
    }
}

impl ScheduleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_lr >= 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config(format!("initial lr must be non-negative, got {}", self.initial_lr)));
        }
        if !(self.lr_floor > 0.0) {
            return Err(Error::Config(format!("lr floor must be positive, got {}", self.lr_floor)));
        }
        if self.initial_batch < 2 {
            return Err(Error::Config("batch size must be at least 2".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::Config(format!("tolerance must be non-negative, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScheduleState {
    pub lr: f64,
    pub batch_size: usize,
    pub best_loss: f64,
    pub epochs_since_improve: u32,
    /// Batch-growth actions taken so far.
    pub grow_cycles: u32,
}

impl ScheduleState {
    pub fn new(cfg: &ScheduleConfig) -> Self {
        ScheduleState {
            lr: cfg.initial_lr,
            batch_size: cfg.initial_batch,
            best_loss: f64::INFINITY,
            epochs_since_improve: 0,
            grow_cycles: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleAction {
    None,
    HalveLr,
    GrowBatchResetLr,
}

impl fmt::Display for ScheduleAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            ScheduleAction::None => "none",
            ScheduleAction::HalveLr => "halve_lr",
            ScheduleAction::GrowBatchResetLr => "grow_batch_reset_lr",
        })
    }
}

/// Feeds one epoch's loss into the schedule.
pub fn schedule_update(state: &mut ScheduleState, cfg: &ScheduleConfig, epoch_loss: f64) -> ScheduleAction {
    let improved = if state.best_loss.is_finite() {
        epoch_loss < state.best_loss - cfg.tol * state.best_loss.abs()
    } else {
        epoch_loss.is_finite()
    };
    if improved {
        state.best_loss = epoch_loss;
        state.epochs_since_improve = 0;
        return ScheduleAction::None;
    }
    state.epochs_since_improve += 1;
    if state.epochs_since_improve < cfg.patience {
        return ScheduleAction::None;
    }
    state.epochs_since_improve = 0;
    if state.lr / 2.0 >= cfg.lr_floor {
        state.lr /= 2.0;
        ScheduleAction::HalveLr
    } else {
        state.lr = cfg.initial_lr;
        state.batch_size *= 2;
        state.grow_cycles += 1;
        // losses at the new batch size are not comparable with the old ones
        state.best_loss = f64::INFINITY;
        ScheduleAction::GrowBatchResetLr
    }
}
