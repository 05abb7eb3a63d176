//! Drives the plateau schedule with a loss that stops improving and
//! prints every action it takes.
//!
//!     cargo run --example plateau_schedule [epochs]

use xmodal::trainer::{schedule_update, ScheduleAction, ScheduleConfig, ScheduleState};

fn main() {
    let epochs: u32 = std::env::args().nth(1).map_or(200, |s| s.parse().expect("epochs"));
    let cfg = ScheduleConfig::default();
    let mut state = ScheduleState::new(&cfg);
    for epoch in 1..=epochs {
        // improves for ten epochs, then flat
        let loss = if epoch <= 10 { 1.0 / epoch as f64 } else { 0.1 };
        let action = schedule_update(&mut state, &cfg, loss);
        if action != ScheduleAction::None {
            println!(
                "epoch {epoch:>3}: {action:<20} lr {:.3e}  batch {}  grow cycles {}",
                state.lr, state.batch_size, state.grow_cycles
            );
        }
    }
}
