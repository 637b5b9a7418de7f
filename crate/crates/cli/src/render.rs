use std::fmt::Write;

use swarm_herding::{EnvState, Environment, LeaderAction};

/// Plain-text frame: the grid with per-cell follower values and the leader
/// marked `L`, followed by current and target fractions per vertex.
pub fn frame(
    env: &Environment,
    iteration: usize,
    action: Option<LeaderAction>,
    state: &EnvState,
    mse: f64,
) -> String {
    let cfg = env.config();
    let leader = state.leader.vertex.index();
    let values = state.followers.values();
    let cells: Vec<String> = values
        .iter()
        .enumerate()
        .map(|(v, x)| {
            if v == leader {
                format!("L {x}")
            } else {
                x.clone()
            }
        })
        .collect();
    let width = cells.iter().map(String::len).max().unwrap_or(1) + 2;
    let rule = format!("+{}\n", format!("{}+", "-".repeat(width)).repeat(cfg.cols));

    let mut out = String::new();
    let _ = writeln!(
        out,
        "k={iteration} leader=v{leader} flag={} action={} mse={mse}",
        u8::from(state.leader.flag),
        action.map_or("-", LeaderAction::name),
    );
    out.push_str(&rule);
    for r in 0..cfg.rows {
        out.push('|');
        for c in 0..cfg.cols {
            let _ = write!(out, "{:^width$}|", cells[r * cfg.cols + c]);
        }
        out.push('\n');
        out.push_str(&rule);
    }
    let current = state
        .followers
        .distribution()
        .map(|d| d.density().to_vec())
        .unwrap_or_else(|_| vec![0.0; values.len()]);
    let _ = writeln!(out, "vertex current target");
    for (v, (c, t)) in current.iter().zip(env.target().density()).enumerate() {
        let _ = writeln!(out, "v{v} {c} {t}");
    }
    out.push('\n');
    out
}
