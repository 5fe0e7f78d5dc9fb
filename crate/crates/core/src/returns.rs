//! Discounted Monte-Carlo returns and generalized advantage estimates.

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ReturnsError {
    #[error("reward sequence is empty")]
    Empty,
    #[error("length mismatch: {0}")]
    Length(String),
}

/// `R_t = r_t + γ R_{t+1}` with `R_last = r_last`, over one finished episode.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Result<Vec<f64>, ReturnsError> {
    if rewards.is_empty() {
        return Err(ReturnsError::Empty);
    }
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for (o, r) in out.iter_mut().zip(rewards).rev() {
        acc = r + gamma * acc;
        *o = acc;
    }
    Ok(out)
}

/// GAE over a rollout that may span several episodes.
///
/// `values` has one more entry than `rewards`: the last is the bootstrap value
/// of the state reached after the final step (ignored when that step is done).
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>, ReturnsError> {
    let t_len = rewards.len();
    if values.len() != t_len + 1 || dones.len() != t_len {
        return Err(ReturnsError::Length(format!(
            "{} rewards need {} values and {} dones, got {} and {}",
            t_len,
            t_len + 1,
            t_len,
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; t_len];
    let mut next = 0.0;
    for t in (0..t_len).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * values[t + 1] - values[t];
        next = delta + gamma * lambda * live * next;
        adv[t] = next;
    }
    Ok(adv)
}
