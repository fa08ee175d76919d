//! Statistical behavior of the background ecology: driftlessness of the
//! noise-only market and the mean-reverting pull of value traders.

use mmlab_core::rng::RngRegistry;
use mmlab_core::session::{MarketCfg, TradingSession};

fn run_mids(cfg: &MarketCfg, seed: u64, steps: u64) -> Vec<i64> {
    let mut cfg = cfg.clone();
    cfg.steps_per_session = steps;
    let registry = RngRegistry::new(seed);
    let mut session = TradingSession::new(cfg, &registry);
    let mut mids = Vec::with_capacity(steps as usize);
    while !session.clock.session_over() {
        mids.push(session.step_background().mid.ticks());
        session.advance();
    }
    mids
}

#[test]
fn noise_and_pov_market_has_no_drift() {
    // Only noise + POV agents: over 10,000 steps the mean per-step return
    // must be within 3 standard errors of zero.
    let mut cfg = MarketCfg::desk();
    cfg.n_value = 0;
    cfg.n_momentum = 0;
    for seed in [11u64, 22, 33] {
        let mids = run_mids(&cfg, seed, 10_000);
        let returns: Vec<f64> = mids.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
        let n = returns.len() as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / (n - 1.0);
        let standard_error = (var / n).sqrt();
        assert!(
            mean.abs() <= 3.0 * standard_error,
            "seed {seed}: drift {mean} vs 3 SE {}",
            3.0 * standard_error
        );
    }
}

#[test]
fn value_agents_pull_mid_toward_fundamental() {
    // correlation(mid - fundamental at t, delta mid at t+1) < 0 over a
    // long run with value agents active.
    let mut cfg = MarketCfg::desk();
    cfg.n_momentum = 0;
    cfg.n_value = 2;
    cfg.steps_per_session = 10_000;
    let registry = RngRegistry::new(99);
    let mut session = TradingSession::new(cfg, &registry);
    let mut deviations = Vec::new();
    let mut mids = Vec::new();
    while !session.clock.session_over() {
        let view = session.step_background();
        let fundamental: f64 = {
            let f = session.value_fundamentals();
            f.iter().sum::<f64>() / f.len() as f64
        };
        deviations.push(view.mid.ticks() as f64 - fundamental);
        mids.push(view.mid.ticks() as f64);
        session.advance();
    }
    // Pair deviation at t with the mid change over (t, t+1].
    let xs = &deviations[..deviations.len() - 1];
    let ys: Vec<f64> = mids.windows(2).map(|w| w[1] - w[0]).collect();
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let mean_y = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        cov += (x - mean_x) * (y - mean_y);
        var_x += (x - mean_x) * (x - mean_x);
        var_y += (y - mean_y) * (y - mean_y);
    }
    let corr = cov / (var_x.sqrt() * var_y.sqrt());
    assert!(corr < 0.0, "correlation {corr} is not negative");
}
