use dcc::alloc::{select_slp, AllocParams, SlpStats, UtilityInputs};

#[test]
fn selections_follow_tau_with_exploration_floor() {
    let taus = [1.0f64, 0.5, 0.1];
    let mut counts = [1u64; 3];
    let total = 100_000;
    for _ in 0..total {
        let slps = taus
            .iter()
            .zip(&counts)
            .enumerate()
            .map(|(id, (&t, &s))| SlpStats { id, s, log_z: t.ln(), log_var: f64::NEG_INFINITY, psi: Some((t.ln() - 5.0, 1.0)) })
            .collect();
        let inputs = UtilityInputs { slps, log_w_th: 0.0, params: AllocParams::default() };
        counts[select_slp(&inputs).unwrap()] += 1;
    }
    let shares: Vec<f64> = counts.iter().map(|&c| c as f64 / (total + 3) as f64).collect();
    assert!(shares.iter().all(|&s| s >= 0.01), "{shares:?}");
    assert!(shares[0] > shares[1] && shares[1] > shares[2], "{shares:?}");
}
