mod oracles;

use modcap_core::milp::{solve_lp, SolveStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn random_dense_lps_match_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut feasible = 0;
    for case in 0..500 {
        let n = rng.random_range(1..=10);
        let m = rng.random_range(1..=10);
        let model = oracles::random_lp(&mut rng, n, m);
        let expected = oracles::vertex_enumeration(&model);
        let sol = solve_lp(&model).unwrap_or_else(|e| panic!("case {case}: {e}"));
        match expected {
            None => assert_eq!(sol.status, SolveStatus::Infeasible, "case {case}"),
            Some(z) => {
                feasible += 1;
                assert_eq!(sol.status, SolveStatus::Optimal, "case {case}");
                assert!((sol.objective - z).abs() <= 1e-6 * (1.0 + z.abs()), "case {case}: {} vs {z}", sol.objective);
                assert!(model.max_violation(&sol.values) <= 1e-6, "case {case}");
            }
        }
    }
    assert!(feasible > 100, "generator produced too few feasible LPs ({feasible})");
}
