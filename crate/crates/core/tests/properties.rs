use nalgebra::DMatrix;
use proptest::prelude::*;

use eigenopt::agents::{ReplayBuffer, Transition};
use eigenopt::baselines::ez_sample_duration;
use eigenopt::config::RunConfig;
use eigenopt::env::EnvState;
use eigenopt::harness::{aggregate, parse_curve};
use eigenopt::metrics::Curve;
use eigenopt::nn::Matrix;
use eigenopt::repr::{loss_on_outputs, ReprLoss};
use eigenopt::rng;
use eigenopt::spectral::{eigendecompose, GraphLaplacian, LaplacianKind};

/// A connected graph: a random spanning tree plus extra edges.
fn connected_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize)>)> {
    (2usize..14).prop_flat_map(|n| {
        let tree = (1..n).map(|i| (0..i).prop_map(move |p| (p, i))).collect::<Vec<_>>();
        let extra = prop::collection::vec((0..n, 0..n), 0..n * 2);
        (Just(n), tree, extra).prop_map(|(n, mut t, e)| {
            t.extend(e);
            (n, t)
        })
    })
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-2.0f64..2.0, rows * cols).prop_map(move |d| Matrix::from_vec(rows, cols, d).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigensystem_is_orthonormal_and_matches_nalgebra((n, edges) in connected_graph(), anchor_pick in 0usize..100) {
        let lap = GraphLaplacian::from_edges((0..n).collect(), edges, LaplacianKind::Combinatorial, "prop").unwrap();
        let anchor = anchor_pick % n;
        let eig = eigendecompose(&lap, n, anchor).unwrap();
        let dense = DMatrix::from_fn(n, n, |i, j| lap.get(i, j));
        let mut reference: Vec<f64> = dense.symmetric_eigen().eigenvalues.iter().copied().collect();
        reference.sort_by(f64::total_cmp);
        for (i, want) in reference.iter().enumerate() {
            prop_assert!((eig.eigenvalues[i] - want).abs() < 1e-9);
            if i > 0 {
                prop_assert!(eig.eigenvalues[i] >= eig.eigenvalues[i - 1] - 1e-12);
            }
            for j in 0..n {
                let dot: f64 = (0..n).map(|r| eig.eigenfunctions[i][r] * eig.eigenfunctions[j][r]).sum();
                prop_assert!((dot - f64::from(u8::from(i == j))).abs() < 1e-9);
            }
        }
        // connected: a single zero eigenvalue
        prop_assert!(eig.eigenvalues[0].abs() < 1e-9);
        prop_assert!(eig.eigenvalues[1] > 1e-9);
        for f in &eig.eigenfunctions {
            let a = f[anchor];
            if a.abs() > 1e-12 {
                prop_assert!(a > 0.0);
            }
        }
    }

    #[test]
    fn repr_loss_is_symmetric_in_transition_direction(from in matrix(5, 3), to in matrix(5, 3), aux in matrix(6, 3), beta in 0.0f64..5.0) {
        for kind in [ReprLoss::Generalized, ReprLoss::Uniform] {
            let a = loss_on_outputs(kind, beta, &from, &to, &aux).unwrap().loss;
            let b = loss_on_outputs(kind, beta, &to, &from, &aux).unwrap().loss;
            prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        }
    }

    #[test]
    fn generalized_smoothness_dominates_uniform(from in matrix(4, 4), to in matrix(4, 4)) {
        // with no penalty the generalized loss weights every smoothness term at least as much
        let aux = Matrix::zeros(2, 4);
        let g = loss_on_outputs(ReprLoss::Generalized, 0.0, &from, &to, &aux).unwrap().loss;
        let u = loss_on_outputs(ReprLoss::Uniform, 0.0, &from, &to, &aux).unwrap().loss;
        prop_assert!(g >= u - 1e-12);
    }

    #[test]
    fn curve_text_round_trips(points in prop::collection::vec((0u64..1_000_000, -1e9f64..1e9), 0..40)) {
        let curve: Curve = points;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        eigenopt::harness::write_curve(&path, &curve).unwrap();
        prop_assert_eq!(parse_curve(&std::fs::read_to_string(&path).unwrap()).unwrap(), curve);
    }

    #[test]
    fn aggregate_mean_lies_within_range(vals in prop::collection::vec(prop::collection::vec(-10.0f64..10.0, 1..6), 1..6)) {
        let curves: Vec<Curve> = vals.iter().map(|v| v.iter().enumerate().map(|(i, &x)| (i as u64, x)).collect()).collect();
        let refs: Vec<&Curve> = curves.iter().collect();
        for row in aggregate(&refs) {
            let at: Vec<f64> = curves.iter().filter_map(|c| c.iter().find(|p| p.0 == row.step).map(|p| p.1)).collect();
            prop_assert_eq!(row.count, at.len());
            let lo = at.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = at.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(row.mean >= lo - 1e-12 && row.mean <= hi + 1e-12);
            prop_assert!(row.std >= 0.0);
        }
    }

    #[test]
    fn ez_durations_stay_in_range(seed in any::<u64>(), k in 1.01f64..4.0, cap in 1usize..200) {
        let mut r = rng::stream(seed, "prop-ez");
        for _ in 0..50 {
            let n = ez_sample_duration(&mut r, k, cap);
            prop_assert!((1..=cap).contains(&n));
        }
    }

    #[test]
    fn replay_never_exceeds_capacity(cap in 1usize..50, pushes in 0usize..200) {
        let mut b = ReplayBuffer::new(cap);
        let s = EnvState { tabular_id: 0, features: vec![0.0].into() };
        for i in 0..pushes {
            b.push(Transition { state: s.clone(), action: i % 4, reward: 0.0, next_state: s.clone(), episode_end: false, truncated: false });
            prop_assert!(b.len() <= cap);
        }
        prop_assert_eq!(b.len(), pushes.min(cap));
    }

    #[test]
    fn config_text_round_trips(steps in 1u64..100_000, mu in 0.0f64..1.0, count in 1usize..8, algo in prop::sample::select(vec!["ceo", "q_learning", "ddqn", "dceo_online", "random"])) {
        let cfg = RunConfig::from_text(&format!("env = maze\nalgorithm = {algo}\nsteps = {steps}\noptions.mu = {mu}\noptions.count = {count}\n")).unwrap();
        prop_assert_eq!(RunConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }
}
