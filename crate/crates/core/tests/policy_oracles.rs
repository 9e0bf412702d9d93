use geoplan_core::nav::{generate_world, Action, Cell, EmbeddingTable, EpisodeSpec, GridWorld, ViewEncoder};
use geoplan_core::policy::*;
use geoplan_core::rng;
use rand::Rng as _;

fn entry(p: &mut PolicyParams, m: usize, i: usize) -> &mut f64 {
    let mat = match m {
        0 => &mut p.state_embed,
        1 => &mut p.cond_proj,
        2 => &mut p.output_head,
        _ => &mut p.history_mix,
    };
    &mut mat.as_mut_slice()[i]
}

fn sizes(p: &PolicyParams) -> [usize; 4] {
    [p.state_embed.len(), p.cond_proj.len(), p.output_head.len(), p.history_mix.len()]
}

fn random_samples(r: &mut rng::Rng, n: usize, cells: usize, cond: usize) -> Vec<VpftSample> {
    (0..n)
        .map(|_| VpftSample {
            history: (0..r.random_range(1..4)).map(|_| r.random_range(0..cells)).collect(),
            cond: (0..cond).map(|_| r.random_range(-1.0..1.0)).collect(),
            target: Action::from_index(r.random_range(0..ACTIONS)).unwrap(),
        })
        .collect()
}

fn small_world() -> (GridWorld, EmbeddingTable) {
    let w = generate_world(6, 0.2, 4).unwrap();
    let t = EmbeddingTable::build(&w, &ViewEncoder::new(16, 4).unwrap()).unwrap();
    (w, t)
}

#[test]
fn forced_wall_move_is_invalid_after_one_step() {
    let w = GridWorld::open(5, 0);
    let t = EmbeddingTable::build(&w, &ViewEncoder::new(8, 0).unwrap()).unwrap();
    let mut p = PolicyParams::zeros(25, 8, 4);
    p.state_embed.fill(1.0);
    p.output_head[(Action::Left.index(), 0)] = 100.0;
    let ep = EpisodeSpec { start: Cell::new(2, 0), stops: vec![], goal: Cell::new(2, 4), max_steps: 16 };
    let g = Guidance::for_episode(&w, &ep).unwrap();
    for sampling in [Sampling::Greedy, Sampling::Stochastic] {
        let roll = sample_rollout(&w, &ep, &g, &t, &p, &mut rng::from_seed(1), 16, 2, sampling).unwrap();
        assert_eq!(roll.steps.len(), 1);
        assert!(roll.invalid && !roll.completed);
        assert_eq!(roll.steps[0].next_state, None);
        assert_eq!(roll.visited, vec![Cell::new(2, 0)]);
    }
}

#[test]
fn greedy_rollouts_are_deterministic_and_log_probs_consistent() {
    let (w, t) = small_world();
    let p = PolicyParams::random(36, 16, 8, &mut rng::from_seed(5));
    let open = w.open_cells();
    let ep = EpisodeSpec { start: open[0], stops: vec![], goal: *open.last().unwrap(), max_steps: 40 };
    let g = Guidance::for_episode(&w, &ep).unwrap();
    let a = sample_rollout(&w, &ep, &g, &t, &p, &mut rng::from_seed(1), 40, 2, Sampling::Greedy).unwrap();
    let b = sample_rollout(&w, &ep, &g, &t, &p, &mut rng::from_seed(2), 40, 2, Sampling::Greedy).unwrap();
    assert_eq!(a, b);
    let s1 = sample_rollout(&w, &ep, &g, &t, &p, &mut rng::from_seed(3), 40, 2, Sampling::Stochastic).unwrap();
    let s2 = sample_rollout(&w, &ep, &g, &t, &p, &mut rng::from_seed(3), 40, 2, Sampling::Stochastic).unwrap();
    assert_eq!(s1, s2);
    for s in a.steps.iter().chain(&s1.steps) {
        assert!((log_softmax(&s.action_logits)[s.sampled_action.index()] - s.log_prob).abs() < 1e-9);
        assert!((softmax(&s.action_logits).iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn sampled_frequencies_match_softmax() {
    let mut r = rng::from_seed(8);
    for _ in 0..5 {
        let logits: [f64; ACTIONS] = std::array::from_fn(|_| r.random_range(-2.0..2.0));
        let p = softmax(&logits);
        let mut counts = [0usize; ACTIONS];
        for _ in 0..10_000 {
            counts[choose_action(&logits, Sampling::Stochastic, &mut r).index()] += 1;
        }
        for k in 0..ACTIONS {
            assert!((counts[k] as f64 / 10_000.0 - p[k]).abs() < 0.02, "{counts:?} vs {p:?}");
        }
    }
}

#[test]
fn plausible_set_examples() {
    let w = GridWorld::open(5, 0);
    let g = Guidance::new(&w, vec![Cell::new(2, 4)]).unwrap();
    let set = plausible_set(&w, &g, Cell::new(2, 2), 0, DEFAULT_K, false);
    assert!(set.contains(&Action::Right));
    // BFS oracle: exactly the moves that shorten the Manhattan distance on an open grid
    assert_eq!(set, vec![Action::Right]);
    let g = Guidance::new(&w, vec![Cell::new(4, 4)]).unwrap();
    assert!(plausible_set(&w, &g, Cell::new(0, 0), 0, DEFAULT_K, false).len() <= 2);
    assert_eq!(plausible_set(&w, &g, Cell::new(0, 0), 0, DEFAULT_K, true).len(), 2);
    let padded = plausible_set(&w, &Guidance::new(&w, vec![Cell::new(2, 4)]).unwrap(), Cell::new(2, 2), 0, DEFAULT_K, true);
    assert_eq!(padded, vec![Action::Right, Action::Up, Action::Down, Action::Left]);
    assert_eq!(plausible_set(&w, &g, Cell::new(2, 2), 0, 1, true).len(), 1);
}

#[test]
fn corpus_is_seed_deterministic() {
    let (w, t) = small_world();
    let cfg = VpftConfig { walks: 20, walk_length: 10, ..Default::default() };
    let a = vpft_build(&w, &t, &cfg, 3).unwrap();
    assert_eq!(a, vpft_build(&w, &t, &cfg, 3).unwrap());
    assert_ne!(a, vpft_build(&w, &t, &cfg, 4).unwrap());
    assert_eq!(a.samples.len() + a.skipped, 200);
    for s in &a.samples {
        assert!(s.history.len() <= cfg.history);
    }
    assert!(vpft_build(&w, &t, &VpftConfig { k: 0, ..cfg }, 3).is_err());
}

#[test]
fn uniform_and_saturated_losses() {
    let mut r = rng::from_seed(9);
    let samples = random_samples(&mut r, 30, 9, 4);
    let (loss, _) = vpft_loss(&samples, &PolicyParams::zeros(9, 4, 6)).unwrap();
    assert!((loss - 5f64.ln()).abs() < 1e-12);
    // one shared target, head saturated toward it
    let same: Vec<VpftSample> = samples.iter().map(|s| VpftSample { target: Action::Down, ..s.clone() }).collect();
    let mut p = PolicyParams::zeros(9, 4, 6);
    p.state_embed.fill(1.0);
    p.output_head[(Action::Down.index(), 0)] = 60.0;
    assert!(vpft_loss(&same, &p).unwrap().0 < 1e-20);
    assert!(vpft_loss(&[], &p).is_err());
}

#[test]
fn vpft_gradient_matches_finite_differences() {
    let mut r = rng::from_seed(10);
    let h = 1e-5;
    for inst in 0..20 {
        let p = PolicyParams::random(7, 3, 5, &mut rng::indexed_stream(11, "fd", inst));
        let samples = random_samples(&mut r, 6, 7, 3);
        let (_, g) = vpft_loss(&samples, &p).unwrap();
        let mut g = g;
        let sz = sizes(&p);
        for m in 0..4 {
            for _ in 0..6 {
                let i = r.random_range(0..sz[m]);
                let (mut a, mut b) = (p.clone(), p.clone());
                *entry(&mut a, m, i) += h;
                *entry(&mut b, m, i) -= h;
                let fd = (vpft_loss(&samples, &a).unwrap().0 - vpft_loss(&samples, &b).unwrap().0) / (2.0 * h);
                let an = *entry(&mut g, m, i);
                let scale = fd.abs().max(an.abs()).max(1e-6);
                assert!((fd - an).abs() / scale < 1e-4, "instance {inst} tensor {m} entry {i}: {fd} vs {an}");
            }
        }
    }
}

#[test]
fn three_hundred_steps_halve_the_uniform_loss() {
    let (w, t) = small_world();
    let cfg = VpftConfig { walks: 60, walk_length: 16, steps: 300, ..Default::default() };
    let corpus = vpft_build(&w, &t, &cfg, 1).unwrap();
    let mut p = PolicyParams::random(36, 16, DEFAULT_HIDDEN, &mut rng::from_seed(2));
    vpft_train(&mut p, &corpus, &cfg, 1).unwrap();
    let (loss, _) = vpft_loss(&corpus.samples, &p).unwrap();
    assert!(loss <= 0.5 * 5f64.ln(), "loss {loss}");
}
