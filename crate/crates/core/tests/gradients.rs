//! Reverse-mode gradients against central finite differences.

use clef_core::causal::{fuse_on_tape, predict_tie, NoTreatmentEstimator, DEFAULT_INIT_RANGE};
use clef_core::diffcore::{
    finite_diff_grad, relative_error, Activation, DenseLayer, GradientTape, ParamStore, Tensor,
};
use clef_core::models::{ClefModel, ContextInput, Mode, ModelConfig, ModelInputs};
use clef_core::train::{final_loss_on_tape, kl_loss, KlDirection, Targets, TaskKind, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-5;
const TOL: f64 = 1e-5;

fn random_inputs(
    rng: &mut ChaCha8Rng,
    n: usize,
    ds: usize,
    dc: usize,
    masked: bool,
) -> ModelInputs {
    let mut draw =
        |len: usize| -> Vec<f64> { (0..len).map(|_| rng.random_range(-1.5..1.5)).collect() };
    let subject = draw(n * ds);
    let context = draw(n * dc);
    let mut branch = Vec::with_capacity(n * (ds + dc));
    for r in 0..n {
        if masked {
            branch.extend(std::iter::repeat_n(0.0, ds));
        } else {
            branch.extend_from_slice(&subject[r * ds..(r + 1) * ds]);
        }
        branch.extend_from_slice(&context[r * dc..(r + 1) * dc]);
    }
    ModelInputs {
        subject: Tensor::matrix(n, ds, subject).unwrap(),
        context: Tensor::matrix(n, dc, context).unwrap(),
        branch: Tensor::matrix(n, ds + dc, branch).unwrap(),
    }
}

fn random_targets(rng: &mut ChaCha8Rng, n: usize, k: usize, task: TaskKind) -> Targets {
    match task {
        TaskKind::MultiClass => Targets::Classes((0..n).map(|_| rng.random_range(0..k)).collect()),
        TaskKind::MultiLabel => Targets::LabelSets(
            (0..n)
                .map(|_| {
                    let a = rng.random_range(0..k);
                    let b = rng.random_range(0..k);
                    if a == b {
                        vec![a]
                    } else {
                        vec![a, b]
                    }
                })
                .collect(),
        ),
    }
}

/// Analytic gradient of the mode's total loss against central differences of
/// its surrogate: task terms as they are, the KL term with the factual
/// distribution and the context-branch scores frozen at the current point (the
/// stop-gradients of the regularizer), evaluated by the value-level KL.
/// `None` when a ReLU input sits within `10h` of its kink.
fn compare_at(
    model: &ClefModel,
    inputs: &ModelInputs,
    targets: &Targets,
    config: &TrainConfig,
) -> Option<f64> {
    let mut m = model.clone();
    m.store.zero_grad();
    let mut tape = GradientTape::new();
    let (vars, _) = final_loss_on_tape(&mut tape, &m, inputs, targets, config).unwrap();
    if tape.relu_margin() < 10.0 * H {
        return None;
    }
    let k = m.num_classes();
    let rows = |v: &[f64]| v.chunks(k).map(<[f64]>::to_vec).collect::<Vec<_>>();
    let y_c0 = rows(tape.value(vars.forward.y_c));
    let y_e0 = rows(tape.value(vars.forward.y_e));
    let factual0: Vec<Vec<f64>> = y_c0
        .iter()
        .zip(&y_e0)
        .map(|(c, e)| c.iter().zip(e).map(|(a, b)| ln_sigma(a + b)).collect())
        .collect();
    tape.backward(vars.total, &mut m.store).unwrap();
    let analytic = m.store.flat_grads();
    let theta = m.store.flat_trainable();
    let mut probe = m.clone();
    let numeric = finite_diff_grad(
        |t| {
            probe.store.set_flat_trainable(t);
            let mut tape = GradientTape::new();
            let (_, l) = final_loss_on_tape(&mut tape, &probe, inputs, targets, config).unwrap();
            let task = l.task_factual + l.task_counterfactual;
            if vars.kl.is_none() {
                return task;
            }
            let star = probe.no_treatment_logits();
            let gated: Vec<Vec<f64>> = y_c0
                .iter()
                .map(|c| c.iter().zip(star).map(|(a, b)| ln_sigma(a + b)).collect())
                .collect();
            task + config.kl_weight * kl_loss(&gated, &factual0, config.kl_direction).unwrap()
        },
        &theta,
        H,
    );
    Some(relative_error(&analytic, &numeric))
}

fn ln_sigma(x: f64) -> f64 {
    -(-x).exp().ln_1p()
}

fn perturb(model: &mut ClefModel, rng: &mut ChaCha8Rng) {
    let theta: Vec<f64> = model
        .store
        .flat_trainable()
        .iter()
        .map(|v| v + rng.random_range(-0.5..0.5))
        .collect();
    model.store.set_flat_trainable(&theta);
}

fn run_suite(
    mode: Mode,
    task: TaskKind,
    direction: KlDirection,
    context_input: ContextInput,
    points: usize,
    seed: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig {
        width: 5,
        context_input,
        ..ModelConfig::new(3, 2, 4)
    };
    let est = NoTreatmentEstimator::learnable_uniform(4, DEFAULT_INIT_RANGE, seed).unwrap();
    let base = ClefModel::new(cfg, mode, &est, seed).unwrap();
    let config = TrainConfig {
        mode,
        task,
        kl_direction: direction,
        kl_weight: 0.8,
        ..TrainConfig::default()
    };
    let mut checked = 0;
    let mut attempts = 0;
    while checked < points {
        attempts += 1;
        assert!(attempts < 50 * points, "too many points near a ReLU kink");
        let mut model = base.clone();
        perturb(&mut model, &mut rng);
        let inputs = random_inputs(&mut rng, 4, 3, 2, context_input == ContextInput::Masked);
        let targets = random_targets(&mut rng, 4, 4, task);
        if let Some(err) = compare_at(&model, &inputs, &targets, &config) {
            assert!(
                err <= TOL,
                "{mode:?}/{task:?}/{direction:?}: relative error {err:e}"
            );
            checked += 1;
        }
    }
}

#[test]
fn every_mode_and_task_matches_finite_differences() {
    for (i, mode) in Mode::ALL.into_iter().enumerate() {
        for task in [TaskKind::MultiClass, TaskKind::MultiLabel] {
            run_suite(
                mode,
                task,
                KlDirection::FactualTarget,
                ContextInput::Masked,
                5,
                i as u64,
            );
        }
    }
}

#[test]
fn reversed_kl_and_unmasked_branch_match_finite_differences() {
    run_suite(
        Mode::Clef,
        TaskKind::MultiClass,
        KlDirection::CounterfactualTarget,
        ContextInput::Masked,
        5,
        11,
    );
    run_suite(
        Mode::Clef,
        TaskKind::MultiClass,
        KlDirection::FactualTarget,
        ContextInput::Unmasked,
        5,
        12,
    );
}

#[test]
fn non_square_dense_layers_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for activation in [Activation::Identity, Activation::Relu, Activation::Sigmoid] {
        for &(inp, out) in &[(3usize, 5usize), (5, 2), (1, 4), (4, 4)] {
            let mut store = ParamStore::new();
            let layer = DenseLayer::init(&mut store, "l", inp, out, activation, &mut rng);
            let x: Vec<f64> = (0..3 * inp).map(|_| rng.random_range(-1.0..1.0)).collect();
            let weights: Vec<f64> = (0..3 * out).map(|_| rng.random_range(-1.0..1.0)).collect();
            let loss_of = |store: &ParamStore| -> (GradientTape, clef_core::diffcore::Var) {
                let mut tape = GradientTape::new();
                let xv = tape.constant(&Tensor::matrix(3, inp, x.clone()).unwrap());
                let y = layer.forward(&mut tape, store, xv).unwrap();
                let l = tape.dot_const(y, weights.clone()).unwrap();
                (tape, l)
            };
            let (tape, l) = loss_of(&store);
            if tape.relu_margin() < 10.0 * H {
                continue;
            }
            tape.backward(l, &mut store).unwrap();
            let analytic = store.flat_grads();
            let theta = store.flat_trainable();
            let mut probe = store.clone();
            let numeric = finite_diff_grad(
                |t| {
                    probe.set_flat_trainable(t);
                    let (tape, l) = loss_of(&probe);
                    tape.scalar(l)
                },
                &theta,
                H,
            );
            let err = relative_error(&analytic, &numeric);
            assert!(err <= TOL, "{activation:?} {inp}->{out}: {err:e}");
        }
    }
}

#[test]
fn tie_score_is_differentiable_through_fusion() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..20 {
        let ys: Vec<f64> = (0..9).map(|_| rng.random_range(-4.0..4.0)).collect();
        let weights: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let value = |v: &[f64]| -> f64 {
            let s = clef_core::ScoreSet::new(v[..3].to_vec(), v[3..6].to_vec(), v[6..].to_vec())
                .unwrap();
            predict_tie(&s)
                .iter()
                .zip(&weights)
                .map(|(a, b)| a * b)
                .sum()
        };
        let mut store = ParamStore::new();
        let id = store.insert("v", Tensor::vector(ys.clone()).with_grad());
        let mut tape = GradientTape::new();
        let v = tape.param(&store, id);
        let all = tape.value(v).to_vec();
        let yc = tape.variable(&Tensor::vector(all[..3].to_vec()));
        let ye = tape.variable(&Tensor::vector(all[3..6].to_vec()));
        let ys_ = tape.variable(&Tensor::vector(all[6..].to_vec()));
        let f = fuse_on_tape(&mut tape, yc, ye).unwrap();
        let c = fuse_on_tape(&mut tape, yc, ys_).unwrap();
        let tie = tape.sub(f, c).unwrap();
        let l = tape.dot_const(tie, weights.clone()).unwrap();
        let g = tape.gradients(l).unwrap();
        let analytic: Vec<f64> = [yc, ye, ys_]
            .iter()
            .flat_map(|x| g.of(*x).unwrap().to_vec())
            .collect();
        let numeric = finite_diff_grad(value, &ys, H);
        assert!(relative_error(&analytic, &numeric) <= TOL);
    }
}
