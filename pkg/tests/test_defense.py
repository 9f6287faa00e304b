from dataclasses import replace

import numpy as np
import pytest

from depthguard.attacks import AttackConfig, AttackTarget, depth_model, ifgsm
from depthguard.data import Dataset, synth_generate
from depthguard.defense import (
    Adam,
    AdamConfig,
    ConfigurationId,
    Stores,
    TrainConfig,
    apply_mask,
    attack_name,
    default_saliency_spec,
    encoder_depth_sweep,
    eps_sweep,
    evaluate_configuration,
    iters_sweep,
    loss_ablation,
    sample_branch,
    saliency_loss,
    train_depth,
    train_depth_adv,
    train_saliency,
    train_saliency_adv,
    train_saliency_clean,
)
from depthguard.exceptions import AttackError, DatasetError, MissingCheckpoint, ShapeMismatch, TrainingError
from depthguard.losses import l_dif
from depthguard.metrics import rmse
from depthguard.networks import forward_depth, forward_saliency
from depthguard.tensor import Tensor, backward, mul, sum
from depthguard.tensor.gradcheck import analytic_gradient, numerical_gradient, relative_error


def test_apply_mask_identities():
    rng = np.random.default_rng(0)
    x = Tensor(rng.uniform(size=(3, 4, 6)))
    assert apply_mask(x, Tensor(np.ones((1, 4, 6)))).data.tobytes() == x.data.tobytes()
    assert not apply_mask(x, Tensor(np.zeros((1, 4, 6)))).data.any()

    m = Tensor(rng.uniform(size=(1, 4, 6)))
    np.testing.assert_allclose(apply_mask(apply_mask(x, m), m).data, apply_mask(x, mul(m, m)).data, rtol=1e-6)
    with pytest.raises(ShapeMismatch):
        apply_mask(x, Tensor(np.ones((3, 4, 6))))
    with pytest.raises(ShapeMismatch):
        apply_mask(x, Tensor(np.ones((1, 4, 5))))


def test_apply_mask_gradients():
    rng = np.random.default_rng(1)
    x = rng.uniform(size=(3, 4, 4))
    m = rng.uniform(size=(1, 4, 4))
    weights = Tensor(rng.normal(size=(3, 4, 4)), dtype="f64")
    fixed_m = Tensor(m, dtype="f64")
    fixed_x = Tensor(x, dtype="f64")

    def through_x(t):
        return sum(mul(apply_mask(t, fixed_m), weights))

    def through_m(t):
        return sum(mul(apply_mask(fixed_x, t), weights))

    assert relative_error(analytic_gradient(through_x, x), numerical_gradient(through_x, x)) <= 1e-5
    assert relative_error(analytic_gradient(through_m, m), numerical_gradient(through_m, m)) <= 1e-5


def test_iteration_count_support():
    """floor(Uniform(1, 10)) covers exactly 1..9"""
    rng = np.random.default_rng(0)
    cfg = TrainConfig(adv_prob=1.0)
    draws = [sample_branch(rng, cfg) for _ in range(100_000)]
    assert all(adversarial for _, adversarial, _, _ in draws)
    assert {iters for *_, iters in draws} == set(range(1, 10))
    eps = np.array([e for _, _, e, _ in draws])
    assert eps.min() >= 0.01 and eps.max() < 0.3


def test_clean_branch_draws_nothing_else():
    rng = np.random.default_rng(0)
    p, adversarial, eps, iters = sample_branch(rng, TrainConfig(adv_prob=0.0))
    assert 0.0 <= p < 1.0
    assert (adversarial, eps, iters) == (False, None, None)


@pytest.mark.parametrize(
    "kwargs",
    [
        {"epochs": 0},
        {"iters_per_epoch": 0},
        {"lam": -1.0},
        {"adv_prob": 1.5},
        {"eps_range": (0.3, 0.1)},
        {"iter_range": (0, 10)},
        {"batch_size": 0},
        {"seed": -1},
    ],
)
def test_train_config_validation(kwargs):
    with pytest.raises(TrainingError):
        TrainConfig(**kwargs)


def test_adam_rejects_non_leaves_and_descends():
    with pytest.raises(TrainingError):
        Adam([Tensor([1.0])])
    with pytest.raises(TrainingError):
        AdamConfig(lr=0.0)

    w = Tensor([3.0, -2.0], dtype="f64", requires_grad=True)
    optimizer = Adam([w], AdamConfig(lr=0.1, weight_decay=0.0))
    before = sum(mul(w, w)).item()
    for _ in range(10):
        optimizer.zero_grad()
        backward(sum(mul(w, w)))
        optimizer.step()
    assert sum(mul(w, w)).item() < before
    assert optimizer.step_count == 10


def test_saliency_loss_targets_ground_truth(stores, small_dataset):
    """The loss compares against the ground truth, not against N's clean prediction"""
    x, y_true = small_dataset.pairs()[0]
    mask = forward_saliency(stores.g_adv, x)
    y = forward_depth(stores.n, apply_mask(x, mask))
    loss = saliency_loss(stores.n, stores.g_adv, x, y_true, lam=1.0)
    assert loss.total.item() == l_dif(y, y_true).total.item()
    assert loss.total.item() != l_dif(y, forward_depth(stores.n, x)).total.item()
    assert loss.objective().item() == pytest.approx(loss.total.item() + mask.data.mean(), rel=1e-5)


def test_clean_saliency_training_never_attacks(stores, small_dataset, quick_train_cfg):
    result = train_saliency_clean(stores.n, small_dataset, quick_train_cfg)
    assert result.adversarial_count == 0
    assert len(result.audit) == quick_train_cfg.epochs * quick_train_cfg.iters_per_epoch
    assert result.store.role == "G"
    assert result.store.epoch == quick_train_cfg.epochs
    mask = forward_saliency(result.store, small_dataset[0].image)
    assert mask.data.min() > 0 and mask.data.max() < 1


def test_degenerate_saliency_training_equals_clean(stores, small_dataset, quick_train_cfg):
    """adv_prob 0 with lambda 0 is clean training toward ground truth"""
    cfg = replace(quick_train_cfg, adv_prob=0.0, lam=0.0)
    degenerate = train_saliency(stores.n, small_dataset, cfg)
    clean = train_saliency_clean(stores.n, small_dataset, replace(quick_train_cfg, lam=0.0))
    assert degenerate.store.fingerprint() == clean.store.fingerprint()


def test_adversarial_saliency_training_keeps_n_frozen(stores, small_dataset, quick_train_cfg):
    before = stores.n.fingerprint()
    result = train_saliency_adv(stores.n, small_dataset, replace(quick_train_cfg, adv_prob=1.0))
    assert stores.n.fingerprint() == before
    assert result.adversarial_count == len(result.audit)
    assert all(1 <= r.iters <= 9 and 0.01 <= r.eps < 0.3 for r in result.audit)
    assert result.store.role == "G_adv"


def test_depth_training_is_deterministic(depth_spec, small_dataset, quick_train_cfg):
    first = train_depth(small_dataset, quick_train_cfg, depth_spec)
    second = train_depth(small_dataset, quick_train_cfg, depth_spec)
    assert first.store.fingerprint() == second.store.fingerprint()
    assert first.epoch_losses == second.epoch_losses
    assert first.audit == second.audit
    assert first.adversarial_count == 0
    other_seed = train_depth(small_dataset, replace(quick_train_cfg, seed=1), depth_spec)
    assert other_seed.store.fingerprint() != first.store.fingerprint()


@pytest.mark.slow
def test_depth_training_lowers_epoch_loss(depth_spec):
    """The epoch-mean loss of the fifth epoch is below the first"""
    data = synth_generate(seed=13, n=24, dims=(16, 16))
    cfg = TrainConfig(epochs=5, adam=AdamConfig(lr=1e-3))
    result = train_depth(data, cfg, depth_spec)
    assert len(result.epoch_losses) == 5
    assert result.epoch_losses[4] < result.epoch_losses[0]


def test_adam_weight_decay_is_added_to_the_gradient():
    """With a zero gradient the decay term alone drives a full-size first Adam step"""
    w = Tensor([1.0, -2.0], dtype="f64", requires_grad=True)
    w.grad = np.zeros(2)
    Adam([w], AdamConfig(lr=1e-3, weight_decay=1e-4)).step()
    np.testing.assert_allclose(w.data, [1.0 - 1e-3, -2.0 + 1e-3], atol=1e-6)


def test_adversarial_depth_training(depth_spec, small_dataset, quick_train_cfg):
    result = train_depth_adv(small_dataset, replace(quick_train_cfg, adv_prob=1.0, batch_size=2), depth_spec)
    assert result.store.role == "N_adv"
    assert result.adversarial_count == len(result.audit) == 2 * 3 * 2
    assert all(np.isfinite(result.epoch_losses))


def test_training_errors(stores, saliency_spec, quick_train_cfg):
    with pytest.raises(DatasetError):
        train_depth(Dataset(), quick_train_cfg)
    with pytest.raises(TrainingError):
        train_depth_adv(Dataset(), quick_train_cfg, saliency_spec)


def test_default_saliency_spec(depth_spec):
    spec = default_saliency_spec(depth_spec)
    assert spec.role == "saliency"
    assert spec.input_dims == depth_spec.input_dims
    assert spec.widths == depth_spec.widths
    assert default_saliency_spec(depth_spec, encoder_depth=1).widths == (4,)
    assert default_saliency_spec(depth_spec, encoder_depth=3).widths == (4, 8, 8)


def test_zero_eps_collapses_a_onto_b(stores, small_dataset):
    clean = evaluate_configuration("B", stores, small_dataset)
    attacked = evaluate_configuration("A", stores, small_dataset, attack=AttackConfig(eps=0.0))
    for name in ("rmse", "rel", "log10", "delta1", "delta2", "delta3", "n_samples"):
        assert getattr(attacked, name) == getattr(clean, name)
    assert attacked.attack == "none"


def test_d_at_zero_eps_is_masked_clean_evaluation(stores, small_dataset):
    report = evaluate_configuration(ConfigurationId.D, stores, small_dataset, attack=AttackConfig(eps=0.0))
    expected = []
    for x, y_true in small_dataset.pairs():
        expected.append(rmse(forward_depth(stores.n, apply_mask(x, forward_saliency(stores.g, x))), y_true))
    assert report.rmse == pytest.approx(np.mean(expected), rel=1e-9)


def test_e_masks_attacked_input_with_clean_saliency(stores, small_dataset):
    one = small_dataset.subset([0])
    attack = AttackConfig(eps=0.1, iters=2)
    x, y_true = one.pairs()[0]
    x_star = ifgsm(depth_model(stores.n), x, y_true, attack).x_star
    y = forward_depth(stores.n, apply_mask(x_star, forward_saliency(stores.g, x)))
    report = evaluate_configuration(ConfigurationId.E, stores, one, attack=attack)
    assert report.rmse == pytest.approx(rmse(y, y_true), rel=1e-9)
    assert (report.attack, report.eps, report.iters) == ("ifgsm", 0.1, 2)
    assert report.losses is not None


def test_precomputed_adversarial_set_is_used(stores, small_dataset):
    attack = AttackConfig(eps=0.05)
    records = []
    for record in small_dataset:
        x_star = ifgsm(depth_model(stores.n), record.image, record.depth, attack).x_star
        records.append(replace(record, image=x_star))
    adv = Dataset(records, provenance={"attack": attack.describe()})
    precomputed = evaluate_configuration("F", stores, small_dataset, adv_dataset=adv)
    on_the_fly = evaluate_configuration("F", stores, small_dataset, attack=attack)
    assert precomputed.as_row() == on_the_fly.as_row()
    with pytest.raises(DatasetError):
        evaluate_configuration("F", stores, small_dataset, adv_dataset=adv.subset([0]))


def test_missing_checkpoints_name_the_role(stores, small_dataset):
    partial = Stores(n=stores.n)
    for config_id, role in (("C", "N_adv"), ("D", "G"), ("E", "G"), ("F", "G_adv")):
        with pytest.raises(MissingCheckpoint, match=role):
            evaluate_configuration(config_id, partial, small_dataset)
    with pytest.raises(MissingCheckpoint, match="N"):
        evaluate_configuration("B", Stores(), small_dataset)


def test_composite_attack_needs_a_saliency_network(stores, small_dataset):
    composite = AttackConfig(eps=0.05, target=AttackTarget.COMPOSITE)
    with pytest.raises(AttackError):
        evaluate_configuration("A", stores, small_dataset, attack=composite)
    report = evaluate_configuration("D", stores, small_dataset.subset([0, 1]), attack=composite)
    assert report.attack == "composite"


def test_attack_names():
    assert attack_name(None) == "none"
    assert attack_name(AttackConfig(eps=0.0, iters=3)) == "none"
    assert attack_name(AttackConfig(eps=0.1)) == "fgsm"
    assert attack_name(AttackConfig(eps=0.1, iters=4)) == "ifgsm"


def test_sweeps(stores, small_dataset):
    data = small_dataset.subset([0, 1])
    by_eps = eps_sweep(stores, data, [0.0, 0.05])
    assert [(r.config, r.attack, r.eps) for r in by_eps] == [
        ("A", "none", 0.0),
        ("F", "none", 0.0),
        ("A", "fgsm", 0.05),
        ("F", "fgsm", 0.05),
    ]
    by_iters = iters_sweep(stores, data, [1, 3], eps=0.05)
    assert [(r.attack, r.iters) for r in by_iters] == [("fgsm", 1), ("fgsm", 1), ("ifgsm", 3), ("ifgsm", 3)]
    ablation = loss_ablation(stores, data, kinds=["l1", "rel"])
    assert [r.attack for r in ablation] == ["ifgsm-l1", "ifgsm-l1", "ifgsm-rel", "ifgsm-rel"]


def test_encoder_depth_sweep(stores, small_dataset, quick_train_cfg):
    reports = encoder_depth_sweep(stores, small_dataset, small_dataset.subset([0, 1]), [1, 2], quick_train_cfg)
    assert [r.config for r in reports] == ["F@1", "F@2"]
    assert all(r.n_samples == 2 for r in reports)
