"""Tests for label inference and gradient-replacement attacks."""

import numpy as np
import pytest

from tests.conftest import make_session
from vfl_shield.attacks import (
    GradientReplacementBackdoor,
    GrBackdoorConfig,
    LabelInferenceState,
    LabelReplacementAttack,
    active_label_poison,
    enumerate_labels,
    gr_backward_hook,
    gr_forward_hook,
    infer_labels,
    label_from_gradient_sign,
    match_loss,
    recovery_rate,
    replace_gradient_label,
    simulate_grad,
)
from vfl_shield.errors import AmbiguousGradientError, ContractError, ShapeError
from vfl_shield.numerics import (
    Mlp,
    cross_entropy,
    finite_difference_grad,
    one_hot,
    param_grad_from_output_grads,
    softmax,
    softmax_ce_grad,
)
from vfl_shield.protocol import OpaqueVec, party_indices, reveal_for_audit


def observed_gradient(model, x, h_foreign, labels, num_classes):
    """Batch-mean passive gradient an honest active party would induce."""
    g = softmax_ce_grad(model(x) + h_foreign, one_hot(labels, num_classes))
    return param_grad_from_output_grads(model, x, g)


class TestMatchLoss:
    """Tests for the gradient-matching objective."""

    @pytest.fixture
    def problem(self):
        """Relu passive model, a batch of three and an observed gradient."""
        rng = np.random.default_rng(0)
        model = Mlp.create([4, 5, 3], rng)
        x = rng.uniform(size=(3, 4))
        observed = observed_gradient(model, x, rng.normal(size=(3, 3)), [0, 2, 1], 3)
        state = LabelInferenceState.random(3, 3, rng)
        return model, x, observed, state

    def test_gradients_match_finite_differences(self, problem):
        """Test dD/du and dD/dH_a' against the numerical oracle."""
        model, x, observed, state = problem
        h_local = model(x)

        def distance(u, h_foreign):
            trial = LabelInferenceState(u, h_foreign)
            r = simulate_grad(trial, model, x, h_local) - observed
            return float(r @ r)

        res = match_loss(
            simulate_grad(state, model, x, h_local), observed, state, model, x, h_local
        )
        num_u = finite_difference_grad(
            lambda u: distance(u, state.h_foreign), state.u, 1e-5
        )
        num_h = finite_difference_grad(
            lambda h: distance(state.u, h), state.h_foreign, 1e-5
        )

        np.testing.assert_allclose(res.grad_u, num_u, rtol=1e-5, atol=1e-8)
        np.testing.assert_allclose(res.grad_h_foreign, num_h, rtol=1e-5, atol=1e-8)
        assert res.distance == pytest.approx(distance(state.u, state.h_foreign))

    def test_length_mismatch(self, problem):
        """Test simulated and observed gradients must have equal length."""
        model, x, observed, state = problem
        with pytest.raises(ShapeError):
            match_loss(observed[:-1], observed, state, model, x, model(x))

    def test_state_shapes_checked(self):
        """Test u and H_a' must share a shape."""
        with pytest.raises(ShapeError):
            LabelInferenceState(np.zeros((2, 3)), np.zeros((3, 3)))


class TestSimulateGrad:
    """Tests for the simulated passive gradient."""

    def test_matches_finite_differences_on_random_instances(self):
        """Test simulated gradients and match-loss gradients on 50 random MLPs."""
        rng = np.random.default_rng(11)
        for _ in range(50):
            d, hidden, c = (int(v) for v in rng.integers(2, 6, size=3))
            batch = int(rng.integers(1, 4))
            model = Mlp.create([d, hidden, c], rng)
            x = rng.uniform(size=(batch, d))
            state = LabelInferenceState.random(batch, c, rng)
            h_local = model(x)
            observed = observed_gradient(
                model, x, rng.normal(size=(batch, c)), rng.integers(0, c, batch), c
            )

            def loss(theta):
                logits = model.unflatten(theta)(x) + state.h_foreign
                return cross_entropy(logits, state.dummy_labels)

            def distance(u, h_foreign):
                trial = LabelInferenceState(u, h_foreign)
                r = simulate_grad(trial, model, x, h_local) - observed
                return float(r @ r)

            simulated = simulate_grad(state, model, x, h_local)
            numeric = finite_difference_grad(loss, model.flatten())
            np.testing.assert_allclose(simulated, numeric, rtol=1e-5, atol=1e-8)

            res = match_loss(simulated, observed, state, model, x, h_local)
            num_u = finite_difference_grad(
                lambda u: distance(u, state.h_foreign), state.u
            )
            num_h = finite_difference_grad(
                lambda h: distance(state.u, h), state.h_foreign
            )
            np.testing.assert_allclose(res.grad_u, num_u, rtol=1e-5, atol=1e-8)
            np.testing.assert_allclose(res.grad_h_foreign, num_h, rtol=1e-5, atol=1e-8)

    def test_vanishes_when_dummy_labels_match_prediction(self):
        """Test y' = softmax(H_p + H_a') gives a zero gradient."""
        rng = np.random.default_rng(2)
        model = Mlp.create([4, 5, 3], rng)
        x = rng.uniform(size=(3, 4))
        h_local = model(x)
        h_foreign = rng.normal(size=(3, 3))
        state = LabelInferenceState(h_local + h_foreign, h_foreign)

        grad = simulate_grad(state, model, x, h_local)

        assert grad.shape == (model.parameter_count,)
        np.testing.assert_allclose(grad, 0.0, atol=1e-15)

    def test_single_sample_is_plain_backward(self):
        """Test B = 1 equals the parameter gradient of softmax(H) - y'."""
        rng = np.random.default_rng(4)
        model = Mlp.create([3, 4, 3], rng)
        x = rng.uniform(size=(1, 3))
        state = LabelInferenceState.random(1, 3, rng)
        h_local = model(x)
        g = softmax(h_local + state.h_foreign) - state.dummy_labels

        np.testing.assert_allclose(
            simulate_grad(state, model, x, h_local),
            param_grad_from_output_grads(model, x, g),
            atol=1e-15,
        )

    def test_local_output_shape_checked(self):
        """Test H_p must match the state's batch."""
        model = Mlp.create([2, 3], np.random.default_rng(0))
        state = LabelInferenceState.random(2, 3, np.random.default_rng(1))
        with pytest.raises(ShapeError):
            simulate_grad(state, model, np.zeros((2, 2)), np.zeros((3, 3)))


class TestInferLabels:
    """Tests for infer_labels and its brute-force oracle."""

    @pytest.fixture
    def linear_problem(self):
        """Linear passive model with linearly independent inputs."""
        rng = np.random.default_rng(1)
        model = Mlp.create([4, 3], rng)
        x = rng.uniform(size=(2, 4))
        h_foreign = 0.5 * rng.normal(size=(2, 3))
        return model, x, h_foreign

    def test_objective_decreases(self, linear_problem):
        """Test the optimizer lowers D and returns a label per slot."""
        model, x, h_foreign = linear_problem
        observed = observed_gradient(model, x, h_foreign, [2, 0], 3)

        result = infer_labels(observed, model, x, iters=300, lr=0.05, seed=0)

        assert result.labels.shape == (2,)
        assert len(result.history) == 300
        assert result.d_final < result.history[0]
        assert result.state.step == 300

    def test_model_not_modified(self, linear_problem):
        """Test the attacker's model is only read."""
        model, x, h_foreign = linear_problem
        before = model.flatten()
        observed = observed_gradient(model, x, h_foreign, [1, 1], 3)
        infer_labels(observed, model, x, iters=20)
        np.testing.assert_array_equal(model.flatten(), before)

    def test_observed_length_checked(self, linear_problem):
        """Test the observed gradient must fit the model."""
        model, x, _ = linear_problem
        with pytest.raises(ShapeError):
            infer_labels(np.zeros(3), model, x, iters=1)

    def test_enumeration_finds_true_labels(self, linear_problem):
        """Test the true labeling is the unique best candidate."""
        model, x, h_foreign = linear_problem
        observed = observed_gradient(model, x, h_foreign, [2, 0], 3)

        best, distances = enumerate_labels(observed, model, x, iters=1000, lr=0.05)

        assert best.tolist() == [2, 0]
        assert len(distances) == 9
        assert distances[(2, 0)] < min(d for k, d in distances.items() if k != (2, 0))

    def test_enumeration_size_limit(self):
        """Test enumeration refuses huge candidate sets."""
        model = Mlp.create([2, 10], np.random.default_rng(0))
        with pytest.raises(ContractError):
            enumerate_labels(np.zeros(model.parameter_count), model, np.zeros((4, 2)))

    @pytest.mark.slow
    def test_recovers_labels_of_small_batches(self):
        """Test label recovery on several seeded batches."""
        rng = np.random.default_rng(7)
        model = Mlp.create([6, 3], rng)
        rates = []
        for seed in range(5):
            x = rng.uniform(size=(2, 6))
            truth = rng.integers(0, 3, size=2)
            observed = observed_gradient(model, x, rng.normal(size=(2, 3)), truth, 3)
            result = infer_labels(observed, model, x, iters=3000, lr=0.05, seed=seed)
            rates.append(recovery_rate(result.labels, truth))
        assert np.mean(rates) >= 0.8


class TestGradientSign:
    """Tests for plaintext single-sample label reading."""

    def test_negative_component_is_the_label(self):
        """Test softmax(z) - e_y reveals y."""
        g = softmax(np.array([[0.3, -1.0, 2.0]]))[0] - np.array([0.0, 1.0, 0.0])
        assert label_from_gradient_sign(g) == 1

    def test_ambiguous_gradient(self):
        """Test a gradient without a single negative entry."""
        with pytest.raises(AmbiguousGradientError):
            label_from_gradient_sign(np.zeros(3))

    def test_random_gradients(self):
        """Test the label is read back from 50 random plaintext gradients."""
        rng = np.random.default_rng(5)
        for _ in range(50):
            c = int(rng.integers(2, 11))
            y = int(rng.integers(0, c))
            z = 3.0 * rng.normal(size=(1, c))
            g = softmax_ce_grad(z, one_hot([y], c))[0]
            assert label_from_gradient_sign(g) == y

    def test_recovery_rate(self):
        """Test the recovered fraction and shape validation."""
        assert recovery_rate([0, 1, 2, 2], [0, 1, 1, 2]) == 0.75
        with pytest.raises(ShapeError):
            recovery_rate([0], [0, 1])


class TestLabelReplacement:
    """Tests for additive label replacement."""

    def test_single_vector(self):
        """Test [[s - e_y]] becomes [[s - e_tau]]."""
        s = softmax(np.array([[0.1, 0.5, -0.2]]))
        enc = OpaqueVec.encrypt(s - one_hot([2], 3), party=1)

        out = replace_gradient_label(enc, tau=0, y=2)

        np.testing.assert_allclose(
            reveal_for_audit(out), s - one_hot([0], 3), atol=1e-15
        )

    def test_single_row(self):
        """Test only the chosen row changes."""
        g = np.full((2, 3), 0.1)
        replaced = replace_gradient_label(OpaqueVec.encrypt(g, 1), 1, 0, row=1)
        out = reveal_for_audit(replaced)

        np.testing.assert_array_equal(out[0], g[0])
        np.testing.assert_allclose(out[1], [1.1, -0.9, 0.1])

    def test_random_property_cases(self):
        """Test replacement equals recomputation with tau, and tau -> y undoes it."""
        rng = np.random.default_rng(17)
        for _ in range(1000):
            c = int(rng.integers(2, 11))
            y, tau = (int(v) for v in rng.integers(0, c, size=2))
            z = 4.0 * rng.normal(size=(1, c))
            enc = OpaqueVec.encrypt(softmax_ce_grad(z, one_hot([y], c)), party=1)

            replaced = replace_gradient_label(enc, tau=tau, y=y)
            restored = replace_gradient_label(replaced, tau=y, y=tau)

            np.testing.assert_allclose(
                reveal_for_audit(replaced),
                softmax_ce_grad(z, one_hot([tau], c)),
                rtol=0,
                atol=1e-15,
            )
            np.testing.assert_allclose(
                reveal_for_audit(restored), reveal_for_audit(enc), rtol=0, atol=1e-15
            )

    def test_same_label_is_identity(self):
        """Test tau == y leaves the payload unchanged."""
        g = softmax_ce_grad(np.array([[1.0, 0.0, -1.0]]), one_hot([2], 3))
        out = replace_gradient_label(OpaqueVec.encrypt(g, party=1), tau=2, y=2)
        np.testing.assert_array_equal(reveal_for_audit(out), g)

    def test_labels_validated(self):
        """Test out-of-range labels and rows."""
        enc = OpaqueVec.encrypt(np.zeros((2, 3)), party=1)
        with pytest.raises(ContractError):
            replace_gradient_label(enc, tau=3, y=0)
        with pytest.raises(ContractError):
            replace_gradient_label(enc, tau=1, y=0, row=2)

    def test_attack_rewrites_known_slots(self, blobs):
        """Test the hook rewrites every known non-target slot in a session."""
        known = {i: int(blobs.labels[i]) for i in range(8)}
        attack = LabelReplacementAttack(target_label=0, known_labels=known)
        session = make_session(blobs, attacks={0: attack}, batch_size=8, seed=0)

        session.round(np.arange(8))

        assert attack.replaced == sum(1 for y in known.values() if y != 0)

    def test_active_label_poison(self):
        """Test relabeling returns a copy."""
        labels = np.array([0, 1, 2, 1])
        out = active_label_poison(labels, [1, 2], target=0)

        assert out.tolist() == [0, 0, 0, 1]
        assert labels.tolist() == [0, 1, 2, 1]


class TestGradientReplacementBackdoor:
    """Tests for the gradient-replacement backdoor hooks."""

    @pytest.fixture
    def config(self):
        """Target ids 1 and 3, backdoor ids 10 and 11, gamma 5."""
        return GrBackdoorConfig(
            target_label=0, target_ids=[1, 3], backdoor_ids=[10, 11], gamma=5.0
        )

    def test_sets_must_be_disjoint(self):
        """Test overlapping target and backdoor sets."""
        with pytest.raises(ContractError):
            GrBackdoorConfig(target_label=0, target_ids=[1], backdoor_ids=[1])

    def test_gamma_must_be_positive(self):
        """Test the amplify rate."""
        with pytest.raises(ContractError):
            GrBackdoorConfig(
                target_label=0, target_ids=[1], backdoor_ids=[2], gamma=0.0
            )

    def test_forward_substitutes_target_slots(self, config):
        """Test target slots carry backdoor outputs and are recorded."""
        h = np.zeros((4, 2))

        out, ledger = gr_forward_hook(
            config,
            np.array([0, 1, 2, 3]),
            h,
            lambda ids: np.repeat(ids[:, None].astype(float), 2, axis=1),
            np.random.default_rng(0),
        )

        assert [slot for slot, _ in ledger] == [1, 3]
        for slot, sample in ledger:
            assert sample in (10, 11)
            np.testing.assert_array_equal(out[slot], [sample, sample])
        np.testing.assert_array_equal(out[[0, 2]], 0.0)
        np.testing.assert_array_equal(h, 0.0)

    def test_same_seed_same_pairing(self, config):
        """Test colluding attackers with one seed pair identically."""
        ids = np.array([1, 3, 5])
        ledgers = []
        for _ in range(2):
            _, ledger = gr_forward_hook(
                config,
                ids,
                np.zeros((3, 2)),
                lambda j: np.zeros((j.size, 2)),
                np.random.default_rng(9),
            )
            ledgers.append(ledger)
        assert ledgers[0] == ledgers[1]

    def test_backward_amplifies_stolen_gradient(self, config):
        """Test gamma on paired slots and backdoor features for the Jacobian."""
        grads = OpaqueVec.encrypt(np.ones((3, 2)), party=1, sample_ids=[0, 1, 2])
        x = np.zeros((3, 4))

        out, x_used = gr_backward_hook(
            config,
            grads,
            [(1, 11)],
            np.array([0, 1, 2]),
            x,
            lambda ids: np.full((ids.size, 4), 7.0),
        )

        np.testing.assert_allclose(reveal_for_audit(out), [[1, 1], [5, 5], [1, 1]])
        np.testing.assert_array_equal(x_used[1], 7.0)
        np.testing.assert_array_equal(x_used[[0, 2]], 0.0)

    def test_backward_without_pairs_is_identity(self, config):
        """Test untouched rounds pass the ciphertext through."""
        grads = OpaqueVec.encrypt(np.ones((2, 2)), party=1)
        out, _ = gr_backward_hook(
            config, grads, [], np.array([0, 2]), np.zeros((2, 4)), None
        )
        assert out is grads

    def test_random_outputs_silence_backdoor_slots(self):
        """Test backdoor samples emit noise and get no gradient of their own."""
        config = GrBackdoorConfig(0, target_ids=[1], backdoor_ids=[2], random_h=True)
        out, ledger = gr_forward_hook(
            config, np.array([2, 4]), np.zeros((2, 3)), None, np.random.default_rng(0)
        )
        assert ledger == []
        assert np.any(out[0] != 0.0)
        np.testing.assert_array_equal(out[1], 0.0)

        grads = OpaqueVec.encrypt(np.ones((2, 3)), party=1)
        back, _ = gr_backward_hook(
            config, grads, [], np.array([2, 4]), np.zeros((2, 1)), None
        )
        np.testing.assert_array_equal(reveal_for_audit(back)[0], 0.0)

    def test_bad_ledger_slot(self, config):
        """Test ledger entries must point inside the batch."""
        grads = OpaqueVec.encrypt(np.ones((2, 2)), party=1)
        with pytest.raises(ContractError):
            gr_backward_hook(
                config, grads, [(5, 10)], np.array([0, 1]), np.zeros((2, 1)), None
            )

    def test_runs_inside_session_without_leaks(self, blobs):
        """Test the attack works through the encrypted protocol only."""
        targets = blobs.class_ids(0)[:3]
        backdoor = blobs.class_ids(1)[:5]
        attack = GradientReplacementBackdoor(
            GrBackdoorConfig(0, target_ids=targets, backdoor_ids=backdoor), seed=0
        )
        session = make_session(blobs, attacks={0: attack}, batch_size=8, seed=2)

        session.train(1)

        assert attack.pairs_total == targets.size
        assert attack.ledger == []
        passive = party_indices(session.parties, "passive")
        assert session.audit.sample_level_leaks(passive) == []
