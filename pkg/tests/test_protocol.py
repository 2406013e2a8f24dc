"""Tests for the simulated encrypted protocol."""

import numpy as np
import pytest

from tests.conftest import make_models, make_session
from vfl_shield.data import PartitionSpec, vertical_split
from vfl_shield.defenses import NoDefense
from vfl_shield.errors import (
    AccessViolation,
    ContractError,
    ShapeError,
    ThreatModelViolation,
)
from vfl_shield.numerics import Mlp, param_grad_from_output_grads
from vfl_shield.protocol import (
    ActiveParty,
    AuditLog,
    FusionKey,
    OpaqueVec,
    PassiveParty,
    TrustedThirdParty,
    VflSession,
    make_batch_plan,
    party_indices,
    reveal_for_audit,
    train_centralized,
)


class TestOpaqueVec:
    """Tests for the ciphertext stand-in."""

    @pytest.fixture
    def vec(self):
        """Encrypted per-sample block."""
        plain = np.array([[1.0, 2.0], [3.0, 4.0]])
        return OpaqueVec.encrypt(plain, party=1, sample_ids=[5, 6])

    def test_payload_cannot_be_read(self, vec):
        """Test that array conversion, indexing and iteration are refused."""
        with pytest.raises(AccessViolation):
            np.asarray(vec)
        with pytest.raises(AccessViolation):
            vec[0]
        with pytest.raises(AccessViolation):
            list(vec)

    def test_homomorphic_operations(self, vec):
        """Test add, add_plain, scale and linear_combine on payloads."""
        total = vec.add(vec).add_plain(np.ones((2, 2))).scale(0.5)
        np.testing.assert_allclose(reveal_for_audit(total), [[1.5, 2.5], [3.5, 4.5]])

        swapped = vec.linear_combine(np.array([[0.0, 1.0], [2.0, 0.0]]))
        np.testing.assert_allclose(reveal_for_audit(swapped), [[3.0, 4.0], [2.0, 4.0]])
        assert swapped.provenance.sample_ids == (5, 6)

    def test_shape_mismatch(self, vec):
        """Test that blocks of different shape cannot be added."""
        with pytest.raises(ShapeError):
            vec.add(OpaqueVec.encrypt(np.zeros((3, 2)), party=1))

    def test_ttp_refuses_sample_level_payloads(self, vec):
        """Test that per-sample gradients are never decrypted."""
        ttp = TrustedThirdParty()
        with pytest.raises(ThreatModelViolation):
            ttp.decrypt(vec, requester=0)
        assert ttp.audit.events == []

    def test_ttp_decrypts_param_grads(self, vec):
        """Test the aggregated parameter gradient is decryptable and logged."""
        mlp = Mlp.create([3, 2], np.random.default_rng(0))
        ttp = TrustedThirdParty()
        plain = ttp.decrypt(vec.param_grad(mlp, np.ones((2, 3)), party=0), requester=0)

        assert plain.shape == (mlp.parameter_count,)
        assert len(ttp.audit.opened_by(0)) == 1

    def test_ttp_decrypts_linear_combinations_of_aggregates(self):
        """Test combined aggregates decrypt to the plaintext combination."""
        rng = np.random.default_rng(8)
        p, q = rng.normal(size=(3, 4)), rng.normal(size=(2, 4))
        weights = rng.normal(size=(2, 3))
        a = OpaqueVec.encrypt(p, party=0, kind="param_grad", aggregate=True)
        b = OpaqueVec.encrypt(q, party=0, kind="param_grad", aggregate=True)
        ttp = TrustedThirdParty()

        combined = a.linear_combine(weights).add(b.scale(-0.5)).add_plain(1.0)
        plain = ttp.decrypt(combined, requester=0)

        np.testing.assert_allclose(plain, weights @ p - 0.5 * q + 1.0, atol=1e-12)
        assert len(ttp.audit.opened_by(0)) == 1

    def test_ttp_decrypts_param_grad_of_combined_rows(self, vec):
        """Test a recombined per-sample block still decrypts only via param_grad."""
        mlp = Mlp.create([3, 2], np.random.default_rng(0))
        x = np.arange(6.0).reshape(2, 3)
        weights = np.array([[0.5, 0.5], [1.0, -1.0]])
        combined = vec.linear_combine(weights)
        ttp = TrustedThirdParty()

        with pytest.raises(ThreatModelViolation):
            ttp.decrypt(combined, requester=0)
        plain = ttp.decrypt(combined.param_grad(mlp, x, party=0), requester=0)

        expected = param_grad_from_output_grads(
            mlp, x, weights @ np.array([[1.0, 2.0], [3.0, 4.0]])
        )
        np.testing.assert_allclose(plain, expected, atol=1e-12)

    def test_fusion_key_only_opens_embeddings(self, vec):
        """Test the active party cannot open gradients with its fusion key."""
        key = FusionKey(1, AuditLog())
        with pytest.raises(AccessViolation):
            key.open_embeddings(vec)
        emb = OpaqueVec.encrypt(np.zeros((1, 2)), party=0, kind="embedding")
        np.testing.assert_array_equal(key.open_embeddings(emb), np.zeros((1, 2)))


class TestBatchPlan:
    """Tests for make_batch_plan."""

    def test_plan_is_a_permutation(self):
        """Test every sample appears once and only the last batch is short."""
        plan = make_batch_plan(10, 4, np.random.default_rng(0))

        assert [len(b) for b in plan] == [4, 4, 2]
        assert sorted(np.concatenate(plan).tolist()) == list(range(10))

    def test_invalid_arguments(self):
        """Test empty universes and non-positive batch sizes."""
        with pytest.raises(ContractError):
            make_batch_plan(0, 4, np.random.default_rng(0))
        with pytest.raises(ContractError):
            make_batch_plan(10, 0, np.random.default_rng(0))


class TestVflSession:
    """Tests for VflSession."""

    def test_matches_centralized_training(self, blobs):
        """Test the undefended protocol reproduces joint training."""
        spec = PartitionSpec.even(blobs.num_features, 3)
        models = make_models(spec.widths, blobs.num_classes)
        reference = [m.copy() for m in models]
        session = make_session(
            blobs, num_parties=3, models=models, batch_size=8, lr=0.1, seed=3
        )

        session.train(2)
        train_centralized(
            reference, vertical_split(blobs, spec), blobs.labels, 8, 0.1, 2, seed=3
        )

        for ours, ref in zip(models, reference):
            np.testing.assert_allclose(
                ours.flatten(), ref.flatten(), rtol=1e-12, atol=1e-14
            )

    def test_no_sample_level_leaks(self, session):
        """Test passive parties only ever see aggregates."""
        session.train(1)

        passive = party_indices(session.parties, "passive")
        assert session.audit.sample_level_leaks(passive) == []
        assert session.audit.opened_by(0)

    def test_training_reaches_high_accuracy(self, blobs):
        """Test blobs become separable after a few epochs."""
        session = make_session(blobs, batch_size=8, lr=0.3, seed=1)
        session.train(40)

        views = vertical_split(blobs, PartitionSpec.even(blobs.num_features, 2))
        metrics = session.evaluate(views, blobs.labels)

        assert metrics["main_accuracy"] >= 0.9
        assert np.isnan(metrics["backdoor_accuracy"])

    def test_frozen_round_keeps_parameters(self, session):
        """Test apply_updates=False leaves every model unchanged."""
        before = [p.model.flatten() for p in session.parties]
        result = session.round(np.arange(4), apply_updates=False)

        for party, flat in zip(session.parties, before):
            np.testing.assert_array_equal(party.model.flatten(), flat)
            assert result.gradients[party.index].shape == flat.shape

    def test_round_rejects_bad_batches(self, session):
        """Test empty and out-of-range batches."""
        with pytest.raises(ContractError):
            session.round(np.array([], dtype=np.int64))
        with pytest.raises(ContractError):
            session.round(np.array([0, session.num_samples]))

    def test_sinks_run_after_each_epoch(self, session):
        """Test epoch callbacks."""
        seen = []
        session.sinks.append(lambda epoch, _s: seen.append(epoch))
        session.train(2)
        assert seen == [1, 2]

    def test_party_order_validated(self, blobs):
        """Test indices must be 0..K-1 with the active party last."""
        spec = PartitionSpec.even(blobs.num_features, 2)
        views = vertical_split(blobs, spec)
        models = make_models(spec.widths, blobs.num_classes)
        passive = PassiveParty(1, models[0], views[0])
        active = ActiveParty(0, models[1], views[1], blobs.labels, NoDefense())
        with pytest.raises(ContractError, match="indices"):
            VflSession([passive], active)

    def test_model_width_checked(self, blobs):
        """Test a bottom model must match its slice."""
        with pytest.raises(ShapeError):
            model = Mlp.create([2, 3], np.random.default_rng(0))
            PassiveParty(0, model, blobs.features)

    def test_predict_ties_pick_lowest_class(self, session, blobs):
        """Test all-zero fused logits predict class 0."""
        for party in session.parties:
            party.model.load_flat(np.zeros(party.model.parameter_count))
        views = vertical_split(blobs, PartitionSpec.even(blobs.num_features, 2))

        preds = session.predict(views)

        assert preds.shape == (blobs.num_samples,)
        np.testing.assert_array_equal(preds, 0)

    def test_evaluate_empty_filter(self, session, blobs):
        """Test evaluating an empty subset is an error."""
        views = vertical_split(blobs, PartitionSpec.even(blobs.num_features, 2))
        with pytest.raises(ContractError):
            session.evaluate(views, blobs.labels, label_filter=[7])
