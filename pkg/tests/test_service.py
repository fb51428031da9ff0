import json

import pytest
from fastapi.testclient import TestClient

from rarblock.core import Approach, DesignConfig
from rarblock.engine import run_trial_scripted
from rarblock.service import (
    CountMismatch,
    MismatchedAllocation,
    TrialClosed,
    TrialExists,
    TrialNotFound,
    TrialStore,
    WrongBlockIndex,
    _issue_pi,
    create_app,
)

FREQ_DOC = {"num_blocks": 5, "approach": "frequentist", "total_n": 200, "master_seed": 21}
BAYES_DOC = {"num_blocks": 2, "approach": "bayesian", "total_n": 200, "master_seed": 42}


@pytest.fixture()
def store(tmp_path):
    s = TrialStore(str(tmp_path / "trials.journal"))
    yield s
    s.close()


class TestStore:
    def test_create_starts_at_even_allocation(self, store):
        t = store.create(FREQ_DOC, "t1")
        assert t.status == "enrolling"
        assert t.next_block_index == 1
        assert t.current_pi_a == 0.5

    def test_duplicate_id_conflicts(self, store):
        store.create(FREQ_DOC, "t1")
        with pytest.raises(TrialExists):
            store.create(FREQ_DOC, "t1")

    def test_invalid_config_journals_nothing(self, store, tmp_path):
        journal = tmp_path / "trials.journal"
        before = journal.read_text()
        with pytest.raises(Exception):
            store.create({"num_blocks": 3, "total_n": 200}, "bad")
        assert journal.read_text() == before

    def test_submission_validations(self, store):
        store.create(FREQ_DOC, "t1")
        with pytest.raises(WrongBlockIndex):
            store.submit("t1", dict(index=3, pi_a=0.5, n_a=20, n_b=20, y_a=1, y_b=2))
        with pytest.raises(MismatchedAllocation):
            store.submit("t1", dict(index=1, pi_a=0.4, n_a=20, n_b=20, y_a=1, y_b=2))
        with pytest.raises(CountMismatch):
            store.submit("t1", dict(index=1, pi_a=0.5, n_a=20, n_b=19, y_a=1, y_b=2))
        with pytest.raises(CountMismatch):
            store.submit("t1", dict(index=1, pi_a=0.5, n_a=20, n_b=20, y_a=25, y_b=2))
        with pytest.raises(TrialNotFound):
            store.submit("nope", dict(index=1, pi_a=0.5, n_a=20, n_b=20, y_a=1, y_b=2))

    def test_bayes_block_updates_allocation_downward(self, store):
        store.create(BAYES_DOC, "t1")
        t = store.submit(
            "t1", dict(index=1, pi_a=0.5, n_a=50, n_b=50, y_a=10, y_b=25)
        )
        assert t.status == "enrolling"
        assert t.next_block_index == 2
        assert t.current_pi_a < 0.5
        # recomputability: the stored value is a pure function of the blocks
        assert t.current_pi_a == _issue_pi(t.config, t.blocks)

    def test_completion_and_closure(self, store):
        store.create(BAYES_DOC, "t1")
        t = store.submit("t1", dict(index=1, pi_a=0.5, n_a=50, n_b=50, y_a=10, y_b=25))
        pi2 = t.current_pi_a
        t = store.submit("t1", dict(index=2, pi_a=pi2, n_a=20, n_b=80, y_a=4, y_b=40))
        assert t.status == "completed"
        assert t.decision is not None
        with pytest.raises(TrialClosed):
            store.submit("t1", dict(index=3, pi_a=0.5, n_a=50, n_b=50, y_a=1, y_b=1))

    def test_matches_engine_on_same_outcomes(self, store):
        outcomes = [(50, 50, 10, 25), (20, 80, 4, 40)]
        store.create(BAYES_DOC, "t1")
        t = store.submit("t1", dict(index=1, pi_a=0.5, n_a=50, n_b=50, y_a=10, y_b=25))
        t = store.submit(
            "t1", dict(index=2, pi_a=t.current_pi_a, n_a=20, n_b=80, y_a=4, y_b=40)
        )
        config = DesignConfig(
            num_blocks=2, approach=Approach.BAYESIAN, total_n=200, master_seed=42
        )
        rec = run_trial_scripted(config, outcomes)
        assert t.decision == rec.decision
        assert t.delta_hat == rec.delta_hat
        assert [b.pi_a for b in t.blocks] == [b.pi_a for b in rec.blocks]

    def test_kill_and_replay_reconstructs_state(self, store, tmp_path):
        store.create(FREQ_DOC, "t1")
        pi = 0.5
        for k in range(1, 4):
            t = store.submit(
                "t1", dict(index=k, pi_a=pi, n_a=20, n_b=20, y_a=4 + k, y_b=8 + k)
            )
            pi = t.current_pi_a
        snapshot = json.dumps(store.snapshot("t1"), sort_keys=True)
        reopened = TrialStore(str(tmp_path / "trials.journal"))
        assert json.dumps(reopened.snapshot("t1"), sort_keys=True) == snapshot
        reopened.close()

    def test_early_stopping_terminal_state(self, store):
        doc = dict(BAYES_DOC, num_blocks=10, early_stopping=True, total_n=200)
        store.create(doc, "t1")
        t = store.submit("t1", dict(index=1, pi_a=0.5, n_a=10, n_b=10, y_a=0, y_b=10))
        assert t.status == "stopped_efficacy"
        assert t.decision.value == "superior_b"
        assert t.next_block_index is None


class TestHttp:
    @pytest.fixture()
    def client(self, tmp_path):
        app = create_app(str(tmp_path / "api.journal"))
        with TestClient(app) as c:
            yield c
        app.state.store.close()

    def test_create_and_get(self, client):
        r = client.post("/trials", json={"trial_id": "t1", "config": FREQ_DOC})
        assert r.status_code == 201
        doc = r.json()
        assert doc["status"] == "enrolling"
        assert doc["current_pi_a"] == 0.5
        assert doc["derived"]["pi_history"] == [0.5]
        r = client.get("/trials/t1")
        assert r.status_code == 200

    def test_error_codes(self, client):
        client.post("/trials", json={"trial_id": "t1", "config": FREQ_DOC})
        r = client.post("/trials", json={"trial_id": "t1", "config": FREQ_DOC})
        assert r.status_code == 409
        assert r.json()["error"] == "trial_exists"
        r = client.post("/trials", json={"trial_id": "bad", "config": {"num_blocks": 3}})
        assert r.status_code == 400
        assert r.json()["error"] == "invalid_config"
        r = client.get("/trials/ghost")
        assert r.status_code == 404
        assert r.json()["error"] == "trial_not_found"
        r = client.post(
            "/trials/t1/blocks",
            json=dict(index=2, pi_a=0.5, n_a=20, n_b=20, y_a=1, y_b=2),
        )
        assert r.status_code == 409
        assert r.json()["error"] == "wrong_block_index"
        r = client.post(
            "/trials/t1/blocks",
            json=dict(index=1, pi_a=0.5, n_a=20, n_b=18, y_a=1, y_b=2),
        )
        assert r.status_code == 400
        assert r.json()["error"] == "count_mismatch"

    def test_submit_and_derived_statistics(self, client):
        client.post("/trials", json={"trial_id": "t1", "config": BAYES_DOC})
        r = client.post(
            "/trials/t1/blocks",
            json=dict(index=1, pi_a=0.5, n_a=50, n_b=50, y_a=10, y_b=25),
        )
        assert r.status_code == 200
        doc = r.json()
        stat = doc["derived"]["statistic"]
        assert stat["type"] == "posterior_b_gt_a"
        assert 0.9 < stat["value"] <= 1.0
        assert doc["derived"]["cum_p_a"] == pytest.approx(0.2)
        assert doc["derived"]["cum_p_b"] == pytest.approx(0.5)
        assert doc["derived"]["pi_history"][-1] == doc["current_pi_a"]

    def test_list_trials(self, client):
        client.post("/trials", json={"trial_id": "a", "config": FREQ_DOC})
        client.post("/trials", json={"trial_id": "b", "config": BAYES_DOC})
        r = client.get("/trials")
        assert r.status_code == 200
        assert [t["trial_id"] for t in r.json()] == ["a", "b"]

    def test_freq_boundary_distances_reported(self, client):
        doc = dict(FREQ_DOC, early_stopping=True)
        client.post("/trials", json={"trial_id": "t1", "config": doc})
        r = client.post(
            "/trials/t1/blocks",
            json=dict(index=1, pi_a=0.5, n_a=20, n_b=20, y_a=4, y_b=9),
        )
        stat = r.json()["derived"]["statistic"]
        assert stat["type"] == "z"
        assert "efficacy_distance" in stat and "futility_distance" in stat
        assert stat["efficacy_distance"] == pytest.approx(
            stat["efficacy_z"] - stat["value"]
        )
