"""Content-addressed store: canonicalization, atomicity, resume partition."""

import json

import pytest

from specverse.errors import StoreConflictError
from specverse.store import RunStore, canonical_digest, canonical_json, run_id, space_digest

SPACE_DOC = {"decisions": [{"name": "a", "options": ["x", "y"]}], "constraints": []}
CONFIG = {"seed": 1, "trials": 1, "timeout": 120.0, "runner": {"kind": "builtin", "name": "glm"}}
OUTCOME = {
    "universe_id": 0,
    "assignment": {"a": "x"},
    "trials": [
        {
            "trial_index": 0,
            "status": "success",
            "seed": 42,
            "wall_time": 0.125,
            "fit": {"estimate": 0.2512345678901234, "interval_lower": 0.1, "interval_upper": 0.4},
            "samples": [0.1, 0.2, 0.30000000000000004],
            "diagnostics": {"geweke_p": 0.77},
            "warnings": [],
            "failure": None,
        }
    ],
    "convergence_count": 1,
    "pooled": {"estimate": 0.2512345678901234},
    "failure": None,
}


class TestDigest:
    def test_key_order_and_whitespace_invariant(self):
        reordered = json.loads(canonical_json(SPACE_DOC))
        reordered["constraints"] = []
        doc_b = {"constraints": [], "decisions": [{"options": ["x", "y"], "name": "a"}]}
        assert space_digest(SPACE_DOC) == space_digest(doc_b)
        assert canonical_digest(SPACE_DOC, {"a": "x"}, CONFIG) == canonical_digest(
            doc_b, {"a": "x"}, CONFIG
        )

    def test_timeout_change_changes_digest(self):
        other = dict(CONFIG, timeout=60.0)
        assert canonical_digest(SPACE_DOC, {"a": "x"}, CONFIG) != canonical_digest(
            SPACE_DOC, {"a": "x"}, other
        )

    def test_distinct_assignments_distinct_digests(self):
        keys = {
            canonical_digest(SPACE_DOC, {"a": f"opt{i}", "b": f"opt{j}"}, CONFIG)
            for i in range(144)
            for j in range(10)
        }
        assert len(keys) == 1440

    def test_run_id_short_and_stable(self):
        assert run_id(SPACE_DOC, CONFIG) == run_id(SPACE_DOC, CONFIG)
        assert len(run_id(SPACE_DOC, CONFIG)) == 16


class TestPersistence:
    def test_round_trip_bit_exact(self, tmp_path):
        store = RunStore.create(tmp_path, SPACE_DOC, CONFIG)
        key = canonical_digest(SPACE_DOC, {"a": "x"}, CONFIG)
        store.persist_outcome(key, OUTCOME)
        assert store.load_outcome(key) == OUTCOME

    def test_identical_rewrite_is_noop(self, tmp_path):
        store = RunStore.create(tmp_path, SPACE_DOC, CONFIG)
        key = canonical_digest(SPACE_DOC, {"a": "x"}, CONFIG)
        store.persist_outcome(key, OUTCOME)
        store.persist_outcome(key, OUTCOME)
        assert len(list(store.outcome_dir.iterdir())) == 1

    def test_conflicting_rewrite_raises(self, tmp_path):
        store = RunStore.create(tmp_path, SPACE_DOC, CONFIG)
        key = canonical_digest(SPACE_DOC, {"a": "x"}, CONFIG)
        store.persist_outcome(key, OUTCOME)
        altered = dict(OUTCOME, convergence_count=0)
        with pytest.raises(StoreConflictError):
            store.persist_outcome(key, altered)

    def test_manifest_rejects_foreign_space(self, tmp_path):
        RunStore.create(tmp_path, SPACE_DOC, CONFIG)
        store = RunStore((tmp_path / "runs").iterdir().__next__())
        with pytest.raises(StoreConflictError):
            store.write_manifest({"decisions": [{"name": "z", "options": ["1"]}]}, CONFIG)


class TestResumePlan:
    def _keyed(self, n):
        return [
            (canonical_digest(SPACE_DOC, {"a": f"u{i}"}, CONFIG), f"universe-{i}")
            for i in range(n)
        ]

    def test_empty_store_all_pending(self, tmp_path):
        store = RunStore.create(tmp_path, SPACE_DOC, CONFIG)
        pending, completed = store.resume_plan(self._keyed(5))
        assert len(pending) == 5 and completed == []

    def test_fully_populated_all_completed(self, tmp_path):
        store = RunStore.create(tmp_path, SPACE_DOC, CONFIG)
        keyed = self._keyed(5)
        for key, _ in keyed:
            store.persist_outcome(key, OUTCOME)
        pending, completed = store.resume_plan(keyed)
        assert pending == [] and len(completed) == 5

    def test_partial_store_partitions(self, tmp_path):
        store = RunStore.create(tmp_path, SPACE_DOC, CONFIG)
        keyed = self._keyed(144)
        stored = keyed[:100]
        for key, _ in stored:
            store.persist_outcome(key, OUTCOME)
        pending, completed = store.resume_plan(keyed)
        assert (len(pending), len(completed)) == (44, 100)
        assert set(pending) | set(completed) == set(keyed)
        assert not (set(pending) & set(completed))
        # direct set-difference oracle
        stored_keys = {k for k, _ in stored}
        assert {k for k, _ in pending} == {k for k, _ in keyed} - stored_keys

    def test_corrupt_outcome_is_pending_again(self, tmp_path, caplog):
        store = RunStore.create(tmp_path, SPACE_DOC, CONFIG)
        keyed = self._keyed(2)
        store.persist_outcome(keyed[0][0], OUTCOME)
        # simulate a torn write: truncated file under the final name
        full = store.outcome_path(keyed[0][0]).read_bytes()
        store.outcome_path(keyed[1][0]).write_bytes(full[: len(full) // 2])
        with caplog.at_level("WARNING"):
            pending, completed = store.resume_plan(keyed)
        assert [k for k, _ in completed] == [keyed[0][0]]
        assert [k for k, _ in pending] == [keyed[1][0]]
        assert any("corrupt outcome" in r.message for r in caplog.records)

    def test_leftover_temp_file_is_ignored(self, tmp_path):
        store = RunStore.create(tmp_path, SPACE_DOC, CONFIG)
        keyed = self._keyed(1)
        (store.outcome_dir / f".tmp-999-{keyed[0][0]}.json").write_bytes(b'{"half":')
        pending, completed = store.resume_plan(keyed)
        assert completed == [] and len(pending) == 1
        assert store.stored_keys() == set()
