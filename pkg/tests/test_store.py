"""Object store: write-once objects, listing, and compare-and-swap refs."""

from __future__ import annotations

import threading

import pytest

from minilake.errors import AlreadyExists, IoError, NotFound
from minilake.store import ObjectStore, validate_key

H1 = "a" * 64
H2 = "b" * 64


# --- objects ---------------------------------------------------------------

def test_put_get_round_trip(store):
    store.put("t/a", b"payload")
    assert store.get("t/a") == b"payload"


def test_get_missing_raises_not_found(store):
    with pytest.raises(NotFound):
        store.get("missing")


def test_put_existing_key_rejected_and_original_intact(store):
    store.put("k", b"first")
    with pytest.raises(AlreadyExists):
        store.put("k", b"second")
    assert store.get("k") == b"first"


def test_get_after_delete_raises_not_found(store):
    store.put("k", b"x")
    store.delete("k")
    with pytest.raises(NotFound):
        store.get("k")


def test_delete_missing_raises_not_found(store):
    with pytest.raises(NotFound):
        store.delete("missing")


def test_exists(store):
    assert not store.exists("k")
    store.put("k", b"x")
    assert store.exists("k")


def test_list_prefix_filtering(store):
    store.put("t/a", b"1")
    store.put("t/b", b"2")
    store.put("u/c", b"3")
    assert store.list("t/") == ["t/a", "t/b"]
    assert store.list("") == ["t/a", "t/b", "u/c"]
    assert store.list("zzz/") == []


def test_list_is_sorted_across_directories(store):
    for key in ("b/2", "a/9", "a/1", "c"):
        store.put(key, b"x")
    assert store.list() == ["a/1", "a/9", "b/2", "c"]


def test_stat_reports_size(store):
    store.put("k", b"12345")
    size, mtime_ms = store.stat("k")
    assert size == 5
    assert mtime_ms > 0
    with pytest.raises(NotFound):
        store.stat("missing")


@pytest.mark.parametrize(
    "bad", ["", "/x", "x/", "a//b", "a/./b", "a/../b", ".", ".."]
)
def test_validate_key_rejects_traversal_and_empty(bad, store):
    with pytest.raises(IoError):
        validate_key(bad)
    with pytest.raises(IoError):
        store.put(bad, b"x")


def test_keys_cannot_escape_root(store, tmp_path):
    with pytest.raises(IoError):
        store.put("../escape", b"x")
    assert not (tmp_path / "escape").exists()


def test_binary_safety(store):
    blob = bytes(range(256)) * 3
    store.put("bin", blob)
    assert store.get("bin") == blob


# --- refs --------------------------------------------------------------------

def test_unknown_ref_reads_absent(store):
    assert store.read_ref("refs/heads/main") is None


def test_cas_from_absent_then_read(store):
    assert store.cas_ref("refs/heads/main", None, H1) is True
    assert store.read_ref("refs/heads/main") == H1


def test_cas_success_moves_failure_keeps(store):
    store.cas_ref("refs/heads/main", None, H1)
    assert store.cas_ref("refs/heads/main", H1, H2) is True
    assert store.read_ref("refs/heads/main") == H2
    # stale expected value: no change
    assert store.cas_ref("refs/heads/main", H1, H1) is False
    assert store.read_ref("refs/heads/main") == H2


def test_cas_on_absent_ref_with_wrong_expectation(store):
    assert store.cas_ref("refs/heads/main", H1, H2) is False
    assert store.read_ref("refs/heads/main") is None


def test_cas_create_loses_to_existing(store):
    store.cas_ref("refs/heads/main", None, H1)
    assert store.cas_ref("refs/heads/main", None, H2) is False
    assert store.read_ref("refs/heads/main") == H1


def test_cas_rejects_malformed_hash(store):
    with pytest.raises(IoError):
        store.cas_ref("refs/heads/main", None, "nothex")


def test_delete_ref(store):
    store.cas_ref("refs/tags/v1", None, H1)
    store.delete_ref("refs/tags/v1")
    assert store.read_ref("refs/tags/v1") is None
    with pytest.raises(NotFound):
        store.delete_ref("refs/tags/v1")


def test_list_refs_round_trips_escaped_names(store):
    store.cas_ref("refs/heads/main", None, H1)
    store.cas_ref("refs/tags/v1", None, H1)
    store.cas_ref("refs/heads/feature/x", None, H2)
    assert store.list_refs() == [
        "refs/heads/feature/x",
        "refs/heads/main",
        "refs/tags/v1",
    ]


def test_ref_and_object_namespaces_are_disjoint(store):
    store.put("refs/heads/main", b"an object, not a ref")
    assert store.read_ref("refs/heads/main") is None
    store.cas_ref("refs/heads/main", None, H1)
    assert store.get("refs/heads/main") == b"an object, not a ref"
    assert store.read_ref("refs/heads/main") == H1


def test_cas_races_have_exactly_one_winner_per_round(store):
    """1000 contended CAS attempts: every round exactly one thread wins."""
    name = "refs/heads/main"
    contenders = 4
    rounds = 250
    current: str | None = None
    for r in range(rounds):
        candidates = [f"{r:032x}{i:032x}" for i in range(contenders)]
        results: list[bool] = [False] * contenders
        barrier = threading.Barrier(contenders)

        def attempt(i: int, expected=current) -> None:
            barrier.wait()
            results[i] = store.cas_ref(name, expected, candidates[i])

        threads = [threading.Thread(target=attempt, args=(i,)) for i in range(contenders)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert sum(results) == 1, f"round {r}: {results.count(True)} winners"
        current = store.read_ref(name)
        assert current == candidates[results.index(True)]
