import hashlib
import json

import pytest

from grasp_refinery.dataset import (
    AnnotationSource,
    DatasetVersion,
    GraspAnnotation,
    ImageRecord,
    version_manifest,
)
from grasp_refinery.errors import (
    ContractViolation,
    LedgerIntegrityError,
    NotFoundError,
    ReplayError,
    StateError,
)
from grasp_refinery.geometry import GraspPose
from grasp_refinery.ledger import (
    GENESIS,
    EventKind,
    Ledger,
    ReviewDecision,
    Verdict,
    read_events,
    replay,
)
from grasp_refinery.review_queue import ReviewQueue, ReviewQueueItem


def make_item(image_id="img_a", sequence=0):
    gt = (GraspAnnotation(GraspPose(5, 5, 0, 4, 2), AnnotationSource.ORIGINAL),)
    return ReviewQueueItem(
        image_id=image_id,
        width=50,
        height=50,
        gt_snapshot=gt,
        candidate=(GraspPose(6, 5, 0.1, 4, 2), f"pred-{image_id}"),
        candidate_confidence=0.9,
        rgb_path=None,
        sequence=sequence,
    )


def leased_item(queue_args=None, operator="op-1", **kwargs):
    item = make_item(**kwargs)
    queue = ReviewQueue([item], iteration=1)
    leased = queue.lease_next(operator)
    assert leased is item
    return item


def base_version():
    records = {}
    for name in ("img_a", "img_b", "img_c"):
        records[name] = ImageRecord(
            name,
            50,
            50,
            (GraspAnnotation(GraspPose(5, 5, 0, 4, 2), AnnotationSource.ORIGINAL),),
        )
    return DatasetVersion(0, records)


def test_genesis_checksum_is_hash_of_nothing():
    assert GENESIS == hashlib.sha256(b"").hexdigest()


def test_event_lines_are_canonical_json():
    ledger = Ledger()
    ev = ledger.append(EventKind.NO_OP, {"image_id": "x", "operator_id": "op"})
    line = ev.to_line()
    assert line == json.dumps(
        {"seq": 0, "kind": "no_op", "payload": ev.payload, "prev_checksum": GENESIS},
        sort_keys=True,
        separators=(",", ":"),
    ).encode()


def test_checksum_chain_links_previous_line():
    ledger = Ledger()
    first = ledger.append(EventKind.NO_OP, {"image_id": "a", "operator_id": "op"})
    second = ledger.append(EventKind.NO_OP, {"image_id": "b", "operator_id": "op"})
    assert first.prev_checksum == GENESIS
    assert second.prev_checksum == hashlib.sha256(first.to_line()).hexdigest()


def test_file_round_trip(tmp_path):
    path = tmp_path / "ledger.ndjson"
    ledger = Ledger(path)
    ledger.begin_iteration(1)
    ledger.append(EventKind.NO_OP, {"image_id": "a", "operator_id": "op"})
    again = read_events(path)
    assert again == ledger.events
    # reopening continues the chain seamlessly
    reopened = Ledger(path)
    reopened.append(EventKind.NO_OP, {"image_id": "b", "operator_id": "op"})
    final = read_events(path)
    assert len(final) == 3
    assert final[2].prev_checksum == hashlib.sha256(ledger.events[1].to_line()).hexdigest()


def test_read_events_missing_or_empty(tmp_path):
    path = tmp_path / "none.ndjson"
    assert read_events(path) == []
    path.write_bytes(b"")
    assert read_events(path) == []


def test_truncated_final_newline_detected(tmp_path):
    path = tmp_path / "ledger.ndjson"
    ledger = Ledger(path)
    for i in range(5):
        ledger.append(EventKind.NO_OP, {"image_id": f"img{i}", "operator_id": "op"})
    data = path.read_bytes()
    path.write_bytes(data[:-1])
    with pytest.raises(LedgerIntegrityError) as err:
        read_events(path)
    assert err.value.sequence == 4


def test_truncation_mid_line_detected(tmp_path):
    path = tmp_path / "ledger.ndjson"
    ledger = Ledger(path)
    for i in range(5):
        ledger.append(EventKind.NO_OP, {"image_id": f"img{i}", "operator_id": "op"})
    data = path.read_bytes()
    path.write_bytes(data[:-30])
    with pytest.raises(LedgerIntegrityError) as err:
        read_events(path)
    assert err.value.sequence == 4


def test_tampered_line_breaks_chain_at_successor(tmp_path):
    path = tmp_path / "ledger.ndjson"
    ledger = Ledger(path)
    for i in range(4):
        ledger.append(EventKind.NO_OP, {"image_id": f"img{i}", "operator_id": "op"})
    lines = path.read_bytes().splitlines(keepends=True)
    lines[1] = lines[1].replace(b"img1", b"imgX")
    path.write_bytes(b"".join(lines))
    with pytest.raises(LedgerIntegrityError) as err:
        read_events(path)
    assert err.value.sequence == 2


def test_decide_maps_verdicts_to_event_kinds():
    ledger = Ledger()
    tn = leased_item(image_id="img_a")
    ev = ledger.decide(tn, ReviewDecision("img_a", Verdict.TRUE_NEGATIVE, "op-1", 1))
    assert ev.kind is EventKind.NO_OP
    assert tn.status == "decided"

    fn = leased_item(image_id="img_b")
    candidate = (GraspPose(7, 7, 0.2, 5, 2), "pred-77")
    ev = ledger.decide(
        fn, ReviewDecision("img_b", Verdict.FN_MISSING_LABEL, "op-1", 1, candidate=candidate)
    )
    assert ev.kind is EventKind.ADD_GRASP
    assert ev.payload["annotation"]["source"] == "pseudo_label"
    assert ev.payload["annotation"]["origin_id"] == "pred-77"

    bad = leased_item(image_id="img_c")
    ev = ledger.decide(bad, ReviewDecision("img_c", Verdict.FN_ANNOTATION_ERROR, "op-1", 1))
    assert ev.kind is EventKind.REMOVE_IMAGE


def test_decide_rejects_wrong_states():
    ledger = Ledger()
    item = make_item()
    with pytest.raises(StateError):
        ledger.decide(item, ReviewDecision("img_a", Verdict.TRUE_NEGATIVE, "op-1", 1))
    leased = leased_item()
    with pytest.raises(StateError):
        ledger.decide(leased, ReviewDecision("img_a", Verdict.TRUE_NEGATIVE, "op-2", 1))
    ledger.decide(leased, ReviewDecision("img_a", Verdict.TRUE_NEGATIVE, "op-1", 1))
    with pytest.raises(StateError):
        ledger.decide(leased, ReviewDecision("img_a", Verdict.TRUE_NEGATIVE, "op-1", 1))
    assert len(ledger.events) == 1


def test_fn_missing_label_requires_candidate():
    with pytest.raises(ContractViolation):
        ReviewDecision("img_a", Verdict.FN_MISSING_LABEL, "op-1", 1)


def test_no_wall_clock_in_payloads():
    ledger = Ledger()
    item = leased_item()
    ledger.decide(item, ReviewDecision("img_a", Verdict.TRUE_NEGATIVE, "op-1", 1, decided_at=123.4))
    payload = ledger.events[0].payload
    assert "decided_at" not in payload
    assert "timestamp" not in payload


def test_replay_identity_without_events():
    base = base_version()
    out = replay(base, [], 0)
    assert out.version_id == 0
    assert version_manifest(out)["digest"] == version_manifest(base)["digest"]


def run_one_iteration(ledger, decisions):
    ledger.begin_iteration(1)
    for image_id, verdict, candidate in decisions:
        item = leased_item(image_id=image_id)
        ledger.decide(item, ReviewDecision(image_id, verdict, "op-1", 1, candidate=candidate))


def test_replay_applies_adds_and_removals():
    base = base_version()
    ledger = Ledger()
    candidate = (GraspPose(9, 9, 0.4, 6, 3), "pred-9")
    run_one_iteration(
        ledger,
        [
            ("img_a", Verdict.FN_MISSING_LABEL, candidate),
            ("img_b", Verdict.FN_ANNOTATION_ERROR, None),
            ("img_c", Verdict.TRUE_NEGATIVE, None),
        ],
    )
    out = replay(base, ledger.events, 1)
    assert out.version_id == 1
    assert out.parent == 0
    assert "img_b" not in out.records
    added = out.records["img_a"].annotations[-1]
    assert added.source is AnnotationSource.PSEUDO_LABEL
    assert added.origin_id == "pred-9"
    assert out.annotation_count() == base.annotation_count() + 1 - 1
    # source version untouched
    assert len(base.records["img_a"].annotations) == 1
    assert "img_b" in base.records


def test_replay_determinism_and_up_to():
    base = base_version()
    ledger = Ledger()
    candidate = (GraspPose(9, 9, 0.4, 6, 3), "pred-9")
    run_one_iteration(ledger, [("img_a", Verdict.FN_MISSING_LABEL, candidate)])
    ledger.begin_iteration(2)
    item = leased_item(image_id="img_c")
    ledger.decide(item, ReviewDecision("img_c", Verdict.FN_ANNOTATION_ERROR, "op-1", 2))

    once = replay(base, ledger.events, 2)
    twice = replay(base, ledger.events, 2)
    assert version_manifest(once)["digest"] == version_manifest(twice)["digest"]

    only_first = replay(base, ledger.events, 1)
    assert "img_c" in only_first.records
    assert only_first.version_id == 1


def test_replay_rejects_going_backwards():
    base = base_version()
    ledger = Ledger()
    run_one_iteration(ledger, [("img_c", Verdict.TRUE_NEGATIVE, None)])
    forward = replay(base, ledger.events, 1)
    with pytest.raises(ContractViolation):
        replay(forward, ledger.events, 0)


def test_replay_errors_on_unknown_image():
    base = base_version()
    ledger = Ledger()
    ledger.begin_iteration(1)
    item = leased_item(image_id="ghost")
    ledger.decide(item, ReviewDecision("ghost", Verdict.FN_ANNOTATION_ERROR, "op-1", 1))
    with pytest.raises(ReplayError):
        replay(base, ledger.events, 1)


def test_removed_image_never_reappears():
    base = base_version()
    ledger = Ledger()
    run_one_iteration(ledger, [("img_b", Verdict.FN_ANNOTATION_ERROR, None)])
    ledger.begin_iteration(2)
    item = leased_item(image_id="img_b")
    candidate = (GraspPose(9, 9, 0.4, 6, 3), "pred-9")
    ledger.decide(
        item, ReviewDecision("img_b", Verdict.FN_MISSING_LABEL, "op-1", 2, candidate=candidate)
    )
    with pytest.raises(ReplayError):
        replay(base, ledger.events, 2)
    # stopping before the bad iteration still works
    assert "img_b" not in replay(base, ledger.events, 1).records


def test_iteration_bookkeeping():
    ledger = Ledger()
    candidate = (GraspPose(9, 9, 0.4, 6, 3), "pred-9")
    run_one_iteration(
        ledger,
        [
            ("img_a", Verdict.FN_MISSING_LABEL, candidate),
            ("img_b", Verdict.TRUE_NEGATIVE, None),
            ("img_c", Verdict.TRUE_NEGATIVE, None),
        ],
    )
    assert ledger.iterations() == [1]
    summary = ledger.iteration_summary(1)
    assert (summary.labels_added, summary.images_removed, summary.tn_count) == (1, 0, 2)
    assert len(ledger.events_for_iteration(1)) == 3
    with pytest.raises(NotFoundError):
        ledger.iteration_summary(9)
