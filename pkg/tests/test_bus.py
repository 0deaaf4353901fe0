"""Message bus and bag format: pub/sub semantics, recording round trips,
replay, and corruption handling."""

import io

import numpy as np
import pytest

from neuroguide.bus import (
    Bag,
    BagWriter,
    CorruptBag,
    Envelope,
    MessageBus,
    STANDARD_TOPICS,
    TimestampRegression,
    UndeclaredTopic,
    VersionMismatch,
    bagdump_lines,
    encode_payload,
    replay,
)


def fresh_bus():
    return MessageBus(STANDARD_TOPICS)


class TestPubSub:
    def test_no_retroactive_delivery(self):
        bus = fresh_bus()
        bus.publish("clock", {"tick": 0}, 0)
        got = []
        bus.subscribe("clock", got.append)
        bus.publish("clock", {"tick": 1}, 100)
        assert len(got) == 1
        assert got[0].decoded() == {"tick": 1}

    def test_seq_increments_per_topic(self):
        bus = fresh_bus()
        assert bus.publish("clock", {}, 0) == 0
        assert bus.publish("clock", {}, 1) == 1
        assert bus.publish("hemo", {}, 2) == 0

    def test_undeclared_topic_rejected(self):
        bus = fresh_bus()
        with pytest.raises(UndeclaredTopic):
            bus.publish("mystery", {}, 0)
        with pytest.raises(UndeclaredTopic):
            bus.subscribe("mystery", lambda env: None)

    def test_timestamp_regression_rejected(self):
        bus = fresh_bus()
        bus.publish("clock", {}, 100)
        with pytest.raises(TimestampRegression):
            bus.publish("clock", {}, 99)
        bus.publish("clock", {}, 100)  # equal timestamps allowed

    def test_600_envelopes_strictly_ordered(self):
        bus = fresh_bus()
        got = []
        bus.subscribe("raw_fnirs", got.append)
        for i in range(600):
            bus.publish("raw_fnirs", {"i": i}, i * 100_000_000)
        assert len(got) == 600
        assert [e.seq for e in got] == list(range(600))
        assert all(a.timestamp_ns < b.timestamp_ns for a, b in zip(got, got[1:]))

    def test_unsubscribe(self):
        bus = fresh_bus()
        got = []
        sub = bus.subscribe("clock", got.append)
        bus.publish("clock", {}, 0)
        sub.unsubscribe()
        bus.publish("clock", {}, 1)
        assert len(got) == 1

    def test_nested_publish_from_callback(self):
        bus = fresh_bus()
        derived = []
        bus.subscribe("hemo", derived.append)
        bus.subscribe("raw_fnirs",
                      lambda env: bus.publish("hemo", {"from": env.seq},
                                              env.timestamp_ns))
        bus.publish("raw_fnirs", {}, 5)
        assert len(derived) == 1 and derived[0].decoded() == {"from": 0}


def record_session(publishes):
    bus = fresh_bus()
    sink = io.BytesIO()
    writer = BagWriter(sink, "test|seed=0|cal=0", 0, STANDARD_TOPICS)
    bus.attach_recorder(writer)
    for topic, payload, ts in publishes:
        bus.publish(topic, payload, ts)
    writer.close()
    return sink.getvalue()


class TestBag:
    def test_empty_session_valid_bag(self):
        raw = record_session([])
        bag = Bag.from_bytes(raw)
        assert bag.envelopes == []
        assert bag.session_id == "test|seed=0|cal=0"
        assert set(bag.topics) == set(STANDARD_TOPICS)

    def test_round_trip_bit_exact(self):
        pubs = [
            ("clock", {"tick": 0, "phase": "task"}, 0),
            ("raw_fnirs", {"v": [1.5, 2.5]}, 0),
            ("world_state", {"parameters": {"a": "ON"}}, 100_000_000),
            ("engine_events", {"event": "step_completed"}, 100_000_000),
        ]
        bag = Bag.from_bytes(record_session(pubs))
        assert len(bag.envelopes) == 4
        for env, (topic, payload, ts) in zip(bag.envelopes, pubs):
            assert env.topic == topic
            assert env.timestamp_ns == ts
            assert env.payload == encode_payload(payload)

    def test_interleaved_order_preserved(self):
        rng = np.random.default_rng(0)
        topics = sorted(STANDARD_TOPICS)
        pubs = []
        for i in range(200):
            pubs.append((topics[int(rng.integers(len(topics)))], {"i": i},
                         i * 1_000_000))
        bag = Bag.from_bytes(record_session(pubs))
        assert [(e.topic, e.decoded()["i"]) for e in bag.envelopes] == [
            (t, p["i"]) for t, p, _ in pubs
        ]

    def test_index_counts_match_body(self):
        pubs = [("clock", {}, i) for i in range(7)] + [("hemo", {}, 7)]
        bag = Bag.from_bytes(record_session(pubs))
        assert bag.topic_counts["clock"] == 7
        assert bag.topic_counts["hemo"] == 1

    def test_truncated_bag_rejected(self):
        raw = record_session([("clock", {"tick": 1}, 0)])
        with pytest.raises(CorruptBag):
            Bag.from_bytes(raw[: len(raw) - 7])

    def test_corrupt_interior_rejected(self):
        raw = bytearray(record_session([("clock", {"tick": 1}, 0)]))
        # truncate a record by lying about the trailer offset
        with pytest.raises(CorruptBag):
            Bag.from_bytes(bytes(raw[:20]) + raw[-12:])

    def test_version_mismatch(self):
        raw = bytearray(record_session([]))
        raw[4:6] = (99).to_bytes(2, "little")
        with pytest.raises(VersionMismatch):
            Bag.from_bytes(bytes(raw))

    def test_global_timestamp_order_enforced_on_write(self):
        bus = fresh_bus()
        writer = BagWriter(io.BytesIO(), "x", 0, STANDARD_TOPICS)
        bus.attach_recorder(writer)
        bus.publish("clock", {}, 100)
        with pytest.raises(TimestampRegression):
            bus.publish("hemo", {}, 50)  # would regress the global order


class TestReplay:
    def test_replay_all_topics(self):
        pubs = [("clock", {"tick": i}, i * 10) for i in range(5)]
        bag = Bag.from_bytes(record_session(pubs))
        bus = fresh_bus()
        got = []
        bus.subscribe("clock", got.append)
        n = replay(bag, bus)
        assert n == 5
        assert [e.decoded()["tick"] for e in got] == [0, 1, 2, 3, 4]

    def test_replay_topic_filter(self):
        pubs = [("clock", {}, 0), ("hemo", {}, 1), ("clock", {}, 2)]
        bag = Bag.from_bytes(record_session(pubs))
        bus = fresh_bus()
        got = []
        bus.subscribe("clock", got.append)
        bus.subscribe("hemo", got.append)
        replay(bag, bus, topics={"clock"})
        assert [e.topic for e in got] == ["clock", "clock"]

    def test_replay_speed_independent_of_content(self):
        pubs = [("clock", {"tick": i}, i * 1_000_000) for i in range(10)]
        bag = Bag.from_bytes(record_session(pubs))
        logs = []
        for speed in (None, 1000.0):
            bus = fresh_bus()
            got = []
            bus.subscribe("clock", got.append)
            replay(bag, bus, speed=speed)
            logs.append([(e.seq, e.timestamp_ns, e.payload) for e in got])
        assert logs[0] == logs[1]


class TestBagDump:
    def test_lines(self):
        pubs = [("clock", {"tick": 3, "phase": "task"}, 42)]
        bag = Bag.from_bytes(record_session(pubs))
        lines = list(bagdump_lines(bag))
        assert any(line.startswith("# bag session=test") for line in lines)
        assert any("42 clock seq=0" in line for line in lines)
