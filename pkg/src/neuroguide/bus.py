"""In-process topic bus with append-only bag recording and deterministic replay.

All messages travel as Envelopes: topic-tagged, per-topic sequence numbered,
timestamped on the session-normalized clock (integer nanoseconds from session
start). A Bag is the append-only recording of every envelope, written in a
self-describing binary format (see docs/bag_format.md) so a recorded session
can be replayed bit-exactly through the same consumers.
"""

from __future__ import annotations

import io
import json
import struct
import threading
from dataclasses import dataclass, field

__all__ = [
    "Envelope",
    "MessageBus",
    "BagWriter",
    "Bag",
    "replay",
    "bagdump_lines",
    "encode_payload",
    "decode_payload",
    "STANDARD_TOPICS",
    "BusError",
    "UndeclaredTopic",
    "TimestampRegression",
    "SinkFull",
    "BagError",
    "CorruptBag",
    "VersionMismatch",
]

BAG_MAGIC = b"NBAG"
INDEX_MAGIC = b"NIDX"
BAG_VERSION = 1

# Topics of the guidance loop. Names are stable wire identifiers; the schema
# tag names the payload record documented in docs/message_schemas.md.
STANDARD_TOPICS = {
    "clock": "clock_tick.v1",
    "raw_fnirs": "raw_frame.v1",
    "hemo": "hemo_sample.v1",
    "workload": "workload_vector.v1",
    "world_state": "world_state.v1",
    "engine_events": "engine_event.v1",
    "guidance": "guidance_decision.v1",
    "frontend_acks": "action_ack.v1",
}


class BusError(Exception):
    pass


class UndeclaredTopic(BusError):
    pass


class TimestampRegression(BusError):
    pass


class SinkFull(BusError):
    pass


class BagError(Exception):
    pass


class CorruptBag(BagError):
    pass


class VersionMismatch(BagError):
    pass


def encode_payload(obj) -> bytes:
    """Canonical JSON bytes: sorted keys, no whitespace. Deterministic for a
    given object graph, which is what makes bags byte-reproducible."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def decode_payload(raw: bytes):
    return json.loads(raw.decode("utf-8"))


@dataclass(frozen=True)
class Envelope:
    topic: str
    seq: int
    timestamp_ns: int
    payload: bytes
    schema_tag: str

    def decoded(self):
        return decode_payload(self.payload)


class _Subscription:
    def __init__(self, bus: "MessageBus", topic: str, callback):
        self._bus = bus
        self.topic = topic
        self.callback = callback
        self.active = True

    def unsubscribe(self) -> None:
        self.active = False


class MessageBus:
    """Synchronous pub/sub. Delivery happens inside publish(), in subscription
    order, so a full dispatch cascade is deterministic given the publish order.
    Publishing is serialized by a re-entrant lock: callbacks may publish."""

    def __init__(self, topics: dict[str, str] | None = None):
        self._lock = threading.RLock()
        self._schema: dict[str, str] = {}
        self._seq: dict[str, int] = {}
        self._last_ts: dict[str, int] = {}
        self._subs: dict[str, list[_Subscription]] = {}
        self._recorders: list = []
        for name, tag in (topics if topics is not None else STANDARD_TOPICS).items():
            self.declare(name, tag)

    def declare(self, topic: str, schema_tag: str) -> None:
        with self._lock:
            self._schema[topic] = schema_tag
            self._seq.setdefault(topic, 0)
            self._subs.setdefault(topic, [])

    @property
    def topics(self) -> dict[str, str]:
        return dict(self._schema)

    def subscribe(self, topic: str, callback) -> _Subscription:
        with self._lock:
            if topic not in self._schema:
                raise UndeclaredTopic(topic)
            sub = _Subscription(self, topic, callback)
            self._subs[topic].append(sub)
            return sub

    def attach_recorder(self, recorder) -> None:
        with self._lock:
            self._recorders.append(recorder)

    def detach_recorder(self, recorder) -> None:
        with self._lock:
            self._recorders.remove(recorder)

    def publish(self, topic: str, payload, timestamp_ns: int) -> int:
        """Deliver payload (bytes, or any JSON-serializable object) to current
        subscribers and any attached recorder. Returns the per-topic seq."""
        with self._lock:
            if topic not in self._schema:
                raise UndeclaredTopic(topic)
            last = self._last_ts.get(topic)
            if last is not None and timestamp_ns < last:
                raise TimestampRegression(
                    f"{topic}: {timestamp_ns} < previous {last}"
                )
            if not isinstance(payload, (bytes, bytearray)):
                payload = encode_payload(payload)
            env = Envelope(
                topic=topic,
                seq=self._seq[topic],
                timestamp_ns=timestamp_ns,
                payload=bytes(payload),
                schema_tag=self._schema[topic],
            )
            self._seq[topic] += 1
            self._last_ts[topic] = timestamp_ns
            for rec in self._recorders:
                rec.record(env)
            # Snapshot so a callback subscribing mid-dispatch does not receive
            # this envelope retroactively.
            for sub in list(self._subs[topic]):
                if sub.active:
                    sub.callback(env)
            return env.seq


# --- bag writing -----------------------------------------------------------


def _write_str(buf, s: str) -> None:
    raw = s.encode("utf-8")
    if len(raw) > 255:
        raise ValueError("string field exceeds 255 bytes")
    buf.write(struct.pack("<B", len(raw)))
    buf.write(raw)


def _read_str(buf) -> str:
    (n,) = struct.unpack("<B", _read_exact(buf, 1))
    return _read_exact(buf, n).decode("utf-8")


def _read_exact(buf, n: int) -> bytes:
    raw = buf.read(n)
    if len(raw) != n:
        raise CorruptBag("unexpected end of file")
    return raw


class BagWriter:
    """Append-only bag sink. Header and topic table are written immediately;
    the per-topic count index and trailer are written by close()."""

    def __init__(self, sink, session_id: str, clock_epoch_ns: int,
                 topics: dict[str, str]):
        self._own = isinstance(sink, str)
        self._fh = open(sink, "wb") if self._own else sink
        self.session_id = session_id
        self.clock_epoch_ns = clock_epoch_ns
        self._topic_ids = {name: i for i, name in enumerate(sorted(topics))}
        self._counts = {name: 0 for name in self._topic_ids}
        self._last_ts: int | None = None
        self._closed = False
        try:
            self._fh.write(BAG_MAGIC)
            self._fh.write(struct.pack("<H", BAG_VERSION))
            _write_str(self._fh, session_id)
            self._fh.write(struct.pack("<q", clock_epoch_ns))
            self._fh.write(struct.pack("<H", len(self._topic_ids)))
            for name in sorted(topics):
                self._fh.write(struct.pack("<H", self._topic_ids[name]))
                _write_str(self._fh, name)
                _write_str(self._fh, topics[name])
        except OSError as exc:  # pragma: no cover - disk faults
            raise SinkFull(str(exc)) from exc

    def record(self, env: Envelope) -> None:
        if self._closed:
            raise BagError("bag already closed")
        if self._last_ts is not None and env.timestamp_ns < self._last_ts:
            raise TimestampRegression(
                f"bag requires global timestamp order: {env.timestamp_ns} < {self._last_ts}"
            )
        self._last_ts = env.timestamp_ns
        body = struct.pack(
            "<HQq", self._topic_ids[env.topic], env.seq, env.timestamp_ns
        ) + env.payload
        try:
            self._fh.write(struct.pack("<I", len(body)))
            self._fh.write(body)
        except OSError as exc:  # pragma: no cover - disk faults
            raise SinkFull(str(exc)) from exc
        self._counts[env.topic] += 1

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        index_offset = self._fh.tell()
        self._fh.write(struct.pack("<H", len(self._counts)))
        for name in sorted(self._topic_ids):
            self._fh.write(
                struct.pack("<HQ", self._topic_ids[name], self._counts[name])
            )
        self._fh.write(struct.pack("<Q", index_offset))
        self._fh.write(INDEX_MAGIC)
        self._fh.flush()
        if self._own:
            self._fh.close()


@dataclass
class Bag:
    """Parsed bag: header fields plus envelopes in recorded (timestamp) order."""

    session_id: str
    clock_epoch_ns: int
    version: int
    topics: dict[str, str]
    envelopes: list[Envelope] = field(default_factory=list)

    @property
    def topic_counts(self) -> dict[str, int]:
        counts = {name: 0 for name in self.topics}
        for env in self.envelopes:
            counts[env.topic] += 1
        return counts

    def by_topic(self, topic: str) -> list[Envelope]:
        return [e for e in self.envelopes if e.topic == topic]

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Bag":
        return cls._parse(io.BytesIO(raw), len(raw))

    @classmethod
    def open(cls, path: str) -> "Bag":
        with open(path, "rb") as fh:
            raw = fh.read()
        return cls.from_bytes(raw)

    @classmethod
    def _parse(cls, buf, total_len: int) -> "Bag":
        if total_len < len(BAG_MAGIC) + 2 + len(INDEX_MAGIC) + 8:
            raise CorruptBag("file too short")
        if _read_exact(buf, 4) != BAG_MAGIC:
            raise CorruptBag("bad magic")
        (version,) = struct.unpack("<H", _read_exact(buf, 2))
        if version != BAG_VERSION:
            raise VersionMismatch(f"bag version {version}, reader supports {BAG_VERSION}")
        session_id = _read_str(buf)
        (epoch,) = struct.unpack("<q", _read_exact(buf, 8))
        (n_topics,) = struct.unpack("<H", _read_exact(buf, 2))
        id_to_name: dict[int, str] = {}
        topics: dict[str, str] = {}
        for _ in range(n_topics):
            (tid,) = struct.unpack("<H", _read_exact(buf, 2))
            name = _read_str(buf)
            tag = _read_str(buf)
            id_to_name[tid] = name
            topics[name] = tag

        # Trailer: last 12 bytes = u64 index offset + magic.
        buf.seek(total_len - 12)
        (index_offset,) = struct.unpack("<Q", _read_exact(buf, 8))
        if _read_exact(buf, 4) != INDEX_MAGIC:
            raise CorruptBag("missing index trailer (truncated bag?)")
        if index_offset >= total_len - 12:
            raise CorruptBag("index offset out of range")

        buf.seek(index_offset)
        (n_index,) = struct.unpack("<H", _read_exact(buf, 2))
        declared_counts: dict[str, int] = {}
        for _ in range(n_index):
            tid, count = struct.unpack("<HQ", _read_exact(buf, 10))
            if tid not in id_to_name:
                raise CorruptBag(f"index references unknown topic id {tid}")
            declared_counts[id_to_name[tid]] = count

        # Body: records between header end and index offset.
        header_end = 4 + 2 + 1 + len(session_id.encode()) + 8 + 2
        for tid, name in id_to_name.items():
            header_end += 2 + 1 + len(name.encode()) + 1 + len(topics[name].encode())
        buf.seek(header_end)
        envelopes: list[Envelope] = []
        pos = header_end
        last_ts: int | None = None
        while pos < index_offset:
            (body_len,) = struct.unpack("<I", _read_exact(buf, 4))
            if pos + 4 + body_len > index_offset:
                raise CorruptBag("record overruns index")
            tid, seq, ts = struct.unpack("<HQq", _read_exact(buf, 18))
            payload = _read_exact(buf, body_len - 18)
            if tid not in id_to_name:
                raise CorruptBag(f"record references unknown topic id {tid}")
            if last_ts is not None and ts < last_ts:
                raise CorruptBag("timestamps regress within bag")
            last_ts = ts
            name = id_to_name[tid]
            envelopes.append(Envelope(name, seq, ts, payload, topics[name]))
            pos += 4 + body_len

        bag = cls(session_id, epoch, version, topics, envelopes)
        if bag.topic_counts != declared_counts:
            raise CorruptBag(
                f"index counts {declared_counts} disagree with body {bag.topic_counts}"
            )
        return bag


def replay(bag: Bag, bus: MessageBus, topics: set[str] | None = None,
           speed: float | None = None) -> int:
    """Re-publish bag envelopes in recorded order. `topics=None` republishes
    everything; passing the input topics only (clock, raw_fnirs, world_state,
    frontend_acks) lets attached live consumers re-derive the rest. speed=None
    replays as fast as possible; a multiplier sleeps scaled wall time between
    envelopes (the logical clock is unaffected either way).
    """
    import time as _time

    n = 0
    prev_ts: int | None = None
    for env in bag.envelopes:
        if topics is not None and env.topic not in topics:
            continue
        if speed is not None and prev_ts is not None:
            _time.sleep(max(0, (env.timestamp_ns - prev_ts)) / 1e9 / speed)
        prev_ts = env.timestamp_ns
        bus.publish(env.topic, env.payload, env.timestamp_ns)
        n += 1
    return n


def bagdump_lines(bag: Bag):
    """Human-readable one-line-per-envelope dump used by the `bagdump` CLI."""
    yield (
        f"# bag session={bag.session_id} version={bag.version} "
        f"epoch_ns={bag.clock_epoch_ns} records={len(bag.envelopes)}"
    )
    for name in sorted(bag.topics):
        yield f"# topic {name} schema={bag.topics[name]} count={bag.topic_counts[name]}"
    for env in bag.envelopes:
        try:
            body = env.payload.decode("utf-8")
        except UnicodeDecodeError:
            body = "0x" + env.payload.hex()
        yield f"{env.timestamp_ns} {env.topic} seq={env.seq} {body}"
