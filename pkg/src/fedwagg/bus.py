"""Simulated authenticated message bus with exact byte accounting.

Every protocol message is serialized to bytes, appended to an append-only
transcript, and delivered through a per-edge FIFO after an HMAC envelope
check (the stand-in for an authenticated channel).  Reported communication
costs are sums of transcript payload lengths, never estimates.
"""

import hashlib
import hmac
import struct
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum

SERVER_ID = 0


class StepTag(IntEnum):
    SETUP = 0
    INIT = 1
    COMPE = 2
    POKE = 3
    POKM = 4
    WAGG = 5


STEP_LABELS = {
    StepTag.SETUP: "Setup",
    StepTag.INIT: "Init",
    StepTag.COMPE: "CompE",
    StepTag.POKE: "PoKE",
    StepTag.POKM: "PoKM",
    StepTag.WAGG: "WAgg",
}

# Step labels of the per-round report columns (setup is once-only).
ROUND_STEPS = (StepTag.INIT, StepTag.COMPE, StepTag.POKE, StepTag.POKM, StepTag.WAGG)


class MsgType(IntEnum):
    ENC_DATASET = 1
    ENC_MASK = 2
    ENC_MODEL = 3
    ENC_Z = 4
    ENC_Z2_SIGMA = 5
    ENC_H = 6
    H_PLUS_R = 7
    ENC_E = 8
    E_PUBLISH = 9
    POPK_CPRIME = 10
    COMMIT_A = 11
    CHALLENGE_E = 12
    RESPONSE_Z = 13
    PAIR_SEED = 14
    MASK_SHARE = 15
    MASKED_MODEL = 16
    SEED_SHARE_REVEAL = 17
    SIGNED_VIEW = 18
    ALIVE_VIEW = 19
    VIEW_BUNDLE = 20
    GLOBAL_MODEL = 21


class BusAuthError(RuntimeError):
    """Envelope authentication failed."""


@dataclass(frozen=True)
class TranscriptRecord:
    step: StepTag
    sender: int
    receiver: int
    msg_type: MsgType
    payload: bytes

    def to_bytes(self) -> bytes:
        """Wire layout: step(1) sender(4) receiver(4) type(1) length(4) payload."""
        return struct.pack(">BIIBI", self.step, self.sender, self.receiver,
                           self.msg_type, len(self.payload)) + self.payload

    @classmethod
    def from_bytes(cls, buf: bytes, off: int = 0) -> tuple["TranscriptRecord", int]:
        step, sender, receiver, msg_type, length = struct.unpack_from(">BIIBI", buf, off)
        off += 14
        payload = buf[off : off + length]
        return cls(step=StepTag(step), sender=sender, receiver=receiver,
                   msg_type=MsgType(msg_type), payload=payload), off + length


@dataclass
class Transcript:
    records: list[TranscriptRecord] = field(default_factory=list)

    def append(self, record: TranscriptRecord) -> None:
        self.records.append(record)

    def __len__(self) -> int:
        return len(self.records)

    def total_bytes(self) -> int:
        return sum(len(r.payload) for r in self.records)

    def bytes_per_step(self) -> dict[StepTag, int]:
        out: dict[StepTag, int] = {}
        for r in self.records:
            out[r.step] = out.get(r.step, 0) + len(r.payload)
        return out

    def bytes_for(self, step: StepTag | None = None, party: int | None = None,
                  sent_only: bool = False) -> int:
        """Payload bytes filtered by step and/or endpoint."""
        total = 0
        for r in self.records:
            if step is not None and r.step != step:
                continue
            if party is not None:
                if sent_only:
                    if r.sender != party:
                        continue
                elif party not in (r.sender, r.receiver):
                    continue
            total += len(r.payload)
        return total

    def to_bytes(self) -> bytes:
        return b"".join(r.to_bytes() for r in self.records)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Transcript":
        records = []
        off = 0
        while off < len(buf):
            record, off = TranscriptRecord.from_bytes(buf, off)
            records.append(record)
        return cls(records=records)


class MessageBus:
    """In-process bus: per-edge FIFO ordering plus an HMAC-checked envelope."""

    def __init__(self, transcript: Transcript | None = None,
                 root_key: bytes = b"fedwagg-bus"):
        self.transcript = transcript if transcript is not None else Transcript()
        self._root_key = root_key
        self._queues: dict[tuple[int, int], deque] = {}

    def _edge_key(self, sender: int, receiver: int) -> bytes:
        return hashlib.sha256(
            self._root_key + struct.pack(">II", sender, receiver)
        ).digest()

    def _mac(self, sender: int, receiver: int, step: StepTag,
             msg_type: MsgType, payload: bytes) -> bytes:
        header = struct.pack(">BIIB", step, sender, receiver, msg_type)
        return hmac.new(self._edge_key(sender, receiver), header + payload,
                        hashlib.sha256).digest()

    def send(self, sender: int, receiver: int, step: StepTag,
             msg_type: MsgType, payload: bytes) -> bytes:
        """Authenticate, record and deliver one message; returns the payload."""
        mac = self._mac(sender, receiver, step, msg_type, payload)
        return self.inject(sender, receiver, step, msg_type, payload, mac)

    def inject(self, sender: int, receiver: int, step: StepTag,
               msg_type: MsgType, payload: bytes, mac: bytes) -> bytes:
        """Delivery path with an explicit MAC (lets tests model tampering)."""
        expected = self._mac(sender, receiver, step, msg_type, payload)
        if not hmac.compare_digest(mac, expected):
            raise BusAuthError(f"bad envelope MAC on edge {sender}->{receiver}")
        record = TranscriptRecord(step=step, sender=sender, receiver=receiver,
                                  msg_type=msg_type, payload=payload)
        self.transcript.append(record)
        edge = (sender, receiver)
        queue = self._queues.setdefault(edge, deque())
        queue.append(payload)
        return queue.popleft()
