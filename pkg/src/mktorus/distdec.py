"""Distributed decryption with secret-shared partial decryptions.

Four steps per session:

1. every participant ``P_i`` computes ``p_i = b + <a_i, s_i>`` for the batch;
2. it splits ``p_i`` additively and sends one share batch to each server;
3. server 0 (cloud) and server 1 (decryption party) each evaluate
   ``sum [p_i] - (k-1) b`` locally, server 0 carrying the public constant;
4. both servers return their result shares to every participant, who
   reconstructs and rounds.

The servers never talk to each other and no raw ``p_i`` is ever framed.
"""

from __future__ import annotations

import hashlib
import logging
import queue
import socket
import threading
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from . import wire
from .shares import SERVER0, SERVER1, ArithShare, linear_eval, reconstruct, share
from .tlwe import MKCiphertext, SecretKey, ciphertext_from_bytes, ciphertext_to_bytes, extend, part_dec
from .torus import decode_quarter_bit
from .wire import MsgType

log = logging.getLogger(__name__)

SERVER_NAMES = {SERVER0: "S0", SERVER1: "S1"}
DEFAULT_TIMEOUT = 30.0


def participant_name(i: int) -> str:
    return f"P{i}"


class ProtocolAbort(RuntimeError):
    """A role gave up on the session; ``cause`` says why."""

    def __init__(self, cause: str):
        super().__init__(cause)
        self.cause = cause


@dataclass(frozen=True)
class TranscriptEntry:
    sender: str
    receiver: str
    msg_type: MsgType
    payload_hash: str
    chain: str


class Transcript:
    """Append-only log of framed messages with a SHA-256 hash chain."""

    GENESIS = "0" * 64

    def __init__(self):
        self._entries: list[TranscriptEntry] = []
        self._lock = threading.Lock()

    def append(self, sender: str, receiver: str, raw: bytes) -> TranscriptEntry:
        frame = wire.decode_frame(raw)
        phash = hashlib.sha256(frame.payload).hexdigest()
        with self._lock:
            prev = self._entries[-1].chain if self._entries else self.GENESIS
            chain = _chain(prev, sender, receiver, frame.msg_type, phash)
            entry = TranscriptEntry(sender, receiver, frame.msg_type, phash, chain)
            self._entries.append(entry)
        return entry

    @property
    def entries(self) -> tuple[TranscriptEntry, ...]:
        return tuple(self._entries)

    def __len__(self):
        return len(self._entries)

    def verify(self) -> bool:
        prev = self.GENESIS
        for e in self._entries:
            if e.chain != _chain(prev, e.sender, e.receiver, e.msg_type, e.payload_hash):
                return False
            prev = e.chain
        return True

    def count(self, *types: MsgType) -> int:
        return sum(1 for e in self._entries if not types or e.msg_type in types)

    def payload_hashes(self) -> set[str]:
        return {e.payload_hash for e in self._entries}


def _chain(prev, sender, receiver, mtype, phash) -> str:
    h = hashlib.sha256()
    h.update(f"{prev}|{sender}|{receiver}|{int(mtype)}|{phash}".encode())
    return h.hexdigest()


class LocalNetwork:
    """In-process transport moving the same raw frames the socket path uses."""

    def __init__(self, transcript: Transcript | None = None, timeout: float = DEFAULT_TIMEOUT):
        self.transcript = transcript if transcript is not None else Transcript()
        self.timeout = timeout
        self._inboxes: dict[str, queue.Queue] = defaultdict(queue.Queue)
        self._lock = threading.Lock()

    def _inbox(self, role: str) -> queue.Queue:
        with self._lock:
            return self._inboxes[role]

    def send(self, sender: str, receiver: str, raw: bytes) -> None:
        self.transcript.append(sender, receiver, raw)
        self._inbox(receiver).put((sender, raw))

    def recv(self, role: str, timeout: float | None = None) -> tuple[str, wire.Frame]:
        try:
            sender, raw = self._inbox(role).get(timeout=self.timeout if timeout is None else timeout)
        except queue.Empty:
            raise ProtocolAbort(f"{role}: timed out waiting for a message") from None
        frame = wire.decode_frame(raw)
        if frame.msg_type == MsgType.ABORT:
            raise ProtocolAbort(f"{role}: peer {sender} aborted: {frame.payload.decode(errors='replace')}")
        return sender, frame


# -- roles ---------------------------------------------------------------------

def run_participant(net, ct_batch: MKCiphertext, sk: SecretKey, rng: np.random.Generator,
                    session: int = 0) -> None:
    """Steps 1-2: partially decrypt every bit and ship one share batch per server."""
    me = participant_name(sk.party_index)
    p = np.ravel(part_dec(ct_batch, sk).p)
    s0, s1 = share(p, rng)
    for s in (s0, s1):
        payload = wire.encode_share_batch(sk.party_index, s.holder, s.v)
        net.send(me, SERVER_NAMES[s.holder], wire.encode_frame(MsgType.SHAREBATCH, session, payload))


def run_server(net, holder: int, expected_parties: int, b_values, session: int = 0,
               recipients=None, timeout: float | None = None) -> ArithShare:
    """Step 3: aggregate the received share batches and return result shares."""
    me = SERVER_NAMES[holder]
    b = np.ravel(np.asarray(b_values, dtype=np.uint32))
    k = expected_parties
    got: dict[int, ArithShare] = {}
    while len(got) < k:
        sender, frame = net.recv(me, timeout)
        if frame.msg_type != MsgType.SHAREBATCH or frame.session != session:
            raise ProtocolAbort(f"{me}: unexpected {frame.msg_type.name} from {sender}")
        party, tag, words = wire.decode_share_batch(frame.payload)
        if tag != holder:
            raise ProtocolAbort(f"{me}: share batch for holder {tag} delivered to holder {holder}")
        if party in got:
            raise ProtocolAbort(f"{me}: duplicate share batch from party {party}")
        if words.size != b.size:
            raise ProtocolAbort(f"{me}: party {party} sent {words.size} words, expected {b.size}")
        got[party] = ArithShare(holder, words)
    if sorted(got) != list(range(1, k + 1)):
        raise ProtocolAbort(f"{me}: parties {sorted(got)} do not match 1..{k}")
    const = -(np.int64(k) - 1) * b.astype(np.int64)
    result = linear_eval([got[i] for i in sorted(got)], [1] * k, const=const)
    for i in recipients or range(1, k + 1):
        payload = wire.encode_share_batch(i, holder, result.v)
        net.send(me, participant_name(i), wire.encode_frame(MsgType.RESULTSHARE, session, payload))
    return result


def run_reconstruct(share0: ArithShare | None, share1: ArithShare | None, return_flag: bool = False):
    """Step 4: open the result and round to bits."""
    if share0 is None or share1 is None:
        raise ProtocolAbort("missing result share; no output without both servers")
    return decode_quarter_bit(reconstruct(share0, share1), return_flag=return_flag)


def receive_result(net, party: int, session: int = 0, timeout: float | None = None):
    me = participant_name(party)
    shares: dict[int, ArithShare] = {}
    while len(shares) < 2:
        sender, frame = net.recv(me, timeout)
        if frame.msg_type != MsgType.RESULTSHARE or frame.session != session:
            raise ProtocolAbort(f"{me}: unexpected {frame.msg_type.name} from {sender}")
        _, holder, words = wire.decode_share_batch(frame.payload)
        shares[holder] = ArithShare(holder, words)
    return shares[SERVER0], shares[SERVER1]


@dataclass
class DecryptionResult:
    bits: np.ndarray
    out_of_band: np.ndarray
    transcript: Transcript
    per_party: dict[int, np.ndarray] = field(default_factory=dict)


def distributed_decrypt(ct_batch: MKCiphertext, keys, seed: int = 0, session: int = 0,
                        threaded: bool = False, net: LocalNetwork | None = None) -> DecryptionResult:
    """Run the whole session in-process and return participant 1's view of the bits.

    Every participant reconstructs; all of them must agree.
    """
    keys = sorted(keys, key=lambda sk: sk.party_index)
    k = len(keys)
    ct = extend(ct_batch, k)
    shape = ct.batch_shape
    net = net or LocalNetwork()
    rngs = [np.random.Generator(np.random.PCG64(s)) for s in np.random.SeedSequence(seed).spawn(k)]
    b = np.ravel(ct.b)

    outputs: dict[int, tuple] = {}
    errors: list[BaseException] = []

    def participant_send(idx):
        run_participant(net, ct, keys[idx], rngs[idx], session)

    def server(holder):
        run_server(net, holder, k, b, session)

    def participant_recv(idx):
        party = keys[idx].party_index
        outputs[party] = run_reconstruct(*receive_result(net, party, session), return_flag=True)

    steps = ([lambda i=i: participant_send(i) for i in range(k)]
             + [lambda h=h: server(h) for h in (SERVER0, SERVER1)]
             + [lambda i=i: participant_recv(i) for i in range(k)])
    if threaded:
        def guard(fn):
            try:
                fn()
            except BaseException as exc:  # surfaced after join
                errors.append(exc)
        threads = [threading.Thread(target=guard, args=(fn,)) for fn in steps]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if errors:
            raise errors[0]
    else:
        for fn in steps:
            fn()

    bits, flags = outputs[keys[0].party_index]
    for party, (other, _) in outputs.items():
        if not np.array_equal(other, bits):
            raise ProtocolAbort(f"participant {party} reconstructed different bits")
    return DecryptionResult(
        bits=np.asarray(bits).reshape(shape),
        out_of_band=np.asarray(flags).reshape(shape),
        transcript=net.transcript,
        per_party={p: np.asarray(o[0]).reshape(shape) for p, o in outputs.items()},
    )


# -- TCP transport -------------------------------------------------------------

def parse_addr(addr: str) -> tuple[str, int]:
    host, _, port = addr.rpartition(":")
    return host or "127.0.0.1", int(port)


class _HubNetwork:
    """Server-side view of the socket transport: servers' inboxes are local
    queues, participants are reached through their connections."""

    def __init__(self, transcript: Transcript, timeout: float):
        self.transcript = transcript
        self.timeout = timeout
        self.conns: dict[str, socket.socket] = {}
        self.local = LocalNetwork(transcript, timeout)
        self._send_lock = threading.Lock()

    def send(self, sender, receiver, raw):
        conn = self.conns.get(receiver)
        if conn is None:
            self.local.send(sender, receiver, raw)
            return
        self.transcript.append(sender, receiver, raw)
        with self._send_lock:
            wire.write_frame(conn, raw)

    def recv(self, role, timeout=None):
        return self.local.recv(role, timeout)


def serve_hub(addr: str, k: int, setup_payload: bytes, session: int,
              timeout: float = DEFAULT_TIMEOUT, ready: threading.Event | None = None,
              bound: list | None = None) -> Transcript:
    """Host both aggregation servers behind one listening socket.

    Each participant connects, announces itself with a PUBKEY frame, receives
    the SETUP frame, and then streams its frames. Participant 1 also uploads
    the CTBATCH so both servers learn the public ``b`` values.
    """
    transcript = Transcript()
    hub = _HubNetwork(transcript, timeout)
    host, port = parse_addr(addr)
    ct_ready = threading.Event()
    ct_box: list[MKCiphertext] = []

    with socket.create_server((host, port)) as srv:
        srv.settimeout(timeout)
        if bound is not None:
            bound.append(srv.getsockname())
        if ready is not None:
            ready.set()
        readers = []
        for _ in range(k):
            try:
                conn, _ = srv.accept()
            except socket.timeout:
                raise ProtocolAbort("hub: timed out waiting for participants") from None
            conn.settimeout(timeout)
            hello = wire.read_frame(conn)
            frame = wire.decode_frame(hello)
            if frame.msg_type != MsgType.PUBKEY:
                raise ProtocolAbort(f"hub: expected PUBKEY, got {frame.msg_type.name}")
            party = int.from_bytes(frame.payload[:2], "little")
            name = participant_name(party)
            transcript.append(name, "hub", hello)
            hub.conns[name] = conn
            hub.send("CRS", name, wire.encode_frame(MsgType.SETUP, session, setup_payload))

            def reader(conn=conn, name=name):
                try:
                    while True:
                        raw = wire.read_frame(conn)
                        frame = wire.decode_frame(raw)
                        if frame.msg_type == MsgType.CTBATCH:
                            transcript.append(name, "S0", raw)
                            ct_box.append(ciphertext_from_bytes(frame.payload)[0])
                            ct_ready.set()
                        elif frame.msg_type == MsgType.SHAREBATCH:
                            _, holder, _ = wire.decode_share_batch(frame.payload)
                            hub.local.send(name, SERVER_NAMES[holder], raw)
                        elif frame.msg_type == MsgType.ABORT:
                            for s in SERVER_NAMES.values():
                                hub.local.send(name, s, raw)
                            return
                except (ConnectionError, OSError):
                    return
            t = threading.Thread(target=reader, daemon=True)
            t.start()
            readers.append(t)

        if not ct_ready.wait(timeout):
            raise ProtocolAbort("hub: no ciphertext batch received")
        b = np.ravel(ct_box[0].b)
        errors = []

        def server(holder):
            try:
                run_server(hub, holder, k, b, session)
            except BaseException as exc:
                errors.append(exc)

        servers = [threading.Thread(target=server, args=(h,)) for h in (SERVER0, SERVER1)]
        for t in servers:
            t.start()
        for t in servers:
            t.join()
        for conn in hub.conns.values():
            if errors:
                try:
                    wire.write_frame(conn, wire.encode_frame(MsgType.ABORT, session, str(errors[0]).encode()))
                except OSError:
                    pass
        for t in readers:
            t.join(timeout)
        for conn in hub.conns.values():
            conn.close()
        if errors:
            raise errors[0]
    return transcript


class _ClientNetwork:
    def __init__(self, conn: socket.socket, transcript: Transcript):
        self.conn = conn
        self.transcript = transcript

    def send(self, sender, receiver, raw):
        self.transcript.append(sender, receiver, raw)
        wire.write_frame(self.conn, raw)

    def recv(self, role, timeout=None):
        raw = wire.read_frame(self.conn)
        frame = wire.decode_frame(raw)
        if frame.msg_type == MsgType.ABORT:
            raise ProtocolAbort(f"{role}: hub aborted: {frame.payload.decode(errors='replace')}")
        return "hub", frame


def run_participant_client(addr: str, ct_batch: MKCiphertext, sk: SecretKey, seed: int,
                           session: int, upload_ct: bool = False,
                           timeout: float = DEFAULT_TIMEOUT):
    """One participant over TCP; returns ``(bits, flags, setup)``."""
    transcript = Transcript()
    with socket.create_connection(parse_addr(addr), timeout=timeout) as conn:
        net = _ClientNetwork(conn, transcript)
        me = participant_name(sk.party_index)
        net.send(me, "hub", wire.encode_frame(MsgType.PUBKEY, session, sk.party_index.to_bytes(2, "little")))
        _, frame = net.recv(me)
        if frame.msg_type != MsgType.SETUP:
            raise ProtocolAbort(f"{me}: expected SETUP, got {frame.msg_type.name}")
        setup = wire.decode_setup(frame.payload)
        if upload_ct:
            net.send(me, "S0", wire.encode_frame(MsgType.CTBATCH, session, ciphertext_to_bytes(ct_batch)))
        rng = np.random.Generator(np.random.PCG64(seed))
        run_participant(net, ct_batch, sk, rng, session)
        bits, flags = run_reconstruct(*receive_result(net, sk.party_index, session), return_flag=True)
    return np.asarray(bits), np.asarray(flags), setup
