"""Byte-exact frame codec for the distributed decryption session.

Frame layout (little endian)::

    magic  b"MKDD"   4 bytes
    version u8       always 1
    msg_type u8      MsgType
    session u64
    length u32       payload length
    payload          length bytes

SHAREBATCH and RESULTSHARE payloads are
``party u16 | holder u8 | count u32 | count x u32``.
"""

from __future__ import annotations

import enum
import socket
import struct
from dataclasses import dataclass

import numpy as np

MAGIC = b"MKDD"
VERSION = 1
HEADER = struct.Struct("<4sBBQI")
SHARE_HEADER = struct.Struct("<HBI")
SETUP_BODY = struct.Struct("<IHdQI")
MAX_PAYLOAD = 1 << 30


class MsgType(enum.IntEnum):
    SETUP = 0
    PUBKEY = 1
    CTBATCH = 2
    SHAREBATCH = 3
    RESULTSHARE = 4
    ABORT = 5


class FrameError(ValueError):
    pass


@dataclass(frozen=True)
class Frame:
    msg_type: MsgType
    session: int
    payload: bytes

    def encode(self) -> bytes:
        return encode_frame(self.msg_type, self.session, self.payload)


def encode_frame(msg_type, session: int, payload: bytes) -> bytes:
    return HEADER.pack(MAGIC, VERSION, int(msg_type), session, len(payload)) + payload


def decode_header(buf: bytes) -> tuple[MsgType, int, int]:
    magic, version, mtype, session, length = HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FrameError(f"unsupported version {version}")
    try:
        mtype = MsgType(mtype)
    except ValueError:
        raise FrameError(f"unknown message type {mtype}") from None
    if length > MAX_PAYLOAD:
        raise FrameError(f"payload too large: {length}")
    return mtype, session, length


def decode_frame(buf: bytes) -> Frame:
    mtype, session, length = decode_header(buf)
    payload = bytes(buf[HEADER.size:])
    if len(payload) != length:
        raise FrameError(f"payload length {len(payload)} != declared {length}")
    return Frame(mtype, session, payload)


def encode_share_batch(party: int, holder: int, words) -> bytes:
    words = np.ascontiguousarray(np.ravel(words), dtype="<u4")
    return SHARE_HEADER.pack(party, holder, words.size) + words.tobytes()


def decode_share_batch(payload: bytes) -> tuple[int, int, np.ndarray]:
    party, holder, count = SHARE_HEADER.unpack_from(payload)
    expected = SHARE_HEADER.size + 4 * count
    if len(payload) != expected:
        raise FrameError(f"share batch of {count} words needs {expected} bytes, got {len(payload)}")
    words = np.frombuffer(payload, dtype="<u4", offset=SHARE_HEADER.size).astype(np.uint32)
    return party, holder, words


def encode_setup(n: int, k: int, alpha: float, seed: int, bits: int) -> bytes:
    return SETUP_BODY.pack(n, k, alpha, seed, bits)


def decode_setup(payload: bytes) -> dict:
    n, k, alpha, seed, bits = SETUP_BODY.unpack(payload)
    return {"n": n, "k": k, "alpha": alpha, "seed": seed, "bits": bits}


# -- stream helpers ----------------------------------------------------------

def _recv_exact(sock: socket.socket, size: int) -> bytes:
    chunks = []
    while size:
        chunk = sock.recv(min(size, 1 << 20))
        if not chunk:
            raise ConnectionError("peer closed the connection mid-frame")
        chunks.append(chunk)
        size -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> bytes:
    """Read one complete raw frame from a stream socket."""
    head = _recv_exact(sock, HEADER.size)
    _, _, length = decode_header(head)
    return head + _recv_exact(sock, length)


def write_frame(sock: socket.socket, raw: bytes) -> None:
    sock.sendall(raw)
