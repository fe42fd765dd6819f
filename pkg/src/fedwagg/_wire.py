"""Byte-level packing helpers shared by the wire formats.

Integers travel as length-prefixed big-endian magnitudes (4-byte length).
Signed integers carry one extra sign byte.  All message payload sizes are
derived from these encodings, so byte accounting is exact.
"""

import struct


def pack_uint(x: int) -> bytes:
    if x < 0:
        raise ValueError("pack_uint takes non-negative integers")
    mag = x.to_bytes((x.bit_length() + 7) // 8, "big") if x else b""
    return struct.pack(">I", len(mag)) + mag


def unpack_uint(buf: bytes, off: int = 0) -> tuple[int, int]:
    (length,) = struct.unpack_from(">I", buf, off)
    off += 4
    return int.from_bytes(buf[off : off + length], "big"), off + length


def pack_int(x: int) -> bytes:
    return (b"\x01" if x < 0 else b"\x00") + pack_uint(abs(x))


def unpack_int(buf: bytes, off: int = 0) -> tuple[int, int]:
    sign = buf[off]
    mag, off = unpack_uint(buf, off + 1)
    return (-mag if sign else mag), off


def pack_uint_list(xs) -> bytes:
    out = [struct.pack(">I", len(xs))]
    out.extend(pack_uint(x) for x in xs)
    return b"".join(out)


def unpack_uint_list(buf: bytes, off: int = 0) -> tuple[list[int], int]:
    (count,) = struct.unpack_from(">I", buf, off)
    off += 4
    xs = []
    for _ in range(count):
        x, off = unpack_uint(buf, off)
        xs.append(x)
    return xs, off


def pack_int_list(xs) -> bytes:
    out = [struct.pack(">I", len(xs))]
    out.extend(pack_int(x) for x in xs)
    return b"".join(out)


def unpack_int_list(buf: bytes, off: int = 0) -> tuple[list[int], int]:
    (count,) = struct.unpack_from(">I", buf, off)
    off += 4
    xs = []
    for _ in range(count):
        x, off = unpack_int(buf, off)
        xs.append(x)
    return xs, off


def pack_i16(x: int) -> bytes:
    return struct.pack(">h", x)


def unpack_i16(buf: bytes, off: int = 0) -> tuple[int, int]:
    (x,) = struct.unpack_from(">h", buf, off)
    return x, off + 2
