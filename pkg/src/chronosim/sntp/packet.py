"""The 48-byte SNTP packet.

Layout (big-endian)::

    byte 0      LI (2 bits) | VN (3 bits) | mode (3 bits)
    bytes 1-3   stratum, poll, precision
    bytes 4-15  root delay, root dispersion, reference id (32 bits each)
    bytes 16-47 reference, originate, receive, transmit timestamps (64 bits each)

Every field is carried as raw unsigned bits so that decode/encode is an
exact identity.  Root delay and dispersion are sent as zero and ignored on
receipt.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from chronosim.errors import PacketDecodeError
from chronosim.timebase import NTP_ZERO, NtpTimestamp

PACKET_SIZE = 48
MODE_CLIENT = 3
MODE_SERVER = 4
VALID_MODES = (MODE_CLIENT, MODE_SERVER)

_HEADER = struct.Struct("!BBBBIII")
_PACKET = struct.Struct("!BBBBIII8I")
assert _PACKET.size == PACKET_SIZE


@dataclass(frozen=True)
class SntpPacket:
    leap_indicator: int = 0
    version: int = 4
    mode: int = MODE_CLIENT
    stratum: int = 0
    poll: int = 0
    precision: int = 0
    root_delay: int = 0
    root_dispersion: int = 0
    reference_id: int = 0
    reference_ts: NtpTimestamp = NTP_ZERO
    originate_ts: NtpTimestamp = NTP_ZERO
    receive_ts: NtpTimestamp = NTP_ZERO
    transmit_ts: NtpTimestamp = NTP_ZERO

    def __post_init__(self) -> None:
        if not 0 <= self.leap_indicator < 4:
            raise ValueError(f"leap indicator {self.leap_indicator} does not fit 2 bits")
        if not 0 <= self.version < 8:
            raise ValueError(f"version {self.version} does not fit 3 bits")
        if self.mode not in VALID_MODES:
            raise ValueError(f"mode {self.mode} is not client (3) or server (4)")
        for name in ("stratum", "poll", "precision"):
            if not 0 <= getattr(self, name) < 256:
                raise ValueError(f"{name} does not fit one byte")
        for name in ("root_delay", "root_dispersion", "reference_id"):
            if not 0 <= getattr(self, name) < 2**32:
                raise ValueError(f"{name} does not fit 32 bits")

    @property
    def first_byte(self) -> int:
        return (self.leap_indicator << 6) | (self.version << 3) | self.mode


def encode_packet(p: SntpPacket) -> bytes:
    ts = (p.reference_ts, p.originate_ts, p.receive_ts, p.transmit_ts)
    words = [w for t in ts for w in (t.seconds, t.fraction)]
    return _PACKET.pack(
        p.first_byte, p.stratum, p.poll, p.precision,
        p.root_delay, p.root_dispersion, p.reference_id, *words,
    )


def decode_packet(data: bytes) -> SntpPacket:
    if len(data) != PACKET_SIZE:
        raise PacketDecodeError(f"SNTP packet must be {PACKET_SIZE} bytes, got {len(data)}")
    first, stratum, poll, precision, root_delay, root_disp, ref_id, *words = _PACKET.unpack(data)
    mode = first & 0x7
    if mode not in VALID_MODES:
        raise PacketDecodeError(f"unsupported mode {mode}")
    ts = [NtpTimestamp(words[i], words[i + 1]) for i in range(0, 8, 2)]
    return SntpPacket(
        leap_indicator=first >> 6,
        version=(first >> 3) & 0x7,
        mode=mode,
        stratum=stratum,
        poll=poll,
        precision=precision,
        root_delay=root_delay,
        root_dispersion=root_disp,
        reference_id=ref_id,
        reference_ts=ts[0],
        originate_ts=ts[1],
        receive_ts=ts[2],
        transmit_ts=ts[3],
    )
