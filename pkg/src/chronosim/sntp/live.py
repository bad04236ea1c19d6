"""Live SNTP over UDP: a one-shot client poll and a stateless responder."""

from __future__ import annotations

import logging
import socket
import socketserver
import threading
import time

from chronosim.errors import BogusReplyError, NoResponseError, PacketDecodeError
from chronosim.exchange import ExchangeSample
from chronosim.sntp.packet import MODE_CLIENT, MODE_SERVER, SntpPacket, decode_packet, encode_packet
from chronosim.timebase import ClockSource, NtpTimestamp, SystemClock, ntp_decode, ntp_encode

log = logging.getLogger(__name__)

NTP_PORT = 123
_REFID_LOCL = int.from_bytes(b"LOCL", "big")
_PRECISION = (-20) & 0xFF  # about one microsecond


def live_poll(
    host: str,
    port: int = NTP_PORT,
    timeout: float = 2.0,
    clock: ClockSource | None = None,
) -> ExchangeSample:
    """Poll an SNTP/NTP server once and return the four timestamps.

    Raises :class:`NoResponseError` when nothing valid arrives within
    ``timeout`` seconds, and :class:`BogusReplyError` for a reply that does
    not echo our transmit timestamp or carries a zero transmit timestamp.
    """
    if timeout <= 0:
        raise ValueError("timeout must be positive")
    clock = clock or SystemClock()
    addr = socket.getaddrinfo(host, port, type=socket.SOCK_DGRAM)[0]
    with socket.socket(addr[0], socket.SOCK_DGRAM) as sock:
        sock.settimeout(timeout)
        t1 = clock.now()
        sent_ts = ntp_encode(t1)
        sock.sendto(encode_packet(SntpPacket(version=4, mode=MODE_CLIENT, transmit_ts=sent_ts)), addr[4])
        deadline = time.monotonic() + timeout
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise NoResponseError(f"no reply from {host}:{port} within {timeout}s")
            sock.settimeout(remaining)
            try:
                data, _ = sock.recvfrom(512)
            except socket.timeout:
                raise NoResponseError(f"no reply from {host}:{port} within {timeout}s") from None
            except ConnectionRefusedError:
                raise NoResponseError(f"{host}:{port} refused the request") from None
            t4 = clock.now()
            try:
                reply = decode_packet(data)
            except PacketDecodeError as exc:
                log.debug("discarding undecodable datagram: %s", exc)
                continue
            if reply.mode != MODE_SERVER:
                continue
            break
    if reply.originate_ts != sent_ts:
        raise BogusReplyError("reply does not echo our transmit timestamp")
    if reply.transmit_ts.is_zero():
        raise BogusReplyError("reply has a zero transmit timestamp")
    return ExchangeSample(t1=t1, t2=ntp_decode(reply.receive_ts), t3=ntp_decode(reply.transmit_ts), t4=t4)


def build_reply(request: SntpPacket, receive_ts: NtpTimestamp, transmit_ts: NtpTimestamp, stratum: int) -> SntpPacket:
    return SntpPacket(
        leap_indicator=0,
        version=request.version,
        mode=MODE_SERVER,
        stratum=stratum,
        poll=request.poll,
        precision=_PRECISION,
        reference_id=_REFID_LOCL,
        reference_ts=receive_ts,
        originate_ts=request.transmit_ts,
        receive_ts=receive_ts,
        transmit_ts=transmit_ts,
    )


class _Handler(socketserver.BaseRequestHandler):
    server: SntpServer

    def handle(self) -> None:
        data, sock = self.request
        received = ntp_encode(self.server.reference_clock.now())
        try:
            request = decode_packet(data)
        except PacketDecodeError:
            return
        if request.mode != MODE_CLIENT:
            return
        transmitted = ntp_encode(self.server.reference_clock.now())
        reply = build_reply(request, received, transmitted, self.server.stratum)
        sock.sendto(encode_packet(reply), self.client_address)


class SntpServer(socketserver.ThreadingUDPServer):
    """Stateless SNTP responder running on a background thread."""

    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, address: tuple[str, int], reference_clock: ClockSource, stratum: int = 1) -> None:
        self.reference_clock = reference_clock
        self.stratum = stratum
        super().__init__(address, _Handler)
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.server_address[:2]

    def start(self) -> SntpServer:
        self._thread = threading.Thread(target=self.serve_forever, name="sntp-server", daemon=True)
        self._thread.start()
        return self

    def close(self) -> None:
        self.shutdown()
        self.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self) -> SntpServer:
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def serve(
    bind: tuple[str, int] = ("0.0.0.0", NTP_PORT),
    reference_clock: ClockSource | None = None,
    stratum: int = 1,
) -> SntpServer:
    """Bind and start a responder; bind errors propagate immediately."""
    server = SntpServer(bind, reference_clock or SystemClock(), stratum)
    return server.start()
