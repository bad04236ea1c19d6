from chronosim.sntp.client import DEFAULT_POLL_INTERVAL, SntpClient, SntpClientState, sntp_poll_step
from chronosim.sntp.live import SntpServer, live_poll, serve
from chronosim.sntp.packet import PACKET_SIZE, SntpPacket, decode_packet, encode_packet

__all__ = [
    "DEFAULT_POLL_INTERVAL",
    "PACKET_SIZE",
    "SntpClient",
    "SntpClientState",
    "SntpPacket",
    "SntpServer",
    "decode_packet",
    "encode_packet",
    "live_poll",
    "serve",
    "sntp_poll_step",
]
