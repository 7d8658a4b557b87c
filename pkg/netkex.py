__all__ = [
    "Frame",
    "FrameType",
    "FrameError",
    "HandshakeError",
    "SessionTranscript",
    "LoopbackStream",
    "SocketStream",
    "TamperingRelay",
    "encode_frame",
    "decode_frame",
    "read_frame",
    "run_initiator",
    "run_responder",
    "make_server",
    "serve",
    "connect",
]

# Standard Library
import logging
import queue
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass, field
from enum import IntEnum

# Dependencies
import numpy as np

# Internal
from settings import SemikexError
from semiring import SemiringTable
from matrix_semiring import MatrixSR
from circulant import CommutingVector
from paramgen import PublicParams, ParamsError, encode_params, decode_params, params_digest
from kex import KexSession, PublicKeyMsg, KeyFormatError, canonical_encode, decode_vector


log = logging.getLogger(__name__)

PROTOCOL_VERSION = 0x01
HEADER = struct.Struct(">I")
DEFAULT_MAX_FRAME = 16 * 1024 * 1024
DEFAULT_TIMEOUT = 30.0


class FrameError(SemikexError):
    pass


class HandshakeError(SemikexError):
    pass


class FrameType(IntEnum):
    HELLO = 0x01
    PARAMS = 0x02
    PARAMS_ACK = 0x03
    PUBKEY = 0x04
    CONFIRM = 0x05
    ERROR = 0x7F


@dataclass(frozen=True)
class Frame:
    type: FrameType
    payload: bytes = b""


def encode_frame(f: Frame, max_frame: int = DEFAULT_MAX_FRAME) -> bytes:
    length = 1 + len(f.payload)
    if length > max_frame or length > 0xFFFFFFFF:
        raise FrameError(f"Frame of {length} bytes exceeds the limit of {max_frame}")
    return HEADER.pack(length) + bytes([f.type]) + f.payload


def _check_length(length: int, max_frame: int) -> None:
    if length == 0:
        raise FrameError("Frame length 0 leaves no room for the type byte")
    if length > max_frame:
        raise FrameError(f"Frame length {length} exceeds the limit of {max_frame}")


def _frame_type(code: int) -> FrameType:
    try:
        return FrameType(code)
    except ValueError:
        raise FrameError(f"unknown frame type 0x{code:02X}") from None


def decode_frame(data: bytes, offset: int = 0, max_frame: int = DEFAULT_MAX_FRAME) -> tuple[Frame, int]:
    """One frame from data[offset:]. Returns it and the offset of whatever follows."""
    if len(data) - offset < HEADER.size:
        raise FrameError("truncated frame: incomplete length header")
    (length,) = HEADER.unpack_from(data, offset)
    _check_length(length, max_frame)
    start = offset + HEADER.size
    if len(data) - start < length:
        raise FrameError(f"truncated frame: declared {length} bytes, {len(data) - start} available")
    return Frame(_frame_type(data[start]), bytes(data[start + 1:start + length])), start + length


def read_frame(stream, max_frame: int = DEFAULT_MAX_FRAME) -> Frame:
    (length,) = HEADER.unpack(stream.recv_exact(HEADER.size))
    _check_length(length, max_frame)
    body = stream.recv_exact(length)
    return Frame(_frame_type(body[0]), body[1:])


class LoopbackStream:
    """One end of an in-memory byte pipe. Build connected ends with pair()."""

    def __init__(self, inbox: queue.Queue, outbox: queue.Queue, timeout: float | None = DEFAULT_TIMEOUT):
        self.inbox = inbox
        self.outbox = outbox
        self.timeout = timeout
        self._buffer = bytearray()
        self._closed = False

    @classmethod
    def pair(cls, timeout: float | None = DEFAULT_TIMEOUT) -> tuple["LoopbackStream", "LoopbackStream"]:
        a, b = queue.Queue(), queue.Queue()
        return cls(a, b, timeout), cls(b, a, timeout)

    def send(self, data: bytes) -> None:
        if self._closed:
            raise FrameError("send on a closed stream")
        self.outbox.put(bytes(data))

    def recv_exact(self, n: int) -> bytes:
        while len(self._buffer) < n:
            try:
                chunk = self.inbox.get(timeout=self.timeout)
            except queue.Empty:
                raise HandshakeError(f"timeout: no data within {self.timeout}s") from None
            if chunk is None:
                raise FrameError("truncated frame: peer closed the stream")
            self._buffer.extend(chunk)
        out = bytes(self._buffer[:n])
        del self._buffer[:n]
        return out

    def close(self) -> None:
        if not self._closed:
            self._closed = True
            self.outbox.put(None)


class SocketStream:
    def __init__(self, sock: socket.socket, timeout: float | None = DEFAULT_TIMEOUT):
        self.sock = sock
        self.sock.settimeout(timeout)

    def send(self, data: bytes) -> None:
        try:
            self.sock.sendall(data)
        except OSError as e:
            raise HandshakeError(f"connection lost: {e}") from e

    def recv_exact(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            try:
                chunk = self.sock.recv(n - len(buf))
            except socket.timeout:
                raise HandshakeError(f"timeout: no data within {self.sock.gettimeout()}s") from None
            except OSError as e:
                raise HandshakeError(f"connection lost: {e}") from e
            if not chunk:
                raise FrameError("truncated frame: peer closed the connection")
            buf += chunk
        return buf

    def close(self) -> None:
        self.sock.close()


@dataclass
class SessionTranscript:
    role: str
    frames: list[tuple[str, Frame]] = field(default_factory=list)
    state: str = "running"
    reason: str | None = None
    fingerprint: bytes | None = None
    peer_fingerprint: bytes | None = None

    @property
    def completed(self) -> bool:
        return self.state == "completed"

    def fail(self, reason: str) -> "SessionTranscript":
        self.state = "failed"
        self.reason = reason
        log.warning("%s session failed: %s", self.role, reason)
        return self


class _Channel:
    """Frame-level view of a stream that logs every frame to the transcript."""

    def __init__(self, stream, transcript: SessionTranscript, max_frame: int):
        self.stream = stream
        self.transcript = transcript
        self.max_frame = max_frame

    def send(self, ftype: FrameType, payload: bytes = b"") -> None:
        frame = Frame(ftype, payload)
        self.stream.send(encode_frame(frame, self.max_frame))
        self.transcript.frames.append(("sent", frame))
        log.debug("%s -> %s (%d bytes)", self.transcript.role, ftype.name, len(payload))

    def recv(self, *expected: FrameType) -> Frame:
        frame = read_frame(self.stream, self.max_frame)
        self.transcript.frames.append(("received", frame))
        log.debug("%s <- %s (%d bytes)", self.transcript.role, frame.type.name, len(frame.payload))
        if frame.type is FrameType.ERROR:
            raise _PeerError(frame.payload.decode("utf-8", errors="replace"))
        if frame.type not in expected:
            raise _Abort("unexpected-frame", f"expected {'/'.join(t.name for t in expected)}, got {frame.type.name}")
        return frame


class _Abort(Exception):
    """Local failure that is reported to the peer with an ERROR frame."""

    def __init__(self, reason: str, detail: str = ""):
        super().__init__(detail or reason)
        self.reason = reason
        self.detail = detail


class _PeerError(Exception):
    pass


def _hello_payload(digest: bytes) -> bytes:
    return bytes([PROTOCOL_VERSION]) + digest


def _parse_hello(payload: bytes) -> bytes:
    if len(payload) != 33:
        raise _Abort("bad-hello", f"HELLO payload of {len(payload)} bytes, expected 33")
    if payload[0] != PROTOCOL_VERSION:
        raise _Abort("version-mismatch", f"peer speaks version {payload[0]}, this side {PROTOCOL_VERSION}")
    return payload[1:]


def _exchange_keys(channel: _Channel, params: PublicParams, rng: np.random.Generator, transcript: SessionTranscript) -> None:
    session = KexSession(params, rng)
    pk = session.start()
    channel.send(FrameType.PUBKEY, canonical_encode(pk.vec))

    frame = channel.recv(FrameType.PUBKEY)
    try:
        peer_vec, end = decode_vector(frame.payload, params.table)
        if end != len(frame.payload):
            raise KeyFormatError("trailing bytes after public key")
        shared = session.receive(PublicKeyMsg(peer_vec))
    except KeyFormatError as e:
        raise _Abort("bad-pubkey", str(e)) from e

    transcript.fingerprint = shared.fingerprint
    channel.send(FrameType.CONFIRM, shared.fingerprint)
    frame = channel.recv(FrameType.CONFIRM)
    transcript.peer_fingerprint = frame.payload
    if not session.confirm(frame.payload):
        raise _Abort("confirm-mismatch")


def _run(role: str, stream, max_frame: int, body) -> SessionTranscript:
    transcript = SessionTranscript(role)
    channel = _Channel(stream, transcript, max_frame)
    try:
        body(channel, transcript)
    except _Abort as e:
        # confirm-mismatch is visible to both sides already
        if e.reason != "confirm-mismatch":
            try:
                channel.send(FrameType.ERROR, f"{e.reason}: {e.detail}".encode())
            except SemikexError:
                pass
        return transcript.fail(e.reason)
    except _PeerError as e:
        return transcript.fail(f"peer-error: {e}")
    except HandshakeError as e:
        return transcript.fail(str(e))
    except FrameError as e:
        return transcript.fail(f"frame-error: {e}")
    except SemikexError as e:
        try:
            channel.send(FrameType.ERROR, f"internal-error: {e}".encode())
        except SemikexError:
            pass
        return transcript.fail(f"internal-error: {e}")
    transcript.state = "completed"
    log.info("%s session completed, fingerprint %s", role, transcript.fingerprint.hex()[:16])
    return transcript


def run_initiator(
    stream,
    params: PublicParams,
    rng: np.random.Generator,
    max_frame: int = DEFAULT_MAX_FRAME,
) -> SessionTranscript:
    digest = params_digest(params)

    def body(channel: _Channel, transcript: SessionTranscript) -> None:
        channel.send(FrameType.HELLO, _hello_payload(digest))
        frame = channel.recv(FrameType.HELLO, FrameType.PARAMS)
        if frame.type is FrameType.HELLO:
            if _parse_hello(frame.payload) != digest:
                raise _Abort("params-hash-mismatch", "responder holds different parameters")
        else:
            channel.send(FrameType.PARAMS, encode_params(params))
            channel.recv(FrameType.PARAMS_ACK)
        _exchange_keys(channel, params, rng, transcript)

    return _run("initiator", stream, max_frame, body)


def run_responder(
    stream,
    rng: np.random.Generator,
    params: PublicParams | None = None,
    table: SemiringTable | None = None,
    max_frame: int = DEFAULT_MAX_FRAME,
) -> SessionTranscript:
    """
    Answers a HELLO. With matching preshared params the responder echoes HELLO,
    otherwise it requests them with an empty PARAMS frame and decodes the
    transfer over table (or the table of the params it was given).
    """
    if table is None and params is not None:
        table = params.table

    def body(channel: _Channel, transcript: SessionTranscript) -> None:
        frame = channel.recv(FrameType.HELLO)
        digest = _parse_hello(frame.payload)
        session_params = params
        if session_params is not None and params_digest(session_params) == digest:
            channel.send(FrameType.HELLO, _hello_payload(digest))
        else:
            if table is None:
                raise _Abort("no-table", "responder has no semiring table to decode parameters")
            channel.send(FrameType.PARAMS)
            frame = channel.recv(FrameType.PARAMS)
            try:
                session_params = decode_params(frame.payload, table)
            except ParamsError as e:
                raise _Abort("bad-params", str(e)) from e
            if params_digest(session_params) != digest:
                raise _Abort("params-hash-mismatch", "transferred parameters do not match the HELLO digest")
            channel.send(FrameType.PARAMS_ACK)
        _exchange_keys(channel, session_params, rng, transcript)

    return _run("responder", stream, max_frame, body)


class TamperingRelay:
    """
    Forwards frames between two streams, replacing the first PUBKEY that
    travels from the initiator side with random matrices of the same shape.
    """

    def __init__(self, initiator_side, responder_side, table: SemiringTable, rng: np.random.Generator,
                 max_frame: int = DEFAULT_MAX_FRAME):
        self.initiator_side = initiator_side
        self.responder_side = responder_side
        self.table = table
        self.rng = rng
        self.max_frame = max_frame
        self.tampered = False
        self._threads: list[threading.Thread] = []

    def _forge(self, payload: bytes) -> bytes:
        real, _ = decode_vector(payload, self.table)
        fake = CommutingVector(
            MatrixSR(self.table, self.rng.integers(0, self.table.size, size=(real.dim, real.dim)))
            for _ in range(real.n)
        )
        return canonical_encode(fake)

    def _pump(self, src, dst, tamper: bool) -> None:
        try:
            while True:
                frame = read_frame(src, self.max_frame)
                if tamper and not self.tampered and frame.type is FrameType.PUBKEY:
                    frame = Frame(frame.type, self._forge(frame.payload))
                    self.tampered = True
                dst.send(encode_frame(frame, self.max_frame))
        except SemikexError:
            dst.close()

    def start(self) -> "TamperingRelay":
        self._threads = [
            threading.Thread(target=self._pump, args=(self.initiator_side, self.responder_side, True), daemon=True),
            threading.Thread(target=self._pump, args=(self.responder_side, self.initiator_side, False), daemon=True),
        ]
        for t in self._threads:
            t.start()
        return self


class _Server(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


def make_server(
    host: str,
    port: int,
    params: PublicParams,
    seed: int | None = None,
    timeout: float = DEFAULT_TIMEOUT,
    max_frame: int = DEFAULT_MAX_FRAME,
) -> _Server:
    """A threading TCP server running one responder session per connection."""
    counter = iter(range(1 << 62))
    lock = threading.Lock()
    transcripts: list[SessionTranscript] = []

    class Handler(socketserver.BaseRequestHandler):
        def handle(self):
            with lock:
                index = next(counter)
            # Each connection draws from its own stream
            rng = np.random.default_rng(None if seed is None else [seed, index])
            stream = SocketStream(self.request, timeout)
            transcript = run_responder(stream, rng, params=params, max_frame=max_frame)
            with lock:
                transcripts.append(transcript)
            log.info("Connection %d from %s: %s", index, self.client_address[0], transcript.state)

    server = _Server((host, port), Handler)
    server.transcripts = transcripts
    return server


def serve(host: str, port: int, params: PublicParams, seed: int | None = None, **kwargs) -> None:
    with make_server(host, port, params, seed, **kwargs) as server:
        log.info("Serving key exchange on %s:%d", *server.server_address[:2])
        server.serve_forever()


def connect(
    host: str,
    port: int,
    params: PublicParams,
    seed: int | None = None,
    timeout: float = DEFAULT_TIMEOUT,
    max_frame: int = DEFAULT_MAX_FRAME,
) -> SessionTranscript:
    rng = np.random.default_rng(seed)
    try:
        sock = socket.create_connection((host, port), timeout=timeout)
    except OSError as e:
        raise HandshakeError(f"connect failed: {host}:{port}: {e}") from e
    stream = SocketStream(sock, timeout)
    try:
        return run_initiator(stream, params, rng, max_frame=max_frame)
    finally:
        stream.close()
